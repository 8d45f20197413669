#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "packfuse/align.hpp"
#include "packfuse/baselines.hpp"
#include "packfuse/harness.hpp"
#include "packfuse/ngram.hpp"
#include "packfuse/remote.hpp"
#include "packfuse/synthetic.hpp"

namespace {

using namespace packfuse;

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(std::stoul(item));
  }
  return out;
}

int cmd_eval(const std::string& config_path, const std::string& corpus_override,
             const std::string& output_override) {
  auto cfg = load_run_config(config_path);
  if (!corpus_override.empty()) cfg.corpus = corpus_override;
  if (!output_override.empty()) cfg.output = output_override;
  if (cfg.corpus.empty()) throw error(errc::config, "no corpus given");
  const auto records = run_eval(cfg, read_corpus(cfg.corpus));

  std::string lines;
  for (const auto& r : records) lines += record_to_json(r, cfg.timing) + "\n";
  if (cfg.output.empty()) {
    std::cout << lines;
  } else {
    write_file(cfg.output, lines);
  }
  const auto summary = summary_csv(records);
  const std::string summary_path =
      !cfg.summary.empty() ? cfg.summary : (cfg.output.empty() ? "" : cfg.output + ".csv");
  if (summary_path.empty()) {
    std::cerr << summary;
  } else {
    write_file(summary_path, summary);
  }
  std::size_t failed = 0;
  for (const auto& r : records) failed += r.error.empty() ? 0 : 1;
  return failed == records.size() ? 1 : 0;
}

int cmd_weights(const std::string& config_path, const std::string& prompt_path) {
  const auto cfg = load_run_config(config_path);
  auto models = load_models(cfg);
  std::optional<ClusterSet> clusters;
  if (!cfg.clusters.empty()) clusters = clusters_from_json(read_file(cfg.clusters));
  Evaluator evaluator(cfg, std::move(models.seeds), std::move(models.aux), std::move(clusters));
  std::string prompt = read_file(prompt_path);
  while (!prompt.empty() && (prompt.back() == '\n' || prompt.back() == '\r')) prompt.pop_back();
  const auto rec = evaluator.prompt_weights(prompt);

  nlohmann::ordered_json out;
  out["models"] = rec.models;
  out["prompt_ppl"] = rec.prompt_ppl;
  out["prompt_tokens"] = rec.prompt_tokens;
  out["reference_vocab"] = rec.reference_vocab;
  out["uniform_fallback"] = rec.uniform_fallback;
  for (const auto& r : rec.results) {
    nlohmann::ordered_json w;
    for (std::size_t k = 0; k < r.weights.size(); ++k) w[r.weights.names[k]] = r.weights.lambdas[k];
    out["weights"][std::string(to_string(r.method))] = w;
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_align(const std::string& ref_path, const std::string& other_path, const std::string& out) {
  const auto ref = load_vocab(ref_path);
  const auto other = load_vocab(other_path);
  const auto json = vocab_map_to_json(build_vocab_map(*ref, *other));
  if (out.empty()) {
    std::cout << json << "\n";
  } else {
    write_file(out, json);
  }
  return 0;
}

int cmd_bench(const std::string& ks, double step, std::size_t repeats, const std::string& out) {
  BenchOptions options;
  options.step = step;
  options.repeats = repeats;
  const auto csv = bench_to_csv(bench_complexity(parse_list(ks), options));
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_file(out, csv);
  }
  return 0;
}

ScoreServer* g_server = nullptr;

int cmd_serve(const std::string& model_path, const std::string& host, int port) {
  auto model = std::make_shared<NgramModel>(load_ngram(model_path));
  ScoreServer server(model);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  server.run(host, port);
  g_server = nullptr;
  return 0;
}

int cmd_train(const std::string& corpus, const std::string& vocab_path, const std::string& name,
              int order, double k, const std::string& out) {
  const auto vocab = vocab_path.empty() ? byte_vocabulary() : load_vocab(vocab_path);
  const auto tokenizer = make_tokenizer(vocab);
  std::vector<std::vector<TokenId>> docs;
  for (const auto& line : read_corpus(corpus)) docs.push_back(tokenizer->encode(line).ids);
  save_ngram(train_ngram(name, vocab, docs, order, k), out);
  return 0;
}

int cmd_synth(std::size_t domains, std::size_t train_docs, std::size_t test_docs,
              std::size_t doc_bytes, std::uint64_t seed, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto doms = synthetic::make_domains(domains, seed);
  std::vector<std::pair<std::string, std::vector<std::string>>> corpora;
  nlohmann::json models = nlohmann::json::array();
  for (std::size_t d = 0; d < doms.size(); ++d) {
    std::mt19937_64 rng(seed * 7919 + d);
    std::vector<std::string> train;
    std::string train_text;
    std::string test_text;
    for (std::size_t i = 0; i < train_docs; ++i) {
      train.push_back(synthetic::document(doms[d], rng, doc_bytes));
      train_text += train.back() + "\n";
    }
    for (std::size_t i = 0; i < test_docs; ++i) test_text += synthetic::document(doms[d], rng, doc_bytes) + "\n";
    const std::string name = "expert_" + std::to_string(d);
    write_file((fs::path(dir) / (name + ".train.txt")).string(), train_text);
    write_file((fs::path(dir) / (doms[d].name + ".test.txt")).string(), test_text);
    std::vector<std::vector<TokenId>> ids;
    ByteTokenizer tok;
    for (const auto& t : train) ids.push_back(tok.encode(t).ids);
    const auto model_path = (fs::path(dir) / (name + ".ngram")).string();
    save_ngram(train_ngram(name, byte_vocabulary(), ids, 3, 0.1), model_path);
    models.push_back({{"name", name}, {"path", model_path}});
    corpora.emplace_back(name, std::move(train));
  }
  write_file((fs::path(dir) / "clusters.json").string(), clusters_to_json(build_clusters(corpora)));
  nlohmann::ordered_json cfg;
  cfg["method"] = {"packllm-sim", "packllm-opt", "top1", "ensemble", "cbtm"};
  cfg["models"] = models;
  cfg["clusters"] = (fs::path(dir) / "clusters.json").string();
  cfg["corpus"] = (fs::path(dir) / (doms.front().name + ".test.txt")).string();
  cfg["output"] = (fs::path(dir) / "records.jsonl").string();
  write_file((fs::path(dir) / "config.json").string(), cfg.dump(2) + "\n");
  std::cout << "wrote " << domains << " experts, clusters and config.json to " << dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"packfuse: perplexity-weighted test-time fusion of language models"};
  app.require_subcommand(1);

  std::string config, corpus, output, prompt, ref, other, ks = "2,3,5", model, host = "127.0.0.1";
  std::string vocab, name = "ngram", dir = "synthetic";
  double step = 0.05, k = 1.0;
  int port = 8080, order = 3;
  std::size_t repeats = 5, domains = 2, train_docs = 200, test_docs = 200, doc_bytes = 400;
  std::uint64_t seed = 1;

  auto* eval = app.add_subcommand("eval", "Evaluate fusion methods on a corpus");
  eval->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  eval->add_option("--corpus", corpus, "Corpus, one document per line (overrides config)");
  eval->add_option("--output", output, "NDJSON records (overrides config; default stdout)");

  auto* weights = app.add_subcommand("weights", "Print fusion weights for one prompt");
  weights->add_option("--prompt", prompt, "Prompt text file")->required()->check(CLI::ExistingFile);
  weights->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);

  auto* align = app.add_subcommand("align", "Build a minimum-edit-distance vocabulary map");
  align->add_option("--ref", ref, "Reference vocabulary (JSON)")->required()->check(CLI::ExistingFile);
  align->add_option("--other", other, "Other vocabulary (JSON)")->required()->check(CLI::ExistingFile);
  align->add_option("--output", output, "Write the map here instead of stdout");

  auto* bench = app.add_subcommand("bench", "Greedy vs exhaustive grid search cost");
  bench->add_option("--k", ks, "Comma-separated model counts");
  bench->add_option("--step", step, "Grid step");
  bench->add_option("--repeats", repeats, "Timing repetitions (minimum is reported)");
  bench->add_option("--output", output, "CSV output path (default stdout)");

  auto* serve = app.add_subcommand("serve-toy", "Serve an n-gram model over the logit protocol");
  serve->add_option("--model", model, "n-gram model file")->required()->check(CLI::ExistingFile);
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--host", host, "Bind address");

  auto* train = app.add_subcommand("train", "Train an add-k n-gram model");
  train->add_option("--corpus", corpus, "Training corpus, one document per line")->required()->check(CLI::ExistingFile);
  train->add_option("--vocab", vocab, "Vocabulary JSON (default: byte-level)");
  train->add_option("--name", name, "Model name");
  train->add_option("--order", order, "n-gram order");
  train->add_option("--k", k, "Add-k smoothing constant");
  train->add_option("--output", output, "Model file")->required();

  auto* synth = app.add_subcommand("synth", "Write a synthetic multi-domain benchmark");
  synth->add_option("--domains", domains, "Number of domains / experts");
  synth->add_option("--train-docs", train_docs, "Training documents per domain");
  synth->add_option("--test-docs", test_docs, "Held-out documents per domain");
  synth->add_option("--doc-bytes", doc_bytes, "Minimum document length in bytes");
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--dir", dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*eval) return cmd_eval(config, corpus, output);
    if (*weights) return cmd_weights(config, prompt);
    if (*align) return cmd_align(ref, other, output);
    if (*bench) return cmd_bench(ks, step, repeats, output);
    if (*serve) return cmd_serve(model, host, port);
    if (*train) return cmd_train(corpus, vocab, name, order, k, output);
    if (*synth) return cmd_synth(domains, train_docs, test_docs, doc_bytes, seed, dir);
  } catch (const std::exception& e) {
    std::cerr << "packfuse: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
