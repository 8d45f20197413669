#include "packfuse/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "packfuse/ngram.hpp"
#include "packfuse/remote.hpp"

namespace packfuse {

PromptSplit split_prompt(const TokenSequence& doc) {
  if (doc.size() < 3) {
    throw error(errc::doc_too_short, "document of " + std::to_string(doc.size()) +
                                         " tokens; need at least 3");
  }
  const std::size_t len = std::min(kMaxPromptTokens, doc.size() / 5);
  PromptSplit s;
  s.prompt = {{doc.ids.begin(), doc.ids.begin() + static_cast<std::ptrdiff_t>(len)}, doc.vocab_id};
  s.eval = {{doc.ids.begin() + static_cast<std::ptrdiff_t>(len), doc.ids.end()}, doc.vocab_id};
  return s;
}

PromptSplit split_prompt_fraction(const TokenSequence& doc, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw error(errc::invalid_argument, "prompt fraction must lie in (0, 1)");
  }
  if (doc.size() < 2) throw error(errc::doc_too_short, "document needs at least 2 tokens");
  auto len = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(doc.size()) + 1e-9));
  len = std::min(len, doc.size() - 1);
  PromptSplit s;
  s.prompt = {{doc.ids.begin(), doc.ids.begin() + static_cast<std::ptrdiff_t>(len)}, doc.vocab_id};
  s.eval = {{doc.ids.begin() + static_cast<std::ptrdiff_t>(len), doc.ids.end()}, doc.vocab_id};
  return s;
}

namespace {

constexpr std::pair<Method, std::string_view> kMethodNames[] = {
    {Method::packllm_sim, "packllm-sim"}, {Method::packllm_opt, "packllm-opt"},
    {Method::top1, "top1"},               {Method::ensemble, "ensemble"},
    {Method::cbtm, "cbtm"},               {Method::dexperts, "dexperts"},
    {Method::exhaustive, "exhaustive"},
};

}  // namespace

std::string_view to_string(Method method) {
  for (const auto& [m, name] : kMethodNames) {
    if (m == method) return name;
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (const auto& [m, n] : kMethodNames) {
    if (n == name) return m;
  }
  throw error(errc::config, "unknown method '" + std::string(name) + "'");
}

void RunConfig::validate() const {
  if (methods.empty()) throw error(errc::config, "no methods configured");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw error(errc::invalid_tau, "tau must be positive");
  grid_intervals(grid);
  if (models.empty()) throw error(errc::config, "at least one model is required");
  std::set<std::string> names;
  auto check_spec = [&](const ModelSpec& m) {
    if (m.name.empty()) throw error(errc::config, "model without a name");
    if (m.path.empty() == m.url.empty()) {
      throw error(errc::config, "model '" + m.name + "' needs exactly one of path or url");
    }
    if (!names.insert(m.name).second) throw error(errc::config, "duplicate model '" + m.name + "'");
  };
  for (const auto& m : models) check_spec(m);
  for (const auto& m : aux_models) check_spec(m);
  const bool wants = [&](Method m) {
    return std::find(methods.begin(), methods.end(), m) != methods.end();
  }(Method::dexperts);
  if (wants) {
    if (!dexperts) throw error(errc::config, "method dexperts needs a dexperts section");
    for (const auto* role : {&dexperts->base, &dexperts->anti}) {
      auto it = std::find_if(aux_models.begin(), aux_models.end(),
                             [&](const ModelSpec& m) { return m.name == *role; });
      if (it == aux_models.end()) {
        throw error(errc::config, "dexperts role '" + *role + "' is not an aux model");
      }
    }
  }
  if (std::find(methods.begin(), methods.end(), Method::cbtm) != methods.end() && clusters.empty()) {
    throw error(errc::config, "method cbtm needs a clusters file");
  }
  if (prompt_fraction != 0.0 && !(prompt_fraction > 0.0 && prompt_fraction < 1.0)) {
    throw error(errc::config, "prompt_fraction must be 0 (default rule) or in (0, 1)");
  }
  if (workers == 0) throw error(errc::config, "workers must be >= 1");
}

namespace {

void reject_unknown(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                    const std::string& where) {
  if (!obj.is_object()) throw error(errc::config, where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw error(errc::config, "unknown key '" + key + "' in " + where);
    }
  }
}

std::vector<ModelSpec> parse_models(const nlohmann::json& arr, const std::string& where) {
  if (!arr.is_array()) throw error(errc::config, where + " must be an array");
  std::vector<ModelSpec> out;
  for (const auto& m : arr) {
    reject_unknown(m, {"name", "path", "url"}, where + " entry");
    out.push_back({m.at("name").get<std::string>(), m.value("path", std::string()),
                   m.value("url", std::string())});
  }
  return out;
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text) {
  RunConfig cfg;
  try {
    auto j = nlohmann::json::parse(json_text);
    reject_unknown(j,
                   {"method", "tau", "step", "early_stop", "max_exhaustive_models", "models",
                    "aux_models", "reference_vocab", "seed", "corpus", "output", "summary",
                    "clusters", "dexperts", "workers", "max_docs", "prompt_fraction", "timing"},
                   "run config");
    if (j.contains("method")) {
      cfg.methods.clear();
      const auto& m = j["method"];
      if (m.is_string()) {
        cfg.methods.push_back(parse_method(m.get<std::string>()));
      } else {
        for (const auto& s : m) cfg.methods.push_back(parse_method(s.get<std::string>()));
      }
    }
    cfg.tau = j.value("tau", cfg.tau);
    cfg.grid.step = j.value("step", cfg.grid.step);
    cfg.grid.early_stop = j.value("early_stop", cfg.grid.early_stop);
    cfg.grid.max_exhaustive_models = j.value("max_exhaustive_models", cfg.grid.max_exhaustive_models);
    if (j.contains("models")) cfg.models = parse_models(j["models"], "models");
    if (j.contains("aux_models")) cfg.aux_models = parse_models(j["aux_models"], "aux_models");
    cfg.reference_vocab = j.value("reference_vocab", cfg.reference_vocab);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.corpus = j.value("corpus", cfg.corpus);
    cfg.output = j.value("output", cfg.output);
    cfg.summary = j.value("summary", cfg.summary);
    cfg.clusters = j.value("clusters", cfg.clusters);
    if (j.contains("dexperts")) {
      const auto& d = j["dexperts"];
      reject_unknown(d, {"base", "anti", "lambda"}, "dexperts");
      cfg.dexperts = DExpertsConfig{d.at("base").get<std::string>(), d.at("anti").get<std::string>(),
                                    d.value("lambda", 1.0)};
    }
    cfg.workers = j.value("workers", cfg.workers);
    cfg.max_docs = j.value("max_docs", cfg.max_docs);
    cfg.prompt_fraction = j.value("prompt_fraction", cfg.prompt_fraction);
    cfg.timing = j.value("timing", cfg.timing);
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::config, std::string("bad run config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_file(path)); }

const MethodResult* EvalRecord::result(Method method) const {
  for (const auto& r : results) {
    if (r.method == method) return &r;
  }
  return nullptr;
}

std::string record_to_json(const EvalRecord& record, bool timing) {
  nlohmann::ordered_json j;
  j["doc_id"] = record.doc_id;
  j["models"] = record.models;
  auto nullable = [](const std::vector<double>& v) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (double x : v) {
      if (std::isfinite(x)) {
        a.push_back(x);
      } else {
        a.push_back(nullptr);
      }
    }
    return a;
  };
  j["prompt_ppl"] = nullable(record.prompt_ppl);
  j["eval_ppl"] = nullable(record.eval_ppl);
  j["reference_vocab"] = record.reference_vocab;
  j["prompt_tokens"] = record.prompt_tokens;
  j["eval_tokens"] = record.eval_tokens;
  j["uniform_fallback"] = record.uniform_fallback;
  nlohmann::ordered_json results = nlohmann::ordered_json::array();
  for (const auto& r : record.results) {
    nlohmann::ordered_json o;
    o["method"] = to_string(r.method);
    o["lambdas"] = r.weights.lambdas;
    std::vector<std::string> order;
    for (std::size_t k : r.weights.order) order.push_back(r.weights.names.at(k));
    o["order"] = order;
    o["fused_eval_ppl"] = r.eval_ppl;
    o["fused_eval_nll"] = r.eval_nll;
    o["nll_evaluations"] = r.nll_evaluations;
    if (timing) o["wall_ms"] = r.wall_ms;
    results.push_back(std::move(o));
  }
  j["results"] = std::move(results);
  if (!record.error.empty()) j["error"] = record.error;
  return j.dump();
}

namespace {

// Gives a loaded scorer the name used in the run config.
class RenamedScorer final : public TokenScorer {
 public:
  RenamedScorer(std::string name, ScorerPtr inner) : name_(std::move(name)), inner_(std::move(inner)) {}
  const std::string& name() const override { return name_; }
  const VocabPtr& vocab() const override { return inner_->vocab(); }
  std::vector<LogitVector> score(std::span<const TokenId> ids) const override {
    return inner_->score(ids);
  }

 private:
  std::string name_;
  ScorerPtr inner_;
};

ScorerPtr load_model(const ModelSpec& spec) {
  if (!spec.url.empty()) return RemoteScorer::connect(spec.name, spec.url);
  auto model = std::make_shared<NgramModel>(load_ngram(spec.path));
  if (model->name() == spec.name) return model;
  return std::make_shared<RenamedScorer>(spec.name, std::move(model));
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

// Expands weights over a subset of models to the full model list.
FusionWeights expand(const FusionWeights& sub, const std::vector<std::size_t>& kept,
                     const std::vector<std::string>& names) {
  FusionWeights out;
  out.names = names;
  out.lambdas.assign(names.size(), 0.0);
  for (std::size_t i = 0; i < kept.size(); ++i) out.lambdas[kept[i]] = sub.lambdas[i];
  for (std::size_t i : sub.order) out.order.push_back(kept[i]);
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (std::find(kept.begin(), kept.end(), k) == kept.end()) out.order.push_back(k);
  }
  return out;
}

}  // namespace

LoadedModels load_models(const RunConfig& cfg) {
  LoadedModels out;
  for (const auto& m : cfg.models) out.seeds.push_back(load_model(m));
  for (const auto& m : cfg.aux_models) out.aux.emplace(m.name, load_model(m));
  return out;
}

Evaluator::Evaluator(RunConfig cfg, std::vector<ScorerPtr> seeds,
                     std::map<std::string, ScorerPtr> aux, std::optional<ClusterSet> clusters)
    : cfg_(std::move(cfg)), seeds_(std::move(seeds)), aux_(std::move(aux)),
      clusters_(std::move(clusters)) {
  if (seeds_.empty()) throw error(errc::config, "at least one seed model is required");
  auto wants = [&](Method m) {
    return std::find(cfg_.methods.begin(), cfg_.methods.end(), m) != cfg_.methods.end();
  };
  if (wants(Method::cbtm)) {
    if (!clusters_) throw error(errc::config, "cbtm needs expert clusters");
    for (const auto& s : seeds_) {
      auto it = std::find_if(clusters_->clusters.begin(), clusters_->clusters.end(),
                             [&](const ExpertCluster& c) { return c.name == s->name(); });
      if (it == clusters_->clusters.end()) {
        throw error(errc::config, "no cluster for model '" + s->name() + "'");
      }
    }
  }
  if (wants(Method::dexperts)) {
    if (!cfg_.dexperts) throw error(errc::config, "dexperts needs base and anti roles");
    for (const auto& role : {cfg_.dexperts->base, cfg_.dexperts->anti}) {
      if (!aux_.count(role)) throw error(errc::config, "dexperts role '" + role + "' not loaded");
    }
  }
}

const VocabMap& Evaluator::vocab_map(const Vocabulary& ref, const Vocabulary& other) const {
  std::lock_guard lock(maps_mutex_);
  auto& slot = maps_[{ref.name(), other.name()}];
  if (!slot) slot = std::make_unique<VocabMap>(build_vocab_map(ref, other));
  return *slot;
}

ScorerPtr Evaluator::in_vocab(const ScorerPtr& scorer, const VocabPtr& ref) const {
  if (scorer->vocab_id() == ref->name()) return scorer;
  return std::make_shared<AlignedScorer>(scorer, ref, vocab_map(*ref, *scorer->vocab()));
}

struct Evaluator::Prepared {
  std::vector<std::size_t> kept;  // models with a finite prompt perplexity
  std::vector<double> kept_ppl;
  std::vector<std::string> kept_names;
  VocabPtr ref;
  TokenSequence doc;  // reference tokenization
  TokenSequence prompt;
  std::vector<TokenId> eval_targets;
  CachedLogits full;          // kept models, every document position
  CachedLogits prompt_cache;  // kept models, prompt positions only
};

Evaluator::Prepared Evaluator::prepare(std::string_view text, bool whole_prompt,
                                       EvalRecord& rec) const {
  const std::size_t count = seeds_.size();
  for (const auto& s : seeds_) rec.models.push_back(s->name());
  rec.prompt_ppl.assign(count, std::numeric_limits<double>::quiet_NaN());
  rec.eval_ppl.assign(count, std::numeric_limits<double>::quiet_NaN());

  auto split = [&](const TokenSequence& doc) {
    if (whole_prompt) {
      if (doc.empty()) throw error(errc::empty_sequence, "empty prompt");
      return PromptSplit{doc, {{}, doc.vocab_id}};
    }
    return cfg_.prompt_fraction > 0.0 ? split_prompt_fraction(doc, cfg_.prompt_fraction)
                                      : split_prompt(doc);
  };

  // One forward pass per model over its own tokenization of the text.
  std::vector<std::vector<LogitVector>> own_logits(count);
  bool short_prompt = false;
  for (std::size_t k = 0; k < count; ++k) {
    const auto tokens = make_tokenizer(seeds_[k]->vocab())->encode(text);
    const auto parts = split(tokens);
    own_logits[k] = score_sequence(*seeds_[k], tokens);
    if (parts.prompt.size() < 2) {
      short_prompt = true;
      continue;
    }
    std::vector<LogitVector> head(
        own_logits[k].begin(), own_logits[k].begin() + static_cast<std::ptrdiff_t>(parts.prompt.size()));
    rec.prompt_ppl[k] = sequence_nll(head, parts.prompt).ppl;
  }

  Prepared prep;
  if (short_prompt) {
    spdlog::warn("{}: prompt shorter than 2 tokens, using uniform weights", rec.doc_id);
    rec.uniform_fallback = true;
    prep.kept.resize(count);
    std::iota(prep.kept.begin(), prep.kept.end(), 0);
  } else {
    prep.kept = finite_models(rec.prompt_ppl, rec.models);
    if (prep.kept.empty()) {
      throw error(errc::non_finite_input, "no model has a finite prompt perplexity");
    }
  }
  std::vector<std::string> kept_vocabs;
  for (std::size_t k : prep.kept) {
    prep.kept_ppl.push_back(rec.prompt_ppl[k]);
    prep.kept_names.push_back(rec.models[k]);
    kept_vocabs.push_back(seeds_[k]->vocab_id());
  }

  // Reference vocabulary: the top-1 model's unless pinned by the config.
  if (cfg_.reference_vocab == "top1") {
    const std::size_t top =
        rec.uniform_fallback ? prep.kept.front() : prep.kept[rank_by_ppl(prep.kept_ppl).front()];
    prep.ref = seeds_[top]->vocab();
  } else {
    for (const auto& s : seeds_) {
      if (!prep.ref && s->vocab_id() == cfg_.reference_vocab) prep.ref = s->vocab();
    }
    for (const auto& [_, s] : aux_) {
      if (!prep.ref && s->vocab_id() == cfg_.reference_vocab) prep.ref = s->vocab();
    }
    if (!prep.ref) {
      throw error(errc::config, "reference vocabulary '" + cfg_.reference_vocab + "' not found");
    }
  }
  rec.reference_vocab = prep.ref->name();

  prep.doc = make_tokenizer(prep.ref)->encode(text);
  const auto parts = split(prep.doc);
  prep.prompt = parts.prompt;
  prep.eval_targets = parts.eval.ids;
  rec.prompt_tokens = parts.prompt.size();
  rec.eval_tokens = parts.eval.size();
  if (parts.prompt.size() < 2 && !rec.uniform_fallback) {
    spdlog::warn("{}: reference prompt shorter than 2 tokens, using uniform weights", rec.doc_id);
    rec.uniform_fallback = true;
  }

  prep.full = CachedLogits(prep.doc.size(), prep.ref->size());
  prep.prompt_cache = CachedLogits(parts.prompt.size(), prep.ref->size());
  for (std::size_t i = 0; i < prep.kept.size(); ++i) {
    const std::size_t k = prep.kept[i];
    const auto logits = seeds_[k]->vocab_id() == prep.ref->name()
                            ? own_logits[k]
                            : score_sequence(*in_vocab(seeds_[k], prep.ref), prep.doc);
    prep.full.add_model(prep.kept_names[i], logits);
    prep.prompt_cache.add_model(prep.kept_names[i], logits);
  }
  return prep;
}

MethodResult Evaluator::weigh(Method method, const Prepared& prep, const EvalRecord& rec) const {
  MethodResult res;
  res.method = method;
  const auto start = std::chrono::steady_clock::now();
  const std::size_t kept = prep.kept.size();
  FusionWeights sub = uniform_weights(kept, prep.kept_names);
  if (!rec.uniform_fallback) {
    switch (method) {
      case Method::packllm_sim:
        sub = sim_weights(prep.kept_ppl, cfg_.tau, prep.kept_names);
        break;
      case Method::top1:
        sub = top1_select(prep.kept_ppl, prep.kept_names);
        break;
      case Method::ensemble:
        sub.order = rank_by_ppl(prep.kept_ppl);
        break;
      case Method::packllm_opt: {
        SearchStats stats;
        sub = greedy_optimize(prep.prompt_cache, prep.prompt, prep.kept_ppl, cfg_.grid, &stats);
        res.nll_evaluations = stats.nll_evaluations;
        break;
      }
      case Method::exhaustive: {
        SearchStats stats;
        sub = exhaustive_grid(prep.prompt_cache, prep.prompt, cfg_.grid, &stats);
        res.nll_evaluations = stats.nll_evaluations;
        break;
      }
      case Method::cbtm: {
        const auto prompt_text = make_tokenizer(prep.ref)->decode(prep.prompt.ids);
        const auto all = clusters_->weights(prompt_text);
        // Renormalised over the models that survived the perplexity check.
        double sum = 0.0;
        for (std::size_t i = 0; i < kept; ++i) {
          sub.lambdas[i] = all.lambda(prep.kept_names[i]);
          sum += sub.lambdas[i];
        }
        for (double& l : sub.lambdas) l /= sum;
        std::stable_sort(sub.order.begin(), sub.order.end(), [&](std::size_t a, std::size_t b) {
          return sub.lambdas[a] > sub.lambdas[b];
        });
        break;
      }
      case Method::dexperts:
        // Expert role goes to the top-1 seed; base and anti-expert are fixed.
        sub = top1_select(prep.kept_ppl, prep.kept_names);
        break;
    }
  } else if (method == Method::dexperts) {
    std::fill(sub.lambdas.begin(), sub.lambdas.end(), 0.0);
    sub.lambdas.front() = 1.0;
  }
  res.weights = expand(sub, prep.kept, rec.models);
  res.wall_ms = elapsed_ms(start);
  return res;
}

EvalRecord Evaluator::evaluate(const std::string& doc_id, std::string_view text) const {
  EvalRecord rec;
  rec.doc_id = doc_id;
  try {
    const auto prep = prepare(text, false, rec);
    const std::size_t prompt_len = prep.prompt.size();
    const std::size_t kept = prep.kept.size();
    const auto& targets = prep.eval_targets;

    auto kept_lambdas = [&](const FusionWeights& w) {
      std::vector<double> out;
      for (std::size_t k : prep.kept) out.push_back(w.lambdas[k]);
      return out;
    };
    auto logit_fusion_nll = [&](const std::vector<double>& lambdas) {
      double total = 0.0;
      for (std::size_t j = 0; j < targets.size(); ++j) {
        total -= floor_log_prob(log_softmax_at(fuse_logits(prep.full, lambdas, prompt_len + j), targets[j]));
      }
      return make_report(total, targets.size());
    };

    for (std::size_t i = 0; i < kept; ++i) {
      std::vector<double> one(kept, 0.0);
      one[i] = 1.0;
      rec.eval_ppl[prep.kept[i]] = logit_fusion_nll(one).ppl;
    }

    std::vector<LogitVector> base;
    std::vector<LogitVector> anti;
    for (Method method : cfg_.methods) {
      auto res = weigh(method, prep, rec);
      const auto start = std::chrono::steady_clock::now();
      const auto lambdas = kept_lambdas(res.weights);
      NllReport report;
      if (method == Method::cbtm) {
        FusionWeights w{prep.kept_names, lambdas, {}};
        double total = 0.0;
        for (std::size_t j = 0; j < targets.size(); ++j) {
          std::vector<LogProbVector> lps;
          for (std::size_t i = 0; i < kept; ++i) lps.push_back(log_softmax(prep.full.at(i, prompt_len + j)));
          total -= floor_log_prob(mix_probabilities(lps, w)[static_cast<std::size_t>(targets[j])]);
        }
        report = make_report(total, targets.size());
      } else if (method == Method::dexperts) {
        if (base.empty()) {
          base = score_sequence(*in_vocab(aux_.at(cfg_.dexperts->base), prep.ref), prep.doc);
          anti = score_sequence(*in_vocab(aux_.at(cfg_.dexperts->anti), prep.ref), prep.doc);
        }
        const auto expert = static_cast<std::size_t>(
            std::max_element(lambdas.begin(), lambdas.end()) - lambdas.begin());
        double total = 0.0;
        for (std::size_t j = 0; j < targets.size(); ++j) {
          const std::size_t pos = prompt_len + j;
          const auto lp = dexperts_fuse(base[pos], prep.full.at(expert, pos), anti[pos], cfg_.dexperts->lambda);
          total -= floor_log_prob(lp[static_cast<std::size_t>(targets[j])]);
        }
        report = make_report(total, targets.size());
      } else {
        report = logit_fusion_nll(lambdas);
      }
      res.eval_nll = report.mean_nll;
      res.eval_ppl = report.ppl;
      res.wall_ms += elapsed_ms(start);
      rec.results.push_back(std::move(res));
    }
  } catch (const std::exception& e) {
    spdlog::error("{}: {}", doc_id, e.what());
    rec.error = e.what();
    rec.results.clear();
  }
  return rec;
}

EvalRecord Evaluator::prompt_weights(std::string_view prompt_text) const {
  EvalRecord rec;
  rec.doc_id = "prompt";
  const auto prep = prepare(prompt_text, true, rec);
  for (Method method : cfg_.methods) {
    auto res = weigh(method, prep, rec);
    res.eval_nll = std::numeric_limits<double>::quiet_NaN();
    res.eval_ppl = std::numeric_limits<double>::quiet_NaN();
    rec.results.push_back(std::move(res));
  }
  return rec;
}

std::vector<EvalRecord> Evaluator::run(const std::vector<std::string>& documents) const {
  std::vector<EvalRecord> records(documents.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < documents.size(); i = next++) {
      records[i] = evaluate("doc_" + std::to_string(i), documents[i]);
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg_.workers, documents.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return records;
}

std::vector<std::string> read_corpus(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> docs;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) docs.push_back(std::move(line));
  }
  if (docs.empty()) throw error(errc::empty_corpus, path + " holds no documents");
  return docs;
}

std::vector<EvalRecord> run_eval(const RunConfig& cfg, const std::vector<std::string>& corpus) {
  cfg.validate();
  if (corpus.empty()) throw error(errc::empty_corpus, "no documents to evaluate");
  auto models = load_models(cfg);
  std::optional<ClusterSet> clusters;
  if (!cfg.clusters.empty()) clusters = clusters_from_json(read_file(cfg.clusters));
  Evaluator evaluator(cfg, std::move(models.seeds), std::move(models.aux), std::move(clusters));

  if (cfg.max_docs == 0 || cfg.max_docs >= corpus.size()) return evaluator.run(corpus);

  // Seeded sample, kept in corpus order; ids refer to corpus line numbers.
  std::vector<std::size_t> idx(corpus.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(cfg.max_docs);
  std::sort(idx.begin(), idx.end());
  std::vector<std::string> sample;
  for (std::size_t i : idx) sample.push_back(corpus[i]);
  auto records = evaluator.run(sample);
  for (std::size_t i = 0; i < records.size(); ++i) records[i].doc_id = "doc_" + std::to_string(idx[i]);
  return records;
}

std::string summary_csv(const std::vector<EvalRecord>& records) {
  struct Acc {
    std::size_t docs = 0;
    double ppl = 0.0;
    double nll = 0.0;
    double evals = 0.0;
    double top_weight = 0.0;
  };
  std::map<std::string, Acc> by_method;
  std::vector<std::string> order;
  std::size_t models = 0;
  for (const auto& r : records) {
    if (!r.error.empty()) continue;
    models = r.models.size();
    for (const auto& res : r.results) {
      const std::string name(to_string(res.method));
      if (!by_method.count(name)) order.push_back(name);
      auto& a = by_method[name];
      ++a.docs;
      a.ppl += res.eval_ppl;
      a.nll += res.eval_nll;
      a.evals += static_cast<double>(res.nll_evaluations);
      a.top_weight += *std::max_element(res.weights.lambdas.begin(), res.weights.lambdas.end());
    }
  }
  std::ostringstream out;
  out.precision(10);
  out << "method,num_models,documents,mean_eval_ppl,mean_eval_nll,mean_nll_evaluations,mean_top_weight\n";
  for (const auto& name : order) {
    const auto& a = by_method[name];
    const double n = static_cast<double>(a.docs);
    out << name << ',' << models << ',' << a.docs << ',' << a.ppl / n << ',' << a.nll / n << ','
        << a.evals / n << ',' << a.top_weight / n << '\n';
  }
  return out.str();
}

std::vector<BenchRow> bench_complexity(const std::vector<std::size_t>& model_counts,
                                       const BenchOptions& options) {
  GridConfig grid;
  grid.step = options.step;
  grid.early_stop = false;
  const std::size_t n = grid_intervals(grid);
  std::vector<BenchRow> rows;
  for (std::size_t models : model_counts) {
    if (models == 0) throw error(errc::invalid_argument, "model count must be >= 1");
    std::mt19937_64 rng(options.seed + models);
    std::normal_distribution<double> logit(0.0, 2.0);
    std::uniform_int_distribution<TokenId> tok(0, static_cast<TokenId>(options.dim - 1));
    std::vector<std::vector<LogitVector>> per_model(models);
    for (auto& m : per_model) {
      for (std::size_t p = 0; p < options.positions; ++p) {
        LogitVector v(options.dim);
        for (double& x : v) x = logit(rng);
        m.push_back(std::move(v));
      }
    }
    TokenSequence targets{{}, "bench"};
    for (std::size_t p = 0; p < options.positions; ++p) targets.ids.push_back(tok(rng));
    const auto cache = CachedLogits::from_vectors(per_model);
    std::vector<double> ppls(models);
    for (std::size_t k = 0; k < models; ++k) ppls[k] = std::exp(model_nll(cache, k, targets.ids));

    auto time_it = [&](auto&& fn) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t evals = 0;
      for (std::size_t r = 0; r < std::max<std::size_t>(1, options.repeats); ++r) {
        SearchStats stats;
        const auto start = std::chrono::steady_clock::now();
        fn(stats);
        best = std::min(best, elapsed_ms(start));
        evals = stats.nll_evaluations;
      }
      return std::pair{evals, best};
    };

    auto [g_evals, g_ms] = time_it([&](SearchStats& s) { greedy_optimize(cache, targets, ppls, grid, &s); });
    rows.push_back({models, "greedy", g_evals, static_cast<std::uint64_t>((models - 1) * (n + 1)), g_ms});
    if (models <= options.max_exhaustive_models) {
      GridConfig ex = grid;
      ex.max_exhaustive_models = models;
      auto [e_evals, e_ms] = time_it([&](SearchStats& s) { exhaustive_grid(cache, targets, ex, &s); });
      rows.push_back({models, "exhaustive", e_evals, simplex_grid_size(n, models), e_ms});
    }
  }
  return rows;
}

std::string bench_to_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out.precision(6);
  out << "num_models,method,nll_evaluations,grid_points,wall_ms\n";
  for (const auto& r : rows) {
    out << r.models << ',' << r.method << ',' << r.nll_evaluations << ',' << r.grid_points << ','
        << std::fixed << r.wall_ms << std::defaultfloat << '\n';
  }
  return out.str();
}

}  // namespace packfuse
