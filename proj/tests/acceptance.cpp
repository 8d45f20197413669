// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "packfuse/align.hpp"
#include "packfuse/baselines.hpp"
#include "packfuse/fusion.hpp"
#include "packfuse/harness.hpp"
#include "packfuse/remote.hpp"
#include "packfuse/synthetic.hpp"

using namespace packfuse;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

VocabPtr letters(std::size_t size) {
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < size; ++i) tokens.push_back(std::string(1, static_cast<char>('a' + i)));
  return std::make_shared<const Vocabulary>("letters", tokens);
}

std::vector<LogitVector> random_rows(std::mt19937_64& rng, std::size_t rows, std::size_t dim) {
  std::normal_distribution<double> nd(0.0, 2.0);
  std::vector<LogitVector> out(rows, LogitVector(dim));
  for (auto& r : out) {
    for (double& x : r) x = nd(rng);
  }
  return out;
}

TokenSequence random_ids(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  std::uniform_int_distribution<TokenId> ud(0, static_cast<TokenId>(dim - 1));
  TokenSequence s{{}, "letters"};
  for (std::size_t i = 0; i < n; ++i) s.ids.push_back(ud(rng));
  return s;
}

// K context-dependent table models scored over one random prompt.
struct Fixture {
  CachedLogits cache;
  TokenSequence prompt;
  std::vector<double> ppls;
};

Fixture toy_fixture(std::mt19937_64& rng, std::size_t models, std::size_t dim = 8,
                    std::size_t length = 24) {
  auto vocab = letters(dim);
  const auto prompt = random_ids(rng, length, dim);
  std::vector<std::vector<LogitVector>> per_model;
  for (std::size_t k = 0; k < models; ++k) {
    TableModel m("m" + std::to_string(k), vocab, random_rows(rng, 5, dim), 1 + k % 2);
    per_model.push_back(score_sequence(m, prompt));
  }
  Fixture f{CachedLogits::from_vectors(per_model), prompt, {}};
  for (std::size_t k = 0; k < models; ++k) f.ppls.push_back(std::exp(model_nll(f.cache, k, prompt.ids)));
  return f;
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(1001);
  const auto start = Clock::now();
  int equal = 0;
  for (int i = 0; i < 50; ++i) {
    auto f = toy_fixture(rng, 2);
    auto g = greedy_optimize(f.cache, f.prompt, f.ppls);
    auto e = exhaustive_grid(f.cache, f.prompt);
    equal += g.lambdas == e.lambdas;
  }
  const double secs = seconds_since(start);
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d/50 fixtures identical, %.3f s (limit 5 s)", equal, secs);
  return {equal == 50 && secs < 5.0, buf};
}

Outcome greedy_monotone() {
  std::mt19937_64 rng(1002);
  int violations = 0;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    auto f = toy_fixture(rng, 2 + static_cast<std::size_t>(i % 3));
    SearchStats stats;
    greedy_optimize(f.cache, f.prompt, f.ppls, {0.05, false}, &stats);
    for (std::size_t s = 1; s < stats.stage_nll.size(); ++s) {
      const double rise = stats.stage_nll[s] - stats.stage_nll[s - 1];
      worst = std::max(worst, rise);
      violations += rise > 1e-9;
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d violations over 100 fixtures (largest rise %.3g, slack 1e-9)",
                violations, worst);
  return {violations == 0, buf};
}

Outcome simplex_suite() {
  std::mt19937_64 rng(1003);
  std::uniform_int_distribution<std::size_t> kdist(1, 16);
  std::uniform_real_distribution<double> logp(0.0, 8.0);
  std::uniform_real_distribution<double> taus(0.05, 4.0);
  const auto clusters = build_clusters({{"a", {"alpha beta gamma", "beta delta"}},
                                        {"b", {"one two three", "two four five"}},
                                        {"c", {"alpha one", "gamma five six"}}});
  const std::vector<std::string> words{"alpha", "beta", "one", "five", "six", "zeta", "two"};
  int bad = 0;
  double worst = 0.0;
  for (int call = 0; call < 1000; ++call) {
    const std::size_t k = kdist(rng);
    std::vector<double> ppls(k);
    for (double& p : ppls) p = std::exp(logp(rng));
    FusionWeights w;
    switch (call % 6) {
      case 0: w = sim_weights(ppls, taus(rng)); break;
      case 1: w = top1_select(ppls); break;
      case 2: w = uniform_weights(k); break;
      case 3: {
        auto f = toy_fixture(rng, 1 + k % 6, 6, 10);
        w = greedy_optimize(f.cache, f.prompt, f.ppls);
        break;
      }
      case 4: {
        auto f = toy_fixture(rng, 1 + k % 4, 6, 10);
        w = exhaustive_grid(f.cache, f.prompt, {0.1});
        break;
      }
      default: {
        std::string text;
        for (std::size_t i = 0; i < k; ++i) text += words[i % words.size()] + " ";
        w = clusters.weights(text);
        break;
      }
    }
    double sum = 0.0;
    bool in_range = true;
    for (double l : w.lambdas) {
      sum += l;
      in_range = in_range && l >= 0.0 && l <= 1.0;
    }
    worst = std::max(worst, std::abs(sum - 1.0));
    bad += !in_range || std::abs(sum - 1.0) > 1e-9;
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d/1000 calls off the simplex (max |sum-1| = %.3g)", bad, worst);
  return {bad == 0, buf};
}

Outcome sim_closed_form() {
  auto w = sim_weights(std::vector<double>{10.0, 100.0}, 1.0);
  bool ok = std::abs(w.lambdas[0] - 0.9091) <= 1e-4 && std::abs(w.lambdas[1] - 0.0909) <= 1e-4;
  bool uniform_ok = true;
  for (std::size_t k = 1; k <= 8; ++k) {
    for (double tau : {0.1, 1.0}) {
      auto u = sim_weights(std::vector<double>(k, 37.5), tau);
      for (double l : u.lambdas) uniform_ok = uniform_ok && l == 1.0 / static_cast<double>(k);
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "(%.6f, %.6f) vs (0.9091, 0.0909) tol 1e-4; equal ppls exactly 1/K: %s",
                w.lambdas[0], w.lambdas[1], uniform_ok ? "yes" : "no");
  return {ok && uniform_ok, buf};
}

Outcome uniform_perplexity() {
  auto vocab = letters(4);
  TableModel m("uniform", vocab, {{0.0, 0.0, 0.0, 0.0}});
  std::mt19937_64 rng(1005);
  double worst = 0.0;
  for (std::size_t n = 1; n <= 1000; ++n) {
    const auto seq = random_ids(rng, n, 4);
    const double ppl = sequence_nll(score_sequence(m, seq), seq).ppl;
    worst = std::max(worst, std::abs(ppl - 4.0));
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "max |PPL - 4| over lengths 1..1000 = %.3g (tol 1e-9)", worst);
  return {worst <= 1e-9, buf};
}

Outcome complexity_trend() {
  BenchOptions opt;
  opt.positions = 64;
  opt.dim = 64;
  opt.repeats = 7;
  const auto rows = bench_complexity({2, 3, 5}, opt);
  auto row = [&](std::size_t k, const char* method) {
    for (const auto& r : rows) {
      if (r.models == k && r.method == method) return r;
    }
    return BenchRow{};
  };
  const bool counts = row(2, "greedy").nll_evaluations == 21 && row(3, "greedy").nll_evaluations == 42 &&
                      row(5, "greedy").nll_evaluations == 84 &&
                      row(5, "exhaustive").nll_evaluations > 10000;
  // Linear growth: time per greedy evaluation at K=5 within 25% of K=2.
  const double t2 = row(2, "greedy").wall_ms;
  const double t5 = row(5, "greedy").wall_ms;
  const double ratio = t5 / t2;
  const bool linear = ratio <= 4.0 * 1.25;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "greedy evals %zu/%zu/%zu, exhaustive K=5 %zu; greedy time K=5/K=2 = %.2f (limit 5.0)",
                row(2, "greedy").nll_evaluations, row(3, "greedy").nll_evaluations,
                row(5, "greedy").nll_evaluations, row(5, "exhaustive").nll_evaluations, ratio);
  return {counts && linear, buf};
}

std::vector<ScorerPtr> trained_experts(const std::vector<synthetic::Domain>& domains, std::uint64_t seed) {
  std::vector<ScorerPtr> out;
  for (auto& m : synthetic::train_experts(domains, 80, 400, 3, 0.1, seed)) {
    out.push_back(std::make_shared<NgramModel>(std::move(m)));
  }
  return out;
}

RunConfig config_for(std::vector<Method> methods, std::size_t models) {
  RunConfig cfg;
  cfg.methods = std::move(methods);
  for (std::size_t k = 0; k < models; ++k) cfg.models.push_back({"expert_" + std::to_string(k), "-", ""});
  return cfg;
}

Outcome expertise_recovery() {
  const auto start = Clock::now();
  const auto domains = synthetic::make_domains(2, 2024);
  Evaluator ev(config_for({Method::top1, Method::packllm_opt, Method::ensemble}, 2),
               trained_experts(domains, 2024));
  std::mt19937_64 rng(77);
  std::size_t picked = 0;
  std::size_t errors = 0;
  double opt = 0.0;
  double ens = 0.0;
  for (int i = 0; i < 200; ++i) {
    auto rec = ev.evaluate("a" + std::to_string(i), synthetic::document(domains[0], rng, 400));
    if (!rec.error.empty()) {
      ++errors;
      continue;
    }
    picked += rec.result(Method::top1)->weights.lambdas[0] == 1.0;
    opt += rec.result(Method::packllm_opt)->eval_ppl;
    ens += rec.result(Method::ensemble)->eval_ppl;
  }
  const double secs = seconds_since(start);
  opt /= 200.0;
  ens /= 200.0;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "top1 picks A %zu/200 (need 190); mean eval PPL opt %.4f vs ensemble %.4f; %.1f s (limit 60 s)",
                picked, opt, ens, secs);
  return {errors == 0 && picked >= 190 && opt <= ens && secs < 60.0, buf};
}

Outcome prompt_length_trend() {
  std::string detail;
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto domains = synthetic::make_domains(3, 500 + seed);
    const auto experts = trained_experts(domains, 500 + seed);
    std::mt19937_64 rng(900 + seed);
    std::vector<std::string> docs;
    for (int i = 0; i < 60; ++i) {
      std::vector<double> mix(3);
      std::gamma_distribution<double> g(0.5, 1.0);
      for (double& x : mix) x = g(rng) + 1e-6;
      docs.push_back(synthetic::mixed_document(domains, mix, rng, 600));
    }
    double mean[2] = {0.0, 0.0};
    const double fractions[2] = {0.2, 0.8};
    for (int f = 0; f < 2; ++f) {
      auto cfg = config_for({Method::packllm_opt}, 3);
      cfg.prompt_fraction = fractions[f];
      Evaluator ev(cfg, experts);
      for (const auto& rec : ev.run(docs)) mean[f] += rec.result(Method::packllm_opt)->eval_ppl;
      mean[f] /= static_cast<double>(docs.size());
    }
    ok = ok && mean[1] <= mean[0];
    char buf[80];
    std::snprintf(buf, sizeof buf, "%sseed %llu: %.4f -> %.4f", seed == 1 ? "" : "; ",
                  static_cast<unsigned long long>(seed), mean[0], mean[1]);
    detail += buf;
  }
  return {ok, "opt eval PPL 20% -> 80% prompt: " + detail};
}

Outcome mined() {
  const bool example = edit_distance("get", "gets") == 1;
  std::mt19937_64 rng(1009);
  auto random_vocab = [&](const std::string& name, std::size_t size, const std::string& alphabet) {
    std::uniform_int_distribution<std::size_t> len(1, 6);
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    std::vector<std::string> tokens;
    while (tokens.size() < size) {
      std::string w;
      for (std::size_t i = len(rng); i > 0; --i) w.push_back(alphabet[pick(rng)]);
      if (std::find(tokens.begin(), tokens.end(), w) == tokens.end()) tokens.push_back(w);
    }
    return Vocabulary(name, tokens);
  };
  bool identity = true;
  std::size_t violations = 0;
  std::size_t checked = 0;
  for (int trial = 0; trial < 3; ++trial) {
    const auto ref = random_vocab("ref", 200, "abcdeg");
    const auto other = random_vocab("other", 200, "abcdfh");
    const auto self = build_vocab_map(ref, ref);
    for (std::size_t i = 0; i < ref.size(); ++i) identity = identity && self.fwd[i] == static_cast<TokenId>(i);
    const auto map = build_vocab_map(ref, other);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const auto chosen = edit_distance(ref.tokens()[i], other.tokens()[static_cast<std::size_t>(map.fwd[i])]);
      for (std::size_t j = 0; j < other.size(); ++j) {
        const auto d = edit_distance(ref.tokens()[i], other.tokens()[j]);
        violations += d < chosen || (d == chosen && j < static_cast<std::size_t>(map.fwd[i]));
        ++checked;
      }
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "d(get,gets)=%zu; identity map: %s; %zu minimality violations in %zu pairs",
                edit_distance("get", "gets"), identity ? "yes" : "no", violations, checked);
  return {example && identity && violations == 0, buf};
}

Outcome protocol_round_trip() {
  std::mt19937_64 rng(1010);
  RemoteOptions opts;
  opts.backoff = std::chrono::milliseconds(5);
  int identical = 0;
  for (int i = 0; i < 20; ++i) {
    const std::size_t dim = 5 + static_cast<std::size_t>(i % 4);
    auto vocab = letters(dim);
    auto a = std::make_shared<TableModel>("a", vocab, random_rows(rng, 7, dim), 2);
    auto b = std::make_shared<TableModel>("b", vocab, random_rows(rng, 3, dim), 1);
    ScoreServer server(b);
    server.start();
    RemoteScorer remote("b", server.endpoint(), vocab, opts);
    const auto seq = random_ids(rng, 60, dim);
    const auto split = split_prompt(seq);

    auto fuse = [&](const TokenScorer& second) {
      const auto la = score_sequence(*a, seq);
      const auto lb = score_sequence(second, seq);
      auto prompt_cache = CachedLogits::from_vectors(
          {{la.begin(), la.begin() + static_cast<std::ptrdiff_t>(split.prompt.size())},
           {lb.begin(), lb.begin() + static_cast<std::ptrdiff_t>(split.prompt.size())}});
      std::vector<double> ppls{std::exp(model_nll(prompt_cache, 0, split.prompt.ids)),
                               std::exp(model_nll(prompt_cache, 1, split.prompt.ids))};
      auto w = greedy_optimize(prompt_cache, split.prompt, ppls);
      auto full = CachedLogits::from_vectors({la, lb});
      return std::pair{w.lambdas, fused_nll(full, w.lambdas, seq.ids)};
    };
    identical += fuse(*b) == fuse(remote);
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d/20 fixtures bit-identical (weights and fused NLL)", identical);
  return {identical == 20, buf};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"AC1 greedy equals exhaustive at K=2", oracle_equivalence},
      {"AC2 greedy monotonicity", greedy_monotone},
      {"AC3 simplex suite", simplex_suite},
      {"AC4 closed-form sim weights", sim_closed_form},
      {"AC5 uniform model perplexity", uniform_perplexity},
      {"AC6 complexity trend", complexity_trend},
      {"AC7 expertise recovery", expertise_recovery},
      {"AC8 prompt-length trend", prompt_length_trend},
      {"AC9 MinED alignment", mined},
      {"AC10 protocol round trip", protocol_round_trip},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
