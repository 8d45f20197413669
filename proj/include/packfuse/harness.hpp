#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "packfuse/align.hpp"
#include "packfuse/baselines.hpp"
#include "packfuse/fusion.hpp"
#include "packfuse/ppl.hpp"

namespace packfuse {

struct PromptSplit {
  TokenSequence prompt;
  TokenSequence eval;
};

inline constexpr std::size_t kMaxPromptTokens = 32;
inline constexpr double kPromptFraction = 0.2;

// Prompt = first min(32, floor(0.2 len)) tokens; doc_too_short below 3 tokens.
PromptSplit split_prompt(const TokenSequence& doc);

// Prompt = first floor(fraction len) tokens, capped so that one eval token remains.
PromptSplit split_prompt_fraction(const TokenSequence& doc, double fraction);

enum class Method { packllm_sim, packllm_opt, top1, ensemble, cbtm, dexperts, exhaustive };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

struct ModelSpec {
  std::string name;
  std::string path;   // n-gram model file
  std::string url;    // remote scorer endpoint
};

struct DExpertsConfig {
  std::string base;
  std::string anti;
  double lambda = 1.0;
};

struct RunConfig {
  std::vector<Method> methods{Method::packllm_sim};
  double tau = 1.0;
  GridConfig grid;
  std::vector<ModelSpec> models;       // seed models
  std::vector<ModelSpec> aux_models;   // dexperts base / anti-expert
  std::string reference_vocab = "top1";
  std::uint64_t seed = 0;
  std::string corpus;
  std::string output;
  std::string summary;
  std::string clusters;
  std::optional<DExpertsConfig> dexperts;
  std::size_t workers = 1;
  std::size_t max_docs = 0;        // 0 = every document, else a seeded sample
  double prompt_fraction = 0.0;    // 0 = default 32 / 20% rule
  bool timing = false;             // wall times make records non-reproducible

  void validate() const;
};

// Unknown keys are rejected.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::string& path);

struct MethodResult {
  Method method = Method::packllm_sim;
  FusionWeights weights;
  double eval_nll = 0.0;
  double eval_ppl = 0.0;
  std::size_t nll_evaluations = 0;
  double wall_ms = 0.0;
};

struct EvalRecord {
  std::string doc_id;
  std::vector<std::string> models;
  std::vector<double> prompt_ppl;  // NaN when the prompt is too short
  std::vector<double> eval_ppl;    // per model, over the eval tokens
  std::string reference_vocab;
  std::size_t prompt_tokens = 0;
  std::size_t eval_tokens = 0;
  bool uniform_fallback = false;
  std::vector<MethodResult> results;
  std::string error;

  const MethodResult* result(Method method) const;
};

std::string record_to_json(const EvalRecord& record, bool timing);

struct LoadedModels {
  std::vector<ScorerPtr> seeds;
  std::map<std::string, ScorerPtr> aux;
};

LoadedModels load_models(const RunConfig& cfg);

class Evaluator {
 public:
  Evaluator(RunConfig cfg, std::vector<ScorerPtr> seeds, std::map<std::string, ScorerPtr> aux = {},
            std::optional<ClusterSet> clusters = std::nullopt);

  // Failures inside the document pipeline land in EvalRecord::error.
  EvalRecord evaluate(const std::string& doc_id, std::string_view text) const;

  std::vector<EvalRecord> run(const std::vector<std::string>& documents) const;

  // Treats the whole text as the prompt: weights and prompt perplexities only.
  EvalRecord prompt_weights(std::string_view prompt_text) const;

  const RunConfig& config() const { return cfg_; }

 private:
  struct Prepared;
  Prepared prepare(std::string_view text, bool whole_prompt, EvalRecord& rec) const;
  MethodResult weigh(Method method, const Prepared& prep, const EvalRecord& rec) const;

  const VocabMap& vocab_map(const Vocabulary& ref, const Vocabulary& other) const;
  ScorerPtr in_vocab(const ScorerPtr& scorer, const VocabPtr& ref) const;

  RunConfig cfg_;
  std::vector<ScorerPtr> seeds_;
  std::map<std::string, ScorerPtr> aux_;
  std::optional<ClusterSet> clusters_;
  mutable std::mutex maps_mutex_;
  mutable std::map<std::pair<std::string, std::string>, std::unique_ptr<VocabMap>> maps_;
};

std::vector<std::string> read_corpus(const std::string& path);

std::vector<EvalRecord> run_eval(const RunConfig& cfg, const std::vector<std::string>& corpus);

// Method-level means over records without errors; columns mirror the figure axes.
std::string summary_csv(const std::vector<EvalRecord>& records);

struct BenchRow {
  std::size_t models = 0;
  std::string method;
  std::size_t nll_evaluations = 0;
  std::uint64_t grid_points = 0;
  double wall_ms = 0.0;
};

struct BenchOptions {
  double step = 0.05;
  std::size_t positions = 32;
  std::size_t dim = 64;
  std::size_t repeats = 5;
  std::size_t max_exhaustive_models = 5;
  std::uint64_t seed = 7;
};

// Random table-model fixtures; greedy runs without early stopping so counts
// follow (K-1)(1/step+1).
std::vector<BenchRow> bench_complexity(const std::vector<std::size_t>& model_counts,
                                       const BenchOptions& options = {});
std::string bench_to_csv(const std::vector<BenchRow>& rows);

}  // namespace packfuse
