#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "packfuse/scorer.hpp"

namespace packfuse {

// A point on the K-simplex. lambdas[k] belongs to names[k]; `order` lists
// model indices by ascending prompt perplexity (identity when unranked).
struct FusionWeights {
  std::vector<std::string> names;
  std::vector<double> lambdas;
  std::vector<std::size_t> order;

  std::size_t size() const { return lambdas.size(); }
  double lambda(std::string_view name) const;
  bool on_simplex(double tol = 1e-9) const;
};

struct GridConfig {
  double step = 0.05;
  bool early_stop = true;
  // Exhaustive search refuses more models than this (combinatorial guard).
  std::size_t max_exhaustive_models = 4;
};

// Number of grid intervals 1/step; throws invalid_grid unless 0 < step <= 0.5
// and 1/step is integral.
std::size_t grid_intervals(const GridConfig& cfg);

// C(n + K - 1, K - 1): simplex grid points at n intervals per axis.
std::uint64_t simplex_grid_size(std::size_t intervals, std::size_t models);

// Per-model logits over the same positions, computed once and reused by every
// grid evaluation. Storage is model-major, positions x dim per model.
class CachedLogits {
 public:
  CachedLogits() = default;
  CachedLogits(std::size_t positions, std::size_t dim) : positions_(positions), dim_(dim) {}

  // Keeps the first `positions()` vectors of `logits`.
  void add_model(std::string name, const std::vector<LogitVector>& logits);

  static CachedLogits from_vectors(const std::vector<std::vector<LogitVector>>& per_model,
                                   std::vector<std::string> names = {});

  std::size_t models() const { return data_.size(); }
  std::size_t positions() const { return positions_; }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& names() const { return names_; }

  std::span<const double> at(std::size_t model, std::size_t position) const;
  std::span<const double> model_data(std::size_t model) const { return data_.at(model); }

 private:
  std::size_t positions_ = 0;
  std::size_t dim_ = 0;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> data_;
};

// Instrumentation for the grid searches.
struct SearchStats {
  std::size_t nll_evaluations = 0;  // one per grid point (fused NLL over all positions)
  std::vector<double> stage_lambdas;
  std::vector<double> stage_nll;  // [0] is the top-ranked model alone
  bool early_stopped = false;
};

// Sum_k lambda_k s_k at one position, accumulated in ascending model index.
LogitVector fuse_logits(const CachedLogits& cache, std::span<const double> lambdas,
                        std::size_t position);
LogProbVector fuse_step(const CachedLogits& cache, const FusionWeights& weights,
                        std::size_t position);

// Mean NLL of the fused stream against `targets` (one target per position).
double fused_nll(const CachedLogits& cache, std::span<const double> lambdas,
                 std::span<const TokenId> targets);

// Mean NLL of a single cached model; exp() of it is that model's perplexity.
double model_nll(const CachedLogits& cache, std::size_t model, std::span<const TokenId> targets);

std::vector<std::size_t> rank_by_ppl(std::span<const double> ppls);

FusionWeights sim_weights(std::span<const double> ppls, double tau,
                          std::vector<std::string> names = {});

FusionWeights top1_select(std::span<const double> ppls, std::vector<std::string> names = {});

FusionWeights uniform_weights(std::size_t count, std::vector<std::string> names = {});

// Weight cascade of the greedy search: stage k multiplies every earlier
// weight by lambda_k and gives (1 - lambda_k) to the next model. Returns
// weights in rank order, zero past the last stage.
std::vector<double> cascade_weights(std::span<const double> stage_lambdas, std::size_t models);

FusionWeights greedy_optimize(const CachedLogits& cache, const TokenSequence& targets,
                              std::span<const double> ppls, const GridConfig& cfg = {},
                              SearchStats* stats = nullptr);

FusionWeights exhaustive_grid(const CachedLogits& cache, const TokenSequence& targets,
                              const GridConfig& cfg = {}, SearchStats* stats = nullptr);

// Indices of models with finite perplexity; the others are logged and dropped.
std::vector<std::size_t> finite_models(std::span<const double> ppls,
                                       std::span<const std::string> names = {});

}  // namespace packfuse
