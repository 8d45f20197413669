#include "packfuse/fusion.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "packfuse/ppl.hpp"

namespace packfuse {

namespace {

// NLL differences at or below this count as ties.
constexpr double kTieTolerance = 1e-12;

std::vector<std::string> default_names(std::vector<std::string> names, std::size_t count) {
  if (names.empty()) {
    for (std::size_t k = 0; k < count; ++k) names.push_back("model_" + std::to_string(k));
  }
  if (names.size() != count) {
    throw error(errc::dimension_mismatch, std::to_string(names.size()) + " names for " +
                                              std::to_string(count) + " models");
  }
  return names;
}

std::vector<std::size_t> identity_order(std::size_t count) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  return order;
}

void check_targets(const CachedLogits& cache, std::span<const TokenId> targets) {
  if (cache.models() == 0) throw error(errc::invalid_argument, "no models in the logit cache");
  if (targets.empty() || cache.positions() == 0) {
    throw error(errc::prompt_too_short, "at least one predicted token is required");
  }
  if (targets.size() != cache.positions()) {
    throw error(errc::dimension_mismatch, std::to_string(targets.size()) + " targets for " +
                                              std::to_string(cache.positions()) +
                                              " cached positions");
  }
}

// Mean fused NLL with the rows given in accumulation order. Shared by the
// greedy and exhaustive searches so equal mixtures give bit-equal losses.
double mixture_nll(std::span<const std::span<const double>> rows, std::span<const double> weights,
                   std::size_t dim, std::span<const TokenId> targets, std::vector<double>& scratch) {
  scratch.resize(dim);
  double total = 0.0;
  for (std::size_t pos = 0; pos < targets.size(); ++pos) {
    const std::size_t off = pos * dim;
    for (std::size_t v = 0; v < dim; ++v) {
      double acc = weights[0] * rows[0][off + v];
      for (std::size_t j = 1; j < rows.size(); ++j) acc += weights[j] * rows[j][off + v];
      scratch[v] = acc;
    }
    total -= floor_log_prob(log_softmax_at(scratch, targets[pos]));
  }
  return total / static_cast<double>(targets.size());
}

}  // namespace

double FusionWeights::lambda(std::string_view name) const {
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (names[k] == name) return lambdas.at(k);
  }
  throw error(errc::invalid_argument, "no weight for model '" + std::string(name) + "'");
}

bool FusionWeights::on_simplex(double tol) const {
  if (lambdas.empty()) return false;
  double sum = 0.0;
  for (double l : lambdas) {
    if (!(l >= 0.0 && l <= 1.0)) return false;
    sum += l;
  }
  return std::abs(sum - 1.0) <= tol;
}

std::size_t grid_intervals(const GridConfig& cfg) {
  if (!(cfg.step > 0.0 && cfg.step <= 0.5)) {
    throw error(errc::invalid_grid, "grid step must lie in (0, 0.5]");
  }
  const double inv = 1.0 / cfg.step;
  const double rounded = std::round(inv);
  if (std::abs(inv - rounded) > 1e-9 * rounded) {
    throw error(errc::invalid_grid, "1/step must be an integer");
  }
  return static_cast<std::size_t>(rounded);
}

std::uint64_t simplex_grid_size(std::size_t intervals, std::size_t models) {
  if (models == 0) return 0;
  // C(n + K - 1, K - 1), built incrementally so every partial product is exact.
  std::uint64_t c = 1;
  for (std::size_t i = 1; i < models; ++i) c = c * (intervals + i) / i;
  return c;
}

void CachedLogits::add_model(std::string name, const std::vector<LogitVector>& logits) {
  if (logits.size() < positions_) {
    throw error(errc::dimension_mismatch, "model '" + name + "' has " +
                                              std::to_string(logits.size()) +
                                              " positions, cache needs " +
                                              std::to_string(positions_));
  }
  std::vector<double> flat;
  flat.reserve(positions_ * dim_);
  for (std::size_t p = 0; p < positions_; ++p) {
    if (logits[p].size() != dim_) {
      throw error(errc::dimension_mismatch, "model '" + name + "' has dimension " +
                                                std::to_string(logits[p].size()) + ", expected " +
                                                std::to_string(dim_));
    }
    flat.insert(flat.end(), logits[p].begin(), logits[p].end());
  }
  names_.push_back(std::move(name));
  data_.push_back(std::move(flat));
}

CachedLogits CachedLogits::from_vectors(const std::vector<std::vector<LogitVector>>& per_model,
                                        std::vector<std::string> names) {
  if (per_model.empty() || per_model.front().empty()) {
    throw error(errc::invalid_argument, "empty logit cache");
  }
  names = default_names(std::move(names), per_model.size());
  CachedLogits cache(per_model.front().size(), per_model.front().front().size());
  for (std::size_t k = 0; k < per_model.size(); ++k) {
    if (per_model[k].size() != cache.positions_) {
      throw error(errc::dimension_mismatch, "models disagree on position count");
    }
    cache.add_model(names[k], per_model[k]);
  }
  return cache;
}

std::span<const double> CachedLogits::at(std::size_t model, std::size_t position) const {
  if (position >= positions_) throw error(errc::dimension_mismatch, "position out of range");
  return std::span<const double>(data_.at(model)).subspan(position * dim_, dim_);
}

LogitVector fuse_logits(const CachedLogits& cache, std::span<const double> lambdas,
                        std::size_t position) {
  if (lambdas.size() != cache.models()) {
    throw error(errc::dimension_mismatch, std::to_string(lambdas.size()) + " weights for " +
                                              std::to_string(cache.models()) + " models");
  }
  LogitVector out(cache.dim(), 0.0);
  for (std::size_t k = 0; k < cache.models(); ++k) {
    auto row = cache.at(k, position);
    for (std::size_t v = 0; v < out.size(); ++v) out[v] += lambdas[k] * row[v];
  }
  return out;
}

LogProbVector fuse_step(const CachedLogits& cache, const FusionWeights& weights,
                        std::size_t position) {
  return log_softmax(fuse_logits(cache, weights.lambdas, position));
}

double fused_nll(const CachedLogits& cache, std::span<const double> lambdas,
                 std::span<const TokenId> targets) {
  check_targets(cache, targets);
  double total = 0.0;
  for (std::size_t pos = 0; pos < targets.size(); ++pos) {
    total -= floor_log_prob(log_softmax_at(fuse_logits(cache, lambdas, pos), targets[pos]));
  }
  return total / static_cast<double>(targets.size());
}

double model_nll(const CachedLogits& cache, std::size_t model, std::span<const TokenId> targets) {
  check_targets(cache, targets);
  double total = 0.0;
  for (std::size_t pos = 0; pos < targets.size(); ++pos) {
    total -= floor_log_prob(log_softmax_at(cache.at(model, pos), targets[pos]));
  }
  return total / static_cast<double>(targets.size());
}

std::vector<std::size_t> rank_by_ppl(std::span<const double> ppls) {
  auto order = identity_order(ppls.size());
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ppls[a] < ppls[b]; });
  return order;
}

FusionWeights sim_weights(std::span<const double> ppls, double tau, std::vector<std::string> names) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw error(errc::invalid_tau, "temperature must be positive and finite");
  }
  if (ppls.empty()) throw error(errc::invalid_argument, "no perplexities");
  std::vector<double> z(ppls.size());
  for (std::size_t k = 0; k < ppls.size(); ++k) {
    if (!std::isfinite(ppls[k]) || ppls[k] < 1.0 - 1e-9) {
      throw error(errc::non_finite_input, "perplexity must be finite and >= 1");
    }
    z[k] = -std::log(ppls[k]) / tau;
  }
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& x : z) {
    x = std::exp(x - m);
    sum += x;
  }
  for (double& x : z) x /= sum;
  return {default_names(std::move(names), ppls.size()), std::move(z), rank_by_ppl(ppls)};
}

FusionWeights top1_select(std::span<const double> ppls, std::vector<std::string> names) {
  if (ppls.empty()) throw error(errc::invalid_argument, "no perplexities");
  auto order = rank_by_ppl(ppls);
  std::vector<double> lambdas(ppls.size(), 0.0);
  lambdas[order.front()] = 1.0;
  return {default_names(std::move(names), ppls.size()), std::move(lambdas), std::move(order)};
}

FusionWeights uniform_weights(std::size_t count, std::vector<std::string> names) {
  if (count == 0) throw error(errc::invalid_argument, "uniform weights over zero models");
  return {default_names(std::move(names), count),
          std::vector<double>(count, 1.0 / static_cast<double>(count)), identity_order(count)};
}

std::vector<double> cascade_weights(std::span<const double> stage_lambdas, std::size_t models) {
  if (models == 0) throw error(errc::invalid_argument, "cascade over zero models");
  if (stage_lambdas.size() + 1 > models) {
    throw error(errc::dimension_mismatch, "more greedy stages than model pairs");
  }
  std::vector<double> w(models, 0.0);
  w[0] = 1.0;
  for (std::size_t k = 0; k < stage_lambdas.size(); ++k) {
    for (std::size_t j = 0; j <= k; ++j) w[j] *= stage_lambdas[k];
    w[k + 1] = 1.0 - stage_lambdas[k];
  }
  return w;
}

FusionWeights greedy_optimize(const CachedLogits& cache, const TokenSequence& targets,
                              std::span<const double> ppls, const GridConfig& cfg,
                              SearchStats* stats) {
  check_targets(cache, targets.ids);
  if (ppls.size() != cache.models()) {
    throw error(errc::dimension_mismatch, std::to_string(ppls.size()) + " perplexities for " +
                                              std::to_string(cache.models()) + " models");
  }
  const std::size_t n = grid_intervals(cfg);
  const std::size_t models = cache.models();
  const std::size_t dim = cache.dim();
  const auto order = rank_by_ppl(ppls);
  const std::span<const TokenId> ids = targets.ids;

  SearchStats local;
  SearchStats& st = stats ? *stats : local;
  st = SearchStats{};

  // Accumulated logits of the mixture so far, starting from the best model.
  auto first = cache.model_data(order[0]);
  std::vector<double> acc(first.begin(), first.end());
  std::vector<double> scratch;
  std::vector<double> rank_weights(models, 0.0);
  rank_weights[0] = 1.0;
  {
    const std::array<std::span<const double>, 1> rows{std::span<const double>(acc)};
    const std::array<double, 1> one{1.0};
    st.stage_nll.push_back(mixture_nll(rows, one, dim, ids, scratch));
  }

  for (std::size_t k = 1; k < models; ++k) {
    const auto next = cache.model_data(order[k]);
    const std::array<std::span<const double>, 2> rows{std::span<const double>(acc), next};
    std::size_t best_i = n;
    double best_nll = std::numeric_limits<double>::infinity();
    // Descending lambda: only a strictly better loss displaces a larger lambda.
    for (std::size_t i = n + 1; i-- > 0;) {
      const std::array<double, 2> w{static_cast<double>(i) / static_cast<double>(n),
                                    static_cast<double>(n - i) / static_cast<double>(n)};
      const double nll = mixture_nll(rows, w, dim, ids, scratch);
      ++st.nll_evaluations;
      if (nll < best_nll - kTieTolerance) {
        best_nll = nll;
        best_i = i;
      }
    }
    const double lam = static_cast<double>(best_i) / static_cast<double>(n);
    const double rest = static_cast<double>(n - best_i) / static_cast<double>(n);
    for (std::size_t x = 0; x < acc.size(); ++x) acc[x] = lam * acc[x] + rest * next[x];
    for (std::size_t j = 0; j < k; ++j) rank_weights[j] *= lam;
    rank_weights[k] = rest;
    st.stage_lambdas.push_back(lam);
    st.stage_nll.push_back(best_nll);

    if (cfg.early_stop && best_i == n) {
      // The new model contributes nothing; later (worse-ranked) models are skipped.
      st.early_stopped = k + 1 < models;
      break;
    }
  }

  FusionWeights out;
  out.names = cache.names();
  out.lambdas.assign(models, 0.0);
  for (std::size_t r = 0; r < models; ++r) out.lambdas[order[r]] = rank_weights[r];
  out.order = order;
  return out;
}

FusionWeights exhaustive_grid(const CachedLogits& cache, const TokenSequence& targets,
                              const GridConfig& cfg, SearchStats* stats) {
  check_targets(cache, targets.ids);
  const std::size_t models = cache.models();
  if (models > cfg.max_exhaustive_models) {
    throw error(errc::too_many_models, "exhaustive grid search over " + std::to_string(models) +
                                           " models exceeds the limit of " +
                                           std::to_string(cfg.max_exhaustive_models));
  }
  const std::size_t n = grid_intervals(cfg);
  const std::span<const TokenId> ids = targets.ids;

  std::vector<double> ppls(models);
  for (std::size_t k = 0; k < models; ++k) ppls[k] = std::exp(model_nll(cache, k, ids));
  const auto order = rank_by_ppl(ppls);

  std::vector<std::span<const double>> rows;
  for (std::size_t r = 0; r < models; ++r) rows.push_back(cache.model_data(order[r]));

  SearchStats local;
  SearchStats& st = stats ? *stats : local;
  st = SearchStats{};

  // Grid points as integer counts per rank, enumerated in lexicographically
  // descending order so the first of equal losses favours better-ranked models.
  std::vector<std::size_t> counts(models, 0);
  std::vector<std::size_t> best_counts;
  double best_nll = std::numeric_limits<double>::infinity();
  std::vector<double> w(models);
  std::vector<double> scratch;

  auto visit = [&](auto&& self, std::size_t r, std::size_t remaining) -> void {
    if (r + 1 == models) {
      counts[r] = remaining;
      for (std::size_t j = 0; j < models; ++j) {
        w[j] = static_cast<double>(counts[j]) / static_cast<double>(n);
      }
      const double nll = mixture_nll(rows, w, cache.dim(), ids, scratch);
      ++st.nll_evaluations;
      if (nll < best_nll - kTieTolerance) {
        best_nll = nll;
        best_counts = counts;
      }
      return;
    }
    for (std::size_t c = remaining + 1; c-- > 0;) {
      counts[r] = c;
      self(self, r + 1, remaining - c);
    }
  };
  visit(visit, 0, n);
  st.stage_nll.push_back(best_nll);

  FusionWeights out;
  out.names = cache.names();
  out.lambdas.assign(models, 0.0);
  for (std::size_t r = 0; r < models; ++r) {
    out.lambdas[order[r]] = static_cast<double>(best_counts[r]) / static_cast<double>(n);
  }
  out.order = order;
  return out;
}

std::vector<std::size_t> finite_models(std::span<const double> ppls,
                                       std::span<const std::string> names) {
  std::vector<std::size_t> kept;
  for (std::size_t k = 0; k < ppls.size(); ++k) {
    if (std::isfinite(ppls[k])) {
      kept.push_back(k);
    } else {
      spdlog::warn("dropping model {}: prompt perplexity is {}",
                   k < names.size() ? names[k] : std::to_string(k), ppls[k]);
    }
  }
  return kept;
}

}  // namespace packfuse
