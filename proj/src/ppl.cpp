#include "packfuse/ppl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace packfuse {

namespace {

double max_finite(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (!std::isfinite(x)) throw error(errc::non_finite_input, "logits must be finite");
    m = std::max(m, x);
  }
  return m;
}

double log_sum_exp(std::span<const double> v, double m) {
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - m);
  return m + std::log(sum);
}

}  // namespace

LogProbVector log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw error(errc::empty_sequence, "empty logit vector");
  const double lse = log_sum_exp(logits, max_finite(logits));
  LogProbVector out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

double log_softmax_at(std::span<const double> logits, TokenId target) {
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
    throw error(errc::dimension_mismatch, "target " + std::to_string(target) +
                                              " outside logit vector of length " +
                                              std::to_string(logits.size()));
  }
  const double lse = log_sum_exp(logits, max_finite(logits));
  return logits[static_cast<std::size_t>(target)] - lse;
}

double floor_log_prob(double log_prob) {
  static const double floor = std::log(kProbFloor);
  return std::max(log_prob, floor);
}

NllReport make_report(double total_nll, std::size_t count) {
  if (count == 0) throw error(errc::empty_sequence, "no tokens to average over");
  NllReport r;
  r.token_count = count;
  r.mean_nll = total_nll / static_cast<double>(count);
  r.ppl = std::exp(r.mean_nll);
  return r;
}

NllReport sequence_nll(const std::vector<LogitVector>& logits, const TokenSequence& targets) {
  if (logits.size() != targets.size()) {
    throw error(errc::length_mismatch, std::to_string(logits.size()) + " logit vectors for " +
                                           std::to_string(targets.size()) + " targets");
  }
  if (targets.empty()) throw error(errc::empty_sequence, "no targets");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    total -= floor_log_prob(log_softmax_at(logits[i], targets.ids[i]));
  }
  return make_report(total, targets.size());
}

NllReport sequence_nll_from_log_probs(const std::vector<LogProbVector>& log_probs,
                                      std::span<const TokenId> targets) {
  if (log_probs.size() != targets.size()) {
    throw error(errc::length_mismatch, "log-prob / target length mismatch");
  }
  if (targets.empty()) throw error(errc::empty_sequence, "no targets");
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    total -= floor_log_prob(log_probs[i].at(static_cast<std::size_t>(targets[i])));
  }
  return make_report(total, targets.size());
}

NllReport prompt_perplexity(const TokenScorer& scorer, const TokenSequence& prompt) {
  if (prompt.size() < 2) {
    throw error(errc::prompt_too_short, "prompt perplexity needs at least 2 tokens, got " +
                                            std::to_string(prompt.size()));
  }
  return sequence_nll(score_sequence(scorer, prompt), prompt);
}

}  // namespace packfuse
