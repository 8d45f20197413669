#pragma once

#include <span>
#include <vector>

#include "packfuse/scorer.hpp"

namespace packfuse {

struct NllReport {
  double mean_nll = 0.0;  // nats per token
  double ppl = 1.0;       // exp(mean_nll)
  std::size_t token_count = 0;
};

// Per-token probabilities are floored here before the log.
inline constexpr double kProbFloor = 1e-300;

LogProbVector log_softmax(std::span<const double> logits);

// log of the softmax entry for `target` only; avoids materialising the vector.
double log_softmax_at(std::span<const double> logits, TokenId target);

// Clamps a log-probability at log(kProbFloor).
double floor_log_prob(double log_prob);

NllReport make_report(double total_nll, std::size_t count);

NllReport sequence_nll(const std::vector<LogitVector>& logits, const TokenSequence& targets);

// Log-probabilities instead of logits (used for probability-space mixtures).
NllReport sequence_nll_from_log_probs(const std::vector<LogProbVector>& log_probs,
                                      std::span<const TokenId> targets);

// Requires at least 2 prompt tokens (prompt_too_short otherwise).
NllReport prompt_perplexity(const TokenScorer& scorer, const TokenSequence& prompt);

}  // namespace packfuse
