#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "packfuse/fusion.hpp"
#include "packfuse/scorer.hpp"

namespace packfuse::testing {

inline VocabPtr letters_vocab(std::size_t size, const std::string& name = "letters") {
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < size; ++i) tokens.push_back(std::string(1, static_cast<char>('a' + i)));
  return std::make_shared<const Vocabulary>(name, tokens);
}

inline std::vector<LogitVector> random_logits(std::mt19937_64& rng, std::size_t positions,
                                              std::size_t dim, double scale = 2.0) {
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<LogitVector> out(positions, LogitVector(dim));
  for (auto& v : out) {
    for (double& x : v) x = nd(rng);
  }
  return out;
}

inline TokenSequence random_targets(std::mt19937_64& rng, std::size_t positions, std::size_t dim,
                                    const std::string& vocab_id = "letters") {
  std::uniform_int_distribution<TokenId> ud(0, static_cast<TokenId>(dim - 1));
  TokenSequence seq{{}, vocab_id};
  for (std::size_t i = 0; i < positions; ++i) seq.ids.push_back(ud(rng));
  return seq;
}

// Random cache plus targets; K models over `positions` x `dim`.
struct Fixture {
  CachedLogits cache;
  TokenSequence targets;
  std::vector<double> ppls;
};

inline Fixture random_fixture(std::mt19937_64& rng, std::size_t models, std::size_t positions,
                              std::size_t dim) {
  std::vector<std::vector<LogitVector>> per_model;
  for (std::size_t k = 0; k < models; ++k) per_model.push_back(random_logits(rng, positions, dim));
  Fixture f{CachedLogits::from_vectors(per_model), random_targets(rng, positions, dim), {}};
  for (std::size_t k = 0; k < models; ++k) f.ppls.push_back(std::exp(model_nll(f.cache, k, f.targets.ids)));
  return f;
}

}  // namespace packfuse::testing
