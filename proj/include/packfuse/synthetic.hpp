#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "packfuse/ngram.hpp"

namespace packfuse::synthetic {

// A word-level Markov source with its own alphabet. Each word has a few
// preferred successors; the rest of the mass is spread uniformly.
struct Domain {
  std::string name;
  std::vector<std::string> words;
  std::vector<std::vector<std::size_t>> successors;
};

std::vector<Domain> make_domains(std::size_t count, std::uint64_t seed);

std::string sentence(const Domain& domain, std::mt19937_64& rng);

// Sentences from one domain until at least min_bytes long.
std::string document(const Domain& domain, std::mt19937_64& rng, std::size_t min_bytes);

// Every sentence draws its domain from `mixture`.
std::string mixed_document(std::span<const Domain> domains, std::span<const double> mixture,
                           std::mt19937_64& rng, std::size_t min_bytes);

// One byte-level n-gram expert per domain, trained on `docs_per_domain` documents.
// With own_share < 1 each training sentence comes from the expert's domain with
// that probability and from one of the other domains otherwise.
std::vector<NgramModel> train_experts(std::span<const Domain> domains, std::size_t docs_per_domain,
                                      std::size_t doc_bytes, int order, double k,
                                      std::uint64_t seed, double own_share = 1.0);

}  // namespace packfuse::synthetic
