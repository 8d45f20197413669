#include "packfuse/synthetic.hpp"

#include <algorithm>
#include <numeric>

namespace packfuse::synthetic {

namespace {

constexpr std::size_t kLettersPerDomain = 10;
constexpr std::size_t kWordsPerDomain = 40;
constexpr std::size_t kSuccessors = 3;
constexpr double kFollowProb = 0.85;

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

std::vector<Domain> make_domains(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Domain> domains;
  for (std::size_t d = 0; d < count; ++d) {
    std::string letters = "abcdefghijklmnopqrstuvwxyz";
    std::shuffle(letters.begin(), letters.end(), rng);
    letters.resize(kLettersPerDomain);

    Domain dom;
    dom.name = "domain_" + std::to_string(d);
    while (dom.words.size() < kWordsPerDomain) {
      const std::size_t len = 3 + uniform_index(rng, 5);
      std::string w;
      for (std::size_t i = 0; i < len; ++i) w.push_back(letters[uniform_index(rng, letters.size())]);
      if (std::find(dom.words.begin(), dom.words.end(), w) == dom.words.end()) {
        dom.words.push_back(std::move(w));
      }
    }
    for (std::size_t i = 0; i < dom.words.size(); ++i) {
      std::vector<std::size_t> next;
      for (std::size_t s = 0; s < kSuccessors; ++s) next.push_back(uniform_index(rng, dom.words.size()));
      dom.successors.push_back(std::move(next));
    }
    domains.push_back(std::move(dom));
  }
  return domains;
}

std::string sentence(const Domain& domain, std::mt19937_64& rng) {
  const std::size_t words = 5 + uniform_index(rng, 6);
  std::size_t w = uniform_index(rng, domain.words.size());
  std::string out;
  std::bernoulli_distribution follow(kFollowProb);
  for (std::size_t i = 0; i < words; ++i) {
    if (i > 0) {
      out.push_back(' ');
      const auto& next = domain.successors[w];
      w = follow(rng) ? next[uniform_index(rng, next.size())] : uniform_index(rng, domain.words.size());
    }
    out += domain.words[w];
  }
  out += ". ";
  return out;
}

std::string document(const Domain& domain, std::mt19937_64& rng, std::size_t min_bytes) {
  std::string out;
  while (out.size() < min_bytes) out += sentence(domain, rng);
  out.pop_back();
  return out;
}

std::string mixed_document(std::span<const Domain> domains, std::span<const double> mixture,
                           std::mt19937_64& rng, std::size_t min_bytes) {
  std::discrete_distribution<std::size_t> pick(mixture.begin(), mixture.end());
  std::string out;
  while (out.size() < min_bytes) out += sentence(domains[pick(rng)], rng);
  out.pop_back();
  return out;
}

std::vector<NgramModel> train_experts(std::span<const Domain> domains, std::size_t docs_per_domain,
                                      std::size_t doc_bytes, int order, double k,
                                      std::uint64_t seed, double own_share) {
  std::vector<NgramModel> experts;
  ByteTokenizer tok;
  const double others = domains.size() > 1 ? static_cast<double>(domains.size() - 1) : 1.0;
  for (std::size_t d = 0; d < domains.size(); ++d) {
    std::mt19937_64 rng(seed * 1000003ULL + d);
    std::vector<double> mixture(domains.size(), (1.0 - own_share) / others);
    mixture[d] = own_share;
    std::vector<std::vector<TokenId>> docs;
    for (std::size_t i = 0; i < docs_per_domain; ++i) {
      const auto text = own_share >= 1.0 ? document(domains[d], rng, doc_bytes)
                                         : mixed_document(domains, mixture, rng, doc_bytes);
      docs.push_back(tok.encode(text).ids);
    }
    experts.push_back(
        train_ngram("expert_" + std::to_string(d), byte_vocabulary(), docs, order, k));
  }
  return experts;
}

}  // namespace packfuse::synthetic
