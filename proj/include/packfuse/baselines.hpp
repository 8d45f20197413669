#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "packfuse/fusion.hpp"

namespace packfuse {

// Sparse L2-normalised tf-idf vector (empty for text without terms).
using TfidfEmbedding = std::map<std::string, double>;

struct ExpertCluster {
  std::string name;
  TfidfEmbedding centroid;
};

// Lowercase, whitespace-split terms.
std::vector<std::string> tfidf_terms(std::string_view text);

double l2_norm(const TfidfEmbedding& v);
double euclidean_distance(const TfidfEmbedding& a, const TfidfEmbedding& b);

// idf(t) = ln((1 + N) / (1 + df(t))) + 1 over a document collection; terms
// unseen during fitting get the N-document maximum ln(1 + N) + 1.
class TfidfIndex {
 public:
  TfidfIndex() = default;
  explicit TfidfIndex(std::map<std::string, double> idf, std::size_t documents);

  static TfidfIndex fit(const std::vector<std::string>& documents);

  TfidfEmbedding embed(std::string_view text) const;
  double idf(const std::string& term) const;
  const std::map<std::string, double>& idf_table() const { return idf_; }
  std::size_t documents() const { return documents_; }

 private:
  std::map<std::string, double> idf_;
  std::size_t documents_ = 0;
};

// Normalised mean of the member document embeddings.
TfidfEmbedding centroid(const TfidfIndex& index, const std::vector<std::string>& documents);

// softmax(-d(h_prompt, h_k)); weights mix probabilities, not logits.
FusionWeights cbtm_weights(const TfidfEmbedding& prompt, std::span<const ExpertCluster> clusters);

struct ClusterSet {
  TfidfIndex index;
  std::vector<ExpertCluster> clusters;

  FusionWeights weights(std::string_view prompt_text) const {
    return cbtm_weights(index.embed(prompt_text), clusters);
  }
};

FusionWeights cbtm_weights(std::string_view prompt_text, const ClusterSet& set);

// Builds one cluster per (name, documents) and a shared idf over all documents.
ClusterSet build_clusters(const std::vector<std::pair<std::string, std::vector<std::string>>>& corpora);

// {clusters: [{name, terms: {term: weight}}], idf: {term: value}, documents: N}
std::string clusters_to_json(const ClusterSet& set);
ClusterSet clusters_from_json(std::string_view text);

// log(sum_k lambda_k p_k) per vocabulary entry.
LogProbVector mix_probabilities(std::span<const LogProbVector> log_probs,
                                const FusionWeights& weights);

// log_softmax(base + lam (expert - anti)).
LogProbVector dexperts_fuse(std::span<const double> base, std::span<const double> expert,
                            std::span<const double> anti, double lam = 1.0);

}  // namespace packfuse
