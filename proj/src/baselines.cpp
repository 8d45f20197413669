#include "packfuse/baselines.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>

#include <json.hpp>

#include "packfuse/ppl.hpp"

namespace packfuse {

std::vector<std::string> tfidf_terms(std::string_view text) {
  std::vector<std::string> terms;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) terms.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) terms.push_back(std::move(cur));
  return terms;
}

double l2_norm(const TfidfEmbedding& v) {
  double s = 0.0;
  for (const auto& [_, x] : v) s += x * x;
  return std::sqrt(s);
}

double euclidean_distance(const TfidfEmbedding& a, const TfidfEmbedding& b) {
  double s = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      s += ia->second * ia->second;
      ++ia;
    } else if (ia == a.end() || ib->first < ia->first) {
      s += ib->second * ib->second;
      ++ib;
    } else {
      const double d = ia->second - ib->second;
      s += d * d;
      ++ia;
      ++ib;
    }
  }
  return std::sqrt(s);
}

namespace {

void normalize(TfidfEmbedding& v) {
  const double n = l2_norm(v);
  if (n == 0.0) {
    v.clear();
    return;
  }
  for (auto& [_, x] : v) x /= n;
}

}  // namespace

TfidfIndex::TfidfIndex(std::map<std::string, double> idf, std::size_t documents)
    : idf_(std::move(idf)), documents_(documents) {}

TfidfIndex TfidfIndex::fit(const std::vector<std::string>& documents) {
  std::map<std::string, std::size_t> df;
  for (const auto& doc : documents) {
    auto terms = tfidf_terms(doc);
    std::set<std::string> unique(terms.begin(), terms.end());
    for (const auto& t : unique) ++df[t];
  }
  const double n = static_cast<double>(documents.size());
  std::map<std::string, double> idf;
  for (const auto& [term, count] : df) {
    idf[term] = std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0;
  }
  return TfidfIndex(std::move(idf), documents.size());
}

double TfidfIndex::idf(const std::string& term) const {
  auto it = idf_.find(term);
  if (it != idf_.end()) return it->second;
  return std::log(1.0 + static_cast<double>(documents_)) + 1.0;
}

TfidfEmbedding TfidfIndex::embed(std::string_view text) const {
  TfidfEmbedding v;
  for (const auto& t : tfidf_terms(text)) v[t] += 1.0;
  for (auto& [term, x] : v) x *= idf(term);
  normalize(v);
  return v;
}

TfidfEmbedding centroid(const TfidfIndex& index, const std::vector<std::string>& documents) {
  TfidfEmbedding c;
  for (const auto& doc : documents) {
    for (const auto& [term, x] : index.embed(doc)) c[term] += x;
  }
  normalize(c);
  return c;
}

FusionWeights cbtm_weights(const TfidfEmbedding& prompt, std::span<const ExpertCluster> clusters) {
  if (clusters.empty()) throw error(errc::empty_cluster_set, "no expert clusters");
  FusionWeights w;
  std::vector<double> dist;
  for (const auto& c : clusters) {
    w.names.push_back(c.name);
    dist.push_back(euclidean_distance(prompt, c.centroid));
  }
  const double m = *std::min_element(dist.begin(), dist.end());
  double sum = 0.0;
  for (double d : dist) {
    w.lambdas.push_back(std::exp(-(d - m)));
    sum += w.lambdas.back();
  }
  for (double& l : w.lambdas) l /= sum;
  // Nearest cluster first.
  w.order = rank_by_ppl(dist);
  return w;
}

FusionWeights cbtm_weights(std::string_view prompt_text, const ClusterSet& set) {
  return set.weights(prompt_text);
}

ClusterSet build_clusters(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& corpora) {
  if (corpora.empty()) throw error(errc::empty_cluster_set, "no cluster corpora");
  std::vector<std::string> all;
  for (const auto& [_, docs] : corpora) all.insert(all.end(), docs.begin(), docs.end());
  ClusterSet set{TfidfIndex::fit(all), {}};
  for (const auto& [name, docs] : corpora) {
    set.clusters.push_back({name, centroid(set.index, docs)});
  }
  return set;
}

std::string clusters_to_json(const ClusterSet& set) {
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& c : set.clusters) {
    clusters.push_back({{"name", c.name}, {"terms", c.centroid}});
  }
  nlohmann::json j;
  j["clusters"] = std::move(clusters);
  j["idf"] = set.index.idf_table();
  j["documents"] = set.index.documents();
  return j.dump();
}

ClusterSet clusters_from_json(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    ClusterSet set;
    set.index = TfidfIndex(j.value("idf", std::map<std::string, double>{}),
                           j.value("documents", std::size_t{0}));
    for (const auto& c : j.at("clusters")) {
      set.clusters.push_back(
          {c.at("name").get<std::string>(), c.at("terms").get<std::map<std::string, double>>()});
    }
    if (set.clusters.empty()) throw error(errc::empty_cluster_set, "cluster document is empty");
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::invalid_argument, std::string("bad cluster document: ") + e.what());
  }
}

LogProbVector mix_probabilities(std::span<const LogProbVector> log_probs,
                                const FusionWeights& weights) {
  if (log_probs.empty() || log_probs.size() != weights.size()) {
    throw error(errc::dimension_mismatch, std::to_string(log_probs.size()) +
                                              " distributions for " +
                                              std::to_string(weights.size()) + " weights");
  }
  const std::size_t dim = log_probs.front().size();
  for (const auto& lp : log_probs) {
    if (lp.size() != dim) throw error(errc::dimension_mismatch, "distributions differ in length");
  }
  LogProbVector out(dim);
  for (std::size_t v = 0; v < dim; ++v) {
    // log-sum-exp over models of log(lambda_k) + log p_k(v); zero weights drop out.
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < log_probs.size(); ++k) {
      if (weights.lambdas[k] > 0.0) m = std::max(m, std::log(weights.lambdas[k]) + log_probs[k][v]);
    }
    if (!std::isfinite(m)) {
      out[v] = m;
      continue;
    }
    double s = 0.0;
    for (std::size_t k = 0; k < log_probs.size(); ++k) {
      if (weights.lambdas[k] > 0.0) {
        s += std::exp(std::log(weights.lambdas[k]) + log_probs[k][v] - m);
      }
    }
    out[v] = m + std::log(s);
  }
  return out;
}

LogProbVector dexperts_fuse(std::span<const double> base, std::span<const double> expert,
                            std::span<const double> anti, double lam) {
  if (base.size() != expert.size() || base.size() != anti.size()) {
    throw error(errc::dimension_mismatch, "base, expert and anti-expert logits differ in length");
  }
  std::vector<double> s(base.size());
  for (std::size_t v = 0; v < s.size(); ++v) s[v] = base[v] + lam * (expert[v] - anti[v]);
  return log_softmax(s);
}

}  // namespace packfuse
