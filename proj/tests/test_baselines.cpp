#include <doctest.h>

#include <cmath>
#include <random>

#include "packfuse/baselines.hpp"
#include "packfuse/ppl.hpp"
#include "test_util.hpp"

using namespace packfuse;

namespace {

TfidfEmbedding unit(const std::string& term) { return {{term, 1.0}}; }

}  // namespace

TEST_CASE("tf-idf terms and idf") {
  CHECK(tfidf_terms("The  cat\tSAT\n") == std::vector<std::string>{"the", "cat", "sat"});
  auto index = TfidfIndex::fit({"a b", "a c", "a"});
  CHECK(index.documents() == 3);
  CHECK(index.idf("a") == doctest::Approx(std::log(4.0 / 4.0) + 1.0));
  CHECK(index.idf("b") == doctest::Approx(std::log(4.0 / 2.0) + 1.0));
  CHECK(index.idf("zzz") == doctest::Approx(std::log(4.0) + 1.0));
}

TEST_CASE("embeddings are L2-normalised") {
  auto index = TfidfIndex::fit({"alpha beta", "beta gamma", "gamma delta"});
  auto e = index.embed("alpha beta beta unknown");
  CHECK(l2_norm(e) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(index.embed("   ").empty());
  // Repeating the text scales term counts uniformly and leaves the embedding unchanged.
  auto twice = index.embed("alpha beta beta unknown alpha beta beta unknown");
  for (const auto& [term, w] : e) CHECK(twice.at(term) == doctest::Approx(w).epsilon(1e-12));
}

TEST_CASE("cbtm weights") {
  std::vector<ExpertCluster> clusters{{"x", unit("x")}, {"y", unit("y")}, {"z", unit("z")}};
  auto w = cbtm_weights(unit("x"), clusters);
  const double expected = 1.0 / (1.0 + 2.0 * std::exp(-std::sqrt(2.0)));
  CHECK(w.lambdas[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(w.lambdas[0] == doctest::Approx(0.672841798375977).epsilon(1e-12));
  CHECK(w.on_simplex());
  CHECK(w.order.front() == 0);

  TfidfEmbedding mid{{"x", 1.0 / std::sqrt(3.0)}, {"y", 1.0 / std::sqrt(3.0)}, {"z", 1.0 / std::sqrt(3.0)}};
  for (double l : cbtm_weights(mid, clusters).lambdas) CHECK(l == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  try {
    cbtm_weights(unit("x"), std::vector<ExpertCluster>{});
    FAIL("expected EmptyClusterSet");
  } catch (const error& e) {
    CHECK(e.code() == errc::empty_cluster_set);
  }
}

TEST_CASE("clusters from corpora pick the matching domain and survive JSON") {
  auto set = build_clusters({{"animals", {"cat dog cow", "dog horse cat"}},
                             {"tools", {"hammer saw drill", "drill wrench saw"}}});
  auto w = set.weights("a dog and a cat");
  CHECK(w.lambda("animals") > w.lambda("tools"));
  auto back = clusters_from_json(clusters_to_json(set));
  auto w2 = back.weights("a dog and a cat");
  CHECK(w2.lambdas == w.lambdas);
  CHECK(w2.names == w.names);
  CHECK_THROWS_AS(clusters_from_json("[]"), error);
}

TEST_CASE("probability mixture examples") {
  std::vector<LogProbVector> lps{{std::log(0.9), std::log(0.1)}, {std::log(0.1), std::log(0.9)}};
  FusionWeights half{{"a", "b"}, {0.5, 0.5}, {0, 1}};
  auto m = mix_probabilities(lps, half);
  CHECK(std::exp(m[0]) == doctest::Approx(0.5).epsilon(1e-12));

  FusionWeights first{{"a", "b"}, {1.0, 0.0}, {0, 1}};
  auto f = mix_probabilities(lps, first);
  CHECK(f[0] == doctest::Approx(lps[0][0]).epsilon(1e-15));
  CHECK(f[1] == doctest::Approx(lps[0][1]).epsilon(1e-15));

  FusionWeights skew{{"a", "b"}, {0.75, 0.25}, {0, 1}};
  auto mix = mix_probabilities(lps, skew);
  CHECK(std::exp(mix[0]) == doctest::Approx(0.7).epsilon(1e-12));
  // Logit-space fusion of the same inputs.
  std::vector<double> fused{0.75 * lps[0][0] + 0.25 * lps[1][0], 0.75 * lps[0][1] + 0.25 * lps[1][1]};
  const double p0 = std::exp(log_softmax(fused)[0]);
  CHECK(p0 == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(std::abs(p0 - std::exp(mix[0])) > 0.01);

  std::vector<LogProbVector> same{lps[0], lps[0]};
  auto s = mix_probabilities(same, skew);
  CHECK(s[0] == doctest::Approx(lps[0][0]).epsilon(1e-12));

  std::vector<LogProbVector> ragged{{0.0}, {0.0, 0.0}};
  CHECK_THROWS_AS(mix_probabilities(ragged, half), error);
}

TEST_CASE("dexperts arithmetic") {
  std::mt19937_64 rng(4);
  auto v = packfuse::testing::random_logits(rng, 3, 6);
  const auto& base = v[0];
  const auto& expert = v[1];
  const auto& anti = v[2];
  auto ref = log_softmax(base);
  auto cancel = dexperts_fuse(base, expert, expert);
  auto zero = dexperts_fuse(base, expert, anti, 0.0);
  for (int i = 0; i < 6; ++i) {
    CHECK(cancel[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    CHECK(zero[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  auto steer = dexperts_fuse(base, expert, base);
  auto ex = log_softmax(expert);
  for (int i = 0; i < 6; ++i) CHECK(steer[i] == doctest::Approx(ex[i]).epsilon(1e-12));

  auto full = dexperts_fuse(base, expert, anti, 1.0);
  std::vector<double> direct(6);
  for (int i = 0; i < 6; ++i) direct[i] = base[i] + (expert[i] - anti[i]);
  auto oracle = log_softmax(direct);
  for (int i = 0; i < 6; ++i) CHECK(full[i] == doctest::Approx(oracle[i]).epsilon(1e-12));

  std::vector<double> shorter{0.0};
  CHECK_THROWS_AS(dexperts_fuse(base, expert, shorter), error);
}
