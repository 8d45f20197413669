#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "packfuse/ngram.hpp"
#include "packfuse/ppl.hpp"
#include "test_util.hpp"

using namespace packfuse;
using packfuse::testing::letters_vocab;

TEST_CASE("unigram add-one probabilities") {
  auto vocab = letters_vocab(2);
  auto m = train_ngram("u", vocab, std::vector<TokenId>{0, 0, 1}, 1, 1.0);
  CHECK(m.prob({}, 0) == doctest::Approx(0.6));
  CHECK(m.prob({}, 1) == doctest::Approx(0.4));
  auto report = prompt_perplexity(m, {{0, 1}, "letters"});
  CHECK(report.ppl == doctest::Approx(1.0 / std::sqrt(0.24)).epsilon(1e-12));
  CHECK(report.token_count == 2);
}

TEST_CASE("bigram contexts are begin-padded") {
  auto vocab = letters_vocab(3);
  auto m = train_ngram("b", vocab, std::vector<TokenId>{0, 1, 0, 1}, 2, 0.5);
  const std::vector<TokenId> bos{NgramModel::kBosContext};
  const std::vector<TokenId> after_a{0};
  // After BOS only "a" was seen: (1 + .5) / (1 + 1.5).
  CHECK(m.prob(bos, 0) == doctest::Approx(1.5 / 2.5));
  CHECK(m.prob(after_a, 1) == doctest::Approx(2.5 / 3.5));
  // Unseen context is uniform.
  const std::vector<TokenId> after_c{2};
  CHECK(m.prob(after_c, 0) == doctest::Approx(1.0 / 3.0));
  auto logits = m.logits_for(after_a);
  auto lp = log_softmax(logits);
  for (TokenId t = 0; t < 3; ++t) CHECK(std::exp(lp[t]) == doctest::Approx(m.prob(after_a, t)));
}

TEST_CASE("logits are normalised log-probabilities") {
  auto vocab = letters_vocab(4);
  auto m = train_ngram("t", vocab, std::vector<std::vector<TokenId>>{{0, 1, 2, 3, 2, 1}, {3, 3}}, 3);
  auto out = m.score(std::vector<TokenId>{0, 1, 2, 3});
  for (const auto& v : out) {
    double sum = 0;
    for (double x : v) sum += std::exp(x);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("training errors") {
  auto vocab = letters_vocab(2);
  CHECK_THROWS_AS(train_ngram("e", vocab, std::vector<TokenId>{}, 2), error);
  CHECK_THROWS_AS(train_ngram("e", vocab, std::vector<TokenId>{5}, 2), error);
  CHECK_THROWS_AS(NgramModel("e", vocab, 0, 1.0), error);
  CHECK_THROWS_AS(NgramModel("e", vocab, 2, 0.0), error);
}

TEST_CASE("JSON round trip scores identically") {
  auto vocab = byte_vocabulary();
  ByteTokenizer tok;
  auto m = train_ngram("bytes", vocab, tok.encode("the cat sat on the mat").ids, 3, 0.1);
  auto back = NgramModel::from_json(m.to_json());
  auto seq = tok.encode("the mat sat");
  CHECK(back.score(seq.ids) == m.score(seq.ids));
  CHECK(back.name() == "bytes");
  CHECK(back.order() == 3);
  CHECK(m.to_json() == back.to_json());

  const auto path = (std::filesystem::temp_directory_path() / "packfuse_ngram_test.json").string();
  save_ngram(m, path);
  CHECK(load_ngram(path).score(seq.ids) == m.score(seq.ids));
  std::filesystem::remove(path);
}
