#include <doctest.h>

#include <cmath>
#include <limits>

#include "packfuse/ppl.hpp"
#include "test_util.hpp"

using namespace packfuse;
using packfuse::testing::letters_vocab;

TEST_CASE("log_softmax matches the closed form") {
  std::vector<double> x{1, 2, 3};
  auto lp = log_softmax(x);
  CHECK(std::exp(lp[0]) == doctest::Approx(0.0900306).epsilon(1e-6));
  CHECK(std::exp(lp[1]) == doctest::Approx(0.2447285).epsilon(1e-6));
  CHECK(std::exp(lp[2]) == doctest::Approx(0.6652410).epsilon(1e-6));
  CHECK(log_softmax_at(x, 2) == doctest::Approx(lp[2]).epsilon(1e-15));
}

TEST_CASE("log_softmax is shift invariant and stable for large logits") {
  std::vector<double> x{1000, 1001, 1002};
  std::vector<double> y{0, 1, 2};
  auto a = log_softmax(x);
  auto b = log_softmax(y);
  for (int i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("non-finite logits are rejected") {
  std::vector<double> x{0, std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(log_softmax(x), error);
  std::vector<double> y{0, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(log_softmax_at(y, 0), error);
}

TEST_CASE("probability floor keeps NLL finite") {
  CHECK(floor_log_prob(-1e6) == doctest::Approx(std::log(kProbFloor)));
  CHECK(floor_log_prob(-1.0) == -1.0);
  std::vector<LogitVector> logits{{0, -2000}};
  auto r = sequence_nll(logits, {{1}, "v"});
  CHECK(std::isfinite(r.mean_nll));
  CHECK(r.mean_nll == doctest::Approx(-std::log(kProbFloor)));
}

TEST_CASE("uniform model has perplexity V") {
  std::vector<LogitVector> logits(7, LogitVector(4, 0.3));
  auto r = sequence_nll(logits, {{0, 1, 2, 3, 0, 1, 2}, "v"});
  CHECK(r.ppl == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(r.token_count == 7);
}

TEST_CASE("sequence_nll errors") {
  std::vector<LogitVector> logits(2, LogitVector(3, 0.0));
  try {
    sequence_nll(logits, {{0}, "v"});
    FAIL("expected LengthMismatch");
  } catch (const error& e) {
    CHECK(e.code() == errc::length_mismatch);
  }
  try {
    sequence_nll({}, {{}, "v"});
    FAIL("expected EmptySequence");
  } catch (const error& e) {
    CHECK(e.code() == errc::empty_sequence);
  }
}

TEST_CASE("prompt perplexity needs two tokens") {
  auto vocab = letters_vocab(3);
  TableModel m("t", vocab, {{0, 0, 0}});
  try {
    prompt_perplexity(m, {{0}, "letters"});
    FAIL("expected PromptTooShort");
  } catch (const error& e) {
    CHECK(e.code() == errc::prompt_too_short);
  }
  CHECK(prompt_perplexity(m, {{0, 2}, "letters"}).ppl == doctest::Approx(3.0));
}

TEST_CASE("report from log-probabilities") {
  std::vector<LogProbVector> lps{{std::log(0.5), std::log(0.5)}, {std::log(0.25), std::log(0.75)}};
  std::vector<TokenId> t{0, 1};
  auto r = sequence_nll_from_log_probs(lps, t);
  CHECK(r.mean_nll == doctest::Approx(-(std::log(0.5) + std::log(0.75)) / 2));
  CHECK_THROWS_AS(make_report(0.0, 0), error);
}
