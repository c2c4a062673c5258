#include <doctest.h>

#include <cmath>
#include <limits>

#include "mtdl/stage_model.hpp"
#include "support.hpp"

using namespace mtdl;

TEST_CASE("stage alphabet") {
  StageAlphabet a;
  CHECK(a.size() == 6);
  CHECK(a.name(1) == "tStart");
  CHECK(a.name(6) == "t4+");
  CHECK(a.find("t3") == 4);
  CHECK_FALSE(a.find("t5").has_value());
  CHECK_THROWS_AS(StageAlphabet({"a"}), Error);
  CHECK_THROWS_AS(StageAlphabet({"a", "b", "a"}), Error);
  CHECK_THROWS_AS(a.name(0), Error);
}

TEST_CASE("context window is 2*tau+1") {
  for (int tau = 0; tau < 8; ++tau) CHECK(ContextConfig{tau}.window() == 2 * tau + 1);
}

TEST_CASE("validate_probability_matrix") {
  SUBCASE("one-hot column at stage 3 is valid") {
    ProbabilityMatrix m({{0, 0, 1, 0, 0, 0}});
    CHECK_FALSE(validate_probability_matrix(m).has_value());
  }
  SUBCASE("sum 1.1 is BadSum at column 1") {
    ProbabilityMatrix m({{0.5, 0.6, 0, 0, 0, 0}});
    auto issue = validate_probability_matrix(m);
    REQUIRE(issue.has_value());
    CHECK(issue->code == ErrorCode::BadSum);
    CHECK(issue->column == 0);
  }
  SUBCASE("negative entry") {
    ProbabilityMatrix m({{0.5, 0.5, 0, 0, 0, 0}, {0.6, 0.5, -0.1, 0, 0, 0}});
    auto issue = validate_probability_matrix(m);
    REQUIRE(issue.has_value());
    CHECK(issue->code == ErrorCode::NegativeEntry);
    CHECK(issue->column == 1);
    CHECK(issue->entry == 3);
  }
  SUBCASE("non-finite entry") {
    ProbabilityMatrix m({{std::numeric_limits<double>::quiet_NaN(), 1.0}});
    auto issue = validate_probability_matrix(m);
    REQUIRE(issue.has_value());
    CHECK(issue->code == ErrorCode::NonFinite);
    CHECK(issue->entry == 1);
  }
  SUBCASE("first offending column is reported") {
    ProbabilityMatrix m({{0.5, 0.5}, {0.2, 0.2}, {0.9, 0.9}});
    CHECK(validate_probability_matrix(m)->column == 1);
  }
  SUBCASE("tolerance 1e-6") {
    CHECK_FALSE(validate_probability_vector(std::vector{0.5, 0.5 + 9e-7}).has_value());
    CHECK(validate_probability_vector(std::vector{0.5, 0.5 + 2e-6}).has_value());
  }
  SUBCASE("empty matrix is rejected") {
    CHECK(validate_probability_matrix(ProbabilityMatrix{}).has_value());
  }
  SUBCASE("require_valid throws with the issue code") {
    ProbabilityMatrix m({{0.5, 0.6}});
    try {
      require_valid(m);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadSum);
    }
  }
}

TEST_CASE("is_monotone") {
  CHECK(is_monotone(StageSequence{1, 1, 2, 2, 6}));
  CHECK_FALSE(is_monotone(StageSequence{1, 3, 2}));
  CHECK(is_monotone(StageSequence{4, 4, 4}));
  CHECK(is_monotone(StageSequence{}));
}

TEST_CASE("is_monotone is invariant under strictly increasing relabeling") {
  testing::Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const int L = testing::uniform_int(rng, 2, 6);
    auto s = trial % 2 ? testing::random_monotone(rng, 10, L) : testing::random_sequence(rng, 10, L);
    // map l -> 3l + 1 is strictly increasing
    StageSequence relabeled(s);
    for (auto& v : relabeled) v = 3 * v + 1;
    CHECK(is_monotone(s) == is_monotone(relabeled));
  }
}

TEST_CASE("argmax_sequence") {
  CHECK(argmax_sequence(ProbabilityMatrix({{0.9, 0.1}, {0.2, 0.8}})) == StageSequence{1, 2});
  CHECK(argmax_sequence(ProbabilityMatrix({{0.5, 0.5}})) == StageSequence{1});
  const StageSequence constant(7, 4);
  CHECK(argmax_sequence(testing::one_hot(constant, 6)) == constant);
}

TEST_CASE("argmax_sequence has length N and entries in range") {
  testing::Rng rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const int L = testing::uniform_int(rng, 2, 7);
    const auto N = static_cast<std::size_t>(testing::uniform_int(rng, 1, 30));
    const auto s = argmax_sequence(testing::random_matrix(rng, N, L, 0.5));
    REQUIRE(s.size() == N);
    for (Stage v : s) CHECK((v >= 1 && v <= L));
  }
}

TEST_CASE("renormalize") {
  std::vector<double> p{1.0, 3.0};
  renormalize(p);
  CHECK(p[0] == doctest::Approx(0.25));
  CHECK(p[1] == doctest::Approx(0.75));
  std::vector<double> z{0.0, 0.0, 0.0, 0.0};
  renormalize(z);
  for (double v : z) CHECK(v == 0.25);
}
