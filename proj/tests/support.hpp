#pragma once

// Hand-rolled generators for property tests.

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mtdl/stage_model.hpp"

namespace mtdl::testing {

using Rng = std::mt19937_64;

/// Dirichlet(alpha, ..., alpha) column.
inline ProbabilityVector dirichlet(Rng& rng, int k, double alpha = 1.0) {
  std::gamma_distribution<double> g(alpha, 1.0);
  ProbabilityVector p(k);
  double sum = 0.0;
  for (auto& v : p) sum += (v = g(rng));
  for (auto& v : p) v /= sum;
  return p;
}

inline ProbabilityMatrix random_matrix(Rng& rng, std::size_t frames, int stages,
                                       double alpha = 1.0) {
  std::vector<ProbabilityVector> cols;
  for (std::size_t n = 0; n < frames; ++n) cols.push_back(dirichlet(rng, stages, alpha));
  return ProbabilityMatrix(cols);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline StageSequence random_sequence(Rng& rng, std::size_t n, int stages) {
  StageSequence s(n);
  for (auto& v : s) v = uniform_int(rng, 1, stages);
  return s;
}

inline StageSequence random_monotone(Rng& rng, std::size_t n, int stages) {
  StageSequence s = random_sequence(rng, n, stages);
  std::sort(s.begin(), s.end());
  return s;
}

inline ProbabilityMatrix one_hot(std::span<const Stage> s, int stages) {
  ProbabilityMatrix m(s.size(), stages);
  for (std::size_t n = 0; n < s.size(); ++n) m.at(n, s[n]) = 1.0;
  return m;
}

}  // namespace mtdl::testing
