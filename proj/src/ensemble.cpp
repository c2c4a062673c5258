#include "mtdl/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace mtdl {

std::string_view rule_name(AggregationRule r) {
  switch (r) {
    case AggregationRule::AdditiveMean: return "additive";
    case AggregationRule::MultiplicativeMean: return "multiplicative";
    case AggregationRule::MiddleOutput: return "middle";
  }
  return "unknown";
}

std::optional<AggregationRule> parse_rule(std::string_view name) {
  for (auto r : {AggregationRule::AdditiveMean, AggregationRule::MultiplicativeMean,
                 AggregationRule::MiddleOutput}) {
    if (rule_name(r) == name) return r;
  }
  return std::nullopt;
}

namespace {

constexpr double kProductFloor = 1e-12;

const GridEntry& middle_entry(const std::vector<GridEntry>& entries, int frame) {
  const GridEntry* best = &entries.front();
  for (const auto& e : entries) {
    const int d = std::abs(e.source_frame - frame);
    const int bd = std::abs(best->source_frame - frame);
    if (d < bd || (d == bd && e.source_frame < best->source_frame)) best = &e;
  }
  return *best;
}

}  // namespace

ProbabilityMatrix aggregate(const PredictionGrid& grid, AggregationRule rule) {
  const int L = grid.num_stages;
  ProbabilityMatrix out(grid.frames.size(), L);
  for (std::size_t n = 0; n < grid.frames.size(); ++n) {
    const auto& entries = grid.frames[n];
    if (entries.empty()) {
      throw Error(ErrorCode::EmptyFrame, "no predictions for frame " + std::to_string(n + 1));
    }
    for (const auto& e : entries) {
      if (static_cast<int>(e.probs.size()) != L) {
        throw Error(ErrorCode::ShapeMismatch, "prediction length differs from stage count");
      }
    }
    auto col = out.column(n);
    switch (rule) {
      case AggregationRule::AdditiveMean:
        for (const auto& e : entries)
          for (int l = 0; l < L; ++l) col[l] += e.probs[l];
        for (double& v : col) v /= static_cast<double>(entries.size());
        break;
      case AggregationRule::MultiplicativeMean: {
        // Products of many small factors underflow; accumulate in log space
        // and shift by the column maximum before exponentiating.
        std::vector<double> logsum(L, 0.0);
        for (const auto& e : entries)
          for (int l = 0; l < L; ++l) logsum[l] += std::log(std::max(e.probs[l], kProductFloor));
        const double top = *std::max_element(logsum.begin(), logsum.end());
        for (int l = 0; l < L; ++l) col[l] = std::exp(logsum[l] - top);
        break;
      }
      case AggregationRule::MiddleOutput: {
        const auto& e = middle_entry(entries, static_cast<int>(n) + 1);
        std::copy(e.probs.begin(), e.probs.end(), col.begin());
        break;
      }
    }
    renormalize(col);
  }
  return out;
}

StageSequence classify(const ProbabilityMatrix& m) {
  require_valid(m);
  return argmax_sequence(m);
}

}  // namespace mtdl
