#pragma once

// Combine the overlapping predictions p_n(x_t), t in [n-tau, n+tau], made
// for each frame index into a single probability column.

#include <optional>
#include <string_view>

#include "mtdl/mtnet.hpp"
#include "mtdl/stage_model.hpp"

namespace mtdl {

enum class AggregationRule { AdditiveMean, MultiplicativeMean, MiddleOutput };

std::string_view rule_name(AggregationRule r);
/// Accepts "additive", "multiplicative", "middle".
std::optional<AggregationRule> parse_rule(std::string_view name);

/// Both means are renormalized to sum 1. Boundary frames aggregate over
/// however many predictions they have. MiddleOutput takes the prediction
/// from t == n, else the closest t (smaller t on ties).
ProbabilityMatrix aggregate(const PredictionGrid& grid, AggregationRule rule);

StageSequence classify(const ProbabilityMatrix& m);

}  // namespace mtdl
