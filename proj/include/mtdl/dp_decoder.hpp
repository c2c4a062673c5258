#pragma once

// Minimum-loss monotone (non-decreasing) stage sequence for a probability
// matrix, by dynamic programming, plus an exhaustive oracle.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mtdl/stage_model.hpp"

namespace mtdl {

/// LL: -log p[candidate] (clamped at 1e-12).
/// EM: sum_l p[l] * |candidate - l|, the expected absolute stage distance.
enum class FrameLoss { LL, EM };

std::string_view loss_name(FrameLoss k);
/// Accepts "ll" and "em".
std::optional<FrameLoss> parse_loss(std::string_view name);

struct DecodeResult {
  StageSequence sequence;
  double total_loss = 0.0;
  std::vector<double> frame_losses;
};

double per_frame_loss(Stage candidate, std::span<const double> p, FrameLoss kind);

/// Sum of per-frame losses, accumulated from the first frame to the last.
double total_loss(std::span<const Stage> s, const ProbabilityMatrix& m, FrameLoss kind);

/// O(N * |L|) dynamic program. Among co-optimal sequences the
/// lexicographically smallest is returned.
DecodeResult decode(const ProbabilityMatrix& m, FrameLoss kind);

/// Number of non-decreasing sequences of length n over num_stages values,
/// C(n + L - 1, L - 1), saturating at UINT64_MAX.
std::uint64_t count_monotone_sequences(std::size_t n, int num_stages);

/// Visits every non-decreasing sequence in lexicographic order.
void for_each_monotone_sequence(std::size_t n, int num_stages,
                                const std::function<void(std::span<const Stage>)>& visit);

inline constexpr std::uint64_t kBruteForceLimit = 1'000'000;

/// Exhaustive search; throws TooLarge above `limit` candidate sequences.
DecodeResult brute_force_decode(const ProbabilityMatrix& m, FrameLoss kind,
                                std::uint64_t limit = kBruteForceLimit);

}  // namespace mtdl
