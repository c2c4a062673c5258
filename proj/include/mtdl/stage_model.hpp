#pragma once

// Core domain types: stage labels, stage sequences, per-frame probability
// vectors and matrices, context windows.
//
// Stage indices are 1-based everywhere (1..num_stages), in memory and on disk.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtdl/error.hpp"

namespace mtdl {

using Stage = int;
using StageSequence = std::vector<Stage>;
using ProbabilityVector = std::vector<double>;

inline constexpr double kProbabilitySumTolerance = 1e-6;

/// Ordered set of development stages. List order is the total order used by
/// the monotonicity constraint.
class StageAlphabet {
 public:
  /// tStart, tPNf, t2, t3, t4, t4+
  StageAlphabet();
  explicit StageAlphabet(std::vector<std::string> labels);

  int size() const noexcept { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& name(Stage s) const;
  std::optional<Stage> find(const std::string& label) const;

 private:
  std::vector<std::string> labels_;
};

/// Half-width of the context window; the window covers 2*tau+1 frames.
struct ContextConfig {
  int tau = 0;

  int window() const noexcept { return 2 * tau + 1; }
};

/// N columns of |L| probabilities, one column per frame. Storage is
/// column-contiguous so `column(n)` is a cheap span.
class ProbabilityMatrix {
 public:
  ProbabilityMatrix() = default;
  ProbabilityMatrix(std::size_t num_frames, int num_stages);
  explicit ProbabilityMatrix(const std::vector<ProbabilityVector>& columns);

  std::size_t num_frames() const noexcept { return num_frames_; }
  int num_stages() const noexcept { return num_stages_; }

  /// 0-based frame, 1-based stage.
  double at(std::size_t frame, Stage stage) const {
    return data_[frame * num_stages_ + (stage - 1)];
  }
  double& at(std::size_t frame, Stage stage) {
    return data_[frame * num_stages_ + (stage - 1)];
  }

  std::span<const double> column(std::size_t frame) const {
    return {data_.data() + frame * num_stages_, static_cast<std::size_t>(num_stages_)};
  }
  std::span<double> column(std::size_t frame) {
    return {data_.data() + frame * num_stages_, static_cast<std::size_t>(num_stages_)};
  }

  bool operator==(const ProbabilityMatrix&) const = default;

 private:
  std::size_t num_frames_ = 0;
  int num_stages_ = 0;
  std::vector<double> data_;
};

struct ValidationIssue {
  ErrorCode code;
  std::size_t column;  // 0-based
  int entry;           // 1-based stage, 0 when the whole column is at fault
  std::string message() const;
};

/// Empty optional means the matrix is valid.
std::optional<ValidationIssue> validate_probability_matrix(const ProbabilityMatrix& m);
std::optional<ValidationIssue> validate_probability_vector(std::span<const double> p,
                                                           std::size_t column = 0);

/// Throws mtdl::Error with the issue's code if the matrix is invalid.
void require_valid(const ProbabilityMatrix& m);

bool is_monotone(std::span<const Stage> s);

/// Lowest stage wins ties.
Stage argmax_stage(std::span<const double> p);
StageSequence argmax_sequence(const ProbabilityMatrix& m);

/// Scale a non-negative vector to sum 1. A zero vector becomes uniform.
void renormalize(std::span<double> p);

}  // namespace mtdl
