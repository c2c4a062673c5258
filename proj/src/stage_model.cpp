#include "mtdl/stage_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace mtdl {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::BadSum: return "BadSum";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::VariantMismatch: return "VariantMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::EmptyFrame: return "EmptyFrame";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::MissingVideo: return "MissingVideo";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

StageAlphabet::StageAlphabet()
    : StageAlphabet({"tStart", "tPNf", "t2", "t3", "t4", "t4+"}) {}

StageAlphabet::StageAlphabet(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "stage alphabet needs at least 2 labels");
  }
  std::set<std::string> seen(labels_.begin(), labels_.end());
  if (seen.size() != labels_.size()) {
    throw Error(ErrorCode::InvalidArgument, "stage labels must be distinct");
  }
}

const std::string& StageAlphabet::name(Stage s) const {
  if (s < 1 || s > size()) {
    throw Error(ErrorCode::InvalidArgument, "stage index out of range: " + std::to_string(s));
  }
  return labels_[s - 1];
}

std::optional<Stage> StageAlphabet::find(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<Stage>(it - labels_.begin()) + 1;
}

ProbabilityMatrix::ProbabilityMatrix(std::size_t num_frames, int num_stages)
    : num_frames_(num_frames), num_stages_(num_stages),
      data_(num_frames * static_cast<std::size_t>(num_stages), 0.0) {}

ProbabilityMatrix::ProbabilityMatrix(const std::vector<ProbabilityVector>& columns) {
  if (columns.empty()) return;
  num_frames_ = columns.size();
  num_stages_ = static_cast<int>(columns.front().size());
  data_.reserve(num_frames_ * num_stages_);
  for (const auto& c : columns) {
    if (static_cast<int>(c.size()) != num_stages_) {
      throw Error(ErrorCode::ShapeMismatch, "probability columns have different lengths");
    }
    data_.insert(data_.end(), c.begin(), c.end());
  }
}

std::string ValidationIssue::message() const {
  std::ostringstream os;
  os << error_code_name(code) << " at column " << column + 1;
  if (entry > 0) os << ", entry " << entry;
  return os.str();
}

std::optional<ValidationIssue> validate_probability_vector(std::span<const double> p,
                                                           std::size_t column) {
  double sum = 0.0;
  for (std::size_t l = 0; l < p.size(); ++l) {
    if (!std::isfinite(p[l])) return ValidationIssue{ErrorCode::NonFinite, column, int(l) + 1};
    if (p[l] < 0.0) return ValidationIssue{ErrorCode::NegativeEntry, column, int(l) + 1};
    sum += p[l];
  }
  if (std::abs(sum - 1.0) > kProbabilitySumTolerance) {
    return ValidationIssue{ErrorCode::BadSum, column, 0};
  }
  return std::nullopt;
}

std::optional<ValidationIssue> validate_probability_matrix(const ProbabilityMatrix& m) {
  if (m.num_frames() == 0) return ValidationIssue{ErrorCode::ShapeMismatch, 0, 0};
  for (std::size_t n = 0; n < m.num_frames(); ++n) {
    if (auto issue = validate_probability_vector(m.column(n), n)) return issue;
  }
  return std::nullopt;
}

void require_valid(const ProbabilityMatrix& m) {
  if (auto issue = validate_probability_matrix(m)) {
    throw Error(issue->code, "invalid probability matrix: " + issue->message());
  }
}

bool is_monotone(std::span<const Stage> s) {
  return std::is_sorted(s.begin(), s.end());
}

Stage argmax_stage(std::span<const double> p) {
  // max_element returns the first maximum, i.e. the lowest stage.
  return static_cast<Stage>(std::max_element(p.begin(), p.end()) - p.begin()) + 1;
}

StageSequence argmax_sequence(const ProbabilityMatrix& m) {
  StageSequence out(m.num_frames());
  for (std::size_t n = 0; n < m.num_frames(); ++n) out[n] = argmax_stage(m.column(n));
  return out;
}

void renormalize(std::span<double> p) {
  double sum = 0.0;
  for (double v : p) sum += v;
  if (!(sum > 0.0)) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
    return;
  }
  for (double& v : p) v /= sum;
}

}  // namespace mtdl
