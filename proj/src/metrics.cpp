#include "mtdl/metrics.hpp"

#include <cmath>
#include <numeric>

namespace mtdl {

ConfusionMatrix::ConfusionMatrix(int num_stages)
    : num_stages_(num_stages), counts_(static_cast<std::size_t>(num_stages) * num_stages, 0) {
  if (num_stages < 1) throw Error(ErrorCode::InvalidArgument, "confusion matrix needs >= 1 stage");
}

std::size_t ConfusionMatrix::index(Stage truth, Stage pred) const {
  if (truth < 1 || truth > num_stages_ || pred < 1 || pred > num_stages_) {
    throw Error(ErrorCode::InvalidArgument, "stage out of range for confusion matrix");
  }
  return static_cast<std::size_t>(truth - 1) * num_stages_ + (pred - 1);
}

void ConfusionMatrix::add(Stage truth, Stage pred) { ++counts_[index(truth, pred)]; }

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_stages_ != num_stages_) {
    throw Error(ErrorCode::ShapeMismatch, "confusion matrices differ in size");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

long long ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), 0LL);
}

long long ConfusionMatrix::trace() const {
  long long t = 0;
  for (Stage s = 1; s <= num_stages_; ++s) t += at(s, s);
  return t;
}

std::vector<std::vector<double>> ConfusionMatrix::normalized() const {
  std::vector<std::vector<double>> out(num_stages_, std::vector<double>(num_stages_, 0.0));
  for (Stage t = 1; t <= num_stages_; ++t) {
    long long row = 0;
    for (Stage p = 1; p <= num_stages_; ++p) row += at(t, p);
    if (row == 0) continue;
    for (Stage p = 1; p <= num_stages_; ++p) {
      out[t - 1][p - 1] = static_cast<double>(at(t, p)) / static_cast<double>(row);
    }
  }
  return out;
}

namespace {

template <typename F>
std::size_t for_each_frame(std::span<const StageSequence> pred,
                           std::span<const StageSequence> truth, F&& f) {
  if (pred.size() != truth.size()) {
    throw Error(ErrorCode::LengthMismatch, "prediction and truth video counts differ");
  }
  std::size_t frames = 0;
  for (std::size_t v = 0; v < pred.size(); ++v) {
    if (pred[v].size() != truth[v].size()) {
      throw Error(ErrorCode::LengthMismatch, "prediction and truth lengths differ");
    }
    for (std::size_t n = 0; n < pred[v].size(); ++n) f(truth[v][n], pred[v][n]);
    frames += pred[v].size();
  }
  if (frames == 0) throw Error(ErrorCode::LengthMismatch, "no frames to evaluate");
  return frames;
}

}  // namespace

double accuracy(std::span<const StageSequence> pred, std::span<const StageSequence> truth) {
  std::size_t hits = 0;
  const auto frames = for_each_frame(pred, truth, [&](Stage t, Stage p) { hits += t == p; });
  return static_cast<double>(hits) / static_cast<double>(frames);
}

double rmse(std::span<const StageSequence> pred, std::span<const StageSequence> truth) {
  double sq = 0.0;
  const auto frames = for_each_frame(pred, truth, [&](Stage t, Stage p) {
    const double d = p - t;
    sq += d * d;
  });
  return std::sqrt(sq / static_cast<double>(frames));
}

ConfusionMatrix confusion(std::span<const StageSequence> pred,
                          std::span<const StageSequence> truth, int num_stages) {
  ConfusionMatrix cm(num_stages);
  for_each_frame(pred, truth, [&](Stage t, Stage p) { cm.add(t, p); });
  return cm;
}

double accuracy(const StageSequence& pred, const StageSequence& truth) {
  return accuracy(std::span(&pred, 1), std::span(&truth, 1));
}

double rmse(const StageSequence& pred, const StageSequence& truth) {
  return rmse(std::span(&pred, 1), std::span(&truth, 1));
}

ConfusionMatrix confusion(const StageSequence& pred, const StageSequence& truth, int num_stages) {
  return confusion(std::span(&pred, 1), std::span(&truth, 1), num_stages);
}

}  // namespace mtdl
