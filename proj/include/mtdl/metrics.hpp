#pragma once

#include <span>
#include <vector>

#include "mtdl/stage_model.hpp"

namespace mtdl {

/// Rows are true stages, columns predicted stages (both 1-based via at()).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_stages);

  int num_stages() const noexcept { return num_stages_; }
  long long at(Stage truth, Stage pred) const { return counts_[index(truth, pred)]; }
  void add(Stage truth, Stage pred);
  void merge(const ConfusionMatrix& other);

  long long total() const;
  long long trace() const;
  /// Row-normalized view; empty rows stay all-zero.
  std::vector<std::vector<double>> normalized() const;

 private:
  std::size_t index(Stage truth, Stage pred) const;

  int num_stages_;
  std::vector<long long> counts_;
};

// All metrics micro-average over every frame of every listed sequence.

double accuracy(std::span<const StageSequence> pred, std::span<const StageSequence> truth);
double rmse(std::span<const StageSequence> pred, std::span<const StageSequence> truth);
ConfusionMatrix confusion(std::span<const StageSequence> pred,
                          std::span<const StageSequence> truth, int num_stages);

double accuracy(const StageSequence& pred, const StageSequence& truth);
double rmse(const StageSequence& pred, const StageSequence& truth);
ConfusionMatrix confusion(const StageSequence& pred, const StageSequence& truth, int num_stages);

}  // namespace mtdl
