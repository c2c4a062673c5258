#pragma once

// Synthetic time-lapse videos: a monotone stage sequence drawn from a
// per-stage duration model, and per-frame feature vectors drawn from a
// Gaussian emission model around a per-stage mean.

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "mtdl/stage_model.hpp"

namespace mtdl {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Seed derivation. Every random stream in the toolkit is seeded with
/// derive_seed(master, stream, index): splitmix64 applied to the master
/// seed, then mixed with the stream tag and the counter.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

namespace seed_stream {
inline constexpr std::uint64_t kLabels = 1;
inline constexpr std::uint64_t kFeatures = 2;
inline constexpr std::uint64_t kSplit = 3;
inline constexpr std::uint64_t kInit = 4;
inline constexpr std::uint64_t kShuffle = 5;
inline constexpr std::uint64_t kRepeat = 6;
}  // namespace seed_stream

struct StageDurationModel {
  std::vector<double> mean;        // frames, > 0
  std::vector<double> dispersion;  // coefficient of variation, >= 0
  std::vector<double> skip;        // in [0,1]; ignored for the first and last stage

  int num_stages() const noexcept { return static_cast<int>(mean.size()); }
  void validate() const;

  /// Six-stage profile where t3 is usually skipped.
  static StageDurationModel benchmark();
};

struct EmissionModel {
  int dim = 6;
  double amplitude = 1.0;
  double sigma = 0.45;
  /// Per-stage mean vectors (num_stages x dim). Empty means one-hot * amplitude.
  std::vector<std::vector<double>> means;

  std::vector<double> mean_for(Stage s) const;
  void validate(int num_stages) const;
};

struct SimVideo {
  int id = 0;
  FeatureMatrix features;  // N x d, row n is frame n+1
  StageSequence labels;

  std::size_t num_frames() const noexcept { return labels.size(); }
};

struct SimConfig {
  int num_videos = 170;
  int frames = 100;
  StageDurationModel durations = StageDurationModel::benchmark();
  EmissionModel emission;
};

/// Contiguous blocks of stages in order, each retained stage lasting a
/// sampled number of frames (>= 1); padded with the last reached stage.
StageSequence sample_stage_sequence(std::uint64_t seed, const StageDurationModel& model, int frames);

/// Draw a single stage duration; exposed for testing.
int sample_duration(double mean, double dispersion, std::uint64_t seed);

FeatureMatrix emit_features(std::uint64_t seed, std::span<const Stage> labels,
                            const EmissionModel& em);

/// Video `id` uses derive_seed(seed, kLabels, id) and derive_seed(seed, kFeatures, id).
SimVideo simulate_video(std::uint64_t seed, int id, const SimConfig& config);

/// Generates videos 0..num_videos-1; `jobs` > 1 fans out across threads
/// with identical results.
std::vector<SimVideo> simulate_dataset(std::uint64_t seed, const SimConfig& config, int jobs = 1);

struct DatasetSplit {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;
};

/// Videos are indexed by id: videos[i].id == i.
struct Dataset {
  std::vector<SimVideo> videos;
  DatasetSplit split;
};

/// Part sizes from largest-remainder rounding of fractions * num_videos;
/// membership from a seeded shuffle. Each part is sorted by id.
DatasetSplit split_dataset(int num_videos, const std::array<double, 3>& fractions,
                           std::uint64_t seed);

/// Exposed for testing: largest-remainder apportionment of `total` items.
std::vector<int> largest_remainder(int total, std::span<const double> fractions);

}  // namespace mtdl
