#include "mtdl/dataset_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

namespace mtdl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64((stream << 40) + index));
}

void StageDurationModel::validate() const {
  const auto n = mean.size();
  if (n < 2 || dispersion.size() != n || skip.size() != n) {
    throw Error(ErrorCode::ConfigError, "duration model needs equal-length mean/dispersion/skip lists with >= 2 stages");
  }
  for (std::size_t l = 0; l < n; ++l) {
    if (!(mean[l] > 0.0) || !std::isfinite(mean[l])) {
      throw Error(ErrorCode::ConfigError, "stage durations must be positive");
    }
    if (!(dispersion[l] >= 0.0) || !std::isfinite(dispersion[l])) {
      throw Error(ErrorCode::ConfigError, "duration dispersion must be >= 0");
    }
    if (!(skip[l] >= 0.0 && skip[l] <= 1.0)) {
      throw Error(ErrorCode::ConfigError, "skip probabilities must lie in [0,1]");
    }
  }
}

StageDurationModel StageDurationModel::benchmark() {
  // tStart, tPNf, t2, t3, t4, t4+ (t4+ absorbs whatever remains of N)
  return {{8.0, 28.0, 20.0, 6.0, 16.0, 30.0},
          {0.5, 0.3, 0.3, 0.5, 0.3, 0.3},
          {0.0, 0.0, 0.0, 0.8, 0.0, 0.0}};
}

std::vector<double> EmissionModel::mean_for(Stage s) const {
  if (!means.empty()) return means.at(s - 1);
  std::vector<double> m(dim, 0.0);
  m.at(s - 1) = amplitude;
  return m;
}

void EmissionModel::validate(int num_stages) const {
  if (!std::isfinite(sigma) || sigma < 0.0) {
    throw Error(ErrorCode::ConfigError, "emission noise sigma must be finite and >= 0");
  }
  if (means.empty()) {
    if (dim < num_stages) {
      throw Error(ErrorCode::ConfigError, "feature dimension must be >= number of stages");
    }
    return;
  }
  if (static_cast<int>(means.size()) != num_stages) {
    throw Error(ErrorCode::ConfigError, "need one emission mean per stage");
  }
  for (const auto& m : means) {
    if (static_cast<int>(m.size()) != dim) {
      throw Error(ErrorCode::ConfigError, "emission mean has wrong dimension");
    }
  }
}

int sample_duration(double mean, double dispersion, std::uint64_t seed) {
  if (dispersion <= 0.0) return std::max(1, static_cast<int>(std::lround(mean)));
  // Gamma with the requested mean and coefficient of variation; cv = 1 is
  // the exponential, the continuous analogue of a geometric duration.
  std::mt19937_64 rng(seed);
  const double shape = 1.0 / (dispersion * dispersion);
  std::gamma_distribution<double> gamma(shape, mean / shape);
  return std::max(1, static_cast<int>(std::lround(gamma(rng))));
}

StageSequence sample_stage_sequence(std::uint64_t seed, const StageDurationModel& model,
                                    int frames) {
  model.validate();
  if (frames < 1) throw Error(ErrorCode::InvalidArgument, "frame count must be >= 1");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int num_stages = model.num_stages();

  StageSequence seq;
  seq.reserve(frames);
  for (Stage s = 1; s <= num_stages && static_cast<int>(seq.size()) < frames; ++s) {
    const std::size_t l = s - 1;
    // Draw both variates unconditionally so one stage's settings never shift
    // the random stream seen by later stages.
    const double u = unit(rng);
    const std::uint64_t duration_seed = rng();
    const bool interior = s > 1 && s < num_stages;
    if (interior && u < model.skip[l]) continue;
    const int d = sample_duration(model.mean[l], model.dispersion[l], duration_seed);
    const int take = std::min(d, frames - static_cast<int>(seq.size()));
    seq.insert(seq.end(), take, s);
  }
  seq.resize(frames, seq.back());
  return seq;
}

FeatureMatrix emit_features(std::uint64_t seed, std::span<const Stage> labels,
                            const EmissionModel& em) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<std::vector<double>> cache;
  FeatureMatrix x(static_cast<Eigen::Index>(labels.size()), em.dim);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const Stage s = labels[n];
    if (static_cast<std::size_t>(s) > cache.size()) cache.resize(s);
    if (cache[s - 1].empty()) cache[s - 1] = em.mean_for(s);
    for (int j = 0; j < em.dim; ++j) {
      x(static_cast<Eigen::Index>(n), j) = cache[s - 1][j] + em.sigma * noise(rng);
    }
  }
  return x;
}

SimVideo simulate_video(std::uint64_t seed, int id, const SimConfig& config) {
  SimVideo v;
  v.id = id;
  v.labels = sample_stage_sequence(derive_seed(seed, seed_stream::kLabels, id),
                                   config.durations, config.frames);
  v.features = emit_features(derive_seed(seed, seed_stream::kFeatures, id), v.labels,
                             config.emission);
  return v;
}

std::vector<SimVideo> simulate_dataset(std::uint64_t seed, const SimConfig& config, int jobs) {
  config.durations.validate();
  config.emission.validate(config.durations.num_stages());
  if (config.num_videos < 1) throw Error(ErrorCode::ConfigError, "num_videos must be >= 1");

  std::vector<SimVideo> videos(config.num_videos);
  const int workers = std::clamp(jobs, 1, config.num_videos);
  if (workers == 1) {
    for (int i = 0; i < config.num_videos; ++i) videos[i] = simulate_video(seed, i, config);
    return videos;
  }
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int i = w; i < config.num_videos; i += workers) videos[i] = simulate_video(seed, i, config);
      });
    }
  }
  return videos;
}

std::vector<int> largest_remainder(int total, std::span<const double> fractions) {
  std::vector<int> sizes(fractions.size());
  std::vector<double> rem(fractions.size());
  int assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double exact = fractions[i] * total;
    sizes[i] = static_cast<int>(std::floor(exact));
    rem[i] = exact - sizes[i];
    assigned += sizes[i];
  }
  std::vector<std::size_t> order(fractions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++sizes[order[k % order.size()]];
  return sizes;
}

DatasetSplit split_dataset(int num_videos, const std::array<double, 3>& fractions,
                           std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw Error(ErrorCode::ConfigError, "split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::ConfigError, "split fractions must sum to 1");

  const auto sizes = largest_remainder(num_videos, fractions);
  static constexpr const char* kNames[] = {"train", "validation", "test"};
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] == 0) {
      throw Error(ErrorCode::EmptySplit, std::string("split part '") + kNames[i] + "' is empty");
    }
  }

  std::vector<int> ids(num_videos);
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, seed_stream::kSplit, 0));
  std::shuffle(ids.begin(), ids.end(), rng);

  DatasetSplit split;
  auto first = ids.begin();
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<int> part(first, first + sizes[i]);
    std::sort(part.begin(), part.end());
    first += sizes[i];
    (i == 0 ? split.train : i == 1 ? split.validation : split.test) = std::move(part);
  }
  return split;
}

}  // namespace mtdl
