#pragma once

// Experiment configuration and the subcommands behind the `mtdl` CLI:
// simulate -> train -> predict -> decode -> evaluate, and `pipeline`, which
// chains them over several seeds.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "mtdl/dataset_sim.hpp"
#include "mtdl/dp_decoder.hpp"
#include "mtdl/ensemble.hpp"
#include "mtdl/metrics.hpp"
#include "mtdl/mtnet.hpp"

namespace mtdl {

namespace fs = std::filesystem;

/// Every knob of a run. Serialized as `key = value` lines; `#` starts a
/// comment; lists are comma-separated. Unknown keys are rejected.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  int jobs = 1;

  // simulation
  int num_videos = 170;
  int frames = 100;
  std::vector<std::string> stage_labels = StageAlphabet().labels();
  StageDurationModel durations = StageDurationModel::benchmark();
  int feature_dim = 6;
  double amplitude = 1.0;
  double noise_sigma = 0.45;
  std::array<double, 3> split{0.7, 0.1, 0.2};

  // network and training
  Variant variant = Variant::OneToMany;
  int tau = 1;
  std::vector<int> trunk_hidden{32};
  int head_hidden = 16;
  std::vector<double> output_weights;
  Optimizer optimizer = Optimizer::Adam;
  double step_size = 3e-3;
  int batch_size = 64;
  int max_epochs = 40;
  int patience = 4;

  // inference, decoding, evaluation
  AggregationRule rule = AggregationRule::MultiplicativeMean;
  FrameLoss loss = FrameLoss::EM;
  std::string eval_part = "test";  // train | validation | test | all
  int repeats = 5;

  SimConfig sim_config() const;
  NetConfig net_config() const;
  TrainConfig train_config() const;
  void validate() const;
};

/// `key = value` text with every key present, in a fixed order.
std::string to_text(const ExperimentConfig& c);
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const fs::path& path);
/// Applies a single `key = value` assignment.
void set_config_value(ExperimentConfig& c, std::string_view key, std::string_view value);

std::uint64_t config_hash(const ExperimentConfig& c);

/// Ids of the requested part ("all" = every video).
std::vector<int> part_ids(const Dataset& data, std::string_view part);

/// Writes video_<id>.csv files, split.csv and config.resolved into `out`.
Dataset cmd_simulate(const ExperimentConfig& c, const fs::path& out);

struct TrainOutputs {
  fs::path baseline;  // params_phase1.bin
  fs::path model;     // params.bin
  fs::path log;       // train_log.csv
};

/// Trains on the dataset in `data_dir` and writes parameters and the log to `out`.
TrainOutputs cmd_train(const ExperimentConfig& c, const fs::path& data_dir, const fs::path& out);

/// Writes probs_<id>.csv for the configured evaluation part.
void cmd_predict(const ExperimentConfig& c, const fs::path& params_file, const fs::path& data_dir,
                 const fs::path& out);

/// For every probs_<id>.csv in `probs_dir`: decoded_<id>.csv (DP) and
/// argmax_<id>.csv (before DP).
void cmd_decode(const fs::path& probs_dir, FrameLoss kind, const fs::path& out, int jobs = 1);

struct MethodScore {
  std::string method;  // "raw" (argmax) or "dp"
  std::size_t frames = 0;
  double accuracy = 0.0;
  double rmse = 0.0;
  ConfusionMatrix confusion{1};
};

struct Report {
  std::vector<MethodScore> rows;
};

std::string report_csv(const Report& r);

/// Scores argmax_/decoded_ files in `pred_dir` against the videos in
/// `data_dir`; writes report.csv to `out` and prints a summary to `os`.
Report cmd_evaluate(const fs::path& pred_dir, const fs::path& data_dir, const fs::path& out,
                    std::ostream& os);

struct PipelineSummary {
  std::vector<Report> per_seed;
  Report mean;  // confusion counts are summed, accuracy/rmse averaged
  std::vector<double> accuracy_std;
  std::vector<double> rmse_std;
};

/// simulate -> train -> predict -> decode -> evaluate for each of
/// `repeats` seeds (seed_<r>/ subdirectories), then an aggregate report.csv.
PipelineSummary cmd_pipeline(const ExperimentConfig& c, std::ostream& os);

}  // namespace mtdl
