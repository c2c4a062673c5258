#pragma once

// Small feed-forward classifier with hard parameter sharing: a shared trunk
// encodes each frame, one or 2*tau+1 heads classify the (fused) encoding.
//
//   OneToOne          x_n                  -> head            -> p(y_n)
//   ManyToOneMaxPool  x_{n-tau..n+tau}     -> max over slots  -> head -> p(y_n)
//   ManyToOneConcat   x_{n-tau..n+tau}     -> concat slots    -> head -> p(y_n)
//   OneToMany         x_n                  -> heads[o]        -> p(y_{n+o})
//   ManyToMany        x_{n-tau..n+tau}     -> concat -> heads[o] -> p(y_{n+o})
//
// Hidden layers use ReLU, heads end in softmax. Input windows replicate the
// edge frame outside [1, N]; output offsets outside [1, N] are dropped.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "mtdl/dataset_sim.hpp"
#include "mtdl/stage_model.hpp"

namespace mtdl {

enum class Variant { OneToOne, ManyToOneMaxPool, ManyToOneConcat, OneToMany, ManyToMany };
enum class Fusion { MaxPool, Concat };

std::string_view variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view name);

bool is_multi_input(Variant v);
bool is_multi_output(Variant v);

struct NetConfig {
  Variant variant = Variant::OneToOne;
  int tau = 0;
  int input_dim = 6;
  std::vector<int> trunk_hidden{32};
  int head_hidden = 16;  // 0 makes each head a single linear layer
  int num_stages = 6;

  /// Input frames per sample (1 or 2*tau+1). OneToOne ignores tau.
  int window() const;
  int num_heads() const;
  int encoding_dim() const { return trunk_hidden.back(); }
  int head_input_dim() const;
  void validate() const;
};

struct Dense {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;

  bool operator==(const Dense&) const = default;
};

/// Trunk layers are shared; heads[k] serves output offset k - tau for
/// *-to-many variants, heads[0] is the only head otherwise.
struct NetParams {
  NetConfig config;
  std::vector<Dense> trunk;
  std::vector<std::vector<Dense>> heads;

  /// Same shapes, all zeros.
  NetParams zeros_like() const;
  bool all_finite() const;
  std::size_t parameter_count() const;
};

NetParams init_params(const NetConfig& config, std::uint64_t seed);

/// Replace `params.trunk` with `trunk` after checking shapes.
void copy_trunk(NetParams& params, const NetParams& source);

// ---- single-sample forward passes ----

Eigen::VectorXd trunk_forward(const NetParams& params, std::span<const double> x);
ProbabilityVector forward_one_to_one(const NetParams& params, std::span<const double> x);
/// `window` has 2*tau+1 rows, row j is frame n + j - tau.
ProbabilityVector forward_many_to_one(const NetParams& params, const FeatureMatrix& window,
                                      Fusion fusion);
/// Element k is the prediction for frame n + k - tau.
std::vector<ProbabilityVector> forward_one_to_many(const NetParams& params,
                                                   std::span<const double> x);
std::vector<ProbabilityVector> forward_many_to_many(const NetParams& params,
                                                    const FeatureMatrix& window);

// ---- loss ----

inline constexpr double kLogClamp = 1e-12;

/// Sum over outputs of w_t * -log(max(p_t[y_t], 1e-12)).
double multitask_loss(std::span<const ProbabilityVector> outputs, std::span<const Stage> labels,
                      std::span<const double> weights);

// ---- batched training core ----

/// A minibatch in network layout. inputs[j] is (input_dim x B) for input
/// slot j; targets(k, b) is the 1-based stage for head k, or 0 when the
/// output offset falls outside the video and is excluded from the loss.
struct Batch {
  std::vector<Eigen::MatrixXd> inputs;
  Eigen::MatrixXi targets;

  Eigen::Index size() const { return targets.cols(); }
};

struct SampleRef {
  int video;  // index into the video list
  int frame;  // 0-based
};

Batch make_batch(const NetConfig& config, std::span<const SimVideo> videos,
                 std::span<const SampleRef> samples);

/// All frames of the listed videos.
std::vector<SampleRef> all_samples(std::span<const SimVideo> videos, std::span<const int> ids);

enum class GradientScope { All, HeadsOnly };

struct LossGradient {
  double loss = 0.0;  // batch mean
  NetParams grad;
};

/// Empty `weights` means all ones.
double batch_loss(const NetParams& params, const Batch& batch, std::span<const double> weights);
LossGradient loss_and_gradient(const NetParams& params, const Batch& batch,
                               std::span<const double> weights,
                               GradientScope scope = GradientScope::All);

/// Per-head softmax outputs for a batch; element k is (num_stages x B).
std::vector<Eigen::MatrixXd> forward_batch(const NetParams& params, const Batch& batch);

/// Smallest |pre-activation| over all ReLU units and smallest top-2 gap in
/// max pooling. Finite differences are only meaningful away from these kinks.
double kink_margin(const NetParams& params, const Batch& batch);

// ---- training ----

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  std::vector<double> output_weights;  // empty = all ones
  Optimizer optimizer = Optimizer::Adam;
  double step_size = 3e-3;
  int batch_size = 64;
  int max_epochs = 40;
  int patience = 4;
  std::uint64_t seed = 1;

  void validate(int num_heads) const;
};

struct EpochLog {
  int phase = 1;  // 1 = baseline, 2 = heads fine-tuning
  int epoch = 0;  // 0 = before any update
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainResult {
  NetParams baseline;  // one-to-one phase-1 model
  NetParams model;     // target variant (== baseline for OneToOne)
  std::vector<EpochLog> log;
};

/// Applies one optimizer step. With `freeze_trunk`, trunk gradients are
/// ignored and trunk parameters stay bit-identical.
class ParamUpdater {
 public:
  ParamUpdater(const NetParams& shape, const TrainConfig& config);
  void step(NetParams& params, const NetParams& grad, bool freeze_trunk);

 private:
  Optimizer optimizer_;
  double lr_;
  NetParams m_, v_;
  long t_ = 0;
};

/// Phase 1: end-to-end one-to-one training.
NetParams train_baseline(const Dataset& data, const NetConfig& config, const TrainConfig& train,
                         std::vector<EpochLog>* log = nullptr);

/// Phase 2: target variant with the baseline trunk copied and frozen; only
/// heads are trained.
NetParams fine_tune(const Dataset& data, const NetParams& baseline, const NetConfig& config,
                    const TrainConfig& train, std::vector<EpochLog>* log = nullptr);

TrainResult train(const Dataset& data, const NetConfig& config, const TrainConfig& train);

/// Mean loss over all frames of the given videos.
double dataset_loss(const NetParams& params, std::span<const SimVideo> videos,
                    std::span<const int> ids, std::span<const double> weights);

// ---- inference ----

struct GridEntry {
  int source_frame;  // 1-based t
  ProbabilityVector probs;
};

/// frames[n-1] holds the predictions p_n(x_t) for frame index n, sorted by t.
struct PredictionGrid {
  int num_stages = 0;
  std::vector<std::vector<GridEntry>> frames;
};

using VideoPrediction = std::variant<PredictionGrid, ProbabilityMatrix>;

VideoPrediction predict_video(const NetParams& params, const SimVideo& video);

/// Single-output models produce a matrix; wrap it as a one-entry-per-frame grid.
PredictionGrid as_grid(const ProbabilityMatrix& m);

}  // namespace mtdl
