#include "mtdl/mtnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace mtdl {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::OneToOne: return "one_to_one";
    case Variant::ManyToOneMaxPool: return "many_to_one_maxpool";
    case Variant::ManyToOneConcat: return "many_to_one_concat";
    case Variant::OneToMany: return "one_to_many";
    case Variant::ManyToMany: return "many_to_many";
  }
  return "unknown";
}

std::optional<Variant> parse_variant(std::string_view name) {
  for (Variant v : {Variant::OneToOne, Variant::ManyToOneMaxPool, Variant::ManyToOneConcat,
                    Variant::OneToMany, Variant::ManyToMany}) {
    if (variant_name(v) == name) return v;
  }
  return std::nullopt;
}

bool is_multi_input(Variant v) {
  return v == Variant::ManyToOneMaxPool || v == Variant::ManyToOneConcat ||
         v == Variant::ManyToMany;
}

bool is_multi_output(Variant v) { return v == Variant::OneToMany || v == Variant::ManyToMany; }

int NetConfig::window() const { return is_multi_input(variant) ? 2 * tau + 1 : 1; }

int NetConfig::num_heads() const { return is_multi_output(variant) ? 2 * tau + 1 : 1; }

int NetConfig::head_input_dim() const {
  const bool concat = variant == Variant::ManyToOneConcat || variant == Variant::ManyToMany;
  return concat ? window() * encoding_dim() : encoding_dim();
}

void NetConfig::validate() const {
  if (tau < 0) throw Error(ErrorCode::ConfigError, "tau must be >= 0");
  if (input_dim < 1) throw Error(ErrorCode::ConfigError, "input dimension must be >= 1");
  if (num_stages < 2) throw Error(ErrorCode::ConfigError, "need at least 2 stages");
  if (head_hidden < 0) throw Error(ErrorCode::ConfigError, "head hidden size must be >= 0");
  if (trunk_hidden.empty()) throw Error(ErrorCode::ConfigError, "trunk needs at least one hidden layer");
  for (int h : trunk_hidden) {
    if (h < 1) throw Error(ErrorCode::ConfigError, "trunk hidden sizes must be positive");
  }
}

NetParams NetParams::zeros_like() const {
  NetParams z;
  z.config = config;
  auto zero = [](const Dense& d) {
    return Dense{Eigen::MatrixXd::Zero(d.weight.rows(), d.weight.cols()),
                 Eigen::VectorXd::Zero(d.bias.size())};
  };
  for (const auto& d : trunk) z.trunk.push_back(zero(d));
  for (const auto& head : heads) {
    auto& zh = z.heads.emplace_back();
    for (const auto& d : head) zh.push_back(zero(d));
  }
  return z;
}

bool NetParams::all_finite() const {
  auto ok = [](const Dense& d) { return d.weight.allFinite() && d.bias.allFinite(); };
  return std::all_of(trunk.begin(), trunk.end(), ok) &&
         std::all_of(heads.begin(), heads.end(),
                     [&](const auto& h) { return std::all_of(h.begin(), h.end(), ok); });
}

std::size_t NetParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& d : trunk) n += d.weight.size() + d.bias.size();
  for (const auto& h : heads)
    for (const auto& d : h) n += d.weight.size() + d.bias.size();
  return n;
}

namespace {

Dense random_dense(int out, int in, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Dense d{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
  for (Eigen::Index i = 0; i < d.weight.rows(); ++i)
    for (Eigen::Index j = 0; j < d.weight.cols(); ++j) d.weight(i, j) = normal(rng);
  return d;
}

void require_shape(const Dense& a, const Dense& b, const char* what) {
  if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
      a.bias.size() != b.bias.size()) {
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + " layer shapes differ");
  }
}

}  // namespace

NetParams init_params(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  NetParams p;
  p.config = config;
  if (config.variant == Variant::OneToOne) p.config.tau = 0;
  std::mt19937_64 rng(derive_seed(seed, seed_stream::kInit, 0));

  int in = config.input_dim;
  for (int h : config.trunk_hidden) {
    p.trunk.push_back(random_dense(h, in, std::sqrt(2.0 / in), rng));
    in = h;
  }
  const int head_in = p.config.head_input_dim();
  for (int k = 0; k < p.config.num_heads(); ++k) {
    auto& head = p.heads.emplace_back();
    if (config.head_hidden > 0) {
      head.push_back(random_dense(config.head_hidden, head_in, std::sqrt(2.0 / head_in), rng));
      head.push_back(random_dense(config.num_stages, config.head_hidden,
                                  std::sqrt(1.0 / config.head_hidden), rng));
    } else {
      head.push_back(random_dense(config.num_stages, head_in, std::sqrt(1.0 / head_in), rng));
    }
  }
  return p;
}

void copy_trunk(NetParams& params, const NetParams& source) {
  if (params.trunk.size() != source.trunk.size()) {
    throw Error(ErrorCode::ShapeMismatch, "trunk depth differs");
  }
  for (std::size_t i = 0; i < params.trunk.size(); ++i) {
    require_shape(params.trunk[i], source.trunk[i], "trunk");
  }
  params.trunk = source.trunk;
}

// ---------------------------------------------------------------------------
// Batched forward / backward

namespace {

struct ForwardCache {
  std::vector<std::vector<Eigen::MatrixXd>> trunk_acts;  // [slot][0 = input, i+1 = layer i]
  Eigen::MatrixXd fused;
  Eigen::MatrixXi pool_arg;                              // MaxPool only
  std::vector<std::vector<Eigen::MatrixXd>> head_acts;   // [head][0 = fused, i+1 = hidden i]
  std::vector<Eigen::MatrixXd> probs;                    // [head] num_stages x B
  double margin = std::numeric_limits<double>::infinity();
};

void softmax_columns(Eigen::MatrixXd& z) {
  for (Eigen::Index b = 0; b < z.cols(); ++b) {
    auto col = z.col(b);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
}

void check_batch(const NetParams& params, const Batch& batch) {
  const auto& cfg = params.config;
  if (static_cast<int>(batch.inputs.size()) != cfg.window()) {
    throw Error(ErrorCode::ShapeMismatch, "batch has wrong number of input slots");
  }
  for (const auto& x : batch.inputs) {
    if (x.rows() != cfg.input_dim || x.cols() != batch.size()) {
      throw Error(ErrorCode::ShapeMismatch, "batch input has wrong shape");
    }
  }
  if (batch.targets.rows() != cfg.num_heads()) {
    throw Error(ErrorCode::ShapeMismatch, "batch targets have wrong number of heads");
  }
}

ForwardCache forward(const NetParams& params, const Batch& batch, bool track_margin = false) {
  check_batch(params, batch);
  const auto& cfg = params.config;
  ForwardCache c;
  auto note = [&](const Eigen::MatrixXd& z) {
    if (track_margin) c.margin = std::min(c.margin, z.cwiseAbs().minCoeff());
  };

  c.trunk_acts.resize(batch.inputs.size());
  for (std::size_t s = 0; s < batch.inputs.size(); ++s) {
    auto& acts = c.trunk_acts[s];
    acts.push_back(batch.inputs[s]);
    for (const auto& layer : params.trunk) {
      Eigen::MatrixXd z = layer.weight * acts.back();
      z.colwise() += layer.bias;
      note(z);
      acts.push_back(z.cwiseMax(0.0));
    }
  }

  const int h = cfg.encoding_dim();
  const Eigen::Index B = batch.size();
  switch (cfg.variant) {
    case Variant::OneToOne:
    case Variant::OneToMany:
      c.fused = c.trunk_acts[0].back();
      break;
    case Variant::ManyToOneMaxPool: {
      c.fused = c.trunk_acts[0].back();
      c.pool_arg = Eigen::MatrixXi::Zero(h, B);
      for (std::size_t s = 1; s < c.trunk_acts.size(); ++s) {
        const auto& enc = c.trunk_acts[s].back();
        for (Eigen::Index b = 0; b < B; ++b)
          for (Eigen::Index i = 0; i < h; ++i)
            if (enc(i, b) > c.fused(i, b)) {
              c.fused(i, b) = enc(i, b);
              c.pool_arg(i, b) = static_cast<int>(s);
            }
      }
      if (track_margin && c.trunk_acts.size() > 1) {
        for (Eigen::Index b = 0; b < B; ++b)
          for (Eigen::Index i = 0; i < h; ++i)
            for (std::size_t s = 0; s < c.trunk_acts.size(); ++s) {
              if (static_cast<int>(s) == c.pool_arg(i, b)) continue;
              const double v = c.trunk_acts[s].back()(i, b);
              // Ties between two dead units are not kinks: both sit at 0 with zero gradient.
              if (c.fused(i, b) == 0.0 && v == 0.0) continue;
              c.margin = std::min(c.margin, c.fused(i, b) - v);
            }
      }
      break;
    }
    case Variant::ManyToOneConcat:
    case Variant::ManyToMany:
      c.fused.resize(h * static_cast<Eigen::Index>(c.trunk_acts.size()), B);
      for (std::size_t s = 0; s < c.trunk_acts.size(); ++s) {
        c.fused.middleRows(static_cast<Eigen::Index>(s) * h, h) = c.trunk_acts[s].back();
      }
      break;
  }

  c.head_acts.resize(params.heads.size());
  c.probs.resize(params.heads.size());
  for (std::size_t k = 0; k < params.heads.size(); ++k) {
    const auto& head = params.heads[k];
    auto& acts = c.head_acts[k];
    acts.push_back(c.fused);
    for (std::size_t i = 0; i + 1 < head.size(); ++i) {
      Eigen::MatrixXd z = head[i].weight * acts.back();
      z.colwise() += head[i].bias;
      note(z);
      acts.push_back(z.cwiseMax(0.0));
    }
    Eigen::MatrixXd logits = head.back().weight * acts.back();
    logits.colwise() += head.back().bias;
    softmax_columns(logits);
    c.probs[k] = std::move(logits);
  }
  return c;
}

std::vector<double> resolve_weights(std::span<const double> weights, int num_heads) {
  if (weights.empty()) return std::vector<double>(num_heads, 1.0);
  if (static_cast<int>(weights.size()) != num_heads) {
    throw Error(ErrorCode::LengthMismatch, "output weight count differs from head count");
  }
  return {weights.begin(), weights.end()};
}

double loss_from_cache(const ForwardCache& c, const Batch& batch, const std::vector<double>& w) {
  double total = 0.0;
  for (std::size_t k = 0; k < c.probs.size(); ++k) {
    for (Eigen::Index b = 0; b < batch.size(); ++b) {
      const int y = batch.targets(static_cast<Eigen::Index>(k), b);
      if (y <= 0) continue;
      total += w[k] * -std::log(std::max(c.probs[k](y - 1, b), kLogClamp));
    }
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace

std::vector<Eigen::MatrixXd> forward_batch(const NetParams& params, const Batch& batch) {
  return forward(params, batch).probs;
}

double kink_margin(const NetParams& params, const Batch& batch) {
  return forward(params, batch, true).margin;
}

double batch_loss(const NetParams& params, const Batch& batch, std::span<const double> weights) {
  const auto w = resolve_weights(weights, params.config.num_heads());
  return loss_from_cache(forward(params, batch), batch, w);
}

LossGradient loss_and_gradient(const NetParams& params, const Batch& batch,
                               std::span<const double> weights, GradientScope scope) {
  if (batch.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty batch");
  const auto w = resolve_weights(weights, params.config.num_heads());
  const ForwardCache c = forward(params, batch);
  LossGradient out{loss_from_cache(c, batch, w), params.zeros_like()};
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  Eigen::MatrixXd d_fused = Eigen::MatrixXd::Zero(c.fused.rows(), c.fused.cols());
  for (std::size_t k = 0; k < params.heads.size(); ++k) {
    const auto& head = params.heads[k];
    auto& g = out.grad.heads[k];
    const auto& acts = c.head_acts[k];

    // d(-log p_y)/d logits = p - e_y, zero where the clamp is active.
    Eigen::MatrixXd dz = c.probs[k];
    for (Eigen::Index b = 0; b < batch.size(); ++b) {
      const int y = batch.targets(static_cast<Eigen::Index>(k), b);
      if (y <= 0 || c.probs[k](y - 1, b) < kLogClamp) {
        dz.col(b).setZero();
        continue;
      }
      dz(y - 1, b) -= 1.0;
      dz.col(b) *= w[k] * inv_b;
    }
    for (std::size_t i = head.size(); i-- > 0;) {
      g[i].weight.noalias() = dz * acts[i].transpose();
      g[i].bias = dz.rowwise().sum();
      Eigen::MatrixXd da = head[i].weight.transpose() * dz;
      if (i == 0) {
        d_fused += da;
      } else {
        dz = da.cwiseProduct((acts[i].array() > 0.0).cast<double>().matrix());
      }
    }
  }
  if (scope == GradientScope::HeadsOnly) return out;

  const auto& cfg = params.config;
  const int h = cfg.encoding_dim();
  std::vector<Eigen::MatrixXd> d_enc(c.trunk_acts.size());
  switch (cfg.variant) {
    case Variant::OneToOne:
    case Variant::OneToMany:
      d_enc[0] = d_fused;
      break;
    case Variant::ManyToOneMaxPool:
      for (auto& d : d_enc) d = Eigen::MatrixXd::Zero(d_fused.rows(), d_fused.cols());
      for (Eigen::Index b = 0; b < d_fused.cols(); ++b)
        for (Eigen::Index i = 0; i < d_fused.rows(); ++i) d_enc[c.pool_arg(i, b)](i, b) = d_fused(i, b);
      break;
    case Variant::ManyToOneConcat:
    case Variant::ManyToMany:
      for (std::size_t s = 0; s < d_enc.size(); ++s) {
        d_enc[s] = d_fused.middleRows(static_cast<Eigen::Index>(s) * h, h);
      }
      break;
  }

  for (std::size_t s = 0; s < d_enc.size(); ++s) {
    const auto& acts = c.trunk_acts[s];
    Eigen::MatrixXd da = std::move(d_enc[s]);
    for (std::size_t i = params.trunk.size(); i-- > 0;) {
      Eigen::MatrixXd dz = da.cwiseProduct((acts[i + 1].array() > 0.0).cast<double>().matrix());
      out.grad.trunk[i].weight.noalias() += dz * acts[i].transpose();
      out.grad.trunk[i].bias += dz.rowwise().sum();
      if (i > 0) da = params.trunk[i].weight.transpose() * dz;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Single-sample API

namespace {

Batch single_batch(const NetConfig& cfg, const FeatureMatrix& rows) {
  Batch batch;
  for (Eigen::Index r = 0; r < rows.rows(); ++r) batch.inputs.push_back(rows.row(r).transpose());
  batch.targets = Eigen::MatrixXi::Zero(cfg.num_heads(), 1);
  return batch;
}

FeatureMatrix row_of(std::span<const double> x) {
  FeatureMatrix m(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) m(0, static_cast<Eigen::Index>(j)) = x[j];
  return m;
}

void require_variant(const NetParams& p, Variant v) {
  if (p.config.variant != v) {
    throw Error(ErrorCode::VariantMismatch, "expected a " + std::string(variant_name(v)) +
                                                " model, got " +
                                                std::string(variant_name(p.config.variant)));
  }
}

void require_input(const NetParams& p, Eigen::Index rows, Eigen::Index cols) {
  if (rows != p.config.window() || cols != p.config.input_dim) {
    throw Error(ErrorCode::ShapeMismatch, "input window must be " +
                                              std::to_string(p.config.window()) + " x " +
                                              std::to_string(p.config.input_dim));
  }
}

ProbabilityVector to_vector(const Eigen::MatrixXd& probs, Eigen::Index col) {
  return ProbabilityVector(probs.col(col).data(), probs.col(col).data() + probs.rows());
}

}  // namespace

Eigen::VectorXd trunk_forward(const NetParams& params, std::span<const double> x) {
  if (static_cast<int>(x.size()) != params.config.input_dim) {
    throw Error(ErrorCode::ShapeMismatch, "input dimension mismatch");
  }
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  for (const auto& layer : params.trunk) a = (layer.weight * a + layer.bias).cwiseMax(0.0);
  return a;
}

ProbabilityVector forward_one_to_one(const NetParams& params, std::span<const double> x) {
  require_variant(params, Variant::OneToOne);
  require_input(params, 1, static_cast<Eigen::Index>(x.size()));
  return to_vector(forward(params, single_batch(params.config, row_of(x))).probs[0], 0);
}

ProbabilityVector forward_many_to_one(const NetParams& params, const FeatureMatrix& window,
                                      Fusion fusion) {
  require_variant(params, fusion == Fusion::MaxPool ? Variant::ManyToOneMaxPool
                                                    : Variant::ManyToOneConcat);
  require_input(params, window.rows(), window.cols());
  return to_vector(forward(params, single_batch(params.config, window)).probs[0], 0);
}

std::vector<ProbabilityVector> forward_one_to_many(const NetParams& params,
                                                   std::span<const double> x) {
  require_variant(params, Variant::OneToMany);
  require_input(params, 1, static_cast<Eigen::Index>(x.size()));
  std::vector<ProbabilityVector> out;
  for (const auto& p : forward(params, single_batch(params.config, row_of(x))).probs) {
    out.push_back(to_vector(p, 0));
  }
  return out;
}

std::vector<ProbabilityVector> forward_many_to_many(const NetParams& params,
                                                    const FeatureMatrix& window) {
  require_variant(params, Variant::ManyToMany);
  require_input(params, window.rows(), window.cols());
  std::vector<ProbabilityVector> out;
  for (const auto& p : forward(params, single_batch(params.config, window)).probs) {
    out.push_back(to_vector(p, 0));
  }
  return out;
}

double multitask_loss(std::span<const ProbabilityVector> outputs, std::span<const Stage> labels,
                      std::span<const double> weights) {
  if (outputs.size() != labels.size() || (!weights.empty() && weights.size() != outputs.size())) {
    throw Error(ErrorCode::LengthMismatch, "outputs, labels and weights must have equal length");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    const Stage y = labels[t];
    if (y < 1 || y > static_cast<int>(outputs[t].size())) {
      throw Error(ErrorCode::InvalidArgument, "label out of range");
    }
    const double w = weights.empty() ? 1.0 : weights[t];
    total += w * -std::log(std::max(outputs[t][y - 1], kLogClamp));
  }
  return total;
}

// ---------------------------------------------------------------------------
// Batches

Batch make_batch(const NetConfig& config, std::span<const SimVideo> videos,
                 std::span<const SampleRef> samples) {
  const int window = config.window();
  const int heads = config.num_heads();
  const int tau = config.variant == Variant::OneToOne ? 0 : config.tau;
  const auto B = static_cast<Eigen::Index>(samples.size());

  Batch batch;
  batch.inputs.assign(window, Eigen::MatrixXd(config.input_dim, B));
  batch.targets.resize(heads, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& v = videos[samples[b].video];
    const int n = samples[b].frame;
    const int last = static_cast<int>(v.num_frames()) - 1;
    if (v.features.cols() != config.input_dim) {
      throw Error(ErrorCode::ShapeMismatch, "video feature dimension differs from the model");
    }
    for (int s = 0; s < window; ++s) {
      const int f = window == 1 ? n : std::clamp(n + s - tau, 0, last);
      batch.inputs[s].col(b) = v.features.row(f).transpose();
    }
    for (int k = 0; k < heads; ++k) {
      const int f = heads == 1 ? n : n + k - tau;
      batch.targets(k, b) = (f < 0 || f > last) ? 0 : v.labels[f];
    }
  }
  return batch;
}

std::vector<SampleRef> all_samples(std::span<const SimVideo> videos, std::span<const int> ids) {
  std::vector<SampleRef> out;
  for (int id : ids) {
    for (int n = 0; n < static_cast<int>(videos[id].num_frames()); ++n) out.push_back({id, n});
  }
  return out;
}

double dataset_loss(const NetParams& params, std::span<const SimVideo> videos,
                    std::span<const int> ids, std::span<const double> weights) {
  const auto samples = all_samples(videos, ids);
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "no samples to evaluate");
  constexpr std::size_t kChunk = 2048;
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); i += kChunk) {
    const auto chunk = std::span(samples).subspan(i, std::min(kChunk, samples.size() - i));
    const Batch batch = make_batch(params.config, videos, chunk);
    total += batch_loss(params, batch, weights) * static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate(int num_heads) const {
  if (!(step_size > 0.0)) throw Error(ErrorCode::ConfigError, "step size must be > 0");
  if (batch_size < 1) throw Error(ErrorCode::ConfigError, "batch size must be >= 1");
  if (max_epochs < 1) throw Error(ErrorCode::ConfigError, "max epochs must be >= 1");
  if (patience < 1) throw Error(ErrorCode::ConfigError, "patience must be >= 1");
  if (!output_weights.empty() && static_cast<int>(output_weights.size()) != num_heads) {
    throw Error(ErrorCode::ConfigError, "need one output weight per head (" +
                                            std::to_string(num_heads) + ")");
  }
  for (double w : output_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::ConfigError, "output weights must be >= 0");
  }
}

ParamUpdater::ParamUpdater(const NetParams& shape, const TrainConfig& config)
    : optimizer_(config.optimizer), lr_(config.step_size), m_(shape.zeros_like()),
      v_(shape.zeros_like()) {}

void ParamUpdater::step(NetParams& params, const NetParams& grad, bool freeze_trunk) {
  ++t_;
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    if (optimizer_ == Optimizer::Sgd) {
      p -= lr_ * g;
      return;
    }
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
    p.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  auto update_layer = [&](Dense& p, const Dense& g, Dense& m, Dense& v) {
    update(p.weight, g.weight, m.weight, v.weight);
    update(p.bias, g.bias, m.bias, v.bias);
  };

  if (!freeze_trunk) {
    for (std::size_t i = 0; i < params.trunk.size(); ++i) {
      update_layer(params.trunk[i], grad.trunk[i], m_.trunk[i], v_.trunk[i]);
    }
  }
  for (std::size_t k = 0; k < params.heads.size(); ++k) {
    for (std::size_t i = 0; i < params.heads[k].size(); ++i) {
      update_layer(params.heads[k][i], grad.heads[k][i], m_.heads[k][i], v_.heads[k][i]);
    }
  }
}

namespace {

NetParams run_phase(const Dataset& data, NetParams params, const TrainConfig& tc, int phase,
                    std::span<const double> weights, std::vector<EpochLog>* log) {
  const bool freeze = phase == 2;
  if (data.split.train.empty() || data.split.validation.empty()) {
    throw Error(ErrorCode::InvalidArgument, "training needs train and validation videos");
  }
  std::vector<SampleRef> samples = all_samples(data.videos, data.split.train);
  std::mt19937_64 rng(derive_seed(tc.seed, seed_stream::kShuffle, static_cast<std::uint64_t>(phase)));
  auto diverged = [&](double loss) {
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::Divergence, "non-finite loss in phase " + std::to_string(phase));
    }
  };

  double best_val = dataset_loss(params, data.videos, data.split.validation, weights);
  const double initial_train = dataset_loss(params, data.videos, data.split.train, weights);
  diverged(best_val);
  diverged(initial_train);
  if (log) log->push_back({phase, 0, initial_train, best_val});

  NetParams best = params;
  ParamUpdater updater(params, tc);
  int stale = 0;
  const auto bs = static_cast<std::size_t>(tc.batch_size);
  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    std::shuffle(samples.begin(), samples.end(), rng);
    double sum = 0.0;
    for (std::size_t i = 0; i < samples.size(); i += bs) {
      const auto chunk = std::span(samples).subspan(i, std::min(bs, samples.size() - i));
      const Batch batch = make_batch(params.config, data.videos, chunk);
      auto lg = loss_and_gradient(params, batch, weights,
                                  freeze ? GradientScope::HeadsOnly : GradientScope::All);
      diverged(lg.loss);
      updater.step(params, lg.grad, freeze);
      sum += lg.loss * static_cast<double>(chunk.size());
    }
    const double train_loss = sum / static_cast<double>(samples.size());
    const double val = dataset_loss(params, data.videos, data.split.validation, weights);
    diverged(val);
    if (log) log->push_back({phase, epoch, train_loss, val});
    if (val < best_val) {
      best_val = val;
      best = params;
      stale = 0;
    } else if (++stale >= tc.patience) {
      break;
    }
  }
  return best;
}

}  // namespace

NetParams train_baseline(const Dataset& data, const NetConfig& config, const TrainConfig& train,
                         std::vector<EpochLog>* log) {
  NetConfig base = config;
  base.variant = Variant::OneToOne;
  base.tau = 0;
  TrainConfig tc = train;
  tc.output_weights.clear();
  tc.validate(1);
  return run_phase(data, init_params(base, derive_seed(train.seed, seed_stream::kInit, 1)), tc, 1,
                   {}, log);
}

NetParams fine_tune(const Dataset& data, const NetParams& baseline, const NetConfig& config,
                    const TrainConfig& train, std::vector<EpochLog>* log) {
  train.validate(config.num_heads());
  NetParams params = init_params(config, derive_seed(train.seed, seed_stream::kInit, 2));
  copy_trunk(params, baseline);
  return run_phase(data, std::move(params), train, 2, train.output_weights, log);
}

TrainResult train(const Dataset& data, const NetConfig& config, const TrainConfig& tc) {
  config.validate();
  tc.validate(config.variant == Variant::OneToOne ? 1 : config.num_heads());
  TrainResult result;
  result.baseline = train_baseline(data, config, tc, &result.log);
  result.model = config.variant == Variant::OneToOne
                     ? result.baseline
                     : fine_tune(data, result.baseline, config, tc, &result.log);
  return result;
}

// ---------------------------------------------------------------------------
// Inference

VideoPrediction predict_video(const NetParams& params, const SimVideo& video) {
  const auto& cfg = params.config;
  if (video.features.cols() != cfg.input_dim) {
    throw Error(ErrorCode::ShapeMismatch, "video feature dimension differs from the model");
  }
  const int n_frames = static_cast<int>(video.num_frames());
  std::vector<SampleRef> samples(n_frames);
  for (int n = 0; n < n_frames; ++n) samples[n] = {0, n};
  const auto probs = forward_batch(params, make_batch(cfg, std::span(&video, 1), samples));

  if (!is_multi_output(cfg.variant)) {
    ProbabilityMatrix m(n_frames, cfg.num_stages);
    for (int n = 0; n < n_frames; ++n)
      for (int l = 0; l < cfg.num_stages; ++l) m.column(n)[l] = probs[0](l, n);
    return m;
  }

  PredictionGrid grid;
  grid.num_stages = cfg.num_stages;
  grid.frames.resize(n_frames);
  for (int t = 0; t < n_frames; ++t) {
    for (int k = 0; k < cfg.num_heads(); ++k) {
      const int n = t + k - cfg.tau;
      if (n < 0 || n >= n_frames) continue;
      grid.frames[n].push_back({t + 1, to_vector(probs[k], t)});
    }
  }
  return grid;
}

PredictionGrid as_grid(const ProbabilityMatrix& m) {
  PredictionGrid grid;
  grid.num_stages = m.num_stages();
  grid.frames.resize(m.num_frames());
  for (std::size_t n = 0; n < m.num_frames(); ++n) {
    const auto col = m.column(n);
    grid.frames[n].push_back({static_cast<int>(n) + 1, ProbabilityVector(col.begin(), col.end())});
  }
  return grid;
}

}  // namespace mtdl
