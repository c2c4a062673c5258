#pragma once

// Central finite-difference check of loss_and_gradient.

#include <algorithm>
#include <cmath>
#include <functional>

#include "mtdl/mtnet.hpp"
#include "support.hpp"

namespace mtdl::testing {

inline void for_each_layer(NetParams& p, const std::function<void(Dense&)>& fn) {
  for (auto& d : p.trunk) fn(d);
  for (auto& head : p.heads)
    for (auto& d : head) fn(d);
}

/// Visits every scalar parameter of `p` together with the matching entry of `g`.
inline void for_each_coordinate(NetParams& p, const NetParams& g,
                                const std::function<void(double&, double)>& fn) {
  std::vector<const Dense*> grads;
  for (const auto& d : g.trunk) grads.push_back(&d);
  for (const auto& head : g.heads)
    for (const auto& d : head) grads.push_back(&d);
  std::size_t i = 0;
  for_each_layer(p, [&](Dense& d) {
    const Dense& gd = *grads[i++];
    for (Eigen::Index k = 0; k < d.weight.size(); ++k) fn(d.weight.data()[k], gd.weight.data()[k]);
    for (Eigen::Index k = 0; k < d.bias.size(); ++k) fn(d.bias.data()[k], gd.bias.data()[k]);
  });
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

struct GradCase {
  NetParams params;
  Batch batch;
  std::vector<double> weights;
};

/// Random small config and batch (d <= 8, one trunk layer <= 8 wide,
/// tau <= 2) whose ReLU and max-pool kinks are at least 1e-3 away.
inline GradCase random_grad_case(Rng& rng, Variant variant) {
  for (;;) {
    NetConfig cfg;
    cfg.variant = variant;
    cfg.tau = variant == Variant::OneToOne ? 0 : uniform_int(rng, 0, 2);
    cfg.input_dim = uniform_int(rng, 2, 8);
    cfg.trunk_hidden = {uniform_int(rng, 2, 8)};
    cfg.head_hidden = uniform_int(rng, 0, 1) ? 0 : uniform_int(rng, 2, 8);
    cfg.num_stages = uniform_int(rng, 2, 5);

    std::vector<SimVideo> videos(2);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int v = 0; v < 2; ++v) {
      const int n = uniform_int(rng, 3, 8);
      videos[v].id = v;
      videos[v].features = FeatureMatrix(n, cfg.input_dim);
      for (Eigen::Index k = 0; k < videos[v].features.size(); ++k)
        videos[v].features.data()[k] = normal(rng);
      videos[v].labels = random_monotone(rng, n, cfg.num_stages);
    }
    std::vector<SampleRef> samples;
    const int b = uniform_int(rng, 1, 6);
    for (int i = 0; i < b; ++i) {
      const int v = uniform_int(rng, 0, 1);
      samples.push_back({v, uniform_int(rng, 0, static_cast<int>(videos[v].num_frames()) - 1)});
    }

    GradCase c{init_params(cfg, rng()), make_batch(cfg, videos, samples), {}};
    // Non-zero biases so ReLU units sit at varied operating points.
    for_each_layer(c.params, [&](Dense& d) {
      for (Eigen::Index k = 0; k < d.bias.size(); ++k) d.bias[k] = 0.3 * normal(rng);
    });
    if (uniform_int(rng, 0, 1)) {
      for (int k = 0; k < cfg.num_heads(); ++k) c.weights.push_back(0.5 + std::abs(normal(rng)));
    }
    if (kink_margin(c.params, c.batch) > 1e-3) return c;
  }
}

/// Max elementwise relative error between the analytic gradient and
/// central differences with step h.
inline double max_gradient_error(const GradCase& c, double h = 1e-5) {
  const auto analytic = loss_and_gradient(c.params, c.batch, c.weights);
  NetParams p = c.params;
  double worst = 0.0;
  for_each_coordinate(p, analytic.grad, [&](double& x, double g) {
    const double saved = x;
    x = saved + h;
    const double up = batch_loss(p, c.batch, c.weights);
    x = saved - h;
    const double down = batch_loss(p, c.batch, c.weights);
    x = saved;
    worst = std::max(worst, relative_error((up - down) / (2 * h), g));
  });
  return worst;
}

}  // namespace mtdl::testing
