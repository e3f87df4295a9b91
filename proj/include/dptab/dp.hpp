#pragma once

#include <span>
#include <vector>

#include "dptab/common.hpp"

namespace dptab::dp {

struct DPConfig {
  double clip_norm = 1.0;        // C
  double noise_multiplier = 0.0; // sigma, noise std = sigma * C
  double sample_rate = 0.0;      // q in (0, 1]
  double delta = 1e-5;
  long planned_steps = 0;        // T

  void validate() const;
};

struct AdamConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  AdamConfig adam;
  std::vector<double> m, v;
  long step_count = 0;

  static OptimizerState init(size_t n_params, const AdamConfig& adam);
};

// Poisson subsampling: each index enters independently with probability q.
// An empty batch is a legal outcome.
std::vector<size_t> poisson_sample(size_t n, double q, Rng& rng);

double l2_norm(std::span<const double> v);

// In-place rescale to norm at most C; direction preserved.
void clip(std::span<double> gradient, double clip_norm);

// One Adam update with bias correction; lr can be overridden per step by a
// schedule (lr < 0 keeps the configured rate).
void adam_step(std::span<double> params, std::span<const double> gradient, OptimizerState& state,
               double lr_override = -1.0);

// DP-Adam step: (sum of clipped per-example gradients + N(0, sigma^2 C^2 I))
// divided by the expected batch size q*n, then fed to Adam. `grad_sum` must
// already hold the clipped sum; callers clip upstream so each contribution
// depends on one example only.
void noisy_step(std::span<double> params, std::span<double> grad_sum, size_t dataset_size,
                const DPConfig& dp, OptimizerState& state, Rng& noise_rng,
                double lr_override = -1.0);

}  // namespace dptab::dp
