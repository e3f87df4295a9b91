#include "dptab/dp.hpp"

#include <cmath>

namespace dptab::dp {

void DPConfig::validate() const {
  require(clip_norm > 0.0, "config", "clip_norm must be positive");
  require(noise_multiplier >= 0.0, "config", "noise_multiplier must be non-negative");
  require(sample_rate > 0.0 && sample_rate <= 1.0, "config", "sample_rate must lie in (0,1]");
  require(delta > 0.0 && delta < 1.0, "config", "delta must lie in (0,1)");
}

OptimizerState OptimizerState::init(size_t n_params, const AdamConfig& adam) {
  OptimizerState s;
  s.adam = adam;
  s.m.assign(n_params, 0.0);
  s.v.assign(n_params, 0.0);
  return s;
}

std::vector<size_t> poisson_sample(size_t n, double q, Rng& rng) {
  require(n >= 1, "domain", "poisson_sample requires n >= 1");
  require(q >= 0.0 && q <= 1.0, "domain", "sample rate must lie in [0,1]");
  std::vector<size_t> out;
  if (q == 0.0) return out;
  if (q == 1.0) {
    out.resize(n);
    for (size_t i = 0; i < n; ++i) out[i] = i;
    return out;
  }
  for (size_t i = 0; i < n; ++i)
    if (rng.uniform() < q) out.push_back(i);
  return out;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void clip(std::span<double> gradient, double clip_norm) {
  require(clip_norm > 0.0, "domain", "clip_norm must be positive");
  double norm = l2_norm(gradient);
  if (norm <= clip_norm || norm == 0.0) return;
  double scale = clip_norm / norm;
  for (double& g : gradient) g *= scale;
}

void adam_step(std::span<double> params, std::span<const double> gradient, OptimizerState& state,
               double lr_override) {
  require(params.size() == gradient.size() && params.size() == state.m.size(), "domain",
          "optimizer state / gradient length mismatch");
  const AdamConfig& a = state.adam;
  const double lr = lr_override >= 0.0 ? lr_override : a.learning_rate;
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(a.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(a.beta2, static_cast<double>(state.step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = a.beta1 * state.m[i] + (1.0 - a.beta1) * gradient[i];
    state.v[i] = a.beta2 * state.v[i] + (1.0 - a.beta2) * gradient[i] * gradient[i];
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + a.eps);
  }
}

void noisy_step(std::span<double> params, std::span<double> grad_sum, size_t dataset_size,
                const DPConfig& dp, OptimizerState& state, Rng& noise_rng,
                double lr_override) {
  dp.validate();
  require(params.size() == grad_sum.size(), "domain", "gradient length mismatch");
  const double noise_std = dp.noise_multiplier * dp.clip_norm;
  const double expected_batch = dp.sample_rate * static_cast<double>(dataset_size);
  require(expected_batch > 0.0, "domain", "expected batch size must be positive");
  if (noise_std > 0.0)
    for (double& g : grad_sum) g += noise_std * noise_rng.normal();
  const double inv = 1.0 / expected_batch;
  for (double& g : grad_sum) g *= inv;
  adam_step(params, grad_sum, state, lr_override);
}

}  // namespace dptab::dp
