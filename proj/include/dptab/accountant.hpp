#pragma once

#include <string>
#include <vector>

#include "dptab/common.hpp"

namespace dptab::privacy {

// Order grid used for the RDP curve; integers 2..64 plus a few fractional
// and large orders.
std::vector<double> default_alpha_grid();

struct RdpCurve {
  std::vector<double> alphas;
  std::vector<double> rhos;  // nats, rho >= 0

  RdpCurve scaled(double factor) const;
};

// Renyi divergence bound of one sampled-Gaussian step at order alpha:
// rho(alpha) = log(A_alpha) / (alpha - 1) with
// A_alpha = E_{z~N(0,s^2)}[((1-q) + q * exp((2z-1)/(2s^2)))^alpha].
// Integer alpha uses the exact binomial expansion in log space; fractional
// alpha integrates the same expectation with adaptive quadrature.
double rdp_sgm(double q, double sigma, double alpha);

RdpCurve rdp_sgm_curve(double q, double sigma, const std::vector<double>& alphas);

// T-fold composition multiplies every rho by T.
RdpCurve compose(const RdpCurve& per_step, long steps);

// (alpha, rho)-RDP to epsilon at delta. May be negative for tiny rho and
// large delta; callers clamp for reporting.
double rdp_to_dp(double alpha, double rho, double delta);

struct EpsilonResult {
  double epsilon = 0.0;      // clamped at 0 for reporting
  double epsilon_raw = 0.0;  // unclamped minimum over the grid
  double best_alpha = 0.0;
};

EpsilonResult epsilon(double q, double sigma, long steps, double delta,
                      const std::vector<double>& alphas = default_alpha_grid());

// Smallest sigma in [0.3, 100] whose epsilon is within 0.1% below the target.
double calibrate_sigma(double q, long steps, double delta, double target_epsilon,
                       const std::vector<double>& alphas = default_alpha_grid());

// Running account of one training run. epsilon is always recomputed from the
// stored per-step curve, never cached.
class PrivacyLedger {
 public:
  PrivacyLedger() = default;
  PrivacyLedger(double q, double sigma, double delta,
                const std::vector<double>& alphas = default_alpha_grid());

  void step(long n = 1);
  long steps() const { return steps_; }
  double q() const { return q_; }
  double sigma() const { return sigma_; }
  double delta() const { return delta_; }
  const std::vector<std::string>& caveats() const { return caveats_; }
  void add_caveat(const std::string& caveat);

  RdpCurve current_curve() const { return per_step_.scaled(static_cast<double>(steps_)); }
  EpsilonResult current_epsilon() const;

  std::string to_json() const;
  static PrivacyLedger from_json(const std::string& text);

 private:
  double q_ = 0.0;
  double sigma_ = 0.0;
  double delta_ = 1e-5;
  long steps_ = 0;
  RdpCurve per_step_;
  std::vector<std::string> caveats_;
};

}  // namespace dptab::privacy
