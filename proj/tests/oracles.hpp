#pragma once

// Independent reference implementations used as test oracles. These verify
// the production code by a different numerical route and must not share its
// implementation.

#include <vector>

#include "dptab/tabular.hpp"

namespace oracles {

// RDP of the sampled Gaussian mechanism by composite Gauss-Legendre
// quadrature of E_{z~N(0,s^2)}[((1-q) + q e^{(2z-1)/(2s^2)})^alpha] with
// interval doubling until the result is stable.
double sgm_rho_quadrature(double q, double sigma, double alpha);

// Accountant built on the quadrature oracle: min over the grid of the
// RDP-to-DP conversion after `steps` compositions.
double epsilon_quadrature(double q, double sigma, long steps, double delta,
                          const std::vector<double>& alphas);

// Brute-force metric references (independent counting code).
double hist_oracle(const dptab::tabular::DataTable& real, const dptab::tabular::DataTable& synth,
                   int bins);
double pair_oracle(const dptab::tabular::DataTable& real, const dptab::tabular::DataTable& synth,
                   int bins);
std::vector<std::vector<double>> correlation_oracle(const dptab::tabular::DataTable& table);
double cor_acc_oracle(const dptab::tabular::DataTable& real,
                      const dptab::tabular::DataTable& synth);

}  // namespace oracles
