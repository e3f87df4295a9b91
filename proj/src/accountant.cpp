#include "dptab/accountant.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace dptab::privacy {

using nlohmann::json;

std::vector<double> default_alpha_grid() {
  std::vector<double> grid = {1.25, 1.5, 1.75};
  for (int a = 2; a <= 64; ++a) grid.push_back(a);
  for (double a : {80.0, 96.0, 128.0, 256.0}) grid.push_back(a);
  return grid;
}

RdpCurve RdpCurve::scaled(double factor) const {
  RdpCurve out{alphas, rhos};
  for (double& r : out.rhos) r *= factor;
  return out;
}

namespace {

double log_binomial(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// log((1-q) + q * e^x), stable for any x.
double log_mix(double q, double x) {
  if (q >= 1.0) return x;
  if (x > 0.0) return x + std::log(q + (1.0 - q) * std::exp(-x));
  return std::log1p(q * std::expm1(x));
}

// log A_alpha for integer alpha via the binomial expansion
// A = sum_k C(alpha,k) (1-q)^(alpha-k) q^k exp(k(k-1)/(2 sigma^2)).
double log_a_int(double q, double sigma, long alpha) {
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const double logq = std::log(q);
  const double log1mq = std::log1p(-q);
  std::vector<double> terms;
  terms.reserve(alpha + 1);
  for (long k = 0; k <= alpha; ++k) {
    double t = log_binomial(alpha, k) + k * logq + (alpha - k) * log1mq +
               static_cast<double>(k) * (k - 1) * inv2s2;
    terms.push_back(t);
  }
  return log_sum_exp(terms);
}

// log of the integrand of A_alpha as a function of z (including the Gaussian
// density), shifted by nothing; used by the fractional-alpha quadrature.
struct Integrand {
  double q, sigma, alpha;
  double operator()(double z) const {
    double x = (2.0 * z - 1.0) / (2.0 * sigma * sigma);
    double logphi = -z * z / (2.0 * sigma * sigma) - std::log(sigma) -
                    0.5 * std::log(2.0 * 3.141592653589793238462643383279503);
    return logphi + alpha * log_mix(q, x);
  }
};

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  double m = 0.5 * (a + b);
  double fa = f(a), fm = f(m), fb = f(b);
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

// log A_alpha for real alpha by quadrature of exp(g(z)) with peak scaling.
double log_a_frac(double q, double sigma, double alpha) {
  Integrand g{q, sigma, alpha};
  const double lo = -12.0 * sigma - 1.0;
  const double hi = alpha + 12.0 * sigma + 1.0;
  const double step = sigma / 8.0;
  const size_t n = static_cast<size_t>((hi - lo) / step) + 2;
  double gmax = -HUGE_VAL;
  std::vector<double> gs(n);
  for (size_t i = 0; i < n; ++i) {
    double z = lo + step * static_cast<double>(i);
    gs[i] = g(std::min(z, hi));
    gmax = std::max(gmax, gs[i]);
  }
  // Outermost points still within 46 nats of the peak bound the support.
  size_t first = 0, last = n - 1;
  while (first + 1 < n && gs[first] < gmax - 46.0) ++first;
  while (last > 0 && gs[last] < gmax - 46.0) --last;
  double zl = lo + step * (first > 0 ? first - 1 : 0);
  double zr = lo + step * std::min(last + 1, n - 1);
  auto scaled = [&](double z) { return std::exp(g(z) - gmax); };
  double integral = integrate(scaled, zl, zr, 1e-12);
  return gmax + std::log(integral);
}

}  // namespace

double rdp_sgm(double q, double sigma, double alpha) {
  require(alpha > 1.0, "domain", "rdp_sgm requires alpha > 1");
  require(sigma > 0.0, "domain", "rdp_sgm requires sigma > 0 (rho is infinite at sigma = 0)");
  require(q >= 0.0 && q <= 1.0, "domain", "rdp_sgm requires 0 <= q <= 1");
  if (q == 0.0) return 0.0;
  if (q == 1.0) return alpha / (2.0 * sigma * sigma);
  double rounded = std::round(alpha);
  double log_a;
  if (std::fabs(alpha - rounded) < 1e-9)
    log_a = log_a_int(q, sigma, static_cast<long>(rounded));
  else
    log_a = log_a_frac(q, sigma, alpha);
  return std::max(0.0, log_a / (alpha - 1.0));
}

RdpCurve rdp_sgm_curve(double q, double sigma, const std::vector<double>& alphas) {
  RdpCurve curve;
  curve.alphas = alphas;
  curve.rhos.reserve(alphas.size());
  for (double a : alphas) curve.rhos.push_back(rdp_sgm(q, sigma, a));
  return curve;
}

RdpCurve compose(const RdpCurve& per_step, long steps) {
  require(steps >= 0, "domain", "compose requires steps >= 0");
  return per_step.scaled(static_cast<double>(steps));
}

double rdp_to_dp(double alpha, double rho, double delta) {
  require(alpha > 1.0, "domain", "rdp_to_dp requires alpha > 1");
  require(delta > 0.0 && delta < 1.0, "domain", "rdp_to_dp requires 0 < delta < 1");
  require(rho >= 0.0, "domain", "rdp_to_dp requires rho >= 0");
  return rho + std::log((alpha - 1.0) / alpha) - (std::log(delta) + std::log(alpha)) / (alpha - 1.0);
}

EpsilonResult epsilon(double q, double sigma, long steps, double delta,
                      const std::vector<double>& alphas) {
  require(!alphas.empty(), "domain", "epsilon requires a non-empty alpha grid");
  require(steps >= 0, "domain", "epsilon requires steps >= 0");
  EpsilonResult out;
  out.epsilon_raw = HUGE_VAL;
  for (double a : alphas) {
    double rho = rdp_sgm(q, sigma, a) * static_cast<double>(steps);
    double eps = rdp_to_dp(a, rho, delta);
    if (eps < out.epsilon_raw) {
      out.epsilon_raw = eps;
      out.best_alpha = a;
    }
  }
  out.epsilon = std::max(0.0, out.epsilon_raw);
  return out;
}

double calibrate_sigma(double q, long steps, double delta, double target_epsilon,
                       const std::vector<double>& alphas) {
  require(target_epsilon > 0.0, "domain", "calibrate_sigma requires target epsilon > 0");
  double lo = 0.3, hi = 100.0;
  const double tol = 1e-3 * target_epsilon;
  auto eps_at = [&](double sigma) { return epsilon(q, sigma, steps, delta, alphas).epsilon; };
  double eps_lo = eps_at(lo), eps_hi = eps_at(hi);
  if (eps_lo < target_epsilon - tol)
    fail("domain", "target epsilon " + std::to_string(target_epsilon) +
                       " unreachable: sigma bracket [0.3, 100] gives at most " +
                       std::to_string(eps_lo));
  if (eps_hi > target_epsilon)
    fail("domain", "target epsilon " + std::to_string(target_epsilon) +
                       " unreachable: sigma bracket [0.3, 100] gives at least " +
                       std::to_string(eps_hi));
  if (eps_lo <= target_epsilon) return lo;  // already within tolerance from below
  for (int iter = 0; iter < 200; ++iter) {
    double mid = 0.5 * (lo + hi);
    double e = eps_at(mid);
    if (e > target_epsilon)
      lo = mid;
    else
      hi = mid;
    if (e <= target_epsilon && target_epsilon - e <= tol) return mid;
  }
  double e = eps_at(hi);
  if (e <= target_epsilon && target_epsilon - e <= tol) return hi;
  fail("internal", "sigma calibration did not converge in bracket [0.3, 100]");
}

PrivacyLedger::PrivacyLedger(double q, double sigma, double delta,
                             const std::vector<double>& alphas)
    : q_(q), sigma_(sigma), delta_(delta) {
  require(delta > 0.0 && delta < 1.0, "domain", "ledger requires 0 < delta < 1");
  if (sigma > 0.0)
    per_step_ = rdp_sgm_curve(q, sigma, alphas);
  else
    per_step_ = RdpCurve{alphas, std::vector<double>(alphas.size(), HUGE_VAL)};
}

void PrivacyLedger::step(long n) { steps_ += n; }

void PrivacyLedger::add_caveat(const std::string& caveat) {
  for (const auto& c : caveats_)
    if (c == caveat) return;
  caveats_.push_back(caveat);
}

EpsilonResult PrivacyLedger::current_epsilon() const {
  if (steps_ == 0) {
    EpsilonResult r;
    r.epsilon = 0.0;
    r.epsilon_raw = 0.0;
    r.best_alpha = per_step_.alphas.empty() ? 0.0 : per_step_.alphas.front();
    return r;
  }
  if (sigma_ <= 0.0) {
    EpsilonResult r;
    r.epsilon = r.epsilon_raw = HUGE_VAL;
    return r;
  }
  return epsilon(q_, sigma_, steps_, delta_, per_step_.alphas);
}

std::string PrivacyLedger::to_json() const {
  json j;
  j["q"] = q_;
  j["sigma"] = sigma_;
  j["delta"] = delta_;
  j["steps"] = steps_;
  j["alphas"] = per_step_.alphas;
  if (sigma_ > 0.0) j["per_step_rho"] = per_step_.rhos;
  auto e = current_epsilon();
  j["epsilon"] = std::isfinite(e.epsilon) ? json(e.epsilon) : json("infinite");
  j["epsilon_raw"] = std::isfinite(e.epsilon_raw) ? json(e.epsilon_raw) : json("infinite");
  j["best_alpha"] = e.best_alpha;
  j["caveats"] = caveats_;
  return j.dump(2);
}

PrivacyLedger PrivacyLedger::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    fail("parse", std::string("bad ledger JSON: ") + e.what());
  }
  PrivacyLedger ledger;
  ledger.q_ = j.at("q").get<double>();
  ledger.sigma_ = j.at("sigma").get<double>();
  ledger.delta_ = j.at("delta").get<double>();
  ledger.steps_ = j.at("steps").get<long>();
  ledger.per_step_.alphas = j.at("alphas").get<std::vector<double>>();
  if (ledger.sigma_ > 0.0)
    ledger.per_step_.rhos = j.at("per_step_rho").get<std::vector<double>>();
  else
    ledger.per_step_.rhos.assign(ledger.per_step_.alphas.size(), HUGE_VAL);
  ledger.caveats_ = j.at("caveats").get<std::vector<std::string>>();
  return ledger;
}

}  // namespace dptab::privacy
