#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

namespace oracles {

namespace {

// 20-point Gauss-Legendre nodes/weights on [-1, 1] (positive half).
const double kGlNode[10] = {0.0765265211334973, 0.2277858511416451, 0.3737060887154195,
                            0.5108670019508271, 0.6360536807265150, 0.7463319064601508,
                            0.8391169718222188, 0.9122344282513259, 0.9639719272779138,
                            0.9931285991850949};
const double kGlWeight[10] = {0.1527533871307258, 0.1491729864726037, 0.1420961093183820,
                              0.1316886384491766, 0.1181945319615184, 0.1019301198172404,
                              0.0832767415767048, 0.0626720483341091, 0.0406014298003869,
                              0.0176140071391521};

double log_integrand(double q, double sigma, double alpha, double z) {
  double x = (2.0 * z - 1.0) / (2.0 * sigma * sigma);
  double mix;
  if (x > 0.0)
    mix = x + std::log(q + (1.0 - q) * std::exp(-x));
  else
    mix = std::log1p(q * std::expm1(x));
  double logphi =
      -z * z / (2.0 * sigma * sigma) - std::log(sigma) - 0.5 * std::log(2.0 * M_PI);
  return logphi + alpha * mix;
}

// integral of exp(g(z) - shift) over [a, b] with K panels of 20-point GL.
double panel_integral(double q, double sigma, double alpha, double a, double b, int panels,
                      double shift) {
  double total = 0.0;
  double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    double lo = a + p * h;
    double mid = lo + 0.5 * h;
    double half = 0.5 * h;
    double acc = 0.0;
    for (int i = 0; i < 10; ++i) {
      acc += kGlWeight[i] * std::exp(log_integrand(q, sigma, alpha, mid + half * kGlNode[i]) -
                                     shift);
      acc += kGlWeight[i] * std::exp(log_integrand(q, sigma, alpha, mid - half * kGlNode[i]) -
                                     shift);
    }
    total += acc * half;
  }
  return total;
}

}  // namespace

double sgm_rho_quadrature(double q, double sigma, double alpha) {
  if (q == 0.0) return 0.0;
  if (q == 1.0) return alpha / (2.0 * sigma * sigma);
  // Locate the peak on a dense scan, then bound the support.
  const double lo0 = -15.0 * sigma - 1.0;
  const double hi0 = alpha + 15.0 * sigma + 1.0;
  const int n_scan = 16384;
  double gmax = -HUGE_VAL;
  for (int i = 0; i <= n_scan; ++i) {
    double z = lo0 + (hi0 - lo0) * i / n_scan;
    gmax = std::max(gmax, log_integrand(q, sigma, alpha, z));
  }
  double lo = lo0, hi = hi0;
  while (log_integrand(q, sigma, alpha, lo + sigma * 0.25) < gmax - 55.0) lo += sigma * 0.25;
  while (log_integrand(q, sigma, alpha, hi - sigma * 0.25) < gmax - 55.0) hi -= sigma * 0.25;

  int panels = 64;
  double prev = panel_integral(q, sigma, alpha, lo, hi, panels, gmax);
  for (int iter = 0; iter < 8; ++iter) {
    panels *= 2;
    double next = panel_integral(q, sigma, alpha, lo, hi, panels, gmax);
    if (std::fabs(next - prev) <= 1e-13 * std::max(1.0, std::fabs(next))) {
      prev = next;
      break;
    }
    prev = next;
  }
  double log_a = gmax + std::log(prev);
  return std::max(0.0, log_a / (alpha - 1.0));
}

double epsilon_quadrature(double q, double sigma, long steps, double delta,
                          const std::vector<double>& alphas) {
  double best = HUGE_VAL;
  for (double a : alphas) {
    double rho = sgm_rho_quadrature(q, sigma, a) * static_cast<double>(steps);
    double eps = rho + std::log((a - 1.0) / a) - (std::log(delta) + std::log(a)) / (a - 1.0);
    best = std::min(best, eps);
  }
  return std::max(0.0, best);
}

namespace {

using dptab::tabular::Cell;
using dptab::tabular::ColumnKind;
using dptab::tabular::DataTable;

struct Binned {
  std::vector<int> real, synth;
  int levels = 1;
};

Binned bin_column(const DataTable& real, const DataTable& synth, size_t c, int bins) {
  Binned out;
  const auto& spec = real.schema.columns[c];
  if (spec.kind == ColumnKind::Numeric) {
    double lo = HUGE_VAL, hi = -HUGE_VAL;
    for (const auto& row : real.rows) {
      lo = std::min(lo, std::get<double>(row[c]));
      hi = std::max(hi, std::get<double>(row[c]));
    }
    for (const auto& row : synth.rows) {
      lo = std::min(lo, std::get<double>(row[c]));
      hi = std::max(hi, std::get<double>(row[c]));
    }
    if (hi <= lo) {
      out.levels = 1;
      out.real.assign(real.n_rows(), 0);
      out.synth.assign(synth.n_rows(), 0);
      return out;
    }
    out.levels = bins;
    auto put = [&](const DataTable& t, std::vector<int>& dst) {
      for (const auto& row : t.rows) {
        double v = std::get<double>(row[c]);
        int b = static_cast<int>((v - lo) / (hi - lo) * bins);
        dst.push_back(std::clamp(b, 0, bins - 1));
      }
    };
    put(real, out.real);
    put(synth, out.synth);
    return out;
  }
  std::map<std::string, int> levels;
  for (const auto& cat : spec.categories) levels.emplace(cat, static_cast<int>(levels.size()));
  auto put = [&](const DataTable& t, std::vector<int>& dst) {
    for (const auto& row : t.rows) {
      auto [it, ins] = levels.emplace(std::get<std::string>(row[c]),
                                      static_cast<int>(levels.size()));
      dst.push_back(it->second);
    }
  };
  put(real, out.real);
  put(synth, out.synth);
  out.levels = static_cast<int>(levels.size());
  return out;
}

}  // namespace

double hist_oracle(const DataTable& real, const DataTable& synth, int bins) {
  double total = 0.0;
  for (size_t c = 0; c < real.n_cols(); ++c) {
    Binned b = bin_column(real, synth, c, bins);
    double inter = 0.0;
    for (int level = 0; level < b.levels; ++level) {
      double p = 0.0, q = 0.0;
      for (int v : b.real) p += (v == level);
      for (int v : b.synth) q += (v == level);
      inter += std::min(p / real.n_rows(), q / synth.n_rows());
    }
    total += inter;
  }
  return total / static_cast<double>(real.n_cols());
}

double pair_oracle(const DataTable& real, const DataTable& synth, int bins) {
  double total = 0.0;
  int n_pairs = 0;
  for (size_t i = 0; i < real.n_cols(); ++i)
    for (size_t j = i + 1; j < real.n_cols(); ++j) {
      Binned bi = bin_column(real, synth, i, bins);
      Binned bj = bin_column(real, synth, j, bins);
      double inter = 0.0;
      for (int a = 0; a < bi.levels; ++a)
        for (int b = 0; b < bj.levels; ++b) {
          double p = 0.0, q = 0.0;
          for (size_t r = 0; r < real.n_rows(); ++r)
            p += (bi.real[r] == a && bj.real[r] == b);
          for (size_t r = 0; r < synth.n_rows(); ++r)
            q += (bi.synth[r] == a && bj.synth[r] == b);
          inter += std::min(p / real.n_rows(), q / synth.n_rows());
        }
      total += inter;
      ++n_pairs;
    }
  return total / n_pairs;
}

namespace {

std::vector<int> codes_of(const DataTable& t, size_t c) {
  std::vector<int> out;
  const auto& spec = t.schema.columns[c];
  for (const auto& row : t.rows) {
    int k = spec.category_index(std::get<std::string>(row[c]));
    out.push_back(k);
  }
  return out;
}

double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  double cov = sxy - sx * sy / n;
  double vx = sxx - sx * sx / n;
  double vy = syy - sy * sy / n;
  if (vx <= 0 || vy <= 0) return 0.0;
  return std::min(1.0, std::fabs(cov / std::sqrt(vx * vy)));
}

double oracle_cramers_v(const std::vector<int>& a, const std::vector<int>& b) {
  size_t n = a.size();
  std::set<int> la(a.begin(), a.end()), lb(b.begin(), b.end());
  std::map<int, int> ia, ib;
  for (int v : la) ia.emplace(v, static_cast<int>(ia.size()));
  for (int v : lb) ib.emplace(v, static_cast<int>(ib.size()));
  int r = static_cast<int>(la.size()), c = static_cast<int>(lb.size());
  if (r <= 1 || c <= 1 || n <= 1) return 0.0;
  std::vector<std::vector<double>> o(r, std::vector<double>(c, 0.0));
  for (size_t i = 0; i < n; ++i) o[ia[a[i]]][ib[b[i]]] += 1.0;
  std::vector<double> rs(r, 0.0), cs(c, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      rs[i] += o[i][j];
      cs[j] += o[i][j];
    }
  double chi2 = 0.0;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      double e = rs[i] * cs[j] / n;
      chi2 += (o[i][j] - e) * (o[i][j] - e) / e;
    }
  double phi2 = chi2 / n;
  double phi2c = std::max(0.0, phi2 - double(r - 1) * (c - 1) / (n - 1.0));
  double rc = r - double(r - 1) * (r - 1) / (n - 1.0);
  double cc = c - double(c - 1) * (c - 1) / (n - 1.0);
  double denom = std::min(rc, cc) - 1.0;
  if (denom <= 0) return 0.0;
  return std::min(1.0, std::sqrt(phi2c / denom));
}

double oracle_corr_ratio(const std::vector<int>& g, const std::vector<double>& y) {
  size_t n = y.size();
  double mean = 0;
  for (double v : y) mean += v;
  mean /= n;
  double sst = 0;
  for (double v : y) sst += (v - mean) * (v - mean);
  if (sst == 0) return 0.0;
  std::map<int, std::pair<double, double>> groups;  // sum, count
  for (size_t i = 0; i < n; ++i) {
    groups[g[i]].first += y[i];
    groups[g[i]].second += 1.0;
  }
  double ssb = 0;
  for (auto& [k, sc] : groups) {
    double gm = sc.first / sc.second;
    ssb += sc.second * (gm - mean) * (gm - mean);
  }
  return std::min(1.0, std::sqrt(ssb / sst));
}

}  // namespace

std::vector<std::vector<double>> correlation_oracle(const DataTable& table) {
  size_t d = table.n_cols();
  std::vector<std::vector<double>> m(d, std::vector<double>(d, 0.0));
  for (size_t i = 0; i < d; ++i) m[i][i] = 1.0;
  for (size_t i = 0; i < d; ++i)
    for (size_t j = i + 1; j < d; ++j) {
      const auto& si = table.schema.columns[i];
      const auto& sj = table.schema.columns[j];
      double v;
      if (si.kind == ColumnKind::Numeric && sj.kind == ColumnKind::Numeric) {
        std::vector<double> x, y;
        for (const auto& row : table.rows) {
          x.push_back(std::get<double>(row[i]));
          y.push_back(std::get<double>(row[j]));
        }
        v = oracle_pearson(x, y);
      } else if (si.kind != ColumnKind::Numeric && sj.kind != ColumnKind::Numeric) {
        v = oracle_cramers_v(codes_of(table, i), codes_of(table, j));
      } else {
        size_t num = si.kind == ColumnKind::Numeric ? i : j;
        size_t cat = si.kind == ColumnKind::Numeric ? j : i;
        std::vector<double> y;
        for (const auto& row : table.rows) y.push_back(std::get<double>(row[num]));
        v = oracle_corr_ratio(codes_of(table, cat), y);
      }
      m[i][j] = m[j][i] = v;
    }
  return m;
}

double cor_acc_oracle(const DataTable& real, const DataTable& synth) {
  auto bucket = [](double v) {
    if (v < 0.1) return 0;
    if (v < 0.3) return 1;
    if (v < 0.5) return 2;
    return 3;
  };
  auto mr = correlation_oracle(real);
  auto ms = correlation_oracle(synth);
  size_t d = real.n_cols();
  int pairs = 0, match = 0;
  for (size_t i = 0; i < d; ++i)
    for (size_t j = i + 1; j < d; ++j) {
      ++pairs;
      match += bucket(mr[i][j]) == bucket(ms[i][j]);
    }
  return static_cast<double>(match) / pairs;
}

}  // namespace oracles
