#include "dptab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

namespace dptab::metrics {

using nlohmann::json;
using tabular::Cell;
using tabular::ColumnKind;
using tabular::DataTable;

namespace {

bool role_passes(lm::PosRole role, RoleFilter filter) {
  switch (filter) {
    case RoleFilter::All:
      return role != lm::PosRole::Pad;
    case RoleFilter::Key:
      return role == lm::PosRole::Key;
    case RoleFilter::Value:
      return role == lm::PosRole::Value;
    case RoleFilter::NonFunctional:
      return role == lm::PosRole::NonFunctional;
  }
  return false;
}

struct NllSums {
  double sum[4] = {0, 0, 0, 0};  // indexed by PosRole
  long count[4] = {0, 0, 0, 0};
};

NllSums accumulate_nll(const lm::ModelParams& params, const std::vector<lm::Batch>& corpus) {
  NllSums sums;
  for (const auto& batch : corpus) {
    auto logits = lm::forward(params, batch);
    auto loss = lm::loss_standard(logits, batch);
    for (int e = 0; e < batch.n_examples; ++e)
      for (int t = 0; t < batch.n_positions; ++t) {
        size_t i = batch.at(e, t);
        if (batch.role[i] == lm::PosRole::Pad) continue;
        int r = static_cast<int>(batch.role[i]);
        sums.sum[r] += loss.per_token_nll[i];
        ++sums.count[r];
      }
  }
  return sums;
}

double ppl_from(const NllSums& sums, RoleFilter filter) {
  double total = 0.0;
  long count = 0;
  for (int r = 0; r < 3; ++r) {
    if (!role_passes(static_cast<lm::PosRole>(r), filter)) continue;
    total += sums.sum[r];
    count += sums.count[r];
  }
  require(count > 0, "domain", "perplexity filter selects no tokens");
  return std::exp(total / static_cast<double>(count));
}

}  // namespace

double perplexity(const lm::ModelParams& params, const std::vector<lm::Batch>& corpus,
                  RoleFilter filter) {
  require(!corpus.empty(), "domain", "perplexity on empty corpus");
  return ppl_from(accumulate_nll(params, corpus), filter);
}

PerplexityBreakdown perplexity_breakdown(const lm::ModelParams& params,
                                         const std::vector<lm::Batch>& corpus) {
  require(!corpus.empty(), "domain", "perplexity on empty corpus");
  NllSums sums = accumulate_nll(params, corpus);
  PerplexityBreakdown out;
  out.total = ppl_from(sums, RoleFilter::All);
  out.key = ppl_from(sums, RoleFilter::Key);
  out.value = ppl_from(sums, RoleFilter::Value);
  out.non_functional = ppl_from(sums, RoleFilter::NonFunctional);
  return out;
}

namespace {

// Shared binning codes for one column of both tables. Categorical columns
// share one dictionary (real schema order, unseen synthetic values
// appended); numeric columns use equal-width bins over the combined range.
struct ColumnCodes {
  int n_bins = 1;
  std::vector<int> real;
  std::vector<int> synth;
};

ColumnCodes compute_codes(const DataTable& real, const DataTable& synth, size_t col, int bins) {
  const auto& spec = real.schema.columns[col];
  ColumnCodes out;
  out.real.reserve(real.n_rows());
  out.synth.reserve(synth.n_rows());
  if (spec.kind != ColumnKind::Numeric) {
    std::map<std::string, int> dict;
    for (const auto& cat : spec.categories) dict.emplace(cat, static_cast<int>(dict.size()));
    auto code = [&dict](const Cell& cell) {
      auto [it, inserted] = dict.emplace(std::get<std::string>(cell),
                                         static_cast<int>(dict.size()));
      return it->second;
    };
    for (const auto& row : real.rows) out.real.push_back(code(row[col]));
    for (const auto& row : synth.rows) out.synth.push_back(code(row[col]));
    out.n_bins = static_cast<int>(dict.size());
    return out;
  }
  double lo = HUGE_VAL, hi = -HUGE_VAL;
  for (const auto* table : {&real, &synth})
    for (const auto& row : table->rows) {
      double v = std::get<double>(row[col]);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  double width = hi > lo ? (hi - lo) / bins : 0.0;
  out.n_bins = width > 0.0 ? bins : 1;
  auto code = [&](const Cell& cell) {
    if (width <= 0.0) return 0;
    int b = static_cast<int>(std::floor((std::get<double>(cell) - lo) / width));
    return std::min(out.n_bins - 1, std::max(0, b));
  };
  for (const auto& row : real.rows) out.real.push_back(code(row[col]));
  for (const auto& row : synth.rows) out.synth.push_back(code(row[col]));
  return out;
}

void check_same_schema(const DataTable& real, const DataTable& synth) {
  require(real.schema.fingerprint() == synth.schema.fingerprint() ||
              [&] {
                if (real.schema.columns.size() != synth.schema.columns.size()) return false;
                for (size_t c = 0; c < real.schema.columns.size(); ++c) {
                  const auto& a = real.schema.columns[c];
                  const auto& b = synth.schema.columns[c];
                  if (a.name != b.name || a.kind != b.kind) return false;
                }
                return true;
              }(),
          "domain", "real and synthetic tables have different schemas");
  require(real.n_rows() > 0 && synth.n_rows() > 0, "domain", "metric on empty table");
}

}  // namespace

double hist_intersection(const DataTable& real, const DataTable& synth, int bins) {
  check_same_schema(real, synth);
  require(bins >= 1, "domain", "bins must be positive");
  double total = 0.0;
  for (size_t c = 0; c < real.n_cols(); ++c) {
    ColumnCodes codes = compute_codes(real, synth, c, bins);
    std::vector<double> p(codes.n_bins, 0.0), q(codes.n_bins, 0.0);
    for (int b : codes.real) p[b] += 1.0;
    for (int b : codes.synth) q[b] += 1.0;
    double inter = 0.0;
    for (int b = 0; b < codes.n_bins; ++b)
      inter += std::min(p[b] / real.n_rows(), q[b] / synth.n_rows());
    total += inter;
  }
  return total / static_cast<double>(real.n_cols());
}

double pair_similarity(const DataTable& real, const DataTable& synth, int bins) {
  check_same_schema(real, synth);
  require(real.n_cols() >= 2, "domain", "pair_similarity needs at least two columns");
  require(bins >= 1, "domain", "bins must be positive");
  std::vector<ColumnCodes> codes;
  for (size_t c = 0; c < real.n_cols(); ++c) codes.push_back(compute_codes(real, synth, c, bins));

  double total = 0.0;
  size_t n_pairs = 0;
  for (size_t i = 0; i < real.n_cols(); ++i)
    for (size_t j = i + 1; j < real.n_cols(); ++j) {
      std::map<std::pair<int, int>, std::pair<double, double>> cells;
      for (size_t r = 0; r < real.n_rows(); ++r)
        cells[{codes[i].real[r], codes[j].real[r]}].first += 1.0;
      for (size_t r = 0; r < synth.n_rows(); ++r)
        cells[{codes[i].synth[r], codes[j].synth[r]}].second += 1.0;
      double inter = 0.0;
      for (const auto& [key, counts] : cells)
        inter += std::min(counts.first / real.n_rows(), counts.second / synth.n_rows());
      total += inter;
      ++n_pairs;
    }
  return total / static_cast<double>(n_pairs);
}

namespace {

double pearson_abs(const std::vector<double>& x, const std::vector<double>& y, bool* degenerate) {
  const size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    *degenerate = true;
    return 0.0;
  }
  return std::min(1.0, std::fabs(sxy / std::sqrt(sxx * syy)));
}

double cramers_v_corrected(const std::vector<int>& a, const std::vector<int>& b, int ka, int kb,
                           bool* degenerate) {
  const size_t n = a.size();
  std::vector<double> table(static_cast<size_t>(ka) * kb, 0.0);
  std::vector<double> row_sum(ka, 0.0), col_sum(kb, 0.0);
  for (size_t i = 0; i < n; ++i) {
    table[static_cast<size_t>(a[i]) * kb + b[i]] += 1.0;
    row_sum[a[i]] += 1.0;
    col_sum[b[i]] += 1.0;
  }
  // Observed levels only; empty schema categories do not enter the estimator.
  int r = 0, c = 0;
  for (double s : row_sum) r += (s > 0.0);
  for (double s : col_sum) c += (s > 0.0);
  if (r <= 1 || c <= 1 || n <= 1) {
    *degenerate = true;
    return 0.0;
  }
  double chi2 = 0.0;
  for (int i = 0; i < ka; ++i) {
    if (row_sum[i] == 0.0) continue;
    for (int j = 0; j < kb; ++j) {
      if (col_sum[j] == 0.0) continue;
      double expected = row_sum[i] * col_sum[j] / static_cast<double>(n);
      double d = table[static_cast<size_t>(i) * kb + j] - expected;
      chi2 += d * d / expected;
    }
  }
  double phi2 = chi2 / static_cast<double>(n);
  double phi2_corr =
      std::max(0.0, phi2 - static_cast<double>(r - 1) * (c - 1) / static_cast<double>(n - 1));
  double r_corr = r - static_cast<double>(r - 1) * (r - 1) / static_cast<double>(n - 1);
  double c_corr = c - static_cast<double>(c - 1) * (c - 1) / static_cast<double>(n - 1);
  double denom = std::min(r_corr, c_corr) - 1.0;
  if (denom <= 0.0) {
    *degenerate = true;
    return 0.0;
  }
  return std::min(1.0, std::sqrt(phi2_corr / denom));
}

double correlation_ratio(const std::vector<int>& groups, const std::vector<double>& y, int k,
                         bool* degenerate) {
  const size_t n = y.size();
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= n;
  double ss_total = 0.0;
  for (double v : y) ss_total += (v - mean) * (v - mean);
  if (ss_total == 0.0) {
    *degenerate = true;
    return 0.0;
  }
  std::vector<double> sum(k, 0.0), count(k, 0.0);
  for (size_t i = 0; i < n; ++i) {
    sum[groups[i]] += y[i];
    count[groups[i]] += 1.0;
  }
  double ss_between = 0.0;
  for (int g = 0; g < k; ++g) {
    if (count[g] == 0.0) continue;
    double gm = sum[g] / count[g];
    ss_between += count[g] * (gm - mean) * (gm - mean);
  }
  return std::min(1.0, std::sqrt(ss_between / ss_total));
}

}  // namespace

AssociationMatrix correlation_matrix(const DataTable& table) {
  require(table.n_rows() >= 2, "domain", "correlation_matrix needs at least two rows");
  const size_t d = table.n_cols();
  AssociationMatrix out;
  out.value.assign(d, std::vector<double>(d, 0.0));
  out.degenerate.assign(d, std::vector<bool>(d, false));

  std::vector<std::vector<double>> numeric(d);
  std::vector<std::vector<int>> codes(d);
  for (size_t c = 0; c < d; ++c) {
    const auto& spec = table.schema.columns[c];
    if (spec.kind == ColumnKind::Numeric) {
      numeric[c].reserve(table.n_rows());
      for (const auto& row : table.rows) numeric[c].push_back(std::get<double>(row[c]));
    } else {
      codes[c].reserve(table.n_rows());
      for (const auto& row : table.rows)
        codes[c].push_back(spec.category_index(std::get<std::string>(row[c])));
    }
  }

  for (size_t i = 0; i < d; ++i) {
    out.value[i][i] = 1.0;
    for (size_t j = i + 1; j < d; ++j) {
      const auto& si = table.schema.columns[i];
      const auto& sj = table.schema.columns[j];
      bool deg = false;
      double v = 0.0;
      if (si.kind == ColumnKind::Numeric && sj.kind == ColumnKind::Numeric) {
        v = pearson_abs(numeric[i], numeric[j], &deg);
      } else if (si.kind != ColumnKind::Numeric && sj.kind != ColumnKind::Numeric) {
        v = cramers_v_corrected(codes[i], codes[j], static_cast<int>(si.categories.size()),
                                static_cast<int>(sj.categories.size()), &deg);
      } else if (si.kind == ColumnKind::Numeric) {
        v = correlation_ratio(codes[j], numeric[i], static_cast<int>(sj.categories.size()), &deg);
      } else {
        v = correlation_ratio(codes[i], numeric[j], static_cast<int>(si.categories.size()), &deg);
      }
      out.value[i][j] = out.value[j][i] = v;
      out.degenerate[i][j] = out.degenerate[j][i] = deg;
    }
  }
  return out;
}

int association_bucket(double v) {
  if (v < 0.1) return 0;
  if (v < 0.3) return 1;
  if (v < 0.5) return 2;
  return 3;
}

double cor_acc(const DataTable& real, const DataTable& synth) {
  check_same_schema(real, synth);
  require(real.n_cols() >= 2, "domain", "cor_acc needs at least two columns");
  auto mr = correlation_matrix(real);
  auto ms = correlation_matrix(synth);
  size_t n_pairs = 0, matches = 0;
  for (size_t i = 0; i < real.n_cols(); ++i)
    for (size_t j = i + 1; j < real.n_cols(); ++j) {
      ++n_pairs;
      matches += association_bucket(mr.value[i][j]) == association_bucket(ms.value[i][j]);
    }
  return static_cast<double>(matches) / static_cast<double>(n_pairs);
}

namespace {

// Feature map shared by train and test: standardized numerics (train
// moments) plus one-hot categoricals over schema categories.
struct FeatureMap {
  const tabular::TableSchema* schema;
  int target_index;
  std::vector<double> mean, stdev;  // per column, numeric only
  size_t dim = 0;

  static FeatureMap build(const DataTable& train, int target_index) {
    FeatureMap fm;
    fm.schema = &train.schema;
    fm.target_index = target_index;
    const size_t d = train.n_cols();
    fm.mean.assign(d, 0.0);
    fm.stdev.assign(d, 0.0);
    for (size_t c = 0; c < d; ++c) {
      if (static_cast<int>(c) == target_index) continue;
      const auto& spec = train.schema.columns[c];
      if (spec.kind == ColumnKind::Numeric) {
        double m = 0.0;
        for (const auto& row : train.rows) m += std::get<double>(row[c]);
        m /= train.n_rows();
        double s = 0.0;
        for (const auto& row : train.rows) {
          double dd = std::get<double>(row[c]) - m;
          s += dd * dd;
        }
        fm.mean[c] = m;
        fm.stdev[c] = std::sqrt(s / train.n_rows());
        fm.dim += 1;
      } else {
        fm.dim += spec.categories.size();
      }
    }
    return fm;
  }

  void fill(const tabular::Row& row, std::vector<double>& x) const {
    x.assign(dim, 0.0);
    size_t at = 0;
    for (size_t c = 0; c < schema->columns.size(); ++c) {
      if (static_cast<int>(c) == target_index) continue;
      const auto& spec = schema->columns[c];
      if (spec.kind == ColumnKind::Numeric) {
        double v = std::get<double>(row[c]);
        x[at++] = stdev[c] > 0.0 ? (v - mean[c]) / stdev[c] : 0.0;
      } else {
        int k = spec.category_index(std::get<std::string>(row[c]));
        if (k >= 0) x[at + k] = 1.0;
        at += spec.categories.size();
      }
    }
  }
};

// Solves A x = b in place by Gaussian elimination with partial pivoting.
std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const size_t n = b.size();
  for (size_t col = 0; col < n; ++col) {
    size_t pivot = col;
    for (size_t r = col + 1; r < n; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    double diag = a[col][col];
    require(std::fabs(diag) > 1e-300, "internal", "singular system in logistic regression");
    for (size_t r = col + 1; r < n; ++r) {
      double f = a[r][col] / diag;
      if (f == 0.0) continue;
      for (size_t k = col; k < n; ++k) a[r][k] -= f * a[col][k];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (size_t ri = n; ri-- > 0;) {
    double acc = b[ri];
    for (size_t k = ri + 1; k < n; ++k) acc -= a[ri][k] * x[k];
    x[ri] = acc / a[ri][ri];
  }
  return x;
}

double sigmoid(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

// Ridge-regularized logistic regression by Newton iterations; the intercept
// (last coefficient) is unpenalized.
std::vector<double> fit_logistic(const std::vector<std::vector<double>>& x,
                                 const std::vector<int>& y, double ridge, int max_iters) {
  const size_t n = x.size();
  const size_t d = x[0].size() + 1;  // + intercept
  std::vector<double> w(d, 0.0);
  for (int iter = 0; iter < max_iters; ++iter) {
    std::vector<std::vector<double>> hess(d, std::vector<double>(d, 0.0));
    std::vector<double> grad(d, 0.0);
    for (size_t i = 0; i < n; ++i) {
      double z = w[d - 1];
      for (size_t k = 0; k + 1 < d; ++k) z += w[k] * x[i][k];
      double p = sigmoid(z);
      double g = p - y[i];
      double r = std::max(p * (1.0 - p), 1e-10);
      for (size_t a = 0; a + 1 < d; ++a) {
        grad[a] += g * x[i][a];
        for (size_t b = a; b + 1 < d; ++b) hess[a][b] += r * x[i][a] * x[i][b];
        hess[a][d - 1] += r * x[i][a];
      }
      grad[d - 1] += g;
      hess[d - 1][d - 1] += r;
    }
    for (size_t a = 0; a + 1 < d; ++a) {
      grad[a] += ridge * w[a];
      hess[a][a] += ridge;
    }
    for (size_t a = 0; a < d; ++a)
      for (size_t b = 0; b < a; ++b) hess[a][b] = hess[b][a];
    auto delta = solve(std::move(hess), grad);
    double max_change = 0.0;
    for (size_t k = 0; k < d; ++k) {
      w[k] -= delta[k];
      max_change = std::max(max_change, std::fabs(delta[k]));
    }
    if (max_change < 1e-10) break;
  }
  return w;
}

double auc_rank(const std::vector<double>& scores, const std::vector<int>& labels) {
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  long n_pos = 0, n_neg = 0;
  for (size_t k = 0; k < n; ++k) {
    if (labels[k] == 1) {
      rank_sum_pos += rank[k];
      ++n_pos;
    } else {
      ++n_neg;
    }
  }
  if (n_pos == 0 || n_neg == 0) return 0.5;
  return (rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1)) /
         (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace

EfficacyResult ml_efficacy(const DataTable& synth_train, const DataTable& real_test,
                           uint64_t /*seed*/) {
  check_same_schema(synth_train, real_test);
  int t = real_test.schema.target_index();
  if (t < 0) t = synth_train.schema.target_index();
  require(t >= 0, "domain", "ml_efficacy requires a target column");
  const auto& target_spec = real_test.schema.columns[t];
  require(target_spec.categories.size() == 2, "domain",
          "ml_efficacy requires a binary target, got " +
              std::to_string(target_spec.categories.size()) + " classes in the real test set");

  // Positive class: the minority class of the real test distribution
  // (schema-order tie break). Labels compare by value, so synthetic target
  // strings outside the real categories count as negative.
  long test_counts[2] = {0, 0};
  for (const auto& row : real_test.rows) {
    int k = target_spec.category_index(std::get<std::string>(row[t]));
    require(k >= 0, "domain", "real test target value outside its categories");
    ++test_counts[k];
  }
  int positive = test_counts[1] < test_counts[0] ? 1 : 0;

  EfficacyResult out;
  out.positive_class = target_spec.categories[positive];

  auto label_of = [&](const tabular::Row& row) {
    return std::get<std::string>(row[t]) == out.positive_class ? 1 : 0;
  };

  long train_pos = 0;
  for (const auto& row : synth_train.rows) train_pos += label_of(row);
  bool single_class = train_pos == 0 || train_pos == static_cast<long>(synth_train.n_rows());

  std::vector<double> scores(real_test.n_rows());
  std::vector<int> labels(real_test.n_rows());
  for (size_t i = 0; i < real_test.n_rows(); ++i) labels[i] = label_of(real_test.rows[i]);

  if (single_class) {
    out.degenerate = true;
    double constant = train_pos > 0 ? 1.0 : 0.0;
    std::fill(scores.begin(), scores.end(), constant);
  } else {
    FeatureMap fm = FeatureMap::build(synth_train, t);
    std::vector<std::vector<double>> x(synth_train.n_rows());
    std::vector<int> y(synth_train.n_rows());
    for (size_t i = 0; i < synth_train.n_rows(); ++i) {
      fm.fill(synth_train.rows[i], x[i]);
      y[i] = label_of(synth_train.rows[i]);
    }
    auto w = fit_logistic(x, y, 1e-3, 50);
    std::vector<double> xt;
    for (size_t i = 0; i < real_test.n_rows(); ++i) {
      fm.fill(real_test.rows[i], xt);
      double z = w.back();
      for (size_t k = 0; k + 1 < w.size(); ++k) z += w[k] * xt[k];
      scores[i] = sigmoid(z);
    }
  }

  long tp = 0, fp = 0, fn = 0, correct = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    int pred = scores[i] >= 0.5 ? 1 : 0;
    correct += pred == labels[i];
    tp += pred == 1 && labels[i] == 1;
    fp += pred == 1 && labels[i] == 0;
    fn += pred == 0 && labels[i] == 1;
  }
  out.acc = static_cast<double>(correct) / static_cast<double>(scores.size());
  out.f1 = (2 * tp + fp + fn) > 0
               ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn)
               : 0.0;
  out.auc = auc_rank(scores, labels);
  return out;
}

MetricsReport evaluate(const DataTable& real_test, const DataTable& synth,
                       const std::vector<int>& bins, uint64_t seed) {
  require(!bins.empty(), "config", "at least one bin setting required");
  MetricsReport report;
  report.bins = bins;
  report.real_rows = real_test.n_rows();
  report.synth_rows = synth.n_rows();
  for (int b : bins) {
    report.hist_per_bins.push_back(hist_intersection(real_test, synth, b));
    report.pair_per_bins.push_back(real_test.n_cols() >= 2 ? pair_similarity(real_test, synth, b)
                                                           : 0.0);
  }
  auto avg = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  report.hist_avg = avg(report.hist_per_bins);
  report.pair_avg = avg(report.pair_per_bins);
  report.cor_acc = real_test.n_cols() >= 2 ? cor_acc(real_test, synth) : 0.0;
  if (!real_test.schema.target_column.empty() &&
      real_test.schema.columns[real_test.schema.target_index()].categories.size() == 2)
    report.efficacy = ml_efficacy(synth, real_test, seed);
  return report;
}

std::string MetricsReport::to_json() const {
  json j;
  if (perplexity) {
    j["perplexity"] = {{"total", perplexity->total},
                       {"key", perplexity->key},
                       {"value", perplexity->value},
                       {"non_functional", perplexity->non_functional}};
  }
  j["bins"] = bins;
  j["hist"] = {{"per_bins", hist_per_bins}, {"average", hist_avg}};
  j["pair"] = {{"per_bins", pair_per_bins}, {"average", pair_avg}};
  j["cor_acc"] = cor_acc;
  j["efficacy"] = {{"f1", efficacy.f1},
                   {"auc", efficacy.auc},
                   {"acc", efficacy.acc},
                   {"degenerate", efficacy.degenerate},
                   {"positive_class", efficacy.positive_class}};
  j["rows"] = {{"real", real_rows}, {"synthetic", synth_rows}};
  return j.dump(2);
}

}  // namespace dptab::metrics
