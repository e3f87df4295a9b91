#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dptab/common.hpp"
#include "dptab/lm.hpp"
#include "dptab/tabular.hpp"

namespace dptab::metrics {

enum class RoleFilter { All, Key, Value, NonFunctional };

// exp of the mean NLL over tokens passing the filter, pooled over the whole
// corpus. Errors when the filter selects no tokens.
double perplexity(const lm::ModelParams& params, const std::vector<lm::Batch>& corpus,
                  RoleFilter filter);

struct PerplexityBreakdown {
  double total = 0.0;
  double key = 0.0;
  double value = 0.0;
  double non_functional = 0.0;
};

PerplexityBreakdown perplexity_breakdown(const lm::ModelParams& params,
                                         const std::vector<lm::Batch>& corpus);

// Mean over columns of sum_c min(p_c, q_c) between real and synthetic
// marginal histograms. Categorical columns bin by category; numeric columns
// use `bins` equal-width bins over the combined real+synth min/max.
double hist_intersection(const tabular::DataTable& real, const tabular::DataTable& synth,
                         int bins);

// Two-way version: joint histogram intersection averaged over all unordered
// column pairs, same per-column binning as hist_intersection.
double pair_similarity(const tabular::DataTable& real, const tabular::DataTable& synth, int bins);

struct AssociationMatrix {
  std::vector<std::vector<double>> value;  // symmetric, [0,1], diagonal 1
  std::vector<std::vector<bool>> degenerate;  // true where a zero-variance column forced 0
};

// Pairwise association: |Pearson| for numeric-numeric, bias-corrected
// Cramer's V for categorical-categorical, correlation ratio (numeric grouped
// by categorical) otherwise. Contingency dimensions count observed levels.
AssociationMatrix correlation_matrix(const tabular::DataTable& table);

// 0: [0, 0.1)  1: [0.1, 0.3)  2: [0.3, 0.5)  3: [0.5, 1]
int association_bucket(double v);

// Fraction of unordered column pairs whose association buckets agree.
double cor_acc(const tabular::DataTable& real, const tabular::DataTable& synth);

struct EfficacyResult {
  double f1 = 0.0;   // positive class = minority class of the real test set
  double auc = 0.5;  // rank statistic with tie correction
  double acc = 0.0;
  bool degenerate = false;  // single-class training target
  std::string positive_class;
};

// Logistic regression (one-hot categoricals, standardized numerics, L2
// ridge, Newton steps) trained on synthetic rows and scored on real test
// rows. Deterministic; `seed` is accepted for interface parity.
EfficacyResult ml_efficacy(const tabular::DataTable& synth_train,
                           const tabular::DataTable& real_test, uint64_t seed);

struct MetricsReport {
  std::optional<PerplexityBreakdown> perplexity;
  std::vector<int> bins;
  std::vector<double> hist_per_bins;  // aligned with bins
  std::vector<double> pair_per_bins;
  double hist_avg = 0.0;
  double pair_avg = 0.0;
  double cor_acc = 0.0;
  EfficacyResult efficacy;
  size_t real_rows = 0;
  size_t synth_rows = 0;

  std::string to_json() const;
};

MetricsReport evaluate(const tabular::DataTable& real_test, const tabular::DataTable& synth,
                       const std::vector<int>& bins, uint64_t seed);

}  // namespace dptab::metrics
