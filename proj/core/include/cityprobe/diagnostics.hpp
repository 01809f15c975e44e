#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace cityprobe {

/// Modal-value share analysis: a high top-m share of identical rounded
/// answers marks placeholder output.
struct GenericValueReport {
  size_t n = 0;
  std::vector<std::pair<double, size_t>> value_counts;  // count desc, value asc
  std::vector<double> top_values;                       // the m most frequent
  double top_share = 0.0;
  bool flagged = false;
  double threshold = 0.5;
};

/// Values are bucketed exactly after rounding to 6 significant digits;
/// flagged iff the m most frequent buckets cover >= threshold of all
/// answers.
GenericValueReport detect_generic(const std::vector<double>& values, int m = 2,
                                  double threshold = 0.5);

struct SubjectVariance {
  double mean = 0.0;
  double std_dev = 0.0;  // population (divide by n)
  double cv = 0.0;       // std_dev / |mean|
  std::vector<double> rescaled_deviation;  // (x_i - mean) / |mean|
};

struct VarianceReport {
  std::map<std::string, SubjectVariance> per_subject;
  std::set<std::string> flagged_subjects;   // cv > cv_threshold
  std::set<std::string> undefined_cv;       // mean == 0
  double cv_threshold = 0.2;
};

/// Cross-generation consistency: repeated answers per subject, keyed by
/// rendered place name. Every series must have >= 2 repeats.
VarianceReport detect_variance(const std::map<std::string, std::vector<double>>& runs,
                               double cv_threshold = 0.2);

struct ScaleConsistencyReport {
  std::map<std::string, double> per_place_std;  // population std of {small, large/10}
  double fraction_below_1 = 0.0;
};

/// Compares feature values asked on a 0-10 scale against the same features
/// asked on a 0-100 scale (divided by 10). Only places present in both
/// maps are scored.
ScaleConsistencyReport scale_consistency(const std::map<std::string, double>& v_small,
                                         const std::map<std::string, double>& v_large);

struct CorrelationRow {
  std::string feature;
  double r = 0.0;
  double p = 1.0;  // two-sided, Student-t with n-2 dof
  size_t n = 0;
};

CorrelationRow pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Pearson correlation of average ranks; ties share their mean rank.
double spearman_rank(const std::vector<double>& x, const std::vector<double>& y);

/// Percent increase of each RMSE over the baseline, unrounded.
std::map<std::string, double> relative_error_table(double baseline_rmse,
                                                   const std::map<std::string, double>& others);

/// Display rounding for relative errors: half away from zero, one decimal.
double round_half_up_1dp(double value);

/// "+7.9%", "-3.2%", "0.0%".
std::string format_relative(double raw_percent);

/// Regularized incomplete beta I_x(a, b), |error| < 1e-8. Exposed for the
/// statistics test oracles.
double regularized_incomplete_beta(double a, double b, double x);

}  // namespace cityprobe
