#include "cityprobe/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>

#include "cityprobe/error.hpp"

namespace cityprobe {

namespace {

double mean_of(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double population_std(const std::vector<double>& values, double mean) {
  double sum = 0.0;
  for (double v : values) sum += (v - mean) * (v - mean);
  return std::sqrt(sum / static_cast<double>(values.size()));
}

// Bucket key: 6 significant digits, so 49.9999999 and 50.0 count together.
double round_6sig(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", value);
  return std::strtod(buf, nullptr);
}

// Continued fraction for the incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;

  double qab = a + b;
  double qap = a + 1.0;
  double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                    a * std::log(x) + b * std::log1p(-x);
  double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_cf(a, b, x) / a;
  }
  return 1.0 - std::exp(std::lgamma(a + b) - std::lgamma(b) - std::lgamma(a) +
                        b * std::log1p(-x) + a * std::log(x)) *
                   beta_cf(b, a, 1.0 - x) / b;
}

GenericValueReport detect_generic(const std::vector<double>& values, int m, double threshold) {
  if (values.empty()) fail(errc::empty_input, "no values to analyze");
  if (m < 1) fail(errc::invalid_argument, "m must be >= 1");

  std::map<double, size_t> buckets;
  for (double v : values) ++buckets[round_6sig(v)];

  GenericValueReport report;
  report.n = values.size();
  report.threshold = threshold;
  report.value_counts.assign(buckets.begin(), buckets.end());
  std::sort(report.value_counts.begin(), report.value_counts.end(),
            [](const auto& a, const auto& b) {
              if (a.second != b.second) return a.second > b.second;
              return a.first < b.first;
            });

  size_t top_count = 0;
  for (size_t i = 0; i < report.value_counts.size() && i < static_cast<size_t>(m); ++i) {
    report.top_values.push_back(report.value_counts[i].first);
    top_count += report.value_counts[i].second;
  }
  report.top_share = static_cast<double>(top_count) / static_cast<double>(report.n);
  report.flagged = report.top_share >= threshold;
  return report;
}

VarianceReport detect_variance(const std::map<std::string, std::vector<double>>& runs,
                               double cv_threshold) {
  if (runs.empty()) fail(errc::empty_input, "no subjects");
  VarianceReport report;
  report.cv_threshold = cv_threshold;
  for (const auto& [subject, answers] : runs) {
    if (answers.size() < 2) fail(errc::too_few_repeats, subject);
    SubjectVariance sv;
    sv.mean = mean_of(answers);
    sv.std_dev = population_std(answers, sv.mean);
    if (sv.mean == 0.0) {
      report.undefined_cv.insert(subject);
      sv.cv = std::numeric_limits<double>::quiet_NaN();
    } else {
      sv.cv = sv.std_dev / std::fabs(sv.mean);
      sv.rescaled_deviation.reserve(answers.size());
      for (double a : answers) sv.rescaled_deviation.push_back((a - sv.mean) / std::fabs(sv.mean));
      if (sv.cv > cv_threshold) report.flagged_subjects.insert(subject);
    }
    report.per_subject.emplace(subject, std::move(sv));
  }
  return report;
}

ScaleConsistencyReport scale_consistency(const std::map<std::string, double>& v_small,
                                         const std::map<std::string, double>& v_large) {
  ScaleConsistencyReport report;
  size_t below = 0;
  for (const auto& [place, small] : v_small) {
    auto it = v_large.find(place);
    if (it == v_large.end()) continue;
    double rescaled = it->second / 10.0;
    double mean = (small + rescaled) / 2.0;
    double std_dev = std::sqrt(((small - mean) * (small - mean) +
                                (rescaled - mean) * (rescaled - mean)) /
                               2.0);
    report.per_place_std[place] = std_dev;
    if (std_dev < 1.0) ++below;
  }
  if (report.per_place_std.empty()) fail(errc::no_overlap, "no shared places");
  report.fraction_below_1 =
      static_cast<double>(below) / static_cast<double>(report.per_place_std.size());
  return report;
}

CorrelationRow pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    fail(errc::length_mismatch,
         std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  }
  const size_t n = x.size();
  if (n < 3) fail(errc::too_short, "need n >= 3");

  double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) fail(errc::constant_input, "constant vector");

  CorrelationRow row;
  row.n = n;
  row.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);

  const double dof = static_cast<double>(n - 2);
  const double r2 = row.r * row.r;
  if (r2 >= 1.0) {
    row.p = 0.0;
  } else {
    // two-sided p of t = r*sqrt(dof/(1-r^2)) equals I_x(dof/2, 1/2) with
    // x = dof/(dof + t^2) = 1 - r^2
    row.p = regularized_incomplete_beta(dof / 2.0, 0.5, 1.0 - r2);
  }
  return row;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return values[a] < values[b]; });

  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_rank(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    fail(errc::length_mismatch,
         std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  }
  if (x.size() < 3) fail(errc::too_short, "need n >= 3");
  return pearson(average_ranks(x), average_ranks(y)).r;
}

std::map<std::string, double> relative_error_table(double baseline_rmse,
                                                   const std::map<std::string, double>& others) {
  if (!(baseline_rmse > 0.0)) fail(errc::non_positive_baseline, "baseline RMSE must be > 0");
  std::map<std::string, double> out;
  for (const auto& [name, value] : others) {
    out[name] = 100.0 * (value - baseline_rmse) / baseline_rmse;
  }
  return out;
}

double round_half_up_1dp(double value) {
  double magnitude = std::floor(std::fabs(value) * 10.0 + 0.5) / 10.0;
  return value < 0.0 ? -magnitude : magnitude;
}

std::string format_relative(double raw_percent) {
  double rounded = round_half_up_1dp(raw_percent);
  char buf[40];
  if (rounded > 0.0) {
    std::snprintf(buf, sizeof(buf), "+%.1f%%", rounded);
  } else if (rounded < 0.0) {
    std::snprintf(buf, sizeof(buf), "-%.1f%%", -rounded);
  } else {
    std::snprintf(buf, sizeof(buf), "0.0%%");
  }
  return buf;
}

}  // namespace cityprobe
