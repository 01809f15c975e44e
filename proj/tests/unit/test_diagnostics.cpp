#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "cityprobe/diagnostics.hpp"
#include "cityprobe/error.hpp"
#include "cityprobe/rng.hpp"

using namespace cityprobe;

TEST_CASE("modal fixture: top-2 share is 230/245 and flags at 0.5") {
  auto values = oracles::modal_fixture_values();
  auto report = detect_generic(values, 2, 0.5);
  CHECK(report.n == 245);
  CHECK(report.top_share == doctest::Approx(230.0 / 245.0).epsilon(1e-12));
  CHECK(report.top_share == doctest::Approx(0.9388).epsilon(1e-3));
  CHECK(report.flagged);
  REQUIRE(report.top_values.size() == 2);
  CHECK(report.top_values[0] == 50.0);
  CHECK(report.top_values[1] == 5.0);
}

TEST_CASE("245 distinct values are not flagged") {
  std::vector<double> values;
  for (int i = 0; i < 245; ++i) values.push_back(1000.0 + i);
  auto report = detect_generic(values, 2, 0.5);
  CHECK(report.top_share == doctest::Approx(2.0 / 245.0));
  CHECK_FALSE(report.flagged);
}

TEST_CASE("identical values: top share is 1") {
  auto report = detect_generic(std::vector<double>(31, 42.0));
  CHECK(report.top_share == 1.0);
  CHECK(report.flagged);
}

TEST_CASE("near-identical values share a rounded bucket") {
  // 6 significant digits: both round to 50.0000
  auto report = detect_generic({50.0, 50.0000001, 49.99999999, 1.0}, 1, 0.5);
  CHECK(report.top_share == doctest::Approx(0.75));
  CHECK(report.flagged);
}

TEST_CASE("top_share is permutation-invariant and monotone in the modal count") {
  std::mt19937_64 rng(6);
  for (int round = 0; round < 20; ++round) {
    std::vector<double> values;
    size_t n = 10 + rng() % 50;
    for (size_t i = 0; i < n; ++i) values.push_back(static_cast<double>(rng() % 7));
    auto before = detect_generic(values).top_share;

    std::vector<double> shuffled = values;
    for (size_t i = shuffled.size() - 1; i > 0; --i) {
      std::swap(shuffled[i], shuffled[bounded_uniform(rng, i + 1)]);
    }
    CHECK(detect_generic(shuffled).top_share == doctest::Approx(before).epsilon(1e-12));

    auto modal = detect_generic(values).top_values.front();
    values.push_back(modal);
    CHECK(detect_generic(values).top_share >= before - 1e-12);
  }
}

TEST_CASE("variance detector basics") {
  std::map<std::string, std::vector<double>> runs;
  runs["stable"] = std::vector<double>(100, 7.5);
  auto report = detect_variance(runs);
  CHECK(report.per_subject.at("stable").cv == 0.0);
  CHECK(report.flagged_subjects.empty());

  runs.clear();
  runs["subject"] = {90, 100, 110};
  report = detect_variance(runs, 0.2);
  CHECK(report.per_subject.at("subject").mean == doctest::Approx(100.0));
  CHECK(report.per_subject.at("subject").std_dev == doctest::Approx(8.16496580927726));
  CHECK(report.per_subject.at("subject").cv == doctest::Approx(0.0816496580927726));
  CHECK_FALSE(report.flagged_subjects.count("subject"));

  // rescaled deviation series has the documented normalizer
  auto& series = report.per_subject.at("subject").rescaled_deviation;
  REQUIRE(series.size() == 3);
  CHECK(series[0] == doctest::Approx(-0.1));
  CHECK(series[2] == doctest::Approx(0.1));
}

TEST_CASE("uncertain subject flags, confident subject does not") {
  std::mt19937_64 rng(2025);
  std::map<std::string, std::vector<double>> runs;
  std::vector<double> guessing, confident;
  for (int i = 0; i < 100; ++i) {
    guessing.push_back(10.0 + 90.0 * unit_uniform(rng));  // uniform(10,100)
    double u1 = unit_uniform(rng), u2 = unit_uniform(rng);
    confident.push_back(1000.0 +
                        10.0 * std::sqrt(-2.0 * std::log(u1)) *
                            std::cos(2.0 * 3.14159265358979323846 * u2));  // N(1000,10)
  }
  runs["guessing_subject"] = guessing;
  runs["confident_subject"] = confident;

  auto report = detect_variance(runs, 0.2);
  CHECK(report.flagged_subjects.count("guessing_subject") == 1);
  CHECK(report.flagged_subjects.count("confident_subject") == 0);

  // agreement with the independent cv oracle
  CHECK(report.per_subject.at("guessing_subject").cv ==
        doctest::Approx(oracles::naive_cv(guessing)).epsilon(1e-12));
  CHECK(report.per_subject.at("confident_subject").cv ==
        doctest::Approx(oracles::naive_cv(confident)).epsilon(1e-12));
}

TEST_CASE("variance detector edge cases") {
  std::map<std::string, std::vector<double>> runs;
  runs["zero_mean"] = {-1.0, 1.0};
  auto report = detect_variance(runs);
  CHECK(report.undefined_cv.count("zero_mean") == 1);
  CHECK(report.flagged_subjects.empty());

  runs["short"] = {1.0};
  try {
    detect_variance(runs);
    FAIL("expected TooFewRepeats");
  } catch (const Error& e) {
    CHECK(e.code() == errc::too_few_repeats);
  }
}

TEST_CASE("cv is invariant under positive scaling") {
  std::mt19937_64 rng(14);
  for (int round = 0; round < 20; ++round) {
    std::vector<double> values;
    for (int i = 0; i < 10; ++i) values.push_back(1.0 + unit_uniform(rng));
    double alpha = 0.1 + 10.0 * unit_uniform(rng);
    std::vector<double> scaled = values;
    for (auto& v : scaled) v *= alpha;
    std::map<std::string, std::vector<double>> runs{{"a", values}, {"b", scaled}};
    auto report = detect_variance(runs);
    CHECK(report.per_subject.at("a").cv ==
          doctest::Approx(report.per_subject.at("b").cv).epsilon(1e-12));
  }
}

TEST_CASE("scale consistency on exact and boundary pairs") {
  std::map<std::string, double> small{{"x", 5.5}};
  std::map<std::string, double> large{{"x", 55.0}};
  auto report = scale_consistency(small, large);
  CHECK(report.per_place_std.at("x") == 0.0);
  CHECK(report.fraction_below_1 == 1.0);

  small = {{"x", 5.0}};
  large = {{"x", 70.0}};  // pair {5, 7}: std exactly 1.0, not counted
  report = scale_consistency(small, large);
  CHECK(report.per_place_std.at("x") == doctest::Approx(1.0));
  CHECK(report.fraction_below_1 == 0.0);

  try {
    scale_consistency({{"a", 1.0}}, {{"b", 1.0}});
    FAIL("expected NoOverlap");
  } catch (const Error& e) {
    CHECK(e.code() == errc::no_overlap);
  }
}

TEST_CASE("constructed 13-of-20 fixture lands at 0.65, matching a hand oracle") {
  std::map<std::string, double> small, large;
  for (int i = 0; i < 20; ++i) {
    std::string place = "place" + std::to_string(i);
    double base = 2.0 + 0.3 * i;
    small[place] = base;
    // 13 places: |small - large/10| < 2; the other 7: well above
    large[place] = (i < 13) ? 10.0 * (base + 1.0) : 10.0 * (base + 5.0);
  }
  auto report = scale_consistency(small, large);

  size_t below = 0;
  for (const auto& [place, small_value] : small) {
    std::vector<double> pair = {small_value, large.at(place) / 10.0};
    if (oracles::naive_population_std(pair) < 1.0) ++below;
  }
  CHECK(report.fraction_below_1 ==
        doctest::Approx(static_cast<double>(below) / 20.0).epsilon(1e-15));
  CHECK(report.fraction_below_1 == doctest::Approx(0.65));
  CHECK(report.fraction_below_1 > 0.6);
}

TEST_CASE("pearson perfect correlations") {
  auto row = pearson({1, 2, 3}, {2, 4, 6});
  CHECK(row.r == doctest::Approx(1.0));
  CHECK(row.p == doctest::Approx(0.0).epsilon(1e-12));

  row = pearson({1, 2, 3}, {3, 2, 1});
  CHECK(row.r == doctest::Approx(-1.0));
}

TEST_CASE("pearson matches the quadrature oracle on random inputs") {
  std::mt19937_64 rng(30);
  for (int round = 0; round < 30; ++round) {
    size_t n = 5 + rng() % 46;
    std::vector<double> x(n), y(n);
    for (size_t i = 0; i < n; ++i) {
      x[i] = 10.0 * unit_uniform(rng);
      y[i] = 0.5 * x[i] + 5.0 * unit_uniform(rng);
    }
    auto ours = pearson(x, y);
    auto reference = oracles::naive_pearson(x, y);
    CHECK(std::fabs(ours.r - reference.r) < 1e-9);
    CHECK(std::fabs(ours.p - reference.p) < 1e-6);
  }
}

TEST_CASE("pearson invariances") {
  std::mt19937_64 rng(40);
  std::vector<double> x(20), y(20);
  for (size_t i = 0; i < 20; ++i) {
    x[i] = unit_uniform(rng);
    y[i] = unit_uniform(rng) + 0.3 * x[i];
  }
  auto base = pearson(x, y);

  std::vector<double> shifted = x;
  for (auto& v : shifted) v = 3.0 * v + 11.0;  // positive affine
  CHECK(pearson(shifted, y).r == doctest::Approx(base.r).epsilon(1e-12));

  std::vector<double> negated = y;
  for (auto& v : negated) v = -v;
  CHECK(pearson(x, negated).r == doctest::Approx(-base.r).epsilon(1e-12));
}

TEST_CASE("pearson contract boundaries") {
  try {
    pearson({1, 1, 1}, {1, 2, 3});
    FAIL("expected ConstantInput");
  } catch (const Error& e) {
    CHECK(e.code() == errc::constant_input);
  }
  try {
    pearson({1, 2}, {3, 4});
    FAIL("expected TooShort");
  } catch (const Error& e) {
    CHECK(e.code() == errc::too_short);
  }
}

TEST_CASE("spearman rank behavior") {
  CHECK(spearman_rank({1, 5, 9, 20}, {2, 3, 8, 100}) == doctest::Approx(1.0));
  CHECK(spearman_rank({1, 5, 9, 20}, {100, 8, 3, 2}) == doctest::Approx(-1.0));

  std::mt19937_64 rng(50);
  for (int round = 0; round < 30; ++round) {
    size_t n = 6 + rng() % 20;
    std::vector<double> x(n), y(n);
    for (size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng() % 5);  // tie-heavy
      y[i] = static_cast<double>(rng() % 4) + 0.5 * x[i];
    }
    bool x_constant = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
    bool y_constant = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (x_constant || y_constant) continue;
    CHECK(std::fabs(spearman_rank(x, y) - oracles::naive_spearman(x, y)) < 1e-9);
  }
}

TEST_CASE("spearman is invariant under strictly monotone transforms") {
  std::mt19937_64 rng(60);
  for (int round = 0; round < 30; ++round) {
    size_t n = 8 + rng() % 15;
    std::vector<double> x(n), y(n);
    for (size_t i = 0; i < n; ++i) {
      x[i] = 10.0 * unit_uniform(rng);
      y[i] = 10.0 * unit_uniform(rng) + x[i];
    }
    double base = spearman_rank(x, y);
    std::vector<double> transformed = x;
    for (auto& v : transformed) v = std::exp(v / 3.0);  // strictly increasing
    CHECK(spearman_rank(transformed, y) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("relative error table reproduces the published rows") {
  std::map<std::string, double> others{{"claude", 26610.090},
                                       {"deepseek", 28310.989},
                                       {"qwen2", 29364.221}};
  auto table = relative_error_table(24654.910, others);
  CHECK(format_relative(table.at("claude")) == "+7.9%");
  CHECK(format_relative(table.at("deepseek")) == "+14.8%");
  CHECK(format_relative(table.at("qwen2")) == "+19.1%");

  auto same = relative_error_table(100.0, {{"same", 100.0}});
  CHECK(format_relative(same.at("same")) == "0.0%");

  auto better = relative_error_table(100.0, {{"better", 96.55}});
  CHECK(format_relative(better.at("better")) == "-3.5%");

  try {
    relative_error_table(0.0, others);
    FAIL("expected NonPositiveBaseline");
  } catch (const Error& e) {
    CHECK(e.code() == errc::non_positive_baseline);
  }
}

TEST_CASE("half-up display rounding") {
  // 7.75 is exactly representable; the half must round away from zero
  CHECK(round_half_up_1dp(7.75) == doctest::Approx(7.8));
  CHECK(round_half_up_1dp(-7.75) == doctest::Approx(-7.8));
  CHECK(round_half_up_1dp(7.84999) == doctest::Approx(7.8));
  CHECK(round_half_up_1dp(7.86) == doctest::Approx(7.9));
  CHECK(round_half_up_1dp(0.0) == 0.0);
}
