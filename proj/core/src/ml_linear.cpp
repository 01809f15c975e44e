#include <cmath>

#include "cityprobe/error.hpp"
#include "ml_internal.hpp"

namespace cityprobe::detail {

namespace {

/// Ridge with intercept: columns standardized to zero mean / unit variance
/// (population sigma; constant columns stay zero and contribute nothing),
/// targets centered, (X'X + lambda*I) w = X'y solved by Cholesky. The
/// intercept is the target mean, never penalized.
class RidgeModel : public Model {
 public:
  std::vector<double> means;
  std::vector<double> sigmas;
  std::vector<double> weights;
  double intercept = 0.0;

  double predict_row(const std::vector<double>& row) const override {
    double out = intercept;
    for (size_t j = 0; j < weights.size(); ++j) {
      out += weights[j] * (row[j] - means[j]) / sigmas[j];
    }
    return out;
  }
};

// In-place lower Cholesky of a symmetric positive definite matrix.
void cholesky_solve(std::vector<std::vector<double>>& a, std::vector<double>& b) {
  const size_t d = a.size();
  for (size_t j = 0; j < d; ++j) {
    double pivot = a[j][j];
    for (size_t k = 0; k < j; ++k) pivot -= a[j][k] * a[j][k];
    if (!(pivot > 0.0)) fail(errc::singular, "Gram matrix is not positive definite");
    a[j][j] = std::sqrt(pivot);
    for (size_t i = j + 1; i < d; ++i) {
      double v = a[i][j];
      for (size_t k = 0; k < j; ++k) v -= a[i][k] * a[j][k];
      a[i][j] = v / a[j][j];
    }
  }
  // forward: L z = b
  for (size_t i = 0; i < d; ++i) {
    double v = b[i];
    for (size_t k = 0; k < i; ++k) v -= a[i][k] * b[k];
    b[i] = v / a[i][i];
  }
  // backward: L' w = z
  for (size_t ii = d; ii-- > 0;) {
    double v = b[ii];
    for (size_t k = ii + 1; k < d; ++k) v -= a[k][ii] * b[k];
    b[ii] = v / a[ii][ii];
  }
}

}  // namespace

std::shared_ptr<const Model> fit_linear(const RegressorSpec& spec, const Rows& X,
                                        const std::vector<double>& y) {
  const size_t n = X.size();
  const size_t d = X.front().size();

  auto model = std::make_shared<RidgeModel>();
  model->intercept = 0.0;
  for (double v : y) model->intercept += v;
  model->intercept /= static_cast<double>(n);

  model->means.assign(d, 0.0);
  model->sigmas.assign(d, 1.0);
  for (size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += X[i][j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) var += (X[i][j] - mean) * (X[i][j] - mean);
    var /= static_cast<double>(n);
    model->means[j] = mean;
    model->sigmas[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }

  // standardized design, centered targets
  Rows Z(n, std::vector<double>(d));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < d; ++j) Z[i][j] = (X[i][j] - model->means[j]) / model->sigmas[j];
  }

  std::vector<std::vector<double>> gram(d, std::vector<double>(d, 0.0));
  std::vector<double> rhs(d, 0.0);
  for (size_t i = 0; i < n; ++i) {
    const double yc = y[i] - model->intercept;
    for (size_t j = 0; j < d; ++j) {
      rhs[j] += Z[i][j] * yc;
      for (size_t l = j; l < d; ++l) gram[j][l] += Z[i][j] * Z[i][l];
    }
  }
  for (size_t j = 0; j < d; ++j) {
    gram[j][j] += spec.ridge_lambda;
    for (size_t l = 0; l < j; ++l) gram[j][l] = gram[l][j];
  }

  cholesky_solve(gram, rhs);
  model->weights = std::move(rhs);
  return model;
}

}  // namespace cityprobe::detail
