#include <algorithm>
#include <cmath>
#include <numeric>

#include "cityprobe/error.hpp"
#include "cityprobe/rng.hpp"
#include "ml_internal.hpp"

namespace cityprobe::detail {

namespace {

struct TreeNode {
  int feature = -1;  // -1: leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct TreeParams {
  int max_depth = 6;
  int min_leaf = 2;
  int mtry = 0;                    // 0: all features
  std::mt19937_64* rng = nullptr;  // only consulted when mtry > 0
};

/// CART regression tree. Splits minimize the summed child SSE (variance
/// reduction); thresholds are midpoints of consecutive distinct sorted
/// values; ties keep the lowest feature index and lowest threshold.
class RegressionTree {
 public:
  std::vector<TreeNode> nodes;

  double predict_row(const std::vector<double>& row) const {
    int at = 0;
    while (nodes[at].feature >= 0) {
      const TreeNode& node = nodes[at];
      at = row[static_cast<size_t>(node.feature)] <= node.threshold ? node.left : node.right;
    }
    return nodes[at].value;
  }

  void build(const Rows& X, const std::vector<double>& y, std::vector<size_t> indices,
             const TreeParams& params) {
    nodes.clear();
    grow(X, y, std::move(indices), 0, params);
  }

 private:
  struct Split {
    bool found = false;
    size_t feature = 0;
    double threshold = 0.0;
    double cost = 0.0;
  };

  static Split best_split(const Rows& X, const std::vector<double>& y,
                          const std::vector<size_t>& indices,
                          const std::vector<size_t>& features, int min_leaf) {
    const size_t n = indices.size();
    Split best;
    std::vector<size_t> order(n);
    std::vector<double> prefix_sum(n + 1), prefix_sumsq(n + 1);

    for (size_t feature : features) {
      order = indices;
      std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        double xa = X[a][feature], xb = X[b][feature];
        if (xa != xb) return xa < xb;
        return a < b;
      });
      prefix_sum[0] = prefix_sumsq[0] = 0.0;
      for (size_t i = 0; i < n; ++i) {
        double t = y[order[i]];
        prefix_sum[i + 1] = prefix_sum[i] + t;
        prefix_sumsq[i + 1] = prefix_sumsq[i] + t * t;
      }
      for (size_t s = 1; s < n; ++s) {
        double lo = X[order[s - 1]][feature];
        double hi = X[order[s]][feature];
        if (lo == hi) continue;
        size_t n_left = s, n_right = n - s;
        if (n_left < static_cast<size_t>(min_leaf) || n_right < static_cast<size_t>(min_leaf)) {
          continue;
        }
        double sum_left = prefix_sum[s];
        double sum_right = prefix_sum[n] - sum_left;
        double sse_left = prefix_sumsq[s] - sum_left * sum_left / static_cast<double>(n_left);
        double sse_right = (prefix_sumsq[n] - prefix_sumsq[s]) -
                           sum_right * sum_right / static_cast<double>(n_right);
        double cost = sse_left + sse_right;
        if (!best.found || cost < best.cost) {
          best.found = true;
          best.feature = feature;
          best.threshold = lo + (hi - lo) / 2.0;
          best.cost = cost;
        }
      }
    }
    return best;
  }

  int grow(const Rows& X, const std::vector<double>& y, std::vector<size_t> indices, int depth,
           const TreeParams& params) {
    const size_t n = indices.size();
    double mean = 0.0;
    for (size_t i : indices) mean += y[i];
    mean /= static_cast<double>(n);

    int node_index = static_cast<int>(nodes.size());
    nodes.push_back(TreeNode{-1, 0.0, -1, -1, mean});

    if (depth >= params.max_depth || n < 2 * static_cast<size_t>(params.min_leaf)) {
      return node_index;
    }
    bool constant = std::all_of(indices.begin(), indices.end(),
                                [&](size_t i) { return y[i] == y[indices.front()]; });
    if (constant) return node_index;

    const size_t d = X[indices.front()].size();
    std::vector<size_t> features;
    if (params.mtry > 0 && static_cast<size_t>(params.mtry) < d) {
      // partial Fisher-Yates draw of mtry distinct features, then sorted so
      // tie-breaking stays by feature index
      std::vector<size_t> all(d);
      std::iota(all.begin(), all.end(), 0);
      for (int i = 0; i < params.mtry; ++i) {
        size_t j = static_cast<size_t>(i) +
                   static_cast<size_t>(bounded_uniform(*params.rng, d - static_cast<size_t>(i)));
        std::swap(all[static_cast<size_t>(i)], all[j]);
      }
      features.assign(all.begin(), all.begin() + params.mtry);
      std::sort(features.begin(), features.end());
    } else {
      features.resize(d);
      std::iota(features.begin(), features.end(), 0);
    }

    Split split = best_split(X, y, indices, features, params.min_leaf);
    if (!split.found) return node_index;

    std::vector<size_t> left, right;
    for (size_t i : indices) {
      (X[i][split.feature] <= split.threshold ? left : right).push_back(i);
    }
    if (left.empty() || right.empty()) return node_index;

    nodes[static_cast<size_t>(node_index)].feature = static_cast<int>(split.feature);
    nodes[static_cast<size_t>(node_index)].threshold = split.threshold;
    int l = grow(X, y, std::move(left), depth + 1, params);
    nodes[static_cast<size_t>(node_index)].left = l;
    int r = grow(X, y, std::move(right), depth + 1, params);
    nodes[static_cast<size_t>(node_index)].right = r;
    return node_index;
  }
};

class TreeModel : public Model {
 public:
  RegressionTree tree;
  double predict_row(const std::vector<double>& row) const override {
    return tree.predict_row(row);
  }
};

class ForestModel : public Model {
 public:
  std::vector<RegressionTree> trees;
  double predict_row(const std::vector<double>& row) const override {
    double sum = 0.0;
    for (const auto& tree : trees) sum += tree.predict_row(row);
    return sum / static_cast<double>(trees.size());
  }
};

class BoostingModel : public Model {
 public:
  double base = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;
  double predict_row(const std::vector<double>& row) const override {
    double out = base;
    for (const auto& tree : trees) out += learning_rate * tree.predict_row(row);
    return out;
  }
};

std::vector<size_t> all_indices(size_t n) {
  std::vector<size_t> indices(n);
  std::iota(indices.begin(), indices.end(), 0);
  return indices;
}

}  // namespace

std::shared_ptr<const Model> fit_decision_tree(const RegressorSpec& spec, const Rows& X,
                                               const std::vector<double>& y) {
  auto model = std::make_shared<TreeModel>();
  TreeParams params{spec.max_depth, spec.min_leaf, 0, nullptr};
  model->tree.build(X, y, all_indices(X.size()), params);
  return model;
}

std::shared_ptr<const Model> fit_random_forest(const RegressorSpec& spec, const Rows& X,
                                               const std::vector<double>& y) {
  if (spec.n_trees < 1) fail(errc::invalid_argument, "n_trees must be >= 1");
  const size_t n = X.size();
  const size_t d = X.front().size();
  int mtry = spec.mtry;
  if (mtry == 0) mtry = std::max(1, static_cast<int>(std::floor(std::sqrt(double(d)))));
  mtry = std::min(mtry, static_cast<int>(d));

  std::mt19937_64 master(spec.seed);
  std::vector<uint64_t> tree_seeds(static_cast<size_t>(spec.n_trees));
  for (auto& s : tree_seeds) s = master();

  auto model = std::make_shared<ForestModel>();
  model->trees.resize(static_cast<size_t>(spec.n_trees));
  for (size_t t = 0; t < model->trees.size(); ++t) {
    std::mt19937_64 rng(tree_seeds[t]);
    std::vector<size_t> indices;
    if (spec.bootstrap) {
      indices.reserve(n);
      for (size_t i = 0; i < n; ++i) indices.push_back(bounded_uniform(rng, n));
    } else {
      indices = all_indices(n);
    }
    TreeParams params{spec.max_depth, spec.min_leaf,
                      mtry < static_cast<int>(d) ? mtry : 0, &rng};
    model->trees[t].build(X, y, std::move(indices), params);
  }
  return model;
}

std::shared_ptr<const Model> fit_gradient_boosting(const RegressorSpec& spec, const Rows& X,
                                                   const std::vector<double>& y) {
  if (spec.n_rounds < 0) fail(errc::invalid_argument, "n_rounds must be >= 0");
  const size_t n = X.size();

  auto model = std::make_shared<BoostingModel>();
  model->learning_rate = spec.learning_rate;
  model->base = 0.0;
  for (double v : y) model->base += v;
  model->base /= static_cast<double>(n);

  std::vector<double> residual(n);
  for (size_t i = 0; i < n; ++i) residual[i] = y[i] - model->base;

  TreeParams params{spec.max_depth, spec.min_leaf, 0, nullptr};
  model->trees.reserve(static_cast<size_t>(spec.n_rounds));
  for (int round = 0; round < spec.n_rounds; ++round) {
    RegressionTree tree;
    tree.build(X, residual, all_indices(n), params);
    for (size_t i = 0; i < n; ++i) {
      residual[i] -= spec.learning_rate * tree.predict_row(X[i]);
    }
    model->trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace cityprobe::detail
