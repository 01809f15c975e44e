#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cityprobe/error.hpp"
#include "ml_internal.hpp"

namespace cityprobe {

namespace {

using nlohmann::json;

class ConstantModel : public Model {
 public:
  explicit ConstantModel(double value) : value_(value) {}
  double predict_row(const std::vector<double>&) const override { return value_; }

 private:
  double value_;
};

double mean_of(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

json spec_to_json(const RegressorSpec& spec) {
  json doc{{"kind", spec.name()}};
  switch (spec.kind) {
    case RegressorSpec::Kind::linear:
      doc["ridge_lambda"] = spec.ridge_lambda;
      break;
    case RegressorSpec::Kind::decision_tree:
      doc["max_depth"] = spec.max_depth;
      doc["min_leaf"] = spec.min_leaf;
      break;
    case RegressorSpec::Kind::random_forest:
      doc["n_trees"] = spec.n_trees;
      doc["max_depth"] = spec.max_depth;
      doc["min_leaf"] = spec.min_leaf;
      doc["bootstrap"] = spec.bootstrap;
      doc["mtry"] = spec.mtry;
      doc["seed"] = spec.seed;
      break;
    case RegressorSpec::Kind::gradient_boosting:
      doc["n_rounds"] = spec.n_rounds;
      doc["learning_rate"] = spec.learning_rate;
      doc["max_depth"] = spec.max_depth;
      doc["min_leaf"] = spec.min_leaf;
      doc["seed"] = spec.seed;
      break;
  }
  return doc;
}

}  // namespace

RegressorSpec RegressorSpec::linear(double lambda) {
  RegressorSpec spec;
  spec.kind = Kind::linear;
  spec.ridge_lambda = lambda;
  return spec;
}

RegressorSpec RegressorSpec::decision_tree(int max_depth, int min_leaf) {
  RegressorSpec spec;
  spec.kind = Kind::decision_tree;
  spec.max_depth = max_depth;
  spec.min_leaf = min_leaf;
  return spec;
}

RegressorSpec RegressorSpec::random_forest(int n_trees, int max_depth, int min_leaf,
                                           uint64_t seed) {
  RegressorSpec spec;
  spec.kind = Kind::random_forest;
  spec.n_trees = n_trees;
  spec.max_depth = max_depth;
  spec.min_leaf = min_leaf;
  spec.seed = seed;
  return spec;
}

RegressorSpec RegressorSpec::gradient_boosting(int n_rounds, double learning_rate, int max_depth,
                                               uint64_t seed) {
  RegressorSpec spec;
  spec.kind = Kind::gradient_boosting;
  spec.n_rounds = n_rounds;
  spec.learning_rate = learning_rate;
  spec.max_depth = max_depth;
  spec.seed = seed;
  return spec;
}

RegressorSpec RegressorSpec::from_name(const std::string& name) {
  if (name == "linear") return linear();
  if (name == "tree") return decision_tree();
  if (name == "forest") return random_forest();
  if (name == "gbt") return gradient_boosting();
  fail(errc::invalid_argument, "unknown model '" + name + "' (expected linear|tree|forest|gbt)");
}

std::string RegressorSpec::name() const {
  switch (kind) {
    case Kind::linear: return "linear";
    case Kind::decision_tree: return "decision_tree";
    case Kind::random_forest: return "random_forest";
    case Kind::gradient_boosting: return "gradient_boosting";
  }
  return "?";
}

double rmse(const std::vector<double>& predictions, const std::vector<double>& targets) {
  if (predictions.size() != targets.size()) {
    fail(errc::length_mismatch, std::to_string(predictions.size()) + " predictions vs " +
                                    std::to_string(targets.size()) + " targets");
  }
  if (predictions.empty()) fail(errc::empty_input, "rmse of empty vectors");
  double sum = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    double diff = predictions[i] - targets[i];
    sum += diff * diff;
  }
  return std::sqrt(sum / static_cast<double>(predictions.size()));
}

FittedModel fit(const RegressorSpec& spec, const Rows& X, const std::vector<double>& y,
                std::vector<PlaceId> train_places) {
  if (X.size() < 2) fail(errc::too_few_rows, "need at least 2 training rows");
  if (X.size() != y.size()) {
    fail(errc::length_mismatch, std::to_string(X.size()) + " rows vs " +
                                    std::to_string(y.size()) + " targets");
  }
  const size_t d = X.front().size();
  for (const auto& row : X) {
    if (row.size() != d) fail(errc::column_mismatch, "ragged training rows");
    for (double v : row) {
      if (!std::isfinite(v)) fail(errc::invalid_argument, "non-finite feature value");
    }
  }
  for (double v : y) {
    if (!std::isfinite(v)) fail(errc::invalid_argument, "non-finite target value");
  }

  FittedModel fitted;
  fitted.spec = spec;
  fitted.n_features = d;
  fitted.train_places = std::move(train_places);
  switch (spec.kind) {
    case RegressorSpec::Kind::linear:
      fitted.model = detail::fit_linear(spec, X, y);
      break;
    case RegressorSpec::Kind::decision_tree:
      fitted.model = detail::fit_decision_tree(spec, X, y);
      break;
    case RegressorSpec::Kind::random_forest:
      fitted.model = detail::fit_random_forest(spec, X, y);
      break;
    case RegressorSpec::Kind::gradient_boosting:
      fitted.model = detail::fit_gradient_boosting(spec, X, y);
      break;
  }
  return fitted;
}

std::vector<double> predict(const FittedModel& model, const Rows& X) {
  std::vector<double> out;
  out.reserve(X.size());
  for (const auto& row : X) {
    if (model.n_features && row.size() != *model.n_features) {
      fail(errc::column_mismatch, std::to_string(row.size()) + " columns, trained on " +
                                      std::to_string(*model.n_features));
    }
    out.push_back(model.model->predict_row(row));
  }
  return out;
}

FittedModel mean_baseline(const std::vector<double>& train_targets) {
  if (train_targets.empty()) fail(errc::empty_input, "mean baseline of empty targets");
  FittedModel fitted;
  fitted.spec = RegressorSpec::linear(0.0);
  fitted.n_features = std::nullopt;
  fitted.model = std::make_shared<ConstantModel>(mean_of(train_targets));
  return fitted;
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::exp_feature: return "exp_feature";
    case Method::imp_feature: return "imp_feature";
    case Method::direct_ask: return "direct_ask";
    case Method::no_feature: return "no_feature";
  }
  return "?";
}

Method method_from_flag(const std::string& flag) {
  if (flag == "exp" || flag == "exp_feature") return Method::exp_feature;
  if (flag == "imp" || flag == "imp_feature") return Method::imp_feature;
  if (flag == "direct" || flag == "direct_ask") return Method::direct_ask;
  if (flag == "none" || flag == "no_feature") return Method::no_feature;
  fail(errc::invalid_argument, "unknown method '" + flag + "'");
}

namespace {

struct FoldedData {
  // per fold: training rows/targets and test rows/targets
  std::vector<Rows> train_rows, test_rows;
  std::vector<std::vector<double>> train_y, test_y;
};

FoldedData split_by_fold(const FeatureMatrix& X, const TargetTable& y,
                         const FoldAssignment& folds) {
  FoldedData data;
  data.train_rows.resize(static_cast<size_t>(folds.k));
  data.test_rows.resize(static_cast<size_t>(folds.k));
  data.train_y.resize(static_cast<size_t>(folds.k));
  data.test_y.resize(static_cast<size_t>(folds.k));

  for (size_t r = 0; r < X.rows(); ++r) {
    auto target = y.value_of(X.places[r]);
    if (!target) {
      fail(errc::invalid_argument, "no target for " + X.places[r].rendered());
    }
    int fold = folds.fold(X.places[r]);
    for (int f = 0; f < folds.k; ++f) {
      if (f == fold) {
        data.test_rows[static_cast<size_t>(f)].push_back(X.row(r));
        data.test_y[static_cast<size_t>(f)].push_back(*target);
      } else {
        data.train_rows[static_cast<size_t>(f)].push_back(X.row(r));
        data.train_y[static_cast<size_t>(f)].push_back(*target);
      }
    }
  }
  for (int f = 0; f < folds.k; ++f) {
    if (data.train_rows[static_cast<size_t>(f)].size() < 2) {
      fail(errc::fold_too_small, "fold " + std::to_string(f) + " leaves fewer than 2 training rows");
    }
    if (data.test_rows[static_cast<size_t>(f)].empty()) {
      fail(errc::fold_too_small, "fold " + std::to_string(f) + " has no test rows");
    }
  }
  return data;
}

std::vector<double> baseline_fold_rmse(const FoldedData& data, int k) {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(k));
  for (int f = 0; f < k; ++f) {
    FittedModel baseline = mean_baseline(data.train_y[static_cast<size_t>(f)]);
    out.push_back(
        rmse(predict(baseline, data.test_rows[static_cast<size_t>(f)]), data.test_y[static_cast<size_t>(f)]));
  }
  return out;
}

}  // namespace

EvalResult cross_validate(const FeatureMatrix& X, const TargetTable& y,
                          const FoldAssignment& folds, const std::vector<RegressorSpec>& specs) {
  if (specs.empty()) fail(errc::invalid_argument, "no regressor specs given");
  if (X.rows() == 0) fail(errc::empty_matrix, "no feature rows");

  FoldedData data = split_by_fold(X, y, folds);

  EvalResult result;
  result.k = folds.k;
  result.baseline_per_fold_rmse = baseline_fold_rmse(data, folds.k);

  std::vector<std::vector<double>> fold_scores(specs.size());
  std::vector<double> means(specs.size());
  for (size_t s = 0; s < specs.size(); ++s) {
    for (int f = 0; f < folds.k; ++f) {
      FittedModel model =
          fit(specs[s], data.train_rows[static_cast<size_t>(f)], data.train_y[static_cast<size_t>(f)]);
      fold_scores[s].push_back(
          rmse(predict(model, data.test_rows[static_cast<size_t>(f)]), data.test_y[static_cast<size_t>(f)]));
    }
    means[s] = mean_of(fold_scores[s]);
    result.model_mean_rmse[specs[s].name()] = means[s];
  }

  size_t winner = 0;
  for (size_t s = 1; s < specs.size(); ++s) {
    if (means[s] < means[winner] ||
        (means[s] == means[winner] && specs[s].rank() < specs[winner].rank())) {
      winner = s;
    }
  }

  result.chosen_model = specs[winner];
  result.per_fold_rmse = fold_scores[winner];
  result.mean_rmse = means[winner];
  result.beats_baseline_per_fold.resize(static_cast<size_t>(folds.k));
  for (int f = 0; f < folds.k; ++f) {
    result.beats_baseline_per_fold[static_cast<size_t>(f)] =
        result.per_fold_rmse[static_cast<size_t>(f)] <
        result.baseline_per_fold_rmse[static_cast<size_t>(f)];
  }
  if (std::any_of(specs.begin(), specs.end(), [](const RegressorSpec& s) {
        return s.kind == RegressorSpec::Kind::linear;
      })) {
    result.notes.push_back("linear_columns_standardized");
  }
  return result;
}

EvalResult evaluate_baseline(const TargetTable& y, const FoldAssignment& folds) {
  if (y.empty()) fail(errc::empty_dataset, "no targets");

  EvalResult result;
  result.method = Method::no_feature;
  result.k = folds.k;
  std::vector<std::vector<double>> train_y(static_cast<size_t>(folds.k));
  std::vector<std::vector<double>> test_y(static_cast<size_t>(folds.k));
  for (const auto& [place, value] : y.entries) {
    int fold = folds.fold(place);
    for (int f = 0; f < folds.k; ++f) {
      (f == fold ? test_y : train_y)[static_cast<size_t>(f)].push_back(value);
    }
  }
  for (int f = 0; f < folds.k; ++f) {
    auto& train = train_y[static_cast<size_t>(f)];
    auto& test = test_y[static_cast<size_t>(f)];
    if (train.empty() || test.empty()) {
      fail(errc::fold_too_small, "fold " + std::to_string(f) + " is degenerate");
    }
    double mean = mean_of(train);
    std::vector<double> preds(test.size(), mean);
    result.per_fold_rmse.push_back(rmse(preds, test));
  }
  result.mean_rmse = mean_of(result.per_fold_rmse);
  result.baseline_per_fold_rmse = result.per_fold_rmse;
  result.beats_baseline_per_fold.assign(static_cast<size_t>(folds.k), false);
  return result;
}

EvalResult evaluate_direct(const std::map<std::string, ParsedDirect>& answers,
                           const TargetTable& y) {
  std::vector<double> preds, targets;
  size_t unanswered = 0;
  for (const auto& [place, value] : y.entries) {
    auto it = answers.find(place.rendered());
    if (it == answers.end()) {
      ++unanswered;
      continue;
    }
    preds.push_back(it->second.pred);
    targets.push_back(value);
  }
  if (preds.empty()) fail(errc::no_overlap, "no answered place has a target");

  EvalResult result;
  result.method = Method::direct_ask;
  result.k = 1;
  result.per_fold_rmse = {rmse(preds, targets)};
  result.mean_rmse = result.per_fold_rmse.front();
  result.drop_counts["unanswered_places"] = unanswered;
  return result;
}

std::string eval_to_json(const EvalResult& result) {
  json doc;
  doc["task_id"] = result.task_id;
  doc["method"] = std::string(to_string(result.method));
  doc["k"] = result.k;
  doc["per_fold_rmse"] = result.per_fold_rmse;
  doc["mean_rmse"] = result.mean_rmse;
  doc["chosen_model"] = result.chosen_model ? spec_to_json(*result.chosen_model) : json(nullptr);
  doc["model_mean_rmse"] = result.model_mean_rmse;
  doc["baseline_per_fold_rmse"] = result.baseline_per_fold_rmse;
  doc["baseline_mean_rmse"] = result.baseline_per_fold_rmse.empty()
                                  ? json(nullptr)
                                  : json(mean_of(result.baseline_per_fold_rmse));
  doc["beats_baseline_per_fold"] = result.beats_baseline_per_fold;
  doc["seeds"] = result.seeds;
  doc["drop_counts"] = result.drop_counts;
  doc["notes"] = result.notes;
  return doc.dump(2) + "\n";
}

void save_eval(const std::string& path, const EvalResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io_error, "cannot write " + path);
  out << eval_to_json(result);
}

}  // namespace cityprobe
