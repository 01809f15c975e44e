#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cityprobe/dataset.hpp"
#include "cityprobe/features.hpp"
#include "cityprobe/parsing.hpp"

namespace cityprobe {

using Rows = std::vector<std::vector<double>>;

struct RegressorSpec {
  enum class Kind { linear, decision_tree, random_forest, gradient_boosting };

  Kind kind = Kind::linear;
  double ridge_lambda = 1e-6;
  int max_depth = 6;
  int min_leaf = 2;
  int n_trees = 100;
  bool bootstrap = true;
  int mtry = 0;  // features tried per split; 0 means floor(sqrt(d)), min 1
  int n_rounds = 100;
  double learning_rate = 0.1;
  uint64_t seed = 0;

  static RegressorSpec linear(double lambda = 1e-6);
  static RegressorSpec decision_tree(int max_depth = 6, int min_leaf = 2);
  static RegressorSpec random_forest(int n_trees = 100, int max_depth = 6, int min_leaf = 2,
                                     uint64_t seed = 0);
  static RegressorSpec gradient_boosting(int n_rounds = 100, double learning_rate = 0.1,
                                         int max_depth = 6, uint64_t seed = 0);
  /// Parses "linear", "tree", "forest", "gbt" (CLI --models tokens).
  static RegressorSpec from_name(const std::string& name);

  std::string name() const;
  /// Tie-break rank: linear < decision_tree < random_forest < gradient_boosting.
  int rank() const { return static_cast<int>(kind); }
};

/// Opaque fitted predictor. predict() is deterministic after fit.
class Model {
 public:
  virtual ~Model() = default;
  virtual double predict_row(const std::vector<double>& row) const = 0;
};

struct FittedModel {
  RegressorSpec spec;
  std::shared_ptr<const Model> model;
  std::optional<size_t> n_features;  // nullopt: accepts any width (baseline)
  std::vector<PlaceId> train_places;
};

/// sqrt(mean((pred - target)^2))
double rmse(const std::vector<double>& predictions, const std::vector<double>& targets);

FittedModel fit(const RegressorSpec& spec, const Rows& X, const std::vector<double>& y,
                std::vector<PlaceId> train_places = {});

std::vector<double> predict(const FittedModel& model, const Rows& X);

/// Predicts the training mean for every input row.
FittedModel mean_baseline(const std::vector<double>& train_targets);

enum class Method { exp_feature, imp_feature, direct_ask, no_feature };
std::string_view to_string(Method method);
Method method_from_flag(const std::string& flag);

struct EvalResult {
  std::string task_id;
  Method method = Method::no_feature;
  int k = 0;
  std::vector<double> per_fold_rmse;
  double mean_rmse = 0.0;
  std::optional<RegressorSpec> chosen_model;
  std::map<std::string, double> model_mean_rmse;  // every tried spec, by name
  std::vector<double> baseline_per_fold_rmse;     // mean baseline on the same folds
  std::vector<bool> beats_baseline_per_fold;
  std::map<std::string, uint64_t> seeds;
  std::map<std::string, size_t> drop_counts;
  std::vector<std::string> notes;
};

/// Per-fold fit-on-rest/score-on-fold RMSE for every spec; the spec with
/// the lowest mean wins, ties broken by RegressorSpec::rank order. The
/// mean baseline is always scored on the same folds and recorded.
EvalResult cross_validate(const FeatureMatrix& X, const TargetTable& y,
                          const FoldAssignment& folds, const std::vector<RegressorSpec>& specs);

/// No-Feature path: mean-baseline per-fold RMSE on targets alone.
EvalResult evaluate_baseline(const TargetTable& y, const FoldAssignment& folds);

/// Direct-Ask path: one RMSE over all answered places, no folds. Keys of
/// `answers` are rendered place names; unanswered places are counted.
EvalResult evaluate_direct(const std::map<std::string, ParsedDirect>& answers,
                           const TargetTable& y);

/// Deterministic JSON (sorted keys, shortest-round-trip doubles), so a
/// replayed run reproduces the file byte-for-byte.
std::string eval_to_json(const EvalResult& result);
void save_eval(const std::string& path, const EvalResult& result);

}  // namespace cityprobe
