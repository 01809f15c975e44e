#pragma once

#include <memory>

#include "cityprobe/ml.hpp"

namespace cityprobe::detail {

std::shared_ptr<const Model> fit_linear(const RegressorSpec& spec, const Rows& X,
                                        const std::vector<double>& y);
std::shared_ptr<const Model> fit_decision_tree(const RegressorSpec& spec, const Rows& X,
                                               const std::vector<double>& y);
std::shared_ptr<const Model> fit_random_forest(const RegressorSpec& spec, const Rows& X,
                                               const std::vector<double>& y);
std::shared_ptr<const Model> fit_gradient_boosting(const RegressorSpec& spec, const Rows& X,
                                                   const std::vector<double>& y);

}  // namespace cityprobe::detail
