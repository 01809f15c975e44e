#pragma once

#include <string>
#include <vector>

namespace cityprobe {

/// Named features with prose descriptions plus the numeric scale their
/// values are requested on. Produced by feature identification, consumed
/// by prompt rendering and answer parsing.
struct FeatureSchema {
  struct Feature {
    std::string name;  // lowercase snake_case
    std::string description;
  };

  std::vector<Feature> features;
  double scale_low = 0.0;
  double scale_high = 10.0;

  bool has(const std::string& name) const;
  std::vector<std::string> names() const;
};

/// Validates name uniqueness, non-empty feature list, and scale ordering.
void validate(const FeatureSchema& schema);

FeatureSchema load_schema(const std::string& json_path);
void save_schema(const std::string& json_path, const FeatureSchema& schema);

/// "Traffic Volume" -> "traffic_volume". Lowercases, maps space/hyphen runs
/// to a single underscore, drops other punctuation.
std::string to_snake_case(const std::string& name);

}  // namespace cityprobe
