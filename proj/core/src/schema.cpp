#include "cityprobe/schema.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cityprobe/error.hpp"

namespace cityprobe {

bool FeatureSchema::has(const std::string& name) const {
  return std::any_of(features.begin(), features.end(),
                     [&](const Feature& f) { return f.name == name; });
}

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(f.name);
  return out;
}

void validate(const FeatureSchema& schema) {
  if (schema.features.empty()) fail(errc::empty_schema, "schema has no features");
  if (!(schema.scale_low < schema.scale_high)) {
    fail(errc::invalid_argument, "schema scale must satisfy low < high");
  }
  std::unordered_set<std::string> seen;
  for (const auto& f : schema.features) {
    if (f.name.empty()) fail(errc::invalid_argument, "empty feature name");
    if (!seen.insert(f.name).second) fail(errc::duplicate_name, f.name);
  }
}

FeatureSchema load_schema(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) fail(errc::io_error, "cannot open " + json_path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(errc::format_error, json_path + ": " + e.what());
  }
  FeatureSchema schema;
  for (const auto& f : doc.at("features")) {
    schema.features.push_back(
        {f.at("name").get<std::string>(), f.value("description", std::string{})});
  }
  if (doc.contains("scale")) {
    schema.scale_low = doc.at("scale").at(0).get<double>();
    schema.scale_high = doc.at("scale").at(1).get<double>();
  }
  validate(schema);
  return schema;
}

void save_schema(const std::string& json_path, const FeatureSchema& schema) {
  nlohmann::json doc;
  doc["features"] = nlohmann::json::array();
  for (const auto& f : schema.features) {
    doc["features"].push_back({{"name", f.name}, {"description", f.description}});
  }
  doc["scale"] = {schema.scale_low, schema.scale_high};
  std::ofstream out(json_path);
  if (!out) fail(errc::io_error, "cannot write " + json_path);
  out << doc.dump(2) << '\n';
}

std::string to_snake_case(const std::string& name) {
  std::string out;
  bool pending_sep = false;
  for (unsigned char c : name) {
    if (std::isalnum(c)) {
      if (pending_sep && !out.empty()) out += '_';
      pending_sep = false;
      out += static_cast<char>(std::tolower(c));
    } else if (c == ' ' || c == '-' || c == '_' || c == '\t') {
      pending_sep = true;
    }
    // other punctuation dropped
  }
  return out;
}

}  // namespace cityprobe
