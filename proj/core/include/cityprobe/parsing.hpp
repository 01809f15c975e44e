#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cityprobe/schema.hpp"

namespace cityprobe {

struct ParsedDirect {
  std::string zone;
  double pred = 0.0;
};

struct ParsedFeatures {
  std::map<std::string, double> values;
  std::set<std::string> clamped;  // features whose value was pulled back into scale
};

/// First balanced {...} substring of `raw`, after dropping Markdown code
/// fence markers. Never throws anything but Error and never crashes on
/// arbitrary bytes.
std::string extract_json_object(const std::string& raw);

/// Reads a number the way LLMs write them: bare JSON numbers, or numeric
/// strings with thousands separators and trailing unit words ("24,654.91 t").
/// Ranges like "5-10" are rejected.
std::optional<double> coerce_number(const std::string& text);

ParsedDirect parse_direct(const std::string& raw);

ParsedFeatures parse_features(const std::string& raw, const FeatureSchema& schema);

/// Reads the identification answer: a `features` list of {name, description}.
/// Names are normalized to snake_case; the list length must equal
/// `expected_count`.
FeatureSchema parse_schema(const std::string& raw, int expected_count,
                           double scale_low = 0.0, double scale_high = 10.0);

/// Answer keys a rendered prompt asks for, in prompt order: `- key:` lines
/// and quoted `"key" (scale from ...)` lines. Lets tests close the loop
/// between prompt rendering and answer parsing.
std::vector<std::string> extract_requested_keys(const std::string& prompt_text);

}  // namespace cityprobe
