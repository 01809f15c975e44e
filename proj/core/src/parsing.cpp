#include "cityprobe/parsing.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

#include <nlohmann/json.hpp>

#include "cityprobe/error.hpp"

namespace cityprobe {

namespace {

using nlohmann::json;

// Removes ``` fence marker lines (with optional language tag) while keeping
// the fenced content.
std::string drop_code_fences(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  size_t pos = 0;
  while (pos < raw.size()) {
    size_t eol = raw.find('\n', pos);
    size_t len = (eol == std::string::npos ? raw.size() : eol) - pos;
    std::string_view line(raw.data() + pos, len);
    size_t first = line.find_first_not_of(" \t");
    bool is_fence = first != std::string_view::npos && line.substr(first).starts_with("```");
    if (!is_fence) {
      out.append(line);
      if (eol != std::string::npos) out += '\n';
    }
    pos = (eol == std::string::npos) ? raw.size() : eol + 1;
  }
  return out;
}

// Balanced-object scan from `start` (raw[start] == '{'), honoring string
// literals and escapes. Returns one past the closing brace, or npos.
size_t find_balanced_end(const std::string& text, size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (size_t i = start; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string::npos;
}

json parse_object(const std::string& raw) {
  const std::string extracted = extract_json_object(raw);
  json doc = json::parse(extracted, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    fail(errc::no_json_found, "extracted braces are not a valid JSON object");
  }
  return doc;
}

double read_number(const json& object, const std::string& key) {
  if (!object.contains(key)) fail(errc::missing_key, key);
  const json& value = object.at(key);
  std::optional<double> number;
  if (value.is_number()) {
    number = value.get<double>();
  } else if (value.is_string()) {
    number = coerce_number(value.get<std::string>());
  }
  if (!number || !std::isfinite(*number)) fail(errc::unparseable, key);
  return *number;
}

}  // namespace

std::string extract_json_object(const std::string& raw) {
  const std::string text = drop_code_fences(raw);
  size_t pos = text.find('{');
  while (pos != std::string::npos) {
    size_t end = find_balanced_end(text, pos);
    if (end != std::string::npos) return text.substr(pos, end - pos);
    pos = text.find('{', pos + 1);
  }
  fail(errc::no_json_found, "no balanced object in response");
}

std::optional<double> coerce_number(const std::string& text) {
  // trim
  size_t begin = text.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return std::nullopt;
  size_t finish = text.find_last_not_of(" \t\r\n");
  std::string body = text.substr(begin, finish - begin + 1);

  // drop thousands separators between digits
  std::string compact;
  compact.reserve(body.size());
  for (size_t i = 0; i < body.size(); ++i) {
    if (body[i] == ',' && i > 0 && i + 1 < body.size() && std::isdigit((unsigned char)body[i - 1]) &&
        std::isdigit((unsigned char)body[i + 1])) {
      continue;
    }
    compact += body[i];
  }

  const char* start = compact.c_str();
  char* end = nullptr;
  double value = std::strtod(start, &end);
  if (end == start || !std::isfinite(value)) return std::nullopt;

  // the rest may only be a unit suffix: reject a second number ("5-10",
  // "3 to 5"), accept "%", letters, and common unit punctuation
  std::string_view rest(end);
  if (!rest.empty() && rest.front() == '%') rest.remove_prefix(1);
  bool seen_space = false;
  for (size_t i = 0; i < rest.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(rest[i]);
    if (std::isspace(c)) {
      seen_space = true;
      continue;
    }
    if (std::isdigit(c)) return std::nullopt;
    if (c == '-' || c == '+') {
      // "-suffix" directly after digits means a range, not a unit
      if (!seen_space || (i + 1 < rest.size() && std::isdigit((unsigned char)rest[i + 1]))) {
        return std::nullopt;
      }
      continue;
    }
    // letters, unicode bytes (µ, ³), slashes, periods in unit names: fine
  }
  return value;
}

ParsedDirect parse_direct(const std::string& raw) {
  json doc = parse_object(raw);
  ParsedDirect out;
  if (doc.contains("zone") && doc["zone"].is_string()) {
    out.zone = doc["zone"].get<std::string>();
  }
  out.pred = read_number(doc, "pred");
  return out;
}

ParsedFeatures parse_features(const std::string& raw, const FeatureSchema& schema) {
  validate(schema);
  json doc = parse_object(raw);
  ParsedFeatures out;
  for (const auto& feature : schema.features) {
    double value = read_number(doc, feature.name);
    if (value < schema.scale_low) {
      value = schema.scale_low;
      out.clamped.insert(feature.name);
    } else if (value > schema.scale_high) {
      value = schema.scale_high;
      out.clamped.insert(feature.name);
    }
    out.values[feature.name] = value;
  }
  return out;
}

FeatureSchema parse_schema(const std::string& raw, int expected_count, double scale_low,
                           double scale_high) {
  if (expected_count < 1) fail(errc::invalid_argument, "expected_count must be >= 1");
  json doc = parse_object(raw);
  if (!doc.contains("features") || !doc["features"].is_array()) {
    fail(errc::missing_key, "features");
  }

  FeatureSchema schema;
  schema.scale_low = scale_low;
  schema.scale_high = scale_high;
  for (const auto& item : doc["features"]) {
    if (!item.is_object() || !item.contains("name")) fail(errc::unparseable, "features[].name");
    std::string name = to_snake_case(item["name"].get<std::string>());
    if (name.empty()) fail(errc::unparseable, "features[].name");
    if (schema.has(name)) fail(errc::duplicate_name, name);
    schema.features.push_back({name, item.value("description", std::string{})});
  }
  if (static_cast<int>(schema.features.size()) != expected_count) {
    fail(errc::wrong_count, "expected " + std::to_string(expected_count) + " features, got " +
                                std::to_string(schema.features.size()));
  }
  return schema;
}

std::vector<std::string> extract_requested_keys(const std::string& prompt_text) {
  std::vector<std::string> keys;
  size_t pos = 0;
  while (pos < prompt_text.size()) {
    size_t eol = prompt_text.find('\n', pos);
    size_t len = (eol == std::string::npos ? prompt_text.size() : eol) - pos;
    std::string_view line(prompt_text.data() + pos, len);

    if (line.starts_with("- ")) {
      // "- key: description"
      size_t colon = line.find(':');
      if (colon != std::string_view::npos && colon > 2) {
        keys.emplace_back(line.substr(2, colon - 2));
      }
    } else if (line.starts_with("\"")) {
      // '"key" (scale from L to U),'
      size_t close = line.find('"', 1);
      if (close != std::string_view::npos && line.find("(scale", close) != std::string_view::npos) {
        keys.emplace_back(line.substr(1, close - 1));
      }
    }
    pos = (eol == std::string::npos) ? prompt_text.size() : eol + 1;
  }
  return keys;
}

}  // namespace cityprobe
