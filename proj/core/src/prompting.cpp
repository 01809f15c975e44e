#include "cityprobe/prompting.hpp"

#include <fstream>
#include <sstream>

#include "cityprobe/csv.hpp"
#include "cityprobe/error.hpp"

namespace cityprobe {

namespace {

// Shipped verbatim under templates/en/ and templates/zh/.
constexpr const char* kDirectEn =
    "Your task is to provide target information about {Place}.\n"
    "\n"
    "Organize your answer in a JSON object containing the following keys:\n"
    "- zone: The name of the city, {Place}\n"
    "- pred: {Target} {Unit} in {Place}\n";

constexpr const char* kIdentifyEn =
    "Your task is to identify features that correlate with {Target}.\n"
    "\n"
    "Name the {Count} most relevant features. For each feature, give a one-line "
    "description of what it measures. Feature names must be lowercase snake_case.\n"
    "\n"
    "Each feature will later be scored on a scale from {ScaleLow} to {ScaleHigh}.\n"
    "\n"
    "Organize your answer in a JSON object containing the following keys:\n"
    "- features: a list of exactly {Count} objects, each with keys \"name\" and "
    "\"description\"\n";

constexpr const char* kExtractEn =
    "Your task is to provide feature information about {Place}.\n"
    "\n"
    "Please provide information about {FeatureEnumeration} in {Place}:\n"
    "\n"
    "{FeatureDescriptions}\n"
    "\n"
    "Please organize your answer in a JSON object containing the following keys:\n"
    "{FeatureKeys}\n";

constexpr const char* kDirectZh =
    "你的任务是提供关于{Place}的目标信息。\n"
    "\n"
    "请将你的回答组织为一个包含以下键的JSON对象：\n"
    "- zone: 城市名称，{Place}\n"
    "- pred: {Place}的{Target} {Unit}\n";

constexpr const char* kIdentifyZh =
    "你的任务是找出与{Target}相关的特征。\n"
    "\n"
    "请列出{Count}个最相关的特征。每个特征附一行简短描述，说明它衡量的内容。"
    "特征名称必须使用小写snake_case。\n"
    "\n"
    "每个特征随后将在{ScaleLow}到{ScaleHigh}的范围内打分。\n"
    "\n"
    "请将你的回答组织为一个包含以下键的JSON对象：\n"
    "- features: 恰好包含{Count}个对象的列表，每个对象包含键 \"name\" 和 \"description\"\n";

constexpr const char* kExtractZh =
    "你的任务是提供关于{Place}的特征信息。\n"
    "\n"
    "请提供{Place}的{FeatureEnumeration}信息：\n"
    "\n"
    "{FeatureDescriptions}\n"
    "\n"
    "请将你的回答组织为一个包含以下键的JSON对象：\n"
    "{FeatureKeys}\n";

std::string substitute(std::string text, const std::map<std::string, std::string>& slots) {
  for (const auto& [key, value] : slots) {
    const std::string marker = "{" + key + "}";
    size_t pos = 0;
    while ((pos = text.find(marker, pos)) != std::string::npos) {
      text.replace(pos, marker.size(), value);
      pos += value.size();
    }
  }
  return text;
}

// Slot values get the same space collapsing as the final text so that each
// value still appears verbatim after normalization. Handles multi-line
// values (feature description blocks): spaces before newlines are stripped
// like line-trailing spaces in the rendered text.
std::string clean_slot_value(const std::string& value) {
  std::string out;
  bool prev_space = false;
  for (char c : value) {
    if (c == ' ') {
      prev_space = true;
    } else {
      if (prev_space && !out.empty() && out.back() != '\n' && c != '\n') out += ' ';
      out += c;
      prev_space = false;
    }
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_error, "cannot open template " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// "10" -> "10.0"; keeps "2.5" as-is. Matches the scale annotation style
// the extraction answers are parsed against.
std::string format_scale(double value) {
  std::string s = csv::format_double(value);
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
      s.find("inf") == std::string::npos && s.find("nan") == std::string::npos) {
    s += ".0";
  }
  return s;
}

std::string enumerate_features(const std::vector<std::string>& names, PromptLanguage lang) {
  std::string out;
  for (size_t i = 0; i < names.size(); ++i) {
    if (i > 0) {
      if (lang == PromptLanguage::chinese) {
        out += (i + 1 == names.size()) ? "和" : "、";
      } else if (i + 1 == names.size()) {
        out += (names.size() == 2) ? " and " : ", and ";
      } else {
        out += ", ";
      }
    }
    out += "<" + names[i] + ">";
  }
  return out;
}

RenderedPrompt render(PromptKind kind, const TemplateSet& templates, const std::string& tmpl,
                      std::map<std::string, std::string> slots) {
  for (auto& [key, value] : slots) value = clean_slot_value(value);
  RenderedPrompt prompt;
  prompt.kind = kind;
  prompt.language = templates.language;
  prompt.slots = slots;
  prompt.text = normalize_whitespace(substitute(tmpl, slots));
  return prompt;
}

}  // namespace

std::string_view to_string(PromptLanguage lang) {
  return lang == PromptLanguage::english ? "en" : "zh";
}

PromptLanguage language_from_flag(const std::string& flag) {
  if (flag == "en" || flag == "english") return PromptLanguage::english;
  if (flag == "zh" || flag == "chinese") return PromptLanguage::chinese;
  fail(errc::invalid_argument, "unknown language '" + flag + "' (expected en|zh)");
}

TemplateSet TemplateSet::builtin(PromptLanguage lang) {
  if (lang == PromptLanguage::english) {
    return TemplateSet{lang, kDirectEn, kIdentifyEn, kExtractEn};
  }
  return TemplateSet{lang, kDirectZh, kIdentifyZh, kExtractZh};
}

TemplateSet TemplateSet::load(const std::string& dir, PromptLanguage lang) {
  const std::string base = dir + "/" + std::string(to_string(lang)) + "/";
  return TemplateSet{lang, read_text_file(base + "direct.txt"),
                     read_text_file(base + "identify.txt"),
                     read_text_file(base + "extract.txt")};
}

std::string normalize_whitespace(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  std::string line;
  auto flush_line = [&] {
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.pop_back();
    out += line;
    out += '\n';
    line.clear();
  };
  bool prev_space = false;
  for (char c : text) {
    if (c == '\n') {
      flush_line();
      prev_space = false;
    } else if (c == ' ') {
      if (!prev_space) line += ' ';
      prev_space = true;
    } else {
      line += c;
      prev_space = false;
    }
  }
  if (!line.empty()) flush_line();
  // exactly one trailing newline
  while (out.size() >= 2 && out[out.size() - 1] == '\n' && out[out.size() - 2] == '\n') {
    out.pop_back();
  }
  return out;
}

RenderedPrompt build_direct_prompt(const PlaceId& place, const TaskSpec& task,
                                   const TemplateSet& templates) {
  if (!task.contains(place)) {
    fail(errc::unknown_place, place.rendered() + " not in task '" + task.task_id + "'");
  }
  return render(PromptKind::direct_ask, templates, templates.direct,
                {{"Place", place.rendered()},
                 {"Target", task.target_name},
                 {"Unit", task.unit}});
}

RenderedPrompt build_identification_prompt(const TaskSpec& task, int n_features,
                                           const TemplateSet& templates) {
  if (n_features < 1 || n_features > 16) {
    fail(errc::invalid_argument, "n_features must be in [1, 16]");
  }
  double lo = 0.0, hi = 10.0;
  if (task.scale_hint) {
    lo = task.scale_hint->first;
    hi = task.scale_hint->second;
  }
  return render(PromptKind::feature_identification, templates, templates.identify,
                {{"Target", task.target_name},
                 {"Count", std::to_string(n_features)},
                 {"ScaleLow", format_scale(lo)},
                 {"ScaleHigh", format_scale(hi)}});
}

RenderedPrompt build_extraction_prompt(const PlaceId& place, const FeatureSchema& schema,
                                       const TemplateSet& templates) {
  validate(schema);

  std::string descriptions;
  std::string keys;
  const std::string scale =
      " (scale from " + format_scale(schema.scale_low) + " to " + format_scale(schema.scale_high) + ")";
  for (size_t i = 0; i < schema.features.size(); ++i) {
    const auto& f = schema.features[i];
    descriptions += f.name + ": " + f.description;
    keys += "\"" + f.name + "\"" + scale;
    if (i + 1 < schema.features.size()) {
      descriptions += '\n';
      keys += ",\n";
    }
  }

  return render(PromptKind::feature_extraction, templates, templates.extract,
                {{"Place", place.rendered()},
                 {"FeatureEnumeration", enumerate_features(schema.names(), templates.language)},
                 {"FeatureDescriptions", descriptions},
                 {"FeatureKeys", keys}});
}

RenderedPrompt build_direct_prompt(const PlaceId& place, const TaskSpec& task,
                                   PromptLanguage lang) {
  return build_direct_prompt(place, task, TemplateSet::builtin(lang));
}

RenderedPrompt build_identification_prompt(const TaskSpec& task, int n_features,
                                           PromptLanguage lang) {
  return build_identification_prompt(task, n_features, TemplateSet::builtin(lang));
}

RenderedPrompt build_extraction_prompt(const PlaceId& place, const FeatureSchema& schema,
                                       PromptLanguage lang) {
  return build_extraction_prompt(place, schema, TemplateSet::builtin(lang));
}

}  // namespace cityprobe
