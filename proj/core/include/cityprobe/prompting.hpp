#pragma once

#include <map>
#include <string>

#include "cityprobe/dataset.hpp"
#include "cityprobe/schema.hpp"

namespace cityprobe {

enum class PromptKind { direct_ask, feature_identification, feature_extraction };
enum class PromptLanguage { english, chinese };

std::string_view to_string(PromptLanguage lang);  // "en" / "zh"
PromptLanguage language_from_flag(const std::string& flag);

struct RenderedPrompt {
  PromptKind kind;
  PromptLanguage language;
  std::string text;
  std::map<std::string, std::string> slots;
};

/// The three template texts for one language. Markers like {Place} are
/// replaced at render time; {FeatureDescriptions}/{FeatureKeys} expand to
/// one line per schema feature.
struct TemplateSet {
  PromptLanguage language;
  std::string direct;
  std::string identify;
  std::string extract;

  /// Compiled-in copies of the texts shipped under templates/<lang>/.
  static TemplateSet builtin(PromptLanguage lang);

  /// Reads direct.txt / identify.txt / extract.txt from `dir`.
  static TemplateSet load(const std::string& dir, PromptLanguage lang);
};

/// Post-substitution cleanup shared by all renderers: space runs collapse
/// to one, line-trailing spaces are stripped, output ends with exactly one
/// newline. Keeps renders byte-deterministic for cache fingerprints.
std::string normalize_whitespace(const std::string& text);

RenderedPrompt build_direct_prompt(const PlaceId& place, const TaskSpec& task,
                                   const TemplateSet& templates);

RenderedPrompt build_identification_prompt(const TaskSpec& task, int n_features,
                                           const TemplateSet& templates);

RenderedPrompt build_extraction_prompt(const PlaceId& place, const FeatureSchema& schema,
                                       const TemplateSet& templates);

// Convenience overloads on the builtin templates.
RenderedPrompt build_direct_prompt(const PlaceId& place, const TaskSpec& task,
                                   PromptLanguage lang);
RenderedPrompt build_identification_prompt(const TaskSpec& task, int n_features,
                                           PromptLanguage lang);
RenderedPrompt build_extraction_prompt(const PlaceId& place, const FeatureSchema& schema,
                                       PromptLanguage lang);

}  // namespace cityprobe
