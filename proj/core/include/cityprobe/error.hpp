#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cityprobe {

enum class errc {
  // dataset
  missing_column,
  duplicate_place,
  empty_dataset,
  too_few_places,
  // prompting
  unknown_place,
  empty_schema,
  // gateway
  replay_miss,
  provider_error,
  timeout,
  auth_missing,
  // parsing
  no_json_found,
  missing_key,
  unparseable,
  wrong_count,
  duplicate_name,
  // features
  empty_matrix,
  mixed_hidden_dim,
  dimension_mismatch,
  format_error,
  // ml
  length_mismatch,
  empty_input,
  too_few_rows,
  singular,
  column_mismatch,
  fold_too_small,
  no_overlap,
  // diagnostics
  constant_input,
  too_short,
  non_positive_baseline,
  too_few_repeats,
  // general
  io_error,
  invalid_argument,
};

std::string_view to_string(errc code);

/// Exception carrying an errc so callers can dispatch on failure kind.
class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace cityprobe
