#include "cityprobe/error.hpp"

namespace cityprobe {

std::string_view to_string(errc code) {
  switch (code) {
    case errc::missing_column: return "MissingColumn";
    case errc::duplicate_place: return "DuplicatePlace";
    case errc::empty_dataset: return "EmptyDataset";
    case errc::too_few_places: return "TooFewPlaces";
    case errc::unknown_place: return "UnknownPlace";
    case errc::empty_schema: return "EmptySchema";
    case errc::replay_miss: return "ReplayMiss";
    case errc::provider_error: return "ProviderError";
    case errc::timeout: return "Timeout";
    case errc::auth_missing: return "AuthMissing";
    case errc::no_json_found: return "NoJsonFound";
    case errc::missing_key: return "MissingKey";
    case errc::unparseable: return "Unparseable";
    case errc::wrong_count: return "WrongCount";
    case errc::duplicate_name: return "DuplicateName";
    case errc::empty_matrix: return "EmptyMatrix";
    case errc::mixed_hidden_dim: return "MixedHiddenDim";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::format_error: return "FormatError";
    case errc::length_mismatch: return "LengthMismatch";
    case errc::empty_input: return "Empty";
    case errc::too_few_rows: return "TooFewRows";
    case errc::singular: return "Singular";
    case errc::column_mismatch: return "ColumnMismatch";
    case errc::fold_too_small: return "FoldTooSmall";
    case errc::no_overlap: return "NoOverlap";
    case errc::constant_input: return "ConstantInput";
    case errc::too_short: return "TooShort";
    case errc::non_positive_baseline: return "NonPositiveBaseline";
    case errc::too_few_repeats: return "TooFewRepeats";
    case errc::io_error: return "IoError";
    case errc::invalid_argument: return "InvalidArgument";
  }
  return "UnknownError";
}

}  // namespace cityprobe
