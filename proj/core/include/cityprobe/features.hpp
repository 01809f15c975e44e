#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cityprobe/dataset.hpp"
#include "cityprobe/parsing.hpp"

namespace cityprobe {

enum class FeatureProvenance { explicit_, implicit };

/// places x features numeric table feeding the ML harness. Row order
/// matches `places`, column order matches `feature_names`; every entry is
/// finite.
struct FeatureMatrix {
  std::vector<PlaceId> places;
  std::vector<std::string> feature_names;
  std::vector<double> values;  // row-major, |places| x |feature_names|
  FeatureProvenance provenance = FeatureProvenance::explicit_;
  size_t omitted_places = 0;

  size_t rows() const { return places.size(); }
  size_t cols() const { return feature_names.size(); }
  double at(size_t row, size_t col) const { return values[row * cols() + col]; }
  std::vector<double> row(size_t index) const;
};

void save_feature_matrix(const std::string& json_path, const FeatureMatrix& matrix);
FeatureMatrix load_feature_matrix(const std::string& json_path);

/// Token activations for one place: n_tokens x hidden_dim, row-major.
struct HiddenStateTensor {
  PlaceId place;
  uint32_t n_tokens = 0;
  uint32_t hidden_dim = 0;
  std::vector<float> data;

  float at(size_t token, size_t dim) const { return data[token * hidden_dim + dim]; }
};

// HST1 container: 4-byte magic "HST1", two u32 LE (n_tokens, hidden_dim),
// then n_tokens*hidden_dim f32 LE, row-major.
HiddenStateTensor read_hst(const std::string& path, const PlaceId& place);
void write_hst(const std::string& path, const HiddenStateTensor& tensor);

/// Manifest JSON object mapping place rendered-name -> HST1 file path.
/// Entry order in the file defines tensor (row) order. Relative paths are
/// resolved against the manifest's directory.
std::vector<HiddenStateTensor> load_hidden_states(const std::string& manifest_path);

/// Per-column means over tokens followed by per-column maxima; output
/// length 2*hidden_dim.
std::vector<double> mean_max_pool(const HiddenStateTensor& tensor);

/// Fixed seeded Gaussian random projection. Entries are i.i.d.
/// N(0, 1/in_dim), generated row-major by a Box-Muller transform over
/// mt19937_64 draws, so the matrix is bit-identical for a given
/// (in_dim, out_dim, seed) on every platform.
struct Projection {
  size_t in_dim = 0;
  size_t out_dim = 0;
  uint64_t seed = 0;
  std::vector<double> matrix;  // row-major, in_dim x out_dim

  static Projection make(size_t in_dim, size_t out_dim, uint64_t seed);
};

std::vector<double> project(const std::vector<double>& pooled, const Projection& projection);

/// Explicit path: one row per answered place, rows ordered by
/// `place_order`, columns ordered by the schema. Places without an answer
/// are skipped and counted in `omitted_places`.
FeatureMatrix assemble_explicit(const std::map<std::string, ParsedFeatures>& answers,
                                const FeatureSchema& schema,
                                const std::vector<PlaceId>& place_order);

/// Implicit path: one row per tensor, pool + project; columns are named
/// h0..h{out_dim-1}.
FeatureMatrix assemble_implicit(const std::vector<HiddenStateTensor>& tensors, size_t out_dim,
                                uint64_t seed);

}  // namespace cityprobe
