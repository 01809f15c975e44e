#include "cityprobe/features.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "cityprobe/error.hpp"
#include "cityprobe/rng.hpp"

namespace cityprobe {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'H', 'S', 'T', '1'};
constexpr double kTwoPi = 6.283185307179586476925286766559;

uint32_t read_u32_le(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

void write_u32_le(std::ofstream& out, uint32_t v) {
  uint8_t buf[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

}  // namespace

std::vector<double> FeatureMatrix::row(size_t index) const {
  auto begin = values.begin() + static_cast<std::ptrdiff_t>(index * cols());
  return std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(cols()));
}

void save_feature_matrix(const std::string& json_path, const FeatureMatrix& matrix) {
  json doc;
  doc["provenance"] = matrix.provenance == FeatureProvenance::explicit_ ? "explicit" : "implicit";
  doc["feature_names"] = matrix.feature_names;
  doc["omitted_places"] = matrix.omitted_places;
  doc["places"] = json::array();
  doc["values"] = json::array();
  for (size_t r = 0; r < matrix.rows(); ++r) {
    doc["places"].push_back(matrix.places[r].rendered());
    doc["values"].push_back(matrix.row(r));
  }
  std::ofstream out(json_path);
  if (!out) fail(errc::io_error, "cannot write " + json_path);
  out << doc.dump(2) << '\n';
}

FeatureMatrix load_feature_matrix(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) fail(errc::io_error, "cannot open " + json_path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) fail(errc::format_error, json_path);

  FeatureMatrix matrix;
  matrix.provenance = doc.value("provenance", std::string{"explicit"}) == "implicit"
                          ? FeatureProvenance::implicit
                          : FeatureProvenance::explicit_;
  matrix.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
  matrix.omitted_places = doc.value("omitted_places", size_t{0});
  for (const auto& p : doc.at("places")) {
    matrix.places.push_back(PlaceId::from_rendered(p.get<std::string>()));
  }
  for (const auto& row : doc.at("values")) {
    if (row.size() != matrix.feature_names.size()) {
      fail(errc::format_error, json_path + ": ragged values row");
    }
    for (const auto& v : row) {
      double value = v.get<double>();
      if (!std::isfinite(value)) fail(errc::format_error, json_path + ": non-finite value");
      matrix.values.push_back(value);
    }
  }
  if (matrix.places.size() * matrix.feature_names.size() != matrix.values.size()) {
    fail(errc::format_error, json_path + ": shape mismatch");
  }
  return matrix;
}

HiddenStateTensor read_hst(const std::string& path, const PlaceId& place) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_error, "cannot open " + path);
  uint8_t header[12];
  if (!in.read(reinterpret_cast<char*>(header), sizeof(header))) {
    fail(errc::format_error, path + ": truncated header");
  }
  if (std::memcmp(header, kMagic, 4) != 0) fail(errc::format_error, path + ": bad magic");

  HiddenStateTensor tensor;
  tensor.place = place;
  tensor.n_tokens = read_u32_le(header + 4);
  tensor.hidden_dim = read_u32_le(header + 8);
  if (tensor.n_tokens == 0 || tensor.hidden_dim == 0) {
    fail(errc::format_error, path + ": zero dimension");
  }

  size_t count = size_t(tensor.n_tokens) * tensor.hidden_dim;
  if (count > (size_t(1) << 30)) {
    fail(errc::format_error, path + ": implausible tensor size in header");
  }
  tensor.data.resize(count);
  std::vector<uint8_t> raw(count * 4);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    fail(errc::format_error, path + ": truncated payload");
  }
  for (size_t i = 0; i < count; ++i) {
    uint32_t bits = read_u32_le(raw.data() + 4 * i);
    float value;
    std::memcpy(&value, &bits, 4);
    if (!std::isfinite(value)) fail(errc::format_error, path + ": non-finite activation");
    tensor.data[i] = value;
  }
  return tensor;
}

void write_hst(const std::string& path, const HiddenStateTensor& tensor) {
  if (tensor.data.size() != size_t(tensor.n_tokens) * tensor.hidden_dim) {
    fail(errc::dimension_mismatch, "tensor payload does not match header");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io_error, "cannot write " + path);
  out.write(kMagic, 4);
  write_u32_le(out, tensor.n_tokens);
  write_u32_le(out, tensor.hidden_dim);
  for (float value : tensor.data) {
    uint32_t bits;
    std::memcpy(&bits, &value, 4);
    uint8_t buf[4] = {uint8_t(bits), uint8_t(bits >> 8), uint8_t(bits >> 16), uint8_t(bits >> 24)};
    out.write(reinterpret_cast<const char*>(buf), 4);
  }
}

std::vector<HiddenStateTensor> load_hidden_states(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) fail(errc::io_error, "cannot open " + manifest_path);
  nlohmann::ordered_json doc = nlohmann::ordered_json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) fail(errc::format_error, manifest_path);

  const auto base = std::filesystem::path(manifest_path).parent_path();
  std::vector<HiddenStateTensor> tensors;
  for (const auto& [rendered, path_value] : doc.items()) {
    std::filesystem::path file = path_value.get<std::string>();
    if (file.is_relative()) file = base / file;
    tensors.push_back(read_hst(file.string(), PlaceId::from_rendered(rendered)));
  }
  if (tensors.empty()) fail(errc::empty_dataset, manifest_path + ": empty manifest");
  return tensors;
}

std::vector<double> mean_max_pool(const HiddenStateTensor& tensor) {
  const size_t dim = tensor.hidden_dim;
  const size_t tokens = tensor.n_tokens;
  std::vector<double> pooled(2 * dim);
  for (size_t d = 0; d < dim; ++d) {
    double sum = 0.0;
    double best = tensor.at(0, d);
    for (size_t t = 0; t < tokens; ++t) {
      double v = tensor.at(t, d);
      sum += v;
      if (v > best) best = v;
    }
    pooled[d] = sum / static_cast<double>(tokens);
    pooled[dim + d] = best;
  }
  return pooled;
}

Projection Projection::make(size_t in_dim, size_t out_dim, uint64_t seed) {
  if (in_dim == 0 || out_dim == 0) fail(errc::invalid_argument, "projection dims must be >= 1");
  Projection p;
  p.in_dim = in_dim;
  p.out_dim = out_dim;
  p.seed = seed;
  p.matrix.resize(in_dim * out_dim);

  std::mt19937_64 rng(seed);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(in_dim));
  // Box-Muller, pairwise; hand-rolled because std::normal_distribution's
  // draw sequence is not pinned by the standard.
  double spare = 0.0;
  bool has_spare = false;
  for (double& entry : p.matrix) {
    if (has_spare) {
      entry = spare * sigma;
      has_spare = false;
      continue;
    }
    double u1 = unit_uniform(rng);
    double u2 = unit_uniform(rng);
    double radius = std::sqrt(-2.0 * std::log(u1));
    entry = radius * std::cos(kTwoPi * u2) * sigma;
    spare = radius * std::sin(kTwoPi * u2);
    has_spare = true;
  }
  return p;
}

std::vector<double> project(const std::vector<double>& pooled, const Projection& projection) {
  if (pooled.size() != projection.in_dim) {
    fail(errc::dimension_mismatch,
         "pooled length " + std::to_string(pooled.size()) + " != in_dim " +
             std::to_string(projection.in_dim));
  }
  std::vector<double> out(projection.out_dim, 0.0);
  for (size_t i = 0; i < projection.in_dim; ++i) {
    const double x = pooled[i];
    const double* row = projection.matrix.data() + i * projection.out_dim;
    for (size_t j = 0; j < projection.out_dim; ++j) out[j] += x * row[j];
  }
  return out;
}

FeatureMatrix assemble_explicit(const std::map<std::string, ParsedFeatures>& answers,
                                const FeatureSchema& schema,
                                const std::vector<PlaceId>& place_order) {
  validate(schema);
  FeatureMatrix matrix;
  matrix.provenance = FeatureProvenance::explicit_;
  matrix.feature_names = schema.names();
  for (const PlaceId& place : place_order) {
    auto it = answers.find(place.rendered());
    if (it == answers.end()) {
      ++matrix.omitted_places;
      continue;
    }
    matrix.places.push_back(place);
    for (const auto& name : matrix.feature_names) {
      auto value = it->second.values.find(name);
      if (value == it->second.values.end()) fail(errc::missing_key, name);
      matrix.values.push_back(value->second);
    }
  }
  if (matrix.places.empty()) fail(errc::empty_matrix, "no usable answers");
  return matrix;
}

FeatureMatrix assemble_implicit(const std::vector<HiddenStateTensor>& tensors, size_t out_dim,
                                uint64_t seed) {
  if (tensors.empty()) fail(errc::empty_matrix, "no tensors");
  if (out_dim == 0) fail(errc::invalid_argument, "out_dim must be >= 1");
  const uint32_t dim = tensors.front().hidden_dim;
  for (const auto& t : tensors) {
    if (t.hidden_dim != dim) {
      fail(errc::mixed_hidden_dim,
           std::to_string(t.hidden_dim) + " vs " + std::to_string(dim));
    }
  }

  Projection projection = Projection::make(size_t(2) * dim, out_dim, seed);
  FeatureMatrix matrix;
  matrix.provenance = FeatureProvenance::implicit;
  for (size_t j = 0; j < out_dim; ++j) matrix.feature_names.push_back("h" + std::to_string(j));
  for (const auto& tensor : tensors) {
    matrix.places.push_back(tensor.place);
    std::vector<double> row = project(mean_max_pool(tensor), projection);
    matrix.values.insert(matrix.values.end(), row.begin(), row.end());
  }
  return matrix;
}

}  // namespace cityprobe
