#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "../support/oracles.hpp"
#include "cityprobe/error.hpp"
#include "cityprobe/features.hpp"
#include "cityprobe/rng.hpp"

using namespace cityprobe;

namespace {

HiddenStateTensor make_tensor(const std::string& name, uint32_t tokens, uint32_t dim,
                              uint64_t seed) {
  HiddenStateTensor tensor;
  tensor.place = PlaceId{name, "Testland"};
  tensor.n_tokens = tokens;
  tensor.hidden_dim = dim;
  tensor.data.resize(size_t(tokens) * dim);
  std::mt19937_64 rng(seed);
  for (auto& v : tensor.data) v = static_cast<float>(2.0 * unit_uniform(rng) - 1.0);
  return tensor;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("mean_max_pool on a 2x3 tensor") {
  HiddenStateTensor tensor;
  tensor.place = PlaceId{"t", ""};
  tensor.n_tokens = 2;
  tensor.hidden_dim = 3;
  tensor.data = {1, 2, 3, 4, 5, 6};
  auto pooled = mean_max_pool(tensor);
  REQUIRE(pooled.size() == 6);
  CHECK(pooled[0] == doctest::Approx(2.5));
  CHECK(pooled[1] == doctest::Approx(3.5));
  CHECK(pooled[2] == doctest::Approx(4.5));
  CHECK(pooled[3] == 4.0);
  CHECK(pooled[4] == 5.0);
  CHECK(pooled[5] == 6.0);
}

TEST_CASE("single-token pooling: mean half equals max half") {
  auto tensor = make_tensor("solo", 1, 16, 3);
  auto pooled = mean_max_pool(tensor);
  for (size_t d = 0; d < 16; ++d) {
    CHECK(pooled[d] == doctest::Approx(pooled[16 + d]));
    CHECK(pooled[d] == doctest::Approx(tensor.at(0, d)));
  }
}

TEST_CASE("37x4096 tensor pools to 8192 and matches the naive oracle") {
  auto tensor = make_tensor("big", 37, 4096, 8);
  auto pooled = mean_max_pool(tensor);
  REQUIRE(pooled.size() == 8192);
  auto expected = oracles::naive_mean_max_pool(tensor.data, 37, 4096);
  for (size_t i = 0; i < pooled.size(); ++i) {
    CHECK(pooled[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
}

TEST_CASE("pooling is invariant to token order and bounded by column extremes") {
  std::mt19937_64 rng(21);
  for (int round = 0; round < 20; ++round) {
    auto tensor = make_tensor("perm", 5 + rng() % 10, 8, rng());
    auto pooled = mean_max_pool(tensor);

    // shuffle token rows
    HiddenStateTensor shuffled = tensor;
    std::vector<size_t> order(tensor.n_tokens);
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[bounded_uniform(rng, i + 1)]);
    }
    for (size_t t = 0; t < tensor.n_tokens; ++t) {
      for (size_t d = 0; d < tensor.hidden_dim; ++d) {
        shuffled.data[t * tensor.hidden_dim + d] = tensor.at(order[t], d);
      }
    }
    auto pooled_shuffled = mean_max_pool(shuffled);
    for (size_t i = 0; i < pooled.size(); ++i) {
      CHECK(pooled[i] == doctest::Approx(pooled_shuffled[i]).epsilon(1e-12));
    }

    for (size_t d = 0; d < tensor.hidden_dim; ++d) {
      double lo = tensor.at(0, d), hi = tensor.at(0, d);
      for (size_t t = 0; t < tensor.n_tokens; ++t) {
        lo = std::min<double>(lo, tensor.at(t, d));
        hi = std::max<double>(hi, tensor.at(t, d));
      }
      CHECK(pooled[d] >= lo - 1e-12);
      CHECK(pooled[d] <= hi + 1e-12);
      CHECK(pooled[tensor.hidden_dim + d] >= pooled[d] - 1e-12);
    }
  }
}

TEST_CASE("projection identities") {
  auto projection = Projection::make(8, 4, 77);

  std::vector<double> zero(8, 0.0);
  for (double v : project(zero, projection)) CHECK(v == 0.0);

  for (size_t i = 0; i < 8; ++i) {
    std::vector<double> basis(8, 0.0);
    basis[i] = 1.0;
    auto out = project(basis, projection);
    for (size_t j = 0; j < 4; ++j) CHECK(out[j] == projection.matrix[i * 4 + j]);
  }
}

TEST_CASE("seeded projection matches the independent oracle") {
  std::mt19937_64 rng(123);
  std::vector<double> input(8);
  for (auto& v : input) v = 2.0 * unit_uniform(rng) - 1.0;

  auto projection = Projection::make(8, 4, 2024);
  auto ours = project(input, projection);
  auto reference = oracles::naive_projection(input, 8, 4, 2024);
  REQUIRE(ours.size() == reference.size());
  for (size_t j = 0; j < ours.size(); ++j) {
    CHECK(ours[j] == doctest::Approx(reference[j]).epsilon(1e-12));
  }
}

TEST_CASE("projection to 32 dims from a pooled 37x4096 tensor") {
  auto tensor = make_tensor("proj", 37, 4096, 5);
  auto pooled = mean_max_pool(tensor);
  auto projection = Projection::make(8192, 32, 9);
  auto ours = project(pooled, projection);
  auto reference = oracles::naive_projection(pooled, 8192, 32, 9);
  REQUIRE(ours.size() == 32);
  for (size_t j = 0; j < 32; ++j) {
    CHECK(std::fabs(ours[j] - reference[j]) < 1e-9);
  }
}

TEST_CASE("projection is linear") {
  std::mt19937_64 rng(31);
  auto projection = Projection::make(16, 6, 41);
  for (int round = 0; round < 100; ++round) {
    std::vector<double> x(16), y(16), combo(16);
    double a = 4.0 * unit_uniform(rng) - 2.0;
    double b = 4.0 * unit_uniform(rng) - 2.0;
    for (size_t i = 0; i < 16; ++i) {
      x[i] = 2.0 * unit_uniform(rng) - 1.0;
      y[i] = 2.0 * unit_uniform(rng) - 1.0;
      combo[i] = a * x[i] + b * y[i];
    }
    auto lhs = project(combo, projection);
    auto px = project(x, projection);
    auto py = project(y, projection);
    for (size_t j = 0; j < 6; ++j) {
      double rhs = a * px[j] + b * py[j];
      double scale = std::max(1.0, std::fabs(rhs));
      CHECK(std::fabs(lhs[j] - rhs) / scale < 1e-9);
    }
  }
}

TEST_CASE("identical seeds give bit-identical matrices") {
  auto a = Projection::make(64, 8, 99);
  auto b = Projection::make(64, 8, 99);
  CHECK(a.matrix == b.matrix);
  auto c = Projection::make(64, 8, 100);
  CHECK(a.matrix != c.matrix);
}

TEST_CASE("projection dimension mismatch") {
  auto projection = Projection::make(8, 4, 1);
  std::vector<double> wrong(7, 1.0);
  try {
    project(wrong, projection);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == errc::dimension_mismatch);
  }
}

TEST_CASE("HST1 files round-trip exactly") {
  auto tensor = make_tensor("io", 7, 12, 55);
  auto path = temp_path("tensor.hst");
  write_hst(path, tensor);
  auto loaded = read_hst(path, tensor.place);
  CHECK(loaded.n_tokens == tensor.n_tokens);
  CHECK(loaded.hidden_dim == tensor.hidden_dim);
  CHECK(loaded.data == tensor.data);
}

TEST_CASE("HST1 rejects bad magic and truncation") {
  auto path = temp_path("bad.hst");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE1234extra";
  }
  try {
    read_hst(path, PlaceId{"x", ""});
    FAIL("expected FormatError");
  } catch (const Error& e) {
    CHECK(e.code() == errc::format_error);
  }

  auto tensor = make_tensor("trunc", 4, 4, 2);
  write_hst(path, tensor);
  std::filesystem::resize_file(path, 20);  // header + one float
  try {
    read_hst(path, PlaceId{"x", ""});
    FAIL("expected FormatError");
  } catch (const Error& e) {
    CHECK(e.code() == errc::format_error);
  }
}

TEST_CASE("assemble_explicit keeps task order and counts omissions") {
  FeatureSchema schema;
  schema.features = {{"x", ""}, {"y", ""}, {"z", ""}};
  std::vector<PlaceId> order = {PlaceId{"a", ""}, PlaceId{"b", ""}, PlaceId{"c", ""}};

  std::map<std::string, ParsedFeatures> answers;
  ParsedFeatures pa;
  pa.values = {{"x", 1.0}, {"y", 2.0}, {"z", 3.0}};
  ParsedFeatures pc;
  pc.values = {{"z", 6.0}, {"y", 5.0}, {"x", 4.0}};  // shuffled key order
  answers["a"] = pa;
  answers["c"] = pc;

  auto matrix = assemble_explicit(answers, schema, order);
  REQUIRE(matrix.rows() == 2);
  REQUIRE(matrix.cols() == 3);
  CHECK(matrix.omitted_places == 1);
  CHECK(matrix.places[0].name == "a");
  CHECK(matrix.places[1].name == "c");
  CHECK(matrix.feature_names == std::vector<std::string>{"x", "y", "z"});
  CHECK(matrix.at(1, 0) == 4.0);
  CHECK(matrix.at(1, 2) == 6.0);

  try {
    assemble_explicit({}, schema, order);
    FAIL("expected EmptyMatrix");
  } catch (const Error& e) {
    CHECK(e.code() == errc::empty_matrix);
  }
}

TEST_CASE("assemble_implicit shapes, determinism, and mixed dims") {
  std::vector<HiddenStateTensor> tensors = {make_tensor("a", 5, 64, 1), make_tensor("b", 7, 64, 2),
                                            make_tensor("c", 3, 64, 3)};
  auto matrix = assemble_implicit(tensors, 32, 7);
  CHECK(matrix.rows() == 3);
  CHECK(matrix.cols() == 32);
  CHECK(matrix.feature_names.front() == "h0");
  CHECK(matrix.feature_names.back() == "h31");
  CHECK(matrix.provenance == FeatureProvenance::implicit);

  std::vector<HiddenStateTensor> twins = {make_tensor("t", 4, 16, 9), make_tensor("t", 4, 16, 9)};
  auto twin_matrix = assemble_implicit(twins, 8, 1);
  for (size_t j = 0; j < 8; ++j) CHECK(twin_matrix.at(0, j) == twin_matrix.at(1, j));

  std::vector<HiddenStateTensor> mixed = {make_tensor("a", 4, 4096, 1),
                                          make_tensor("b", 4, 2048, 2)};
  try {
    assemble_implicit(mixed, 8, 0);
    FAIL("expected MixedHiddenDim");
  } catch (const Error& e) {
    CHECK(e.code() == errc::mixed_hidden_dim);
  }
}

TEST_CASE("feature matrix JSON round-trips") {
  FeatureMatrix matrix;
  matrix.provenance = FeatureProvenance::implicit;
  matrix.feature_names = {"h0", "h1"};
  matrix.places = {PlaceId{"a", "Q"}, PlaceId{"b", "Q"}};
  matrix.values = {1.5, -2.25, 0.125, 3.75};
  matrix.omitted_places = 2;

  auto path = temp_path("fm.json");
  save_feature_matrix(path, matrix);
  auto loaded = load_feature_matrix(path);
  CHECK(loaded.provenance == matrix.provenance);
  CHECK(loaded.feature_names == matrix.feature_names);
  CHECK(loaded.values == matrix.values);
  CHECK(loaded.omitted_places == 2);
  CHECK(loaded.places[1].rendered() == "b, Q");
}
