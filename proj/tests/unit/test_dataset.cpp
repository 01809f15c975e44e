#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "../support/oracles.hpp"
#include "cityprobe/csv.hpp"
#include "cityprobe/dataset.hpp"
#include "cityprobe/error.hpp"
#include "cityprobe/rng.hpp"

using namespace cityprobe;

namespace {

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

TaskSpec unbound_task() {
  TaskSpec task;
  task.task_id = "t";
  task.target_name = "Testing Target";
  return task;
}

}  // namespace

TEST_CASE("load_task reads a single-row file") {
  auto path = temp_file("single.csv");
  write_text(path, "place,target\n\"Tianjin, China\",50\n");
  TargetTable table = load_task(path, unbound_task());
  REQUIRE(table.size() == 1);
  CHECK(table.entries[0].first.name == "Tianjin");
  CHECK(table.entries[0].first.qualifier == "China");
  CHECK(table.entries[0].second == 50.0);
  CHECK(table.dropped_rows == 0);
}

TEST_CASE("blank target cells are dropped and counted") {
  auto path = temp_file("blanks.csv");
  write_text(path, "place,target\nA,1\nB,\nC,3\n");
  TargetTable table = load_task(path, unbound_task());
  CHECK(table.size() == 2);
  CHECK(table.dropped_rows == 1);
}

TEST_CASE("245-row modal fixture loads with every row intact") {
  // emitted by the same counting recipe the detector fixture uses
  auto values = oracles::modal_fixture_values();
  REQUIRE(values.size() == 245);
  csv::Table raw;
  raw.header = {"place", "target"};
  for (size_t i = 0; i < values.size(); ++i) {
    raw.rows.push_back({"city" + std::to_string(i) + ", China", csv::format_double(values[i])});
  }
  auto path = temp_file("modal.csv");
  csv::write_file(path, raw);

  TargetTable table = load_task(path, unbound_task());
  CHECK(table.size() == 245);
  size_t fives = 0, fifties = 0, others = 0;
  for (const auto& [p, v] : table.entries) {
    if (v == 5.0) {
      ++fives;
    } else if (v == 50.0) {
      ++fifties;
    } else {
      ++others;
    }
  }
  CHECK(fives == 54);
  CHECK(fifties == 176);
  CHECK(others == 15);
}

TEST_CASE("loader errors") {
  auto path = temp_file("badcol.csv");
  write_text(path, "city,value\nA,1\n");
  CHECK_THROWS_WITH_AS(load_task(path, unbound_task()), doctest::Contains("MissingColumn"),
                       Error);

  write_text(path, "place,target\nA,1\nA,2\n");
  try {
    load_task(path, unbound_task());
    FAIL("expected DuplicatePlace");
  } catch (const Error& e) {
    CHECK(e.code() == errc::duplicate_place);
  }

  write_text(path, "place,target\nA,\nB,nan\n");
  try {
    load_task(path, unbound_task());
    FAIL("expected EmptyDataset");
  } catch (const Error& e) {
    CHECK(e.code() == errc::empty_dataset);
  }
}

TEST_CASE("normalization maps to [0,10] with stated edge cases") {
  TargetTable table;
  table.entries = {{PlaceId{"a", ""}, 0.0}, {PlaceId{"b", ""}, 5.0}, {PlaceId{"c", ""}, 10.0}};
  auto out = normalize_region_targets(table);
  CHECK(out.entries[0].second == doctest::Approx(0.0));
  CHECK(out.entries[1].second == doctest::Approx(5.0));
  CHECK(out.entries[2].second == doctest::Approx(10.0));

  table.entries = {{PlaceId{"a", ""}, 2.0}, {PlaceId{"b", ""}, 4.0}};
  out = normalize_region_targets(table);
  CHECK(out.entries[0].second == 0.0);
  CHECK(out.entries[1].second == 10.0);
  CHECK(table.entries[0].second == 2.0);  // input untouched

  table.entries = {{PlaceId{"a", ""}, 7.0}, {PlaceId{"b", ""}, 7.0}, {PlaceId{"c", ""}, 7.0}};
  out = normalize_region_targets(table);
  for (const auto& [p, v] : out.entries) CHECK(v == 0.0);
}

TEST_CASE("normalization is idempotent and range-bounded on random tables") {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 25; ++round) {
    TargetTable table;
    size_t n = 2 + rng() % 40;
    for (size_t i = 0; i < n; ++i) {
      table.entries.push_back({PlaceId{"p" + std::to_string(i), ""},
                               -500.0 + 1000.0 * cityprobe::unit_uniform(rng)});
    }
    auto once = normalize_region_targets(table);
    auto twice = normalize_region_targets(once);
    double lo = 1e300, hi = -1e300;
    for (size_t i = 0; i < n; ++i) {
      CHECK(once.entries[i].second >= 0.0);
      CHECK(once.entries[i].second <= 10.0);
      CHECK(std::fabs(once.entries[i].second - twice.entries[i].second) < 1e-12);
      lo = std::min(lo, once.entries[i].second);
      hi = std::max(hi, once.entries[i].second);
    }
    CHECK(lo == doctest::Approx(0.0));
    CHECK(hi == doctest::Approx(10.0));
  }
}

TEST_CASE("write/load round trip is exact") {
  std::mt19937_64 rng(13);
  TargetTable table;
  for (size_t i = 0; i < 64; ++i) {
    table.entries.push_back({PlaceId{"p" + std::to_string(i), "Q"},
                             std::ldexp(static_cast<double>(rng()), -32)});
  }
  auto path = temp_file("roundtrip.csv");
  write_targets(path, table);
  TargetTable again = load_task(path, unbound_task());
  REQUIRE(again.size() == table.size());
  for (size_t i = 0; i < table.size(); ++i) {
    CHECK(again.entries[i].first == table.entries[i].first);
    CHECK(again.entries[i].second == table.entries[i].second);
  }
}

namespace {
std::vector<PlaceId> n_places(size_t n) {
  std::vector<PlaceId> places;
  for (size_t i = 0; i < n; ++i) places.push_back(PlaceId{"p" + std::to_string(i), ""});
  return places;
}
}  // namespace

TEST_CASE("fold sizes and partition") {
  auto folds = assign_folds(n_places(10), 5, 42);
  auto sizes = folds.fold_sizes();
  for (size_t s : sizes) CHECK(s == 2);

  folds = assign_folds(n_places(11), 5, 42);
  sizes = folds.fold_sizes();
  std::multiset<size_t> got(sizes.begin(), sizes.end());
  CHECK(got == std::multiset<size_t>{3, 2, 2, 2, 2});
}

TEST_CASE("fold assignment is deterministic and a partition") {
  std::mt19937_64 rng(3);
  for (int round = 0; round < 20; ++round) {
    size_t n = 5 + rng() % 60;
    int k = 2 + static_cast<int>(rng() % 5);
    if (n < static_cast<size_t>(k)) continue;
    auto places = n_places(n);
    uint64_t seed = rng();
    auto a = assign_folds(places, k, seed);
    auto b = assign_folds(places, k, seed);
    CHECK(a.fold_of == b.fold_of);

    size_t total = 0;
    auto sizes = a.fold_sizes();
    size_t lo = n, hi = 0;
    for (size_t s : sizes) {
      total += s;
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    CHECK(total == n);
    CHECK(hi - lo <= 1);
    for (const auto& place : places) {
      CHECK(a.fold(place) >= 0);
      CHECK(a.fold(place) < k);
    }
  }
}

TEST_CASE("too few places is rejected") {
  try {
    assign_folds(n_places(3), 5, 0);
    FAIL("expected TooFewPlaces");
  } catch (const Error& e) {
    CHECK(e.code() == errc::too_few_places);
  }
}

TEST_CASE("place rendering round-trips") {
  PlaceId place{"New York City", "New York"};
  CHECK(place.rendered() == "New York City, New York");
  CHECK(PlaceId::from_rendered(place.rendered()) == place);
  CHECK(PlaceId::from_rendered("Monaco") == PlaceId{"Monaco", ""});
}
