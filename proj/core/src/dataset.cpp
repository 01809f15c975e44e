#include "cityprobe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cityprobe/csv.hpp"
#include "cityprobe/error.hpp"
#include "cityprobe/rng.hpp"

namespace cityprobe {

PlaceId PlaceId::from_rendered(const std::string& text) {
  auto pos = text.find(", ");
  if (pos == std::string::npos) return PlaceId{text, ""};
  return PlaceId{text.substr(0, pos), text.substr(pos + 2)};
}

bool TaskSpec::contains(const PlaceId& place) const {
  return std::any_of(places.begin(), places.end(),
                     [&](const PlaceId& p) { return p == place; });
}

TaskSpec load_task_spec(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) fail(errc::io_error, "cannot open " + json_path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(errc::format_error, json_path + ": " + e.what());
  }

  TaskSpec task;
  task.task_id = doc.at("task_id").get<std::string>();
  task.target_name = doc.at("target_name").get<std::string>();
  task.unit = doc.value("unit", std::string{});
  std::string level = doc.value("level", std::string{"city"});
  if (level == "city") {
    task.level = TaskLevel::city;
  } else if (level == "region") {
    task.level = TaskLevel::region;
  } else {
    fail(errc::format_error, "unknown level '" + level + "'");
  }
  if (doc.contains("places")) {
    for (const auto& p : doc.at("places")) {
      if (p.is_string()) {
        task.places.push_back(PlaceId::from_rendered(p.get<std::string>()));
      } else {
        task.places.push_back(
            PlaceId{p.at("name").get<std::string>(), p.value("qualifier", std::string{})});
      }
    }
  }
  if (doc.contains("scale_hint")) {
    const auto& s = doc.at("scale_hint");
    task.scale_hint = std::make_pair(s.at(0).get<double>(), s.at(1).get<double>());
  }
  return task;
}

std::optional<double> TargetTable::value_of(const PlaceId& place) const {
  for (const auto& [p, v] : entries) {
    if (p == place) return v;
  }
  return std::nullopt;
}

std::vector<PlaceId> TargetTable::places() const {
  std::vector<PlaceId> out;
  out.reserve(entries.size());
  for (const auto& [p, v] : entries) out.push_back(p);
  return out;
}

TargetTable load_task(const std::string& csv_path, const TaskSpec& task) {
  csv::Table raw = csv::read_file(csv_path);
  auto place_col = raw.column("place");
  auto target_col = raw.column("target");
  if (!place_col) fail(errc::missing_column, "place");
  if (!target_col) fail(errc::missing_column, "target");

  TargetTable table;
  table.provenance = csv_path;
  std::unordered_set<std::string> seen;
  for (const auto& row : raw.rows) {
    if (row.size() <= std::max(*place_col, *target_col)) {
      ++table.dropped_rows;
      continue;
    }
    PlaceId place = PlaceId::from_rendered(row[*place_col]);
    auto value = csv::parse_double(row[*target_col]);
    if (!value || !std::isfinite(*value)) {
      ++table.dropped_rows;
      continue;
    }
    if (!seen.insert(place.rendered()).second) {
      fail(errc::duplicate_place, place.rendered() + " in " + csv_path);
    }
    table.entries.emplace_back(std::move(place), *value);
  }
  if (table.entries.empty()) fail(errc::empty_dataset, csv_path);
  if (!task.places.empty()) {
    for (const auto& [place, value] : table.entries) {
      if (!task.contains(place)) {
        fail(errc::unknown_place, place.rendered() + " not in task '" + task.task_id + "'");
      }
    }
  }
  return table;
}

void write_targets(const std::string& csv_path, const TargetTable& table) {
  csv::Table out;
  out.header = {"place", "target"};
  for (const auto& [place, value] : table.entries) {
    out.rows.push_back({place.rendered(), csv::format_double(value)});
  }
  csv::write_file(csv_path, out);
}

TargetTable normalize_region_targets(const TargetTable& table) {
  if (table.empty()) fail(errc::empty_dataset, "cannot normalize an empty table");
  double lo = table.entries.front().second;
  double hi = lo;
  for (const auto& [place, value] : table.entries) {
    lo = std::min(lo, value);
    hi = std::max(hi, value);
  }
  TargetTable out = table;
  for (auto& [place, value] : out.entries) {
    // clamp: rounding in the subtraction may overshoot a bound by one ulp
    value = (hi == lo) ? 0.0 : std::clamp(10.0 * (value - lo) / (hi - lo), 0.0, 10.0);
  }
  return out;
}

int FoldAssignment::fold(const PlaceId& place) const {
  auto it = fold_of.find(place.rendered());
  if (it == fold_of.end()) fail(errc::unknown_place, place.rendered());
  return it->second;
}

std::vector<size_t> FoldAssignment::fold_sizes() const {
  std::vector<size_t> sizes(static_cast<size_t>(k), 0);
  for (const auto& [place, fold] : fold_of) ++sizes[static_cast<size_t>(fold)];
  return sizes;
}

FoldAssignment assign_folds(const std::vector<PlaceId>& places, int k, uint64_t seed) {
  if (k < 2) fail(errc::invalid_argument, "k must be >= 2");
  if (places.size() < static_cast<size_t>(k)) {
    fail(errc::too_few_places, std::to_string(places.size()) + " places for k=" + std::to_string(k));
  }

  std::vector<size_t> order(places.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (size_t i = order.size() - 1; i > 0; --i) {
    size_t j = static_cast<size_t>(bounded_uniform(rng, i + 1));
    std::swap(order[i], order[j]);
  }

  FoldAssignment assignment;
  assignment.k = k;
  for (size_t pos = 0; pos < order.size(); ++pos) {
    assignment.fold_of[places[order[pos]].rendered()] = static_cast<int>(pos % static_cast<size_t>(k));
  }
  return assignment;
}

}  // namespace cityprobe
