#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cityprobe {

/// A place and the context that disambiguates it ("Tianjin" + "China").
struct PlaceId {
  std::string name;
  std::string qualifier;

  /// Canonical form used in prompts, CSV files, and lookup keys:
  /// "name, qualifier", or just "name" when the qualifier is empty.
  std::string rendered() const {
    return qualifier.empty() ? name : name + ", " + qualifier;
  }

  /// Inverse of rendered(): splits on the first ", ".
  static PlaceId from_rendered(const std::string& text);

  bool operator==(const PlaceId& other) const {
    return name == other.name && qualifier == other.qualifier;
  }
};

enum class TaskLevel { city, region };

struct TaskSpec {
  std::string task_id;
  std::string target_name;
  std::string unit;
  TaskLevel level = TaskLevel::city;
  std::vector<PlaceId> places;
  std::optional<std::pair<double, double>> scale_hint;

  bool contains(const PlaceId& place) const;
};

/// Loads a task description from JSON. `places` may be omitted, in which
/// case the place list is later derived from the data file's row order.
TaskSpec load_task_spec(const std::string& json_path);

/// Place -> target value in task units. Entries keep data-file row order.
struct TargetTable {
  std::vector<std::pair<PlaceId, double>> entries;
  std::string provenance;
  size_t dropped_rows = 0;

  bool empty() const { return entries.empty(); }
  size_t size() const { return entries.size(); }
  std::optional<double> value_of(const PlaceId& place) const;
  std::vector<PlaceId> places() const;
};

/// Reads a `place,target` CSV. Rows whose target cell is missing or not a
/// finite number are dropped and counted in `dropped_rows`. Extra columns
/// are ignored.
TargetTable load_task(const std::string& csv_path, const TaskSpec& task);

/// Writes the table back to a `place,target` CSV that load_task can reload
/// exactly (doubles use shortest round-trip formatting).
void write_targets(const std::string& csv_path, const TargetTable& table);

/// Min-max scales all values to [0, 10]; a constant table maps to all zeros.
/// Input is untouched.
TargetTable normalize_region_targets(const TargetTable& table);

struct FoldAssignment {
  int k = 0;
  std::unordered_map<std::string, int> fold_of;  // keyed by rendered place

  int fold(const PlaceId& place) const;
  std::vector<size_t> fold_sizes() const;
};

/// Deterministic seeded shuffle (Fisher-Yates over mt19937_64) followed by
/// round-robin assignment; fold sizes differ by at most one.
FoldAssignment assign_folds(const std::vector<PlaceId>& places, int k, uint64_t seed);

}  // namespace cityprobe
