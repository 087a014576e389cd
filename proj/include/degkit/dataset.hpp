#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace degkit {

/// One unit's multi-channel measurement history and event status.
struct UnitRecord {
  std::string unit_id;
  std::vector<double> times;                  // strictly increasing
  std::vector<std::vector<double>> channels;  // channels[j][k] aligned with times[k]
  std::optional<double> event_time;           // equals times.back() when present
  int event_indicator = 0;

  std::size_t num_times() const { return times.size(); }
  /// Throws if the record breaks its invariants.
  void validate(std::size_t expected_channels) const;
};

struct Dataset {
  std::vector<UnitRecord> units;
  std::vector<std::string> channel_names;
  std::map<std::string, std::string> meta;

  std::size_t n() const { return units.size(); }
  std::size_t p() const { return channel_names.size(); }
  std::size_t num_events() const;
  void validate() const;
  /// Index of a unit by id, or npos.
  std::size_t find_unit(const std::string& id) const;
};

}  // namespace degkit
