#include "degkit/dataset.hpp"

#include "degkit/error.hpp"

#include <cmath>

namespace degkit {

void UnitRecord::validate(std::size_t expected_channels) const {
  for (std::size_t k = 1; k < times.size(); ++k)
    require(times[k] > times[k - 1], "unit " + unit_id + ": times must be strictly increasing");
  require(channels.size() == expected_channels,
          "unit " + unit_id + ": expected " + std::to_string(expected_channels) + " channels");
  for (const auto& ch : channels)
    require(ch.size() == times.size(), "unit " + unit_id + ": channel length differs from times");
  require(event_indicator == 0 || event_indicator == 1, "unit " + unit_id + ": event must be 0/1");
  if (event_time && !times.empty()) {
    const double tol = 1e-9 * std::max(1.0, std::abs(times.back()));
    require(std::abs(*event_time - times.back()) <= tol,
            "unit " + unit_id + ": event_time must equal the last measurement time");
  }
}

std::size_t Dataset::num_events() const {
  std::size_t c = 0;
  for (const auto& u : units) c += u.event_indicator == 1 ? 1 : 0;
  return c;
}

void Dataset::validate() const {
  require(!units.empty(), "dataset has no units");
  for (const auto& u : units) u.validate(channel_names.size());
}

std::size_t Dataset::find_unit(const std::string& id) const {
  for (std::size_t i = 0; i < units.size(); ++i)
    if (units[i].unit_id == id) return i;
  return static_cast<std::size_t>(-1);
}

}  // namespace degkit
