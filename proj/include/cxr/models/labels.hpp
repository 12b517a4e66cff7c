#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cxr/common/error.hpp"

namespace cxr::models {

enum class Task { sip, orp, mip };

inline std::string to_string(Task t) {
  switch (t) {
    case Task::sip: return "sip";
    case Task::orp: return "orp";
    case Task::mip: return "mip";
  }
  return "?";
}

inline Task task_from_string(const std::string& s) {
  if (s == "sip" || s == "SIP") return Task::sip;
  if (s == "orp" || s == "ORP") return Task::orp;
  if (s == "mip" || s == "MIP") return Task::mip;
  throw ContractError("unknown task '" + s + "' (expected sip, orp or mip)");
}

// Window lengths in hours; +infinity is the "any" window.
inline constexpr double kAnyWindow = std::numeric_limits<double>::infinity();

// Label index = event_index * |windows| + window_index.
struct LabelLayout {
  std::vector<std::string> events;
  std::vector<double> windows;

  std::size_t size() const { return events.size() * windows.size(); }

  std::size_t index(std::size_t event, std::size_t window) const {
    if (event >= events.size() || window >= windows.size()) throw ContractError("label index out of range");
    return event * windows.size() + window;
  }

  std::size_t event_index(const std::string& e) const {
    for (std::size_t i = 0; i < events.size(); ++i)
      if (events[i] == e) return i;
    throw ContractError("label layout has no event '" + e + "'");
  }

  std::size_t window_index(double hours) const {
    for (std::size_t i = 0; i < windows.size(); ++i)
      if (windows[i] == hours) return i;
    throw ContractError("label layout has no window of " + std::to_string(hours) + " h");
  }

  static std::string window_name(double w) {
    return std::isinf(w) ? "any" : std::to_string(static_cast<long>(w)) + "h";
  }

  // "event@window", e.g. "any_adverse@96h", "icu@any".
  std::string name(std::size_t label) const {
    if (label >= size()) throw ContractError("label index out of range");
    return events[label / windows.size()] + "@" + window_name(windows[label % windows.size()]);
  }

  std::size_t find(const std::string& label_name) const {
    for (std::size_t i = 0; i < size(); ++i)
      if (name(i) == label_name) return i;
    throw ContractError("label layout has no label '" + label_name + "'");
  }

  bool operator==(const LabelLayout&) const = default;
};

inline const std::vector<double>& standard_windows() {
  static const std::vector<double> w{24, 48, 72, 96, kAnyWindow};
  return w;
}

// SIP and MIP: ICU transfer, intubation, mortality and their union.
inline LabelLayout adverse_layout() { return {{"icu", "intubation", "mortality", "any_adverse"}, standard_windows()}; }

// ORP: more than 6 L of oxygen in a day.
inline LabelLayout oxygen_layout() { return {{"o2_gt6l"}, standard_windows()}; }

inline LabelLayout layout_for(Task t) { return t == Task::orp ? oxygen_layout() : adverse_layout(); }

inline std::string default_selection_label(Task t) {
  return t == Task::orp ? "o2_gt6l@96h" : "any_adverse@96h";
}

}  // namespace cxr::models
