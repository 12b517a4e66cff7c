#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "cxr/cohort/records.hpp"
#include "cxr/models/labels.hpp"

namespace cxr::cohort {

struct LabeledExample {
  std::string scan_id;
  std::vector<float> labels;
  std::vector<float> mask;  // 0 marks an undefined (censored) label
};

struct LabelOptions {
  // When set, a negative label whose window reaches past the patient's last
  // observation (latest event or scan, unless the patient died) is masked.
  bool mask_on_censor = false;
};

// True when an event of `type` falls in (t, t + w]. "any_adverse" matches
// icu, intubation and mortality.
inline bool event_in_window(const std::vector<EventRecord>& events, const std::string& type, double t, double w) {
  for (const auto& e : events) {
    const bool match = type == "any_adverse" ? is_adverse(e.event_type) : e.event_type == type;
    if (match && e.time > t && (std::isinf(w) || e.time <= t + w)) return true;
  }
  return false;
}

inline double last_observation(const std::vector<EventRecord>& events, const std::vector<ScanRecord>& patient_scans) {
  double last = -std::numeric_limits<double>::infinity();
  for (const auto& e : events) last = std::max(last, e.time);
  for (const auto& s : patient_scans) last = std::max(last, s.time);
  return last;
}

inline LabeledExample window_labels(const ScanRecord& scan, const std::vector<EventRecord>& patient_events,
                                    const models::LabelLayout& layout, const LabelOptions& opt = {},
                                    double follow_up_end = std::numeric_limits<double>::infinity()) {
  LabeledExample ex{scan.scan_id, std::vector<float>(layout.size(), 0.f), std::vector<float>(layout.size(), 1.f)};
  bool died = false;
  for (const auto& e : patient_events) died = died || e.event_type == "mortality";
  for (std::size_t ev = 0; ev < layout.events.size(); ++ev)
    for (std::size_t w = 0; w < layout.windows.size(); ++w) {
      const std::size_t i = layout.index(ev, w);
      const double win = layout.windows[w];
      if (event_in_window(patient_events, layout.events[ev], scan.time, win)) {
        ex.labels[i] = 1.f;
      } else if (opt.mask_on_censor && !died && scan.time + win > follow_up_end) {
        ex.mask[i] = 0.f;
      }
    }
  return ex;
}

// Labels for many scans of one cohort, looking events up by patient.
inline std::vector<LabeledExample> label_scans(const std::vector<ScanRecord>& scans, const Cohort& cohort,
                                               const models::LabelLayout& layout, const LabelOptions& opt = {}) {
  const auto idx = index_events(cohort.events);
  std::map<std::string, std::vector<ScanRecord>> by_patient;
  for (const auto& s : cohort.scans) by_patient[s.patient_id].push_back(s);
  static const std::vector<EventRecord> none;
  std::vector<LabeledExample> out;
  out.reserve(scans.size());
  for (const auto& s : scans) {
    const auto it = idx.find(s.patient_id);
    const auto& ev = it == idx.end() ? none : it->second;
    out.push_back(window_labels(s, ev, layout, opt, last_observation(ev, by_patient[s.patient_id])));
  }
  return out;
}

}  // namespace cxr::cohort
