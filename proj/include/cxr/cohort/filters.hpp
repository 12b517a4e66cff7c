#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "cxr/cohort/labels.hpp"
#include "cxr/models/cpe.hpp"

namespace cxr::cohort {

inline double first_adverse_time(const std::vector<EventRecord>& events) {
  double t = std::numeric_limits<double>::infinity();
  for (const auto& e : events)
    if (is_adverse(e.event_type)) t = std::min(t, e.time);
  return t;
}

// SIP: ED scans with no adverse event at or before the scan.
// ORP: every ED scan.
// MIP: ED and inpatient scans strictly before the first adverse event.
// Output keeps the input order.
inline std::vector<ScanRecord> apply_task_filter(const std::vector<ScanRecord>& scans,
                                                 const std::vector<EventRecord>& events, models::Task task) {
  const auto idx = index_events(events);
  std::vector<ScanRecord> out;
  for (const auto& s : scans) {
    const auto it = idx.find(s.patient_id);
    const double first = it == idx.end() ? std::numeric_limits<double>::infinity() : first_adverse_time(it->second);
    bool keep = false;
    switch (task) {
      case models::Task::sip: keep = s.location == Location::ed && s.time < first; break;
      case models::Task::orp: keep = s.location == Location::ed; break;
      case models::Task::mip: keep = s.time < first; break;
    }
    if (keep) out.push_back(s);
  }
  return out;
}

struct SequenceRecord {
  std::string patient_id;
  std::string index_scan_id;
  std::vector<ScanRecord> scans;  // oldest first, index scan last
  std::vector<double> hours;      // hours before the index scan
  LabeledExample labels;
};

// One sequence per eligible scan: earlier eligible scans of the same patient
// less than 360 h before it, then the scan itself. Scans sharing a time stamp
// contribute only the first by scan_id, so times stay strictly increasing.
inline std::vector<SequenceRecord> build_sequences(const std::vector<ScanRecord>& eligible, const Cohort& cohort,
                                                   const models::LabelLayout& layout, const LabelOptions& opt = {}) {
  std::map<std::string, std::vector<ScanRecord>> by_patient;
  for (const auto& s : eligible) by_patient[s.patient_id].push_back(s);
  for (auto& [_, v] : by_patient)
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      return a.time != b.time ? a.time < b.time : a.scan_id < b.scan_id;
    });
  const auto labels = label_scans(eligible, cohort, layout, opt);
  std::vector<SequenceRecord> out;
  out.reserve(eligible.size());
  for (std::size_t k = 0; k < eligible.size(); ++k) {
    const auto& index = eligible[k];
    SequenceRecord seq{index.patient_id, index.scan_id, {}, {}, labels[k]};
    double last = -std::numeric_limits<double>::infinity();
    for (const auto& s : by_patient[index.patient_id]) {
      const double before = index.time - s.time;
      if (s.time >= index.time || before >= models::kSequenceCutoffHours || s.time == last) continue;
      seq.scans.push_back(s);
      seq.hours.push_back(before);
      last = s.time;
    }
    seq.scans.push_back(index);
    seq.hours.push_back(0.0);
    out.push_back(std::move(seq));
  }
  return out;
}

// Positive counts per (event, window) over the task's eligible scans.
struct EventCountRow {
  models::Task task;
  std::string event;
  std::vector<std::size_t> counts;  // one per window of the layout
};

inline std::vector<EventCountRow> event_window_counts(const Cohort& cohort,
                                                      const std::vector<models::Task>& tasks = {models::Task::sip,
                                                                                                models::Task::mip}) {
  std::vector<EventCountRow> out;
  for (auto task : tasks) {
    const auto layout = models::layout_for(task);
    const auto eligible = apply_task_filter(cohort.scans, cohort.events, task);
    const auto labels = label_scans(eligible, cohort, layout);
    for (std::size_t e = 0; e < layout.events.size(); ++e) {
      EventCountRow row{task, layout.events[e], std::vector<std::size_t>(layout.windows.size(), 0)};
      for (const auto& l : labels)
        for (std::size_t w = 0; w < layout.windows.size(); ++w) row.counts[w] += l.labels[layout.index(e, w)] != 0.f;
      out.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace cxr::cohort
