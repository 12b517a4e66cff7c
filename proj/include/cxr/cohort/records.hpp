#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cxr/common/csv.hpp"
#include "cxr/common/error.hpp"

namespace cxr::cohort {

inline const std::vector<std::string>& event_types() {
  static const std::vector<std::string> t{"icu", "intubation", "mortality", "o2_gt6l"};
  return t;
}

inline bool is_adverse(const std::string& type) {
  return type == "icu" || type == "intubation" || type == "mortality";
}

enum class Location { ed, inpatient };

inline std::string to_string(Location l) { return l == Location::ed ? "ed" : "inpatient"; }

struct EventRecord {
  std::string patient_id;
  std::string event_type;
  double time = 0.0;  // hours since cohort epoch

  bool operator==(const EventRecord&) const = default;
};

struct ScanRecord {
  std::string patient_id;
  std::string scan_id;
  double time = 0.0;
  Location location = Location::ed;
  std::string image_path;

  bool operator==(const ScanRecord&) const = default;
};

struct Cohort {
  std::vector<EventRecord> events;
  std::vector<ScanRecord> scans;
  std::vector<std::string> warnings;

  std::vector<std::string> patients() const {
    std::set<std::string> ids;
    for (const auto& s : scans) ids.insert(s.patient_id);
    return {ids.begin(), ids.end()};
  }
};

// Events grouped by patient, each list sorted by time.
using EventIndex = std::map<std::string, std::vector<EventRecord>>;

inline EventIndex index_events(const std::vector<EventRecord>& events) {
  EventIndex idx;
  for (const auto& e : events) idx[e.patient_id].push_back(e);
  for (auto& [_, v] : idx)
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
  return idx;
}

// At most one mortality per patient and nothing recorded after it.
inline void check_event_integrity(const std::vector<EventRecord>& events) {
  for (const auto& [pid, list] : index_events(events)) {
    const EventRecord* death = nullptr;
    for (const auto& e : list)
      if (e.event_type == "mortality") {
        if (death) throw IntegrityError("patient " + pid + " has more than one mortality event");
        death = &e;
      }
    if (death)
      for (const auto& e : list)
        if (e.time > death->time)
          throw IntegrityError("patient " + pid + " has a " + e.event_type + " event after mortality");
  }
}

// A zero-byte events file is an empty log.
inline std::vector<EventRecord> parse_events(const std::vector<csv::Row>& rows, const std::string& source) {
  if (rows.empty()) return {};
  csv::expect_header(rows, {"patient_id", "event_type", "event_time_hours"}, source);
  std::vector<EventRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::string where = source + ":" + std::to_string(r.line);
    if (r.fields.size() != 3) throw ParseError(where + ": expected 3 fields, got " + std::to_string(r.fields.size()));
    EventRecord e{r.fields[0], r.fields[1], 0.0};
    if (e.patient_id.empty()) throw ParseError(where + ": empty patient_id");
    if (std::find(event_types().begin(), event_types().end(), e.event_type) == event_types().end())
      throw ParseError(where + ": unknown event_type '" + e.event_type + "'");
    try {
      e.time = csv::parse_double(r.fields[2], "event_time_hours");
    } catch (const ParseError& ex) {
      throw ParseError(where + ": " + ex.what());
    }
    if (!std::isfinite(e.time)) throw ParseError(where + ": event_time_hours must be finite");
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<ScanRecord> parse_scans(const std::vector<csv::Row>& rows, const std::string& source) {
  csv::expect_header(rows, {"patient_id", "scan_id", "acquired_time_hours", "location", "image_path"}, source);
  std::vector<ScanRecord> out;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const std::string where = source + ":" + std::to_string(r.line);
    if (r.fields.size() != 5) throw ParseError(where + ": expected 5 fields, got " + std::to_string(r.fields.size()));
    ScanRecord s;
    s.patient_id = r.fields[0];
    s.scan_id = r.fields[1];
    if (s.patient_id.empty() || s.scan_id.empty()) throw ParseError(where + ": empty patient_id or scan_id");
    try {
      s.time = csv::parse_double(r.fields[2], "acquired_time_hours");
    } catch (const ParseError& ex) {
      throw ParseError(where + ": " + ex.what());
    }
    if (!std::isfinite(s.time)) throw ParseError(where + ": acquired_time_hours must be finite");
    if (r.fields[3] == "ed") s.location = Location::ed;
    else if (r.fields[3] == "inpatient") s.location = Location::inpatient;
    else throw ParseError(where + ": location must be ed or inpatient, got '" + r.fields[3] + "'");
    s.image_path = r.fields[4];
    if (!seen.insert(s.scan_id).second) throw IntegrityError(where + ": duplicate scan_id '" + s.scan_id + "'");
    out.push_back(std::move(s));
  }
  return out;
}

// Reads both CSVs and validates them. Events of patients without scans are
// kept and reported in `warnings`.
inline Cohort ingest(const std::string& events_file, const std::string& scans_file) {
  Cohort c;
  c.events = parse_events(csv::read_file(events_file), events_file);
  c.scans = parse_scans(csv::read_file(scans_file), scans_file);
  check_event_integrity(c.events);
  std::set<std::string> with_scans;
  for (const auto& s : c.scans) with_scans.insert(s.patient_id);
  std::set<std::string> orphans;
  for (const auto& e : c.events)
    if (!with_scans.count(e.patient_id)) orphans.insert(e.patient_id);
  for (const auto& p : orphans) c.warnings.push_back("events for patient " + p + " who has no scans");
  return c;
}

inline void write_events(const std::string& path, const std::vector<EventRecord>& events) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  csv::write_row(os, {"patient_id", "event_type", "event_time_hours"});
  for (const auto& e : events) csv::write_row(os, {e.patient_id, e.event_type, csv::format_double(e.time)});
  if (!os) throw IoError("write failed: " + path);
}

inline void write_scans(const std::string& path, const std::vector<ScanRecord>& scans) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  csv::write_row(os, {"patient_id", "scan_id", "acquired_time_hours", "location", "image_path"});
  for (const auto& s : scans)
    csv::write_row(os, {s.patient_id, s.scan_id, csv::format_double(s.time), to_string(s.location), s.image_path});
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace cxr::cohort
