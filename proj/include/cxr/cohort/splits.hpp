#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cxr/cohort/filters.hpp"
#include "cxr/common/rng.hpp"

namespace cxr::cohort {

struct PatientSplit {
  std::vector<std::string> trainval;
  std::vector<std::string> test;
};

// Uniformly random patient-level holdout; round(test_fraction * n) patients
// go to test. Both lists come back sorted.
inline PatientSplit patient_split(std::vector<std::string> patients, Rng& rng, double test_fraction = 0.12) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw ContractError("patient_split: fractions must sum to 1");
  std::sort(patients.begin(), patients.end());
  patients.erase(std::unique(patients.begin(), patients.end()), patients.end());
  std::shuffle(patients.begin(), patients.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * double(patients.size())));
  PatientSplit s{{patients.begin() + long(n_test), patients.end()}, {patients.begin(), patients.begin() + long(n_test)}};
  std::sort(s.trainval.begin(), s.trainval.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

// k folds of patients, stratified on a per-patient positive flag: positives
// and negatives are shuffled separately and dealt round-robin, continuing the
// rotation from positives into negatives so fold sizes differ by at most one.
inline std::vector<std::vector<std::string>> stratified_kfold(const std::vector<std::string>& patients,
                                                              const std::set<std::string>& positive, std::size_t k,
                                                              Rng& rng) {
  if (k < 2) throw ContractError("stratified_kfold: k must be at least 2");
  std::set<std::string> unique(patients.begin(), patients.end());
  if (unique.size() < k)
    throw InvalidInputError("stratified_kfold: " + std::to_string(unique.size()) + " patients for " +
                            std::to_string(k) + " folds");
  std::vector<std::string> pos, neg;
  for (const auto& p : unique) (positive.count(p) ? pos : neg).push_back(p);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::vector<std::vector<std::string>> folds(k);
  std::size_t next = 0;
  for (const auto* group : {&pos, &neg})
    for (const auto& p : *group) folds[next++ % k].push_back(p);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

// Patients with at least one positive example for `label` among `examples`.
inline std::set<std::string> positive_patients(const std::vector<ScanRecord>& scans,
                                               const std::vector<LabeledExample>& examples, std::size_t label) {
  std::set<std::string> out;
  for (std::size_t i = 0; i < scans.size(); ++i)
    if (examples[i].labels[label] != 0.f) out.insert(scans[i].patient_id);
  return out;
}

struct SummaryRow {
  models::Task task;
  std::size_t trainval_patients = 0, trainval_scans = 0;
  std::size_t test_patients = 0, test_scans = 0;
};

// Scans and patients per split for each task, the layout of the cohort table.
inline std::vector<SummaryRow> cohort_summary(const Cohort& cohort, const PatientSplit& split) {
  const std::set<std::string> test(split.test.begin(), split.test.end());
  std::vector<SummaryRow> out;
  for (auto task : {models::Task::sip, models::Task::orp, models::Task::mip}) {
    SummaryRow r{task};
    std::set<std::string> tv_p, te_p;
    for (const auto& s : apply_task_filter(cohort.scans, cohort.events, task)) {
      if (test.count(s.patient_id)) ++r.test_scans, te_p.insert(s.patient_id);
      else ++r.trainval_scans, tv_p.insert(s.patient_id);
    }
    r.trainval_patients = tv_p.size();
    r.test_patients = te_p.size();
    out.push_back(r);
  }
  return out;
}

inline std::string format_summary(const std::vector<SummaryRow>& rows) {
  char buf[160];
  std::string s = "task  trainval_patients  trainval_scans  test_patients  test_scans\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-4s  %17zu  %14zu  %13zu  %10zu\n", models::to_string(r.task).c_str(),
                  r.trainval_patients, r.trainval_scans, r.test_patients, r.test_scans);
    s += buf;
  }
  return s;
}

}  // namespace cxr::cohort
