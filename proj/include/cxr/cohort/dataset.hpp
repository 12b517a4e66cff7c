#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "cxr/augment/transforms.hpp"
#include "cxr/cohort/filters.hpp"
#include "cxr/cohort/synth.hpp"
#include "cxr/models/data.hpp"

namespace cxr::cohort {

// Preprocessed images keyed by scan_id, loaded once.
class ImageStore {
 public:
  using Loader = std::function<augment::Image(const ScanRecord&)>;

  ImageStore(Loader load, augment::AugmentConfig cfg) : load_(std::move(load)), cfg_(std::move(cfg)) {}

  // Images read from `root / image_path`.
  static ImageStore from_directory(const std::string& root, const augment::AugmentConfig& cfg) {
    return ImageStore(
        [root](const ScanRecord& s) {
          return augment::read_pgm((std::filesystem::path(root) / s.image_path).string());
        },
        cfg);
  }

  // Images taken from an in-memory synthetic cohort.
  static ImageStore from_synth(const SynthCohort& c, const augment::AugmentConfig& cfg) {
    auto images = std::make_shared<std::map<std::string, augment::Image>>();
    for (const auto& p : c.patients)
      for (const auto& s : p.scans) (*images)[s.record.scan_id] = s.image;
    return ImageStore(
        [images](const ScanRecord& s) {
          auto it = images->find(s.scan_id);
          if (it == images->end()) throw IoError("no image for scan " + s.scan_id);
          return it->second;
        },
        cfg);
  }

  const augment::Image& get(const ScanRecord& s) {
    auto it = cache_.find(s.scan_id);
    if (it == cache_.end()) it = cache_.emplace(s.scan_id, augment::preprocess(load_(s), cfg_)).first;
    return it->second;
  }

 private:
  Loader load_;
  augment::AugmentConfig cfg_;
  std::map<std::string, augment::Image> cache_;
};

inline std::string example_id(const ScanRecord& s) { return s.patient_id + "/" + s.scan_id; }

inline std::vector<models::Example> make_examples(const std::vector<ScanRecord>& scans,
                                                  const std::vector<LabeledExample>& labels, ImageStore& images) {
  if (scans.size() != labels.size()) throw ContractError("make_examples: scans and labels differ in length");
  std::vector<models::Example> out;
  out.reserve(scans.size());
  for (std::size_t i = 0; i < scans.size(); ++i)
    out.push_back({example_id(scans[i]), scans[i].patient_id, images.get(scans[i]), labels[i].labels, labels[i].mask});
  return out;
}

inline std::vector<models::SequenceExample> make_sequences(const std::vector<SequenceRecord>& seqs,
                                                           ImageStore& images) {
  std::vector<models::SequenceExample> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) {
    models::SequenceExample e;
    e.id = example_id(s.scans.back());
    e.group = s.patient_id;
    for (const auto& r : s.scans) e.images.push_back(images.get(r));
    e.hours = s.hours;
    e.labels = s.labels.labels;
    e.mask = s.labels.mask;
    out.push_back(std::move(e));
  }
  return out;
}

// Keeps the entries whose patient is in `patients`.
template <class E>
std::vector<E> select_patients(const std::vector<E>& items, const std::vector<std::string>& patients) {
  const std::set<std::string> keep(patients.begin(), patients.end());
  std::vector<E> out;
  for (const auto& e : items)
    if (keep.count(e.group)) out.push_back(e);
  return out;
}

}  // namespace cxr::cohort
