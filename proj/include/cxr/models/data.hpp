#pragma once

#include <string>
#include <vector>

#include "cxr/augment/image.hpp"

namespace cxr::models {

// One scan with its label vector. mask[i] == 0 marks label i as undefined.
struct Example {
  std::string id;
  std::string group;  // patient
  augment::Image image;
  std::vector<float> labels;
  std::vector<float> mask;
};

// A patient's scans ending at the index scan; hours[i] is hours before the
// final scan (last entry 0). Labels belong to the final scan.
struct SequenceExample {
  std::string id;
  std::string group;
  std::vector<augment::Image> images;
  std::vector<double> hours;
  std::vector<float> labels;
  std::vector<float> mask;
};

}  // namespace cxr::models
