#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "cxr/augment/image.hpp"
#include "cxr/common/csv.hpp"

namespace cxr::pretrain {

struct LabeledCorpus {
  std::vector<augment::Image> images;
  std::vector<std::vector<float>> findings;  // one 0/1 vector per image
  std::vector<std::string> finding_names;
};

// All *.pgm files directly inside `dir`, in lexicographic filename order.
inline std::vector<std::string> list_images(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("'" + dir + "' is not a directory");
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") paths.push_back(e.path().string());
  std::sort(paths.begin(), paths.end());
  return paths;
}

inline std::vector<augment::Image> load_images(const std::string& dir) {
  std::vector<augment::Image> out;
  for (const auto& p : list_images(dir)) out.push_back(augment::read_pgm(p));
  if (out.empty()) throw InvalidInputError("no .pgm images in '" + dir + "'");
  return out;
}

// findings.csv: header `image,<finding>,...`; image paths relative to `dir`.
inline LabeledCorpus load_labeled_corpus(const std::string& dir, const std::string& findings_file = "findings.csv") {
  const std::string path = (std::filesystem::path(dir) / findings_file).string();
  const auto rows = csv::read_file(path);
  if (rows.empty() || rows[0].fields.size() < 2 || rows[0].fields[0] != "image")
    throw ParseError(path + ":1: expected header 'image,<finding>,...'");
  LabeledCorpus c;
  c.finding_names.assign(rows[0].fields.begin() + 1, rows[0].fields.end());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    const std::string where = path + ":" + std::to_string(rows[r].line);
    if (f.size() != rows[0].fields.size()) throw ParseError(where + ": wrong number of fields");
    std::vector<float> y;
    for (std::size_t j = 1; j < f.size(); ++j) {
      if (f[j] != "0" && f[j] != "1") throw ParseError(where + ": finding values must be 0 or 1");
      y.push_back(f[j] == "1" ? 1.f : 0.f);
    }
    c.images.push_back(augment::read_pgm((std::filesystem::path(dir) / f[0]).string()));
    c.findings.push_back(std::move(y));
  }
  return c;
}

}  // namespace cxr::pretrain
