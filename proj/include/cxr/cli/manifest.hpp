#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cxr/common/error.hpp"
#include "json.hpp"

namespace cxr::cli {

using json = nlohmann::json;

// {"command": ..., "options": {...}}: the fully resolved options of one run.
struct Manifest {
  std::string command;
  json options;
};

inline std::string manifest_text(const Manifest& m) {
  json j{{"command", m.command}, {"options", m.options}};
  return j.dump(2) + "\n";
}

inline void write_manifest(const std::string& path, const Manifest& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << manifest_text(m);
  if (!os) throw IoError("failed writing '" + path + "'");
}

inline Manifest read_manifest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open manifest '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("command") || !j.contains("options") || !j["command"].is_string() ||
      !j["options"].is_object())
    throw ParseError(path + ": manifest needs a string 'command' and an object 'options'");
  return {j["command"].get<std::string>(), j["options"]};
}

// Where a command's manifest goes: inside a directory output, or next to a
// file output.
inline std::string manifest_path(const std::string& out, bool out_is_dir) {
  return out_is_dir ? (std::filesystem::path(out) / "manifest.json").string() : out + ".manifest.json";
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
}

inline void ensure_parent(const std::string& file) {
  const auto parent = std::filesystem::path(file).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
}

// Opens `path` for binary writing, throwing IoError on failure.
inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  return os;
}

}  // namespace cxr::cli
