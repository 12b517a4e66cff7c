#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cxr/autodiff/tensor.hpp"
#include "cxr/common/error.hpp"

namespace cxr::augment {

// Single-channel image with nonnegative intensities, row-major.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, float fill = 0.f) : height(h), width(w), pixels(h * w, fill) {}
  Image(std::size_t h, std::size_t w, std::vector<float> px) : height(h), width(w), pixels(std::move(px)) {
    if (pixels.size() != h * w) throw DimensionError("image pixel count does not match extents");
  }

  bool empty() const { return pixels.empty(); }
  float& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  float at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }

  double mean() const {
    if (pixels.empty()) return 0.0;
    double s = 0.0;
    for (float p : pixels) s += p;
    return s / double(pixels.size());
  }

  bool operator==(const Image&) const = default;
};

// Stacks equally sized images into a [B,1,H,W] tensor.
template <typename T>
ad::Tensor<T> to_batch(const std::vector<Image>& images) {
  if (images.empty()) throw InvalidInputError("to_batch: no images");
  const std::size_t h = images[0].height, w = images[0].width;
  std::vector<T> data;
  data.reserve(images.size() * h * w);
  for (const auto& im : images) {
    if (im.height != h || im.width != w) throw DimensionError("to_batch: images differ in size");
    data.insert(data.end(), im.pixels.begin(), im.pixels.end());
  }
  return ad::Tensor<T>({images.size(), 1, h, w}, std::move(data));
}

// ---------------------------------------------------------------------------
// PGM (P5) I/O. 8-bit or 16-bit (big-endian samples, per the netpbm format).
// In memory, intensities are value / maxval in [0, 1].

namespace detail {

inline std::string next_token(std::istream& is) {
  std::string tok;
  char c;
  while (is.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(is, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

}  // namespace detail

inline Image read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image '" + path + "'");
  if (detail::next_token(is) != "P5") throw ParseError(path + ": not a binary PGM (P5)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(detail::next_token(is));
    h = std::stoul(detail::next_token(is));
    maxval = std::stoul(detail::next_token(is));
  } catch (const std::exception&) {
    throw ParseError(path + ": malformed PGM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw ParseError(path + ": bad PGM header values");
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(w * h * bytes_per);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(is.gcount()) != raw.size()) throw ParseError(path + ": truncated PGM data");
  Image img(h, w);
  for (std::size_t i = 0; i < w * h; ++i) {
    const unsigned v = bytes_per == 1 ? raw[i] : (unsigned(raw[2 * i]) << 8) | raw[2 * i + 1];
    img.pixels[i] = float(double(v) / double(maxval));
  }
  return img;
}

// Writes intensities clamped to [0,1] with the given bit depth (8 or 16).
inline void write_pgm(const std::string& path, const Image& img, int bits = 16) {
  if (bits != 8 && bits != 16) throw ContractError("write_pgm: bits must be 8 or 16");
  const unsigned maxval = bits == 8 ? 255u : 65535u;
  std::ostringstream header;
  header << "P5\n" << img.width << ' ' << img.height << '\n' << maxval << '\n';
  std::string out = header.str();
  for (float p : img.pixels) {
    const double c = std::clamp(double(p), 0.0, 1.0);
    const unsigned v = static_cast<unsigned>(std::lround(c * maxval));
    if (bits == 16) out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw IoError("failed writing '" + path + "'");
}

}  // namespace cxr::augment
