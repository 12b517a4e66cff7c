#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "cxr/augment/image.hpp"
#include "cxr/common/rng.hpp"

namespace cxr::augment {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool valid() const { return lo <= hi; }
};

// Symmetric ranges: each quantity is drawn from [-r, r].
struct AffineRanges {
  double rotation_deg = 15.0;
  double shear_x_deg = 10.0;
  double shear_y_deg = 10.0;
  double translate_frac = 0.1;  // of width (x) and height (y)
};

struct AugmentConfig {
  double p_crop = 0.5;
  double p_hflip = 0.5;
  double p_vflip = 0.5;
  double p_blur = 0.5;
  double p_noise = 0.5;
  Range crop_scale{0.2, 1.0};
  Range crop_aspect{3.0 / 4.0, 4.0 / 3.0};
  Range blur_sigma{0.1, 2.0};
  Range noise_snr{4.0, 8.0};
  AffineRanges affine;
  std::size_t target_size = 64;
  Range output_range{0.0, 1.0};

  void validate() const {
    for (double p : {p_crop, p_hflip, p_vflip, p_blur, p_noise})
      if (!(p >= 0.0 && p <= 1.0)) throw ContractError("augment: probability outside [0,1]");
    for (const Range& r : {crop_scale, crop_aspect, blur_sigma, noise_snr})
      if (!r.valid()) throw ContractError("augment: range with lo > hi");
    if (crop_scale.lo <= 0.0 || crop_scale.hi > 1.0) throw ContractError("augment: crop scale must lie in (0,1]");
    if (crop_aspect.lo <= 0.0 || blur_sigma.lo <= 0.0 || noise_snr.lo <= 0.0)
      throw ContractError("augment: aspect, blur sigma and SNR must be positive");
    if (!(output_range.hi > output_range.lo) || output_range.lo < 0.0)
      throw ContractError("augment: output range must satisfy 0 <= lo < hi");
    if (target_size == 0) throw ContractError("augment: target size must be positive");
  }
};

namespace detail {

inline double draw(Rng& rng, const Range& r) { return r.lo == r.hi ? r.lo : uniform(rng, r.lo, r.hi); }

// Mirror index into [0, n) without repeating the edge sample.
inline std::size_t reflect(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  i = std::abs(i) % period;
  if (i >= static_cast<long>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

}  // namespace detail

// Bilinear resampling of the sub-rectangle [y0, y0+h) x [x0, x0+w) onto an
// out_h x out_w grid. Pixel centers are aligned (half-pixel convention) and
// source coordinates are clamped at the edges.
inline Image crop_resize(const Image& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w,
                         std::size_t out_h, std::size_t out_w) {
  if (img.empty()) throw InvalidInputError("crop_resize: empty image");
  Image out(out_h, out_w);
  const double sy = double(h) / double(out_h), sx = double(w) / double(out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, double(h - 1));
    const std::size_t y_lo = static_cast<std::size_t>(fy), y_hi = std::min(y_lo + 1, h - 1);
    const double wy = fy - double(y_lo);
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, double(w - 1));
      const std::size_t x_lo = static_cast<std::size_t>(fx), x_hi = std::min(x_lo + 1, w - 1);
      const double wx = fx - double(x_lo);
      const double top = (1 - wx) * img.at(y0 + y_lo, x0 + x_lo) + wx * img.at(y0 + y_lo, x0 + x_hi);
      const double bot = (1 - wx) * img.at(y0 + y_hi, x0 + x_lo) + wx * img.at(y0 + y_hi, x0 + x_hi);
      out.at(oy, ox) = float((1 - wy) * top + wy * bot);
    }
  }
  return out;
}

inline Image resize(const Image& img, std::size_t out_h, std::size_t out_w) {
  return crop_resize(img, 0, 0, img.height, img.width, out_h, out_w);
}

// Crop of area fraction ~ U[crop_scale] and aspect ratio ~ U[crop_aspect]
// (clipped to the image), resized to target_size x target_size.
inline Image random_resized_crop(const Image& img, Rng& rng, const AugmentConfig& cfg) {
  if (img.empty()) throw InvalidInputError("random_resized_crop: empty image");
  const double area = double(img.height * img.width) * detail::draw(rng, cfg.crop_scale);
  const double aspect = detail::draw(rng, cfg.crop_aspect);
  auto w = static_cast<std::size_t>(std::lround(std::sqrt(area * aspect)));
  auto h = static_cast<std::size_t>(std::lround(std::sqrt(area / aspect)));
  w = std::clamp<std::size_t>(w, 1, img.width);
  h = std::clamp<std::size_t>(h, 1, img.height);
  const std::size_t x0 = std::uniform_int_distribution<std::size_t>(0, img.width - w)(rng);
  const std::size_t y0 = std::uniform_int_distribution<std::size_t>(0, img.height - h)(rng);
  return crop_resize(img, y0, x0, h, w, cfg.target_size, cfg.target_size);
}

enum class FlipAxis { horizontal, vertical };

inline Image flip(const Image& img, FlipAxis axis) {
  Image out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      out.at(y, x) = axis == FlipAxis::horizontal ? img.at(y, img.width - 1 - x) : img.at(img.height - 1 - y, x);
  return out;
}

inline Image random_flip(const Image& img, Rng& rng, FlipAxis axis, double p) {
  return bernoulli(rng, p) ? flip(img, axis) : img;
}

// Discrete Gaussian on a (2*ceil(3*sigma)+1)^2 grid, renormalized to sum 1.
// The 2-D kernel factorizes, so it is applied as two 1-D passes.
inline std::vector<double> gaussian_kernel_1d(double sigma) {
  if (!(sigma > 0.0)) throw ContractError("gaussian_blur: sigma must be positive");
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double s = 0.0;
  for (long i = -radius; i <= radius; ++i) s += k[i + radius] = std::exp(-0.5 * double(i * i) / (sigma * sigma));
  for (auto& v : k) v /= s;
  return k;
}

inline Image gaussian_blur(const Image& img, double sigma) {
  const auto k = gaussian_kernel_1d(sigma);
  const long radius = static_cast<long>(k.size() / 2);
  Image tmp(img.height, img.width), out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      double s = 0.0;
      for (long d = -radius; d <= radius; ++d)
        s += k[d + radius] * img.at(y, detail::reflect(long(x) + d, img.width));
      tmp.at(y, x) = float(s);
    }
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      double s = 0.0;
      for (long d = -radius; d <= radius; ++d)
        s += k[d + radius] * tmp.at(detail::reflect(long(y) + d, img.height), x);
      out.at(y, x) = float(s);
    }
  return out;
}

// sigma_noise = mean intensity / SNR.
inline double noise_sigma(const Image& img, double snr) {
  if (!(snr > 0.0)) throw ContractError("add_gaussian_noise: SNR must be positive");
  return img.mean() / snr;
}

inline Image add_gaussian_noise(const Image& img, Rng& rng, double snr) {
  const double sigma = noise_sigma(img, snr);
  if (sigma == 0.0) return img;
  std::normal_distribution<double> n(0.0, sigma);
  Image out = img;
  for (auto& p : out.pixels) p = float(std::max(0.0, double(p) + n(rng)));
  return out;
}

// Histogram equalization with `bins` bins between the image min and max.
// The cumulative histogram gives the CDF at bin edges; inside a bin, pixels are
// placed by their rank among the bin's members, tied values sharing a midrank.
// Min maps to lo, max to hi, ranks are kept and equal pixels stay equal.
// A constant image maps to the midpoint.
inline Image histogram_normalize(const Image& img, Range out_range, std::size_t bins = 256) {
  if (!(out_range.hi > out_range.lo)) throw ContractError("histogram_normalize: need hi > lo");
  if (bins == 0) throw ContractError("histogram_normalize: need at least one bin");
  if (img.empty()) return img;
  const auto [mn_it, mx_it] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  const double mn = *mn_it, mx = *mx_it;
  Image out(img.height, img.width);
  if (mx <= mn) {
    std::fill(out.pixels.begin(), out.pixels.end(), float(0.5 * (out_range.lo + out_range.hi)));
    return out;
  }
  const double width = (mx - mn) / double(bins);
  std::vector<std::vector<std::size_t>> members(bins);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const auto b = std::min(static_cast<std::size_t>((double(img.pixels[i]) - mn) / width), bins - 1);
    members[b].push_back(i);
  }
  // midranks, later rescaled so the lowest group lands on lo and the highest on hi
  std::vector<double> mid(img.pixels.size());
  double before = 0.0;
  for (auto& m : members) {
    std::sort(m.begin(), m.end(), [&](std::size_t x, std::size_t y) { return img.pixels[x] < img.pixels[y]; });
    for (std::size_t j = 0; j < m.size();) {
      std::size_t k = j;
      while (k < m.size() && img.pixels[m[k]] == img.pixels[m[j]]) ++k;
      for (std::size_t t = j; t < k; ++t) mid[m[t]] = before + 0.5 * double(j + k - 1);
      j = k;
    }
    before += double(m.size());
  }
  const double r0 = mid[std::size_t(mn_it - img.pixels.begin())];
  const double r1 = mid[std::size_t(mx_it - img.pixels.begin())];
  const double span = out_range.hi - out_range.lo;
  for (std::size_t i = 0; i < mid.size(); ++i)
    out.pixels[i] = float(out_range.lo + span * (mid[i] - r0) / (r1 - r0));
  return out;
}

struct AffineParams {
  double rotation_deg = 0.0;
  double shear_x_deg = 0.0;
  double shear_y_deg = 0.0;
  double translate_x = 0.0;  // pixels
  double translate_y = 0.0;  // pixels
};

// Rotation about the image center composed with x/y shear, then translation.
// Output pixels are pulled from the inverse map with bilinear interpolation;
// anything sampled outside the source is zero.
inline Image affine_transform(const Image& img, const AffineParams& a) {
  const double deg = std::numbers::pi / 180.0;
  const double c = std::cos(a.rotation_deg * deg), s = std::sin(a.rotation_deg * deg);
  const double kx = std::tan(a.shear_x_deg * deg), ky = std::tan(a.shear_y_deg * deg);
  // forward M = R * Shear, Shear = [[1, kx], [ky, 1]]
  const double m00 = c - s * ky, m01 = c * kx - s, m10 = s + c * ky, m11 = s * kx + c;
  const double det = m00 * m11 - m01 * m10;
  if (std::abs(det) < 1e-12) throw ContractError("affine_transform: singular transform");
  const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;
  const double cx = 0.5 * double(img.width - 1), cy = 0.5 * double(img.height - 1);
  auto pixel = [&](long y, long x) -> double {
    if (y < 0 || x < 0 || y >= long(img.height) || x >= long(img.width)) return 0.0;
    return img.at(std::size_t(y), std::size_t(x));
  };
  // Coordinates within 1e-9 of an integer are snapped so exact mappings such
  // as 90/180 degree rotations reproduce pixel values exactly.
  auto snap = [](double v) {
    const double r = std::round(v);
    return std::abs(v - r) < 1e-9 ? r : v;
  };
  Image out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const double dx = double(x) - cx - a.translate_x, dy = double(y) - cy - a.translate_y;
      const double sx = snap(i00 * dx + i01 * dy + cx), sy = snap(i10 * dx + i11 * dy + cy);
      const long x0 = static_cast<long>(std::floor(sx)), y0 = static_cast<long>(std::floor(sy));
      const double fx = sx - double(x0), fy = sy - double(y0);
      const double v = (1 - fy) * ((1 - fx) * pixel(y0, x0) + fx * pixel(y0, x0 + 1)) +
                       fy * ((1 - fx) * pixel(y0 + 1, x0) + fx * pixel(y0 + 1, x0 + 1));
      out.at(y, x) = float(std::max(0.0, v));
    }
  return out;
}

inline AffineParams sample_affine(const Image& img, Rng& rng, const AffineRanges& r) {
  auto sym = [&](double m) { return m == 0.0 ? 0.0 : uniform(rng, -m, m); };
  AffineParams a;
  a.rotation_deg = sym(r.rotation_deg);
  a.shear_x_deg = sym(r.shear_x_deg);
  a.shear_y_deg = sym(r.shear_y_deg);
  a.translate_x = sym(r.translate_frac) * double(img.width);
  a.translate_y = sym(r.translate_frac) * double(img.height);
  return a;
}

inline Image random_affine(const Image& img, Rng& rng, const AugmentConfig& cfg) {
  return affine_transform(img, sample_affine(img, rng, cfg.affine));
}

// One draw of the contrastive pretraining pipeline, in fixed order:
// resized crop, horizontal flip, vertical flip, blur, noise (each gated by its
// probability), then histogram normalization. Without the crop the image is
// still resized to the target grid.
inline Image pretrain_view(const Image& img, Rng& rng, const AugmentConfig& cfg) {
  Image x = bernoulli(rng, cfg.p_crop) ? random_resized_crop(img, rng, cfg)
                                        : resize(img, cfg.target_size, cfg.target_size);
  x = random_flip(x, rng, FlipAxis::horizontal, cfg.p_hflip);
  x = random_flip(x, rng, FlipAxis::vertical, cfg.p_vflip);
  if (bernoulli(rng, cfg.p_blur)) x = gaussian_blur(x, detail::draw(rng, cfg.blur_sigma));
  if (bernoulli(rng, cfg.p_noise)) x = add_gaussian_noise(x, rng, detail::draw(rng, cfg.noise_snr));
  return histogram_normalize(x, cfg.output_range);
}

// Two independent draws of pretrain_view: the query and key images.
inline std::pair<Image, Image> make_query_key_pair(const Image& img, Rng& rng, const AugmentConfig& cfg) {
  Image q = pretrain_view(img, rng, cfg);
  Image k = pretrain_view(img, rng, cfg);
  return {std::move(q), std::move(k)};
}

// Resize + histogram normalization: the deterministic preprocessing applied
// before fine-tuning and evaluation.
inline Image preprocess(const Image& img, const AugmentConfig& cfg) {
  return histogram_normalize(resize(img, cfg.target_size, cfg.target_size), cfg.output_range);
}

// Fine-tuning augmentation on a preprocessed image: random flips, plus a random
// affine map when `with_affine` is set.
inline Image finetune_view(const Image& img, Rng& rng, const AugmentConfig& cfg, bool with_affine) {
  Image x = random_flip(img, rng, FlipAxis::horizontal, cfg.p_hflip);
  x = random_flip(x, rng, FlipAxis::vertical, cfg.p_vflip);
  if (with_affine) x = random_affine(x, rng, cfg);
  return x;
}

}  // namespace cxr::augment
