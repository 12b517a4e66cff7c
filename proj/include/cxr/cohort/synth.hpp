#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cxr/augment/image.hpp"
#include "cxr/cohort/records.hpp"
#include "cxr/common/csv.hpp"
#include "cxr/common/rng.hpp"

namespace cxr::cohort {

// Planted-signal cohort generator. Each patient has a latent severity s in
// [0,1]. The image at scan rank r carries opacities with amplitude
// a0 * (s + trend * r) + noise; event hazards depend on s alone, so with
// trend > 0 a single image confounds severity with how far along the stay it
// was taken.
struct SynthConfig {
  std::size_t n_patients = 500;
  std::size_t image_size = 64;
  int bits = 16;
  double a0 = 0.5;
  double trend = 0.0;
  double amplitude_noise = 0.05;
  double pixel_noise = 0.02;
  std::size_t blobs = 3;
  double blob_sigma = 2.0;        // pixels at 64x64, at zero severity
  double blob_sigma_slope = 3.0;  // growth per unit of effective severity
  double clutter = 0.0;           // mean count of sharp bright markers unrelated to severity
  std::size_t max_scans = 6;
  double mean_gap_hours = 30.0;
  double p_ed_followup = 0.25;  // later scans taken in the ED rather than as inpatient
  double stay_hours = 240.0;
  // Expected adverse events over the stay at s = 0 and s = 1 (log-linear in between).
  double adverse_intensity_lo = 0.01;
  double adverse_intensity_hi = 10.0;
  double icu_share = 0.45, intubation_share = 0.30, mortality_share = 0.25;
  double oxygen_factor = 1.5;  // o2_gt6l hazard relative to the adverse total
  std::size_t pretrain_images = 0;

  void validate() const {
    if (n_patients == 0) throw ContractError("synth: n_patients must be at least 1");
    if (image_size < 8) throw ContractError("synth: image_size must be at least 8");
    if (bits != 8 && bits != 16) throw ContractError("synth: bits must be 8 or 16");
    if (max_scans == 0) throw ContractError("synth: max_scans must be at least 1");
    if (!(adverse_intensity_lo > 0 && adverse_intensity_hi >= adverse_intensity_lo))
      throw ContractError("synth: adverse intensities must be positive and ordered");
  }
};

struct SynthScan {
  ScanRecord record;
  std::size_t rank = 0;
  double amplitude = 0.0;
  augment::Image image;
};

struct SynthPatient {
  std::string id;
  double severity = 0.0;
  std::vector<SynthScan> scans;
};

struct SynthPretrainImage {
  std::string path;
  double effective_severity = 0.0;
  std::vector<float> findings;
  augment::Image image;
};

struct SynthCohort {
  Cohort cohort;
  std::vector<SynthPatient> patients;
  std::vector<SynthPretrainImage> pretrain;
};

inline const std::vector<std::string>& synth_findings() {
  static const std::vector<std::string> f{"opacity", "extensive", "bilateral"};
  return f;
}

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Chest-like background: bright body, two darker lung fields with rib
// texture, a random low-frequency gradient; then Gaussian opacities inside
// the lungs. Returns the image and whether both lungs got opacities.
inline augment::Image render(const SynthConfig& cfg, double effective_severity, double amplitude, Rng& rng,
                             bool* bilateral = nullptr) {
  const std::size_t size = cfg.image_size;
  const double n = double(size);
  augment::Image im(size, size);
  const double gy = uniform(rng, -0.1, 0.1), gx = uniform(rng, -0.1, 0.1);
  const double cy = n * uniform(rng, 0.47, 0.53);
  const double ry = n * uniform(rng, 0.27, 0.33), rx = n * uniform(rng, 0.11, 0.15);
  const double cxl = n * uniform(rng, 0.27, 0.33), cxr = n * uniform(rng, 0.67, 0.73);
  const double rib_f = uniform(rng, 0.5, 0.8), rib_phase = uniform(rng, 0.0, 6.283);
  auto lung = [&](double y, double x) {
    const double dl = std::hypot((y - cy) / ry, (x - cxl) / rx), dr = std::hypot((y - cy) / ry, (x - cxr) / rx);
    return sigmoid((1.0 - std::min(dl, dr)) * 8.0);
  };
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double fy = double(y), fx = double(x);
      const double body = 0.55 + gy * (fy / n - 0.5) + gx * (fx / n - 0.5);
      const double l = lung(fy, fx);
      const double ribs = 0.04 * std::sin(rib_f * fy + rib_phase);
      im.at(y, x) = float(body * (1.0 - l) + (0.22 + ribs) * l);
    }
  const double sigma =
      n / 64.0 * (cfg.blob_sigma + cfg.blob_sigma_slope * std::clamp(effective_severity, 0.0, 1.5));
  bool left = false, right = false;
  for (std::size_t b = 0; b < cfg.blobs; ++b) {
    const bool on_left = bernoulli(rng, 0.5);
    (on_left ? left : right) = true;
    const double by = cy + uniform(rng, -0.6, 0.6) * ry;
    const double bx = (on_left ? cxl : cxr) + uniform(rng, -0.5, 0.5) * rx;
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double d2 = (double(y) - by) * (double(y) - by) + (double(x) - bx) * (double(x) - bx);
        im.at(y, x) += float(amplitude * std::exp(-d2 / (2.0 * sigma * sigma)) * lung(double(y), double(x)));
      }
  }
  const std::size_t n_clutter = cfg.clutter > 0 ? std::poisson_distribution<std::size_t>(cfg.clutter)(rng) : 0;
  for (std::size_t k = 0; k < n_clutter; ++k) {
    const double my = uniform(rng, 0.1, 0.9) * n, mx = uniform(rng, 0.1, 0.9) * n;
    const double r = n / 64.0 * uniform(rng, 1.0, 2.5), amp = uniform(rng, 0.2, 0.6);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        if (std::hypot(double(y) - my, double(x) - mx) <= r) im.at(y, x) += float(amp);
  }
  std::normal_distribution<double> noise(0.0, cfg.pixel_noise);
  for (auto& p : im.pixels) p = float(std::clamp(double(p) + noise(rng), 0.0, 1.0));
  if (bilateral) *bilateral = left && right;
  return im;
}

inline double exponential(Rng& rng, double rate) {
  return rate > 0 ? std::exponential_distribution<double>(rate)(rng) : std::numeric_limits<double>::infinity();
}

inline std::string patient_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%05zu", i);
  return buf;
}

}  // namespace detail

inline double synth_adverse_rate(const SynthConfig& cfg, double s) {
  return cfg.adverse_intensity_lo * std::pow(cfg.adverse_intensity_hi / cfg.adverse_intensity_lo, s) / cfg.stay_hours;
}

// In-memory cohort; fully determined by (cfg, seed).
inline SynthCohort generate_cohort(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SynthCohort out;
  for (std::size_t i = 0; i < cfg.n_patients; ++i) {
    Rng rng = derive_rng(seed, {0xC0u, i});
    SynthPatient p{detail::patient_id(i), uniform(rng, 0.0, 1.0), {}};
    const double t0 = std::floor(uniform(rng, 0.0, 2000.0) * 4.0) / 4.0;
    const double total = synth_adverse_rate(cfg, p.severity);
    const std::vector<std::pair<std::string, double>> hazards{{"icu", total * cfg.icu_share},
                                                              {"intubation", total * cfg.intubation_share},
                                                              {"mortality", total * cfg.mortality_share},
                                                              {"o2_gt6l", total * cfg.oxygen_factor}};
    double death = std::numeric_limits<double>::infinity();
    std::vector<EventRecord> events;
    for (const auto& [type, rate] : hazards) {
      const double dt = detail::exponential(rng, rate);
      if (dt >= cfg.stay_hours) continue;
      const double t = t0 + std::max(0.25, std::round(dt * 4.0) / 4.0);
      events.push_back({p.id, type, t});
      if (type == "mortality") death = t;
    }
    std::erase_if(events, [&](const EventRecord& e) { return e.time > death; });
    const std::size_t n_scans = 1 + std::uniform_int_distribution<std::size_t>(0, cfg.max_scans - 1)(rng);
    double t = t0;
    for (std::size_t r = 0; r < n_scans; ++r) {
      if (r > 0) t += std::round((2.0 + detail::exponential(rng, 1.0 / cfg.mean_gap_hours)) * 4.0) / 4.0;
      if (t >= t0 + cfg.stay_hours || t >= death) break;
      SynthScan s;
      s.rank = r;
      s.record.patient_id = p.id;
      s.record.scan_id = p.id + "_S" + std::to_string(r + 1);
      s.record.time = t;
      s.record.location = r == 0 || bernoulli(rng, cfg.p_ed_followup) ? Location::ed : Location::inpatient;
      s.record.image_path = "images/" + s.record.scan_id + ".pgm";
      const double eff = p.severity + cfg.trend * double(r);
      s.amplitude = cfg.a0 * eff + std::normal_distribution<double>(0.0, cfg.amplitude_noise)(rng);
      s.image = detail::render(cfg, eff, std::max(0.0, s.amplitude), rng);
      out.cohort.scans.push_back(s.record);
      p.scans.push_back(std::move(s));
    }
    out.cohort.events.insert(out.cohort.events.end(), events.begin(), events.end());
    out.patients.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < cfg.pretrain_images; ++i) {
    Rng rng = derive_rng(seed, {0xD1u, i});
    SynthPretrainImage im;
    const double s = uniform(rng, 0.0, 1.0);
    const std::size_t rank = std::uniform_int_distribution<std::size_t>(0, cfg.max_scans - 1)(rng);
    im.effective_severity = s + cfg.trend * double(rank);
    const double amp = cfg.a0 * im.effective_severity + std::normal_distribution<double>(0.0, cfg.amplitude_noise)(rng);
    bool bilateral = false;
    im.image = detail::render(cfg, im.effective_severity, std::max(0.0, amp), rng, &bilateral);
    im.findings = {float(im.effective_severity > 0.35), float(im.effective_severity > 0.7), float(bilateral)};
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%05zu.pgm", i);
    im.path = buf;
    out.pretrain.push_back(std::move(im));
  }
  return out;
}

// Layout under `dir`: events.csv, scans.csv, images/*.pgm and, when
// pretraining images were requested, pretrain/*.pgm with pretrain/findings.csv.
inline void write_cohort(const SynthCohort& c, const std::string& dir, int bits = 16) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  write_events((fs::path(dir) / "events.csv").string(), c.cohort.events);
  write_scans((fs::path(dir) / "scans.csv").string(), c.cohort.scans);
  for (const auto& p : c.patients)
    for (const auto& s : p.scans) augment::write_pgm((fs::path(dir) / s.record.image_path).string(), s.image, bits);
  if (c.pretrain.empty()) return;
  const fs::path pre = fs::path(dir) / "pretrain";
  fs::create_directories(pre, ec);
  if (ec) throw IoError("cannot create " + pre.string() + ": " + ec.message());
  std::ofstream os(pre / "findings.csv", std::ios::binary);
  if (!os) throw IoError("cannot write " + (pre / "findings.csv").string());
  std::vector<std::string> header{"image"};
  header.insert(header.end(), synth_findings().begin(), synth_findings().end());
  csv::write_row(os, header);
  for (const auto& im : c.pretrain) {
    augment::write_pgm((pre / im.path).string(), im.image, bits);
    std::vector<std::string> row{im.path};
    for (float f : im.findings) row.push_back(f != 0.f ? "1" : "0");
    csv::write_row(os, row);
  }
}

inline SynthCohort synth_cohort(const SynthConfig& cfg, std::uint64_t seed, const std::string& dir) {
  auto c = generate_cohort(cfg, seed);
  write_cohort(c, dir, cfg.bits);
  return c;
}

}  // namespace cxr::cohort
