// Acceptance checks, one per criterion: `acceptance --criterion N`.
// Prints a single "criterion N: PASS|FAIL ..." line and exits 0 on PASS.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "cohort_fixture.hpp"
#include "cxr/cli/app.hpp"
#include "experiments.hpp"
#include "gradcases.hpp"

using namespace cxr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double a) {
  char b[96];
  std::snprintf(b, sizeof b, f, a);
  return b;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Finite-difference gradient suite, 64-bit.
Outcome gradients() {
  using namespace cxr::testing;
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<GradCase> cases{{"matmul", case_matmul},
                                    {"conv2d", case_conv2d},
                                    {"batch_norm", case_batch_norm},
                                    {"relu", case_relu},
                                    {"sigmoid", case_sigmoid},
                                    {"bce_with_logits", case_bce},
                                    {"info_nce_loss", case_info_nce},
                                    {"cpe_projection", case_cpe_projection},
                                    {"transformer_block", case_transformer_block}};
  Outcome o;
  double worst = 0.0;
  for (const auto& c : cases) {
    Rng rng = derive_rng(2024, {std::hash<std::string>{}(c.name)});
    double m = 0.0;
    for (int trial = 0; trial < 50; ++trial) m = std::max(m, c.run(rng).max_rel_error);
    o.require(m < 1e-4, c.name + fmt(" max rel err %.3g", m));
    worst = std::max(worst, m);
  }
  const double secs = seconds_since(t0);
  o.require(secs < 120.0, fmt("runtime %.1fs", secs));
  o.note(std::to_string(cases.size()) + " primitives x 50 cases, worst rel err " + fmt("%.2g", worst) +
         fmt(", %.1fs", secs));
  return o;
}

// 2. InfoNCE identities.
Outcome info_nce() {
  using TD = ad::Tensor<double>;
  Outcome o;
  Rng rng(7);
  const std::size_t c = 8;
  auto unit = [&](bool orthogonal_to_e0) {
    std::vector<double> v(c);
    for (auto& x : v) x = uniform(rng, -1, 1);
    if (orthogonal_to_e0) v[0] = 0.0;
    double n = 0;
    for (double x : v) n += x * x;
    for (auto& x : v) x /= std::sqrt(n);
    return v;
  };
  std::vector<double> e0(c, 0.0);
  e0[0] = 1.0;
  for (std::size_t k : {1u, 3u, 15u, 1023u}) {
    // every logit is 0: the query is orthogonal to the positive and all negatives
    std::vector<double> qd = e0, kd = unit(true), qu;
    for (std::size_t j = 0; j < k; ++j) {
      auto v = unit(true);
      qu.insert(qu.end(), v.begin(), v.end());
    }
    const double loss = pretrain::info_nce_loss(TD({1, c}, qd), TD({1, c}, kd), TD({k, c}, qu), 0.2).loss.item();
    o.require(std::abs(loss - std::log(double(k + 1))) < 1e-6, "K=" + std::to_string(k) + fmt(" loss %.10f", loss));
    // dominant positive: positive logit 1/tau, negatives -1/tau
    std::vector<double> anti;
    for (std::size_t j = 0; j < k; ++j) anti.insert(anti.end(), {-1, 0, 0, 0, 0, 0, 0, 0});
    double prev = INFINITY;
    for (double tau : {0.5, 0.1, 0.02}) {
      const double l = pretrain::info_nce_loss(TD({1, c}, e0), TD({1, c}, e0), TD({k, c}, anti), tau).loss.item();
      o.require(l >= 0.0 && l < prev, "loss not decreasing toward 0 at K=" + std::to_string(k));
      prev = l;
    }
    o.require(prev < 1e-6, "K=" + std::to_string(k) + fmt(" dominant-positive loss %.3g", prev));
  }
  // gradients during a real MoCo step stop at the query network
  pretrain::PretrainConfig cfg;
  cfg.encoder.widths = {4, 8};
  cfg.feature_dim = 64;
  cfg.queue_size = 32;
  cfg.batch_size = 16;
  cfg.augment.target_size = 16;
  Rng init(3);
  auto st = pretrain::make_moco_state<float>(cfg, init);
  std::vector<augment::Image> corpus;
  for (int i = 0; i < 32; ++i) {
    augment::Image im(16, 16);
    for (auto& p : im.pixels) p = float(uniform(rng, 0, 1));
    corpus.push_back(im);
  }
  const auto q_before = nn::state_bytes<float>(st.query, false);
  pretrain::pretrain_epoch(st, corpus, cfg, 0, 5);
  bool key_grad = false;
  st.key.visit("", [&](const std::string&, ad::Tensor<float>& t, nn::StateKind) {
    key_grad = key_grad || t.has_grad() || t.requires_grad();
  });
  o.require(!key_grad, "momentum encoder received gradients");
  o.require(!st.queue.has_grad() && !st.queue.requires_grad(), "queue received gradients");
  o.require(nn::state_bytes<float>(st.query, false) != q_before, "query network did not train");
  o.note("K in {1,3,15,1023}: ln(K+1) within 1e-6; dominant positive -> 0; no grad to key net or queue");
  return o;
}

// 3. MoCo mechanics.
Outcome moco_mechanics() {
  Outcome o;
  pretrain::PretrainConfig cfg;
  cfg.encoder.widths = {4, 8};
  cfg.feature_dim = 64;
  cfg.queue_size = 64;
  cfg.batch_size = 16;
  cfg.augment.target_size = 16;
  Rng rng(11);
  std::vector<augment::Image> corpus;
  for (int i = 0; i < 48; ++i) {
    augment::Image im(20, 20);
    for (auto& p : im.pixels) p = float(uniform(rng, 0, 1));
    corpus.push_back(im);
  }
  {
    auto c = cfg;
    c.lr = 0.0;
    c.momentum = 1.0;
    Rng init(1);
    auto st = pretrain::make_moco_state<float>(c, init);
    const auto q0 = nn::state_bytes<float>(st.query, false), k0 = nn::state_bytes<float>(st.key, false);
    pretrain::pretrain_epoch(st, corpus, c, 0, 2);
    o.require(nn::state_bytes<float>(st.query, false) == q0, "lr=0 changed query parameters");
    o.require(nn::state_bytes<float>(st.key, false) == k0, "m=1 changed momentum parameters");
  }
  {
    // FIFO turnover: every row is overwritten exactly at enqueue K/B, in order
    using TD = ad::Tensor<double>;
    const std::size_t k = 64, b = 16, c = 4;
    TD queue = TD::zeros({k, c});
    std::size_t ptr = 0;
    for (std::size_t step = 0; step < k / b; ++step) {
      pretrain::enqueue(queue, ptr, TD({b, c}, double(step + 1)));
      std::size_t stale = 0;
      for (std::size_t r = 0; r < k; ++r) stale += queue[r * c] == 0.0;
      o.require(stale == k - (step + 1) * b, "unexpected turnover after enqueue " + std::to_string(step + 1));
    }
    for (std::size_t r = 0; r < k; ++r) o.require(queue[r * c] == double(r / b + 1), "row " + std::to_string(r) + " out of order");
    o.require(ptr == 0, "pointer did not wrap after K/B enqueues");
  }
  {
    // unit-norm queue rows after every training step
    auto c = cfg;
    Rng init(2);
    auto st = pretrain::make_moco_state<float>(c, init);
    std::vector<augment::Image> one_batch(corpus.begin(), corpus.begin() + long(c.batch_size));
    double worst = 0.0;
    auto check = [&] {
      for (std::size_t r = 0; r < st.queue.dim(0); ++r) {
        double n2 = 0.0;
        for (std::size_t j = 0; j < st.queue.dim(1); ++j) n2 += std::pow(double(st.queue[r * st.queue.dim(1) + j]), 2);
        worst = std::max(worst, std::abs(std::sqrt(n2) - 1.0));
      }
    };
    check();
    for (std::size_t step = 0; step < 12; ++step) {
      pretrain::pretrain_epoch(st, one_batch, c, step, 3);
      check();
    }
    o.require(worst < 1e-5, fmt("queue row norm off by %.3g", worst));
  }
  o.note("m=1, lr=0 epoch leaves parameters byte-identical; queue turns over in K/B enqueues; rows unit-norm");
  return o;
}

// 4. CPE identities.
Outcome cpe() {
  Outcome o;
  Rng rng(4);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double t = uniform(rng, 0.0, 360.0);
    const std::size_t d = 2 * std::uniform_int_distribution<std::size_t>(1, 128)(rng);
    if (t >= 360.0) continue;
    const auto e = models::cpe_embed(t, d);
    for (std::size_t j = 0; j < d / 2; ++j)
      worst = std::max(worst, std::abs(e[2 * j] * e[2 * j] + e[2 * j + 1] * e[2 * j + 1] - 1.0));
  }
  o.require(worst < 1e-6, fmt("unit-circle error %.3g", worst));
  for (std::size_t d : {2u, 8u, 64u, 256u}) {
    const auto e = models::cpe_embed(0.0, d);
    for (std::size_t j = 0; j < d; ++j) o.require(e[j] == (j % 2 ? 1.0 : 0.0), "t=0 pattern broken at d=" + std::to_string(d));
  }
  o.note(fmt("10^4 (t,d) pairs, max unit-circle error %.2g; t=0 gives [0,1,...] exactly", worst));
  return o;
}

// 5. DropImage.
Outcome drop_image() {
  Outcome o;
  double worst = 0.0;
  for (std::size_t n = 1; n <= 8; ++n)
    for (double p : {0.0, 0.1, 0.2, 0.5}) {
      Rng rng = derive_rng(5, {n, std::uint64_t(p * 100)});
      std::vector<std::size_t> dropped(n, 0);
      bool final_kept = true;
      const std::size_t draws = 10000;
      for (std::size_t t = 0; t < draws; ++t) {
        const auto keep = models::drop_image_mask(n, p, rng);
        final_kept = final_kept && keep.back();
        for (std::size_t i = 0; i < n; ++i) dropped[i] += !keep[i];
      }
      o.require(final_kept, "final image dropped at n=" + std::to_string(n));
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const double gap = std::abs(double(dropped[i]) / draws - p);
        worst = std::max(worst, gap);
        o.require(gap <= 0.02, "n=" + std::to_string(n) + fmt(" p=%.1f", p) + " position " + std::to_string(i) +
                                   fmt(" rate off by %.3f", gap));
      }
    }
  o.note(fmt("n<=8, p in {0,.1,.2,.5}, 10^4 draws; final always kept; worst rate gap %.4f", worst));
  return o;
}

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        den += 1.0;
      }
  return num / den;
}

// 6. AUC against the O(n^2) oracle.
Outcome auc_oracle() {
  Outcome o;
  Rng rng(6);
  double worst = 0.0;
  bool invariant = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = std::uniform_int_distribution<std::size_t>(2, 50)(rng);
    const int levels = std::uniform_int_distribution<int>(1, 10)(rng);
    std::vector<double> s(n), ex(n), aff(n), cube(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = double(std::uniform_int_distribution<int>(-levels, levels)(rng)) / levels;
      y[i] = bernoulli(rng, 0.5);
      ex[i] = std::exp(s[i]);
      aff[i] = 2.5 * s[i] + 4.0;
      cube[i] = s[i] * s[i] * s[i];
    }
    y[0] = 1;
    y[n - 1] = 0;
    const double a = evalstats::roc_auc(s, y);
    worst = std::max(worst, std::abs(a - pairwise_auc(s, y)));
    invariant = invariant && evalstats::roc_auc(ex, y) == a && evalstats::roc_auc(aff, y) == a &&
                evalstats::roc_auc(cube, y) == a;
  }
  o.require(worst <= 1e-12, fmt("oracle gap %.3g", worst));
  o.require(invariant, "AUC changed under an increasing transform");
  o.note(fmt("1000 tied instances, max gap %.2g; exp/affine/cube invariance exact", worst));
  return o;
}

// 7. Bootstrap calibration and agreement with DeLong.
Outcome bootstrap_calibration() {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  auto make = [](std::vector<double> s, const std::vector<int>& y) {
    evalstats::ScoredSet out;
    out.scores = std::move(s);
    out.labels = y;
    for (std::size_t i = 0; i < out.labels.size(); ++i) out.ids.push_back("e" + std::to_string(i));
    return out;
  };
  const double mu = std::sqrt(2.0) * 0.6744897501960817;  // Phi(mu / sqrt 2) = 0.75
  int covered = 0;
  for (int t = 0; t < 200; ++t) {
    Rng rng = derive_rng(77, {std::uint64_t(t)});
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < 250; ++i) s.push_back(mu + z(rng)), y.push_back(1);
    for (int i = 0; i < 250; ++i) s.push_back(z(rng)), y.push_back(0);
    const auto ci = evalstats::bootstrap_ci(make(s, y), {.n_iter = 1000, .seed = std::uint64_t(t)});
    covered += ci.lo <= 0.75 && 0.75 <= ci.hi;
  }
  o.require(covered >= 180, std::to_string(covered) + "/200 intervals cover 0.75");
  // paired scenarios: shared latent plus model-specific noise, random AUC gap
  int agree = 0, sig_boot = 0;
  for (int t = 0; t < 100; ++t) {
    Rng rng = derive_rng(78, {std::uint64_t(t)});
    std::normal_distribution<double> z(0.0, 1.0);
    const double mu_a = uniform(rng, 0.5, 1.5), mu_b = mu_a - uniform(rng, -0.2, 0.6);
    const double rho = uniform(rng, 0.2, 0.9);
    std::vector<double> a, b;
    std::vector<int> y;
    for (int i = 0; i < 300; ++i) {
      const int yi = i % 2;
      const double common = z(rng);
      a.push_back(mu_a * yi + std::sqrt(rho) * common + std::sqrt(1 - rho) * z(rng));
      b.push_back(mu_b * yi + std::sqrt(rho) * common + std::sqrt(1 - rho) * z(rng));
      y.push_back(yi);
    }
    const auto sa = make(a, y), sb = make(b, y);
    const auto boot = evalstats::paired_bootstrap_diff(sa, sb, {.n_iter = 1000, .seed = std::uint64_t(t)});
    const auto dl = evalstats::delong_test(sa, sb);
    agree += boot.significant == (dl.p_one_sided < 0.05);
    sig_boot += boot.significant;
  }
  o.require(agree >= 90, std::to_string(agree) + "/100 scenarios agree");
  const double secs = seconds_since(t0);
  o.require(secs < 300.0, fmt("runtime %.1fs", secs));
  o.note(std::to_string(covered) + "/200 CIs cover; " + std::to_string(agree) + "/100 agree (" +
         std::to_string(sig_boot) + " significant)" + fmt(", %.1fs", secs));
  return o;
}

// 8. Label machinery.
Outcome labels() {
  Outcome o;
  std::size_t checked = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    cohort::SynthConfig cfg;
    cfg.n_patients = 500;
    cfg.image_size = 8;
    const auto c = cohort::generate_cohort(cfg, seed);
    for (auto task : {models::Task::sip, models::Task::orp, models::Task::mip}) {
      const auto layout = models::layout_for(task);
      const auto elig = cohort::apply_task_filter(c.cohort.scans, c.cohort.events, task);
      for (const auto& ex : cohort::label_scans(elig, c.cohort, layout)) {
        for (std::size_t e = 0; e < layout.events.size(); ++e)
          for (std::size_t w = 1; w < layout.windows.size(); ++w)
            o.require(ex.labels[layout.index(e, w - 1)] <= ex.labels[layout.index(e, w)],
                      "non-monotone labels for " + ex.scan_id);
        ++checked;
      }
    }
  }
  const auto f = cxr::testing::ten_patient_fixture();
  auto ids = [&](models::Task t) {
    std::set<std::string> s;
    for (const auto& r : cohort::apply_task_filter(f.cohort.scans, f.cohort.events, t)) s.insert(r.scan_id);
    return s;
  };
  o.require(ids(models::Task::sip) == f.sip, "SIP membership differs from fixture");
  o.require(ids(models::Task::orp) == f.orp, "ORP membership differs from fixture");
  o.require(ids(models::Task::mip) == f.mip, "MIP membership differs from fixture");
  o.note(std::to_string(checked) + " labeled examples monotone; 10-patient fixture memberships exact");
  return o;
}

// 9. Transfer-learning direction.
Outcome transfer() {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  const auto runs = acceptance::transfer_experiment(std::cout);
  double moco = 0, scratch = 0, sup = 0;
  for (const auto& r : runs) moco += r.moco, scratch += r.scratch, sup += r.supervised;
  moco /= double(runs.size());
  scratch /= double(runs.size());
  sup /= double(runs.size());
  const double secs = seconds_since(t0);
  o.require(moco >= scratch + 0.03, fmt("MoCo %.3f", moco) + fmt(" < Scratch %.3f + 0.03", scratch));
  o.require(moco >= 0.85, fmt("MoCo %.3f < 0.85", moco));
  o.require(secs < 1800.0, fmt("runtime %.0fs", secs));
  o.note(fmt("any_adverse@any test AUC over 3 seeds: Scratch %.3f", scratch) + fmt(", Supervised %.3f", sup) +
         fmt(", MoCo %.3f", moco) + fmt(", %.0fs", secs));
  return o;
}

// 10. Sequence advantage.
Outcome sequence() {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  const auto trend = acceptance::sequence_experiment(acceptance::kTrend, std::cout);
  const auto flat = acceptance::sequence_experiment(0.0, std::cout);
  auto mean_gap = [](const std::vector<acceptance::SequenceRun>& v) {
    double g = 0;
    for (const auto& r : v) g += r.mip - r.single;
    return g / double(v.size());
  };
  const double gap = mean_gap(trend), control = mean_gap(flat);
  o.require(gap >= 0.02, fmt("MIP gain %.3f < 0.02", gap));
  o.note(fmt("any_adverse@96h MIP minus single-image over 3 seeds: trend %.3f", gap) +
         fmt(", control (trend 0) %.3f", control) + fmt(", %.0fs", seconds_since(t0)));
  return o;
}

// 11. CLI reruns from manifests are byte-identical.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  auto add = [&](const fs::path& p, const std::string& key) {
    std::ifstream is(p, std::ios::binary);
    out[key] = {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  };
  if (fs::is_regular_file(root)) {
    add(root, root.filename().string());
    return out;
  }
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") add(e.path(), fs::relative(e.path(), root).string());
  return out;
}

Outcome reproducibility() {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / "cxr_acceptance_repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto p = [&](const std::string& s) { return (dir / s).string(); };
  std::ostringstream sink;
  auto run = [&](std::vector<std::string> args) {
    std::ostringstream err;
    const int code = cli::run_cli(args, sink, err);
    o.require(code == 0, args[0] + " exited " + std::to_string(code) + ": " + err.str());
  };
  run({"synth", "--patients", "40", "--seed", "3", "--image-size", "32", "--pretrain-images", "64", "--out",
       p("cohort")});
  run({"pretrain", "--corpus", p("cohort/pretrain"), "--epochs", "2", "--widths", "4,8", "--image-size", "32",
       "--queue-size", "32", "--out", p("moco.ckpt")});
  run({"pretrain", "--corpus", p("cohort/pretrain"), "--mode", "supervised", "--epochs", "2", "--widths", "4,8",
       "--image-size", "32", "--out", p("sup.ckpt")});
  run({"finetune", "--data", p("cohort"), "--pretrained", p("moco.ckpt"), "--image-size", "32", "--folds", "2",
       "--epochs", "2", "--lr", "1e-3,1e-2", "--out", p("ft")});
  run({"finetune", "--data", p("cohort"), "--task", "mip", "--pretrained", p("moco.ckpt"), "--image-size", "32",
       "--folds", "2", "--epochs", "1", "--d-proj", "8", "--cpe-dim", "8", "--heads", "2", "--layers", "1", "--out",
       p("mip")});
  run({"finetune", "--data", p("cohort"), "--pretrained", p("sup.ckpt"), "--image-size", "32", "--folds", "2",
       "--epochs", "2", "--out", p("ftsup")});
  run({"evaluate", "--scores", "moco=" + p("ft/scores.csv"), "--scores", "sup=" + p("ftsup/scores.csv"), "--labels",
       "any_adverse@any", "--n-boot", "200", "--out", p("report")});
  run({"plot-events", "--data", p("cohort"), "--out", p("events.csv")});
  if (!o.pass) return o;

  const std::vector<std::pair<std::string, std::string>> artifacts{
      {"cohort/manifest.json", "cohort"},       {"moco.ckpt.manifest.json", "moco.ckpt"},
      {"sup.ckpt.manifest.json", "sup.ckpt"},   {"ft/manifest.json", "ft"},
      {"mip/manifest.json", "mip"},             {"ftsup/manifest.json", "ftsup"},
      {"report/manifest.json", "report"},
      {"events.csv.manifest.json", "events.csv"}};
  std::size_t files = 0;
  for (const auto& [manifest, out] : artifacts) {
    const std::string again = p("rerun_" + out);
    run({"rerun", p(manifest), "--out", again});
    const auto a = tree(p(out)), b = tree(again);
    std::map<std::string, std::string> a2, b2;
    // file outputs carry their sidecars (loss curve) under the output's name
    for (const auto& [k, v] : a) a2[k == out ? "main" : k] = v;
    for (const auto& [k, v] : b) b2[k == fs::path(again).filename().string() ? "main" : k] = v;
    if (fs::is_regular_file(p(out)) && fs::exists(p(out) + ".loss.csv")) {
      a2["curve"] = tree(p(out) + ".loss.csv").begin()->second;
      b2["curve"] = tree(again + ".loss.csv").begin()->second;
    }
    o.require(!a2.empty() && a2 == b2, out + " differs on rerun");
    files += a2.size();
  }
  fs::remove_all(dir);
  o.note("synth, pretrain (moco, supervised), finetune (sip, mip), evaluate, plot-events: " + std::to_string(files) +
         " files byte-identical on rerun");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int criterion = 0;
  app.add_option("--criterion", criterion, "Criterion number, 1-11")->required()->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);
  const std::map<int, std::function<Outcome()>> checks{
      {1, gradients},  {2, info_nce}, {3, moco_mechanics}, {4, cpe},       {5, drop_image},       {6, auc_oracle},
      {7, bootstrap_calibration}, {8, labels}, {9, transfer}, {10, sequence}, {11, reproducibility}};
  Outcome o;
  try {
    o = checks.at(criterion)();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  std::printf("criterion %d: %s (%s)\n", criterion, o.pass ? "PASS" : "FAIL", o.detail.c_str());
  return o.pass ? 0 : 1;
}
