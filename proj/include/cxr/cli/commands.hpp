#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cxr/cli/manifest.hpp"
#include "cxr/cohort/dataset.hpp"
#include "cxr/cohort/splits.hpp"
#include "cxr/cohort/synth.hpp"
#include "cxr/evalstats/report.hpp"
#include "cxr/models/mip.hpp"
#include "cxr/models/sip.hpp"
#include "cxr/pretrain/supervised.hpp"

namespace cxr::cli {

namespace fs = std::filesystem;

struct SynthOptions {
  std::size_t patients = 500;
  std::uint64_t seed = 0;
  std::string out = "cohort";
  std::size_t image_size = cohort::SynthConfig{}.image_size;
  int bits = cohort::SynthConfig{}.bits;
  double trend = cohort::SynthConfig{}.trend;
  std::size_t pretrain_images = cohort::SynthConfig{}.pretrain_images;
  double a0 = cohort::SynthConfig{}.a0;
  double clutter = cohort::SynthConfig{}.clutter;
  double pixel_noise = cohort::SynthConfig{}.pixel_noise;
  double test_fraction = 0.12;
  std::uint64_t split_seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthOptions, patients, seed, out, image_size, bits, trend,
                                                pretrain_images, a0, clutter, pixel_noise, test_fraction, split_seed)

struct PretrainOptions {
  std::string corpus;
  std::string mode = "moco";  // moco | supervised
  std::size_t epochs = 10;
  double lr = -1.0;  // negative: the mode's default
  std::size_t feature_dim = 128;
  std::size_t queue_size = 1024;
  double tau = 0.2;
  double momentum = 0.999;
  std::size_t batch_size = 32;
  std::size_t image_size = 64;
  std::string widths = "16,32,64,128";
  std::uint64_t seed = 0;
  std::string out = "pretrain.ckpt";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PretrainOptions, corpus, mode, epochs, lr, feature_dim, queue_size,
                                                tau, momentum, batch_size, image_size, widths, seed, out)

struct FinetuneOptions {
  std::string data;
  std::string task = "sip";
  std::string mode = "FT";
  std::string pretrained;
  std::size_t folds = 5;
  std::string lr = "1e-3";  // comma-separated grid
  std::size_t epochs = 0;   // 0: the mode's default (MIP: 50)
  std::size_t batch_size = 32;
  std::string selection;  // empty: the task's default label
  std::size_t image_size = 64;
  std::string widths = "16,32,64,128";  // encoder for runs without --pretrained
  double test_fraction = 0.12;
  std::uint64_t split_seed = 0;
  std::uint64_t seed = 0;
  // MIP only.
  std::string p_drop = "0";   // grid
  std::string d_proj = "64";  // grid
  std::size_t cpe_dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  double dropout = 0.5;
  std::string pooling = "sum";
  std::string out = "finetune";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FinetuneOptions, data, task, mode, pretrained, folds, lr, epochs,
                                                batch_size, selection, image_size, widths, test_fraction, split_seed,
                                                seed, p_drop, d_proj, cpe_dim, layers, heads, dropout, pooling, out)

struct EvaluateOptions {
  std::vector<std::string> scores;  // NAME=PATH or PATH
  std::string labels;               // comma-separated subset; empty: all
  std::size_t n_boot = 1000;
  double level = 0.95;
  double alpha = 0.05;
  bool patient_bootstrap = false;
  std::uint64_t seed = 0;
  std::string out = "report";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvaluateOptions, scores, labels, n_boot, level, alpha, patient_bootstrap, seed,
                                                out)

struct PlotEventsOptions {
  std::string events;
  std::string scans;
  std::string out = "event_counts.csv";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PlotEventsOptions, events, scans, out)

namespace detail {

inline std::vector<double> parse_grid(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& tok : models::split_strings(s)) out.push_back(csv::parse_double(tok, what));
  if (out.empty()) throw ContractError(std::string(what) + ": empty grid");
  return out;
}

inline nn::EncoderConfig encoder_config(const std::string& widths) {
  nn::EncoderConfig e;
  e.widths = pretrain::split_sizes(widths);
  for (auto w : e.widths)
    if (w == 0) throw ContractError("encoder widths must be positive");
  return e;
}

inline void write_text(const std::string& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  if (!os) throw IoError("failed writing '" + path + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth

inline cohort::SynthConfig synth_config(const SynthOptions& o) {
  cohort::SynthConfig c;
  c.n_patients = o.patients;
  c.image_size = o.image_size;
  c.bits = o.bits;
  c.trend = o.trend;
  c.pretrain_images = o.pretrain_images;
  c.a0 = o.a0;
  c.clutter = o.clutter;
  c.pixel_noise = o.pixel_noise;
  return c;
}

inline int cmd_synth(const SynthOptions& o, std::ostream& log = std::cout) {
  if (o.patients == 0) throw ContractError("synth: --patients must be positive");
  if (o.bits != 8 && o.bits != 16) throw ContractError("synth: --bits must be 8 or 16");
  ensure_dir(o.out);
  const auto c = cohort::synth_cohort(synth_config(o), o.seed, o.out);
  Rng rng = derive_rng(o.split_seed, {0x5B17u});
  const auto split = cohort::patient_split(c.cohort.patients(), rng, o.test_fraction);
  const auto table = cohort::format_summary(cohort::cohort_summary(c.cohort, split));
  detail::write_text((fs::path(o.out) / "summary.txt").string(), table);
  write_manifest(manifest_path(o.out, true), {"synth", json(o)});
  log << table;
  return 0;
}

// ---------------------------------------------------------------------------
// pretrain

inline int cmd_pretrain(PretrainOptions o, std::ostream& log = std::cout) {
  if (o.mode != "moco" && o.mode != "supervised")
    throw ContractError("pretrain: --mode must be moco or supervised, got '" + o.mode + "'");
  if (o.lr < 0.0) o.lr = o.mode == "moco" ? pretrain::PretrainConfig{}.lr : pretrain::SupervisedConfig{}.lr;
  ensure_parent(o.out);
  const std::string curve = o.out + ".loss.csv";
  ad::Checkpoint ck;
  std::vector<std::vector<std::string>> rows;
  if (o.mode == "moco") {
    const auto corpus = pretrain::load_images(o.corpus);
    pretrain::PretrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.lr = o.lr;
    cfg.feature_dim = o.feature_dim;
    cfg.queue_size = o.queue_size;
    cfg.tau = o.tau;
    cfg.momentum = o.momentum;
    cfg.batch_size = o.batch_size;
    cfg.encoder = detail::encoder_config(o.widths);
    cfg.augment.target_size = o.image_size;
    if (cfg.batch_size % cfg.bn_groups != 0) cfg.bn_groups = 1;
    rows.push_back({"epoch", "lr", "loss", "top1"});
    auto res = pretrain::pretrain_moco<float>(corpus, cfg, o.seed, [&](std::size_t e, const pretrain::EpochStats& s) {
      rows.push_back({std::to_string(e), csv::format_double(s.lr), csv::format_double(s.mean_loss),
                      csv::format_double(s.top1)});
      log << "epoch " << e << " loss " << s.mean_loss << " top1 " << s.top1 << "\n";
    });
    ck = pretrain::save_moco(res.state, cfg);
  } else {
    const auto corpus = pretrain::load_labeled_corpus(o.corpus);
    pretrain::SupervisedConfig cfg;
    cfg.epochs = o.epochs;
    cfg.lr = o.lr;
    cfg.batch_size = o.batch_size;
    cfg.encoder = detail::encoder_config(o.widths);
    cfg.augment.target_size = o.image_size;
    Rng rng = derive_rng(o.seed, {0x5C1u});
    pretrain::FindingsModel<float> model(cfg.encoder, corpus.finding_names.size(), rng);
    rows.push_back({"epoch", "lr", "loss"});
    pretrain::supervised_pretrain(model, corpus, cfg, o.seed, [&](std::size_t e, const pretrain::SupervisedEpoch& s) {
      rows.push_back({std::to_string(e), csv::format_double(s.lr), csv::format_double(s.mean_loss)});
      log << "epoch " << e << " loss " << s.mean_loss << "\n";
    });
    ck = pretrain::save_supervised(model, cfg, corpus.finding_names);
  }
  ck.write(o.out);
  auto os = open_out(curve);
  for (const auto& r : rows) csv::write_row(os, r);
  write_manifest(manifest_path(o.out, false), {"pretrain", json(o)});
  return 0;
}

// ---------------------------------------------------------------------------
// finetune

// The grid point a fold model was trained with.
struct GridPoint {
  double lr = 0.0;
  double p_drop = 0.0;
  std::size_t d_proj = 0;
};

struct FoldResult {
  double val_auc = std::numeric_limits<double>::quiet_NaN();
  std::size_t best_epoch = 0;
  ad::Checkpoint checkpoint;
  std::vector<std::vector<float>> test_scores;
};

// Mean of the selection scores, ignoring folds where it is undefined.
inline double mean_defined(const std::vector<FoldResult>& folds) {
  std::vector<double> v;
  for (const auto& f : folds) v.push_back(f.val_auc);
  return models::nan_mean(v);
}

namespace detail {

struct FinetuneData {
  models::Task task;
  models::LabelLayout layout;
  std::string selection;
  std::vector<std::string> test_patients;
  std::vector<std::vector<std::string>> folds;
  std::vector<models::Example> images;             // SIP / ORP
  std::vector<models::SequenceExample> sequences;  // MIP
};

inline FinetuneData load_finetune_data(const FinetuneOptions& o) {
  FinetuneData d;
  d.task = models::task_from_string(o.task);
  d.layout = models::layout_for(d.task);
  d.selection = o.selection.empty() ? models::default_selection_label(d.task) : o.selection;
  const std::size_t sel = d.layout.find(d.selection);
  const fs::path root(o.data);
  const auto c = cohort::ingest((root / "events.csv").string(), (root / "scans.csv").string());
  const auto eligible = cohort::apply_task_filter(c.scans, c.events, d.task);
  const auto labels = cohort::label_scans(eligible, c, d.layout);
  Rng rng = derive_rng(o.split_seed, {0x5B17u});
  const auto split = cohort::patient_split(c.patients(), rng, o.test_fraction);
  d.test_patients = split.test;
  // Folds are dealt over trainval patients with at least one eligible scan.
  const std::set<std::string> test(split.test.begin(), split.test.end());
  std::set<std::string> with_scans;
  for (const auto& s : eligible)
    if (!test.count(s.patient_id)) with_scans.insert(s.patient_id);
  const std::vector<std::string> trainval(with_scans.begin(), with_scans.end());
  d.folds = cohort::stratified_kfold(trainval, cohort::positive_patients(eligible, labels, sel), o.folds, rng);
  augment::AugmentConfig ac;
  ac.target_size = o.image_size;
  auto store = cohort::ImageStore::from_directory(o.data, ac);
  if (d.task == models::Task::mip)
    d.sequences = cohort::make_sequences(cohort::build_sequences(eligible, c, d.layout), store);
  else
    d.images = cohort::make_examples(eligible, labels, store);
  return d;
}

inline std::vector<std::string> fold_train_patients(const FinetuneData& d, std::size_t fold) {
  std::vector<std::string> out;
  for (std::size_t f = 0; f < d.folds.size(); ++f)
    if (f != fold) out.insert(out.end(), d.folds[f].begin(), d.folds[f].end());
  return out;
}

inline nn::ConvEncoder<float> initial_encoder(const FinetuneOptions& o, models::FinetuneMode mode, Rng& rng) {
  if (mode == models::FinetuneMode::scratch) {
    if (!o.pretrained.empty()) {
      auto enc = pretrain::load_pretrained_encoder<float>(ad::Checkpoint::read(o.pretrained));
      return nn::ConvEncoder<float>(enc.config(), rng);
    }
    return nn::ConvEncoder<float>(encoder_config(o.widths), rng);
  }
  if (o.pretrained.empty())
    throw ContractError("finetune: mode " + models::to_string(mode) + " needs --pretrained");
  return pretrain::load_pretrained_encoder<float>(ad::Checkpoint::read(o.pretrained));
}

inline FoldResult train_fold(const FinetuneOptions& o, const FinetuneData& d, const GridPoint& g, std::size_t fold,
                             std::uint64_t run_seed) {
  const auto mode = models::finetune_mode_from_string(o.mode);
  Rng rng = derive_rng(run_seed, {0x1417u});
  const auto train_p = fold_train_patients(d, fold);
  FoldResult r;
  if (d.task == models::Task::mip) {
    models::MipConfig mc;
    mc.cpe_dim = o.cpe_dim;
    mc.d_proj = g.d_proj;
    mc.layers = o.layers;
    mc.heads = o.heads;
    mc.dropout = o.dropout;
    mc.p_drop = g.p_drop;
    mc.pooling = models::pooling_from_string(o.pooling);
    mc.freeze_encoder = mode == models::FinetuneMode::cl;
    models::MipModel<float> m(initial_encoder(o, mode, rng), d.layout, mc, rng);
    models::MipTrainConfig tc;
    tc.lr = g.lr;
    if (o.epochs) tc.epochs = o.epochs;
    tc.batch_size = o.batch_size;
    tc.selection_label = d.selection;
    tc.augment.target_size = o.image_size;
    const auto h = models::finetune_mip(m, cohort::select_patients(d.sequences, train_p),
                                        cohort::select_patients(d.sequences, d.folds[fold]), tc, run_seed);
    r.val_auc = h.best_val_auc;
    r.best_epoch = h.best_epoch;
    r.checkpoint = models::save_mip(m);
    r.test_scores = models::predict(m, cohort::select_patients(d.sequences, d.test_patients));
  } else {
    models::SipModel<float> m(initial_encoder(o, mode, rng), d.layout, mode, rng);
    models::FinetuneConfig fc;
    fc.mode = mode;
    fc.lr = g.lr;
    fc.epochs = o.epochs;
    fc.batch_size = o.batch_size;
    fc.selection_label = d.selection;
    fc.augment.target_size = o.image_size;
    const auto h = models::finetune(m, cohort::select_patients(d.images, train_p),
                                    cohort::select_patients(d.images, d.folds[fold]), fc, run_seed);
    r.val_auc = h.best_val_auc;
    r.best_epoch = h.best_epoch;
    r.checkpoint = models::save_sip(m, d.task);
    r.test_scores = models::predict(m, cohort::select_patients(d.images, d.test_patients));
  }
  return r;
}

// Test-set score file: fold-averaged probabilities, one row per defined label.
template <class E>
evalstats::ScoreTable test_score_table(const std::vector<E>& test, const models::LabelLayout& layout,
                                       const std::vector<FoldResult>& folds) {
  evalstats::ScoreTable t;
  for (std::size_t l = 0; l < layout.size(); ++l)
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (test[i].mask[l] == 0.f) continue;
      double s = 0.0;
      for (const auto& f : folds) s += f.test_scores[i][l];
      t.add(test[i].id, layout.name(l), s / double(folds.size()), test[i].labels[l] != 0.f);
    }
  return t;
}

}  // namespace detail

// Grid search with k-fold cross-validation. Every grid point trains one model
// per fold; the point with the best mean validation score wins, and its fold
// models and fold-averaged test scores are written.
inline int cmd_finetune(const FinetuneOptions& o, std::ostream& log = std::cout) {
  if (o.folds < 2) throw ContractError("finetune: --folds must be at least 2");
  models::finetune_mode_from_string(o.mode);
  const auto d = detail::load_finetune_data(o);
  std::vector<GridPoint> grid;
  const auto lrs = detail::parse_grid(o.lr, "--lr");
  const bool mip = d.task == models::Task::mip;
  const auto pds = mip ? detail::parse_grid(o.p_drop, "--p-drop") : std::vector<double>{0.0};
  const auto dps = mip ? detail::parse_grid(o.d_proj, "--d-proj") : std::vector<double>{0.0};
  for (double lr : lrs)
    for (double pd : pds)
      for (double dp : dps) grid.push_back({lr, pd, static_cast<std::size_t>(dp)});

  ensure_dir(o.out);
  auto grid_os = open_out((fs::path(o.out) / "grid.csv").string());
  csv::write_row(grid_os, {"config", "lr", "p_drop", "d_proj", "fold", "best_epoch", "val_auc"});
  std::vector<FoldResult> best;
  std::size_t best_config = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<double> config_scores;
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    std::vector<FoldResult> folds;
    for (std::size_t f = 0; f < o.folds; ++f) {
      const std::uint64_t run_seed = derive_rng(o.seed, {gi, f, 0xF7u})();
      folds.push_back(detail::train_fold(o, d, grid[gi], f, run_seed));
      const auto& r = folds.back();
      csv::write_row(grid_os, {std::to_string(gi), csv::format_double(grid[gi].lr),
                               csv::format_double(grid[gi].p_drop), std::to_string(grid[gi].d_proj),
                               std::to_string(f), std::to_string(r.best_epoch), csv::format_double(r.val_auc)});
      log << "config " << gi << " fold " << f << " val " << d.selection << " " << r.val_auc << "\n";
    }
    const double score = mean_defined(folds);
    config_scores.push_back(score);
    if (score > best_score || best.empty()) {
      best_score = score;
      best_config = gi;
      best = std::move(folds);
    }
  }

  auto sel_os = open_out((fs::path(o.out) / "selection.csv").string());
  csv::write_row(sel_os, {"config", "lr", "p_drop", "d_proj", "mean_val_auc", "selected"});
  for (std::size_t gi = 0; gi < grid.size(); ++gi)
    csv::write_row(sel_os, {std::to_string(gi), csv::format_double(grid[gi].lr), csv::format_double(grid[gi].p_drop),
                            std::to_string(grid[gi].d_proj), csv::format_double(config_scores[gi]),
                            gi == best_config ? "1" : "0"});
  for (std::size_t f = 0; f < best.size(); ++f)
    best[f].checkpoint.write((fs::path(o.out) / ("fold" + std::to_string(f) + ".ckpt")).string());
  const auto table = mip ? detail::test_score_table(cohort::select_patients(d.sequences, d.test_patients), d.layout,
                                                    best)
                         : detail::test_score_table(cohort::select_patients(d.images, d.test_patients), d.layout,
                                                    best);
  auto score_os = open_out((fs::path(o.out) / "scores.csv").string());
  evalstats::write_scores(score_os, table);
  write_manifest(manifest_path(o.out, true), {"finetune", json(o)});
  log << "selected config " << best_config << " lr " << grid[best_config].lr;
  if (mip) log << " p_drop " << grid[best_config].p_drop << " d_proj " << grid[best_config].d_proj;
  log << " mean val " << d.selection << " " << best_score << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

inline int cmd_evaluate(const EvaluateOptions& o, std::ostream& log = std::cout) {
  if (o.scores.empty()) throw ContractError("evaluate: at least one --scores file is needed");
  std::vector<std::pair<std::string, evalstats::ScoreTable>> models;
  for (const auto& entry : o.scores) {
    const auto eq = entry.find('=');
    const std::string path = eq == std::string::npos ? entry : entry.substr(eq + 1);
    const std::string name = eq == std::string::npos ? fs::path(entry).parent_path().filename().string()
                                                     : entry.substr(0, eq);
    auto table = evalstats::read_scores(path);
    if (!o.labels.empty()) {
      evalstats::ScoreTable kept;
      for (const auto& l : models::split_strings(o.labels)) {
        auto it = table.by_label.find(l);
        if (it == table.by_label.end()) throw ContractError("evaluate: '" + path + "' has no label '" + l + "'");
        kept.label_order.push_back(l);
        kept.by_label.emplace(l, it->second);
      }
      table = std::move(kept);
    }
    models.emplace_back(name.empty() ? path : name, std::move(table));
  }
  evalstats::BootstrapOptions bo;
  bo.n_iter = o.n_boot;
  bo.level = o.level;
  bo.seed = o.seed;
  bo.group_level = o.patient_bootstrap;
  const auto rep = evalstats::evaluate(models, bo, o.alpha);
  ensure_dir(o.out);
  {
    auto os = open_out((fs::path(o.out) / "report.csv").string());
    evalstats::write_report_csv(os, rep);
  }
  {
    auto os = open_out((fs::path(o.out) / "pairwise.csv").string());
    evalstats::write_pairwise_csv(os, rep);
  }
  const auto table = evalstats::format_table(rep);
  detail::write_text((fs::path(o.out) / "report.txt").string(), table);
  write_manifest(manifest_path(o.out, true), {"evaluate", json(o)});
  log << table;
  return 0;
}

// ---------------------------------------------------------------------------
// plot-events

inline int cmd_plot_events(const PlotEventsOptions& o, std::ostream& log = std::cout) {
  const auto c = cohort::ingest(o.events, o.scans);
  const auto rows = cohort::event_window_counts(c);
  ensure_parent(o.out);
  auto os = open_out(o.out);
  std::vector<std::string> header{"task", "event"};
  for (double w : models::standard_windows())
    header.push_back(std::isinf(w) ? "any" : "h" + std::to_string(static_cast<long>(w)));
  csv::write_row(os, header);
  for (const auto& r : rows) {
    std::vector<std::string> f{models::to_string(r.task), r.event};
    for (auto n : r.counts) f.push_back(std::to_string(n));
    csv::write_row(os, f);
  }
  write_manifest(manifest_path(o.out, false), {"plot-events", json(o)});
  log << "wrote " << rows.size() << " rows to " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

// Reruns a manifest. A non-empty `out` replaces the recorded output path.
inline int run_manifest(const Manifest& m, const std::string& out = "", std::ostream& log = std::cout) {
  auto opts = m.options;
  if (!out.empty()) opts["out"] = out;
  try {
    if (m.command == "synth") return cmd_synth(opts.get<SynthOptions>(), log);
    if (m.command == "pretrain") return cmd_pretrain(opts.get<PretrainOptions>(), log);
    if (m.command == "finetune") return cmd_finetune(opts.get<FinetuneOptions>(), log);
    if (m.command == "evaluate") return cmd_evaluate(opts.get<EvaluateOptions>(), log);
    if (m.command == "plot-events") return cmd_plot_events(opts.get<PlotEventsOptions>(), log);
  } catch (const json::exception& e) {
    throw ParseError("manifest options: " + std::string(e.what()));
  }
  throw ParseError("manifest names unknown command '" + m.command + "'");
}

}  // namespace cxr::cli
