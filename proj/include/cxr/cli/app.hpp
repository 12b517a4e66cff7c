#pragma once

#include <algorithm>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cxr/cli/commands.hpp"

namespace cxr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Parses `args` (without the program name), runs the chosen command and
// returns the process exit code: 0 success, 2 usage error, 1 runtime error.
inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Chest X-ray deterioration prognosis toolkit", "cxrprog"};
  app.require_subcommand(1);

  SynthOptions so;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort and print its split summary");
  synth->add_option("--patients", so.patients, "Number of patients")->check(CLI::PositiveNumber);
  synth->add_option("--seed", so.seed, "Generator seed");
  synth->add_option("--out", so.out, "Output directory");
  synth->add_option("--image-size", so.image_size, "Image side in pixels")->check(CLI::PositiveNumber);
  synth->add_option("--bits", so.bits, "PGM bit depth")->check(CLI::IsMember({8, 16}));
  synth->add_option("--trend", so.trend, "Per-scan severity drift");
  synth->add_option("--pretrain-images", so.pretrain_images, "Unlabeled pretraining images to emit");
  synth->add_option("--a0", so.a0, "Baseline opacity amplitude");
  synth->add_option("--clutter", so.clutter, "Mean count of distractor markers");
  synth->add_option("--pixel-noise", so.pixel_noise, "Pixel noise level");
  synth->add_option("--test-fraction", so.test_fraction, "Held-out patient fraction")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--split-seed", so.split_seed, "Seed of the patient split");

  PretrainOptions po;
  auto* pre = app.add_subcommand("pretrain", "Pretrain an encoder with MoCo or supervised findings");
  pre->add_option("--corpus", po.corpus, "Image directory (supervised: with findings.csv)")->required();
  pre->add_option("--mode", po.mode, "moco or supervised")->check(CLI::IsMember({"moco", "supervised"}));
  pre->add_option("--epochs", po.epochs, "Epochs");
  pre->add_option("--lr", po.lr, "Learning rate (default: 0.1 moco, 1e-3 supervised)");
  pre->add_option("--feature-dim", po.feature_dim, "MoCo feature dimension")->check(CLI::IsMember({64, 128, 256}));
  pre->add_option("--queue-size", po.queue_size, "MoCo queue length")->check(CLI::PositiveNumber);
  pre->add_option("--tau", po.tau, "InfoNCE temperature")->check(CLI::PositiveNumber);
  pre->add_option("--momentum", po.momentum, "Momentum-encoder coefficient")->check(CLI::Range(0.0, 1.0));
  pre->add_option("--batch-size", po.batch_size, "Batch size")->check(CLI::PositiveNumber);
  pre->add_option("--image-size", po.image_size, "Training resolution")->check(CLI::PositiveNumber);
  pre->add_option("--widths", po.widths, "Encoder channel widths, comma-separated");
  pre->add_option("--seed", po.seed, "Seed");
  pre->add_option("--out", po.out, "Checkpoint path");

  FinetuneOptions fo;
  auto* ft = app.add_subcommand("finetune", "Cross-validated fine-tuning with a hyperparameter grid");
  ft->add_option("--data", fo.data, "Cohort directory (events.csv, scans.csv, images)")->required();
  ft->add_option("--task", fo.task, "sip, orp or mip")->check(CLI::IsMember({"sip", "orp", "mip"}));
  ft->add_option("--mode", fo.mode, "CL, FT, FT_RA or SCRATCH")
      ->check(CLI::IsMember({"CL", "FT", "FT_RA", "SCRATCH", "cl", "ft", "ft_ra", "scratch"}));
  ft->add_option("--pretrained", fo.pretrained, "Pretrained checkpoint");
  ft->add_option("--folds", fo.folds, "Cross-validation folds")->check(CLI::Range(2, 100));
  ft->add_option("--lr", fo.lr, "Learning-rate grid, comma-separated");
  ft->add_option("--epochs", fo.epochs, "Epochs (0: mode default)");
  ft->add_option("--batch-size", fo.batch_size, "Batch size")->check(CLI::PositiveNumber);
  ft->add_option("--selection", fo.selection, "Selection label, e.g. any_adverse@96h");
  ft->add_option("--image-size", fo.image_size, "Training resolution")->check(CLI::PositiveNumber);
  ft->add_option("--widths", fo.widths, "Encoder widths when training from scratch");
  ft->add_option("--test-fraction", fo.test_fraction, "Held-out patient fraction")->check(CLI::Range(0.0, 1.0));
  ft->add_option("--split-seed", fo.split_seed, "Seed of the patient split and folds");
  ft->add_option("--seed", fo.seed, "Training seed");
  ft->add_option("--p-drop", fo.p_drop, "MIP DropImage grid");
  ft->add_option("--d-proj", fo.d_proj, "MIP projection-width grid");
  ft->add_option("--cpe-dim", fo.cpe_dim, "MIP CPE dimension");
  ft->add_option("--layers", fo.layers, "MIP transformer layers");
  ft->add_option("--heads", fo.heads, "MIP attention heads");
  ft->add_option("--dropout", fo.dropout, "MIP transformer and CPE dropout")->check(CLI::Range(0.0, 0.999));
  ft->add_option("--pooling", fo.pooling, "MIP pooling")->check(CLI::IsMember({"sum", "last"}));
  ft->add_option("--out", fo.out, "Output directory");

  EvaluateOptions eo;
  auto* ev = app.add_subcommand("evaluate", "AUCs with bootstrap intervals and pairwise tests");
  ev->add_option("--scores", eo.scores, "Score file, optionally NAME=PATH; repeat for several models")->required();
  ev->add_option("--labels", eo.labels, "Labels to evaluate, comma-separated (default: all)");
  ev->add_option("--n-boot", eo.n_boot, "Bootstrap iterations")->check(CLI::PositiveNumber);
  ev->add_option("--level", eo.level, "Confidence level")->check(CLI::Range(0.0, 1.0));
  ev->add_option("--alpha", eo.alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
  ev->add_flag("--patient-bootstrap", eo.patient_bootstrap, "Resample patients instead of scans");
  ev->add_option("--seed", eo.seed, "Bootstrap seed");
  ev->add_option("--out", eo.out, "Report directory");

  PlotEventsOptions pe;
  std::string data_dir;
  auto* pl = app.add_subcommand("plot-events", "Event counts per window and task");
  pl->add_option("--data", data_dir, "Cohort directory holding events.csv and scans.csv");
  pl->add_option("--events", pe.events, "Events CSV");
  pl->add_option("--scans", pe.scans, "Scans CSV");
  pl->add_option("--out", pe.out, "Output CSV");

  std::string manifest, rerun_out;
  auto* rr = app.add_subcommand("rerun", "Repeat a run from its manifest");
  rr->add_option("manifest", manifest, "manifest.json written by an earlier run")->required();
  rr->add_option("--out", rerun_out, "Replace the recorded output path");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(so, out);
    if (*pre) return cmd_pretrain(po, out);
    if (*ft) return cmd_finetune(fo, out);
    if (*ev) return cmd_evaluate(eo, out);
    if (*pl) {
      if (!data_dir.empty()) {
        if (pe.events.empty()) pe.events = (fs::path(data_dir) / "events.csv").string();
        if (pe.scans.empty()) pe.scans = (fs::path(data_dir) / "scans.csv").string();
      }
      if (pe.events.empty() || pe.scans.empty()) {
        err << "plot-events: give --data or both --events and --scans\n";
        return kExitUsage;
      }
      return cmd_plot_events(pe, out);
    }
    if (*rr) return run_manifest(read_manifest(manifest), rerun_out, out);
  } catch (const UndefinedMetricError& e) {
    err << "undefined metric: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

inline int run_cli(int argc, char** argv) { return run_cli(std::vector<std::string>(argv + 1, argv + argc)); }

}  // namespace cxr::cli
