#pragma once

// Synthetic transfer and sequence experiments run by the acceptance binary.
// Each seed draws its own cohort, patient split and initializations.

#include <chrono>
#include <cstdio>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "cxr/cohort/dataset.hpp"
#include "cxr/cohort/splits.hpp"
#include "cxr/evalstats/auc.hpp"
#include "cxr/models/mip.hpp"
#include "cxr/pretrain/supervised.hpp"

namespace cxr::acceptance {

inline constexpr std::uint64_t kSeeds[] = {1, 2, 3};
inline constexpr double kTrend = 0.15;

struct TransferRun {
  std::uint64_t seed = 0;
  double scratch = 0, supervised = 0, moco = 0;
};

struct SequenceRun {
  std::uint64_t seed = 0;
  double single = 0, mip = 0;
};

namespace detail {

inline double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Test AUC of one label over the examples where it is defined.
template <class E>
double label_auc(const std::vector<std::vector<float>>& scores, const std::vector<E>& test, std::size_t label) {
  std::vector<double> s;
  std::vector<int> y;
  for (std::size_t i = 0; i < test.size(); ++i)
    if (test[i].mask[label] > 0) {
      s.push_back(scores[i][label]);
      y.push_back(test[i].labels[label] > 0);
    }
  return evalstats::roc_auc(s, y);
}

// Train on folds 1..4 of the trainval patients, validate on fold 0.
struct Split {
  std::vector<std::string> train, val, test;
};

inline Split split_patients(const cohort::Cohort& c, const std::vector<cohort::ScanRecord>& eligible,
                            const std::vector<cohort::LabeledExample>& labels, std::size_t label,
                            std::uint64_t seed) {
  Rng rng = derive_rng(seed, {5});
  const auto split = cohort::patient_split(c.patients(), rng);
  const auto folds = cohort::stratified_kfold(split.trainval, cohort::positive_patients(eligible, labels, label), 5, rng);
  Split out{{}, folds[0], split.test};
  for (std::size_t f = 1; f < folds.size(); ++f) out.train.insert(out.train.end(), folds[f].begin(), folds[f].end());
  return out;
}

}  // namespace detail

// Scratch, supervised-pretrained and MoCo-pretrained fine-tuning on the SIP
// task, scored on any_adverse@any. 2000 pretraining images and 500 patients
// at 64x64 per seed.
inline std::vector<TransferRun> transfer_experiment(std::ostream& log) {
  constexpr std::size_t px = 64;
  std::vector<TransferRun> runs;
  for (std::uint64_t seed : kSeeds) {
    auto t0 = std::chrono::steady_clock::now();
    cohort::SynthConfig sc;
    sc.n_patients = 500;
    sc.image_size = px;
    sc.pretrain_images = 2000;
    sc.a0 = 0.25;
    sc.clutter = 2.0;
    sc.pixel_noise = 0.05;
    const auto syn = cohort::generate_cohort(sc, seed);
    augment::AugmentConfig ac;
    ac.target_size = px;
    auto store = cohort::ImageStore::from_synth(syn, ac);
    const auto layout = models::adverse_layout();
    const std::size_t label = layout.find("any_adverse@any");
    const auto eligible = cohort::apply_task_filter(syn.cohort.scans, syn.cohort.events, models::Task::sip);
    const auto labels = cohort::label_scans(eligible, syn.cohort, layout);
    const auto examples = cohort::make_examples(eligible, labels, store);
    const auto split = detail::split_patients(syn.cohort, eligible, labels, label, seed);
    const auto train = cohort::select_patients(examples, split.train), val = cohort::select_patients(examples, split.val),
               test = cohort::select_patients(examples, split.test);

    pretrain::PretrainConfig pc;
    pc.epochs = 30;
    pc.lr = 0.1;
    pc.momentum = 0.99;
    pc.augment.target_size = px;
    pretrain::LabeledCorpus corpus;
    corpus.finding_names = cohort::synth_findings();
    for (const auto& im : syn.pretrain) {
      corpus.images.push_back(im.image);
      corpus.findings.push_back(im.findings);
    }
    auto moco = pretrain::pretrain_moco<float>(corpus.images, pc, seed);
    auto moco_ck = pretrain::save_moco(moco.state, pc);

    pretrain::SupervisedConfig sup;
    sup.encoder = pc.encoder;
    sup.augment.target_size = px;
    Rng sup_rng = derive_rng(seed, {0x50u});
    pretrain::FindingsModel<float> findings(sup.encoder, corpus.finding_names.size(), sup_rng);
    pretrain::supervised_pretrain(findings, corpus, sup, seed);
    auto sup_ck = pretrain::save_supervised(findings, sup, corpus.finding_names);

    TransferRun run{seed};
    for (auto* slot : {&run.scratch, &run.supervised, &run.moco}) {
      Rng rng = derive_rng(seed, {9});
      const bool scratch = slot == &run.scratch;
      nn::ConvEncoder<float> enc = scratch ? nn::ConvEncoder<float>(pc.encoder, rng)
                                           : pretrain::load_pretrained_encoder<float>(slot == &run.moco ? moco_ck : sup_ck);
      const auto mode = scratch ? models::FinetuneMode::scratch : models::FinetuneMode::ft;
      models::SipModel<float> m(enc, layout, mode, rng);
      models::FinetuneConfig fc;
      fc.mode = mode;
      fc.lr = 1e-3;
      fc.epochs = 20;
      fc.augment.target_size = px;
      models::finetune(m, train, val, fc, seed);
      *slot = detail::label_auc(models::predict(m, test), test, label);
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "  seed %llu: scratch %.3f supervised %.3f moco %.3f (%.0fs)\n",
                  static_cast<unsigned long long>(seed), run.scratch, run.supervised, run.moco, detail::elapsed(t0));
    log << buf << std::flush;
    runs.push_back(run);
  }
  return runs;
}

// MIP transformer against a single-image model trained on the same index
// scans, both from a scratch encoder, scored on any_adverse@96h. 500 patients
// at 32x32; dropout 0.5 does not train reliably at this size.
inline std::vector<SequenceRun> sequence_experiment(double trend, std::ostream& log) {
  constexpr std::size_t px = 32;
  std::vector<SequenceRun> runs;
  for (std::uint64_t seed : kSeeds) {
    auto t0 = std::chrono::steady_clock::now();
    cohort::SynthConfig sc;
    sc.n_patients = 500;
    sc.image_size = px;
    sc.trend = trend;
    const auto syn = cohort::generate_cohort(sc, seed);
    augment::AugmentConfig ac;
    ac.target_size = px;
    auto store = cohort::ImageStore::from_synth(syn, ac);
    const auto layout = models::layout_for(models::Task::mip);
    const std::size_t label = layout.find("any_adverse@96h");
    const auto eligible = cohort::apply_task_filter(syn.cohort.scans, syn.cohort.events, models::Task::mip);
    const auto labels = cohort::label_scans(eligible, syn.cohort, layout);
    const auto examples = cohort::make_examples(eligible, labels, store);
    const auto sequences = cohort::make_sequences(cohort::build_sequences(eligible, syn.cohort, layout), store);
    const auto split = detail::split_patients(syn.cohort, eligible, labels, label, seed);
    nn::EncoderConfig enc;
    enc.widths = {8, 16, 32, 64};

    SequenceRun run{seed};
    {
      Rng rng = derive_rng(seed, {9});
      models::SipModel<float> m(nn::ConvEncoder<float>(enc, rng), layout, models::FinetuneMode::scratch, rng);
      models::FinetuneConfig fc;
      fc.mode = models::FinetuneMode::scratch;
      fc.epochs = 20;
      fc.augment.target_size = px;
      const auto test = cohort::select_patients(examples, split.test);
      models::finetune(m, cohort::select_patients(examples, split.train), cohort::select_patients(examples, split.val),
                       fc, seed);
      run.single = detail::label_auc(models::predict(m, test), test, label);
    }
    {
      Rng rng = derive_rng(seed, {9});
      models::MipConfig mc;
      mc.dropout = 0.1;
      models::MipModel<float> m(nn::ConvEncoder<float>(enc, rng), layout, mc, rng);
      models::MipTrainConfig tc;
      tc.epochs = 20;
      tc.augment.target_size = px;
      const auto test = cohort::select_patients(sequences, split.test);
      models::finetune_mip(m, cohort::select_patients(sequences, split.train),
                           cohort::select_patients(sequences, split.val), tc, seed);
      run.mip = detail::label_auc(models::predict(m, test), test, label);
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "  trend %.2f seed %llu: single %.3f mip %.3f (%.0fs)\n", trend,
                  static_cast<unsigned long long>(seed), run.single, run.mip, detail::elapsed(t0));
    log << buf << std::flush;
    runs.push_back(run);
  }
  return runs;
}

}  // namespace cxr::acceptance
