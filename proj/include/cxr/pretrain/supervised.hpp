#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "cxr/pretrain/corpus.hpp"
#include "cxr/pretrain/moco.hpp"

namespace cxr::pretrain {

struct SupervisedConfig {
  double lr = 1e-3;
  double weight_decay = 1e-5;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  double lr_decay = 0.1;  // per-epoch factor
  nn::EncoderConfig encoder;
  augment::AugmentConfig augment;
};

// Learning rate used in each epoch: lr * decay^e.
inline std::vector<double> supervised_lr_schedule(const SupervisedConfig& cfg) {
  std::vector<double> out(cfg.epochs);
  for (std::size_t e = 0; e < cfg.epochs; ++e) out[e] = cfg.lr * std::pow(cfg.lr_decay, double(e));
  return out;
}

template <typename T>
struct FindingsModel {
  FindingsModel() = default;
  FindingsModel(const nn::EncoderConfig& enc, std::size_t findings, Rng& rng)
      : encoder(enc, rng), head(encoder.embedding_dim(), findings, rng) {}

  Tensor<T> operator()(const Tensor<T>& x, ad::NormMode mode) { return head(encoder(x, mode)); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    encoder.visit(nn::join(prefix, "encoder"), f);
    head.visit(nn::join(prefix, "findings_head"), f);
  }

  nn::ConvEncoder<T> encoder;
  nn::Linear<T> head;
};

struct SupervisedEpoch {
  double lr = 0.0;
  double mean_loss = 0.0;
};

// Multi-label BCE on the findings with Adam and a per-epoch step decay.
// Inputs are resized and histogram-normalized once; each epoch applies
// random flips only. A final partial batch is kept.
template <typename T>
std::vector<SupervisedEpoch> supervised_pretrain(FindingsModel<T>& model, const LabeledCorpus& corpus,
                                                 const SupervisedConfig& cfg, std::uint64_t seed,
                                                 const std::function<void(std::size_t, const SupervisedEpoch&)>&
                                                     on_epoch = {}) {
  if (corpus.images.empty()) throw InvalidInputError("supervised_pretrain: empty corpus");
  if (corpus.findings.size() != corpus.images.size())
    throw ContractError("supervised_pretrain: one finding vector per image required");
  const std::size_t nf = corpus.finding_names.size();
  if (nf != model.head.out_features()) throw ContractError("supervised_pretrain: head width != finding count");
  if (cfg.batch_size == 0) throw ContractError("supervised_pretrain: batch size must be positive");

  std::vector<augment::Image> base;
  base.reserve(corpus.images.size());
  for (const auto& im : corpus.images) base.push_back(augment::preprocess(im, cfg.augment));

  ad::OptimizerConfig oc;
  oc.kind = ad::OptimizerKind::adam;
  oc.weight_decay = cfg.weight_decay;
  ad::OptimizerState<T> opt(oc);
  auto params = nn::parameters<T>(model);
  const auto lrs = supervised_lr_schedule(cfg);

  std::vector<SupervisedEpoch> history;
  std::vector<std::size_t> order(base.size());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    opt.config.lr = lrs[e];
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = derive_rng(seed, {e, 0x5EEDu});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<augment::Image> xs;
      std::vector<T> ys;
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t idx = order[j];
        Rng rng = derive_rng(seed, {e, idx});
        augment::Image x = augment::random_flip(base[idx], rng, augment::FlipAxis::horizontal, cfg.augment.p_hflip);
        xs.push_back(augment::random_flip(x, rng, augment::FlipAxis::vertical, cfg.augment.p_vflip));
        for (float v : corpus.findings[idx]) ys.push_back(T(v));
      }
      Tensor<T> target({xs.size(), nf}, std::move(ys));
      auto logits = model(augment::to_batch<T>(xs), ad::NormMode::train);
      auto loss = ad::bce_with_logits(logits, target);
      ad::zero_grad(params);
      ad::backward(loss);
      ad::optimizer_step(params, opt);
      loss_sum += double(loss.item());
      ++batches;
    }
    history.push_back({lrs[e], loss_sum / double(batches)});
    if (on_epoch) on_epoch(e, history.back());
  }
  return history;
}

template <typename T>
ad::Checkpoint save_supervised(FindingsModel<T>& model, const SupervisedConfig& cfg,
                               const std::vector<std::string>& finding_names) {
  ad::Checkpoint ck;
  nn::save_state<T>(model, ck, "");
  auto meta = encoder_meta(cfg.encoder);
  meta["kind"] = "supervised";
  std::string names;
  for (const auto& n : finding_names) names += (names.empty() ? "" : ",") + n;
  meta["findings"] = names;
  ck.set_meta(meta);
  return ck;
}

// Loads the "encoder.*" entries of a moco or supervised checkpoint.
template <typename T>
nn::ConvEncoder<T> load_pretrained_encoder(const ad::Checkpoint& ck) {
  Rng rng(0);
  nn::ConvEncoder<T> enc(encoder_from_meta(ck.meta()), rng);
  nn::load_state<T>(enc, ck, "encoder");
  return enc;
}

}  // namespace cxr::pretrain
