#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "cxr/augment/transforms.hpp"
#include "cxr/autodiff/checkpoint.hpp"
#include "cxr/models/data.hpp"
#include "cxr/models/training.hpp"
#include "cxr/nn/encoder.hpp"
#include "cxr/pretrain/moco.hpp"

namespace cxr::models {

using ad::Tensor;

// CL: frozen encoder (weights and batch-norm statistics), linear classifier only.
// FT: full fine-tune with flips. FT_RA: full fine-tune with flips and affine maps.
// SCRATCH: FT recipe on a randomly initialized encoder.
enum class FinetuneMode { cl, ft, ft_ra, scratch };

inline std::string to_string(FinetuneMode m) {
  switch (m) {
    case FinetuneMode::cl: return "CL";
    case FinetuneMode::ft: return "FT";
    case FinetuneMode::ft_ra: return "FT_RA";
    case FinetuneMode::scratch: return "SCRATCH";
  }
  return "?";
}

inline FinetuneMode finetune_mode_from_string(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::toupper(c)); });
  if (s == "CL") return FinetuneMode::cl;
  if (s == "FT") return FinetuneMode::ft;
  if (s == "FT_RA" || s == "FT-RA") return FinetuneMode::ft_ra;
  if (s == "SCRATCH") return FinetuneMode::scratch;
  throw ContractError("unknown fine-tune mode '" + s + "' (expected CL, FT, FT_RA or SCRATCH)");
}

inline std::size_t default_epochs(FinetuneMode m) {
  switch (m) {
    case FinetuneMode::cl: return 5;
    case FinetuneMode::ft_ra: return 40;
    default: return 20;
  }
}

template <typename T>
class SipModel {
 public:
  SipModel() = default;
  SipModel(nn::ConvEncoder<T> enc, LabelLayout layout, FinetuneMode mode, Rng& rng)
      : encoder(std::move(enc)),
        classifier(encoder.embedding_dim(), layout.size(), rng),
        layout(std::move(layout)),
        mode(mode) {}

  // [B,1,H,W] -> [B, labels]. In CL mode batch norm always uses stored statistics.
  Tensor<T> operator()(const Tensor<T>& x, bool training) {
    const bool bn_train = training && mode != FinetuneMode::cl;
    return classifier(encoder(x, bn_train ? ad::NormMode::train : ad::NormMode::eval_frozen));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    encoder.visit(nn::join(prefix, "encoder"), f);
    classifier.visit(nn::join(prefix, "classifier"), f);
  }

  nn::ConvEncoder<T> encoder;
  nn::Linear<T> classifier;
  LabelLayout layout;
  FinetuneMode mode = FinetuneMode::ft;
};

template <typename T>
Tensor<T> sip_forward(SipModel<T>& model, const augment::Image& img) {
  return model(augment::to_batch<T>({img}), false);
}

struct FinetuneConfig {
  FinetuneMode mode = FinetuneMode::ft;
  ad::OptimizerKind optimizer = ad::OptimizerKind::adam;
  double lr = 1e-3;
  std::size_t epochs = 0;  // 0: the mode's default
  std::size_t batch_size = 32;
  double weight_decay = 1e-5;
  bool cosine_schedule = true;
  bool keep_best = true;  // restore the epoch with the best validation selection score
  std::string selection_label = "any_adverse@96h";
  augment::AugmentConfig augment;

  std::size_t resolved_epochs() const { return epochs ? epochs : default_epochs(mode); }
};

// Sigmoid probabilities for every example, evaluated in batches.
template <typename T>
std::vector<std::vector<float>> predict(SipModel<T>& model, const std::vector<Example>& data,
                                        std::size_t batch = 64) {
  std::vector<std::vector<float>> out;
  out.reserve(data.size());
  for (std::size_t s = 0; s < data.size(); s += batch) {
    std::vector<augment::Image> xs;
    for (std::size_t i = s; i < std::min(data.size(), s + batch); ++i) xs.push_back(data[i].image);
    auto z = model(augment::to_batch<T>(xs), false);
    const std::size_t l = z.dim(1);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      std::vector<float> row(l);
      for (std::size_t j = 0; j < l; ++j) row[j] = float(z[i * l + j]);
      out.push_back(sigmoid_row(row));
    }
  }
  return out;
}

template <typename T>
EpochRecord validate_sip(SipModel<T>& model, const std::vector<Example>& val, const std::string& selection) {
  EpochRecord r;
  if (val.empty()) return r;
  const auto scores = predict(model, val);
  std::vector<std::vector<float>> y, m;
  for (const auto& e : val) y.push_back(e.labels), m.push_back(e.mask);
  const auto aucs = per_label_auc(scores, y, m, model.layout.size());
  r.val_auc = aucs[model.layout.find(selection)];
  r.val_mean_auc = nan_mean(aucs);
  return r;
}

// Masked-BCE fine-tuning. Inputs are already resized and normalized; each epoch
// draws flips (and affine maps in FT_RA) per example from (seed, epoch, index).
template <typename T>
History finetune(SipModel<T>& model, const std::vector<Example>& train, const std::vector<Example>& val,
                 const FinetuneConfig& cfg, std::uint64_t seed,
                 const std::function<void(std::size_t, const EpochRecord&)>& on_epoch = {}) {
  if (train.empty()) throw InvalidInputError("finetune: empty training split");
  if (val.empty()) throw InvalidInputError("finetune: empty validation split");
  if (cfg.batch_size == 0) throw ContractError("finetune: batch size must be positive");
  model.mode = cfg.mode;
  const std::size_t n_labels = model.layout.size();
  model.layout.find(cfg.selection_label);

  const bool frozen = cfg.mode == FinetuneMode::cl;
  nn::set_trainable<T>(model.encoder, !frozen);
  auto params = frozen ? nn::parameters<T>(model.classifier) : nn::parameters<T>(model);
  ad::OptimizerConfig oc;
  oc.kind = cfg.optimizer;
  oc.lr = cfg.lr;
  oc.weight_decay = cfg.weight_decay;
  ad::OptimizerState<T> opt(oc);

  const std::size_t epochs = cfg.resolved_epochs();
  const std::size_t per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const long total = long(epochs * per_epoch);
  History hist;
  std::vector<std::vector<T>> best;
  std::vector<std::size_t> order(train.size());
  long step = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = derive_rng(seed, {e, 0xF1u});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    EpochRecord rec;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      std::vector<augment::Image> xs;
      std::vector<const std::vector<float>*> ys, ms;
      for (std::size_t j = b * cfg.batch_size; j < std::min(train.size(), (b + 1) * cfg.batch_size); ++j) {
        const auto& ex = train[order[j]];
        Rng rng = derive_rng(seed, {e, order[j], 0xA6u});
        xs.push_back(augment::finetune_view(ex.image, rng, cfg.augment, cfg.mode == FinetuneMode::ft_ra));
        ys.push_back(&ex.labels);
        ms.push_back(&ex.mask);
      }
      opt.config.lr = cfg.cosine_schedule ? ad::cosine_annealing_lr(step, total, cfg.lr) : cfg.lr;
      rec.lr = opt.config.lr;
      auto logits = model(augment::to_batch<T>(xs), true);
      auto mask = stack_rows<T>(ms, n_labels);
      bool any = false;
      for (T v : mask.data()) any = any || v != T(0);
      ++step;
      if (!any) continue;  // every label undefined in this batch
      auto loss = ad::bce_with_logits(logits, stack_rows<T>(ys, n_labels), mask);
      ad::zero_grad(params);
      ad::backward(loss);
      ad::optimizer_step(params, opt);
      loss_sum += double(loss.item());
    }
    const EpochRecord v = validate_sip(model, val, cfg.selection_label);
    rec.train_loss = loss_sum / double(per_epoch);
    rec.val_auc = v.val_auc;
    rec.val_mean_auc = v.val_mean_auc;
    hist.epochs.push_back(rec);
    const double score = selection_score(rec);
    if (cfg.keep_best && (best.empty() || score > hist.best_val_auc || std::isnan(hist.best_val_auc))) {
      best = snapshot<T>(model);
      hist.best_epoch = e;
      hist.best_val_auc = score;
    }
    if (on_epoch) on_epoch(e, rec);
  }
  if (cfg.keep_best && !best.empty()) restore<T>(model, best);
  if (!cfg.keep_best) {
    hist.best_epoch = epochs ? epochs - 1 : 0;
    hist.best_val_auc = epochs ? selection_score(hist.epochs.back()) : hist.best_val_auc;
  }
  nn::set_trainable<T>(model.encoder, true);
  return hist;
}

inline std::string join_strings(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

inline std::vector<std::string> split_strings(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto c = s.find(',', pos);
    out.push_back(s.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
    if (c == std::string::npos) break;
    pos = c + 1;
  }
  return out;
}

inline std::map<std::string, std::string> layout_meta(const LabelLayout& l) {
  std::vector<std::string> w;
  for (double x : l.windows) w.push_back(LabelLayout::window_name(x));
  return {{"layout.events", join_strings(l.events)}, {"layout.windows", join_strings(w)}};
}

inline LabelLayout layout_from_meta(const std::map<std::string, std::string>& m) {
  LabelLayout l;
  l.events = split_strings(m.at("layout.events"));
  for (const auto& w : split_strings(m.at("layout.windows")))
    l.windows.push_back(w == "any" ? kAnyWindow : std::stod(w.substr(0, w.size() - 1)));
  return l;
}

template <typename T>
ad::Checkpoint save_sip(SipModel<T>& model, Task task) {
  ad::Checkpoint ck;
  nn::save_state<T>(model, ck, "");
  auto meta = pretrain::encoder_meta(model.encoder.config());
  for (auto& [k, v] : layout_meta(model.layout)) meta[k] = v;
  meta["kind"] = "sip";
  meta["task"] = to_string(task);
  meta["mode"] = to_string(model.mode);
  ck.set_meta(meta);
  return ck;
}

template <typename T>
SipModel<T> load_sip(const ad::Checkpoint& ck) {
  const auto meta = ck.meta();
  if (meta.count("kind") == 0 || meta.at("kind") != "sip") throw ContractError("checkpoint is not a single-image model");
  Rng rng(0);
  SipModel<T> m(nn::ConvEncoder<T>(pretrain::encoder_from_meta(meta), rng), layout_from_meta(meta),
                finetune_mode_from_string(meta.at("mode")), rng);
  nn::load_state<T>(m, ck, "");
  return m;
}

}  // namespace cxr::models
