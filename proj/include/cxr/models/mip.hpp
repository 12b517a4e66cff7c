#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "cxr/common/csv.hpp"
#include "cxr/models/cpe.hpp"
#include "cxr/models/sip.hpp"
#include "cxr/nn/transformer.hpp"

namespace cxr::models {

enum class Pooling { sum, last };

inline std::string to_string(Pooling p) { return p == Pooling::sum ? "sum" : "last"; }

inline Pooling pooling_from_string(const std::string& s) {
  if (s == "sum") return Pooling::sum;
  if (s == "last") return Pooling::last;
  throw ContractError("unknown pooling '" + s + "' (expected sum or last)");
}

struct MipConfig {
  std::size_t cpe_dim = 64;
  std::size_t d_proj = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_mult = 4;
  double dropout = 0.5;      // transformer and CPE-concat dropout
  double p_drop = 0.0;       // DropImage
  Pooling pooling = Pooling::sum;
  bool freeze_encoder = false;

  nn::TransformerConfig transformer() const { return {d_proj, heads, layers, ffn_mult, dropout}; }

  void validate() const {
    if (cpe_dim == 0 || cpe_dim % 2 != 0) throw ContractError("mip: CPE dimension must be even and positive");
    if (d_proj == 0 || heads == 0 || d_proj % heads != 0)
      throw ContractError("mip: projection dimension must be divisible by the head count");
    if (!(p_drop >= 0.0 && p_drop < 1.0)) throw ContractError("mip: p_drop must lie in [0,1)");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("mip: dropout must lie in [0,1)");
  }
};

template <typename T>
class MipModel {
 public:
  MipModel() = default;
  MipModel(nn::ConvEncoder<T> enc, LabelLayout layout, const MipConfig& cfg, Rng& rng)
      : encoder(std::move(enc)),
        projection(encoder.embedding_dim() + cfg.cpe_dim, cfg.d_proj, rng),
        transformer(cfg.transformer(), rng),
        classifier(cfg.d_proj, layout.size(), rng),
        layout(std::move(layout)),
        config(cfg) {
    cfg.validate();
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    encoder.visit(nn::join(prefix, "encoder"), f);
    projection.visit(nn::join(prefix, "projection"), f);
    transformer.visit(nn::join(prefix, "transformer"), f);
    classifier.visit(nn::join(prefix, "classifier"), f);
  }

  // Sequence head on precomputed embeddings h [n, E] with times [n].
  // concat(h, cpe) -> dropout -> projection -> transformer -> pool -> [1, d_proj]
  Tensor<T> pool_sequence(const Tensor<T>& h, const std::vector<double>& hours, bool training, Rng& rng) const {
    const std::size_t n = h.dim(0), d = config.cpe_dim;
    std::vector<T> e;
    e.reserve(n * d);
    for (double t : hours)
      for (double v : cpe_embed(t, d)) e.push_back(T(v));
    auto z = ad::concat_cols<T>({h, Tensor<T>({n, d}, std::move(e))});
    z = ad::dropout(z, config.dropout, training, rng);
    auto out = transformer(projection(z), training, rng);
    return config.pooling == Pooling::sum ? ad::sum_rows(out) : ad::gather_rows(out, {n - 1});
  }

  nn::ConvEncoder<T> encoder;
  nn::Linear<T> projection;
  nn::TransformerEncoder<T> transformer;
  nn::Linear<T> classifier;
  LabelLayout layout;
  MipConfig config;
};

inline void check_sequence(const std::vector<augment::Image>& images, const std::vector<double>& hours) {
  if (images.empty()) throw ContractError("mip_forward: empty sequence");
  if (images.size() != hours.size()) throw ContractError("mip_forward: one time per image required");
  for (double t : hours)
    if (!(t >= 0.0 && t < kSequenceCutoffHours))
      throw ContractError("mip_forward: time " + std::to_string(t) + " h outside [0, 360)");
}

// Logits [B, labels] for a batch of sequences. All kept images of the batch go
// through the encoder together. DropImage and dropout act only in training.
template <typename T>
Tensor<T> mip_forward(MipModel<T>& model, const std::vector<const SequenceExample*>& batch, bool training, Rng& rng,
                      const std::vector<std::vector<augment::Image>>* views = nullptr) {
  if (batch.empty()) throw ContractError("mip_forward: empty batch");
  std::vector<augment::Image> flat;
  std::vector<std::vector<std::size_t>> rows(batch.size());
  std::vector<std::vector<double>> times(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto& seq = *batch[s];
    check_sequence(seq.images, seq.hours);
    const auto keep = training ? drop_image_mask(seq.images.size(), model.config.p_drop, rng)
                               : std::vector<bool>(seq.images.size(), true);
    for (std::size_t i = 0; i < seq.images.size(); ++i) {
      if (!keep[i]) continue;
      rows[s].push_back(flat.size());
      times[s].push_back(seq.hours[i]);
      flat.push_back(views ? (*views)[s][i] : seq.images[i]);
    }
  }
  const bool bn_train = training && !model.config.freeze_encoder;
  auto h = model.encoder(augment::to_batch<T>(flat), bn_train ? ad::NormMode::train : ad::NormMode::eval_frozen);
  std::vector<Tensor<T>> pooled;
  pooled.reserve(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s)
    pooled.push_back(model.pool_sequence(ad::gather_rows(h, rows[s]), times[s], training, rng));
  return model.classifier(batch.size() == 1 ? pooled[0] : ad::concat_rows(pooled));
}

template <typename T>
std::vector<std::vector<float>> predict(MipModel<T>& model, const std::vector<SequenceExample>& data,
                                        std::size_t batch = 32) {
  std::vector<std::vector<float>> out;
  Rng unused(0);
  for (std::size_t s = 0; s < data.size(); s += batch) {
    std::vector<const SequenceExample*> b;
    for (std::size_t i = s; i < std::min(data.size(), s + batch); ++i) b.push_back(&data[i]);
    auto z = mip_forward(model, b, false, unused);
    const std::size_t l = z.dim(1);
    for (std::size_t i = 0; i < b.size(); ++i) {
      std::vector<float> row(l);
      for (std::size_t j = 0; j < l; ++j) row[j] = float(z[i * l + j]);
      out.push_back(sigmoid_row(row));
    }
  }
  return out;
}

template <typename T>
EpochRecord validate_mip(MipModel<T>& model, const std::vector<SequenceExample>& val, const std::string& selection) {
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

struct MipTrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double weight_decay = 1e-5;
  bool cosine_schedule = true;
  bool keep_best = true;
  bool flips = true;  // random flips per image, as in single-image fine-tuning
  std::string selection_label = "any_adverse@96h";
  augment::AugmentConfig augment;
};

// Adam with masked BCE over all 20 labels. Encoder weights start from
// pretraining; the sequence head starts random.
template <typename T>
History finetune_mip(MipModel<T>& model, const std::vector<SequenceExample>& train,
                     const std::vector<SequenceExample>& val, const MipTrainConfig& cfg, std::uint64_t seed,
                     const std::function<void(std::size_t, const EpochRecord&)>& on_epoch = {}) {
  if (train.empty()) throw InvalidInputError("finetune_mip: empty training set");
  if (val.empty()) throw InvalidInputError("finetune_mip: empty validation set");
  if (cfg.batch_size == 0) throw ContractError("finetune_mip: batch size must be positive");
  for (const auto& s : train) check_sequence(s.images, s.hours);
  for (const auto& s : val) check_sequence(s.images, s.hours);
  model.layout.find(cfg.selection_label);
  const std::size_t n_labels = model.layout.size();

  nn::set_trainable<T>(model.encoder, !model.config.freeze_encoder);
  std::vector<Tensor<T>> params;
  model.visit("", [&](const std::string& name, Tensor<T>& t, nn::StateKind k) {
    if (k != nn::StateKind::parameter) return;
    if (model.config.freeze_encoder && name.rfind("encoder.", 0) == 0) return;
    params.push_back(t);
  });
  ad::OptimizerConfig oc;
  oc.kind = ad::OptimizerKind::adam;
  oc.lr = cfg.lr;
  oc.weight_decay = cfg.weight_decay;
  ad::OptimizerState<T> opt(oc);

  const std::size_t per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const long total = long(cfg.epochs * per_epoch);
  History hist;
  std::vector<std::vector<T>> best;
  std::vector<std::size_t> order(train.size());
  long step = 0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = derive_rng(seed, {e, 0xF2u});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    EpochRecord rec;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      std::vector<const SequenceExample*> batch;
      std::vector<const std::vector<float>*> ys, ms;
      std::vector<std::vector<augment::Image>> views;
      for (std::size_t j = b * cfg.batch_size; j < std::min(train.size(), (b + 1) * cfg.batch_size); ++j) {
        const auto& seq = train[order[j]];
        batch.push_back(&seq);
        ys.push_back(&seq.labels);
        ms.push_back(&seq.mask);
        std::vector<augment::Image> v;
        for (std::size_t i = 0; i < seq.images.size(); ++i) {
          if (!cfg.flips) {
            v.push_back(seq.images[i]);
            continue;
          }
          Rng rng = derive_rng(seed, {e, order[j], i, 0xA7u});
          v.push_back(augment::finetune_view(seq.images[i], rng, cfg.augment, false));
        }
        views.push_back(std::move(v));
      }
      opt.config.lr = cfg.cosine_schedule ? ad::cosine_annealing_lr(step, total, cfg.lr) : cfg.lr;
      rec.lr = opt.config.lr;
      ++step;
      auto mask = stack_rows<T>(ms, n_labels);
      bool any = false;
      for (T v : mask.data()) any = any || v != T(0);
      if (!any) continue;
      Rng fwd = derive_rng(seed, {e, b, 0xD0u});
      auto logits = mip_forward(model, batch, true, fwd, &views);
      auto loss = ad::bce_with_logits(logits, stack_rows<T>(ys, n_labels), mask);
      ad::zero_grad(params);
      ad::backward(loss);
      ad::optimizer_step(params, opt);
      loss_sum += double(loss.item());
    }
    const EpochRecord v = validate_mip(model, val, cfg.selection_label);
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
  if (!cfg.keep_best && !hist.epochs.empty()) {
    hist.best_epoch = hist.epochs.size() - 1;
    hist.best_val_auc = selection_score(hist.epochs.back());
  }
  nn::set_trainable<T>(model.encoder, true);
  return hist;
}

inline std::map<std::string, std::string> mip_meta(const MipConfig& c) {
  return {{"mip.cpe_dim", std::to_string(c.cpe_dim)},  {"mip.d_proj", std::to_string(c.d_proj)},
          {"mip.layers", std::to_string(c.layers)},    {"mip.heads", std::to_string(c.heads)},
          {"mip.ffn_mult", std::to_string(c.ffn_mult)}, {"mip.dropout", csv::format_double(c.dropout)},
          {"mip.p_drop", csv::format_double(c.p_drop)}, {"mip.pooling", to_string(c.pooling)},
          {"mip.freeze_encoder", c.freeze_encoder ? "1" : "0"}};
}

inline MipConfig mip_config_from_meta(const std::map<std::string, std::string>& m) {
  MipConfig c;
  c.cpe_dim = std::stoul(m.at("mip.cpe_dim"));
  c.d_proj = std::stoul(m.at("mip.d_proj"));
  c.layers = std::stoul(m.at("mip.layers"));
  c.heads = std::stoul(m.at("mip.heads"));
  c.ffn_mult = std::stoul(m.at("mip.ffn_mult"));
  c.dropout = std::stod(m.at("mip.dropout"));
  c.p_drop = std::stod(m.at("mip.p_drop"));
  c.pooling = pooling_from_string(m.at("mip.pooling"));
  c.freeze_encoder = m.at("mip.freeze_encoder") == "1";
  return c;
}

template <typename T>
ad::Checkpoint save_mip(MipModel<T>& model) {
  ad::Checkpoint ck;
  nn::save_state<T>(model, ck, "");
  auto meta = pretrain::encoder_meta(model.encoder.config());
  for (auto& [k, v] : layout_meta(model.layout)) meta[k] = v;
  for (auto& [k, v] : mip_meta(model.config)) meta[k] = v;
  meta["kind"] = "mip";
  meta["task"] = "mip";
  ck.set_meta(meta);
  return ck;
}

template <typename T>
MipModel<T> load_mip(const ad::Checkpoint& ck) {
  const auto meta = ck.meta();
  if (meta.count("kind") == 0 || meta.at("kind") != "mip") throw ContractError("checkpoint is not a multi-image model");
  Rng rng(0);
  MipModel<T> m(nn::ConvEncoder<T>(pretrain::encoder_from_meta(meta), rng), layout_from_meta(meta),
                mip_config_from_meta(meta), rng);
  nn::load_state<T>(m, ck, "");
  return m;
}

}  // namespace cxr::models
