#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "cxr/augment/transforms.hpp"
#include "cxr/autodiff/loss.hpp"
#include "cxr/autodiff/optim.hpp"
#include "cxr/autodiff/optim_io.hpp"
#include "cxr/nn/encoder.hpp"

namespace cxr::pretrain {

using ad::Tensor;
using nn::StateKind;

struct PretrainConfig {
  double lr = 0.1;
  std::size_t feature_dim = 128;
  std::size_t queue_size = 1024;
  double tau = 0.2;
  double momentum = 0.999;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-4;
  bool cosine_schedule = true;
  // Batch-norm groups per step. With more than one group the key batch is
  // shuffled before grouping (shuffled batch norm), so query and key
  // statistics come from different sample subsets. 1 disables it.
  std::size_t bn_groups = 1;
  // Batch norm between the head's hidden layer and its relu.
  bool head_bn = true;
  nn::EncoderConfig encoder;
  augment::AugmentConfig augment;

  void validate() const {
    if (!(tau > 0.0)) throw ContractError("pretrain: tau must be positive");
    if (!(momentum >= 0.0 && momentum <= 1.0)) throw ContractError("pretrain: momentum must lie in [0,1]");
    if (batch_size == 0) throw ContractError("pretrain: batch size must be positive");
    if (queue_size < batch_size || queue_size % batch_size != 0)
      throw ContractError("pretrain: queue size must be a multiple of the batch size");
    if (feature_dim != 64 && feature_dim != 128 && feature_dim != 256)
      throw ContractError("pretrain: feature dim must be 64, 128 or 256");
    if (lr < 0.0) throw ContractError("pretrain: negative learning rate");
    if (bn_groups == 0 || batch_size % bn_groups != 0)
      throw ContractError("pretrain: batch size must be a multiple of bn_groups");
    augment.validate();
  }
};

// Encoder followed by the projection head: pooled embedding -> fc1 [-> bn] ->
// relu -> fc2, rows L2-normalized.
template <typename T>
class ProjectionNet {
 public:
  ProjectionNet() = default;
  ProjectionNet(const nn::EncoderConfig& enc, std::size_t feature_dim, Rng& rng, bool head_bn = false)
      : encoder(enc, rng),
        fc1(encoder.embedding_dim(), encoder.embedding_dim(), rng),
        fc2(encoder.embedding_dim(), feature_dim, rng),
        head_bn(head_bn) {
    if (head_bn) bn = nn::BatchNorm<T>(encoder.embedding_dim());
  }

  Tensor<T> operator()(const Tensor<T>& x, ad::NormMode mode) {
    auto h = fc1(encoder(x, mode));
    if (head_bn) h = bn(h, mode);
    return ad::l2_normalize_rows(fc2(ad::relu(h)));
  }

  std::size_t feature_dim() const { return fc2.out_features(); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    encoder.visit(nn::join(prefix, "encoder"), f);
    fc1.visit(nn::join(prefix, "head.fc1"), f);
    if (head_bn) bn.visit(nn::join(prefix, "head.bn"), f);
    fc2.visit(nn::join(prefix, "head.fc2"), f);
  }

  nn::ConvEncoder<T> encoder;
  nn::Linear<T> fc1, fc2;
  nn::BatchNorm<T> bn;
  bool head_bn = false;
};

template <typename T>
struct MoCoState {
  ProjectionNet<T> query;
  ProjectionNet<T> key;  // momentum encoder, never receives gradients
  Tensor<T> queue;       // [K, C], unit rows
  std::size_t queue_ptr = 0;
  double tau = 0.2;
  double m = 0.999;
  ad::OptimizerState<T> opt;

  std::size_t queue_size() const { return queue.dim(0); }
};

template <typename T>
MoCoState<T> make_moco_state(const PretrainConfig& cfg, Rng& rng) {
  cfg.validate();
  MoCoState<T> st;
  st.query = ProjectionNet<T>(cfg.encoder, cfg.feature_dim, rng, cfg.head_bn);
  st.key = ProjectionNet<T>(cfg.encoder, cfg.feature_dim, rng, cfg.head_bn);
  nn::copy_state<T>(st.query, st.key);
  nn::set_trainable<T>(st.key, false);
  Tensor<T> q({cfg.queue_size, cfg.feature_dim});
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : q.data()) v = T(n(rng));
  st.queue = ad::l2_normalize_rows(q).detach();
  st.tau = cfg.tau;
  st.m = cfg.momentum;
  ad::OptimizerConfig oc;
  oc.kind = ad::OptimizerKind::sgd_momentum;
  oc.lr = cfg.lr;
  oc.momentum = cfg.sgd_momentum;
  oc.weight_decay = cfg.weight_decay;
  st.opt = ad::OptimizerState<T>(oc);
  return st;
}

// Representation of a single image (already at the network's input size).
template <typename T>
std::vector<T> encode_and_project(ProjectionNet<T>& net, const augment::Image& img) {
  auto r = net(augment::to_batch<T>({img}), ad::NormMode::eval_frozen);
  return {r.data().begin(), r.data().end()};
}

template <typename T>
struct InfoNce {
  Tensor<T> loss;
  Tensor<T> logits;  // [B, K+1], column 0 is the positive
};

// Cross-entropy over K+1 logits (positive first, then the queued keys),
// all scaled by 1/tau.
template <typename T>
InfoNce<T> info_nce_loss(const Tensor<T>& r_q, const Tensor<T>& r_k, const Tensor<T>& queue, double tau) {
  if (!(tau > 0.0)) throw ContractError("info_nce_loss: tau must be positive");
  if (r_q.ndim() != 2 || r_k.shape() != r_q.shape() || queue.ndim() != 2 || queue.dim(1) != r_q.dim(1))
    throw DimensionError("info_nce_loss: r_q, r_k [B,C] and queue [K,C] must agree");
  auto pos = ad::row_dot(r_q, r_k);
  auto neg = ad::matmul_nt(r_q, queue);
  auto logits = ad::scale(ad::concat_cols<T>({pos, neg}), T(1.0 / tau));
  auto loss = ad::cross_entropy(logits, std::vector<std::size_t>(r_q.dim(0), 0));
  return {loss, logits};
}

// theta_k <- m * theta_k + (1 - m) * theta_q for parameters. Batch-norm running
// statistics are buffers and stay with the network that computed them.
template <typename T>
void momentum_update(ProjectionNet<T>& query, ProjectionNet<T>& key, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ContractError("momentum_update: m must lie in [0,1]");
  std::vector<Tensor<T>> q;
  query.visit("", [&](const std::string&, Tensor<T>& t, StateKind k) {
    if (k == StateKind::parameter) q.push_back(t);
  });
  std::size_t i = 0;
  key.visit("", [&](const std::string& name, Tensor<T>& t, StateKind k) {
    if (k != StateKind::parameter) return;
    if (i >= q.size() || q[i].shape() != t.shape()) throw ContractError("momentum_update: shape mismatch at " + name);
    if (m == 1.0) {
      ++i;
      return;
    }
    auto dst = t.data();
    auto src = q[i].data();
    const T a = T(m), b = T(1.0 - m);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = a * dst[j] + b * src[j];
    ++i;
  });
  if (i != q.size()) throw ContractError("momentum_update: parameter count mismatch");
}

// Writes the batch of keys into rows [ptr, ptr+B) and advances ptr modulo K.
template <typename T>
void enqueue(Tensor<T>& queue, std::size_t& ptr, const Tensor<T>& keys) {
  const std::size_t k = queue.dim(0), c = queue.dim(1);
  if (keys.ndim() != 2 || keys.dim(1) != c) throw DimensionError("enqueue: key width does not match queue");
  const std::size_t b = keys.dim(0);
  if (b == 0 || k % b != 0) throw ContractError("enqueue: batch size must divide the queue size");
  if (ptr % b != 0) throw ContractError("enqueue: queue pointer not aligned to the batch size");
  std::copy(keys.data().begin(), keys.data().end(), queue.data().begin() + ptr * c);
  ptr = (ptr + b) % k;
}

struct EpochStats {
  double mean_loss = 0.0;
  double top1 = 0.0;  // fraction of queries whose positive logit is the largest
  double lr = 0.0;
  std::size_t steps = 0;
};

// One pass over the corpus in seeded random order. Incomplete final batches are
// dropped. `step_offset` and `total_steps` place the epoch on the cosine
// schedule; pass total_steps = 0 for a constant learning rate.
template <typename T>
EpochStats pretrain_epoch(MoCoState<T>& st, const std::vector<augment::Image>& corpus, const PretrainConfig& cfg,
                          std::size_t epoch, std::uint64_t seed, long step_offset = 0, long total_steps = 0) {
  const std::size_t b = cfg.batch_size;
  if (corpus.empty()) throw InvalidInputError("pretrain_epoch: empty corpus");
  if (corpus.size() < b)
    throw InvalidInputError("pretrain_epoch: corpus of " + std::to_string(corpus.size()) +
                            " images is smaller than one batch of " + std::to_string(b));
  if (st.queue_size() % b != 0) throw ContractError("pretrain_epoch: batch size must divide the queue size");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = derive_rng(seed, {epoch, 0xC0FFEEu});
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  auto params = nn::parameters<T>(st.query);
  EpochStats stats;
  const std::size_t batches = corpus.size() / b;
  double loss_sum = 0.0, correct = 0.0;
  for (std::size_t bi = 0; bi < batches; ++bi) {
    std::vector<augment::Image> qs, ks;
    qs.reserve(b);
    ks.reserve(b);
    for (std::size_t j = 0; j < b; ++j) {
      const std::size_t idx = order[bi * b + j];
      Rng rng = derive_rng(seed, {epoch, idx});
      auto [q, k] = augment::make_query_key_pair(corpus[idx], rng, cfg.augment);
      qs.push_back(std::move(q));
      ks.push_back(std::move(k));
    }
    const long step = step_offset + long(bi);
    st.opt.config.lr = total_steps > 0 ? ad::cosine_annealing_lr(std::min(step, total_steps), total_steps, cfg.lr)
                                       : cfg.lr;
    stats.lr = st.opt.config.lr;

    const std::size_t g = cfg.bn_groups;
    Tensor<T> r_q, r_k;
    if (g <= 1) {
      r_q = st.query(augment::to_batch<T>(qs), ad::NormMode::train);
      r_k = st.key(augment::to_batch<T>(ks), ad::NormMode::train).detach();
    } else {
      std::vector<std::size_t> perm(b), inv(b);
      std::iota(perm.begin(), perm.end(), 0);
      Rng perm_rng = derive_rng(seed, {epoch, bi, 0x5Bu});
      std::shuffle(perm.begin(), perm.end(), perm_rng);
      for (std::size_t j = 0; j < b; ++j) inv[perm[j]] = j;
      std::vector<Tensor<T>> q_parts, k_parts;
      const std::size_t per = b / g;
      for (std::size_t grp = 0; grp < g; ++grp) {
        std::vector<augment::Image> qg(qs.begin() + long(grp * per), qs.begin() + long((grp + 1) * per)), kg;
        for (std::size_t j = grp * per; j < (grp + 1) * per; ++j) kg.push_back(ks[perm[j]]);
        q_parts.push_back(st.query(augment::to_batch<T>(qg), ad::NormMode::train));
        k_parts.push_back(st.key(augment::to_batch<T>(kg), ad::NormMode::train).detach());
      }
      r_q = ad::concat_rows(q_parts);
      r_k = ad::gather_rows(ad::concat_rows(k_parts), inv).detach();
    }
    auto nce = info_nce_loss(r_q, r_k, st.queue, st.tau);
    ad::zero_grad(params);
    ad::backward(nce.loss);
    ad::optimizer_step(params, st.opt);
    momentum_update(st.query, st.key, st.m);
    enqueue(st.queue, st.queue_ptr, r_k);

    loss_sum += double(nce.loss.item());
    const std::size_t cols = nce.logits.dim(1);
    for (std::size_t i = 0; i < b; ++i) {
      const auto row = nce.logits.data().subspan(i * cols, cols);
      if (std::max_element(row.begin(), row.end()) == row.begin()) correct += 1.0;
    }
  }
  stats.steps = batches;
  stats.mean_loss = loss_sum / double(batches);
  stats.top1 = correct / double(batches * b);
  return stats;
}

template <typename T>
struct PretrainResult {
  MoCoState<T> state;
  std::vector<EpochStats> history;
};

// Full MoCo run with a per-step cosine schedule.
template <typename T>
PretrainResult<T> pretrain_moco(const std::vector<augment::Image>& corpus, const PretrainConfig& cfg,
                                std::uint64_t seed,
                                const std::function<void(std::size_t, const EpochStats&)>& on_epoch = {}) {
  Rng init = derive_rng(seed, {0x1A17u});
  PretrainResult<T> res{make_moco_state<T>(cfg, init), {}};
  const long per_epoch = long(corpus.size() / std::max<std::size_t>(cfg.batch_size, 1));
  const long total = cfg.cosine_schedule ? per_epoch * long(cfg.epochs) : 0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    res.history.push_back(pretrain_epoch(res.state, corpus, cfg, e, seed, long(e) * per_epoch, total));
    if (on_epoch) on_epoch(e, res.history.back());
  }
  return res;
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (auto x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

inline std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const std::string tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      out.push_back(std::stoul(tok));
    } catch (const std::exception&) {
      throw ParseError("bad size list '" + s + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline std::map<std::string, std::string> encoder_meta(const nn::EncoderConfig& e) {
  return {{"encoder.widths", join_sizes(e.widths)},
          {"encoder.in_channels", std::to_string(e.in_channels)},
          {"encoder.kernel", std::to_string(e.kernel)},
          {"encoder.stride", std::to_string(e.stride)}};
}

inline nn::EncoderConfig encoder_from_meta(const std::map<std::string, std::string>& m) {
  auto get = [&](const std::string& k) {
    auto it = m.find(k);
    if (it == m.end()) throw IoError("checkpoint metadata lacks '" + k + "'");
    return it->second;
  };
  nn::EncoderConfig e;
  e.widths = split_sizes(get("encoder.widths"));
  e.in_channels = std::stoul(get("encoder.in_channels"));
  e.kernel = std::stoul(get("encoder.kernel"));
  e.stride = std::stoul(get("encoder.stride"));
  return e;
}

// Reserved names: query network under "encoder"/"head", momentum network
// under "momentum", the queue and scalars under "moco", optimizer under "optim".
template <typename T>
ad::Checkpoint save_moco(MoCoState<T>& st, const PretrainConfig& cfg) {
  ad::Checkpoint ck;
  nn::save_state<T>(st.query, ck, "");
  nn::save_state<T>(st.key, ck, "momentum");
  ck.put("moco.queue", st.queue);
  ck.put_scalar("moco.queue_ptr", double(st.queue_ptr));
  ck.put_scalar("moco.tau", st.tau);
  ck.put_scalar("moco.m", st.m);
  ad::save_optimizer(st.opt, ck, "optim");
  auto meta = encoder_meta(cfg.encoder);
  meta["kind"] = "moco";
  meta["feature_dim"] = std::to_string(cfg.feature_dim);
  meta["head_bn"] = st.query.head_bn ? "1" : "0";
  ck.set_meta(meta);
  return ck;
}

template <typename T>
MoCoState<T> load_moco(const ad::Checkpoint& ck, const PretrainConfig& cfg) {
  PretrainConfig c = cfg;
  const auto meta = ck.meta();
  c.encoder = encoder_from_meta(meta);
  c.feature_dim = std::stoul(meta.at("feature_dim"));
  if (auto it = meta.find("head_bn"); it != meta.end()) c.head_bn = it->second == "1";
  c.queue_size = ck.entry("moco.queue").shape.at(0);
  if (c.queue_size % c.batch_size != 0) c.batch_size = c.queue_size;
  Rng rng(0);
  MoCoState<T> st = make_moco_state<T>(c, rng);
  nn::load_state<T>(st.query, ck, "");
  nn::load_state<T>(st.key, ck, "momentum");
  ck.load_into("moco.queue", st.queue);
  st.queue_ptr = static_cast<std::size_t>(ck.scalar("moco.queue_ptr"));
  st.tau = ck.scalar("moco.tau");
  st.m = ck.scalar("moco.m");
  ad::load_optimizer(st.opt, ck, "optim");
  return st;
}

}  // namespace cxr::pretrain
