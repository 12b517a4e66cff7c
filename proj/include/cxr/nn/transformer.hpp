#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cxr/nn/layers.hpp"

namespace cxr::nn {

struct TransformerConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t ffn_mult = 4;
  double dropout = 0.5;
};

// Bidirectional multi-head self-attention over one sequence [n, d_model].
template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t d_model, std::size_t heads, double dropout, Rng& rng)
      : q_(d_model, d_model, rng),
        k_(d_model, d_model, rng),
        v_(d_model, d_model, rng),
        out_(d_model, d_model, rng),
        heads_(heads),
        dropout_(dropout) {
    if (heads == 0 || d_model % heads != 0)
      throw ContractError("attention: d_model " + std::to_string(d_model) +
                          " not divisible by heads " + std::to_string(heads));
  }

  Tensor<T> operator()(const Tensor<T>& x, bool training, Rng& rng) const {
    const std::size_t d = x.dim(1), dh = d / heads_;
    const T inv_sqrt = T(1) / std::sqrt(T(dh));
    auto q = q_(x), k = k_(x), v = v_(x);
    std::vector<Tensor<T>> per_head;
    per_head.reserve(heads_);
    for (std::size_t h = 0; h < heads_; ++h) {
      auto qh = ad::slice_cols(q, h * dh, (h + 1) * dh);
      auto kh = ad::slice_cols(k, h * dh, (h + 1) * dh);
      auto vh = ad::slice_cols(v, h * dh, (h + 1) * dh);
      auto attn = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt));
      attn = ad::dropout(attn, dropout_, training, rng);
      per_head.push_back(ad::matmul(attn, vh));
    }
    return out_(heads_ == 1 ? per_head[0] : ad::concat_cols(per_head));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    q_.visit(join(prefix, "q"), f);
    k_.visit(join(prefix, "k"), f);
    v_.visit(join(prefix, "v"), f);
    out_.visit(join(prefix, "out"), f);
  }

 private:
  Linear<T> q_, k_, v_, out_;
  std::size_t heads_ = 1;
  double dropout_ = 0.0;
};

// Post-norm encoder layer: x = LN(x + Drop(Attn(x))); x = LN(x + Drop(FFN(x))).
template <typename T>
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(const TransformerConfig& cfg, Rng& rng)
      : attn_(cfg.d_model, cfg.heads, cfg.dropout, rng),
        ln1_(cfg.d_model),
        ln2_(cfg.d_model),
        ff1_(cfg.d_model, cfg.d_model * cfg.ffn_mult, rng),
        ff2_(cfg.d_model * cfg.ffn_mult, cfg.d_model, rng),
        dropout_(cfg.dropout) {}

  Tensor<T> operator()(const Tensor<T>& x, bool training, Rng& rng) const {
    auto a = ad::dropout(attn_(x, training, rng), dropout_, training, rng);
    auto h = ln1_(ad::add(x, a));
    auto f = ff2_(ad::dropout(ad::relu(ff1_(h)), dropout_, training, rng));
    f = ad::dropout(f, dropout_, training, rng);
    return ln2_(ad::add(h, f));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    attn_.visit(join(prefix, "attn"), f);
    ln1_.visit(join(prefix, "ln1"), f);
    ln2_.visit(join(prefix, "ln2"), f);
    ff1_.visit(join(prefix, "ff1"), f);
    ff2_.visit(join(prefix, "ff2"), f);
  }

 private:
  MultiHeadAttention<T> attn_;
  LayerNorm<T> ln1_, ln2_;
  Linear<T> ff1_, ff2_;
  double dropout_ = 0.0;
};

template <typename T>
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(const TransformerConfig& cfg, Rng& rng) : cfg_(cfg) {
    for (std::size_t i = 0; i < cfg.layers; ++i) layers_.emplace_back(cfg, rng);
  }

  // [n, d_model] -> [n, d_model]
  Tensor<T> operator()(const Tensor<T>& x, bool training, Rng& rng) const {
    Tensor<T> h = x;
    for (const auto& layer : layers_) h = layer(h, training, rng);
    return h;
  }

  const TransformerConfig& config() const { return cfg_; }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i].visit(join(prefix, "layer" + std::to_string(i)), f);
  }

 private:
  TransformerConfig cfg_;
  std::vector<TransformerLayer<T>> layers_;
};

}  // namespace cxr::nn
