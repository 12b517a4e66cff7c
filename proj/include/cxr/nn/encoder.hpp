#pragma once

#include <string>
#include <vector>

#include "cxr/nn/layers.hpp"

namespace cxr::nn {

// Stack of conv -> batch_norm -> relu blocks followed by global average
// pooling. Stands in for a DenseNet backbone at desk scale.
struct EncoderConfig {
  std::vector<std::size_t> widths{16, 32, 64, 128};
  std::size_t in_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 2;
};

template <typename T>
class ConvEncoder {
 public:
  ConvEncoder() = default;
  ConvEncoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.widths.empty()) throw ContractError("encoder needs at least one block");
    std::size_t in = cfg.in_channels;
    for (auto w : cfg.widths) {
      convs_.emplace_back(in, w, cfg.kernel, cfg.stride, cfg.kernel / 2, rng);
      norms_.emplace_back(w);
      in = w;
    }
  }

  // [B,C,H,W] -> [B, embedding_dim]
  Tensor<T> operator()(const Tensor<T>& x, NormMode mode) {
    Tensor<T> h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) h = ad::relu(norms_[i](convs_[i](h), mode));
    return ad::global_avg_pool(h);
  }

  std::size_t embedding_dim() const { return cfg_.widths.back(); }
  const EncoderConfig& config() const { return cfg_; }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      const std::string block = join(prefix, "block" + std::to_string(i));
      convs_[i].visit(join(block, "conv"), f);
      norms_[i].visit(join(block, "bn"), f);
    }
  }

 private:
  EncoderConfig cfg_;
  std::vector<Conv2d<T>> convs_;
  std::vector<BatchNorm<T>> norms_;
};

}  // namespace cxr::nn
