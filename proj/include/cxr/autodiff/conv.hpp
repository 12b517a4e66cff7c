#pragma once

#include <cmath>
#include <vector>

#include "cxr/autodiff/ops.hpp"

namespace cxr::ad {

struct Conv2dGeometry {
  std::size_t batch, in_ch, height, width;
  std::size_t out_ch, kh, kw;
  std::size_t stride, padding;
  std::size_t out_h, out_w;

  std::size_t patch() const { return in_ch * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

namespace detail {

// Unfolds one image [C,H,W] into columns [C*kh*kw, out_h*out_w].
template <typename T>
void im2col(const T* img, const Conv2dGeometry& g, T* cols) {
  const std::size_t np = g.positions();
  for (std::size_t c = 0; c < g.in_ch; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = cols + ((c * g.kh + ky) * g.kw + kx) * np;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.height) &&
                                ix < static_cast<long>(g.width);
            row[oy * g.out_w + ox] = inside ? img[(c * g.height + iy) * g.width + ix] : T(0);
          }
        }
      }
}

// Adjoint of im2col: scatters column gradients back onto the image gradient.
template <typename T>
void col2im_add(const T* cols, const Conv2dGeometry& g, T* img) {
  const std::size_t np = g.positions();
  for (std::size_t c = 0; c < g.in_ch; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + ((c * g.kh + ky) * g.kw + kx) * np;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
            if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
            img[(c * g.height + iy) * g.width + ix] += row[oy * g.out_w + ox];
          }
        }
      }
}

}  // namespace detail

// Cross-correlation of input [B,C,H,W] with kernel [O,C,kh,kw] (no bias).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride = 1,
                 std::size_t padding = 0) {
  using namespace detail;
  require(input.ndim() == 4, "conv2d: input must be [B,C,H,W], got " + shape_str(input.shape()));
  require(kernel.ndim() == 4, "conv2d: kernel must be [O,C,kh,kw], got " + shape_str(kernel.shape()));
  require(kernel.dim(1) == input.dim(1), "conv2d: channel mismatch " + shape_str(input.shape()) +
                                             " vs kernel " + shape_str(kernel.shape()));
  if (stride == 0) throw ContractError("conv2d: stride must be positive");
  Conv2dGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernel.dim(0),
                   kernel.dim(2), kernel.dim(3), stride, padding, 0, 0};
  require(g.kh <= g.height + 2 * padding && g.kw <= g.width + 2 * padding,
          "conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
              shape_str(input.shape()));
  g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;

  const std::size_t patch = g.patch(), np = g.positions();
  const std::size_t in_img = g.in_ch * g.height * g.width, out_img = g.out_ch * np;
  std::vector<T> cols(g.batch * patch * np);
  std::vector<T> out(g.batch * out_img);
  ConstMatMap<T> wm(kernel.data().data(), g.out_ch, patch);
  for (std::size_t b = 0; b < g.batch; ++b) {
    T* cb = cols.data() + b * patch * np;
    im2col(input.data().data() + b * in_img, g, cb);
    MatMap<T>(out.data() + b * out_img, g.out_ch, np).noalias() = wm * ConstMatMap<T>(cb, patch, np);
  }
  if (!input.requires_grad() && !kernel.requires_grad()) cols.clear();
  return make_result<T>(
      {g.batch, g.out_ch, g.out_h, g.out_w}, std::move(out), {&input, &kernel},
      [g, cols = std::move(cols)](Node<T>& self) {
        const std::size_t patch = g.patch(), np = g.positions();
        const std::size_t in_img = g.in_ch * g.height * g.width, out_img = g.out_ch * np;
        auto& pin = *self.parents[0];
        auto& pk = *self.parents[1];
        ConstMatMap<T> wm(pk.data.data(), g.out_ch, patch);
        std::vector<T> dcols(pin.requires_grad ? patch * np : 0);
        for (std::size_t b = 0; b < g.batch; ++b) {
          ConstMatMap<T> dout(self.grad.data() + b * out_img, g.out_ch, np);
          ConstMatMap<T> cb(cols.data() + b * patch * np, patch, np);
          if (pk.requires_grad)
            MatMap<T>(pk.grad_buffer().data(), g.out_ch, patch).noalias() += dout * cb.transpose();
          if (pin.requires_grad) {
            MatMap<T>(dcols.data(), patch, np).noalias() = wm.transpose() * dout;
            col2im_add(dcols.data(), g, pin.grad_buffer().data() + b * in_img);
          }
        }
      });
}

enum class NormMode { train, eval_frozen };

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

// Per-channel normalization of [B,C,...]. Train mode uses batch statistics and
// folds them into running_mean/running_var; eval_frozen reads the running
// statistics and never writes them.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, NormMode mode,
                     BatchNormOptions opt = {}) {
  using namespace detail;
  require(input.ndim() >= 2, "batch_norm: input must be [B,C,...]");
  const std::size_t batch = input.dim(0), ch = input.dim(1);
  require(gamma.numel() == ch && beta.numel() == ch && running_mean.numel() == ch &&
              running_var.numel() == ch,
          "batch_norm: parameter length does not match channel count " + std::to_string(ch));
  const std::size_t spatial = batch == 0 ? 0 : input.numel() / (batch * ch);
  const std::size_t count = batch * spatial;
  if (mode == NormMode::train && count == 0)
    throw InvalidInputError("batch_norm: empty batch in train mode");

  const T eps = T(opt.eps);
  std::vector<T> mu(ch), invstd(ch);
  auto x = input.data();
  if (mode == NormMode::train) {
    for (std::size_t c = 0; c < ch; ++c) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = x.data() + (b * ch + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) s += p[i];
      }
      const double m = s / double(count);
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = x.data() + (b * ch + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) s2 += (p[i] - m) * (p[i] - m);
      }
      const double var = s2 / double(count);
      mu[c] = T(m);
      invstd[c] = T(1.0 / std::sqrt(var + opt.eps));
      const double unbiased = count > 1 ? var * double(count) / double(count - 1) : var;
      auto rm = running_mean.data();
      auto rv = running_var.data();
      rm[c] = T((1.0 - opt.momentum) * rm[c] + opt.momentum * m);
      rv[c] = T((1.0 - opt.momentum) * rv[c] + opt.momentum * unbiased);
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mu[c] = running_mean[c];
      invstd[c] = T(1) / std::sqrt(running_var[c] + eps);
    }
  }

  std::vector<T> xhat(input.numel()), out(input.numel());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t base = (b * ch + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        xhat[base + i] = (x[base + i] - mu[c]) * invstd[c];
        out[base + i] = gamma[c] * xhat[base + i] + beta[c];
      }
    }

  const bool train = mode == NormMode::train;
  return make_result<T>(
      input.shape(), std::move(out), {&input, &gamma, &beta},
      [batch, ch, spatial, count, train, xhat = std::move(xhat),
       invstd = std::move(invstd)](Node<T>& self) {
        const auto& gam = self.parents[1]->data;
        auto gx = parent_grad(self, 0);
        auto gg = parent_grad(self, 1);
        auto gb = parent_grad(self, 2);
        for (std::size_t c = 0; c < ch; ++c) {
          T sum_dy = T(0), sum_dy_xhat = T(0);
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * ch + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              sum_dy += self.grad[base + i];
              sum_dy_xhat += self.grad[base + i] * xhat[base + i];
            }
          }
          if (!gg.empty()) gg[c] += sum_dy_xhat;
          if (!gb.empty()) gb[c] += sum_dy;
          if (gx.empty()) continue;
          const T k = gam[c] * invstd[c];
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * ch + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              if (train) {
                gx[base + i] += k / T(count) *
                                (T(count) * self.grad[base + i] - sum_dy - xhat[base + i] * sum_dy_xhat);
              } else {
                gx[base + i] += k * self.grad[base + i];
              }
            }
          }
        }
      });
}

// [B,C,H,W] -> [B,C] by averaging over the spatial extent.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  detail::require(input.ndim() == 4, "global_avg_pool: input must be [B,C,H,W]");
  const std::size_t bc = input.dim(0) * input.dim(1), sp = input.dim(2) * input.dim(3);
  std::vector<T> out(bc, T(0));
  for (std::size_t i = 0; i < bc; ++i) {
    T s = T(0);
    for (std::size_t j = 0; j < sp; ++j) s += input[i * sp + j];
    out[i] = s / T(sp);
  }
  return detail::make_result<T>({input.dim(0), input.dim(1)}, std::move(out), {&input},
                                [bc, sp](detail::Node<T>& self) {
                                  auto g = detail::parent_grad(self, 0);
                                  for (std::size_t i = 0; i < bc; ++i)
                                    for (std::size_t j = 0; j < sp; ++j)
                                      g[i * sp + j] += self.grad[i] / T(sp);
                                });
}

}  // namespace cxr::ad
