#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "cxr/autodiff/tensor.hpp"
#include "cxr/common/rng.hpp"

namespace cxr::ad {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

template <typename T>
void require_2d(const Tensor<T>& t, const char* op) {
  require(t.ndim() == 2, std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

// [M,K] x [K,N] -> [M,N]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  using namespace detail;
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  std::vector<T> out(m * n);
  MatMap<T>(out.data(), m, n).noalias() =
      ConstMatMap<T>(a.data().data(), m, k) * ConstMatMap<T>(b.data().data(), k, n);
  return make_result<T>({m, n}, std::move(out), {&a, &b}, [m, k, n](Node<T>& self) {
    ConstMatMap<T> dc(self.grad.data(), m, n);
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      MatMap<T>(pa.grad_buffer().data(), m, k).noalias() +=
          dc * ConstMatMap<T>(pb.data.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      MatMap<T>(pb.grad_buffer().data(), k, n).noalias() +=
          ConstMatMap<T>(pa.data.data(), m, k).transpose() * dc;
    }
  });
}

// [M,K] x [N,K]^T -> [M,N]
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  using namespace detail;
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  require(b.dim(1) == k, "matmul_nt: inner dimensions differ " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()) + "^T");
  std::vector<T> out(m * n);
  MatMap<T>(out.data(), m, n).noalias() =
      ConstMatMap<T>(a.data().data(), m, k) * ConstMatMap<T>(b.data().data(), n, k).transpose();
  return make_result<T>({m, n}, std::move(out), {&a, &b}, [m, k, n](Node<T>& self) {
    ConstMatMap<T> dc(self.grad.data(), m, n);
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      MatMap<T>(pa.grad_buffer().data(), m, k).noalias() +=
          dc * ConstMatMap<T>(pb.data.data(), n, k);
    }
    if (pb.requires_grad) {
      MatMap<T>(pb.grad_buffer().data(), n, k).noalias() +=
          dc.transpose() * ConstMatMap<T>(pa.data.data(), m, k);
    }
  });
}

// x[M,N] + b[N] broadcast over rows.
template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& b) {
  detail::require_2d(x, "add_row_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  detail::require(b.numel() == n, "add_row_bias: bias length " + std::to_string(b.numel()) +
                                      " != " + std::to_string(n));
  std::vector<T> out(x.data().begin(), x.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bd[j];
  return detail::make_result<T>(x.shape(), std::move(out), {&x, &b}, [m, n](detail::Node<T>& self) {
    if (auto gx = detail::parent_grad(self, 0); !gx.empty())
      for (std::size_t i = 0; i < m * n; ++i) gx[i] += self.grad[i];
    if (auto gb = detail::parent_grad(self, 1); !gb.empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
  });
}

// Fully connected layer with weight stored [out, in].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  return add_row_bias(matmul_nt(x, weight), bias);
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_2d(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  auto ad = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = ad[i * n + j];
  return detail::make_result<T>({n, m}, std::move(out), {&a}, [m, n](detail::Node<T>& self) {
    auto g = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (auto g = detail::parent_grad(self, p); !g.empty())
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    if (auto g = detail::parent_grad(self, 0); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    if (auto g = detail::parent_grad(self, 1); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    const auto& da = self.parents[0]->data;
    const auto& db = self.parents[1]->data;
    if (auto g = detail::parent_grad(self, 0); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * db[i];
    if (auto g = detail::parent_grad(self, 1); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * da[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  return detail::make_result<T>(a.shape(), std::move(out), {&a}, [s](detail::Node<T>& self) {
    auto g = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

enum class Activation { relu, sigmoid };

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
  return detail::make_result<T>(a.shape(), std::move(out), {&a}, [](detail::Node<T>& self) {
    const auto& x = self.parents[0]->data;
    auto g = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > T(0)) g[i] += self.grad[i];
  });
}

template <typename T>
T stable_sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  T e = std::exp(z);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(a[i]);
  return detail::make_result<T>(a.shape(), std::move(out), {&a}, [](detail::Node<T>& self) {
    auto g = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      T y = self.data[i];
      g[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Tensor<T> activation(const Tensor<T>& a, Activation kind) {
  return kind == Activation::relu ? relu(a) : sigmoid(a);
}

// Inverted dropout: survivors are scaled by 1/(1-p). Identity when not training.
template <typename T>
Tensor<T> dropout(const Tensor<T>& a, double p, bool training, Rng& rng) {
  if (!training || p <= 0.0) return a;
  if (p >= 1.0) throw ContractError("dropout probability must be < 1");
  std::vector<T> keep(a.numel());
  const T s = T(1.0 / (1.0 - p));
  std::bernoulli_distribution drop(p);
  for (auto& k : keep) k = drop(rng) ? T(0) : s;
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * keep[i];
  return detail::make_result<T>(a.shape(), std::move(out), {&a},
                                [keep = std::move(keep)](detail::Node<T>& self) {
                                  auto g = detail::parent_grad(self, 0);
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                    g[i] += self.grad[i] * keep[i];
                                });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = T(0);
  for (T v : a.data()) s += v;
  return detail::make_result<T>({}, {s}, {&a}, [](detail::Node<T>& self) {
    auto g = detail::parent_grad(self, 0);
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) throw InvalidInputError("mean of an empty tensor");
  return scale(sum(a), T(1) / T(a.numel()));
}

// [M,N] -> [1,N], summing over rows.
template <typename T>
Tensor<T> sum_rows(const Tensor<T>& a) {
  detail::require_2d(a, "sum_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(n, T(0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += a[i * n + j];
  return detail::make_result<T>({1, n}, std::move(out), {&a}, [m, n](detail::Node<T>& self) {
    auto g = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j];
  });
}

// Row-wise dot product of two [M,N] tensors -> [M,1].
template <typename T>
Tensor<T> row_dot(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_2d(a, "row_dot");
  detail::require_same_shape(a, b, "row_dot");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m, T(0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += a[i * n + j] * b[i * n + j];
  return detail::make_result<T>({m, 1}, std::move(out), {&a, &b}, [m, n](detail::Node<T>& self) {
    const auto& da = self.parents[0]->data;
    const auto& db = self.parents[1]->data;
    if (auto g = detail::parent_grad(self, 0); !g.empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i] * db[i * n + j];
    if (auto g = detail::parent_grad(self, 1); !g.empty())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i] * da[i * n + j];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  detail::require(numel_of(shape) == a.numel(),
                  "reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  return detail::make_result<T>(std::move(shape), std::vector<T>(a.data().begin(), a.data().end()),
                                {&a}, [](detail::Node<T>& self) {
                                  auto g = detail::parent_grad(self, 0);
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                                });
}

// Concatenate 2-D tensors along columns: [M,N1], [M,N2], ... -> [M, sum N].
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols of nothing");
  const std::size_t m = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_2d(p, "concat_cols");
    detail::require(p.dim(0) == m, "concat_cols: row counts differ");
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<T> out(m * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto d = parts[k].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(d.begin() + i * widths[k], widths[k], out.begin() + i * total + off);
    off += widths[k];
  }
  return detail::make_result<T>({m, total}, std::move(out), parts,
                                [m, total, widths](detail::Node<T>& self) {
                                  std::size_t off = 0;
                                  for (std::size_t k = 0; k < widths.size(); ++k) {
                                    if (auto g = detail::parent_grad(self, k); !g.empty())
                                      for (std::size_t i = 0; i < m; ++i)
                                        for (std::size_t j = 0; j < widths[k]; ++j)
                                          g[i * widths[k] + j] += self.grad[i * total + off + j];
                                    off += widths[k];
                                  }
                                });
}

// Concatenate along the leading dimension; trailing dimensions must agree.
template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<T> out;
  for (const auto& p : parts) {
    detail::require(p.ndim() >= 1 && Shape(p.shape().begin() + 1, p.shape().end()) == tail,
                    "concat_rows: trailing shapes differ");
    rows += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  return detail::make_result<T>(std::move(shape), std::move(out), parts, [](detail::Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      const std::size_t n = self.parents[k]->data.size();
      if (auto g = detail::parent_grad(self, k); !g.empty())
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      off += n;
    }
  });
}

// Select rows (leading-dimension slices) by index; repeated indices accumulate.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, std::vector<std::size_t> index) {
  detail::require(a.ndim() >= 1, "gather_rows on a scalar");
  const std::size_t row = a.numel() / std::max<std::size_t>(a.dim(0), 1);
  std::vector<T> out;
  out.reserve(index.size() * row);
  for (auto r : index) {
    detail::require(r < a.dim(0), "gather_rows: index out of range");
    out.insert(out.end(), a.data().begin() + r * row, a.data().begin() + (r + 1) * row);
  }
  Shape shape = a.shape();
  shape[0] = index.size();
  return detail::make_result<T>(std::move(shape), std::move(out), {&a},
                                [row, index = std::move(index)](detail::Node<T>& self) {
                                  auto g = detail::parent_grad(self, 0);
                                  for (std::size_t k = 0; k < index.size(); ++k)
                                    for (std::size_t j = 0; j < row; ++j)
                                      g[index[k] * row + j] += self.grad[k * row + j];
                                });
}

// Columns [begin, end) of a 2-D tensor.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  detail::require_2d(a, "slice_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  detail::require(begin <= end && end <= n, "slice_cols: bad range");
  const std::size_t w = end - begin;
  std::vector<T> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a[i * n + begin + j];
  return detail::make_result<T>({m, w}, std::move(out), {&a}, [m, n, w, begin](detail::Node<T>& self) {
    auto g = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += self.grad[i * w + j];
  });
}

// ---------------------------------------------------------------------------
// Normalizations

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  detail::require_2d(a, "softmax_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, a[i * n + j]);
    T s = T(0);
    for (std::size_t j = 0; j < n; ++j) s += out[i * n + j] = std::exp(a[i * n + j] - mx);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= s;
  }
  return detail::make_result<T>({m, n}, std::move(out), {&a}, [m, n](detail::Node<T>& self) {
    auto g = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i) {
      T dot = T(0);
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * self.data[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        g[i * n + j] += self.data[i * n + j] * (self.grad[i * n + j] - dot);
    }
  });
}

// Normalizes each row of a [M,N] tensor, then applies gamma[N], beta[N].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
  detail::require_2d(x, "layer_norm");
  const std::size_t m = x.dim(0), n = x.dim(1);
  detail::require(gamma.numel() == n && beta.numel() == n, "layer_norm: parameter length");
  std::vector<T> xhat(m * n), invstd(m), out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    T mu = T(0), var = T(0);
    for (std::size_t j = 0; j < n; ++j) mu += x[i * n + j];
    mu /= T(n);
    for (std::size_t j = 0; j < n; ++j) var += (x[i * n + j] - mu) * (x[i * n + j] - mu);
    var /= T(n);
    invstd[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (x[i * n + j] - mu) * invstd[i];
      out[i * n + j] = gamma[j] * xhat[i * n + j] + beta[j];
    }
  }
  return detail::make_result<T>(
      {m, n}, std::move(out), {&x, &gamma, &beta},
      [m, n, xhat = std::move(xhat), invstd = std::move(invstd)](detail::Node<T>& self) {
        const auto& g = self.parents[1]->data;
        auto gx = detail::parent_grad(self, 0);
        auto gg = detail::parent_grad(self, 1);
        auto gb = detail::parent_grad(self, 2);
        for (std::size_t i = 0; i < m; ++i) {
          T s1 = T(0), s2 = T(0);
          for (std::size_t j = 0; j < n; ++j) {
            T dxh = self.grad[i * n + j] * g[j];
            s1 += dxh;
            s2 += dxh * xhat[i * n + j];
            if (!gg.empty()) gg[j] += self.grad[i * n + j] * xhat[i * n + j];
            if (!gb.empty()) gb[j] += self.grad[i * n + j];
          }
          if (gx.empty()) continue;
          for (std::size_t j = 0; j < n; ++j) {
            T dxh = self.grad[i * n + j] * g[j];
            gx[i * n + j] += invstd[i] / T(n) * (T(n) * dxh - s1 - xhat[i * n + j] * s2);
          }
        }
      });
}

// Scales each row to unit L2 norm.
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps = T(1e-12)) {
  detail::require_2d(x, "l2_normalize_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<T> out(m * n), norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    T s = T(0);
    for (std::size_t j = 0; j < n; ++j) s += x[i * n + j] * x[i * n + j];
    norms[i] = std::max(std::sqrt(s), eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] / norms[i];
  }
  return detail::make_result<T>({m, n}, std::move(out), {&x},
                                [m, n, norms = std::move(norms)](detail::Node<T>& self) {
                                  auto g = detail::parent_grad(self, 0);
                                  for (std::size_t i = 0; i < m; ++i) {
                                    T dot = T(0);
                                    for (std::size_t j = 0; j < n; ++j)
                                      dot += self.grad[i * n + j] * self.data[i * n + j];
                                    for (std::size_t j = 0; j < n; ++j)
                                      g[i * n + j] += (self.grad[i * n + j] -
                                                       self.data[i * n + j] * dot) / norms[i];
                                  }
                                });
}

}  // namespace cxr::ad
