#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cxr/autodiff/checkpoint.hpp"
#include "cxr/autodiff/conv.hpp"
#include "cxr/autodiff/ops.hpp"
#include "cxr/common/rng.hpp"

namespace cxr::nn {

using ad::NormMode;
using ad::Shape;
using ad::Tensor;

enum class StateKind { parameter, buffer };

// Every module exposes
//   template <class F> void visit(const std::string& prefix, F&& f)
// calling f(name, tensor, kind) for each parameter and buffer in a fixed order.
// Names are hierarchical ("encoder.block0.conv.weight").

inline std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

// Kaiming-uniform with fan-in scaling for ReLU networks: U(-b, b), b = sqrt(6 / fan_in).
template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / double(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : t.data()) v = T(u(rng));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> param_zeros(Shape shape) {
  auto t = Tensor<T>::zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> param_ones(Shape shape) {
  auto t = Tensor<T>::ones(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng)
      : weight(kaiming_uniform<T>({out, in}, in, rng)), bias(param_zeros<T>({out})) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return ad::linear(x, weight, bias); }

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(join(prefix, "weight"), weight, StateKind::parameter);
    f(join(prefix, "bias"), bias, StateKind::parameter);
  }

  Tensor<T> weight, bias;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding,
         Rng& rng)
      : weight(kaiming_uniform<T>({out, in, kernel, kernel}, in * kernel * kernel, rng)),
        stride_(stride),
        padding_(padding) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return ad::conv2d(x, weight, stride_, padding_); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(join(prefix, "weight"), weight, StateKind::parameter);
  }

  Tensor<T> weight;

 private:
  std::size_t stride_ = 1, padding_ = 0;
};

template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels, ad::BatchNormOptions opt = {})
      : gamma(param_ones<T>({channels})),
        beta(param_zeros<T>({channels})),
        running_mean(Tensor<T>::zeros({channels})),
        running_var(Tensor<T>::ones({channels})),
        opt_(opt) {}

  Tensor<T> operator()(const Tensor<T>& x, NormMode mode) {
    return ad::batch_norm(x, gamma, beta, running_mean, running_var, mode, opt_);
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(join(prefix, "gamma"), gamma, StateKind::parameter);
    f(join(prefix, "beta"), beta, StateKind::parameter);
    f(join(prefix, "running_mean"), running_mean, StateKind::buffer);
    f(join(prefix, "running_var"), running_var, StateKind::buffer);
  }

  Tensor<T> gamma, beta, running_mean, running_var;

 private:
  ad::BatchNormOptions opt_;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t features)
      : gamma(param_ones<T>({features})), beta(param_zeros<T>({features})) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return ad::layer_norm(x, gamma, beta); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(join(prefix, "gamma"), gamma, StateKind::parameter);
    f(join(prefix, "beta"), beta, StateKind::parameter);
  }

  Tensor<T> gamma, beta;
};

// ---------------------------------------------------------------------------
// Whole-module helpers

template <typename T, class M>
std::vector<Tensor<T>> parameters(M& module, const std::string& prefix = "") {
  std::vector<Tensor<T>> out;
  module.visit(prefix, [&](const std::string&, Tensor<T>& t, StateKind k) {
    if (k == StateKind::parameter) out.push_back(t);
  });
  return out;
}

template <typename T, class M>
void set_trainable(M& module, bool on) {
  module.visit("", [&](const std::string&, Tensor<T>& t, StateKind k) {
    if (k == StateKind::parameter) t.set_requires_grad(on);
  });
}

template <typename T, class M>
void save_state(M& module, ad::Checkpoint& ck, const std::string& prefix) {
  module.visit(prefix, [&](const std::string& name, Tensor<T>& t, StateKind) { ck.put(name, t); });
}

template <typename T, class M>
void load_state(M& module, const ad::Checkpoint& ck, const std::string& prefix) {
  module.visit(prefix, [&](const std::string& name, Tensor<T>& t, StateKind) { ck.load_into(name, t); });
}

// Copies values (parameters and buffers) from src into dst, which must have
// the same architecture.
template <typename T, class M>
void copy_state(M& src, M& dst) {
  std::vector<Tensor<T>> from;
  src.visit("", [&](const std::string&, Tensor<T>& t, StateKind) { from.push_back(t); });
  std::size_t i = 0;
  dst.visit("", [&](const std::string& name, Tensor<T>& t, StateKind) {
    if (i >= from.size() || from[i].shape() != t.shape())
      throw DimensionError("copy_state: architecture mismatch at " + name);
    std::copy(from[i].data().begin(), from[i].data().end(), t.data().begin());
    ++i;
  });
}

// Raw bytes of every parameter (and optionally buffer), for exact comparisons.
template <typename T, class M>
std::vector<unsigned char> state_bytes(M& module, bool include_buffers = true) {
  std::vector<unsigned char> out;
  module.visit("", [&](const std::string&, Tensor<T>& t, StateKind k) {
    if (k == StateKind::buffer && !include_buffers) return;
    auto d = t.data();
    auto* p = reinterpret_cast<const unsigned char*>(d.data());
    out.insert(out.end(), p, p + d.size() * sizeof(T));
  });
  return out;
}

}  // namespace cxr::nn
