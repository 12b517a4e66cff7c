#pragma once

#include <string>

#include "cxr/autodiff/checkpoint.hpp"
#include "cxr/autodiff/optim.hpp"

namespace cxr::ad {

// Stores moment buffers and the step counter under `prefix`.
template <typename T>
void save_optimizer(const OptimizerState<T>& st, Checkpoint& ck, const std::string& prefix) {
  ck.put_scalar(prefix + ".step", double(st.step));
  ck.put_scalar(prefix + ".count", double(st.first.size()));
  for (std::size_t k = 0; k < st.first.size(); ++k) {
    ck.put_values<T>(prefix + ".first." + std::to_string(k), Shape{st.first[k].size()}, st.first[k]);
    if (k < st.second.size())
      ck.put_values<T>(prefix + ".second." + std::to_string(k), Shape{st.second[k].size()}, st.second[k]);
  }
}

template <typename T>
void load_optimizer(OptimizerState<T>& st, const Checkpoint& ck, const std::string& prefix) {
  st.step = static_cast<long>(ck.scalar(prefix + ".step"));
  const auto n = static_cast<std::size_t>(ck.scalar(prefix + ".count"));
  st.first.clear();
  st.second.clear();
  for (std::size_t k = 0; k < n; ++k) {
    st.first.push_back(ck.values<T>(prefix + ".first." + std::to_string(k)));
    const std::string sec = prefix + ".second." + std::to_string(k);
    if (ck.contains(sec)) st.second.push_back(ck.values<T>(sec));
  }
}

}  // namespace cxr::ad
