#pragma once

#include <cstdint>
#include <vector>

#include "caae/tensor.hpp"

namespace caae {

// Bias-corrected Adam over an ordered list of tensors. Moment buffers are
// created lazily to match the parameter shapes; `step` counts completed
// updates and strictly increases.
template <typename T>
struct AdamState {
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    std::int64_t step = 0;
};

template <typename T>
struct AdamConfig {
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

// One in-place update from the tensors' grad buffers. A non-finite
// gradient raises before any parameter is touched.
template <typename T>
void adam_step(std::vector<Tensor<T>*> params, AdamState<T>& state, const AdamConfig<T>& cfg);

extern template struct AdamState<float>;
extern template struct AdamState<double>;
extern template void adam_step<float>(std::vector<Tensor<float>*>, AdamState<float>&, const AdamConfig<float>&);
extern template void adam_step<double>(std::vector<Tensor<double>*>, AdamState<double>&, const AdamConfig<double>&);

}  // namespace caae
