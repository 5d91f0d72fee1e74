#include "caae/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace caae {

template <typename T>
void adam_step(std::vector<Tensor<T>*> params, AdamState<T>& state, const AdamConfig<T>& cfg) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i]->size(), T(0));
            state.v[i].assign(params[i]->size(), T(0));
        }
    }
    if (state.m.size() != params.size())
        throw std::invalid_argument("adam_step: state tracks " + std::to_string(state.m.size()) +
                                    " tensors, got " + std::to_string(params.size()));

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i];
        if (state.m[i].size() != p.size())
            throw std::invalid_argument("adam_step: moment shape mismatch at tensor " + std::to_string(i));
        if (p.grad.size() != p.size())
            throw std::invalid_argument("adam_step: tensor " + std::to_string(i) + " has no gradient");
        if (!p.grad_finite())
            throw std::runtime_error("adam_step: non-finite gradient at tensor " + std::to_string(i) +
                                     "; parameters untouched");
    }

    const std::int64_t t = state.step + 1;
    const T bc1 = T(1) - std::pow(cfg.beta1, static_cast<T>(t));
    const T bc2 = T(1) - std::pow(cfg.beta2, static_cast<T>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i];
        T* m = state.m[i].data();
        T* v = state.v[i].data();
        const T* g = p.grad.data();
        T* w = p.data.data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (T(1) - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (T(1) - cfg.beta2) * g[j] * g[j];
            const T mhat = m[j] / bc1;
            const T vhat = v[j] / bc2;
            w[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
    state.step = t;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::vector<Tensor<float>*>, AdamState<float>&, const AdamConfig<float>&);
template void adam_step<double>(std::vector<Tensor<double>*>, AdamState<double>&, const AdamConfig<double>&);

}  // namespace caae
