#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "caae/graph.hpp"

namespace caae {

// Central-difference verification of reverse-mode gradients. `build`
// records the forward graph from the current parameter values and returns
// the scalar loss node; it is re-invoked for every perturbed evaluation,
// so it must read the parameters fresh each time. Runs in 64-bit only.
//
// Returns max over all parameter entries of
//   |analytic - central_difference| / max(1, |analytic|).
inline double grad_check(const std::function<Graph<double>::Id(Graph<double>&)>& build,
                         const std::vector<Tensor<double>*>& params, double h = 1e-5) {
    for (Tensor<double>* p : params) {
        p->requires_grad = true;
        p->zero_grad();
    }
    {
        Graph<double> g;
        auto loss = build(g);
        g.backward(loss);
    }

    auto eval = [&]() {
        Graph<double> g;
        return g.value(build(g)).data[0];
    };

    double worst = 0.0;
    for (Tensor<double>* p : params) {
        for (std::size_t j = 0; j < p->size(); ++j) {
            const double keep = p->data[j];
            p->data[j] = keep + h;
            const double up = eval();
            p->data[j] = keep - h;
            const double dn = eval();
            p->data[j] = keep;
            const double fd = (up - dn) / (2.0 * h);
            const double analytic = p->grad.empty() ? 0.0 : p->grad[j];
            const double err = std::abs(analytic - fd) / std::max(1.0, std::abs(analytic));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace caae
