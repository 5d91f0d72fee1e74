#pragma once

// Brute-force reference implementations kept deliberately independent of
// the library's im2col/gemm path. Everything here is plain nested loops.

#include <cmath>
#include <cstdint>
#include <vector>

#include "caae/rng.hpp"
#include "caae/tensor.hpp"

namespace oracle {

template <typename T>
caae::Tensor<T> random_tensor(const caae::Shape& shape, caae::Rng& rng, double lo = -1.0, double hi = 1.0) {
    caae::Tensor<T> t(shape);
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

// direct seven-loop convolution, NCHW x OIHW
template <typename T>
caae::Tensor<T> conv2d(const caae::Tensor<T>& x, const caae::Tensor<T>& k, const caae::Tensor<T>& b, int stride,
                       int pad) {
    const int n = x.shape[0], ci = x.shape[1], h = x.shape[2], w = x.shape[3];
    const int co = k.shape[0], kh = k.shape[2], kw = k.shape[3];
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (w + 2 * pad - kw) / stride + 1;
    caae::Tensor<T> y({n, co, ho, wo});
    for (int img = 0; img < n; ++img)
        for (int o = 0; o < co; ++o)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    T acc = b.data[o];
                    for (int c = 0; c < ci; ++c)
                        for (int ki = 0; ki < kh; ++ki)
                            for (int kj = 0; kj < kw; ++kj) {
                                const int iy = oy * stride - pad + ki;
                                const int ix = ox * stride - pad + kj;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                acc += x.at({img, c, iy, ix}) * k.at({o, c, ki, kj});
                            }
                    y.at({img, o, oy, ox}) = acc;
                }
    return y;
}

// direct scatter-accumulate transposed convolution; input lives on the
// conv-output side (N x O x H' x W'), kernel is shared OIHW, result is
// N x I x H x W with H = (H'-1)*s + kh - 2p
template <typename T>
caae::Tensor<T> conv_transpose2d(const caae::Tensor<T>& x, const caae::Tensor<T>& k, const caae::Tensor<T>& b,
                                 int stride, int pad) {
    const int n = x.shape[0], co = x.shape[1], ho = x.shape[2], wo = x.shape[3];
    const int ci = k.shape[1], kh = k.shape[2], kw = k.shape[3];
    const int h = (ho - 1) * stride + kh - 2 * pad;
    const int w = (wo - 1) * stride + kw - 2 * pad;
    caae::Tensor<T> y({n, ci, h, w});
    for (int img = 0; img < n; ++img)
        for (int c = 0; c < ci; ++c)
            for (int iy = 0; iy < h; ++iy)
                for (int ix = 0; ix < w; ++ix) y.at({img, c, iy, ix}) = b.data[c];
    for (int img = 0; img < n; ++img)
        for (int o = 0; o < co; ++o)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    const T v = x.at({img, o, oy, ox});
                    for (int c = 0; c < ci; ++c)
                        for (int ki = 0; ki < kh; ++ki)
                            for (int kj = 0; kj < kw; ++kj) {
                                const int iy = oy * stride - pad + ki;
                                const int ix = ox * stride - pad + kj;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                y.at({img, c, iy, ix}) += v * k.at({o, c, ki, kj});
                            }
                }
    return y;
}

// triple-loop affine map
template <typename T>
caae::Tensor<T> dense(const caae::Tensor<T>& x, const caae::Tensor<T>& w, const caae::Tensor<T>& b) {
    const int n = x.shape[0], f = x.shape[1], g = w.shape[1];
    caae::Tensor<T> y({n, g});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < g; ++j) {
            T acc = b.data[j];
            for (int p = 0; p < f; ++p) acc += x.at({i, p}) * w.at({p, j});
            y.at({i, j}) = acc;
        }
    return y;
}

template <typename T>
T inner(const caae::Tensor<T>& a, const caae::Tensor<T>& b) {
    T s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

template <typename T>
double max_abs_diff(const caae::Tensor<T>& a, const caae::Tensor<T>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
    return m;
}

// independently coded Adam recurrence for one flat parameter vector
struct AdamRef {
    std::vector<double> m, v;
    long long t = 0;

    void step(std::vector<double>& w, const std::vector<double>& g, double lr, double b1, double b2, double eps) {
        if (m.empty()) {
            m.assign(w.size(), 0.0);
            v.assign(w.size(), 0.0);
        }
        ++t;
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / (1.0 - std::pow(b1, static_cast<double>(t)));
            const double vhat = v[i] / (1.0 - std::pow(b2, static_cast<double>(t)));
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
};

}  // namespace oracle
