#include "caae/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace caae {

namespace {

void expect(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

int floor_div_out(int in, int pad, int k, int s) { return (in + 2 * pad - k) / s + 1; }

// Per-thread scratch buffers for im2col/transpose staging. Kernels churn
// through megabyte-sized temporaries every call; reusing high-water-mark
// buffers keeps the allocator out of the hot loop.
template <typename T>
std::vector<T>& scratch(int slot, std::size_t size) {
    thread_local std::array<std::vector<T>, 6> buffers;
    auto& buf = buffers[slot];
    if (buf.size() < size) buf.resize(size);
    return buf;
}

}  // namespace

ConvGeom conv2d_geom(const Shape& input, const Shape& kernel, const Shape& bias, int stride, int pad) {
    expect(input.size() == 4, "conv2d: input must be NCHW, got " + shape_str(input));
    expect(kernel.size() == 4, "conv2d: kernel must be OIHW, got " + shape_str(kernel));
    expect(bias.size() == 1, "conv2d: bias must be 1-d, got " + shape_str(bias));
    expect(stride >= 1, "conv2d: stride must be positive");
    expect(pad >= 0, "conv2d: padding must be non-negative");
    ConvGeom g{input[0], input[1], input[2], input[3], kernel[0], kernel[2], kernel[3], stride, pad, 0, 0};
    expect(kernel[1] == g.c_in, "conv2d: input has " + std::to_string(g.c_in) + " channels but kernel expects " +
                                    std::to_string(kernel[1]));
    expect(bias[0] == g.c_out, "conv2d: bias extent " + std::to_string(bias[0]) + " != output channels " +
                                   std::to_string(g.c_out));
    expect(g.h + 2 * pad >= g.kh && g.w + 2 * pad >= g.kw,
           "conv2d: padded input " + std::to_string(g.h + 2 * pad) + "x" + std::to_string(g.w + 2 * pad) +
               " smaller than kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw));
    g.h_out = floor_div_out(g.h, pad, g.kh, stride);
    g.w_out = floor_div_out(g.w, pad, g.kw, stride);
    return g;
}

ConvGeom conv_transpose2d_geom(const Shape& input, const Shape& kernel, const Shape& bias, int stride, int pad) {
    expect(input.size() == 4, "conv_transpose2d: input must be NCHW, got " + shape_str(input));
    expect(kernel.size() == 4, "conv_transpose2d: kernel must be OIHW, got " + shape_str(kernel));
    expect(bias.size() == 1, "conv_transpose2d: bias must be 1-d, got " + shape_str(bias));
    expect(stride >= 1, "conv_transpose2d: stride must be positive");
    expect(pad >= 0, "conv_transpose2d: padding must be non-negative");
    // g.h/g.w are the *output* spatial extents; g.h_out/g.w_out the input's.
    ConvGeom g{input[0], kernel[1], 0, 0, kernel[0], kernel[2], kernel[3], stride, pad, input[2], input[3]};
    expect(input[1] == g.c_out, "conv_transpose2d: input has " + std::to_string(input[1]) +
                                    " channels but kernel expects " + std::to_string(g.c_out));
    expect(bias[0] == g.c_in, "conv_transpose2d: bias extent " + std::to_string(bias[0]) +
                                  " != output channels " + std::to_string(g.c_in));
    g.h = (g.h_out - 1) * stride + g.kh - 2 * pad;
    g.w = (g.w_out - 1) * stride + g.kw - 2 * pad;
    expect(g.h >= 1 && g.w >= 1, "conv_transpose2d: output extent would be non-positive");
    return g;
}

Shape conv2d_out_shape(const ConvGeom& g) { return {g.n, g.c_out, g.h_out, g.w_out}; }
Shape conv_transpose2d_out_shape(const ConvGeom& g) { return {g.n, g.c_in, g.h, g.w}; }

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void transpose(const T* src, T* dst, int rows, int cols) {
    constexpr int kTile = 16;
    for (int r0 = 0; r0 < rows; r0 += kTile) {
        const int r1 = std::min(r0 + kTile, rows);
        for (int c0 = 0; c0 < cols; c0 += kTile) {
            const int c1 = std::min(c0 + kTile, cols);
            for (int r = r0; r < r1; ++r)
                for (int c = c0; c < c1; ++c)
                    dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
        }
    }
}

namespace {

// One image: x[C x H x W] -> cols[(C*kh*kw) x (h_out*w_out)]
template <typename T>
void im2col(const T* x, T* cols, const ConvGeom& g) {
    const int hw_out = g.h_out * g.w_out;
    for (int c = 0; c < g.c_in; ++c) {
        const T* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int ki = 0; ki < g.kh; ++ki) {
            for (int kj = 0; kj < g.kw; ++kj) {
                T* row = cols + (static_cast<std::size_t>(c) * g.kh * g.kw + ki * g.kw + kj) * hw_out;
                for (int oy = 0; oy < g.h_out; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki;
                    T* out = row + static_cast<std::size_t>(oy) * g.w_out;
                    if (iy < 0 || iy >= g.h) {
                        std::memset(out, 0, sizeof(T) * g.w_out);
                        continue;
                    }
                    const T* xr = xc + static_cast<std::size_t>(iy) * g.w;
                    for (int ox = 0; ox < g.w_out; ++ox) {
                        const int ix = ox * g.stride - g.pad + kj;
                        out[ox] = (ix >= 0 && ix < g.w) ? xr[ix] : T(0);
                    }
                }
            }
        }
    }
}

// adjoint of im2col: scatter-add cols back into x[C x H x W]
template <typename T>
void col2im_add(const T* cols, T* x, const ConvGeom& g) {
    const int hw_out = g.h_out * g.w_out;
    for (int c = 0; c < g.c_in; ++c) {
        T* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int ki = 0; ki < g.kh; ++ki) {
            for (int kj = 0; kj < g.kw; ++kj) {
                const T* row = cols + (static_cast<std::size_t>(c) * g.kh * g.kw + ki * g.kw + kj) * hw_out;
                for (int oy = 0; oy < g.h_out; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki;
                    if (iy < 0 || iy >= g.h) continue;
                    const T* in = row + static_cast<std::size_t>(oy) * g.w_out;
                    T* xr = xc + static_cast<std::size_t>(iy) * g.w;
                    for (int ox = 0; ox < g.w_out; ++ox) {
                        const int ix = ox * g.stride - g.pad + kj;
                        if (ix >= 0 && ix < g.w) xr[ix] += in[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* b, T* y, const ConvGeom& g) {
    const int ckk = g.c_in * g.kh * g.kw;
    const int hw_out = g.h_out * g.w_out;
    auto& cols = scratch<T>(0, static_cast<std::size_t>(ckk) * hw_out);
    const std::size_t x_stride = static_cast<std::size_t>(g.c_in) * g.h * g.w;
    const std::size_t y_stride = static_cast<std::size_t>(g.c_out) * hw_out;
    for (int img = 0; img < g.n; ++img) {
        im2col(x + img * x_stride, cols.data(), g);
        T* yi = y + img * y_stride;
        for (int o = 0; o < g.c_out; ++o) {
            T* row = yi + static_cast<std::size_t>(o) * hw_out;
            const T bv = b ? b[o] : T(0);
            for (int j = 0; j < hw_out; ++j) row[j] = bv;
        }
        gemm_nn(w, cols.data(), yi, g.c_out, ckk, hw_out);
    }
}

template <typename T>
void conv2d_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, const ConvGeom& g) {
    const int ckk = g.c_in * g.kh * g.kw;
    const int hw_out = g.h_out * g.w_out;
    const std::size_t x_stride = static_cast<std::size_t>(g.c_in) * g.h * g.w;
    const std::size_t y_stride = static_cast<std::size_t>(g.c_out) * hw_out;

    auto& cols = scratch<T>(0, dw ? static_cast<std::size_t>(ckk) * hw_out : 0);
    auto& cols_t = scratch<T>(1, dw ? static_cast<std::size_t>(hw_out) * ckk : 0);
    auto& wt = scratch<T>(2, dx ? static_cast<std::size_t>(ckk) * g.c_out : 0);
    auto& dcols = scratch<T>(3, dx ? static_cast<std::size_t>(ckk) * hw_out : 0);
    if (dx) transpose(w, wt.data(), g.c_out, ckk);

    for (int img = 0; img < g.n; ++img) {
        const T* dyi = dy + img * y_stride;
        if (db) {
            for (int o = 0; o < g.c_out; ++o) {
                const T* row = dyi + static_cast<std::size_t>(o) * hw_out;
                T s = 0;
                for (int j = 0; j < hw_out; ++j) s += row[j];
                db[o] += s;
            }
        }
        if (dw) {
            im2col(x + img * x_stride, cols.data(), g);
            transpose(cols.data(), cols_t.data(), ckk, hw_out);
            gemm_nn(dyi, cols_t.data(), dw, g.c_out, hw_out, ckk);
        }
        if (dx) {
            std::fill_n(dcols.data(), static_cast<std::size_t>(ckk) * hw_out, T(0));
            gemm_nn(wt.data(), dyi, dcols.data(), ckk, g.c_out, hw_out);
            col2im_add(dcols.data(), dx + img * x_stride, g);
        }
    }
}

template <typename T>
void conv_transpose2d_forward(const T* x, const T* w, const T* b, T* y, const ConvGeom& g) {
    // forward of the adjoint = input-gradient pass of the matching conv
    const int ckk = g.c_in * g.kh * g.kw;
    const int hw_out = g.h_out * g.w_out;
    const std::size_t x_stride = static_cast<std::size_t>(g.c_out) * hw_out;  // input lives on the conv-output side
    const std::size_t y_stride = static_cast<std::size_t>(g.c_in) * g.h * g.w;

    auto& wt = scratch<T>(2, static_cast<std::size_t>(ckk) * g.c_out);
    transpose(w, wt.data(), g.c_out, ckk);
    auto& cols = scratch<T>(0, static_cast<std::size_t>(ckk) * hw_out);

    for (int img = 0; img < g.n; ++img) {
        T* yi = y + img * y_stride;
        for (int c = 0; c < g.c_in; ++c) {
            T* row = yi + static_cast<std::size_t>(c) * g.h * g.w;
            const T bv = b ? b[c] : T(0);
            for (int j = 0; j < g.h * g.w; ++j) row[j] = bv;
        }
        std::fill_n(cols.data(), static_cast<std::size_t>(ckk) * hw_out, T(0));
        gemm_nn(wt.data(), x + img * x_stride, cols.data(), ckk, g.c_out, hw_out);
        col2im_add(cols.data(), yi, g);
    }
}

template <typename T>
void conv_transpose2d_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, const ConvGeom& g) {
    const int ckk = g.c_in * g.kh * g.kw;
    const int hw_out = g.h_out * g.w_out;
    const std::size_t x_stride = static_cast<std::size_t>(g.c_out) * hw_out;
    const std::size_t y_stride = static_cast<std::size_t>(g.c_in) * g.h * g.w;

    auto& cols = scratch<T>(0, static_cast<std::size_t>(ckk) * hw_out);
    auto& cols_t = scratch<T>(1, dw ? static_cast<std::size_t>(hw_out) * ckk : 0);

    for (int img = 0; img < g.n; ++img) {
        const T* dyi = dy + img * y_stride;
        if (db) {
            for (int c = 0; c < g.c_in; ++c) {
                const T* row = dyi + static_cast<std::size_t>(c) * g.h * g.w;
                T s = 0;
                for (int j = 0; j < g.h * g.w; ++j) s += row[j];
                db[c] += s;
            }
        }
        if (dx || dw) im2col(dyi, cols.data(), g);
        if (dx) {
            // gradient w.r.t. the adjoint's input is a plain conv forward
            T* dxi = dx + img * x_stride;
            gemm_nn(w, cols.data(), dxi, g.c_out, ckk, hw_out);
        }
        if (dw) {
            transpose(cols.data(), cols_t.data(), ckk, hw_out);
            gemm_nn(x + img * x_stride, cols_t.data(), dw, g.c_out, hw_out, ckk);
        }
    }
}

template <typename T>
void dense_forward(const T* x, const T* w, const T* b, T* y, int n, int f, int g) {
    for (int i = 0; i < n; ++i) {
        T* row = y + static_cast<std::size_t>(i) * g;
        for (int j = 0; j < g; ++j) row[j] = b ? b[j] : T(0);
    }
    gemm_nn(x, w, y, n, f, g);
}

template <typename T>
void dense_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, int n, int f, int g) {
    if (db) {
        for (int i = 0; i < n; ++i) {
            const T* row = dy + static_cast<std::size_t>(i) * g;
            for (int j = 0; j < g; ++j) db[j] += row[j];
        }
    }
    if (dx) {
        auto& wt = scratch<T>(4, static_cast<std::size_t>(g) * f);
        transpose(w, wt.data(), f, g);
        gemm_nn(dy, wt.data(), dx, n, g, f);
    }
    if (dw) {
        auto& xt = scratch<T>(5, static_cast<std::size_t>(f) * n);
        transpose(x, xt.data(), n, f);
        gemm_nn(xt.data(), dy, dw, f, n, g);
    }
}

// branch-free forms keep these loops vectorizable

template <typename T>
void leaky_relu_forward(const T* x, T* y, std::size_t n, T alpha) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::max(x[i], T(0)) + alpha * std::min(x[i], T(0));
}

template <typename T>
void leaky_relu_backward(const T* x, const T* dy, T* dx, std::size_t n, T alpha) {
    for (std::size_t i = 0; i < n; ++i) {
        const T mask = x[i] > T(0) ? T(1) : T(0);
        dx[i] += dy[i] * (mask + alpha * (T(1) - mask));
    }
}

template <typename T>
void sigmoid_forward(const T* x, T* y, std::size_t n) {
    // exp of the negative magnitude never overflows; the select picks the
    // stable branch for either sign
    for (std::size_t i = 0; i < n; ++i) {
        const T e = std::exp(-std::abs(x[i]));
        const T s = e / (T(1) + e);
        y[i] = x[i] >= T(0) ? T(1) - s : s;
    }
}

template <typename T>
void sigmoid_backward(const T* y, const T* dy, T* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * y[i] * (T(1) - y[i]);
}

template <typename T>
void tanh_forward(const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

template <typename T>
void tanh_backward(const T* y, const T* dy, T* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * (T(1) - y[i] * y[i]);
}

template <typename T>
void softmax_forward(const T* x, T* y, int outer, int axis, int inner) {
    for (int o = 0; o < outer; ++o) {
        for (int i = 0; i < inner; ++i) {
            const T* xi = x + (static_cast<std::size_t>(o) * axis) * inner + i;
            T* yi = y + (static_cast<std::size_t>(o) * axis) * inner + i;
            T mx = xi[0];
            for (int a = 1; a < axis; ++a) mx = std::max(mx, xi[static_cast<std::size_t>(a) * inner]);
            T sum = 0;
            for (int a = 0; a < axis; ++a) {
                const T e = std::exp(xi[static_cast<std::size_t>(a) * inner] - mx);
                yi[static_cast<std::size_t>(a) * inner] = e;
                sum += e;
            }
            for (int a = 0; a < axis; ++a) yi[static_cast<std::size_t>(a) * inner] /= sum;
        }
    }
}

template <typename T>
void softmax_backward(const T* y, const T* dy, T* dx, int outer, int axis, int inner) {
    for (int o = 0; o < outer; ++o) {
        for (int i = 0; i < inner; ++i) {
            const T* yi = y + (static_cast<std::size_t>(o) * axis) * inner + i;
            const T* gi = dy + (static_cast<std::size_t>(o) * axis) * inner + i;
            T* di = dx + (static_cast<std::size_t>(o) * axis) * inner + i;
            T dot = 0;
            for (int a = 0; a < axis; ++a)
                dot += gi[static_cast<std::size_t>(a) * inner] * yi[static_cast<std::size_t>(a) * inner];
            for (int a = 0; a < axis; ++a) {
                const std::size_t k = static_cast<std::size_t>(a) * inner;
                di[k] += yi[k] * (gi[k] - dot);
            }
        }
    }
}

template <typename T>
T mse_forward(const T* pred, const T* target, std::size_t n) {
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T d = pred[i] - target[i];
        s += d * d;
    }
    return s / static_cast<T>(n);
}

template <typename T>
void mse_backward(const T* pred, const T* target, T upstream, T* dpred, T* dtarget, std::size_t n) {
    const T scale = upstream * T(2) / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T d = scale * (pred[i] - target[i]);
        if (dpred) dpred[i] += d;
        if (dtarget) dtarget[i] -= d;
    }
}

template <typename T>
T bce_logits_forward(const T* logit, const T* label, std::size_t n) {
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T l = label[i];
        if (l != T(0) && l != T(1))
            throw std::invalid_argument("bce_logits: label must be 0 or 1, got " + std::to_string(static_cast<double>(l)));
        const T x = logit[i];
        s += std::max(x, T(0)) - x * l + std::log1p(std::exp(-std::abs(x)));
    }
    return s / static_cast<T>(n);
}

template <typename T>
void bce_logits_backward(const T* logit, const T* label, T upstream, T* dlogit, std::size_t n) {
    const T scale = upstream / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T x = logit[i];
        const T sig = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
        dlogit[i] += scale * (sig - label[i]);
    }
}

// training runs in float, verification in double
#define CAAE_INSTANTIATE_OPS(T)                                                                        \
    template void gemm_nn<T>(const T*, const T*, T*, int, int, int);                                   \
    template void transpose<T>(const T*, T*, int, int);                                                \
    template void conv2d_forward<T>(const T*, const T*, const T*, T*, const ConvGeom&);                \
    template void conv2d_backward<T>(const T*, const T*, const T*, T*, T*, T*, const ConvGeom&);       \
    template void conv_transpose2d_forward<T>(const T*, const T*, const T*, T*, const ConvGeom&);      \
    template void conv_transpose2d_backward<T>(const T*, const T*, const T*, T*, T*, T*,               \
                                               const ConvGeom&);                                       \
    template void dense_forward<T>(const T*, const T*, const T*, T*, int, int, int);                   \
    template void dense_backward<T>(const T*, const T*, const T*, T*, T*, T*, int, int, int);          \
    template void leaky_relu_forward<T>(const T*, T*, std::size_t, T);                                 \
    template void leaky_relu_backward<T>(const T*, const T*, T*, std::size_t, T);                      \
    template void sigmoid_forward<T>(const T*, T*, std::size_t);                                       \
    template void sigmoid_backward<T>(const T*, const T*, T*, std::size_t);                            \
    template void tanh_forward<T>(const T*, T*, std::size_t);                                          \
    template void tanh_backward<T>(const T*, const T*, T*, std::size_t);                               \
    template void softmax_forward<T>(const T*, T*, int, int, int);                                     \
    template void softmax_backward<T>(const T*, const T*, T*, int, int, int);                          \
    template T mse_forward<T>(const T*, const T*, std::size_t);                                        \
    template void mse_backward<T>(const T*, const T*, T, T*, T*, std::size_t);                         \
    template T bce_logits_forward<T>(const T*, const T*, std::size_t);                                 \
    template void bce_logits_backward<T>(const T*, const T*, T, T*, std::size_t);

CAAE_INSTANTIATE_OPS(float)
CAAE_INSTANTIATE_OPS(double)

#undef CAAE_INSTANTIATE_OPS

}  // namespace caae
