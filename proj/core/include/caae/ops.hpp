#pragma once

#include "caae/tensor.hpp"

namespace caae {

// Geometry of a conv2d application: input NCHW, kernel OIHW, bias O.
// Output spatial extents follow floor((H + 2p - kH) / s) + 1.
struct ConvGeom {
    int n, c_in, h, w;
    int c_out, kh, kw;
    int stride, pad;
    int h_out, w_out;
};

// Validates shapes and returns the geometry; throws with a description of
// the offending dimension otherwise.
ConvGeom conv2d_geom(const Shape& input, const Shape& kernel, const Shape& bias, int stride, int pad);

// Geometry for the adjoint map: input N x O x H' x W' -> output N x I x H x W
// with H = (H' - 1) * s + kH - 2p. The kernel tensor is shared with conv2d
// (OIHW); bias has extent I.
ConvGeom conv_transpose2d_geom(const Shape& input, const Shape& kernel, const Shape& bias, int stride, int pad);

Shape conv2d_out_shape(const ConvGeom& g);
Shape conv_transpose2d_out_shape(const ConvGeom& g);

// C[M x N] += A[M x K] * B[K x N], all row-major.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n);

template <typename T>
void transpose(const T* src, T* dst, int rows, int cols);

// ---- convolution ----

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* b, T* y, const ConvGeom& g);

// Any of dx/dw/db may be null; dw/db accumulate.
template <typename T>
void conv2d_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, const ConvGeom& g);

template <typename T>
void conv_transpose2d_forward(const T* x, const T* w, const T* b, T* y, const ConvGeom& g);

template <typename T>
void conv_transpose2d_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, const ConvGeom& g);

// ---- dense ----

// x: N x F, w: F x G, b: G, y: N x G
template <typename T>
void dense_forward(const T* x, const T* w, const T* b, T* y, int n, int f, int g);

template <typename T>
void dense_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, int n, int f, int g);

// ---- elementwise activations ----

template <typename T>
void leaky_relu_forward(const T* x, T* y, std::size_t n, T alpha);

template <typename T>
void leaky_relu_backward(const T* x, const T* dy, T* dx, std::size_t n, T alpha);

template <typename T>
void sigmoid_forward(const T* x, T* y, std::size_t n);

// dx from the forward output y
template <typename T>
void sigmoid_backward(const T* y, const T* dy, T* dx, std::size_t n);

template <typename T>
void tanh_forward(const T* x, T* y, std::size_t n);

template <typename T>
void tanh_backward(const T* y, const T* dy, T* dx, std::size_t n);

// ---- softmax along one axis ----

// The tensor is viewed as [outer, axis, inner]; rows are normalized with
// max subtraction so large logits cannot overflow.
template <typename T>
void softmax_forward(const T* x, T* y, int outer, int axis, int inner);

template <typename T>
void softmax_backward(const T* y, const T* dy, T* dx, int outer, int axis, int inner);

// ---- losses (mean reductions) ----

template <typename T>
T mse_forward(const T* pred, const T* target, std::size_t n);

template <typename T>
void mse_backward(const T* pred, const T* target, T upstream, T* dpred, T* dtarget, std::size_t n);

// labels must be exactly 0 or 1; computed in the stable max(x,0) - x*l + log1p(exp(-|x|)) form
template <typename T>
T bce_logits_forward(const T* logit, const T* label, std::size_t n);

template <typename T>
void bce_logits_backward(const T* logit, const T* label, T upstream, T* dlogit, std::size_t n);

}  // namespace caae
