#pragma once

#include <span>
#include <vector>

#include "dra/tensor.hpp"

namespace dra::nn {

// C[m x n] += A[m x k] * B[k x n], row-major.
void matmul_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n);

// 2-D convolution on [c,h,w] input; weights flat [oc, ic*k*k], bias [oc].
// Output [oc, oh, ow] with oh = (h + 2*pad - k)/stride + 1 (floor).
Tensor conv2d(const Tensor& x, std::span<const double> w, std::span<const double> bias,
              std::size_t oc, std::size_t k, std::size_t stride, std::size_t pad);

// Gradients of conv2d. dx may be null when the input gradient is not needed
// (first layer). dw/dbias are accumulated into.
void conv2d_backward(const Tensor& x, std::span<const double> w, std::size_t oc, std::size_t k,
                     std::size_t stride, std::size_t pad, const Tensor& dy, Tensor* dx,
                     std::span<double> dw, std::span<double> dbias);

Tensor relu(const Tensor& x);
// dx = dy where x > 0 else 0 (x is the forward input).
Tensor relu_backward(const Tensor& x, const Tensor& dy);

// 3x3 stride-2 pad-1 max pooling (residual-net stem).
Tensor maxpool3x3s2(const Tensor& x);
Tensor maxpool3x3s2_backward(const Tensor& x, const Tensor& dy);

// Per-channel affine y = x*scale[c] + shift[c] (batch-norm folded to its
// inference form; running statistics stay frozen during fine-tuning).
Tensor channel_affine(const Tensor& x, std::span<const double> scale,
                      std::span<const double> shift);
void channel_affine_backward(const Tensor& x, std::span<const double> scale, const Tensor& dy,
                             Tensor* dx, std::span<double> dscale, std::span<double> dshift);

// y = W[out x in] * x + b
std::vector<double> linear(std::span<const double> x, std::span<const double> w,
                           std::span<const double> b, std::size_t out_dim);
void linear_backward(std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::size_t out_dim, std::span<double> dx,
                     std::span<double> dw, std::span<double> db);

} // namespace dra::nn
