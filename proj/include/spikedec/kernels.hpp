#pragma once

#include <cstddef>

namespace spikedec::kernels {

// Convolution kernels used by the autodiff ops. All convolutions are
// cross-correlations with stride 1 and zero same-padding, split
// floor((k-1)/2) left / ceil((k-1)/2) right.
//
// The parallel versions partition work so that each output element is owned
// by exactly one thread and the per-element summation order is identical to
// the serial reference, so results are bit-equal regardless of thread count.

inline std::size_t pad_left(std::size_t k) { return (k - 1) / 2; }

// x: [B, C_in, T], w: [C_out, C_in, k], bias: [C_out] or nullptr, out: [B, C_out, T]
void conv1d_forward(std::size_t B, std::size_t C_in, std::size_t T, std::size_t C_out,
                    std::size_t k, const double* x, const double* w, const double* bias,
                    double* out);
void conv1d_backward_input(std::size_t B, std::size_t C_in, std::size_t T, std::size_t C_out,
                           std::size_t k, const double* w, const double* gout, double* gx);
void conv1d_backward_weight(std::size_t B, std::size_t C_in, std::size_t T, std::size_t C_out,
                            std::size_t k, const double* x, const double* gout, double* gw,
                            double* gbias);

// Single-filter spatial convolution: x: [B, C, T] viewed as a one-channel
// image per sample, kernel kv: [k] sliding along the channel axis.
void conv2d_spatial_forward(std::size_t B, std::size_t C, std::size_t T, std::size_t k,
                            const double* x, const double* kv, double* out);
void conv2d_spatial_backward_input(std::size_t B, std::size_t C, std::size_t T, std::size_t k,
                                   const double* kv, const double* gout, double* gx);
void conv2d_spatial_backward_weight(std::size_t B, std::size_t C, std::size_t T, std::size_t k,
                                    const double* x, const double* gout, double* gk);

// y[B, d_out] = x[B, d_in] * W^T + bias
void linear_forward(std::size_t B, std::size_t d_in, std::size_t d_out, const double* x,
                    const double* w, const double* bias, double* y);
void linear_backward(std::size_t B, std::size_t d_in, std::size_t d_out, const double* x,
                     const double* w, const double* gy, double* gx, double* gw, double* gbias);

// Serial reference implementations: straight nested loops, no threading.
// Kept as the independent oracle for the parallel kernels and for benchmarks.
namespace ref {

void conv1d_forward(std::size_t B, std::size_t C_in, std::size_t T, std::size_t C_out,
                    std::size_t k, const double* x, const double* w, const double* bias,
                    double* out);
void conv1d_backward_input(std::size_t B, std::size_t C_in, std::size_t T, std::size_t C_out,
                           std::size_t k, const double* w, const double* gout, double* gx);
void conv1d_backward_weight(std::size_t B, std::size_t C_in, std::size_t T, std::size_t C_out,
                            std::size_t k, const double* x, const double* gout, double* gw,
                            double* gbias);
void conv2d_spatial_forward(std::size_t B, std::size_t C, std::size_t T, std::size_t k,
                            const double* x, const double* kv, double* out);
void linear_forward(std::size_t B, std::size_t d_in, std::size_t d_out, const double* x,
                    const double* w, const double* bias, double* y);

}  // namespace ref

}  // namespace spikedec::kernels
