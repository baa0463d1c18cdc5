#pragma once

#include <cstddef>

namespace ilnet {
namespace kernels {

// Dense compute kernels, OpenMP-parallel. Every kernel is gather-style:
// each output element is written by exactly one loop iteration with a fixed
// inner summation order, so results are bit-identical to the serial
// reference in kernels::serial for any thread count.
//
// Layouts: feature maps are [C,H,W] row-major, fully-connected activations
// [B,dim], conv weights [Cout,Cin,kh,kw].
//
// *_backward_params kernels accumulate (+=) into the gradient buffers;
// *_backward_input kernels overwrite.

void conv3x3_forward(const double* x, int ci, int H, int W,
                     const double* w, const double* b, int co, double* y);
void conv3x3_backward_input(const double* gy, int co, int H, int W,
                            const double* w, int ci, double* gx);
void conv3x3_backward_params(const double* gy, int co, const double* x, int ci,
                             int H, int W, double* gw, double* gb);

void conv1x1_forward(const double* x, int ci, int H, int W,
                     const double* w, const double* b, int co, double* y);
void conv1x1_backward_input(const double* gy, int co, int H, int W,
                            const double* w, int ci, double* gx);
void conv1x1_backward_params(const double* gy, int co, const double* x, int ci,
                             int H, int W, double* gw, double* gb);

// 2x2 average pooling, stride 2; H and W must be even.
void avgpool2_forward(const double* x, int C, int H, int W, double* y);
void avgpool2_backward(const double* gy, int C, int H, int W, double* gx);

// ELU with unit scale: y = x > 0 ? x : exp(x) - 1.
void elu_forward(const double* x, size_t n, double* y);
void elu_backward(const double* x, const double* gy, size_t n, double* gx);

void sigmoid_forward(const double* x, size_t n, double* y);

// y[b,o] = bias[o] + sum_i w[o,i] * x[b,i]
void fc_forward(const double* x, int B, int in, const double* w, const double* b,
                int out, double* y);
void fc_backward_input(const double* gy, int B, int out, const double* w, int in,
                       double* gx);
void fc_backward_params(const double* gy, int B, int out, const double* x, int in,
                        double* gw, double* gb);

// Serial reference implementations, kept for testing and as the ground
// truth the parallel kernels must match exactly.
namespace serial {

void conv3x3_forward(const double* x, int ci, int H, int W,
                     const double* w, const double* b, int co, double* y);
void conv3x3_backward_input(const double* gy, int co, int H, int W,
                            const double* w, int ci, double* gx);
void conv3x3_backward_params(const double* gy, int co, const double* x, int ci,
                             int H, int W, double* gw, double* gb);

void conv1x1_forward(const double* x, int ci, int H, int W,
                     const double* w, const double* b, int co, double* y);
void conv1x1_backward_input(const double* gy, int co, int H, int W,
                            const double* w, int ci, double* gx);
void conv1x1_backward_params(const double* gy, int co, const double* x, int ci,
                             int H, int W, double* gw, double* gb);

void avgpool2_forward(const double* x, int C, int H, int W, double* y);
void avgpool2_backward(const double* gy, int C, int H, int W, double* gx);

void elu_forward(const double* x, size_t n, double* y);
void elu_backward(const double* x, const double* gy, size_t n, double* gx);

void sigmoid_forward(const double* x, size_t n, double* y);

void fc_forward(const double* x, int B, int in, const double* w, const double* b,
                int out, double* y);
void fc_backward_input(const double* gy, int B, int out, const double* w, int in,
                       double* gx);
void fc_backward_params(const double* gy, int B, int out, const double* x, int in,
                        double* gw, double* gb);

}  // namespace serial
}  // namespace kernels
}  // namespace ilnet
