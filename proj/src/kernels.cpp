#include "ilnet/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace ilnet {
namespace kernels {

// Per-outer-index bodies shared by the serial and OpenMP drivers. Inner
// summation order is fixed, so both drivers produce identical bits.

namespace {

inline void conv3x3_fwd_plane(int c, const double* x, int ci, int H, int W,
                              const double* w, const double* b, double* y) {
    double* yp = y + static_cast<size_t>(c) * H * W;
    std::fill(yp, yp + static_cast<size_t>(H) * W, b[c]);
    for (int i = 0; i < ci; ++i) {
        const double* xp = x + static_cast<size_t>(i) * H * W;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const double wv = w[((static_cast<size_t>(c) * ci + i) * 3 + ky) * 3 + kx];
                const int y_lo = std::max(0, 1 - ky);
                const int y_hi = std::min(H, H + 1 - ky);
                const int x_lo = std::max(0, 1 - kx);
                const int x_hi = std::min(W, W + 1 - kx);
                for (int yy = y_lo; yy < y_hi; ++yy) {
                    double* yrow = yp + static_cast<size_t>(yy) * W;
                    const double* xrow = xp + static_cast<size_t>(yy + ky - 1) * W + (kx - 1);
                    for (int xx = x_lo; xx < x_hi; ++xx) yrow[xx] += wv * xrow[xx];
                }
            }
        }
    }
}

inline void conv3x3_bwd_input_plane(int i, const double* gy, int co, int H, int W,
                                    const double* w, int ci, double* gx) {
    double* gp = gx + static_cast<size_t>(i) * H * W;
    std::fill(gp, gp + static_cast<size_t>(H) * W, 0.0);
    for (int c = 0; c < co; ++c) {
        const double* gyp = gy + static_cast<size_t>(c) * H * W;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const double wv = w[((static_cast<size_t>(c) * ci + i) * 3 + ky) * 3 + kx];
                // input (iy,ix) receives from output (iy-ky+1, ix-kx+1)
                const int y_lo = std::max(0, ky - 1);
                const int y_hi = std::min(H, H + ky - 1);
                const int x_lo = std::max(0, kx - 1);
                const int x_hi = std::min(W, W + kx - 1);
                for (int iy = y_lo; iy < y_hi; ++iy) {
                    double* grow = gp + static_cast<size_t>(iy) * W;
                    const double* gyrow = gyp + static_cast<size_t>(iy - ky + 1) * W - (kx - 1);
                    for (int ix = x_lo; ix < x_hi; ++ix) grow[ix] += wv * gyrow[ix];
                }
            }
        }
    }
}

inline void conv3x3_bwd_params_plane(int c, const double* gy, const double* x, int ci,
                                     int H, int W, double* gw, double* gb) {
    const double* gyp = gy + static_cast<size_t>(c) * H * W;
    double bacc = 0.0;
    for (size_t k = 0; k < static_cast<size_t>(H) * W; ++k) bacc += gyp[k];
    gb[c] += bacc;
    for (int i = 0; i < ci; ++i) {
        const double* xp = x + static_cast<size_t>(i) * H * W;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const int y_lo = std::max(0, 1 - ky);
                const int y_hi = std::min(H, H + 1 - ky);
                const int x_lo = std::max(0, 1 - kx);
                const int x_hi = std::min(W, W + 1 - kx);
                double acc = 0.0;
                for (int yy = y_lo; yy < y_hi; ++yy) {
                    const double* gyrow = gyp + static_cast<size_t>(yy) * W;
                    const double* xrow = xp + static_cast<size_t>(yy + ky - 1) * W + (kx - 1);
                    for (int xx = x_lo; xx < x_hi; ++xx) acc += gyrow[xx] * xrow[xx];
                }
                gw[((static_cast<size_t>(c) * ci + i) * 3 + ky) * 3 + kx] += acc;
            }
        }
    }
}

inline void conv1x1_fwd_plane(int c, const double* x, int ci, int H, int W,
                              const double* w, const double* b, double* y) {
    const size_t hw = static_cast<size_t>(H) * W;
    double* yp = y + static_cast<size_t>(c) * hw;
    std::fill(yp, yp + hw, b[c]);
    for (int i = 0; i < ci; ++i) {
        const double wv = w[static_cast<size_t>(c) * ci + i];
        const double* xp = x + static_cast<size_t>(i) * hw;
        for (size_t k = 0; k < hw; ++k) yp[k] += wv * xp[k];
    }
}

inline void conv1x1_bwd_input_plane(int i, const double* gy, int co, int H, int W,
                                    const double* w, int ci, double* gx) {
    const size_t hw = static_cast<size_t>(H) * W;
    double* gp = gx + static_cast<size_t>(i) * hw;
    std::fill(gp, gp + hw, 0.0);
    for (int c = 0; c < co; ++c) {
        const double wv = w[static_cast<size_t>(c) * ci + i];
        const double* gyp = gy + static_cast<size_t>(c) * hw;
        for (size_t k = 0; k < hw; ++k) gp[k] += wv * gyp[k];
    }
}

inline void conv1x1_bwd_params_plane(int c, const double* gy, const double* x, int ci,
                                     int H, int W, double* gw, double* gb) {
    const size_t hw = static_cast<size_t>(H) * W;
    const double* gyp = gy + static_cast<size_t>(c) * hw;
    double bacc = 0.0;
    for (size_t k = 0; k < hw; ++k) bacc += gyp[k];
    gb[c] += bacc;
    for (int i = 0; i < ci; ++i) {
        const double* xp = x + static_cast<size_t>(i) * hw;
        double acc = 0.0;
        for (size_t k = 0; k < hw; ++k) acc += gyp[k] * xp[k];
        gw[static_cast<size_t>(c) * ci + i] += acc;
    }
}

inline void avgpool2_fwd_plane(int c, const double* x, int H, int W, double* y) {
    const int Ho = H / 2, Wo = W / 2;
    const double* xp = x + static_cast<size_t>(c) * H * W;
    double* yp = y + static_cast<size_t>(c) * Ho * Wo;
    for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
            const double* r0 = xp + static_cast<size_t>(2 * oy) * W + 2 * ox;
            const double* r1 = r0 + W;
            yp[static_cast<size_t>(oy) * Wo + ox] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
        }
    }
}

inline void avgpool2_bwd_plane(int c, const double* gy, int H, int W, double* gx) {
    const int Ho = H / 2, Wo = W / 2;
    const double* gyp = gy + static_cast<size_t>(c) * Ho * Wo;
    double* gp = gx + static_cast<size_t>(c) * H * W;
    for (int iy = 0; iy < H; ++iy)
        for (int ix = 0; ix < W; ++ix)
            gp[static_cast<size_t>(iy) * W + ix] =
                0.25 * gyp[static_cast<size_t>(iy / 2) * Wo + ix / 2];
}

inline void fc_fwd_row(int bi, const double* x, int in, const double* w, const double* b,
                       int out, double* y) {
    const double* xr = x + static_cast<size_t>(bi) * in;
    double* yr = y + static_cast<size_t>(bi) * out;
    for (int o = 0; o < out; ++o) {
        const double* wr = w + static_cast<size_t>(o) * in;
        double acc = b[o];
        for (int i = 0; i < in; ++i) acc += wr[i] * xr[i];
        yr[o] = acc;
    }
}

inline void fc_bwd_input_row(int bi, const double* gy, int out, const double* w, int in,
                             double* gx) {
    const double* gr = gy + static_cast<size_t>(bi) * out;
    double* gxr = gx + static_cast<size_t>(bi) * in;
    std::fill(gxr, gxr + in, 0.0);
    for (int o = 0; o < out; ++o) {
        const double g = gr[o];
        const double* wr = w + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) gxr[i] += g * wr[i];
    }
}

inline void fc_bwd_params_row(int o, const double* gy, int B, int out, const double* x,
                              int in, double* gw, double* gb) {
    double* gwr = gw + static_cast<size_t>(o) * in;
    double bacc = 0.0;
    for (int bi = 0; bi < B; ++bi) {
        const double g = gy[static_cast<size_t>(bi) * out + o];
        bacc += g;
        const double* xr = x + static_cast<size_t>(bi) * in;
        for (int i = 0; i < in; ++i) gwr[i] += g * xr[i];
    }
    gb[o] += bacc;
}

}  // namespace

// ---- OpenMP drivers -------------------------------------------------------

void conv3x3_forward(const double* x, int ci, int H, int W, const double* w,
                     const double* b, int co, double* y) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < co; ++c) conv3x3_fwd_plane(c, x, ci, H, W, w, b, y);
}

void conv3x3_backward_input(const double* gy, int co, int H, int W, const double* w,
                            int ci, double* gx) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < ci; ++i) conv3x3_bwd_input_plane(i, gy, co, H, W, w, ci, gx);
}

void conv3x3_backward_params(const double* gy, int co, const double* x, int ci, int H,
                             int W, double* gw, double* gb) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < co; ++c) conv3x3_bwd_params_plane(c, gy, x, ci, H, W, gw, gb);
}

void conv1x1_forward(const double* x, int ci, int H, int W, const double* w,
                     const double* b, int co, double* y) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < co; ++c) conv1x1_fwd_plane(c, x, ci, H, W, w, b, y);
}

void conv1x1_backward_input(const double* gy, int co, int H, int W, const double* w,
                            int ci, double* gx) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < ci; ++i) conv1x1_bwd_input_plane(i, gy, co, H, W, w, ci, gx);
}

void conv1x1_backward_params(const double* gy, int co, const double* x, int ci, int H,
                             int W, double* gw, double* gb) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < co; ++c) conv1x1_bwd_params_plane(c, gy, x, ci, H, W, gw, gb);
}

void avgpool2_forward(const double* x, int C, int H, int W, double* y) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) avgpool2_fwd_plane(c, x, H, W, y);
}

void avgpool2_backward(const double* gy, int C, int H, int W, double* gx) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) avgpool2_bwd_plane(c, gy, H, W, gx);
}

void elu_forward(const double* x, size_t n, double* y) {
#pragma omp parallel for schedule(static)
    for (long long k = 0; k < static_cast<long long>(n); ++k)
        y[k] = x[k] > 0.0 ? x[k] : std::expm1(x[k]);
}

void elu_backward(const double* x, const double* gy, size_t n, double* gx) {
#pragma omp parallel for schedule(static)
    for (long long k = 0; k < static_cast<long long>(n); ++k)
        gx[k] = gy[k] * (x[k] > 0.0 ? 1.0 : std::exp(x[k]));
}

void sigmoid_forward(const double* x, size_t n, double* y) {
#pragma omp parallel for schedule(static)
    for (long long k = 0; k < static_cast<long long>(n); ++k)
        y[k] = 1.0 / (1.0 + std::exp(-x[k]));
}

void fc_forward(const double* x, int B, int in, const double* w, const double* b,
                int out, double* y) {
#pragma omp parallel for schedule(static)
    for (int bi = 0; bi < B; ++bi) fc_fwd_row(bi, x, in, w, b, out, y);
}

void fc_backward_input(const double* gy, int B, int out, const double* w, int in,
                       double* gx) {
#pragma omp parallel for schedule(static)
    for (int bi = 0; bi < B; ++bi) fc_bwd_input_row(bi, gy, out, w, in, gx);
}

void fc_backward_params(const double* gy, int B, int out, const double* x, int in,
                        double* gw, double* gb) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out; ++o) fc_bwd_params_row(o, gy, B, out, x, in, gw, gb);
}

// ---- serial reference -----------------------------------------------------

namespace serial {

void conv3x3_forward(const double* x, int ci, int H, int W, const double* w,
                     const double* b, int co, double* y) {
    for (int c = 0; c < co; ++c) conv3x3_fwd_plane(c, x, ci, H, W, w, b, y);
}

void conv3x3_backward_input(const double* gy, int co, int H, int W, const double* w,
                            int ci, double* gx) {
    for (int i = 0; i < ci; ++i) conv3x3_bwd_input_plane(i, gy, co, H, W, w, ci, gx);
}

void conv3x3_backward_params(const double* gy, int co, const double* x, int ci, int H,
                             int W, double* gw, double* gb) {
    for (int c = 0; c < co; ++c) conv3x3_bwd_params_plane(c, gy, x, ci, H, W, gw, gb);
}

void conv1x1_forward(const double* x, int ci, int H, int W, const double* w,
                     const double* b, int co, double* y) {
    for (int c = 0; c < co; ++c) conv1x1_fwd_plane(c, x, ci, H, W, w, b, y);
}

void conv1x1_backward_input(const double* gy, int co, int H, int W, const double* w,
                            int ci, double* gx) {
    for (int i = 0; i < ci; ++i) conv1x1_bwd_input_plane(i, gy, co, H, W, w, ci, gx);
}

void conv1x1_backward_params(const double* gy, int co, const double* x, int ci, int H,
                             int W, double* gw, double* gb) {
    for (int c = 0; c < co; ++c) conv1x1_bwd_params_plane(c, gy, x, ci, H, W, gw, gb);
}

void avgpool2_forward(const double* x, int C, int H, int W, double* y) {
    for (int c = 0; c < C; ++c) avgpool2_fwd_plane(c, x, H, W, y);
}

void avgpool2_backward(const double* gy, int C, int H, int W, double* gx) {
    for (int c = 0; c < C; ++c) avgpool2_bwd_plane(c, gy, H, W, gx);
}

void elu_forward(const double* x, size_t n, double* y) {
    for (size_t k = 0; k < n; ++k) y[k] = x[k] > 0.0 ? x[k] : std::expm1(x[k]);
}

void elu_backward(const double* x, const double* gy, size_t n, double* gx) {
    for (size_t k = 0; k < n; ++k) gx[k] = gy[k] * (x[k] > 0.0 ? 1.0 : std::exp(x[k]));
}

void sigmoid_forward(const double* x, size_t n, double* y) {
    for (size_t k = 0; k < n; ++k) y[k] = 1.0 / (1.0 + std::exp(-x[k]));
}

void fc_forward(const double* x, int B, int in, const double* w, const double* b,
                int out, double* y) {
    for (int bi = 0; bi < B; ++bi) fc_fwd_row(bi, x, in, w, b, out, y);
}

void fc_backward_input(const double* gy, int B, int out, const double* w, int in,
                       double* gx) {
    for (int bi = 0; bi < B; ++bi) fc_bwd_input_row(bi, gy, out, w, in, gx);
}

void fc_backward_params(const double* gy, int B, int out, const double* x, int in,
                        double* gw, double* gb) {
    for (int o = 0; o < out; ++o) fc_bwd_params_row(o, gy, B, out, x, in, gw, gb);
}

}  // namespace serial
}  // namespace kernels
}  // namespace ilnet
