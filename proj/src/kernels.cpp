#include "spikedec/kernels.hpp"

#include <algorithm>
#include <cstdint>

namespace spikedec::kernels {

namespace {

// Valid output range [t0, t1) for a kernel tap with offset off = q - pad_left,
// i.e. the t where t + off lands inside [0, T).
inline void tap_range(std::ptrdiff_t off, std::size_t T, std::size_t& t0, std::size_t& t1) {
    const std::ptrdiff_t sT = static_cast<std::ptrdiff_t>(T);
    std::ptrdiff_t lo = off < 0 ? -off : 0;
    std::ptrdiff_t hi = off > 0 ? sT - off : sT;
    if (lo > sT) lo = sT;      // tap entirely outside the signal: empty range
    if (hi < lo) hi = lo;
    t0 = static_cast<std::size_t>(lo);
    t1 = static_cast<std::size_t>(hi);
}

}  // namespace

void conv1d_forward(std::size_t B, std::size_t C_in, std::size_t T, std::size_t C_out,
                    std::size_t k, const double* x, const double* w, const double* bias,
                    double* out) {
    const std::ptrdiff_t pl = static_cast<std::ptrdiff_t>(pad_left(k));
#pragma omp parallel for collapse(2) schedule(static)
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t j = 0; j < C_out; ++j) {
            double* o = out + (b * C_out + j) * T;
            const double bj = bias ? bias[j] : 0.0;
            for (std::size_t t = 0; t < T; ++t) o[t] = bj;
            for (std::size_t c = 0; c < C_in; ++c) {
                const double* xc = x + (b * C_in + c) * T;
                const double* wc = w + (j * C_in + c) * k;
                for (std::size_t q = 0; q < k; ++q) {
                    const double wq = wc[q];
                    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(q) - pl;
                    std::size_t t0, t1;
                    tap_range(off, T, t0, t1);
                    const double* xs = xc + off;
                    for (std::size_t t = t0; t < t1; ++t) o[t] += wq * xs[t];
                }
            }
        }
    }
}

void conv1d_backward_input(std::size_t B, std::size_t C_in, std::size_t T, std::size_t C_out,
                           std::size_t k, const double* w, const double* gout, double* gx) {
    const std::ptrdiff_t pl = static_cast<std::ptrdiff_t>(pad_left(k));
#pragma omp parallel for collapse(2) schedule(static)
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C_in; ++c) {
            double* g = gx + (b * C_in + c) * T;
            for (std::size_t j = 0; j < C_out; ++j) {
                const double* go = gout + (b * C_out + j) * T;
                const double* wc = w + (j * C_in + c) * k;
                for (std::size_t q = 0; q < k; ++q) {
                    const double wq = wc[q];
                    // out[t'] consumed x[t' + q - pl]; flip the offset.
                    const std::ptrdiff_t off = pl - static_cast<std::ptrdiff_t>(q);
                    std::size_t t0, t1;
                    tap_range(off, T, t0, t1);
                    const double* gs = go + off;
                    for (std::size_t t = t0; t < t1; ++t) g[t] += wq * gs[t];
                }
            }
        }
    }
}

void conv1d_backward_weight(std::size_t B, std::size_t C_in, std::size_t T, std::size_t C_out,
                            std::size_t k, const double* x, const double* gout, double* gw,
                            double* gbias) {
    const std::ptrdiff_t pl = static_cast<std::ptrdiff_t>(pad_left(k));
#pragma omp parallel for collapse(2) schedule(static)
    for (std::size_t j = 0; j < C_out; ++j) {
        for (std::size_t c = 0; c < C_in; ++c) {
            double* g = gw + (j * C_in + c) * k;
            for (std::size_t b = 0; b < B; ++b) {
                const double* go = gout + (b * C_out + j) * T;
                const double* xc = x + (b * C_in + c) * T;
                for (std::size_t q = 0; q < k; ++q) {
                    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(q) - pl;
                    std::size_t t0, t1;
                    tap_range(off, T, t0, t1);
                    const double* xs = xc + off;
                    double acc = 0.0;
                    for (std::size_t t = t0; t < t1; ++t) acc += go[t] * xs[t];
                    g[q] += acc;
                }
            }
        }
    }
    if (gbias) {
#pragma omp parallel for schedule(static)
        for (std::size_t j = 0; j < C_out; ++j) {
            double acc = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* go = gout + (b * C_out + j) * T;
                for (std::size_t t = 0; t < T; ++t) acc += go[t];
            }
            gbias[j] += acc;
        }
    }
}

void conv2d_spatial_forward(std::size_t B, std::size_t C, std::size_t T, std::size_t k,
                            const double* x, const double* kv, double* out) {
    const std::ptrdiff_t pl = static_cast<std::ptrdiff_t>(pad_left(k));
#pragma omp parallel for collapse(2) schedule(static)
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
            double* o = out + (b * C + c) * T;
            for (std::size_t t = 0; t < T; ++t) o[t] = 0.0;
            for (std::size_t q = 0; q < k; ++q) {
                const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(c) +
                                          static_cast<std::ptrdiff_t>(q) - pl;
                if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(C)) continue;
                const double wq = kv[q];
                const double* xs = x + (b * C + static_cast<std::size_t>(cc)) * T;
                for (std::size_t t = 0; t < T; ++t) o[t] += wq * xs[t];
            }
        }
    }
}

void conv2d_spatial_backward_input(std::size_t B, std::size_t C, std::size_t T, std::size_t k,
                                   const double* kv, const double* gout, double* gx) {
    const std::ptrdiff_t pl = static_cast<std::ptrdiff_t>(pad_left(k));
#pragma omp parallel for collapse(2) schedule(static)
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
            double* g = gx + (b * C + c) * T;
            for (std::size_t q = 0; q < k; ++q) {
                // out[cc] consumed x[cc + q - pl] = x[c]  =>  cc = c - (q - pl)
                const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(q) + pl;
                if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(C)) continue;
                const double wq = kv[q];
                const double* gs = gout + (b * C + static_cast<std::size_t>(cc)) * T;
                for (std::size_t t = 0; t < T; ++t) g[t] += wq * gs[t];
            }
        }
    }
}

void conv2d_spatial_backward_weight(std::size_t B, std::size_t C, std::size_t T, std::size_t k,
                                    const double* x, const double* gout, double* gk) {
    const std::ptrdiff_t pl = static_cast<std::ptrdiff_t>(pad_left(k));
#pragma omp parallel for schedule(static)
    for (std::size_t q = 0; q < k; ++q) {
        double acc = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t c = 0; c < C; ++c) {
                const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(c) +
                                          static_cast<std::ptrdiff_t>(q) - pl;
                if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(C)) continue;
                const double* go = gout + (b * C + c) * T;
                const double* xs = x + (b * C + static_cast<std::size_t>(cc)) * T;
                for (std::size_t t = 0; t < T; ++t) acc += go[t] * xs[t];
            }
        }
        gk[q] += acc;
    }
}

void linear_forward(std::size_t B, std::size_t d_in, std::size_t d_out, const double* x,
                    const double* w, const double* bias, double* y) {
#pragma omp parallel for collapse(2) schedule(static)
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t o = 0; o < d_out; ++o) {
            const double* xb = x + b * d_in;
            const double* wo = w + o * d_in;
            double acc = bias ? bias[o] : 0.0;
            for (std::size_t i = 0; i < d_in; ++i) acc += wo[i] * xb[i];
            y[b * d_out + o] = acc;
        }
    }
}

void linear_backward(std::size_t B, std::size_t d_in, std::size_t d_out, const double* x,
                     const double* w, const double* gy, double* gx, double* gw, double* gbias) {
    if (gx) {
#pragma omp parallel for schedule(static)
        for (std::size_t b = 0; b < B; ++b) {
            double* g = gx + b * d_in;
            const double* gyb = gy + b * d_out;
            for (std::size_t o = 0; o < d_out; ++o) {
                const double go = gyb[o];
                const double* wo = w + o * d_in;
                for (std::size_t i = 0; i < d_in; ++i) g[i] += go * wo[i];
            }
        }
    }
    if (gw) {
#pragma omp parallel for schedule(static)
        for (std::size_t o = 0; o < d_out; ++o) {
            double* g = gw + o * d_in;
            for (std::size_t b = 0; b < B; ++b) {
                const double go = gy[b * d_out + o];
                const double* xb = x + b * d_in;
                for (std::size_t i = 0; i < d_in; ++i) g[i] += go * xb[i];
            }
        }
    }
    if (gbias) {
#pragma omp parallel for schedule(static)
        for (std::size_t o = 0; o < d_out; ++o) {
            double acc = 0.0;
            for (std::size_t b = 0; b < B; ++b) acc += gy[b * d_out + o];
            gbias[o] += acc;
        }
    }
}

namespace ref {

void conv1d_forward(std::size_t B, std::size_t C_in, std::size_t T, std::size_t C_out,
                    std::size_t k, const double* x, const double* w, const double* bias,
                    double* out) {
    const std::ptrdiff_t pl = static_cast<std::ptrdiff_t>(pad_left(k));
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < C_out; ++j)
            for (std::size_t t = 0; t < T; ++t) {
                double acc = bias ? bias[j] : 0.0;
                for (std::size_t c = 0; c < C_in; ++c)
                    for (std::size_t q = 0; q < k; ++q) {
                        const std::ptrdiff_t tt = static_cast<std::ptrdiff_t>(t) +
                                                  static_cast<std::ptrdiff_t>(q) - pl;
                        if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(T)) continue;
                        acc += w[(j * C_in + c) * k + q] *
                               x[(b * C_in + c) * T + static_cast<std::size_t>(tt)];
                    }
                out[(b * C_out + j) * T + t] = acc;
            }
}

void conv1d_backward_input(std::size_t B, std::size_t C_in, std::size_t T, std::size_t C_out,
                           std::size_t k, const double* w, const double* gout, double* gx) {
    const std::ptrdiff_t pl = static_cast<std::ptrdiff_t>(pad_left(k));
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C_in; ++c)
            for (std::size_t t = 0; t < T; ++t) {
                double acc = 0.0;
                for (std::size_t j = 0; j < C_out; ++j)
                    for (std::size_t q = 0; q < k; ++q) {
                        const std::ptrdiff_t tt = static_cast<std::ptrdiff_t>(t) -
                                                  static_cast<std::ptrdiff_t>(q) + pl;
                        if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(T)) continue;
                        acc += w[(j * C_in + c) * k + q] *
                               gout[(b * C_out + j) * T + static_cast<std::size_t>(tt)];
                    }
                gx[(b * C_in + c) * T + t] += acc;
            }
}

void conv1d_backward_weight(std::size_t B, std::size_t C_in, std::size_t T, std::size_t C_out,
                            std::size_t k, const double* x, const double* gout, double* gw,
                            double* gbias) {
    const std::ptrdiff_t pl = static_cast<std::ptrdiff_t>(pad_left(k));
    for (std::size_t j = 0; j < C_out; ++j)
        for (std::size_t c = 0; c < C_in; ++c)
            for (std::size_t q = 0; q < k; ++q)
                // Per-sample partial sums, matching the parallel kernel's grouping.
                for (std::size_t b = 0; b < B; ++b) {
                    double acc = 0.0;
                    for (std::size_t t = 0; t < T; ++t) {
                        const std::ptrdiff_t tt = static_cast<std::ptrdiff_t>(t) +
                                                  static_cast<std::ptrdiff_t>(q) - pl;
                        if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(T)) continue;
                        acc += gout[(b * C_out + j) * T + t] *
                               x[(b * C_in + c) * T + static_cast<std::size_t>(tt)];
                    }
                    gw[(j * C_in + c) * k + q] += acc;
                }
    if (gbias)
        for (std::size_t j = 0; j < C_out; ++j)
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t t = 0; t < T; ++t) gbias[j] += gout[(b * C_out + j) * T + t];
}

void conv2d_spatial_forward(std::size_t B, std::size_t C, std::size_t T, std::size_t k,
                            const double* x, const double* kv, double* out) {
    const std::ptrdiff_t pl = static_cast<std::ptrdiff_t>(pad_left(k));
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < T; ++t) {
                double acc = 0.0;
                for (std::size_t q = 0; q < k; ++q) {
                    const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(c) +
                                              static_cast<std::ptrdiff_t>(q) - pl;
                    if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(C)) continue;
                    acc += kv[q] * x[(b * C + static_cast<std::size_t>(cc)) * T + t];
                }
                out[(b * C + c) * T + t] = acc;
            }
}

void linear_forward(std::size_t B, std::size_t d_in, std::size_t d_out, const double* x,
                    const double* w, const double* bias, double* y) {
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < d_out; ++o) {
            double acc = bias ? bias[o] : 0.0;
            for (std::size_t i = 0; i < d_in; ++i) acc += w[o * d_in + i] * x[b * d_in + i];
            y[b * d_out + o] = acc;
        }
}

}  // namespace ref

}  // namespace spikedec::kernels
