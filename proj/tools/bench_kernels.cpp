// Compares the OpenMP convolution kernels against the serial reference:
// wall time and (expected bit-exact) agreement on realistic shapes.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "spikedec/kernels.hpp"
#include "spikedec/rng.hpp"

using namespace spikedec;

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        const double t0 = now_s();
        f();
        best = std::min(best, now_s() - t0);
    }
    return best;
}

}  // namespace

int main() {
    constexpr std::size_t B = 32, C_in = 66, C_out = 33, T = 100, k = 64;
    Rng rng(42);
    const std::vector<double> x = random_vec(B * C_in * T, rng);
    const std::vector<double> w = random_vec(C_out * C_in * k, rng);
    const std::vector<double> kv = random_vec(k, rng);
    std::vector<double> out_par(B * C_out * T), out_ref(B * C_out * T);
    std::vector<double> sp_par(B * C_in * T), sp_ref(B * C_in * T);

    std::printf("shape: B=%zu C_in=%zu C_out=%zu T=%zu k=%zu\n\n", B, C_in, C_out, T, k);

    const double t_c1_ref = time_best_of(3, [&] {
        kernels::ref::conv1d_forward(B, C_in, T, C_out, k, x.data(), w.data(), nullptr,
                                     out_ref.data());
    });
    const double t_c1_par = time_best_of(3, [&] {
        kernels::conv1d_forward(B, C_in, T, C_out, k, x.data(), w.data(), nullptr,
                                out_par.data());
    });
    const bool c1_exact =
        std::memcmp(out_ref.data(), out_par.data(), out_ref.size() * sizeof(double)) == 0;
    std::printf("conv1d_forward        serial %8.4f s   parallel %8.4f s   speedup %5.2fx   %s\n",
                t_c1_ref, t_c1_par, t_c1_ref / t_c1_par, c1_exact ? "bit-exact" : "MISMATCH");

    const double t_c2_ref = time_best_of(3, [&] {
        kernels::ref::conv2d_spatial_forward(B, C_in, T, k, x.data(), kv.data(), sp_ref.data());
    });
    const double t_c2_par = time_best_of(3, [&] {
        kernels::conv2d_spatial_forward(B, C_in, T, k, x.data(), kv.data(), sp_par.data());
    });
    const bool c2_exact =
        std::memcmp(sp_ref.data(), sp_par.data(), sp_ref.size() * sizeof(double)) == 0;
    std::printf("conv2d_spatial_fwd    serial %8.4f s   parallel %8.4f s   speedup %5.2fx   %s\n",
                t_c2_ref, t_c2_par, t_c2_ref / t_c2_par, c2_exact ? "bit-exact" : "MISMATCH");

    constexpr std::size_t d_in = 512, d_out = 128;
    const std::vector<double> lx = random_vec(B * d_in, rng);
    const std::vector<double> lw = random_vec(d_out * d_in, rng);
    std::vector<double> ly_ref(B * d_out), ly_par(B * d_out);
    const double t_l_ref = time_best_of(5, [&] {
        kernels::ref::linear_forward(B, d_in, d_out, lx.data(), lw.data(), nullptr, ly_ref.data());
    });
    const double t_l_par = time_best_of(5, [&] {
        kernels::linear_forward(B, d_in, d_out, lx.data(), lw.data(), nullptr, ly_par.data());
    });
    const bool l_exact =
        std::memcmp(ly_ref.data(), ly_par.data(), ly_ref.size() * sizeof(double)) == 0;
    std::printf("linear_forward        serial %8.4f s   parallel %8.4f s   speedup %5.2fx   %s\n",
                t_l_ref, t_l_par, t_l_ref / t_l_par, l_exact ? "bit-exact" : "MISMATCH");

    return (c1_exact && c2_exact && l_exact) ? 0 : 1;
}
