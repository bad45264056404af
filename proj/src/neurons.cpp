#include "spikedec/neurons.hpp"

#include <algorithm>
#include <limits>

namespace spikedec {

thread_local std::uint64_t eif_clamp_count = 0;

double surrogate_grad(const SurrogateKind& kind, double h, double v_th) {
    const double z = kind.alpha * (h - v_th);
    switch (kind.variant) {
        case SurrogateVariant::Sigmoid: {
            const double s = sigmoid(z);
            return s * (1.0 - s) * kind.alpha;
        }
        case SurrogateVariant::ArcTan:
            return kind.alpha / (M_PI * (1.0 + z * z));
    }
    return 0.0;
}

double surrogate_primitive(const SurrogateKind& kind, double h, double v_th) {
    const double z = kind.alpha * (h - v_th);
    switch (kind.variant) {
        case SurrogateVariant::Sigmoid:
            return sigmoid(z);
        case SurrogateVariant::ArcTan:
            return std::atan(z) / M_PI + 0.5;
    }
    return 0.0;
}

namespace {

void check_len(const NeuronState& state, std::span<const double> input, const char* who) {
    if (state.u.size() != input.size())
        throw DimensionError(std::string(who) + ": state/input length mismatch");
}

void check_finite(double u, std::size_t i, const char* who) {
    if (!std::isfinite(u))
        throw NumericError(std::string(who) + ": non-finite potential at unit " +
                           std::to_string(i));
}

// Shared fire-and-hard-reset step for the one-state models: h is the
// candidate potential, spike iff h >= v_th.
std::vector<double> fire_reset(NeuronState& state, std::span<const double> h, double v_th,
                               double u_reset, const char* who) {
    std::vector<double> spikes(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        check_finite(h[i], i, who);
        const bool fired = h[i] >= v_th;
        spikes[i] = fired ? 1.0 : 0.0;
        state.u[i] = fired ? u_reset : h[i];
    }
    return spikes;
}

// A potential that is subthreshold in exact arithmetic must stay subthreshold
// after rounding to double, or a unit driven toward the threshold from below
// (constant I = V_th, beta = 1/2) spuriously fires once 1 - 2^-54 rounds up to
// the threshold. Computed in extended precision; the rounded value is nudged
// below V_th when rounding alone would have crossed it.
double leaky_update(double beta, double u, double in, double v_th) {
    const long double hx = static_cast<long double>(beta) * u +
                           static_cast<long double>(1.0 - beta) * in;
    double h = static_cast<double>(hx);
    if (h >= v_th && hx < static_cast<long double>(v_th))
        h = std::nextafter(v_th, -std::numeric_limits<double>::infinity());
    return h;
}

}  // namespace

std::vector<double> plif_step(NeuronState& state, const PlifParams& p,
                              std::span<const double> input) {
    check_len(state, input, "plif_step");
    const double beta = p.beta();
    std::vector<double> h(input.size());
    for (std::size_t i = 0; i < input.size(); ++i)
        h[i] = leaky_update(beta, state.u[i], input[i], p.v_th);
    return fire_reset(state, h, p.v_th, p.u_reset, "plif_step");
}

std::vector<double> lif_step(NeuronState& state, const PlifParams& p,
                             std::span<const double> input) {
    // LIF is PLIF with the time constant held fixed; the update rule is identical.
    check_len(state, input, "lif_step");
    const double beta = p.beta();
    std::vector<double> h(input.size());
    for (std::size_t i = 0; i < input.size(); ++i)
        h[i] = leaky_update(beta, state.u[i], input[i], p.v_th);
    return fire_reset(state, h, p.v_th, p.u_reset, "lif_step");
}

std::vector<double> qif_step(NeuronState& state, const QifParams& p,
                             std::span<const double> input) {
    check_len(state, input, "qif_step");
    std::vector<double> h(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double u = state.u[i];
        h[i] = u + (u - p.u_rest) * (u - p.u_c) / p.tau_q + input[i];
    }
    return fire_reset(state, h, p.v_th, p.u_reset, "qif_step");
}

std::vector<double> eif_step(NeuronState& state, const EifParams& p,
                             std::span<const double> input) {
    check_len(state, input, "eif_step");
    std::vector<double> h(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double u = state.u[i];
        double e = (u - p.theta_t) / p.delta_t;
        if (e > kEifExpClamp) {
            e = kEifExpClamp;
            ++eif_clamp_count;
        }
        h[i] = u + (-(u - p.u_rest) + p.delta_t * std::exp(e) + input[i]) / p.tau_e;
    }
    return fire_reset(state, h, p.v_th, p.u_reset, "eif_step");
}

std::vector<double> izhikevich_step(NeuronState& state, const IzhikevichParams& p,
                                    std::span<const double> input) {
    check_len(state, input, "izhikevich_step");
    if (state.aux.size() != state.u.size())
        throw DimensionError("izhikevich_step: recovery variable not initialized");
    std::vector<double> spikes(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double v = state.u[i];
        const double w = state.aux[i];
        const double h = v + 0.04 * v * v + 5.0 * v + 140.0 - w + input[i];
        check_finite(h, i, "izhikevich_step");
        double w_next = w + p.a * (p.b * v - w);
        const bool fired = h >= p.v_th;
        spikes[i] = fired ? 1.0 : 0.0;
        state.u[i] = fired ? p.c : h;
        state.aux[i] = fired ? w_next + p.d : w_next;
    }
    return spikes;
}

double plif_unroll_closed_form(const PlifParams& p, std::span<const double> z) {
    const double beta = p.beta();
    double h = 0.0;
    const std::size_t n = z.size();
    for (std::size_t s = 0; s < n; ++s)
        h += std::pow(beta, static_cast<double>(n - 1 - s)) * (1.0 - beta) * z[s];
    return h;
}

}  // namespace spikedec
