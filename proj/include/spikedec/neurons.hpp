#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spikedec/errors.hpp"

namespace spikedec {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

enum class SurrogateVariant : std::uint8_t { Sigmoid, ArcTan };

struct SurrogateKind {
    SurrogateVariant variant = SurrogateVariant::Sigmoid;
    double alpha = 4.0;

    bool operator==(const SurrogateKind&) const = default;
};

// Derivative of the smoothed spike function at membrane value h.
// Sigmoid: d/dh sigma(alpha (h - V_th)); arctan: d/dh [atan(alpha (h - V_th))/pi + 1/2].
// Both peak at h == V_th and are strictly positive.
double surrogate_grad(const SurrogateKind& kind, double h, double v_th);

// The smoothed spike function itself, used as the forward nonlinearity in
// soft-forward mode. Its exact derivative is surrogate_grad.
double surrogate_primitive(const SurrogateKind& kind, double h, double v_th);

// Leaky integrate-and-fire with a learnable time constant. The constant is
// stored as an unconstrained scalar w with beta = sigmoid(w), which keeps
// 0 < beta < 1 under gradient updates; tau = 1 / (1 - beta) > 1 follows.
struct PlifParams {
    double w = 0.0;  // beta = 0.5 at w = 0
    double v_th = 1.0;
    double u_reset = 0.0;

    double beta() const { return sigmoid(w); }
    double tau() const { return 1.0 / (1.0 - beta()); }
    static PlifParams from_beta(double beta, double v_th = 1.0, double u_reset = 0.0) {
        return PlifParams{std::log(beta / (1.0 - beta)), v_th, u_reset};
    }
};

struct QifParams {
    double u_rest = 0.0;
    double u_c = 0.8;
    double tau_q = 2.0;
    double v_th = 1.0;
    double u_reset = 0.0;
};

struct EifParams {
    double u_rest = 0.0;
    double delta_t = 0.5;
    double theta_t = 0.8;
    double tau_e = 2.0;
    double v_th = 1.0;
    double u_reset = 0.0;
};

// Regular-spiking defaults.
struct IzhikevichParams {
    double a = 0.02;
    double b = 0.2;
    double c = -65.0;
    double d = 8.0;
    double v_th = 30.0;
};

// Membrane potentials for a population of units; aux carries the Izhikevich
// recovery variable and is empty for the one-state models.
struct NeuronState {
    std::vector<double> u;
    std::vector<double> aux;

    static NeuronState resting(std::size_t n, double u0 = 0.0, double aux0 = 0.0,
                               bool with_aux = false) {
        NeuronState s;
        s.u.assign(n, u0);
        if (with_aux) s.aux.assign(n, aux0);
        return s;
    }
};

// One discrete time step. Each returns the binary spike vector and updates the
// state in place with hard reset for spiking units. Throws DimensionError on
// length mismatch and NumericError if a potential becomes non-finite.
std::vector<double> plif_step(NeuronState& state, const PlifParams& p, std::span<const double> input);
std::vector<double> lif_step(NeuronState& state, const PlifParams& p, std::span<const double> input);
std::vector<double> qif_step(NeuronState& state, const QifParams& p, std::span<const double> input);
std::vector<double> eif_step(NeuronState& state, const EifParams& p, std::span<const double> input);
std::vector<double> izhikevich_step(NeuronState& state, const IzhikevichParams& p,
                                    std::span<const double> input);

// Clamp for the EIF exponential; crossings are tallied in eif_clamp_count.
inline constexpr double kEifExpClamp = 20.0;
extern thread_local std::uint64_t eif_clamp_count;

// Subthreshold membrane potential after feeding inputs z from rest,
// h_t = sum_s beta^(t-s) (1 - beta) z_s. Valid only while no spike occurs;
// serves as an independent check on iterated plif_step.
double plif_unroll_closed_form(const PlifParams& p, std::span<const double> z);

}  // namespace spikedec
