#pragma once

#include <span>
#include <string>
#include <vector>

#include "spikedec/fusion.hpp"
#include "spikedec/model.hpp"

namespace spikedec {

// Multiply-accumulate vs accumulate-only tallies. ac is real because the
// spike-driven counts scale with measured firing rates.
struct OpCount {
    double mac = 0.0;
    double ac = 0.0;

    OpCount& operator+=(const OpCount& o) {
        mac += o.mac;
        ac += o.ac;
        return *this;
    }
    friend OpCount operator+(OpCount a, const OpCount& b) { return a += b; }
    bool operator==(const OpCount&) const = default;
};

// Energy per operation in picojoules (45 nm, 32-bit float).
struct EnergyModel {
    double e_mac = 4.6;
    double e_ac = 0.9;
};

// Spike-driven convolution: accumulates only, scaled by the input firing rate.
OpCount count_conv_snn(std::size_t C_in, std::size_t C_out, std::size_t T, std::size_t k, double r);
// Dense convolution: one MAC per tap.
OpCount count_conv_ann(std::size_t C_in, std::size_t C_out, std::size_t T, std::size_t k);
// Batchnorm and PLIF each cost 2*C*T MACs; apply once per layer of each kind.
OpCount count_bn_plif(std::size_t C, std::size_t T);

enum class FfCountMode {
    Dims,  // count from the actual projection dimensions: C*b*d + C_h*d
    Paper, // published form C*T*d/b + C_h*d; coincides with Dims when T == b^2
};
OpCount count_ff(std::size_t C, std::size_t T, std::size_t d, std::size_t b, std::size_t C_h,
                 FfCountMode mode = FfCountMode::Dims);
OpCount count_classifier(std::size_t d_f, std::size_t n_class);

// Total energy in picojoules.
double total_energy(const OpCount& counts, const EnergyModel& model);

inline constexpr double kPicoPerMicro = 1e6;

// One layer of a generic (usually ANN baseline) stack, loadable from JSON.
struct LayerSpec {
    std::string kind;  // conv_snn | conv_ann | bn | plif | ff_projectors | classifier
    std::size_t C_in = 0, C_out = 0, T = 0, k = 0;
    std::size_t C = 0, d = 0, b = 0, C_h = 0, d_f = 0, n_class = 0;
    double r = 0.0;
};
OpCount count_layer(const LayerSpec& spec);

struct ModelSpec {
    std::string name;
    std::size_t params = 0;
    std::vector<LayerSpec> layers;
};
std::vector<ModelSpec> load_layer_specs(const std::string& path);

// Average per-trial profile of an instrumented model.
struct EnergyProfile {
    struct LayerRow {
        std::string layer;
        double analytic_ac = 0.0;      // mean per trial, Eq-style count
        double instrumented_ac = 0.0;  // mean per trial, measured events
        double mean_input_rate = 0.0;
    };
    std::vector<LayerRow> layers;
    OpCount mean_counts;   // per trial
    double mean_energy_pj = 0.0;
};

EnergyProfile profile_model(SnnModel& model, const FusionHead* head,
                            std::span<const Trial* const> trials,
                            const EnergyModel& energy = {});

// Comparison table row: name, params, counts, energy, ratio vs the reference.
struct EnergyReportRow {
    std::string name;
    std::size_t params = 0;
    OpCount counts;
    double energy_pj = 0.0;
    double ratio_vs_snn = 1.0;
};
std::string format_energy_report(const std::vector<EnergyReportRow>& rows);
std::string format_energy_report_csv(const std::vector<EnergyReportRow>& rows);

std::size_t parameter_count(const SnnModel& model);
std::size_t parameter_count(const FusionHead& head);

}  // namespace spikedec
