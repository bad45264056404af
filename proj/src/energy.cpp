#include "spikedec/energy.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace spikedec {

OpCount count_conv_snn(std::size_t C_in, std::size_t C_out, std::size_t T, std::size_t k,
                       double r) {
    if (r < 0.0) throw ConfigError("count_conv_snn: firing rate must be >= 0");
    return {0.0, static_cast<double>(C_in * C_out * T * k) * r};
}

OpCount count_conv_ann(std::size_t C_in, std::size_t C_out, std::size_t T, std::size_t k) {
    return {static_cast<double>(C_in * C_out * T * k), 0.0};
}

OpCount count_bn_plif(std::size_t C, std::size_t T) {
    return {2.0 * static_cast<double>(C * T), 0.0};
}

OpCount count_ff(std::size_t C, std::size_t T, std::size_t d, std::size_t b, std::size_t C_h,
                 FfCountMode mode) {
    if (b == 0 || T % b != 0) throw ConfigError("count_ff: b must divide T");
    const double nav = mode == FfCountMode::Dims
                           ? static_cast<double>(C * b * d)
                           : static_cast<double>(C * T * d) / static_cast<double>(b);
    return {nav + static_cast<double>(C_h * d), 0.0};
}

OpCount count_classifier(std::size_t d_f, std::size_t n_class) {
    return {static_cast<double>(d_f * n_class), 0.0};
}

double total_energy(const OpCount& counts, const EnergyModel& model) {
    return model.e_mac * counts.mac + model.e_ac * counts.ac;
}

OpCount count_layer(const LayerSpec& s) {
    if (s.kind == "conv_snn") return count_conv_snn(s.C_in, s.C_out, s.T, s.k, s.r);
    if (s.kind == "conv_ann") return count_conv_ann(s.C_in, s.C_out, s.T, s.k);
    if (s.kind == "bn" || s.kind == "plif") return count_bn_plif(s.C, s.T);
    if (s.kind == "ff_projectors") return count_ff(s.C, s.T, s.d, s.b, s.C_h);
    if (s.kind == "classifier") return count_classifier(s.d_f, s.n_class);
    if (s.kind == "mac")  // raw pre-tallied MAC total
        return {s.r, 0.0};
    throw ConfigError("count_layer: unknown layer kind '" + s.kind + "'");
}

namespace {

void parse_specs(const nlohmann::json& j, std::vector<ModelSpec>& out) {
    for (const auto& m : j) {
        ModelSpec spec;
        spec.name = m.value("name", "unnamed");
        spec.params = m.value("params", 0u);
        for (const auto& l : m.at("layers")) {
            LayerSpec ls;
            ls.kind = l.at("kind").get<std::string>();
            ls.C_in = l.value("C_in", 0u);
            ls.C_out = l.value("C_out", 0u);
            ls.T = l.value("T", 0u);
            ls.k = l.value("k", 0u);
            ls.C = l.value("C", 0u);
            ls.d = l.value("d", 0u);
            ls.b = l.value("b", 0u);
            ls.C_h = l.value("C_h", 0u);
            ls.d_f = l.value("d_f", 0u);
            ls.n_class = l.value("n_class", 0u);
            ls.r = l.value("r", 0.0);
            spec.layers.push_back(ls);
        }
        out.push_back(std::move(spec));
    }
}

}  // namespace

std::vector<ModelSpec> load_layer_specs(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open layer-spec file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("layer-spec file: " + std::string(e.what()));
    }
    if (!j.is_array()) throw FormatError("layer-spec file: expected a top-level array");

    std::vector<ModelSpec> out;
    try {
        parse_specs(j, out);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("layer-spec file: " + std::string(e.what()));
    }
    return out;
}

EnergyProfile profile_model(SnnModel& model, const FusionHead* head,
                            std::span<const Trial* const> trials, const EnergyModel& energy) {
    if (trials.empty()) throw DimensionError("profile_model: empty trial list");
    const SnnConfig& cfg = model.config();
    const std::size_t C_h = cfg.hidden_channels();

    EnergyProfile profile;
    if (cfg.enable_tc) profile.layers.push_back({"tc_conv"});
    if (cfg.enable_sc) profile.layers.push_back({"sc_conv"});

    double total_energy_pj = 0.0;
    OpCount total_counts;
    for (const Trial* trial : trials) {
        std::vector<LayerCounts> counts;
        const Trial* one[] = {trial};
        model.forward_instrumented(one, counts);

        // C_in*C_out*T*k*r with r = events/(C_in*T), evaluated in extended
        // precision: the result is the integer events*C_out*k, and a
        // pre-rounded double rate can land the product one ulp off it.
        const auto snn_ac = [](std::size_t C_in, std::size_t C_out, std::size_t T, std::size_t k,
                               double events) {
            const long double r = static_cast<long double>(events) /
                                  static_cast<long double>(C_in * T);
            return OpCount{0.0, static_cast<double>(
                                    r * static_cast<long double>(C_in * C_out * T * k))};
        };

        OpCount trial_counts;
        std::size_t row = 0;
        for (const LayerCounts& lc : counts) {
            OpCount analytic;
            if (lc.layer == "tc_conv")
                analytic = snn_ac(cfg.C_in, C_h, cfg.T, cfg.k_temp, lc.input_events);
            else
                analytic = snn_ac(C_h, 1, cfg.T, cfg.k_spat, lc.input_events);
            trial_counts += analytic;
            profile.layers[row].analytic_ac += analytic.ac;
            profile.layers[row].instrumented_ac += lc.ac_events;
            profile.layers[row].mean_input_rate += lc.input_rate;
            ++row;
        }
        // MAC-side layers: one BN and one neuron stage per enabled conv block.
        if (cfg.enable_tc) trial_counts += count_bn_plif(C_h, cfg.T) + count_bn_plif(C_h, cfg.T);
        if (cfg.enable_sc) trial_counts += count_bn_plif(C_h, cfg.T) + count_bn_plif(C_h, cfg.T);
        if (head) {
            const FusionConfig& fc = head->config();
            if (fc.enable_pdf) trial_counts += {static_cast<double>(C_h * fc.d), 0.0};
            if (fc.enable_pnav)
                trial_counts += {static_cast<double>(head->nav_width() * fc.d), 0.0};
            trial_counts += count_classifier(head->classifier_width(), cfg.n_class);
        } else {
            trial_counts += count_classifier(C_h, cfg.n_class);
        }

        total_counts += trial_counts;
        total_energy_pj += total_energy(trial_counts, energy);
    }

    const double n = static_cast<double>(trials.size());
    for (auto& row : profile.layers) {
        row.analytic_ac /= n;
        row.instrumented_ac /= n;
        row.mean_input_rate /= n;
    }
    profile.mean_counts = {total_counts.mac / n, total_counts.ac / n};
    profile.mean_energy_pj = total_energy_pj / n;
    return profile;
}

std::string format_energy_report(const std::vector<EnergyReportRow>& rows) {
    std::ostringstream os;
    os << "model                  params             MAC              AC        energy      ratio\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-18s %10zu  MAC %14.0f  AC %14.1f  %12.4f uJ  %8.1fx\n",
                      r.name.c_str(), r.params, r.counts.mac, r.counts.ac,
                      r.energy_pj / kPicoPerMicro, r.ratio_vs_snn);
        os << buf;
    }
    return os.str();
}

std::string format_energy_report_csv(const std::vector<EnergyReportRow>& rows) {
    std::ostringstream os;
    os << "model,params,mac,ac,energy_uj,ratio_vs_snn\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%zu,%.6g,%.6g,%.6g,%.6g\n", r.name.c_str(), r.params,
                      r.counts.mac, r.counts.ac, r.energy_pj / kPicoPerMicro, r.ratio_vs_snn);
        os << buf;
    }
    return os.str();
}

std::size_t parameter_count(const SnnModel& model) {
    std::size_t n = 0;
    for (const Parameter* p : const_cast<SnnModel&>(model).parameters()) n += p->value.size();
    return n;
}

std::size_t parameter_count(const FusionHead& head) {
    std::size_t n = 0;
    for (const Parameter* p : const_cast<FusionHead&>(head).parameters()) n += p->value.size();
    return n;
}

}  // namespace spikedec
