#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "spikedec/data.hpp"
#include "spikedec/energy.hpp"
#include "spikedec/rng.hpp"

using namespace spikedec;

namespace {

std::string temp_path(const char* name) {
    return std::string("/tmp/spikedec_energy_") + name + "_" + std::to_string(getpid());
}

std::vector<const Trial*> session_trials(const SessionSet& d, std::size_t s) {
    std::vector<const Trial*> out;
    for (const Trial& t : d.sessions[s].trials) out.push_back(&t);
    return out;
}

}  // namespace

TEST_CASE("operation counts match hand arithmetic") {
    REQUIRE(count_conv_snn(2, 3, 10, 2, 1.0) == OpCount{0.0, 120.0});
    REQUIRE(count_conv_snn(2, 3, 10, 2, 2.0) == OpCount{0.0, 240.0});
    REQUIRE(count_conv_snn(5, 5, 5, 5, 0.0) == OpCount{0.0, 0.0});
    REQUIRE(count_conv_ann(4, 10, 20, 10) == OpCount{8000.0, 0.0});
    REQUIRE(count_bn_plif(7, 10) == OpCount{140.0, 0.0});
    REQUIRE(count_classifier(40, 3) == OpCount{120.0, 0.0});

    // 66*10*128 + 33*128
    REQUIRE(count_ff(66, 100, 128, 10, 33) == OpCount{88704.0, 0.0});

    REQUIRE_THROWS_AS(count_conv_snn(1, 1, 1, 1, -0.5), ConfigError);
    REQUIRE_THROWS_AS(count_ff(4, 10, 8, 3, 2), ConfigError);  // 3 does not divide 10
    REQUIRE_THROWS_AS(count_ff(4, 10, 8, 0, 2), ConfigError);
}

TEST_CASE("the two feature-fusion count modes coincide exactly when T == b^2") {
    REQUIRE(count_ff(66, 100, 128, 10, 33, FfCountMode::Dims) ==
            count_ff(66, 100, 128, 10, 33, FfCountMode::Paper));
    REQUIRE(count_ff(5, 9, 7, 3, 2, FfCountMode::Dims) ==
            count_ff(5, 9, 7, 3, 2, FfCountMode::Paper));
    // and diverge otherwise: 66*50*128/10 = 42240 vs 66*10*128 = 84480
    REQUIRE(count_ff(66, 50, 128, 10, 33, FfCountMode::Paper).mac == 42240.0 + 33.0 * 128.0);
    REQUIRE(count_ff(66, 50, 128, 10, 33, FfCountMode::Dims).mac == 84480.0 + 33.0 * 128.0);
}

TEST_CASE("total_energy prices MACs and ACs independently") {
    const EnergyModel m;  // 4.6 pJ / 0.9 pJ
    REQUIRE(total_energy({1.0, 0.0}, m) == 4.6);
    REQUIRE(total_energy({0.0, 1.0}, m) == 0.9);
    REQUIRE(total_energy({1e6, 1e6}, m) / kPicoPerMicro == doctest::Approx(5.5));
    // a 16.16M-MAC dense network costs about 74.3 uJ
    REQUIRE(total_energy({16.16e6, 0.0}, m) / kPicoPerMicro ==
            doctest::Approx(74.3).epsilon(0.01));
    const EnergyModel custom{2.0, 0.5};
    REQUIRE(total_energy({3.0, 4.0}, custom) == 8.0);
}

TEST_CASE("count_layer dispatches on the kind string") {
    LayerSpec s;
    s.kind = "conv_snn";
    s.C_in = 2;
    s.C_out = 3;
    s.T = 10;
    s.k = 2;
    s.r = 1.0;
    REQUIRE(count_layer(s) == OpCount{0.0, 120.0});
    s.kind = "conv_ann";
    REQUIRE(count_layer(s) == OpCount{120.0, 0.0});
    LayerSpec bn;
    bn.kind = "bn";
    bn.C = 7;
    bn.T = 10;
    REQUIRE(count_layer(bn) == OpCount{140.0, 0.0});
    bn.kind = "plif";
    REQUIRE(count_layer(bn) == OpCount{140.0, 0.0});
    LayerSpec ff;
    ff.kind = "ff_projectors";
    ff.C = 66;
    ff.T = 100;
    ff.d = 128;
    ff.b = 10;
    ff.C_h = 33;
    REQUIRE(count_layer(ff) == OpCount{88704.0, 0.0});
    LayerSpec cls;
    cls.kind = "classifier";
    cls.d_f = 40;
    cls.n_class = 3;
    REQUIRE(count_layer(cls) == OpCount{120.0, 0.0});
    LayerSpec raw;
    raw.kind = "mac";
    raw.r = 16.16e6;
    REQUIRE(count_layer(raw) == OpCount{16.16e6, 0.0});
    LayerSpec bad;
    bad.kind = "pool";
    REQUIRE_THROWS_AS(count_layer(bad), ConfigError);
}

TEST_CASE("layer-spec files load and fail with typed errors") {
    const std::string path = temp_path("specs");
    {
        std::ofstream f(path);
        f << R"([{"name":"ann","params":42,"layers":[
               {"kind":"conv_ann","C_in":4,"C_out":10,"T":20,"k":10},
               {"kind":"classifier","d_f":40,"n_class":3}]},
              {"layers":[{"kind":"mac","r":1000.0}]}])";
    }
    auto specs = load_layer_specs(path);
    REQUIRE(specs.size() == 2);
    REQUIRE(specs[0].name == "ann");
    REQUIRE(specs[0].params == 42);
    REQUIRE(specs[0].layers.size() == 2);
    OpCount total;
    for (const auto& l : specs[0].layers) total += count_layer(l);
    REQUIRE(total == OpCount{8120.0, 0.0});
    REQUIRE(specs[1].name == "unnamed");
    REQUIRE(count_layer(specs[1].layers[0]).mac == 1000.0);

    {
        std::ofstream f(path);
        f << "{\"not\": \"an array\"}";
    }
    REQUIRE_THROWS_AS(load_layer_specs(path), FormatError);
    {
        std::ofstream f(path);
        f << "[{\"name\":\"x\"}]";  // missing layers
    }
    REQUIRE_THROWS_AS(load_layer_specs(path), FormatError);
    {
        std::ofstream f(path);
        f << "not json";
    }
    REQUIRE_THROWS_AS(load_layer_specs(path), FormatError);
    std::remove(path.c_str());
    REQUIRE_THROWS_AS(load_layer_specs(path), IoError);
}

TEST_CASE("profiled analytic counts equal instrumented counts bit-exactly") {
    Rng rng(41);
    for (int it = 0; it < 50; ++it) {
        SynthConfig sc;
        sc.n_sessions = 1;
        sc.trials_per_session = 3;
        sc.C = 2 + rng.uniform_int(10);
        sc.T = 6 + 2 * rng.uniform_int(20);
        sc.seed = 100 + static_cast<std::uint64_t>(it);
        sc.base_rate = 0.05 + 0.4 * rng.uniform01();
        SessionSet data = generate_synthetic(sc);

        SnnConfig mc;
        mc.C_in = sc.C;
        mc.T = sc.T;
        mc.n_class = 3;
        mc.C_h = 2 + rng.uniform_int(6);
        mc.k_temp = 1 + 2 * rng.uniform_int(4);
        mc.k_spat = 1 + 2 * rng.uniform_int(3);
        SnnModel model(mc, sc.seed);

        EnergyProfile p = profile_model(model, nullptr, session_trials(data, 0));
        REQUIRE(!p.layers.empty());
        for (const auto& row : p.layers) {
            REQUIRE(row.analytic_ac == row.instrumented_ac);  // exact
            REQUIRE(row.mean_input_rate >= 0.0);
        }
        REQUIRE(p.mean_energy_pj > 0.0);  // BN/PLIF/classifier MACs at least
    }
}

TEST_CASE("an all-silent input costs zero accumulates") {
    SynthConfig sc;
    sc.n_sessions = 1;
    sc.trials_per_session = 4;
    sc.C = 6;
    sc.T = 10;
    sc.base_rate = 0.0;
    sc.class_contrast = 1.0;
    SessionSet data = generate_synthetic(sc);
    SnnConfig mc;
    mc.C_in = 6;
    mc.T = 10;
    mc.n_class = 3;
    mc.C_h = 4;
    mc.k_temp = 3;
    mc.k_spat = 3;
    SnnModel model(mc, 1);
    EnergyProfile p = profile_model(model, nullptr, session_trials(data, 0));
    REQUIRE(p.layers[0].instrumented_ac == 0.0);
    REQUIRE(p.layers[0].analytic_ac == 0.0);
    REQUIRE(p.mean_counts.ac == 0.0);
    REQUIRE(p.mean_counts.mac > 0.0);
}

TEST_CASE("energy grows monotonically with the hidden width") {
    SynthConfig sc;
    sc.n_sessions = 1;
    sc.trials_per_session = 4;
    sc.C = 8;
    sc.T = 12;
    sc.seed = 2;
    SessionSet data = generate_synthetic(sc);
    auto trials = session_trials(data, 0);
    double prev = 0.0;
    for (std::size_t C_h : {2, 4, 8, 16}) {
        SnnConfig mc;
        mc.C_in = 8;
        mc.T = 12;
        mc.n_class = 3;
        mc.C_h = C_h;
        mc.k_temp = 5;
        mc.k_spat = 3;
        SnnModel model(mc, 3);
        const double e = profile_model(model, nullptr, trials).mean_energy_pj;
        REQUIRE(e > prev);
        prev = e;
    }
}

TEST_CASE("a fusion head adds projector and classifier MACs to the profile") {
    SynthConfig sc;
    sc.n_sessions = 1;
    sc.trials_per_session = 4;
    sc.C = 8;
    sc.T = 12;
    sc.seed = 4;
    SessionSet data = generate_synthetic(sc);
    auto trials = session_trials(data, 0);
    SnnConfig mc;
    mc.C_in = 8;
    mc.T = 12;
    mc.n_class = 3;
    mc.C_h = 4;
    mc.k_temp = 5;
    mc.k_spat = 3;
    SnnModel model(mc, 5);
    FusionConfig fc;
    fc.d = 16;
    fc.b = 4;
    FusionHead head(fc, 8, 4, 3, 5);
    head.fit_nav_standardization(trials);

    EnergyProfile plain = profile_model(model, nullptr, trials);
    EnergyProfile fused = profile_model(model, &head, trials);
    // same spike-driven side, more MACs
    REQUIRE(fused.mean_counts.ac == plain.mean_counts.ac);
    const double extra = static_cast<double>(4 * fc.d + 8 * fc.b * fc.d) +
                         static_cast<double>(2 * fc.d * 3) - static_cast<double>(4 * 3);
    REQUIRE(fused.mean_counts.mac == doctest::Approx(plain.mean_counts.mac + extra));
}

TEST_CASE("report formatting includes every row") {
    std::vector<EnergyReportRow> rows{{"snn", 100, {10.0, 2000.0}, 1846.0, 1.0},
                                      {"ann", 200, {5000.0, 0.0}, 23000.0, 12.5}};
    const std::string txt = format_energy_report(rows);
    REQUIRE(txt.find("snn") != std::string::npos);
    REQUIRE(txt.find("ann") != std::string::npos);
    const std::string csv = format_energy_report_csv(rows);
    REQUIRE(csv.find("model,params,mac,ac,energy_uj,ratio_vs_snn") == 0);
    REQUIRE(csv.find("ann,200,5000,0,0.023,12.5") != std::string::npos);
}

TEST_CASE("parameter_count sums tensor sizes") {
    SnnConfig mc;
    mc.C_in = 8;
    mc.T = 12;
    mc.n_class = 3;
    mc.C_h = 4;
    mc.k_temp = 5;
    mc.k_spat = 3;
    SnnModel model(mc, 1);
    std::size_t want = 0;
    for (Parameter* p : model.parameters()) want += p->value.size();
    REQUIRE(parameter_count(model) == want);
    REQUIRE(want > 0);

    FusionConfig fc;
    fc.d = 6;
    fc.b = 3;
    FusionHead head(fc, 8, 4, 3, 1);
    // p_df [C_h x d] + p_nav [C*b x d] + cls [2d x n_class] + bias [n_class]
    REQUIRE(parameter_count(head) == 4 * 6 + 8 * 3 * 6 + 2 * 6 * 3 + 3);
}
