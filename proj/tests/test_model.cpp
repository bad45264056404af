#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "spikedec/data.hpp"
#include "spikedec/model.hpp"
#include "spikedec/rng.hpp"

using namespace spikedec;

namespace {

SessionSet small_data() {
    SynthConfig cfg;
    cfg.n_sessions = 2;
    cfg.trials_per_session = 8;
    cfg.C = 8;
    cfg.T = 12;
    cfg.seed = 3;
    return generate_synthetic(cfg);
}

SnnConfig small_cfg() {
    SnnConfig cfg;
    cfg.C_in = 8;
    cfg.T = 12;
    cfg.n_class = 3;
    cfg.C_h = 4;
    cfg.k_temp = 5;
    cfg.k_spat = 3;
    return cfg;
}

std::vector<const Trial*> first_trials(const SessionSet& d, std::size_t n) {
    std::vector<const Trial*> out;
    for (const Trial& t : d.sessions[0].trials) {
        out.push_back(&t);
        if (out.size() == n) break;
    }
    return out;
}

std::string temp_path(const char* name) {
    return std::string("/tmp/spikedec_model_") + name + "_" + std::to_string(getpid());
}

}  // namespace

TEST_CASE("forward produces [B, n_class] logits and eval is deterministic") {
    SessionSet data = small_data();
    SnnModel model(small_cfg(), 1);
    auto batch = first_trials(data, 5);
    Tensor a = model.forward(batch, Mode::Eval);
    REQUIRE(a.shape == std::vector<std::size_t>{5, 3});
    Tensor b = model.forward(batch, Mode::Eval);
    REQUIRE(a.data == b.data);  // bit-identical

    Tensor feats = model.extract_features(batch);
    REQUIRE(feats.shape == std::vector<std::size_t>{5, 4});
}

TEST_CASE("train-mode forward updates batchnorm statistics, eval does not") {
    SessionSet data = small_data();
    SnnModel model(small_cfg(), 1);
    auto batch = first_trials(data, 5);
    REQUIRE(!model.tc_bn.ever_updated);
    model.forward(batch, Mode::Eval);
    REQUIRE(!model.tc_bn.ever_updated);
    REQUIRE(model.tc_bn.eval_with_initial_stats > 0);
    model.forward(batch, Mode::Train);
    REQUIRE(model.tc_bn.ever_updated);
    REQUIRE(model.sc_bn.ever_updated);
}

TEST_CASE("batch conversion rejects inconsistent shapes and preserves counts") {
    SessionSet data = small_data();
    auto batch = first_trials(data, 2);
    Tensor x = batch_to_tensor(batch);
    REQUIRE(x.at3(0, 2, 3) == static_cast<double>(batch[0]->spikes.at(2, 3)));

    Trial odd;
    odd.spikes = SpikeTensor(3, 12);
    std::vector<const Trial*> mixed{batch[0], &odd};
    REQUIRE_THROWS_AS(batch_to_tensor(mixed), DimensionError);
    REQUIRE_THROWS_AS(batch_to_tensor(std::vector<const Trial*>{}), DimensionError);
}

TEST_CASE("ablation switches change the active parameter set but keep the model runnable") {
    SessionSet data = small_data();
    auto batch = first_trials(data, 3);

    SnnConfig full = small_cfg();
    SnnConfig no_tc = full;
    no_tc.enable_tc = false;
    SnnConfig no_sc = full;
    no_sc.enable_sc = false;
    SnnConfig neither = full;
    neither.enable_tc = neither.enable_sc = false;

    SnnModel m_full(full, 1), m_no_tc(no_tc, 1), m_no_sc(no_sc, 1), m_neither(neither, 1);
    REQUIRE(m_full.parameters().size() == 10);  // tc: w,g,xi,tau | sc: k,g,xi,tau | cls: w,b
    REQUIRE(m_no_tc.parameters().size() == 6);
    REQUIRE(m_no_sc.parameters().size() == 6);
    REQUIRE(m_neither.parameters().size() == 2);
    for (SnnModel* m : {&m_full, &m_no_tc, &m_no_sc, &m_neither}) {
        Tensor y = m->forward(batch, Mode::Eval);
        REQUIRE(y.shape == std::vector<std::size_t>{3, 3});
        for (double v : y.data) REQUIRE(std::isfinite(v));
    }
}

TEST_CASE("every neuron kind runs forward") {
    SessionSet data = small_data();
    auto batch = first_trials(data, 2);
    for (const auto kind : {NeuronKind::PLIF, NeuronKind::LIF, NeuronKind::QIF, NeuronKind::EIF,
                            NeuronKind::Izhikevich}) {
        SnnConfig cfg = small_cfg();
        cfg.neuron_kind = kind;
        SnnModel m(cfg, 2);
        Tensor y = m.forward(batch, Mode::Eval);
        for (double v : y.data) REQUIRE(std::isfinite(v));
        // only PLIF carries learnable time constants
        const std::size_t expected = kind == NeuronKind::PLIF ? 10 : 8;
        REQUIRE(m.parameters().size() == expected);
    }
}

TEST_CASE("per-unit time constants widen the PLIF parameter tensors") {
    SnnConfig cfg = small_cfg();
    cfg.per_unit_tau = true;
    SnnModel m(cfg, 1);
    REQUIRE(m.tc_plif_w.value.size() == cfg.C_h);
    REQUIRE(m.sc_plif_w.value.size() == cfg.C_h);
    SnnModel shared(small_cfg(), 1);
    REQUIRE(shared.tc_plif_w.value.size() == 1);
}

TEST_CASE("instrumented forward reports exact event counts") {
    SessionSet data = small_data();
    auto batch = first_trials(data, 4);
    SnnConfig cfg = small_cfg();
    SnnModel m(cfg, 1);
    std::vector<LayerCounts> counts;
    Tensor logits = m.forward_instrumented(batch, counts);
    REQUIRE(counts.size() == 2);
    REQUIRE(counts[0].layer == "tc_conv");
    REQUIRE(counts[1].layer == "sc_conv");

    // the TC input is the raw batch; its event total is the spike-count total
    double events = 0.0;
    for (const Trial* t : batch)
        for (auto v : t->spikes.counts) events += v;
    REQUIRE(counts[0].input_events == events);
    REQUIRE(counts[0].input_rate ==
            doctest::Approx(events / static_cast<double>(4 * cfg.C_in * cfg.T)));
    REQUIRE(counts[0].ac_events == events * static_cast<double>(cfg.C_h * cfg.k_temp));

    // instrumented logits agree with the plain eval forward
    Tensor plain = m.forward(batch, Mode::Eval);
    REQUIRE(logits.data == plain.data);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    SessionSet data = small_data();
    auto batch = first_trials(data, 3);
    SnnConfig cfg = small_cfg();
    cfg.per_unit_tau = true;
    SnnModel m(cfg, 7);
    m.forward(batch, Mode::Train);  // give the BN stats something nontrivial

    const std::string p1 = temp_path("ck1"), p2 = temp_path("ck2");
    m.save_checkpoint(p1);
    m.save_checkpoint(p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(b1 == b2);

    SnnModel loaded = SnnModel::load_checkpoint(p1);
    REQUIRE(loaded.config() == m.config());
    REQUIRE(loaded.forward(batch, Mode::Eval).data == m.forward(batch, Mode::Eval).data);

    // corrupting the payload is caught
    b1[b1.size() / 2] = static_cast<char>(b1[b1.size() / 2] ^ 0x5A);
    std::ofstream out(p1, std::ios::binary);
    out << b1;
    out.close();
    REQUIRE_THROWS_AS(SnnModel::load_checkpoint(p1), ChecksumError);
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("config validation rejects bad values") {
    SnnConfig cfg = small_cfg();
    cfg.C_in = 0;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_cfg();
    cfg.beta_init = 1.0;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_cfg();
    cfg.v_th = 0.0;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_cfg();
    cfg.k_temp = 0;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);

    // batch shape mismatch at forward time names the problem
    SnnModel m(small_cfg(), 1);
    SynthConfig sc;
    sc.n_sessions = 1;
    sc.trials_per_session = 2;
    sc.C = 5;  // wrong channel count
    sc.T = 12;
    SessionSet wrong = generate_synthetic(sc);
    std::vector<const Trial*> batch{&wrong.sessions[0].trials[0]};
    REQUIRE_THROWS_AS(m.forward(batch, Mode::Eval), DimensionError);
}

TEST_CASE("identical seeds give identical initializations; different seeds differ") {
    SnnModel a(small_cfg(), 5), b(small_cfg(), 5), c(small_cfg(), 6);
    REQUIRE(a.tc_w.value.data == b.tc_w.value.data);
    REQUIRE(a.cls_w.value.data == b.cls_w.value.data);
    REQUIRE(a.tc_w.value.data != c.tc_w.value.data);
}
