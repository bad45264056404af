#include "spikedec/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "spikedec/rng.hpp"

namespace spikedec {

void SnnConfig::validate() const {
    if (C_in == 0 || T == 0 || n_class == 0) throw ConfigError("SnnConfig: C_in, T, n_class must be positive");
    if (k_temp == 0 || k_spat == 0) throw ConfigError("SnnConfig: kernel lengths must be positive");
    if (v_th <= 0.0) throw ConfigError("SnnConfig: v_th must be positive");
    if (beta_init <= 0.0 || beta_init >= 1.0) throw ConfigError("SnnConfig: beta_init must be in (0,1)");
    if (surrogate.alpha <= 0.0) throw ConfigError("SnnConfig: surrogate alpha must be positive");
}

Tensor batch_to_tensor(std::span<const Trial* const> trials) {
    if (trials.empty()) throw DimensionError("batch_to_tensor: empty batch");
    const std::size_t B = trials.size();
    const std::size_t C = trials[0]->spikes.C, T = trials[0]->spikes.T;
    Tensor out({B, C, T});
    for (std::size_t b = 0; b < B; ++b) {
        const SpikeTensor& s = trials[b]->spikes;
        if (s.C != C || s.T != T) throw DimensionError("batch_to_tensor: inconsistent trial shapes");
        for (std::size_t i = 0; i < C * T; ++i) out.data[b * C * T + i] = s.counts[i];
    }
    return out;
}

std::vector<std::uint16_t> batch_labels(std::span<const Trial* const> trials) {
    std::vector<std::uint16_t> labels(trials.size());
    for (std::size_t i = 0; i < trials.size(); ++i) labels[i] = trials[i]->label;
    return labels;
}

namespace {

Tensor he_uniform(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : t.data) v = (2.0 * rng.uniform01() - 1.0) * limit;
    return t;
}

}  // namespace

SnnModel::SnnModel(SnnConfig cfg, std::uint64_t init_seed)
    : tc_bn(cfg.hidden_channels()), sc_bn(cfg.hidden_channels()), cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::size_t C_h = cfg_.hidden_channels();
    Rng rng = Rng::derive(init_seed, 0xA0DE1);

    tc_w = Parameter(he_uniform({C_h, cfg_.C_in, cfg_.k_temp}, cfg_.C_in * cfg_.k_temp, rng));
    tc_bias = Parameter(Tensor({C_h}));
    tc_gamma = Parameter(Tensor({C_h}));
    tc_gamma.value.fill(1.0);
    tc_xi = Parameter(Tensor({C_h}));
    const double w0 = std::log(cfg_.beta_init / (1.0 - cfg_.beta_init));
    tc_plif_w = Parameter(Tensor({cfg_.per_unit_tau ? C_h : 1}));
    tc_plif_w.value.fill(w0);

    sc_k = Parameter(he_uniform({cfg_.k_spat}, cfg_.k_spat, rng));
    sc_gamma = Parameter(Tensor({C_h}));
    sc_gamma.value.fill(1.0);
    sc_xi = Parameter(Tensor({C_h}));
    sc_plif_w = Parameter(Tensor({cfg_.per_unit_tau ? C_h : 1}));
    sc_plif_w.value.fill(w0);

    cls_w = Parameter(he_uniform({cfg_.n_class, C_h}, C_h, rng));
    cls_b = Parameter(Tensor({cfg_.n_class}));
}

std::vector<Parameter*> SnnModel::parameters() {
    std::vector<Parameter*> ps;
    const bool plif = cfg_.neuron_kind == NeuronKind::PLIF;
    if (cfg_.enable_tc) {
        ps.push_back(&tc_w);
        if (cfg_.conv_bias) ps.push_back(&tc_bias);
        ps.push_back(&tc_gamma);
        ps.push_back(&tc_xi);
        if (plif) ps.push_back(&tc_plif_w);
    }
    if (cfg_.enable_sc) {
        ps.push_back(&sc_k);
        ps.push_back(&sc_gamma);
        ps.push_back(&sc_xi);
        if (plif) ps.push_back(&sc_plif_w);
    }
    ps.push_back(&cls_w);
    if (cfg_.cls_bias) ps.push_back(&cls_b);
    return ps;
}

std::vector<const Tensor*> SnnModel::state_tensors() const {
    return {&tc_w.value,  &tc_bias.value, &tc_gamma.value, &tc_xi.value, &tc_plif_w.value,
            &tc_bn.running_mean, &tc_bn.running_var,
            &sc_k.value,  &sc_gamma.value, &sc_xi.value, &sc_plif_w.value,
            &sc_bn.running_mean, &sc_bn.running_var,
            &cls_w.value, &cls_b.value};
}

NeuronLayerCfg SnnModel::neuron_cfg() const {
    NeuronLayerCfg nc;
    nc.kind = cfg_.neuron_kind;
    nc.surrogate = cfg_.surrogate;
    nc.v_th = cfg_.v_th;
    nc.u_reset = 0.0;
    nc.lif_beta = cfg_.beta_init;
    return nc;
}

SnnModel::ForwardNodes SnnModel::build_forward(Graph& g, Graph::Node* x, Mode mode,
                                               bool soft_forward) {
    if (x->value.rank() != 3 || x->value.dim(1) != cfg_.C_in || x->value.dim(2) != cfg_.T)
        throw DimensionError("SnnModel::build_forward: batch shape does not match config");
    const std::size_t C_h = cfg_.hidden_channels();
    const bool plif = cfg_.neuron_kind == NeuronKind::PLIF;
    NeuronLayerCfg nc = neuron_cfg();
    nc.soft_forward = soft_forward;

    ForwardNodes out;
    Graph::Node* cur = x;
    out.tc_input = cur;
    if (cfg_.enable_tc) {
        cur = g.conv1d(cur, g.param(tc_w), cfg_.conv_bias ? g.param(tc_bias) : nullptr);
        cur = g.batchnorm(cur, g.param(tc_gamma), g.param(tc_xi), tc_bn, mode);
        cur = g.neuron_layer(cur, nc, plif ? g.param(tc_plif_w) : nullptr);
    } else {
        cur = g.group_avg_channels(cur, C_h);
    }
    out.sc_input = cur;
    if (cfg_.enable_sc) {
        cur = g.conv2d_spatial(cur, g.param(sc_k));
        cur = g.batchnorm(cur, g.param(sc_gamma), g.param(sc_xi), sc_bn, mode);
        cur = g.neuron_layer(cur, nc, plif ? g.param(sc_plif_w) : nullptr);
    }
    out.pooled = g.avg_pool_time(cur);
    out.logits = g.linear(out.pooled, g.param(cls_w), cfg_.cls_bias ? g.param(cls_b) : nullptr);
    return out;
}

Tensor SnnModel::forward(std::span<const Trial* const> trials, Mode mode) {
    Graph g;
    Graph::Node* x = g.input(batch_to_tensor(trials));
    return build_forward(g, x, mode).logits->value;
}

Tensor SnnModel::extract_features(std::span<const Trial* const> trials) {
    Graph g;
    Graph::Node* x = g.input(batch_to_tensor(trials));
    return build_forward(g, x, Mode::Eval).pooled->value;
}

Tensor SnnModel::forward_instrumented(std::span<const Trial* const> trials,
                                      std::vector<LayerCounts>& counts) {
    Graph g;
    Graph::Node* x = g.input(batch_to_tensor(trials));
    ForwardNodes nodes = build_forward(g, x, Mode::Eval);
    const std::size_t B = trials.size();
    const std::size_t C_h = cfg_.hidden_channels();

    auto sum_of = [](const Tensor& t) {
        double s = 0.0;
        for (double v : t.data) s += v;
        return s;
    };
    counts.clear();
    if (cfg_.enable_tc) {
        LayerCounts lc;
        lc.layer = "tc_conv";
        lc.input_events = sum_of(nodes.tc_input->value);
        lc.input_rate = lc.input_events / static_cast<double>(B * cfg_.C_in * cfg_.T);
        // Each input event is multiplied into C_h output maps at k_temp taps;
        // padded positions are counted, matching the analytic convention.
        lc.ac_events = lc.input_events * static_cast<double>(C_h * cfg_.k_temp);
        counts.push_back(lc);
    }
    if (cfg_.enable_sc) {
        LayerCounts lc;
        lc.layer = "sc_conv";
        lc.input_events = sum_of(nodes.sc_input->value);
        lc.input_rate = lc.input_events / static_cast<double>(B * C_h * cfg_.T);
        lc.ac_events = lc.input_events * static_cast<double>(cfg_.k_spat);
        counts.push_back(lc);
    }
    return nodes.logits->value;
}

namespace {

constexpr char kModelMagic[4] = {'S', 'P', 'K', 'M'};

using detail::ByteReader;
using detail::put_f64;
using detail::put_u32;

void serialize_config(std::vector<std::uint8_t>& buf, const SnnConfig& c) {
    put_u32(buf, static_cast<std::uint32_t>(c.C_in));
    put_u32(buf, static_cast<std::uint32_t>(c.T));
    put_u32(buf, static_cast<std::uint32_t>(c.n_class));
    put_u32(buf, static_cast<std::uint32_t>(c.C_h));
    put_u32(buf, static_cast<std::uint32_t>(c.k_temp));
    put_u32(buf, static_cast<std::uint32_t>(c.k_spat));
    put_f64(buf, c.v_th);
    put_f64(buf, c.beta_init);
    buf.push_back(static_cast<std::uint8_t>(c.surrogate.variant));
    put_f64(buf, c.surrogate.alpha);
    buf.push_back(static_cast<std::uint8_t>(c.neuron_kind));
    buf.push_back(c.enable_tc);
    buf.push_back(c.enable_sc);
    buf.push_back(c.conv_bias);
    buf.push_back(c.cls_bias);
    buf.push_back(c.per_unit_tau);
}

SnnConfig deserialize_config(ByteReader& r) {
    SnnConfig c;
    c.C_in = r.u32();
    c.T = r.u32();
    c.n_class = r.u32();
    c.C_h = r.u32();
    c.k_temp = r.u32();
    c.k_spat = r.u32();
    c.v_th = r.f64();
    c.beta_init = r.f64();
    c.surrogate.variant = static_cast<SurrogateVariant>(r.u8());
    c.surrogate.alpha = r.f64();
    c.neuron_kind = static_cast<NeuronKind>(r.u8());
    c.enable_tc = r.u8() != 0;
    c.enable_sc = r.u8() != 0;
    c.conv_bias = r.u8() != 0;
    c.cls_bias = r.u8() != 0;
    c.per_unit_tau = r.u8() != 0;
    return c;
}

}  // namespace

void SnnModel::serialize_state(std::vector<std::uint8_t>& buf) const {
    serialize_config(buf, cfg_);
    buf.push_back(tc_bn.ever_updated);
    buf.push_back(sc_bn.ever_updated);
    for (const Tensor* t : state_tensors()) {
        put_u32(buf, static_cast<std::uint32_t>(t->size()));
        for (double v : t->data) put_f64(buf, v);
    }
}

void SnnModel::save_checkpoint(const std::string& path) const {
    std::vector<std::uint8_t> payload;
    serialize_state(payload);
    detail::write_framed_file(path, kModelMagic, kCheckpointFormatVersion, payload);
}

SnnModel SnnModel::deserialize_state(ByteReader& r) {
    SnnConfig cfg = deserialize_config(r);
    SnnModel model(cfg, 0);
    model.tc_bn.ever_updated = r.u8() != 0;
    model.sc_bn.ever_updated = r.u8() != 0;
    std::vector<Tensor*> tensors = {
        &model.tc_w.value,  &model.tc_bias.value, &model.tc_gamma.value, &model.tc_xi.value,
        &model.tc_plif_w.value, &model.tc_bn.running_mean, &model.tc_bn.running_var,
        &model.sc_k.value,  &model.sc_gamma.value, &model.sc_xi.value, &model.sc_plif_w.value,
        &model.sc_bn.running_mean, &model.sc_bn.running_var,
        &model.cls_w.value, &model.cls_b.value};
    for (Tensor* t : tensors) {
        const std::uint32_t n = r.u32();
        if (n != t->size())
            throw FormatError("checkpoint: tensor size mismatch (config/shape conflict)");
        for (double& v : t->data) v = r.f64();
    }
    return model;
}

SnnModel SnnModel::load_checkpoint(const std::string& path) {
    std::vector<std::uint8_t> payload =
        detail::read_framed_file(path, kModelMagic, kCheckpointFormatVersion, "checkpoint");
    ByteReader r(payload.data(), payload.size(), "checkpoint");
    SnnModel model = deserialize_state(r);
    if (r.left() != 0) throw FormatError("checkpoint: trailing bytes in payload");
    return model;
}

}  // namespace spikedec
