#include "spikedec/fusion.hpp"

#include <cmath>
#include <fstream>

#include "spikedec/rng.hpp"

namespace spikedec {

NavFeatures extract_nav(const SpikeTensor& x, std::size_t b) {
    if (b == 0 || x.T % b != 0)
        throw DimensionError("extract_nav: segment count must divide the bin count");
    const std::size_t seg = x.T / b;
    NavFeatures nav;
    nav.C = x.C;
    nav.b = b;
    nav.matrix.assign(x.C * b, 0.0);
    for (std::size_t c = 0; c < x.C; ++c)
        for (std::size_t i = 0; i < b; ++i) {
            double acc = 0.0;
            for (std::size_t t = i * seg; t < (i + 1) * seg; ++t) acc += x.at(c, t);
            nav.matrix[c * b + i] = acc;
        }
    return nav;
}

FusionHead::FusionHead(FusionConfig cfg, std::size_t C, std::size_t C_h, std::size_t n_class,
                       std::uint64_t init_seed)
    : cfg_(cfg), C_(C), C_h_(C_h), n_class_(n_class) {
    if (cfg_.d == 0 || cfg_.b == 0) throw ConfigError("FusionConfig: d and b must be positive");
    Rng rng = Rng::derive(init_seed, 0xF051);
    auto he = [&rng](std::vector<std::size_t> shape, std::size_t fan_in) {
        Tensor t(std::move(shape));
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (double& v : t.data) v = (2.0 * rng.uniform01() - 1.0) * limit;
        return t;
    };
    p_df = Parameter(he({cfg_.d, C_h}, C_h));
    p_nav = Parameter(he({cfg_.d, nav_width()}, nav_width()));
    cls_w = Parameter(he({n_class, classifier_width()}, classifier_width()));
    cls_b = Parameter(Tensor({n_class}));
    nav_mean.assign(nav_width(), 0.0);
    nav_scale.assign(nav_width(), 1.0);
}

void FusionHead::fit_nav_standardization(std::span<const Trial* const> train) {
    if (train.empty()) throw DimensionError("fit_nav_standardization: empty training set");
    const std::size_t D = nav_width();
    std::vector<double> mean(D, 0.0), var(D, 0.0);
    for (const Trial* t : train) {
        const NavFeatures nav = extract_nav(t->spikes, cfg_.b);
        for (std::size_t j = 0; j < D; ++j) mean[j] += nav.matrix[j];
    }
    for (double& m : mean) m /= static_cast<double>(train.size());
    for (const Trial* t : train) {
        const NavFeatures nav = extract_nav(t->spikes, cfg_.b);
        for (std::size_t j = 0; j < D; ++j) {
            const double d = nav.matrix[j] - mean[j];
            var[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < D; ++j) {
        const double sd = std::sqrt(var[j] / static_cast<double>(train.size()));
        nav_mean[j] = mean[j];
        nav_scale[j] = 1.0 / std::max(sd, 1e-8);
    }
}

Tensor FusionHead::nav_batch(std::span<const Trial* const> trials) const {
    const std::size_t D = nav_width();
    Tensor out({trials.size(), D});
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const NavFeatures nav = extract_nav(trials[i]->spikes, cfg_.b);
        if (nav.C != C_) throw DimensionError("nav_batch: channel count mismatch");
        for (std::size_t j = 0; j < D; ++j) out.at2(i, j) = nav.matrix[j];
    }
    return out;
}

Graph::Node* FusionHead::build_forward(Graph& g, Graph::Node* deep, Graph::Node* nav) {
    if (deep->value.rank() != 2 || deep->value.dim(1) != C_h_)
        throw DimensionError("FusionHead: deep feature width mismatch");
    if (nav->value.rank() != 2 || nav->value.dim(1) != nav_width())
        throw DimensionError("FusionHead: NAV feature width mismatch");

    Graph::Node* nav_std = g.affine_const(nav, nav_scale, nav_mean);
    Graph::Node* left = cfg_.enable_pdf ? g.linear(deep, g.param(p_df), nullptr) : deep;
    Graph::Node* right = cfg_.enable_pnav ? g.linear(nav_std, g.param(p_nav), nullptr) : nav_std;
    Graph::Node* fused = g.concat_cols(left, right);
    return g.linear(fused, g.param(cls_w), cfg_.cls_bias ? g.param(cls_b) : nullptr);
}

std::vector<Parameter*> FusionHead::parameters() {
    std::vector<Parameter*> ps;
    if (cfg_.enable_pdf) ps.push_back(&p_df);
    if (cfg_.enable_pnav) ps.push_back(&p_nav);
    ps.push_back(&cls_w);
    if (cfg_.cls_bias) ps.push_back(&cls_b);
    return ps;
}

void FusionHead::serialize_state(std::vector<std::uint8_t>& buf) const {
    using detail::put_f64;
    using detail::put_u32;
    put_u32(buf, static_cast<std::uint32_t>(cfg_.d));
    put_u32(buf, static_cast<std::uint32_t>(cfg_.b));
    buf.push_back(cfg_.enable_pdf);
    buf.push_back(cfg_.enable_pnav);
    buf.push_back(cfg_.cls_bias);
    put_u32(buf, static_cast<std::uint32_t>(C_));
    put_u32(buf, static_cast<std::uint32_t>(C_h_));
    put_u32(buf, static_cast<std::uint32_t>(n_class_));
    for (const Tensor* t : {&p_df.value, &p_nav.value, &cls_w.value, &cls_b.value}) {
        put_u32(buf, static_cast<std::uint32_t>(t->size()));
        for (double v : t->data) put_f64(buf, v);
    }
    put_u32(buf, static_cast<std::uint32_t>(nav_mean.size()));
    for (double v : nav_mean) put_f64(buf, v);
    for (double v : nav_scale) put_f64(buf, v);
}

FusionHead FusionHead::deserialize_state(detail::ByteReader& r) {
    FusionConfig cfg;
    cfg.d = r.u32();
    cfg.b = r.u32();
    cfg.enable_pdf = r.u8() != 0;
    cfg.enable_pnav = r.u8() != 0;
    cfg.cls_bias = r.u8() != 0;
    const std::size_t C = r.u32(), C_h = r.u32(), n_class = r.u32();
    FusionHead head(cfg, C, C_h, n_class, 0);
    for (Tensor* t : {&head.p_df.value, &head.p_nav.value, &head.cls_w.value, &head.cls_b.value}) {
        const std::uint32_t n = r.u32();
        if (n != t->size()) throw FormatError("fusion checkpoint: tensor size mismatch");
        for (double& v : t->data) v = r.f64();
    }
    const std::uint32_t nd = r.u32();
    if (nd != head.nav_width()) throw FormatError("fusion checkpoint: NAV width mismatch");
    for (double& v : head.nav_mean) v = r.f64();
    for (double& v : head.nav_scale) v = r.f64();
    return head;
}

namespace {
constexpr char kFusionMagic[4] = {'S', 'P', 'K', 'F'};
}

void save_fusion_checkpoint(const SnnModel& model, const FusionHead& head,
                            const std::string& path) {
    std::vector<std::uint8_t> payload;
    model.serialize_state(payload);
    head.serialize_state(payload);
    detail::write_framed_file(path, kFusionMagic, kFusionCheckpointFormatVersion, payload);
}

std::pair<SnnModel, FusionHead> load_fusion_checkpoint(const std::string& path) {
    std::vector<std::uint8_t> payload = detail::read_framed_file(
        path, kFusionMagic, kFusionCheckpointFormatVersion, "fusion checkpoint");
    detail::ByteReader r(payload.data(), payload.size(), "fusion checkpoint");
    SnnModel model = SnnModel::deserialize_state(r);
    FusionHead head = FusionHead::deserialize_state(r);
    if (r.left() != 0) throw FormatError("fusion checkpoint: trailing bytes in payload");
    return {std::move(model), std::move(head)};
}

bool is_fusion_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for reading: " + path);
    char magic[4] = {};
    f.read(magic, 4);
    return f && magic[0] == 'S' && magic[1] == 'P' && magic[2] == 'K' && magic[3] == 'F';
}

}  // namespace spikedec
