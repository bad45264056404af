#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "spikedec/autodiff.hpp"
#include "spikedec/model.hpp"
#include "spikedec/rng.hpp"

using namespace spikedec;

namespace {

Tensor randn(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = scale * rng.normal();
    return t;
}

// Central finite differences on every element of every parameter against one
// analytic backward pass. run() must rebuild the graph from the parameters'
// current values and return the scalar loss; with backward=true it must also
// run backward so grads land in the parameters.
double max_grad_err(std::vector<Parameter*> params, const std::function<double(bool)>& run) {
    for (Parameter* p : params) p->zero_grad();
    run(true);
    std::vector<Tensor> analytic;
    for (Parameter* p : params) analytic.push_back(p->grad);

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double v0 = p.value.data[i];
            const double eps = 1e-5 * std::max(1.0, std::fabs(v0));
            p.value.data[i] = v0 + eps;
            const double lp = run(false);
            p.value.data[i] = v0 - eps;
            const double lm = run(false);
            p.value.data[i] = v0;
            const double fd = (lp - lm) / (2.0 * eps);
            const double an = analytic[pi].data[i];
            const double err = std::fabs(fd - an) / std::max({1.0, std::fabs(fd), std::fabs(an)});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("conv1d gradients match finite differences on random shapes") {
    Rng rng(21);
    for (int it = 0; it < 20; ++it) {
        const std::size_t B = 1 + rng.uniform_int(3), C_in = 1 + rng.uniform_int(4);
        const std::size_t C_out = 1 + rng.uniform_int(4), T = 2 + rng.uniform_int(6);
        const std::size_t k = 1 + rng.uniform_int(5);
        Parameter x(randn({B, C_in, T}, rng));
        Parameter w(randn({C_out, C_in, k}, rng));
        Parameter bias(randn({C_out}, rng));
        const Tensor weights = randn({B, C_out, T}, rng);

        auto run = [&](bool bwd) {
            Graph g;
            Graph::Node* y = g.conv1d(g.param(x), g.param(w), g.param(bias));
            Graph::Node* loss = g.weighted_sum(y, weights);
            if (bwd) g.backward(loss);
            return loss->value.data[0];
        };
        REQUIRE(max_grad_err({&x, &w, &bias}, run) < 1e-5);
    }
}

TEST_CASE("conv2d_spatial gradients match finite differences") {
    Rng rng(22);
    for (int it = 0; it < 20; ++it) {
        const std::size_t B = 1 + rng.uniform_int(3), C = 1 + rng.uniform_int(6);
        const std::size_t T = 1 + rng.uniform_int(6), k = 1 + rng.uniform_int(5);
        Parameter x(randn({B, C, T}, rng));
        Parameter kv(randn({k}, rng));
        const Tensor weights = randn({B, C, T}, rng);
        auto run = [&](bool bwd) {
            Graph g;
            Graph::Node* loss = g.weighted_sum(g.conv2d_spatial(g.param(x), g.param(kv)), weights);
            if (bwd) g.backward(loss);
            return loss->value.data[0];
        };
        REQUIRE(max_grad_err({&x, &kv}, run) < 1e-5);
    }
}

TEST_CASE("batchnorm train-mode gradients match finite differences") {
    Rng rng(23);
    for (int it = 0; it < 20; ++it) {
        const std::size_t B = 2 + rng.uniform_int(3), C = 1 + rng.uniform_int(4);
        const std::size_t T = 2 + rng.uniform_int(6);
        Parameter x(randn({B, C, T}, rng));
        Parameter gamma(randn({C}, rng));
        Parameter xi(randn({C}, rng));
        const Tensor weights = randn({B, C, T}, rng);
        auto run = [&](bool bwd) {
            BatchNormStats stats(C);  // fresh: running stats must not leak between calls
            Graph g;
            Graph::Node* y = g.batchnorm(g.param(x), g.param(gamma), g.param(xi), stats,
                                         Mode::Train);
            Graph::Node* loss = g.weighted_sum(y, weights);
            if (bwd) g.backward(loss);
            return loss->value.data[0];
        };
        REQUIRE(max_grad_err({&x, &gamma, &xi}, run) < 1e-5);
    }
}

TEST_CASE("batchnorm eval mode normalizes with running statistics") {
    const std::size_t B = 2, C = 1, T = 2;
    BatchNormStats stats(C);
    stats.running_mean.data[0] = 3.0;
    stats.running_var.data[0] = 4.0;
    stats.ever_updated = true;
    Parameter gamma(Tensor({C})), xi(Tensor({C}));
    gamma.value.data[0] = 2.0;
    xi.value.data[0] = 1.0;
    Tensor x({B, C, T});
    x.data = {3.0, 5.0, 1.0, 3.0};
    Graph g;
    Graph::Node* y = g.batchnorm(g.input(x), g.param(gamma), g.param(xi), stats, Mode::Eval);
    const double inv = 1.0 / std::sqrt(4.0 + stats.eps);
    REQUIRE(y->value.data[0] == doctest::Approx(1.0));
    REQUIRE(y->value.data[1] == doctest::Approx(2.0 * 2.0 * inv + 1.0));
    REQUIRE(y->value.data[2] == doctest::Approx(2.0 * -2.0 * inv + 1.0));
    // Eval before any train batch is counted, not silently accepted.
    BatchNormStats fresh(C);
    Graph g2;
    g2.batchnorm(g2.input(x), g2.param(gamma), g2.param(xi), fresh, Mode::Eval);
    REQUIRE(fresh.eval_with_initial_stats == 1);
    REQUIRE(stats.eval_with_initial_stats == 0);
}

TEST_CASE("batchnorm train mode updates running stats with momentum") {
    const std::size_t B = 1, C = 1, T = 4;
    BatchNormStats stats(C);
    Parameter gamma(Tensor::from({1}, {1.0})), xi(Tensor({C}));
    Tensor x({B, C, T});
    x.data = {1.0, 2.0, 3.0, 4.0};  // mean 2.5, biased var 1.25, unbiased 5/3
    Graph g;
    g.batchnorm(g.input(x), g.param(gamma), g.param(xi), stats, Mode::Train);
    REQUIRE(stats.ever_updated);
    REQUIRE(stats.running_mean.data[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.5));
    REQUIRE(stats.running_var.data[0] == doctest::Approx(0.9 * 1.0 + 0.1 * (5.0 / 3.0)));
}

TEST_CASE("neuron layer in soft-forward mode matches finite differences (BPTT)") {
    Rng rng(24);
    for (const auto kind : {NeuronKind::PLIF, NeuronKind::LIF, NeuronKind::QIF, NeuronKind::EIF,
                            NeuronKind::Izhikevich}) {
        for (int it = 0; it < 4; ++it) {
            const std::size_t B = 1 + rng.uniform_int(2), C = 1 + rng.uniform_int(3);
            const std::size_t T = 2 + rng.uniform_int(6);
            NeuronLayerCfg cfg;
            cfg.kind = kind;
            cfg.soft_forward = true;
            // keep Izhikevich in a tame region
            const double scale = kind == NeuronKind::Izhikevich ? 0.1 : 1.0;
            Parameter x(randn({B, C, T}, rng, scale));
            Parameter plif_w(Tensor::from({1}, {0.3}));
            const Tensor weights = randn({B, C, T}, rng);
            const bool is_plif = kind == NeuronKind::PLIF;
            auto run = [&](bool bwd) {
                Graph g;
                Graph::Node* y =
                    g.neuron_layer(g.param(x), cfg, is_plif ? g.param(plif_w) : nullptr);
                Graph::Node* loss = g.weighted_sum(y, weights);
                if (bwd) g.backward(loss);
                return loss->value.data[0];
            };
            std::vector<Parameter*> params{&x};
            if (is_plif) params.push_back(&plif_w);
            REQUIRE(max_grad_err(params, run) < 1e-5);
        }
    }
}

TEST_CASE("per-unit PLIF time constants get independent gradients") {
    Rng rng(25);
    const std::size_t B = 2, C = 3, T = 5;
    Parameter x(randn({B, C, T}, rng));
    Parameter plif_w(randn({C}, rng, 0.2));
    NeuronLayerCfg cfg;
    cfg.soft_forward = true;
    const Tensor weights = randn({B, C, T}, rng);
    auto run = [&](bool bwd) {
        Graph g;
        Graph::Node* loss = g.weighted_sum(g.neuron_layer(g.param(x), cfg, g.param(plif_w)),
                                           weights);
        if (bwd) g.backward(loss);
        return loss->value.data[0];
    };
    REQUIRE(max_grad_err({&x, &plif_w}, run) < 1e-5);
}

TEST_CASE("hard-forward neuron layer emits binary spikes and surrogate gradients") {
    const std::size_t B = 1, C = 1, T = 3;
    Tensor x({B, C, T});
    x.data = {4.0, 0.0, 4.0};  // beta=0.5: h = 2, >= 1 -> spike, reset
    NeuronLayerCfg cfg;
    Parameter plif_w(Tensor::from({1}, {0.0}));
    Graph g;
    Graph::Node* xin = g.input(x, /*track_grad=*/true);
    Graph::Node* y = g.neuron_layer(xin, cfg, g.param(plif_w));
    REQUIRE(y->value.data[0] == 1.0);
    REQUIRE(y->value.data[1] == 0.0);
    REQUIRE(y->value.data[2] == 1.0);
    Tensor w({B, C, T});
    w.fill(1.0);
    plif_w.zero_grad();
    g.backward(g.weighted_sum(y, w));
    // Surrogate gradients are nonzero even though the forward is a step function.
    bool any = false;
    for (double v : xin->grad.data) any = any || v != 0.0;
    REQUIRE(any);
}

TEST_CASE("remaining ops: linear, pooling, affine, concat, group average, CE") {
    Rng rng(26);
    for (int it = 0; it < 20; ++it) {
        const std::size_t B = 1 + rng.uniform_int(3), d_in = 1 + rng.uniform_int(5);
        const std::size_t d_out = 1 + rng.uniform_int(4);
        Parameter x(randn({B, d_in}, rng));
        Parameter w(randn({d_out, d_in}, rng));
        Parameter bias(randn({d_out}, rng));
        std::vector<std::uint16_t> labels(B);
        for (auto& l : labels) l = static_cast<std::uint16_t>(rng.uniform_int(d_out));
        auto run = [&](bool bwd) {
            Graph g;
            Graph::Node* loss = g.softmax_cross_entropy(
                g.linear(g.param(x), g.param(w), g.param(bias)), labels);
            if (bwd) g.backward(loss);
            return loss->value.data[0];
        };
        REQUIRE(max_grad_err({&x, &w, &bias}, run) < 1e-5);
    }

    // avg_pool_time + group_avg_channels + affine_const + concat_cols chain.
    const std::size_t B = 2, C = 6, T = 4;
    Parameter x(randn({B, C, T}, rng));
    Parameter y2(randn({B, 3}, rng));
    const Tensor weights = randn({B, 3 + 3}, rng);
    std::vector<double> scale{1.5, -2.0, 0.5}, shift{0.1, 0.2, 0.3};
    auto run = [&](bool bwd) {
        Graph g;
        Graph::Node* pooled = g.avg_pool_time(g.group_avg_channels(g.param(x), 3));
        Graph::Node* right = g.affine_const(g.param(y2), scale, shift);
        Graph::Node* loss = g.weighted_sum(g.concat_cols(pooled, right), weights);
        if (bwd) g.backward(loss);
        return loss->value.data[0];
    };
    REQUIRE(max_grad_err({&x, &y2}, run) < 1e-5);
}

TEST_CASE("softmax cross-entropy value and shift invariance") {
    Tensor logits({1, 3});
    logits.data = {1.0, 2.0, 3.0};
    Graph g;
    Graph::Node* loss = g.softmax_cross_entropy(g.input(logits), {2});
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    REQUIRE(loss->value.data[0] == doctest::Approx(-std::log(std::exp(3.0) / z)));

    Tensor shifted({1, 3});
    shifted.data = {1001.0, 1002.0, 1003.0};  // same answer, no overflow
    Graph g2;
    Graph::Node* loss2 = g2.softmax_cross_entropy(g2.input(shifted), {2});
    REQUIRE(loss2->value.data[0] == doctest::Approx(loss->value.data[0]));
}

TEST_CASE("full network end-to-end soft-forward gradients within 1e-4") {
    SnnConfig cfg;
    cfg.C_in = 5;
    cfg.T = 10;
    cfg.n_class = 3;
    cfg.C_h = 3;
    cfg.k_temp = 5;
    cfg.k_spat = 3;
    SnnModel model(cfg, /*init_seed=*/99);
    Rng rng(27);
    Tensor x = randn({3, cfg.C_in, cfg.T}, rng, 0.5);
    for (double& v : x.data) v = std::fabs(v);
    const std::vector<std::uint16_t> labels{0, 1, 2};

    auto run = [&](bool bwd) {
        Graph g;
        auto nodes = model.build_forward(g, g.input(x), Mode::Train, /*soft_forward=*/true);
        Graph::Node* loss = g.softmax_cross_entropy(nodes.logits, labels);
        if (bwd) g.backward(loss);
        return loss->value.data[0];
    };
    REQUIRE(max_grad_err(model.parameters(), run) < 1e-4);
}

TEST_CASE("backward accumulates through shared subexpressions exactly once per path") {
    Parameter x(Tensor::from({1, 2}, {2.0, 3.0}));
    Tensor w({1, 2});
    w.data = {1.0, 1.0};
    auto run = [&](bool bwd) {
        Graph g;
        Graph::Node* xn = g.param(x);
        Graph::Node* both = g.concat_cols(xn, xn);  // x used twice
        Tensor ww({1, 4});
        ww.data = {1.0, 2.0, 3.0, 4.0};
        Graph::Node* loss = g.weighted_sum(both, ww);
        if (bwd) g.backward(loss);
        return loss->value.data[0];
    };
    x.zero_grad();
    const double loss = run(true);
    REQUIRE(loss == doctest::Approx(2.0 + 6.0 + 6.0 + 12.0));
    REQUIRE(x.grad.data[0] == doctest::Approx(4.0));  // 1 + 3
    REQUIRE(x.grad.data[1] == doctest::Approx(6.0));  // 2 + 4
}
