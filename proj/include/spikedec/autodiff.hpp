#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "spikedec/neurons.hpp"
#include "spikedec/tensor.hpp"

namespace spikedec {

enum class Mode : std::uint8_t { Train, Eval };

enum class NeuronKind : std::uint8_t { PLIF, LIF, QIF, EIF, Izhikevich };

// Running statistics owned by a batchnorm layer, persisted across batches.
struct BatchNormStats {
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.1;
    double eps = 1e-5;
    bool ever_updated = false;
    // Incremented when eval-mode normalization runs on never-updated stats.
    std::uint64_t eval_with_initial_stats = 0;

    explicit BatchNormStats(std::size_t C)
        : running_mean(Tensor({C})), running_var(Tensor({C})) {
        running_var.fill(1.0);
    }
};

struct NeuronLayerCfg {
    NeuronKind kind = NeuronKind::PLIF;
    SurrogateKind surrogate{};
    double v_th = 1.0;
    double u_reset = 0.0;
    double lif_beta = 0.5;  // fixed leak for the non-learnable LIF
    // Heaviside replaced by the surrogate primitive in the forward pass and the
    // hard reset by its soft gate; makes the layer smooth for gradient checks.
    bool soft_forward = false;
    QifParams qif{};
    EifParams eif{};
    IzhikevichParams izh{};
};

// Reverse-mode tape. A Graph records one forward pass; backward() walks the
// recorded nodes in reverse execution order exactly once and accumulates
// dLoss/dtheta into every reachable Parameter's grad buffer.
class Graph {
public:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<Node*> inputs;
        std::function<void(Node&)> backward_fn;
        Parameter* bound_param = nullptr;
        bool requires_grad = false;
    };

    // Constant leaf; set track_grad to read dLoss/dinput off node->grad afterwards.
    Node* input(Tensor v, bool track_grad = false);
    Node* param(Parameter& p);

    // x: [B, C_in, T], w: [C_out, C_in, k] -> [B, C_out, T]; zero same-padding.
    Node* conv1d(Node* x, Node* w, Node* bias);
    // x: [B, C, T], kv: [k]; single-filter convolution along the channel axis.
    Node* conv2d_spatial(Node* x, Node* kv);
    Node* batchnorm(Node* x, Node* gamma, Node* xi, BatchNormStats& stats, Mode mode);
    // x: [B, C, T] -> binary (or soft) spikes [B, C, T]; plif_w is the layer's
    // shared unconstrained time-constant scalar, required iff kind == PLIF.
    Node* neuron_layer(Node* x, const NeuronLayerCfg& cfg, Node* plif_w);
    Node* avg_pool_time(Node* x);
    // x: [B, d_in], w: [d_out, d_in] -> [B, d_out]
    Node* linear(Node* x, Node* w, Node* bias);
    Node* concat_cols(Node* a, Node* b);
    // y = (x - shift) * scale, per column of x: [B, D].
    Node* affine_const(Node* x, std::vector<double> scale, std::vector<double> shift);
    // Fixed (non-learnable) contiguous group averaging over channels,
    // [B, C_in, T] -> [B, C_out, T]; identity when C_out == C_in.
    Node* group_avg_channels(Node* x, std::size_t c_out);
    // Mean over the batch of -log softmax(logits)[label]; returns a scalar node.
    Node* softmax_cross_entropy(Node* logits, const std::vector<std::uint16_t>& labels);
    // Scalar sum(weights * x); generic scalarizer for gradient checks.
    Node* weighted_sum(Node* x, Tensor weights);

    void backward(Node* loss);

private:
    Node* make(Tensor value, std::vector<Node*> inputs);

    std::deque<Node> nodes_;
    bool has_recorded_ = false;
};

}  // namespace spikedec
