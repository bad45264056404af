#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spikedec/autodiff.hpp"
#include "spikedec/data.hpp"
#include "spikedec/detail/bytes.hpp"
#include "spikedec/tensor.hpp"

namespace spikedec {

struct SnnConfig {
    std::size_t C_in = 66;
    std::size_t T = 100;
    std::size_t n_class = 3;
    std::size_t C_h = 0;  // 0 means C_in / 2
    std::size_t k_temp = 64;
    std::size_t k_spat = 64;
    double v_th = 1.0;
    double beta_init = 0.5;
    SurrogateKind surrogate{};
    NeuronKind neuron_kind = NeuronKind::PLIF;
    bool enable_tc = true;
    bool enable_sc = true;
    bool conv_bias = false;
    bool cls_bias = true;
    bool per_unit_tau = false;

    std::size_t hidden_channels() const { return C_h != 0 ? C_h : std::max<std::size_t>(1, C_in / 2); }
    void validate() const;
    bool operator==(const SnnConfig&) const = default;
};

// Converts trials into a dense [B, C, T] batch; counts are fed as real values.
Tensor batch_to_tensor(std::span<const Trial* const> trials);
std::vector<std::uint16_t> batch_labels(std::span<const Trial* const> trials);

// Per-layer operation tallies from an instrumented forward pass.
struct LayerCounts {
    std::string layer;
    double input_events = 0.0;  // total spike (or count) events fed to the layer
    double input_rate = 0.0;    // events / (channels * bins)
    double ac_events = 0.0;     // accumulates actually performed (padding included)
};

// The temporal-convolution -> spatial-convolution -> pooling -> linear
// classifier spiking network, with ablation switches and neuron swaps.
class SnnModel {
public:
    SnnModel(SnnConfig cfg, std::uint64_t init_seed);

    const SnnConfig& config() const { return cfg_; }

    // Trainable parameters in fixed traversal order.
    std::vector<Parameter*> parameters();
    // Parameters plus batchnorm running statistics, for checkpointing.
    std::vector<const Tensor*> state_tensors() const;

    struct ForwardNodes {
        Graph::Node* tc_input = nullptr;  // what the TC conv consumes
        Graph::Node* sc_input = nullptr;  // spikes entering the SC conv
        Graph::Node* pooled = nullptr;    // [B, C_h] rate features
        Graph::Node* logits = nullptr;    // [B, n_class]
    };

    // Records the forward pass on g. x must be a [B, C_in, T] node.
    ForwardNodes build_forward(Graph& g, Graph::Node* x, Mode mode, bool soft_forward = false);

    Tensor forward(std::span<const Trial* const> trials, Mode mode);
    Tensor extract_features(std::span<const Trial* const> trials);
    Tensor forward_instrumented(std::span<const Trial* const> trials,
                                std::vector<LayerCounts>& counts);

    void save_checkpoint(const std::string& path) const;
    static SnnModel load_checkpoint(const std::string& path);

    // Raw state block (config + batchnorm flags + tensors), reused by the
    // fusion checkpoint which embeds a model state followed by head state.
    void serialize_state(std::vector<std::uint8_t>& buf) const;
    static SnnModel deserialize_state(detail::ByteReader& r);

    // Layer state, public so the trainer can snapshot/restore it wholesale.
    Parameter tc_w, tc_gamma, tc_xi, tc_plif_w;
    BatchNormStats tc_bn;
    Parameter tc_bias;
    Parameter sc_k, sc_gamma, sc_xi, sc_plif_w;
    BatchNormStats sc_bn;
    Parameter cls_w, cls_b;

private:
    SnnConfig cfg_;
    NeuronLayerCfg neuron_cfg() const;
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

}  // namespace spikedec
