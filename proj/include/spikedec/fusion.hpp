#pragma once

#include <span>
#include <string>
#include <vector>

#include "spikedec/autodiff.hpp"
#include "spikedec/data.hpp"
#include "spikedec/model.hpp"

namespace spikedec {

// Per-channel spike counts over b equal-length time segments.
struct NavFeatures {
    std::size_t C = 0;
    std::size_t b = 0;
    std::vector<double> matrix;  // row-major [C x b]

    double at(std::size_t c, std::size_t i) const { return matrix[c * b + i]; }
};

NavFeatures extract_nav(const SpikeTensor& x, std::size_t b);

struct FusionConfig {
    std::size_t d = 128;  // projection width
    std::size_t b = 10;   // NAV segments
    bool enable_pdf = true;
    bool enable_pnav = true;
    bool cls_bias = true;

    bool operator==(const FusionConfig&) const = default;
};

// Projects deep rate features and NAV features into a shared hidden space,
// concatenates them and classifies. A disabled projector passes its feature
// vector through unchanged; the classifier width adjusts.
class FusionHead {
public:
    FusionHead(FusionConfig cfg, std::size_t C, std::size_t C_h, std::size_t n_class,
               std::uint64_t init_seed);

    const FusionConfig& config() const { return cfg_; }
    std::size_t nav_width() const { return C_ * cfg_.b; }
    std::size_t classifier_width() const {
        return (cfg_.enable_pdf ? cfg_.d : C_h_) + (cfg_.enable_pnav ? cfg_.d : nav_width());
    }

    // NAV features are standardized with train-set statistics before
    // projection; call once on the training trials before training.
    void fit_nav_standardization(std::span<const Trial* const> train);

    Tensor nav_batch(std::span<const Trial* const> trials) const;  // raw [B, C*b]

    // deep: [B, C_h] node from the backbone; nav: node holding nav_batch output.
    Graph::Node* build_forward(Graph& g, Graph::Node* deep, Graph::Node* nav);

    std::vector<Parameter*> parameters();

    void serialize_state(std::vector<std::uint8_t>& buf) const;
    static FusionHead deserialize_state(detail::ByteReader& r);

    Parameter p_df, p_nav, cls_w, cls_b;
    std::vector<double> nav_mean, nav_scale;  // scale = 1/std

private:
    FusionConfig cfg_;
    std::size_t C_ = 0, C_h_ = 0, n_class_ = 0;
};

// Fusion checkpoint: a model state block followed by a head state block.
inline constexpr std::uint32_t kFusionCheckpointFormatVersion = 1;
void save_fusion_checkpoint(const SnnModel& model, const FusionHead& head,
                            const std::string& path);
std::pair<SnnModel, FusionHead> load_fusion_checkpoint(const std::string& path);

// Peeks at the magic bytes to tell plain model checkpoints from fusion ones.
bool is_fusion_checkpoint(const std::string& path);

}  // namespace spikedec
