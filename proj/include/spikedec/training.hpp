#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spikedec/data.hpp"
#include "spikedec/energy.hpp"
#include "spikedec/fusion.hpp"
#include "spikedec/model.hpp"

namespace spikedec {

struct TrainConfig {
    double lr = 0.001;
    std::size_t batch_size = 256;
    std::size_t max_epochs = 800;
    std::size_t patience = 100;
    double val_fraction = 0.2;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t jobs = 1;  // parallel (session, seed) runs

    void validate() const;
};

struct RunRecord {
    std::size_t session = 0;
    std::uint64_t seed = 0;
    std::vector<double> train_loss;    // per epoch
    std::vector<double> val_accuracy;  // per epoch
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;  // 0-based epoch whose weights were restored
    double best_val_accuracy = 0.0;
    double test_accuracy = -1.0;  // filled by the LOSO driver
    double wall_seconds = 0.0;    // timing only; excluded from result payloads
};

// Standard Adam with bias correction over a fixed parameter list.
class Adam {
public:
    Adam(std::vector<Parameter*> params, const TrainConfig& cfg);
    void step();
    void zero_grad();

private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

// Trains model (and head, when given) jointly with cross-entropy, evaluating
// validation accuracy each epoch and restoring the best-epoch weights.
// Early-stopping metric is validation accuracy, ties broken by lower
// validation loss. Deterministic given (parameters' initial values, seed).
RunRecord train(SnnModel& model, FusionHead* head, std::span<const Trial* const> train_set,
                std::span<const Trial* const> val_set, const TrainConfig& cfg,
                std::uint64_t seed);

double evaluate(SnnModel& model, FusionHead* head, std::span<const Trial* const> trials);
// Accuracy plus mean cross-entropy, used by the early-stopping tie-break.
std::pair<double, double> evaluate_with_loss(SnnModel& model, FusionHead* head,
                                             std::span<const Trial* const> trials);

// Per-session accuracies aggregated over seeds (percent).
struct ExperimentTable {
    std::vector<double> session_mean;
    std::vector<double> session_std;
    double overall_mean = 0.0;
    std::vector<RunRecord> records;  // session-major, seed-minor order

    // Trained artifacts of the first (session, seed) run, kept for profiling.
    std::shared_ptr<SnnModel> first_model;
    std::shared_ptr<FusionHead> first_head;

    std::string format() const;
    std::string csv() const;
};

ExperimentTable run_loso(const SessionSet& data, const SnnConfig& model_cfg,
                         const FusionConfig* fusion_cfg, const TrainConfig& train_cfg);

// Like run_loso but restricted to a subset of held-out sessions; the full
// driver is the all-sessions case.
ExperimentTable run_loso_sessions(const SessionSet& data, const SnnConfig& model_cfg,
                                  const FusionConfig* fusion_cfg, const TrainConfig& train_cfg,
                                  std::span<const std::size_t> test_sessions);

struct AblationVariant {
    std::string name;
    SnnConfig model_cfg;
    bool use_fusion = false;
    FusionConfig fusion_cfg;
};

// The paper-style variant grids over a base configuration.
std::vector<AblationVariant> conv_ablation_grid(const SnnConfig& base);
std::vector<AblationVariant> neuron_ablation_grid(const SnnConfig& base);
std::vector<AblationVariant> fusion_ablation_grid(const SnnConfig& base, const FusionConfig& fusion);
std::vector<AblationVariant> projector_ablation_grid(const SnnConfig& base,
                                                     const FusionConfig& fusion);

struct AblationResult {
    AblationVariant variant;
    ExperimentTable table;
};
std::vector<AblationResult> ablate(const SessionSet& data,
                                   std::span<const AblationVariant> variants,
                                   const TrainConfig& train_cfg);
std::string format_ablation(const std::vector<AblationResult>& results);
std::string format_ablation_csv(const std::vector<AblationResult>& results);

enum class SweepParameter { HiddenChannels, FusionDim };

struct SweepPoint {
    std::size_t value = 0;
    ExperimentTable table;
    double mean_energy_pj = 0.0;
    OpCount mean_counts;
};
std::vector<SweepPoint> sweep(const SessionSet& data, const SnnConfig& base_cfg,
                              const FusionConfig* fusion_cfg, const TrainConfig& train_cfg,
                              SweepParameter parameter, std::span<const std::size_t> values);
std::string format_sweep(SweepParameter parameter, const std::vector<SweepPoint>& points);
std::string format_sweep_csv(SweepParameter parameter, const std::vector<SweepPoint>& points);

// Two-sided paired t-test p-value. Throws ConfigError on length mismatch,
// fewer than two pairs, or zero difference variance.
double paired_t_test(std::span<const double> a, std::span<const double> b);

// Line-delimited machine-readable run records (timing excluded so identical
// configurations produce byte-identical files).
std::string records_to_jsonl(std::span<const RunRecord> records);

}  // namespace spikedec
