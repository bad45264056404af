#include "spikedec/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "spikedec/rng.hpp"

namespace spikedec {

void TrainConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("TrainConfig: lr must be positive");
    if (batch_size == 0) throw ConfigError("TrainConfig: batch_size must be positive");
    if (max_epochs == 0) throw ConfigError("TrainConfig: max_epochs must be positive");
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw ConfigError("TrainConfig: val_fraction must be in (0, 1)");
    if (seeds.empty()) throw ConfigError("TrainConfig: at least one seed is required");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
        throw ConfigError("TrainConfig: adam betas must be in [0, 1)");
}

Adam::Adam(std::vector<Parameter*> params, const TrainConfig& cfg)
    : params_(std::move(params)),
      lr_(cfg.lr),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_eps) {
    for (const Parameter* p : params_) {
        m_.emplace_back(Tensor(p->value.shape));
        v_.emplace_back(Tensor(p->value.shape));
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad.data[j];
            double& m = m_[i].data[j];
            double& v = v_[i].data[j];
            m = beta1_ * m + (1.0 - beta1_) * g;
            v = beta2_ * v + (1.0 - beta2_) * g * g;
            p.value.data[j] -= lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_);
        }
    }
}

void Adam::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

namespace {

// Everything that defines the trained state: parameter values plus batchnorm
// running statistics, so restoring the best epoch restores eval behaviour too.
struct StateSnapshot {
    std::vector<Tensor> tensors;
    bool tc_updated = false, sc_updated = false;
};

std::vector<Tensor*> mutable_state(SnnModel& model, FusionHead* head) {
    std::vector<Tensor*> ts;
    for (Parameter* p : model.parameters()) ts.push_back(&p->value);
    ts.push_back(&model.tc_bn.running_mean);
    ts.push_back(&model.tc_bn.running_var);
    ts.push_back(&model.sc_bn.running_mean);
    ts.push_back(&model.sc_bn.running_var);
    if (head)
        for (Parameter* p : head->parameters()) ts.push_back(&p->value);
    return ts;
}

StateSnapshot take_snapshot(SnnModel& model, FusionHead* head) {
    StateSnapshot s;
    for (Tensor* t : mutable_state(model, head)) s.tensors.push_back(*t);
    s.tc_updated = model.tc_bn.ever_updated;
    s.sc_updated = model.sc_bn.ever_updated;
    return s;
}

void restore_snapshot(SnnModel& model, FusionHead* head, const StateSnapshot& s) {
    std::vector<Tensor*> ts = mutable_state(model, head);
    for (std::size_t i = 0; i < ts.size(); ++i) *ts[i] = s.tensors[i];
    model.tc_bn.ever_updated = s.tc_updated;
    model.sc_bn.ever_updated = s.sc_updated;
}

// Logits for one batch, through the fusion head when one is attached.
Graph::Node* forward_logits(Graph& g, SnnModel& model, FusionHead* head,
                            std::span<const Trial* const> batch, Mode mode) {
    Graph::Node* x = g.input(batch_to_tensor(batch));
    SnnModel::ForwardNodes nodes = model.build_forward(g, x, mode);
    if (!head) return nodes.logits;
    Graph::Node* nav = g.input(head->nav_batch(batch));
    return head->build_forward(g, nodes.pooled, nav);
}

double batch_accuracy(const Tensor& logits, std::span<const Trial* const> batch) {
    const std::size_t B = logits.dim(0), K = logits.dim(1);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < B; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (logits.at2(i, k) > logits.at2(i, best)) best = k;
        if (best == batch[i]->label) ++correct;
    }
    return static_cast<double>(correct);
}

double batch_ce(const Tensor& logits, std::span<const Trial* const> batch) {
    const std::size_t B = logits.dim(0), K = logits.dim(1);
    double total = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        double mx = logits.at2(i, 0);
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, logits.at2(i, k));
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += std::exp(logits.at2(i, k) - mx);
        total -= logits.at2(i, batch[i]->label) - mx - std::log(z);
    }
    return total;
}

}  // namespace

std::pair<double, double> evaluate_with_loss(SnnModel& model, FusionHead* head,
                                             std::span<const Trial* const> trials) {
    if (trials.empty()) throw DimensionError("evaluate: empty trial list");
    constexpr std::size_t kEvalBatch = 256;
    double correct = 0.0, loss = 0.0;
    for (std::size_t off = 0; off < trials.size(); off += kEvalBatch) {
        const std::size_t n = std::min(kEvalBatch, trials.size() - off);
        std::span<const Trial* const> batch = trials.subspan(off, n);
        Graph g;
        const Tensor& logits = forward_logits(g, model, head, batch, Mode::Eval)->value;
        correct += batch_accuracy(logits, batch);
        loss += batch_ce(logits, batch);
    }
    const double n = static_cast<double>(trials.size());
    return {correct / n, loss / n};
}

double evaluate(SnnModel& model, FusionHead* head, std::span<const Trial* const> trials) {
    return evaluate_with_loss(model, head, trials).first;
}

RunRecord train(SnnModel& model, FusionHead* head, std::span<const Trial* const> train_set,
                std::span<const Trial* const> val_set, const TrainConfig& cfg,
                std::uint64_t seed) {
    cfg.validate();
    if (train_set.empty() || val_set.empty())
        throw DimensionError("train: train and validation sets must be non-empty");

    const auto t0 = std::chrono::steady_clock::now();
    if (head) head->fit_nav_standardization(train_set);

    std::vector<Parameter*> params = model.parameters();
    if (head)
        for (Parameter* p : head->parameters()) params.push_back(p);
    Adam opt(params, cfg);

    RunRecord rec;
    rec.seed = seed;
    std::vector<const Trial*> order(train_set.begin(), train_set.end());

    double best_acc = -1.0, best_loss = std::numeric_limits<double>::infinity();
    StateSnapshot best = take_snapshot(model, head);

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        // Fisher-Yates reshuffle, reseeded per epoch from the run seed.
        Rng rng = Rng::derive(seed, 0x54AA1 + epoch);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(i)]);

        double epoch_loss = 0.0;
        std::size_t epoch_n = 0;
        for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - off);
            std::span<const Trial* const> batch(order.data() + off, n);

            Graph g;
            Graph::Node* logits = forward_logits(g, model, head, batch, Mode::Train);
            Graph::Node* loss = g.softmax_cross_entropy(logits, batch_labels(batch));
            const double loss_val = loss->value.data[0];
            if (!std::isfinite(loss_val)) {
                std::ostringstream os;
                os << "training diverged: non-finite loss at epoch " << epoch << ", batch "
                   << off / cfg.batch_size;
                throw NumericError(os.str());
            }
            opt.zero_grad();
            g.backward(loss);
            opt.step();
            epoch_loss += loss_val * static_cast<double>(n);
            epoch_n += n;
        }
        rec.train_loss.push_back(epoch_loss / static_cast<double>(epoch_n));

        auto [val_acc, val_loss] = evaluate_with_loss(model, head, val_set);
        rec.val_accuracy.push_back(val_acc);
        if (val_acc > best_acc || (val_acc == best_acc && val_loss < best_loss)) {
            best_acc = val_acc;
            best_loss = val_loss;
            rec.best_epoch = epoch;
            best = take_snapshot(model, head);
        }
        rec.epochs_run = epoch + 1;
        if (epoch - rec.best_epoch >= cfg.patience) break;
    }

    restore_snapshot(model, head, best);
    rec.best_val_accuracy = best_acc;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

namespace {

std::uint64_t run_seed(std::uint64_t seed, std::size_t session) {
    return Rng::splitmix64(seed ^ (0x5E55107ULL + static_cast<std::uint64_t>(session) * 0x10001ULL));
}

void finalize_table(ExperimentTable& table, std::size_t n_sessions, std::size_t n_seeds) {
    table.session_mean.assign(n_sessions, 0.0);
    table.session_std.assign(n_sessions, 0.0);
    for (std::size_t s = 0; s < n_sessions; ++s) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n_seeds; ++i)
            mean += table.records[s * n_seeds + i].test_accuracy;
        mean /= static_cast<double>(n_seeds);
        double var = 0.0;
        for (std::size_t i = 0; i < n_seeds; ++i) {
            const double d = table.records[s * n_seeds + i].test_accuracy - mean;
            var += d * d;
        }
        table.session_mean[s] = 100.0 * mean;
        table.session_std[s] =
            n_seeds > 1 ? 100.0 * std::sqrt(var / static_cast<double>(n_seeds - 1)) : 0.0;
        table.overall_mean += table.session_mean[s];
    }
    table.overall_mean /= static_cast<double>(n_sessions);
}

}  // namespace

ExperimentTable run_loso_sessions(const SessionSet& data, const SnnConfig& model_cfg,
                                  const FusionConfig* fusion_cfg, const TrainConfig& train_cfg,
                                  std::span<const std::size_t> test_sessions) {
    model_cfg.validate();
    train_cfg.validate();
    if (data.sessions.size() < 2)
        throw ConfigError("run_loso: need at least two sessions to hold one out");
    for (std::size_t s : test_sessions)
        if (s >= data.sessions.size()) throw ConfigError("run_loso: test session out of range");

    const std::size_t n_seeds = train_cfg.seeds.size();
    ExperimentTable table;
    table.records.resize(test_sessions.size() * n_seeds);

    struct Job {
        std::size_t row, session;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (std::size_t si = 0; si < test_sessions.size(); ++si)
        for (std::size_t i = 0; i < n_seeds; ++i)
            jobs.push_back({si * n_seeds + i, test_sessions[si], train_cfg.seeds[i]});

    std::exception_ptr first_error;
#ifdef _OPENMP
    const int n_threads =
        static_cast<int>(std::max<std::size_t>(1, std::min(train_cfg.jobs, jobs.size())));
#pragma omp parallel for schedule(dynamic) num_threads(n_threads)
#endif
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        try {
            const Job& job = jobs[j];
            const std::uint64_t rs = run_seed(job.seed, job.session);
            LosoSplit split = loso_split(data, job.session, train_cfg.val_fraction, rs);

            SnnModel model(model_cfg, rs);
            std::unique_ptr<FusionHead> head;
            if (fusion_cfg)
                head = std::make_unique<FusionHead>(*fusion_cfg, data.C,
                                                    model_cfg.hidden_channels(), data.n_class, rs);

            RunRecord rec = train(model, head.get(), split.train, split.val, train_cfg, rs);
            rec.session = job.session;
            rec.seed = job.seed;
            rec.test_accuracy = evaluate(model, head.get(), split.test);
            table.records[job.row] = std::move(rec);

            if (job.row == 0) {
                table.first_model = std::make_shared<SnnModel>(std::move(model));
                if (head) table.first_head = std::shared_ptr<FusionHead>(std::move(head));
            }
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);

    finalize_table(table, test_sessions.size(), n_seeds);
    return table;
}

ExperimentTable run_loso(const SessionSet& data, const SnnConfig& model_cfg,
                         const FusionConfig* fusion_cfg, const TrainConfig& train_cfg) {
    std::vector<std::size_t> all(data.sessions.size());
    std::iota(all.begin(), all.end(), 0);
    return run_loso_sessions(data, model_cfg, fusion_cfg, train_cfg, all);
}

std::string ExperimentTable::format() const {
    std::ostringstream os;
    char buf[128];
    const std::size_t n_seeds = records.size() / std::max<std::size_t>(1, session_mean.size());
    os << "held-out session    accuracy (mean +/- std over " << n_seeds << " seeds)\n";
    for (std::size_t s = 0; s < session_mean.size(); ++s) {
        std::snprintf(buf, sizeof(buf), "session %-10zu  %6.2f%% +/- %5.2f\n",
                      records[s * n_seeds].session, session_mean[s], session_std[s]);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "overall             %6.2f%%\n", overall_mean);
    os << buf;
    return os.str();
}

std::string ExperimentTable::csv() const {
    std::ostringstream os;
    os << "session,seed,test_accuracy,best_val_accuracy,best_epoch,epochs_run\n";
    char buf[160];
    for (const RunRecord& r : records) {
        std::snprintf(buf, sizeof(buf), "%zu,%llu,%.6f,%.6f,%zu,%zu\n", r.session,
                      static_cast<unsigned long long>(r.seed), r.test_accuracy,
                      r.best_val_accuracy, r.best_epoch, r.epochs_run);
        os << buf;
    }
    return os.str();
}

std::vector<AblationVariant> conv_ablation_grid(const SnnConfig& base) {
    std::vector<AblationVariant> out;
    AblationVariant full{"full", base, false, {}};
    AblationVariant no_tc{"no_tc", base, false, {}};
    no_tc.model_cfg.enable_tc = false;
    AblationVariant no_sc{"no_sc", base, false, {}};
    no_sc.model_cfg.enable_sc = false;
    AblationVariant neither{"no_tc_no_sc", base, false, {}};
    neither.model_cfg.enable_tc = false;
    neither.model_cfg.enable_sc = false;
    out.push_back(full);
    out.push_back(no_tc);
    out.push_back(no_sc);
    out.push_back(neither);
    return out;
}

std::vector<AblationVariant> neuron_ablation_grid(const SnnConfig& base) {
    std::vector<AblationVariant> out;
    const std::pair<const char*, NeuronKind> kinds[] = {
        {"plif", NeuronKind::PLIF},       {"lif", NeuronKind::LIF},
        {"qif", NeuronKind::QIF},         {"eif", NeuronKind::EIF},
        {"izhikevich", NeuronKind::Izhikevich},
    };
    for (const auto& [name, kind] : kinds) {
        AblationVariant v{name, base, false, {}};
        v.model_cfg.neuron_kind = kind;
        out.push_back(v);
    }
    return out;
}

std::vector<AblationVariant> fusion_ablation_grid(const SnnConfig& base,
                                                  const FusionConfig& fusion) {
    std::vector<AblationVariant> out;
    out.push_back({"fusion_off", base, false, {}});
    out.push_back({"fusion_on", base, true, fusion});
    return out;
}

std::vector<AblationVariant> projector_ablation_grid(const SnnConfig& base,
                                                     const FusionConfig& fusion) {
    std::vector<AblationVariant> out;
    AblationVariant both{"pdf_pnav", base, true, fusion};
    AblationVariant no_pdf{"pnav_only", base, true, fusion};
    no_pdf.fusion_cfg.enable_pdf = false;
    AblationVariant no_pnav{"pdf_only", base, true, fusion};
    no_pnav.fusion_cfg.enable_pnav = false;
    AblationVariant neither{"no_projectors", base, true, fusion};
    neither.fusion_cfg.enable_pdf = false;
    neither.fusion_cfg.enable_pnav = false;
    out.push_back(both);
    out.push_back(no_pdf);
    out.push_back(no_pnav);
    out.push_back(neither);
    return out;
}

std::vector<AblationResult> ablate(const SessionSet& data,
                                   std::span<const AblationVariant> variants,
                                   const TrainConfig& train_cfg) {
    std::vector<AblationResult> out;
    for (const AblationVariant& v : variants) {
        ExperimentTable t =
            run_loso(data, v.model_cfg, v.use_fusion ? &v.fusion_cfg : nullptr, train_cfg);
        out.push_back({v, std::move(t)});
    }
    return out;
}

std::string format_ablation(const std::vector<AblationResult>& results) {
    std::ostringstream os;
    os << "variant             accuracy\n";
    char buf[96];
    for (const AblationResult& r : results) {
        std::snprintf(buf, sizeof(buf), "%-18s  %6.2f%%\n", r.variant.name.c_str(),
                      r.table.overall_mean);
        os << buf;
    }
    return os.str();
}

std::string format_ablation_csv(const std::vector<AblationResult>& results) {
    std::ostringstream os;
    os << "variant,overall_accuracy\n";
    char buf[96];
    for (const AblationResult& r : results) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f\n", r.variant.name.c_str(),
                      r.table.overall_mean);
        os << buf;
    }
    return os.str();
}

std::vector<SweepPoint> sweep(const SessionSet& data, const SnnConfig& base_cfg,
                              const FusionConfig* fusion_cfg, const TrainConfig& train_cfg,
                              SweepParameter parameter, std::span<const std::size_t> values) {
    if (values.empty()) throw ConfigError("sweep: no values given");
    if (parameter == SweepParameter::FusionDim && !fusion_cfg)
        throw ConfigError("sweep: the d sweep needs a fusion configuration");

    std::vector<SweepPoint> out;
    for (std::size_t value : values) {
        SnnConfig cfg = base_cfg;
        FusionConfig fusion = fusion_cfg ? *fusion_cfg : FusionConfig{};
        if (parameter == SweepParameter::HiddenChannels)
            cfg.C_h = value;
        else
            fusion.d = value;

        SweepPoint point;
        point.value = value;
        point.table = run_loso(data, cfg, fusion_cfg ? &fusion : nullptr, train_cfg);

        // Energy of the first trained run, profiled on its held-out session.
        std::vector<const Trial*> test;
        for (const Trial& t : data.sessions[point.table.records.front().session].trials)
            test.push_back(&t);
        EnergyProfile profile =
            profile_model(*point.table.first_model, point.table.first_head.get(), test);
        point.mean_energy_pj = profile.mean_energy_pj;
        point.mean_counts = profile.mean_counts;
        out.push_back(std::move(point));
    }
    return out;
}

namespace {
const char* sweep_param_name(SweepParameter p) {
    return p == SweepParameter::HiddenChannels ? "C_h" : "d";
}
}  // namespace

std::string format_sweep(SweepParameter parameter, const std::vector<SweepPoint>& points) {
    std::ostringstream os;
    os << sweep_param_name(parameter) << "        accuracy     energy/trial\n";
    char buf[96];
    for (const SweepPoint& p : points) {
        std::snprintf(buf, sizeof(buf), "%-8zu  %6.2f%%   %10.4f uJ\n", p.value,
                      p.table.overall_mean, p.mean_energy_pj / kPicoPerMicro);
        os << buf;
    }
    return os.str();
}

std::string format_sweep_csv(SweepParameter parameter, const std::vector<SweepPoint>& points) {
    std::ostringstream os;
    os << sweep_param_name(parameter) << ",overall_accuracy,energy_uj,mac,ac\n";
    char buf[160];
    for (const SweepPoint& p : points) {
        std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6g,%.6g\n", p.value,
                      p.table.overall_mean, p.mean_energy_pj / kPicoPerMicro, p.mean_counts.mac,
                      p.mean_counts.ac);
        os << buf;
    }
    return os.str();
}

namespace {

// Regularized incomplete beta I_x(a, b) via the continued fraction (Lentz).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 200;
    constexpr double kEps = 3e-12, kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

double incbeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ConfigError("paired_t_test: length mismatch");
    const std::size_t n = a.size();
    if (n < 2) throw ConfigError("paired_t_test: need at least two pairs");

    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (a[i] - b[i]) - mean;
        var += d * d;
    }
    var /= static_cast<double>(n - 1);
    if (var <= 0.0) throw ConfigError("paired_t_test: zero variance in differences");

    const double t = mean / std::sqrt(var / static_cast<double>(n));
    const double nu = static_cast<double>(n - 1);
    // Two-sided p via the t CDF expressed as a regularized incomplete beta.
    return incbeta(nu / 2.0, 0.5, nu / (nu + t * t));
}

std::string records_to_jsonl(std::span<const RunRecord> records) {
    std::string out;
    for (const RunRecord& r : records) {
        nlohmann::json j;
        j["session"] = r.session;
        j["seed"] = r.seed;
        j["test_accuracy"] = r.test_accuracy;
        j["best_val_accuracy"] = r.best_val_accuracy;
        j["best_epoch"] = r.best_epoch;
        j["epochs_run"] = r.epochs_run;
        j["train_loss"] = r.train_loss;
        j["val_accuracy"] = r.val_accuracy;
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace spikedec
