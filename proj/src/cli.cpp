#include "spikedec/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "spikedec/data.hpp"
#include "spikedec/energy.hpp"
#include "spikedec/fusion.hpp"
#include "spikedec/model.hpp"
#include "spikedec/training.hpp"

namespace spikedec {
namespace {

constexpr const char* kVersionText =
    "spikedec 1.0.0\n"
    "file formats: session set v1, model checkpoint v1, fusion checkpoint v1\n";

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << text;
    if (!f) throw IoError("write failed: " + path);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::vector<const Trial*> all_trials(const SessionSet& data) {
    std::vector<const Trial*> out;
    for (const Session& s : data.sessions)
        for (const Trial& t : s.trials) out.push_back(&t);
    return out;
}

// ---- option groups shared by several subcommands ----

struct ModelOpts {
    SnnConfig cfg;
    bool no_tc = false, no_sc = false;
};

void add_model_opts(CLI::App* app, ModelOpts& m) {
    app->add_option("--hidden-channels", m.cfg.C_h, "Hidden channel count C_h (0 = C/2)");
    app->add_option("--k-temp", m.cfg.k_temp, "Temporal conv kernel length");
    app->add_option("--k-spat", m.cfg.k_spat, "Spatial conv kernel length");
    app->add_option("--v-th", m.cfg.v_th, "Spike threshold");
    app->add_option("--beta-init", m.cfg.beta_init, "Initial PLIF leak factor");
    app->add_option("--surrogate-alpha", m.cfg.surrogate.alpha, "Surrogate sharpness");
    app->add_option("--surrogate", m.cfg.surrogate.variant, "Surrogate variant")
        ->transform(CLI::CheckedTransformer(
            std::map<std::string, SurrogateVariant>{{"sigmoid", SurrogateVariant::Sigmoid},
                                                    {"arctan", SurrogateVariant::ArcTan}}));
    app->add_option("--neuron", m.cfg.neuron_kind, "Neuron model")
        ->transform(CLI::CheckedTransformer(std::map<std::string, NeuronKind>{
            {"plif", NeuronKind::PLIF},
            {"lif", NeuronKind::LIF},
            {"qif", NeuronKind::QIF},
            {"eif", NeuronKind::EIF},
            {"izhikevich", NeuronKind::Izhikevich}}));
    app->add_flag("--no-tc", m.no_tc, "Disable the temporal conv block");
    app->add_flag("--no-sc", m.no_sc, "Disable the spatial conv block");
    app->add_flag("--per-unit-tau", m.cfg.per_unit_tau, "One PLIF time constant per channel");
    app->add_flag("--conv-bias", m.cfg.conv_bias, "Bias on the temporal conv");
}

SnnConfig resolve_model(const ModelOpts& m, const SessionSet& data) {
    SnnConfig cfg = m.cfg;
    cfg.C_in = data.C;
    cfg.T = data.T;
    cfg.n_class = data.n_class;
    cfg.enable_tc = !m.no_tc;
    cfg.enable_sc = !m.no_sc;
    cfg.validate();
    return cfg;
}

struct FusionOpts {
    bool enabled = false;
    FusionConfig cfg;
    bool no_pdf = false, no_pnav = false;
};

void add_fusion_opts(CLI::App* app, FusionOpts& f) {
    app->add_flag("--fusion", f.enabled, "Attach the NAV fusion head");
    app->add_option("--fusion-d", f.cfg.d, "Fusion projection width");
    app->add_option("--fusion-b", f.cfg.b, "NAV time segments");
    app->add_flag("--no-pdf", f.no_pdf, "Drop the deep-feature projector");
    app->add_flag("--no-pnav", f.no_pnav, "Drop the NAV projector");
}

const FusionConfig* resolve_fusion(FusionOpts& f) {
    if (!f.enabled) return nullptr;
    f.cfg.enable_pdf = !f.no_pdf;
    f.cfg.enable_pnav = !f.no_pnav;
    return &f.cfg;
}

void add_train_opts(CLI::App* app, TrainConfig& t) {
    app->add_option("--lr", t.lr, "Adam learning rate");
    app->add_option("--batch-size", t.batch_size, "Minibatch size");
    app->add_option("--max-epochs", t.max_epochs, "Epoch cap");
    app->add_option("--patience", t.patience, "Early-stopping patience (epochs)");
    app->add_option("--val-fraction", t.val_fraction, "Validation share of the training pool");
    app->add_option("--seeds", t.seeds, "Run seeds (comma separated)")->delimiter(',');
    app->add_option("--jobs", t.jobs, "Parallel (session, seed) runs");
}

// ---- subcommand payloads ----

struct GenArgs {
    SynthConfig synth;
    std::string out;
};

int cmd_gen(const GenArgs& a) {
    SessionSet data = generate_synthetic(a.synth);
    save_session_set(data, a.out);
    double rate = 0.0;
    std::size_t n = 0;
    for (const Session& s : data.sessions)
        for (const Trial& t : s.trials) {
            rate += firing_rate(t.spikes);
            ++n;
        }
    std::printf("wrote %s: %zu sessions, %zu trials, C=%zu, T=%zu, mean firing rate %.4f\n",
                a.out.c_str(), data.sessions.size(), n, data.C, data.T,
                n ? rate / static_cast<double>(n) : 0.0);
    return kExitOk;
}

struct TrainArgs {
    std::string data_path;
    std::string out_dir = "out";
    int test_session = -1;  // -1 = leave each session out in turn
    ModelOpts model;
    FusionOpts fusion;
    TrainConfig train;
};

int cmd_train(TrainArgs& a) {
    SessionSet data = load_session_set(a.data_path);
    SnnConfig cfg = resolve_model(a.model, data);
    const FusionConfig* fusion = resolve_fusion(a.fusion);
    a.train.validate();

    ExperimentTable table;
    if (a.test_session >= 0) {
        const std::size_t one[] = {static_cast<std::size_t>(a.test_session)};
        table = run_loso_sessions(data, cfg, fusion, a.train, one);
    } else {
        table = run_loso(data, cfg, fusion, a.train);
    }

    ensure_dir(a.out_dir);
    write_text_file(a.out_dir + "/results.jsonl", records_to_jsonl(table.records));
    write_text_file(a.out_dir + "/table.txt", table.format());
    write_text_file(a.out_dir + "/table.csv", table.csv());
    if (table.first_head)
        save_fusion_checkpoint(*table.first_model, *table.first_head,
                               a.out_dir + "/model.spkf");
    else
        table.first_model->save_checkpoint(a.out_dir + "/model.spkm");
    std::fputs(table.format().c_str(), stdout);
    return kExitOk;
}

struct EvalArgs {
    std::string checkpoint;
    std::string data_path;
    std::string dump_features;  // optional CSV path
};

int cmd_eval(const EvalArgs& a) {
    SessionSet data = load_session_set(a.data_path);

    std::unique_ptr<SnnModel> model;
    std::unique_ptr<FusionHead> head;
    if (is_fusion_checkpoint(a.checkpoint)) {
        auto [m, h] = load_fusion_checkpoint(a.checkpoint);
        model = std::make_unique<SnnModel>(std::move(m));
        head = std::make_unique<FusionHead>(std::move(h));
    } else {
        model = std::make_unique<SnnModel>(SnnModel::load_checkpoint(a.checkpoint));
    }
    if (model->config().C_in != data.C || model->config().T != data.T) {
        std::ostringstream os;
        os << "checkpoint/data shape mismatch: model expects [C=" << model->config().C_in
           << ", T=" << model->config().T << "], data has [C=" << data.C << ", T=" << data.T
           << "]";
        throw DimensionError(os.str());
    }

    double overall = 0.0;
    for (std::size_t s = 0; s < data.sessions.size(); ++s) {
        std::vector<const Trial*> trials;
        for (const Trial& t : data.sessions[s].trials) trials.push_back(&t);
        const double acc = evaluate(*model, head.get(), trials);
        overall += acc;
        std::printf("session %-10u  %6.2f%%\n", data.sessions[s].id, 100.0 * acc);
    }
    std::printf("overall             %6.2f%%\n",
                100.0 * overall / static_cast<double>(data.sessions.size()));

    if (!a.dump_features.empty()) {
        std::ostringstream os;
        os << "session,label";
        const std::size_t C_h = model->config().hidden_channels();
        for (std::size_t j = 0; j < C_h; ++j) os << ",f" << j;
        os << '\n';
        char buf[32];
        for (const Session& sess : data.sessions) {
            std::vector<const Trial*> trials;
            for (const Trial& t : sess.trials) trials.push_back(&t);
            for (std::size_t off = 0; off < trials.size(); off += 256) {
                const std::size_t n = std::min<std::size_t>(256, trials.size() - off);
                std::span<const Trial* const> batch(trials.data() + off, n);
                Tensor feats = model->extract_features(batch);
                for (std::size_t i = 0; i < n; ++i) {
                    os << sess.id << ',' << batch[i]->label;
                    for (std::size_t j = 0; j < C_h; ++j) {
                        std::snprintf(buf, sizeof(buf), ",%.9g", feats.at2(i, j));
                        os << buf;
                    }
                    os << '\n';
                }
            }
        }
        write_text_file(a.dump_features, os.str());
    }
    return kExitOk;
}

struct AblateArgs {
    std::string data_path;
    std::string out_dir = "out";
    std::string grid = "conv";
    ModelOpts model;
    FusionOpts fusion;
    TrainConfig train;
};

int cmd_ablate(AblateArgs& a) {
    SessionSet data = load_session_set(a.data_path);
    SnnConfig cfg = resolve_model(a.model, data);
    resolve_fusion(a.fusion);

    std::vector<AblationVariant> grid;
    if (a.grid == "conv")
        grid = conv_ablation_grid(cfg);
    else if (a.grid == "neuron")
        grid = neuron_ablation_grid(cfg);
    else if (a.grid == "fusion")
        grid = fusion_ablation_grid(cfg, a.fusion.cfg);
    else if (a.grid == "projector")
        grid = projector_ablation_grid(cfg, a.fusion.cfg);
    else
        throw ConfigError("unknown ablation grid: " + a.grid);

    std::vector<AblationResult> results = ablate(data, grid, a.train);
    ensure_dir(a.out_dir);
    write_text_file(a.out_dir + "/ablation.txt", format_ablation(results));
    write_text_file(a.out_dir + "/ablation.csv", format_ablation_csv(results));
    std::fputs(format_ablation(results).c_str(), stdout);
    return kExitOk;
}

struct SweepArgs {
    std::string data_path;
    std::string out_dir = "out";
    std::string param = "C_h";
    std::vector<std::size_t> values;
    ModelOpts model;
    FusionOpts fusion;
    TrainConfig train;
};

int cmd_sweep(SweepArgs& a) {
    SessionSet data = load_session_set(a.data_path);
    SnnConfig cfg = resolve_model(a.model, data);
    const FusionConfig* fusion = resolve_fusion(a.fusion);

    SweepParameter param;
    if (a.param == "C_h")
        param = SweepParameter::HiddenChannels;
    else if (a.param == "d")
        param = SweepParameter::FusionDim;
    else
        throw ConfigError("unknown sweep parameter: " + a.param + " (expected C_h or d)");

    std::vector<SweepPoint> points = sweep(data, cfg, fusion, a.train, param, a.values);
    ensure_dir(a.out_dir);
    write_text_file(a.out_dir + "/sweep.txt", format_sweep(param, points));
    write_text_file(a.out_dir + "/sweep.csv", format_sweep_csv(param, points));
    std::fputs(format_sweep(param, points).c_str(), stdout);
    return kExitOk;
}

struct EnergyArgs {
    std::string data_path;
    std::string checkpoint;  // optional; fresh init when empty
    std::string specs_path;  // optional ANN baseline layer specs
    std::string out_dir = "out";
    std::uint64_t init_seed = 0;
    ModelOpts model;
    EnergyModel energy;
};

int cmd_energy(EnergyArgs& a) {
    SessionSet data = load_session_set(a.data_path);

    std::unique_ptr<SnnModel> model;
    std::unique_ptr<FusionHead> head;
    if (!a.checkpoint.empty()) {
        if (is_fusion_checkpoint(a.checkpoint)) {
            auto [m, h] = load_fusion_checkpoint(a.checkpoint);
            model = std::make_unique<SnnModel>(std::move(m));
            head = std::make_unique<FusionHead>(std::move(h));
        } else {
            model = std::make_unique<SnnModel>(SnnModel::load_checkpoint(a.checkpoint));
        }
    } else {
        model = std::make_unique<SnnModel>(resolve_model(a.model, data), a.init_seed);
    }

    std::vector<const Trial*> trials = all_trials(data);
    EnergyProfile profile = profile_model(*model, head.get(), trials, a.energy);

    std::vector<EnergyReportRow> rows;
    rows.push_back({"snn", parameter_count(*model) + (head ? parameter_count(*head) : 0),
                    profile.mean_counts, profile.mean_energy_pj, 1.0});

    // ANN with the same conv stack: every AC tap becomes a dense MAC.
    const SnnConfig& cfg = model->config();
    const std::size_t C_h = cfg.hidden_channels();
    OpCount ann;
    if (cfg.enable_tc)
        ann += count_conv_ann(cfg.C_in, C_h, cfg.T, cfg.k_temp) + count_bn_plif(C_h, cfg.T);
    if (cfg.enable_sc)
        ann += count_conv_ann(C_h, 1, cfg.T, cfg.k_spat) + count_bn_plif(C_h, cfg.T);
    ann += count_classifier(C_h, cfg.n_class);
    rows.push_back({"ann_equivalent", rows[0].params, ann, total_energy(ann, a.energy),
                    total_energy(ann, a.energy) / profile.mean_energy_pj});

    if (!a.specs_path.empty()) {
        for (const ModelSpec& spec : load_layer_specs(a.specs_path)) {
            OpCount counts;
            for (const LayerSpec& l : spec.layers) counts += count_layer(l);
            rows.push_back({spec.name, spec.params, counts, total_energy(counts, a.energy),
                            total_energy(counts, a.energy) / profile.mean_energy_pj});
        }
    }

    ensure_dir(a.out_dir);
    write_text_file(a.out_dir + "/energy.txt", format_energy_report(rows));
    write_text_file(a.out_dir + "/energy.csv", format_energy_report_csv(rows));
    std::fputs(format_energy_report(rows).c_str(), stdout);
    for (const auto& layer : profile.layers)
        std::printf("  %-8s mean input rate %.4f, AC/trial analytic %.1f, instrumented %.1f\n",
                    layer.layer.c_str(), layer.mean_input_rate, layer.analytic_ac,
                    layer.instrumented_ac);
    return kExitOk;
}

std::string config_dummy;  // --config is consumed during preprocessing

void add_config_flag(CLI::App* sub) {
    sub->add_option("--config", config_dummy, "Flat key=value config file; flags override it");
}

// Expands `--config FILE` into the `--key=value` tokens the file holds,
// injected right after the subcommand so explicit flags take precedence
// (options use a take-last policy).
std::vector<std::string> expand_config(int argc, const char* const* argv) {
    std::vector<std::string> args(argv, argv + argc);
    std::string path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) return args;  // parse error surfaces later
            path = args[i + 1];
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            break;
        }
    }
    if (path.empty() || args.size() < 2) return args;

    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::vector<std::string> injected;
    std::string line;
    while (std::getline(f, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto last = line.find_last_not_of(" \t\r");
        std::string entry = line.substr(first, last - first + 1);
        if (entry.find('=') == std::string::npos)
            throw ConfigError("config file: expected key=value, got '" + entry + "'");
        injected.push_back("--" + entry);
    }
    args.insert(args.begin() + 2, injected.begin(), injected.end());
    return args;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Spiking-network decoder toolkit: synthetic data, training, ablations,\n"
                 "parameter sweeps and energy estimation."};
    app.set_version_flag("--version", kVersionText);
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    GenArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen", "Generate a synthetic session-set file");
    add_config_flag(gen_cmd);
    gen_cmd->add_option("--out", gen.out, "Output path")->required();
    gen_cmd->add_option("--n-sessions", gen.synth.n_sessions, "Recording sessions");
    gen_cmd->add_option("--trials-per-session", gen.synth.trials_per_session, "Trials per session");
    gen_cmd->add_option("--channels", gen.synth.C, "Channels C");
    gen_cmd->add_option("--bins", gen.synth.T, "Time bins T");
    gen_cmd->add_option("--classes", gen.synth.n_class, "Class count");
    gen_cmd->add_option("--base-rate", gen.synth.base_rate, "Baseline spikes per bin");
    gen_cmd->add_option("--class-contrast", gen.synth.class_contrast,
                        "Rate multiplier on active channels");
    gen_cmd->add_option("--active-fraction", gen.synth.active_fraction,
                        "Fraction of channels carrying class information");
    gen_cmd->add_option("--session-drift", gen.synth.session_drift,
                        "Lognormal sigma of per-session channel gains");
    gen_cmd->add_option("--seed", gen.synth.seed, "Generator seed");

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "Train with leave-one-session-out runs");
    add_config_flag(train_cmd);
    train_cmd->add_option("--data", train_args.data_path, "Session-set file")->required();
    train_cmd->add_option("--out-dir", train_args.out_dir, "Output directory");
    train_cmd->add_option("--test-session", train_args.test_session,
                          "Hold out only this session (-1 = all in turn)");
    add_model_opts(train_cmd, train_args.model);
    add_fusion_opts(train_cmd, train_args.fusion);
    add_train_opts(train_cmd, train_args.train);

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a session set");
    add_config_flag(eval_cmd);
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Model or fusion checkpoint")
        ->required();
    eval_cmd->add_option("--data", eval_args.data_path, "Session-set file")->required();
    eval_cmd->add_option("--dump-features", eval_args.dump_features,
                         "Write pooled feature vectors to this CSV");

    AblateArgs ablate_args;
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "Run an ablation grid");
    add_config_flag(ablate_cmd);
    ablate_cmd->add_option("--data", ablate_args.data_path, "Session-set file")->required();
    ablate_cmd->add_option("--out-dir", ablate_args.out_dir, "Output directory");
    ablate_cmd->add_option("--grid", ablate_args.grid,
                           "Variant grid: conv | neuron | fusion | projector");
    add_model_opts(ablate_cmd, ablate_args.model);
    add_fusion_opts(ablate_cmd, ablate_args.fusion);
    add_train_opts(ablate_cmd, ablate_args.train);

    SweepArgs sweep_args;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Sweep C_h or the fusion width d");
    add_config_flag(sweep_cmd);
    sweep_cmd->add_option("--data", sweep_args.data_path, "Session-set file")->required();
    sweep_cmd->add_option("--out-dir", sweep_args.out_dir, "Output directory");
    sweep_cmd->add_option("--param", sweep_args.param, "Swept parameter: C_h | d");
    sweep_cmd->add_option("--values", sweep_args.values, "Values to sweep (comma separated)")
        ->required()
        ->delimiter(',');
    add_model_opts(sweep_cmd, sweep_args.model);
    add_fusion_opts(sweep_cmd, sweep_args.fusion);
    add_train_opts(sweep_cmd, sweep_args.train);

    EnergyArgs energy_args;
    CLI::App* energy_cmd = app.add_subcommand("energy", "Estimate per-trial energy");
    add_config_flag(energy_cmd);
    energy_cmd->add_option("--data", energy_args.data_path, "Session-set file")->required();
    energy_cmd->add_option("--checkpoint", energy_args.checkpoint,
                           "Profile this checkpoint instead of a fresh model");
    energy_cmd->add_option("--specs", energy_args.specs_path,
                           "JSON layer-spec file with baseline comparison models");
    energy_cmd->add_option("--out-dir", energy_args.out_dir, "Output directory");
    energy_cmd->add_option("--init-seed", energy_args.init_seed, "Fresh-model init seed");
    energy_cmd->add_option("--e-mac", energy_args.energy.e_mac, "Energy per MAC (pJ)");
    energy_cmd->add_option("--e-ac", energy_args.energy.e_ac, "Energy per AC (pJ)");
    add_model_opts(energy_cmd, energy_args.model);

    try {
        std::vector<std::string> args = expand_config(argc, argv);
        args.erase(args.begin());  // drop the program name; parse wants it reversed
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
        if (gen_cmd->parsed()) return cmd_gen(gen);
        if (train_cmd->parsed()) return cmd_train(train_args);
        if (eval_cmd->parsed()) return cmd_eval(eval_args);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate_args);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_args);
        if (energy_cmd->parsed()) return cmd_energy(energy_args);
        return kExitConfig;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDivergence;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const DimensionError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitError;
    }
}

}  // namespace spikedec
