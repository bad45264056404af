#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <initializer_list>
#include <string>
#include <sys/stat.h>
#include <unistd.h>
#include <vector>

#include "spikedec/cli.hpp"
#include "spikedec/data.hpp"

using namespace spikedec;

namespace {

int run(std::initializer_list<const char*> args) {
    std::vector<const char*> argv{"spikedec"};
    argv.insert(argv.end(), args.begin(), args.end());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string work_dir() {
    static const std::string dir = "/tmp/spikedec_cli_" + std::to_string(getpid());
    mkdir(dir.c_str(), 0755);
    return dir;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

bool exists(const std::string& path) {
    struct stat st;
    return stat(path.c_str(), &st) == 0;
}

// a small, quickly trainable dataset shared across the cases below
const char* kGenArgs[] = {"--n-sessions", "2",  "--trials-per-session", "16", "--channels",
                          "12",           "--bins", "20", "--seed", "7"};

std::string gen_data(const std::string& name) {
    const std::string path = work_dir() + "/" + name + ".spkd";
    std::vector<const char*> argv{"spikedec", "gen", "--out", path.c_str()};
    for (const char* a : kGenArgs) argv.push_back(a);
    REQUIRE(run_cli(static_cast<int>(argv.size()), argv.data()) == kExitOk);
    return path;
}

}  // namespace

TEST_CASE("version and help exit cleanly; bad invocations exit with the config code") {
    REQUIRE(run({"--version"}) == kExitOk);
    REQUIRE(run({"--help"}) == kExitOk);
    REQUIRE(run({}) == kExitConfig);                 // no subcommand
    REQUIRE(run({"frobnicate"}) == kExitConfig);     // unknown subcommand
    REQUIRE(run({"gen"}) == kExitConfig);            // missing required --out
    REQUIRE(run({"gen", "--out", "/tmp/x", "--no-such-flag"}) == kExitConfig);
}

TEST_CASE("gen writes a loadable file, deterministically in the seed") {
    const std::string p1 = gen_data("a"), p2 = gen_data("b");
    REQUIRE(slurp(p1) == slurp(p2));

    SessionSet data = load_session_set(p1);
    REQUIRE(data.sessions.size() == 2);
    REQUIRE(data.C == 12);
    REQUIRE(data.T == 20);

    const std::string p3 = work_dir() + "/c.spkd";
    REQUIRE(run({"gen", "--out", p3.c_str(), "--n-sessions", "2", "--trials-per-session", "16",
                 "--channels", "12", "--bins", "20", "--seed", "8"}) == kExitOk);
    REQUIRE(slurp(p3) != slurp(p1));

    // invalid generator config is a config error
    REQUIRE(run({"gen", "--out", p3.c_str(), "--n-sessions", "0"}) == kExitConfig);
}

TEST_CASE("train writes results and a checkpoint; identical invocations are byte-identical") {
    const std::string data = gen_data("train");
    const std::string d1 = work_dir() + "/run1", d2 = work_dir() + "/run2";
    const char* common[] = {"--test-session", "1",  "--seeds",      "0",  "--max-epochs", "3",
                            "--patience",     "3",  "--batch-size", "8",  "--lr",         "0.01",
                            "--hidden-channels", "4", "--k-temp",   "5",  "--k-spat",     "3"};
    for (const std::string& dir : {d1, d2}) {
        std::vector<const char*> argv{"spikedec", "train", "--data", data.c_str(), "--out-dir",
                                      dir.c_str()};
        for (const char* a : common) argv.push_back(a);
        REQUIRE(run_cli(static_cast<int>(argv.size()), argv.data()) == kExitOk);
    }
    for (const char* f : {"/results.jsonl", "/table.txt", "/table.csv", "/model.spkm"})
        REQUIRE(exists(d1 + f));
    REQUIRE(slurp(d1 + "/results.jsonl") == slurp(d2 + "/results.jsonl"));
    REQUIRE(slurp(d1 + "/model.spkm") == slurp(d2 + "/model.spkm"));
    REQUIRE(slurp(d1 + "/table.csv") == slurp(d2 + "/table.csv"));

    REQUIRE(run({"train", "--data", "/nonexistent.spkd"}) == kExitIo);
}

TEST_CASE("a fusion training run saves a fusion checkpoint instead") {
    const std::string data = gen_data("fus");
    const std::string dir = work_dir() + "/fusion_run";
    REQUIRE(run({"train", "--data", data.c_str(), "--out-dir", dir.c_str(), "--test-session",
                 "1", "--seeds", "0", "--max-epochs", "2", "--patience", "2", "--batch-size",
                 "8", "--hidden-channels", "4", "--k-temp", "5", "--k-spat", "3", "--fusion",
                 "--fusion-d", "8", "--fusion-b", "4"}) == kExitOk);
    REQUIRE(exists(dir + "/model.spkf"));
    REQUIRE(!exists(dir + "/model.spkm"));
}

TEST_CASE("eval consumes either checkpoint flavor and rejects mismatched data") {
    const std::string data = gen_data("eval");
    const std::string plain = work_dir() + "/run1/model.spkm";
    const std::string fused = work_dir() + "/fusion_run/model.spkf";
    REQUIRE(exists(plain));  // produced by the train cases above
    REQUIRE(exists(fused));
    REQUIRE(run({"eval", "--checkpoint", plain.c_str(), "--data", data.c_str()}) == kExitOk);
    const std::string csv = work_dir() + "/features.csv";
    REQUIRE(run({"eval", "--checkpoint", fused.c_str(), "--data", data.c_str(),
                 "--dump-features", csv.c_str()}) == kExitOk);
    REQUIRE(exists(csv));

    // a dataset whose shape disagrees with the checkpoint is a config error
    const std::string other = work_dir() + "/other.spkd";
    REQUIRE(run({"gen", "--out", other.c_str(), "--n-sessions", "1", "--trials-per-session",
                 "4", "--channels", "5", "--bins", "20"}) == kExitOk);
    REQUIRE(run({"eval", "--checkpoint", plain.c_str(), "--data", other.c_str()}) ==
            kExitConfig);
    REQUIRE(run({"eval", "--checkpoint", "/nonexistent.spkm", "--data", data.c_str()}) ==
            kExitIo);
}

TEST_CASE("energy reports zero accumulates on silent data") {
    const std::string silent = work_dir() + "/silent.spkd";
    REQUIRE(run({"gen", "--out", silent.c_str(), "--n-sessions", "1", "--trials-per-session",
                 "4", "--channels", "6", "--bins", "10", "--base-rate", "0",
                 "--class-contrast", "1"}) == kExitOk);
    const std::string dir = work_dir() + "/energy_silent";
    REQUIRE(run({"energy", "--data", silent.c_str(), "--out-dir", dir.c_str(),
                 "--hidden-channels", "4", "--k-temp", "3", "--k-spat", "3"}) == kExitOk);
    const std::string csv = slurp(dir + "/energy.csv");
    // snn row: model,params,mac,ac,...; the AC column must be exactly 0
    const auto line_start = csv.find("\nsnn,");
    REQUIRE(line_start != std::string::npos);
    std::size_t col = line_start;
    for (int commas = 0; commas < 3; ++commas) col = csv.find(',', col + 1);
    REQUIRE(csv.compare(col + 1, 2, "0,") == 0);
}

TEST_CASE("energy compares against layer-spec baselines") {
    const std::string data = gen_data("energy");
    const std::string specs = work_dir() + "/specs.json";
    {
        std::ofstream f(specs);
        f << R"([{"name":"dense","params":1000,"layers":[{"kind":"mac","r":16160000.0}]}])";
    }
    const std::string dir = work_dir() + "/energy_cmp";
    REQUIRE(run({"energy", "--data", data.c_str(), "--specs", specs.c_str(), "--out-dir",
                 dir.c_str(), "--hidden-channels", "4", "--k-temp", "5", "--k-spat", "3"}) ==
            kExitOk);
    const std::string txt = slurp(dir + "/energy.txt");
    REQUIRE(txt.find("snn") != std::string::npos);
    REQUIRE(txt.find("ann_equivalent") != std::string::npos);
    REQUIRE(txt.find("dense") != std::string::npos);

    {
        std::ofstream f(specs);
        f << "not json";
    }
    REQUIRE(run({"energy", "--data", data.c_str(), "--specs", specs.c_str(), "--out-dir",
                 dir.c_str()}) == kExitIo);  // format errors are I/O failures
}

TEST_CASE("sweep and ablate run end to end on a tiny grid") {
    const std::string data = gen_data("grids");
    const std::string sdir = work_dir() + "/sweep_out";
    REQUIRE(run({"sweep", "--data", data.c_str(), "--out-dir", sdir.c_str(), "--param", "C_h",
                 "--values", "2,4", "--seeds", "0", "--max-epochs", "2", "--patience", "2",
                 "--batch-size", "8", "--k-temp", "5", "--k-spat", "3"}) == kExitOk);
    REQUIRE(exists(sdir + "/sweep.csv"));
    REQUIRE(run({"sweep", "--data", data.c_str(), "--param", "bogus", "--values", "2"}) ==
            kExitConfig);

    const std::string adir = work_dir() + "/ablate_out";
    REQUIRE(run({"ablate", "--data", data.c_str(), "--out-dir", adir.c_str(), "--grid",
                 "fusion", "--seeds", "0", "--max-epochs", "2", "--patience", "2",
                 "--batch-size", "8", "--hidden-channels", "4", "--k-temp", "5", "--k-spat",
                 "3", "--fusion-d", "8", "--fusion-b", "4"}) == kExitOk);
    const std::string txt = slurp(adir + "/ablation.txt");
    REQUIRE(txt.find("fusion_on") != std::string::npos);
    REQUIRE(txt.find("fusion_off") != std::string::npos);
    REQUIRE(run({"ablate", "--data", data.c_str(), "--grid", "bogus"}) == kExitConfig);
}

TEST_CASE("flags can come from a key=value config file") {
    const std::string data = gen_data("cfgfile");
    const std::string cfg = work_dir() + "/train.cfg";
    {
        std::ofstream f(cfg);
        f << "test-session=1\nseeds=0\nmax-epochs=2\npatience=2\nbatch-size=8\n"
             "hidden-channels=4\nk-temp=5\nk-spat=3\n";
    }
    const std::string d1 = work_dir() + "/cfg_run";
    REQUIRE(run({"train", "--data", data.c_str(), "--out-dir", d1.c_str(), "--config",
                 cfg.c_str()}) == kExitOk);
    REQUIRE(exists(d1 + "/results.jsonl"));
    REQUIRE(run({"train", "--data", data.c_str(), "--config", "/nonexistent.cfg"}) ==
            kExitConfig);
}
