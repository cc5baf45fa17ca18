#include <doctest.h>

#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <string>

#include "sag/csv.hpp"

namespace fs = std::filesystem;

namespace {

const char* kCli = SAG_CLI_PATH;

struct CliDir {
    fs::path path;
    CliDir() {
        path = fs::temp_directory_path() / ("sag_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    std::string f(const std::string& name) const { return (path / name).string(); }
};

int run(const std::string& args) {
    const std::string cmd = std::string(kCli) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

// a deliberately tiny configuration so the end-to-end path stays fast
const char* kTinyConfig = R"(
[world]
num_subjects = 3
num_styles = 2
num_domain_subjects = 1
seed = 404

[dataset]
n_domain = 80
n_general = 400

[model]
hidden_width = 24
hidden_depth = 1
time_features = 3
content_dim = 3
subject_dim = 4
table_init = 0.6

[schedule]
kind = linear
num_steps = 80
beta_min = 1e-3
beta_max = 0.05

[train]
steps = 250
batch_size = 16
learning_rate = 2e-3
dropout_prob = 0.1
mix_ratio = 0.1
token_reg_weight = 0.0
seed = 6

[invert]
subject = 0
num_references = 4
reference_style = 0
reference_seed = 42
steps = 30
learning_rate = 2e-2
token_reg_weight = 1e-3
seed = 9

[encoder]
steps = 40
batch_size = 16
learning_rate = 5e-4
mix_ratio = 0.1
dropout_prob = 0.1
token_reg_weight = 1e-3
seed = 12

[sample]
kind = ddim
num_steps = 20
eta = 0.0
x0_clip = 9.0
batch = 16
seed = 99
w = 1.5
style = 1
)";

CliDir& dir() {
    static CliDir d;
    return d;
}

void write_tiny_config() {
    static bool done = false;
    if (done) return;
    std::ofstream(dir().f("tiny.cfg")) << kTinyConfig;
    done = true;
}

}  // namespace

TEST_CASE("cli: missing config file exits 1 and names the path") {
    write_tiny_config();
    const std::string out = dir().f("err.txt");
    const std::string cmd = std::string(kCli) + " train --config " + dir().f("nope.cfg") +
                            " --out " + dir().f("x.ckpt") + " >/dev/null 2>" + out;
    const int rc = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(rc) == 1);
    CHECK(read_file(out).find("nope.cfg") != std::string::npos);
}

TEST_CASE("cli: train twice produces byte-identical checkpoints") {
    write_tiny_config();
    REQUIRE(run("train --config " + dir().f("tiny.cfg") + " --out " + dir().f("a.ckpt")) == 0);
    REQUIRE(run("train --config " + dir().f("tiny.cfg") + " --out " + dir().f("b.ckpt")) == 0);
    const std::string a = read_file(dir().f("a.ckpt"));
    REQUIRE(!a.empty());
    CHECK(a == read_file(dir().f("b.ckpt")));
    CHECK(read_file(dir().f("a.ckpt.loss.csv")) == read_file(dir().f("b.ckpt.loss.csv")));
}

TEST_CASE("cli: invert, sample, report pipeline") {
    write_tiny_config();
    REQUIRE(fs::exists(dir().f("a.ckpt")));
    REQUIRE(run("invert --config " + dir().f("tiny.cfg") + " --checkpoint " + dir().f("a.ckpt") +
                " --out " + dir().f("subj.bin")) == 0);

    REQUIRE(run("sample --config " + dir().f("tiny.cfg") + " --checkpoint " + dir().f("a.ckpt") +
                " --subject token:" + dir().f("subj.bin") + " --mode cfg --out " +
                dir().f("run_cfg")) == 0);
    CHECK(run("report --trace " + dir().f("run_cfg/trace.csv")) == 0);

    REQUIRE(run("sample --config " + dir().f("tiny.cfg") + " --checkpoint " + dir().f("a.ckpt") +
                " --subject token:" + dir().f("subj.bin") +
                " --mode dcfg --agnostic generic:0 --r 0 --T 0.9 --out " + dir().f("run_dcfg")) ==
            0);
    CHECK(run("report --trace " + dir().f("run_dcfg/trace.csv")) == 0);

    // idempotence: rerunning the same sample command reproduces identical files
    REQUIRE(run("sample --config " + dir().f("tiny.cfg") + " --checkpoint " + dir().f("a.ckpt") +
                " --subject token:" + dir().f("subj.bin") +
                " --mode dcfg --agnostic generic:0 --r 0 --T 0.9 --out " + dir().f("run_dcfg2")) ==
            0);
    CHECK(read_file(dir().f("run_dcfg/samples.csv")) == read_file(dir().f("run_dcfg2/samples.csv")));
    CHECK(read_file(dir().f("run_dcfg/trace.csv")) == read_file(dir().f("run_dcfg2/trace.csv")));
}

TEST_CASE("cli: dcfg with r=-1, T=1 equals cfg on the agnostic condition") {
    write_tiny_config();
    REQUIRE(fs::exists(dir().f("subj.bin")));
    REQUIRE(run("sample --config " + dir().f("tiny.cfg") + " --checkpoint " + dir().f("a.ckpt") +
                " --subject token:" + dir().f("subj.bin") +
                " --mode dcfg --agnostic generic:0 --r -1 --T 1.0 --out " + dir().f("run_rm1")) ==
            0);
    REQUIRE(run("sample --config " + dir().f("tiny.cfg") + " --checkpoint " + dir().f("a.ckpt") +
                " --subject generic:0 --mode cfg --out " + dir().f("run_c0")) == 0);
    auto a = sag::read_csv(dir().f("run_rm1/samples.csv"));
    auto b = sag::read_csv(dir().f("run_c0/samples.csv"));
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i][a.col("x0")] == b.rows[i][b.col("x0")]);
        CHECK(a.rows[i][a.col("x1")] == b.rows[i][b.col("x1")]);
    }
}

TEST_CASE("cli: report exits 3 on a tampered trace") {
    write_tiny_config();
    REQUIRE(fs::exists(dir().f("run_cfg/trace.csv")));
    auto f = sag::read_csv(dir().f("run_cfg/trace.csv"));
    sag::CsvWriter w(dir().f("tampered.csv"));
    for (const auto& [k, v] : f.meta) w.comment(k, v);
    w.header(f.header);
    for (std::size_t i = 0; i < f.rows.size(); ++i) {
        auto row = f.rows[i];
        if (i == 3) row[f.col("eps_tilde_1")] = "0.25";
        w.row(row);
    }
    w.close();
    CHECK(run("report --trace " + dir().f("tampered.csv")) == 3);
}

TEST_CASE("cli: encode trains the encoder bundle") {
    write_tiny_config();
    REQUIRE(fs::exists(dir().f("a.ckpt")));
    REQUIRE(run("encode --config " + dir().f("tiny.cfg") + " --checkpoint " + dir().f("a.ckpt") +
                " --out " + dir().f("enc")) == 0);
    CHECK(fs::exists(dir().f("enc/encoder_model.ckpt")));
    CHECK(fs::exists(dir().f("enc/subject_encoded.bin")));

    // the encoder bundle samples with the separate flavor
    CHECK(run("sample --config " + dir().f("tiny.cfg") + " --checkpoint " +
              dir().f("enc/encoder_model.ckpt") + " --subject separate:" +
              dir().f("enc/subject_encoded.bin") + " --mode dcfg --agnostic zero --r 0 --T 0.9" +
              " --out " + dir().f("run_enc")) == 0);
}

TEST_CASE("cli: ablate produces one results row per grid point plus plots") {
    write_tiny_config();
    REQUIRE(fs::exists(dir().f("subj.bin")));
    std::ofstream(dir().f("plan.cfg"))
        << "[plan]\n"
        << "world_config = " << dir().f("tiny.cfg") << "\n"
        << "checkpoint = " << dir().f("a.ckpt") << "\n"
        << "subject = token:" << dir().f("subj.bin") << "\n"
        << "agnostic = generic:0\n"
        << "style = 1\nsamples = 24\nseed = 31\n"
        << "grid = cfg w=1.5 | dcfg w=1.5 r=0 T=1.0 | dcfg w=1.5 r=0 T=0.9 | dcfg w=1.5 r=0 T=0.5 "
           "| dcfg w=1.5 r=-0.5 T=0.9\n";
    REQUIRE(run("ablate --plan " + dir().f("plan.cfg") + " --out " + dir().f("abl")) == 0);
    auto f = sag::read_csv(dir().f("abl/results.csv"));
    CHECK(f.rows.size() == 5);
    CHECK(fs::exists(dir().f("abl/alignment_vs_T.svg")));
    CHECK(fs::exists(dir().f("abl/alignment_vs_r.svg")));

    // an invalid grid point is rejected before any sampling
    std::ofstream(dir().f("bad_plan.cfg"))
        << "[plan]\n"
        << "world_config = " << dir().f("tiny.cfg") << "\n"
        << "checkpoint = " << dir().f("a.ckpt") << "\n"
        << "subject = token:" << dir().f("subj.bin") << "\n"
        << "agnostic = generic:0\nstyle = 1\nsamples = 4\nseed = 31\n"
        << "grid = dcfg w=1.5 r=-2 T=0.9\n";
    CHECK(run("ablate --plan " + dir().f("bad_plan.cfg") + " --out " + dir().f("abl2")) == 1);
}

TEST_CASE("cli: divergence exits with code 2") {
    write_tiny_config();
    std::ofstream(dir().f("diverge.cfg")) << std::string(kTinyConfig)
                                          << "\n[train]\nlearning_rate = 1e200\nsteps = 40\n";
    CHECK(run("train --config " + dir().f("diverge.cfg") + " --out " + dir().f("d.ckpt")) == 2);
}

TEST_CASE("cli: unknown config keys are rejected") {
    write_tiny_config();
    std::ofstream(dir().f("typo.cfg")) << std::string(kTinyConfig) << "\n[train]\nstepz = 3\n";
    CHECK(run("train --config " + dir().f("typo.cfg") + " --out " + dir().f("t.ckpt")) == 1);
}
