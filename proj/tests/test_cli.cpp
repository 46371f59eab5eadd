#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "memdiff/config.hpp"
#include "memdiff/csv.hpp"

namespace fs = std::filesystem;

namespace {

struct ScratchDir {
    fs::path path = fs::temp_directory_path() / ("memdiff_cli_" + std::to_string(::getpid()));
    ScratchDir() {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

const fs::path& scratch() {
    static const ScratchDir dir;
    return dir.path;
}

int run(const std::string& args) {
    const std::string cmd = std::string(MEMDIFF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string write_config(const std::string& name, const std::string& body) {
    const auto path = scratch() / (name + ".cfg");
    std::ofstream(path) << body;
    return path.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

struct Table {
    std::string preamble;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw std::runtime_error("no column " + name);
    }
    double num(std::size_t r, const std::string& name) const { return std::stod(rows[r][col(name)]); }
};

Table read_table(const fs::path& p) {
    std::ifstream in(p);
    Table t;
    std::string line;
    std::getline(in, t.preamble);
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, ',')) out.push_back(tok);
        return out;
    };
    std::getline(in, line);
    t.header = split(line);
    while (std::getline(in, line)) t.rows.push_back(split(line));
    return t;
}

std::string small_config(const fs::path& out, std::uint64_t seed = 3) {
    return "seed = " + std::to_string(seed) + "\noutput.dir = " + out.string() +
           "\ntrain.iterations = 200\nsampler.n = 64\nsampler.steps = 8\nmetrics.reference_n = 64\n";
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(run(""), 1);
    EXPECT_EQ(run("frobnicate"), 1);
    EXPECT_EQ(run("mi --no-such-flag"), 1);
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run("mi --config " + (scratch() / "absent.cfg").string()), 2);
    EXPECT_EQ(run("mi --config " + write_config("unknown", "mi.bogus = 1\n")), 1);
    EXPECT_EQ(run("mi --config " + write_config("badnum", "mi.dim = two\n")), 1);
    EXPECT_EQ(run("mi --config " + write_config("dup", "mi.dim = 1\nmi.dim = 2\n")), 1);
    EXPECT_EQ(run("train --config " + write_config("depth", "train.hidden_layers = 3\n")), 1);
}

TEST(Cli, SweepNeedsBaselineAndTwoValues) {
    const auto out = scratch() / "sweep_bad";
    EXPECT_EQ(run("sweep --out " + out.string() + " --config " + write_config("s0", "sweep.sigma_tn = 0\n")), 1);
    EXPECT_EQ(run("sweep --out " + out.string() + " --config " + write_config("s1", "sweep.sigma_tn = 0.1, 0.4\n")), 1);
}

TEST(Cli, MissingDatasetIsRuntimeError) {
    const auto cfg = write_config("nofile", "dataset.kind = file\ndataset.path = " + (scratch() / "nope.csv").string() +
                                                "\ndataset.reference_path = " + (scratch() / "nope.csv").string() + "\n");
    EXPECT_EQ(run("train --out " + (scratch() / "nofile").string() + " --config " + cfg), 2);
    EXPECT_EQ(run("train --config " + write_config("nopath", "dataset.kind = file\n")), 1);
}

TEST(Cli, MiTable) {
    const auto out = scratch() / "mi";
    const auto cfg = write_config("mi", "mi.m = 3\nmi.draws = 0\n");
    ASSERT_EQ(run("mi --seed 11 --out " + out.string() + " --config " + cfg), 0);
    const auto t = read_table(out / "mi.csv");
    EXPECT_EQ(t.preamble, "# memdiff-csv schema=mi version=1 seed=11");
    EXPECT_EQ(t.header, (std::vector<std::string>{"sigma_tn", "mi_ambient", "mi_ddpm", "bound", "mi_monte_carlo"}));
    ASSERT_EQ(t.rows.size(), 20u);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        EXPECT_EQ(t.num(r, "mi_ddpm"), 3.0 * t.num(r, "mi_ambient"));
        EXPECT_GE(t.num(r, "bound") * (1 + 1e-12), t.num(r, "mi_ddpm"));
        if (r) {
            EXPECT_LT(t.num(r, "mi_ambient"), t.num(r - 1, "mi_ambient"));
        }
    }
    EXPECT_TRUE(fs::exists(out / "config.resolved"));
}

TEST(Cli, EvalOnTrainingSetIsFullyMemorized) {
    const auto out = scratch() / "eval";
    fs::create_directories(out);
    const auto data = out / "data.csv";
    {
        std::ofstream f(data);
        f << "x0,x1\n1,2\n-0.5,3\n2.5,-1\n0.1,0.2\n-2,-2\n";
    }
    const auto cfg = write_config("eval", "eval.generated = " + data.string() + "\neval.train = " + data.string() + "\n");
    ASSERT_EQ(run("eval --out " + out.string() + " --config " + cfg), 0);
    const auto t = read_table(out / "metrics.csv");
    int fractions = 0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& m = t.rows[r][t.col("metric")];
        if (m.find("fraction") != std::string::npos) {
            EXPECT_EQ(t.num(r, "value"), 1.0) << m;
            ++fractions;
        }
    }
    EXPECT_GE(fractions, 4);
}

TEST(Cli, SubpopAndGmm) {
    const auto out = scratch() / "subpop";
    const auto cfg = write_config("subpop", "subpop.N = 6\nsubpop.n = 3\ngmm.grid = 25\n");
    ASSERT_EQ(run("subpop --out " + out.string() + " --config " + cfg), 0);
    const auto d = read_table(out / "decomposition.csv");
    ASSERT_EQ(d.rows.size(), 20u);
    for (std::size_t r = 0; r < d.rows.size(); ++r) EXPECT_LE(d.num(r, "gap"), 1e-12);
    const auto tau = read_table(out / "tau.csv");
    ASSERT_EQ(tau.rows.size(), 3u);
    for (std::size_t r = 0; r < tau.rows.size(); ++r) EXPECT_EQ(tau.rows[r][tau.col("method")], "enumeration");

    ASSERT_EQ(run("gmm --out " + out.string() + " --config " + cfg), 0);
    const auto g = read_table(out / "gmm.csv");
    ASSERT_EQ(g.rows.size(), 25u);
    for (std::size_t r = 1; r < g.rows.size(); ++r) EXPECT_LT(g.num(r, "tv"), g.num(r - 1, "tv"));
}

TEST(Cli, TrainSampleDeterministic) {
    const auto a = scratch() / "det_a", b = scratch() / "det_b", c = scratch() / "det_c";
    for (const auto& out : {a, b}) {
        const auto cfg = write_config(out.filename().string(), small_config(out));
        ASSERT_EQ(run("train --config " + cfg), 0);
        ASSERT_EQ(run("sample --record --steps 6 --config " + cfg), 0);
        ASSERT_EQ(run("eval --config " + cfg), 0);
    }
    for (const char* f : {"model.ckpt", "loss.csv", "samples.csv", "trajectory.csv", "metrics.csv"}) {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    // The resolved configs differ only in the output directory.
    auto ca = memdiff::load_config((a / "config.resolved").string());
    ca.out_dir = b.string();
    EXPECT_EQ(memdiff::render_config(ca), slurp(b / "config.resolved"));
    const auto cfg = write_config("det_c", small_config(c, 4));
    ASSERT_EQ(run("train --config " + cfg), 0);
    EXPECT_NE(slurp(a / "model.ckpt"), slurp(c / "model.ckpt"));
    EXPECT_EQ(read_table(a / "samples.csv").rows.size(), 64u);
    EXPECT_EQ(read_table(a / "trajectory.csv").preamble, "# memdiff-csv schema=trajectory version=1 seed=3");
}

TEST(Cli, ResolvedConfigRoundTrips) {
    const auto out = scratch() / "resolved";
    ASSERT_EQ(run("gmm --seed 9 --out " + out.string() + " --config " + write_config("rt", "gmm.epsilon = 0.02\n")), 0);
    const auto cfg = memdiff::load_config((out / "config.resolved").string());
    EXPECT_EQ(cfg.seed, 9u);
    EXPECT_EQ(cfg.gmm_epsilon, 0.02);
    EXPECT_EQ(cfg.out_dir, out.string());
    EXPECT_EQ(memdiff::render_config(cfg), slurp(out / "config.resolved"));
}

TEST(Cli, SweepWritesOneRowPerLeg) {
    const auto out = scratch() / "sweep";
    const auto cfg = write_config("sweep", small_config(out) + "sweep.sigma_tn = 0.4, 0, 0.1\n");
    ASSERT_EQ(run("sweep --config " + cfg), 0);
    const auto t = read_table(out / "pareto.csv");
    ASSERT_EQ(t.rows.size(), 3u);
    EXPECT_EQ(t.num(0, "sigma_tn"), 0.0);
    EXPECT_EQ(t.rows[0][t.col("mode")], "ddpm");
    EXPECT_EQ(t.rows[1][t.col("mode")], "hybrid");
    int frontier = 0;
    for (std::size_t r = 0; r < 3; ++r) {
        EXPECT_EQ(t.rows[r][t.col("status")], "ok");
        frontier += t.rows[r][t.col("on_frontier")] == "1";
    }
    EXPECT_GE(frontier, 1);
}
