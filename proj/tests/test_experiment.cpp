#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "dynreg/experiment.hpp"

using namespace dynreg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("dynreg-test-" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string config_error(const std::string& text) {
    try {
        parse_experiment(load_config_text(text, "cfg.yaml"));
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream s(line);
    for (std::string f; std::getline(s, f, ',');) out.push_back(f);
    return out;
}

int cli(const std::string& args) {
    const int rc = std::system((std::string(DYNREG_CLI) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

const char* kDrifting = R"(horizon: 300
seeds: [1, 2]
environment: {kind: drifting-quadratic, tau: 2}
algorithms:
  - name: adaptive
    kind: diomd
    schedule: {kind: adaptive, tau: 2}
  - kind: greedy
  - kind: doubling
)";

}  // namespace

TEST(Config, DiagnosticsCarryFileLineAndField) {
    EXPECT_EQ(config_error("horizon: 10\nenvironment:\n  kind: fixed-loss\n  colour: red\nalgorithms: [{kind: greedy}]\n"),
              "cfg.yaml:4: environment.colour: unknown field");
    EXPECT_NE(config_error("environment: {kind: fixed-loss}\nalgorithms: [{kind: greedy}]\n").find("horizon"),
              std::string::npos);
    const std::string bad_kind = config_error(
        "horizon: 10\nenvironment: {kind: fixed-loss}\nalgorithms:\n  - kind: greedy\n  - kind: nope\n");
    EXPECT_NE(bad_kind.find("cfg.yaml:5"), std::string::npos) << bad_kind;
    EXPECT_NE(bad_kind.find("algorithms[1]"), std::string::npos) << bad_kind;
    EXPECT_NE(config_error("horizon: ten\nenvironment: {kind: fixed-loss}\nalgorithms: [{kind: greedy}]\n").find("cfg.yaml:1"),
              std::string::npos);
    EXPECT_NE(config_error("horizon: 10\nseeds: [1, 1]\nenvironment: {kind: fixed-loss}\nalgorithms: [{kind: greedy}]\n")
                  .find("duplicate seed"),
              std::string::npos);
    EXPECT_NE(config_error("horizon: 10\nenvironment: {kind: drifting-quadratic, tau: -1}\nalgorithms: [{kind: greedy}]\n")
                  .find("tau"),
              std::string::npos);
    EXPECT_NE(config_error("horizon: 100\nenvironment: {kind: lower-bound, sigma: 0.05}\nalgorithms: [{kind: greedy}]\n")
                  .find("environment"),
              std::string::npos);
    // Every algorithm is validated before anything runs.
    EXPECT_NE(config_error("horizon: 10\nenvironment: {kind: fixed-loss}\nalgorithms:\n  - kind: greedy\n"
                           "  - kind: diomd\n    schedule: {kind: constant, eta: -1}\n")
                  .find("algorithms[1]"),
              std::string::npos);
}

TEST(Config, JsonIsTheSameSchema) {
    const ExperimentConfig y = parse_experiment(load_config_text(kDrifting, "a.yaml"));
    const ExperimentConfig j = parse_experiment(load_config_text(
        R"({"horizon": 300, "seeds": [1, 2], "environment": {"kind": "drifting-quadratic", "tau": 2},
            "algorithms": [{"name": "adaptive", "kind": "diomd", "schedule": {"kind": "adaptive", "tau": 2}},
                           {"kind": "greedy"}, {"kind": "doubling"}]})",
        "a.json"));
    ASSERT_EQ(y.algorithms.size(), j.algorithms.size());
    for (std::size_t i = 0; i < y.algorithms.size(); ++i) {
        const CellOutput a = run_cell(y, y.algorithms[i], 2), b = run_cell(j, j.algorithms[i], 2);
        EXPECT_EQ(report_text(a.report), report_text(b.report));
    }
}

TEST(Run, MinimalFixedLossGreedy) {
    const ExperimentConfig cfg = parse_experiment(load_config_text(
        "horizon: 10\nseeds: [7]\nenvironment: {kind: fixed-loss, dim: 3}\nalgorithms: [{kind: greedy}]\n"));
    const CellOutput c = run_cell(cfg, cfg.algorithms[0], 7);
    const auto& r = c.trace.rounds;
    ASSERT_EQ(r.size(), 10u);
    // Greedy jumps to the minimiser after round one, so all regret comes from l1(x1) - l1(x2).
    const double bound = eval(r[0].loss, r[0].x) - eval(r[0].loss, r[1].x);
    EXPECT_NEAR(c.report.metrics.regret, bound, 1e-9);
    EXPECT_LE(c.report.metrics.regret, bound + 1e-9);
    EXPECT_EQ(c.report.metrics.v_signed, 0.0);
    const BoundCheck* chk = c.report.find("greedy-variability");
    ASSERT_NE(chk, nullptr);
    EXPECT_EQ(chk->status, CheckStatus::pass);
    EXPECT_TRUE(c.report.all_pass());
}

TEST(Run, RegretMatchesTheRunningSum) {
    const ExperimentConfig cfg = parse_experiment(load_config_text(kDrifting));
    for (const auto& a : cfg.algorithms) {
        const CellOutput c = run_cell(cfg, a, 1);
        double sum = 0.0;
        for (const auto& r : c.trace.rounds) sum += eval(r.loss, r.x) - eval(r.loss, r.u);
        EXPECT_NEAR(c.report.metrics.regret, sum, 1e-9);
        EXPECT_TRUE(c.report.all_pass()) << a.name;
    }
}

TEST(Verify, ReproducesTheRunReportByteForByte) {
    const fs::path dir = scratch("verify");
    spit(dir / "cfg.yaml", kDrifting);
    RunOptions o;
    o.output_dir = (dir / "out").string();
    const RunOutcome out = run_experiment(load_experiment((dir / "cfg.yaml").string()), o);
    EXPECT_EQ(out.exit_code(true), 0);
    for (const std::string stem : {"adaptive-seed1", "greedy-seed2", "doubling-seed1"}) {
        const fs::path trace = dir / "out" / (stem + ".trace.jsonl");
        const VerifyOutcome v = verify_trace(trace.string(), (dir / "cfg.yaml").string());
        EXPECT_EQ(v.text, slurp(dir / "out" / (stem + ".report.json"))) << stem;
    }
    // A trace from another environment is rejected against this config.
    spit(dir / "other.yaml", "horizon: 300\nenvironment: {kind: drifting-quadratic, tau: 3}\nalgorithms: [{kind: greedy}]\n");
    EXPECT_THROW(verify_trace((dir / "out" / "greedy-seed1.trace.jsonl").string(), (dir / "other.yaml").string()),
                 ConfigError);
}

TEST(Verify, CorruptedDeltaIsFlaggedAtItsRound) {
    const ExperimentConfig cfg = parse_experiment(load_config_text(kDrifting));
    Trace tr = run_cell_trace(cfg, cfg.algorithms[0], 1);
    std::ostringstream os;
    write_trace(os, tr);
    std::istringstream is(os.str());
    std::string text, line;
    while (std::getline(is, line)) {
        json j = json::parse(line);
        if (j.value("t", 0) == 42) j["delta"] = -0.25;
        text += j.dump() + "\n";
    }
    std::istringstream back(text);
    const RunReport rep = build_report(read_trace(back));
    const BoundCheck* nonneg = rep.find("delta-nonnegative");
    ASSERT_NE(nonneg, nullptr);
    EXPECT_EQ(nonneg->status, CheckStatus::fail);
    EXPECT_EQ(nonneg->round, std::optional<std::size_t>(42));
    const BoundCheck* consistent = rep.find("delta-consistency");
    ASSERT_NE(consistent, nullptr);
    EXPECT_EQ(consistent->status, CheckStatus::fail);
    EXPECT_EQ(consistent->round, std::optional<std::size_t>(42));
}

TEST(Verify, MalformedTraceLinesAreReportedWithLineNumbers) {
    const ExperimentConfig cfg = parse_experiment(load_config_text(kDrifting));
    std::ostringstream os;
    write_trace(os, run_cell_trace(cfg, cfg.algorithms[1], 1));
    std::vector<std::string> lines;
    std::istringstream is(os.str());
    for (std::string l; std::getline(is, l);) lines.push_back(l);
    auto message = [&](std::vector<std::string> ls) {
        std::string text;
        for (const auto& l : ls) text += l + "\n";
        std::istringstream in(text);
        try {
            read_trace(in);
        } catch (const ReportError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    auto broken = lines;
    broken[3] = "{not json";
    EXPECT_NE(message(broken).find("line 4"), std::string::npos) << message(broken);
    broken = lines;
    std::swap(broken[5], broken[6]);
    EXPECT_NE(message(broken).find("line 6"), std::string::npos) << message(broken);
    broken = lines;
    broken.pop_back();
    EXPECT_FALSE(message(broken).empty());
    broken = lines;
    broken.erase(broken.begin());
    EXPECT_NE(message(broken).find("line 1"), std::string::npos) << message(broken);
}

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("cli");
    spit(dir / "good.yaml", kDrifting);
    spit(dir / "mis-set.yaml",
         "horizon: 2000\nseeds: [1]\nenvironment: {kind: switching-quadratic, shifts: 1}\nalgorithms:\n"
         "  - kind: diomd\n    schedule: {kind: adaptive, tau: 2, beta_sq: 0.0001}\n");
    spit(dir / "broken.yaml", "horizon: 10\nenvironment: {kind: fixed-loss, bogus: 1}\nalgorithms: [{kind: greedy}]\n");
    const std::string out = " --output-dir " + (dir / "out").string();
    EXPECT_EQ(cli("run " + (dir / "good.yaml").string() + " --strict" + out), 0);
    EXPECT_EQ(cli("run " + (dir / "mis-set.yaml").string() + out), 0);
    EXPECT_EQ(cli("run " + (dir / "mis-set.yaml").string() + " --strict" + out), 2);
    EXPECT_EQ(cli("run " + (dir / "broken.yaml").string() + out), 1);
    EXPECT_EQ(cli("verify " + (dir / "missing.jsonl").string()), 1);
    EXPECT_EQ(cli("verify " + (dir / "out" / "diomd-seed1.trace.jsonl").string() + " --strict"), 2);
    EXPECT_EQ(cli("list-algorithms"), 0);
}

TEST(Sweep, OutputsAreIndependentOfExecutionOrder) {
    const fs::path dir = scratch("sweep");
    const std::string cfg = std::string(kDrifting) + "grid:\n  environment.tau: [0.5, 2]\n  horizon: [100, 200]\n";
    const ConfigDoc doc = load_config_text(cfg, "sweep.yaml");
    RunOptions serial, parallel;
    serial.output_dir = (dir / "serial").string();
    parallel.output_dir = (dir / "parallel").string();
    parallel.threads = 4;
    const RunOutcome a = sweep_experiment(doc, serial), b = sweep_experiment(doc, parallel);
    EXPECT_EQ(a.cells.size(), 4u * 3u * 2u);
    EXPECT_EQ(a.hard_errors + b.hard_errors, 0u);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / "serial")) {
        if (!e.is_regular_file()) continue;
        const fs::path rel = fs::relative(e.path(), dir / "serial");
        EXPECT_EQ(slurp(e.path()), slurp(dir / "parallel" / rel)) << rel;
        ++files;
    }
    EXPECT_EQ(files, 4u * 3u * 2u * 2u + 4u * 2u + 2u);

    // Reversing the seed order changes neither per-cell file.
    RunOptions rev;
    rev.output_dir = (dir / "reversed").string();
    rev.seed_override = std::vector<std::uint64_t>{2, 1};
    const ExperimentConfig plain = parse_experiment(load_config_text(kDrifting));
    RunOptions fwd;
    fwd.output_dir = (dir / "forward").string();
    run_experiment(plain, fwd);
    run_experiment(plain, rev);
    for (const std::string f : {"adaptive-seed1.report.json", "greedy-seed2.trace.jsonl", "doubling-seed2.report.json"})
        EXPECT_EQ(slurp(dir / "forward" / f), slurp(dir / "reversed" / f)) << f;
}

TEST(Sweep, LowerBoundMeanRegret) {
    const fs::path dir = scratch("lower-bound");
    const ExperimentConfig cfg = parse_experiment(load_config_text(
        "horizon: 10000\nseeds: {from: 1, count: 200}\nenvironment: {kind: lower-bound, sigma: 0.1}\n"
        "algorithms: [{kind: greedy}]\n"));
    RunOptions o;
    o.output_dir = dir.string();
    o.write_traces = false;
    o.threads = 4;
    const RunOutcome out = run_experiment(cfg, o);
    ASSERT_EQ(out.hard_errors, 0u);
    std::istringstream agg(slurp(dir / "aggregate.csv"));
    std::string header, row;
    std::getline(agg, header);
    std::getline(agg, row);
    const auto h = split_csv(header), v = split_csv(row);
    ASSERT_EQ(h.size(), v.size());
    const auto col = std::find(h.begin(), h.end(), "mean_regret") - h.begin();
    EXPECT_EQ(v[1], "greedy");
    EXPECT_GE(std::stod(v[col]), 0.1 * 0.1 * 10000 / 2.0);
}
