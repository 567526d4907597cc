#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dynreg/experiment.hpp"

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(item, &pos);
        if (pos != item.size()) throw dynreg::ConfigError("--seed-override: bad seed '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw dynreg::ConfigError("--seed-override: empty list");
    return out;
}

void print_outcome(const dynreg::RunOutcome& r) {
    std::size_t failed_checks = 0;
    for (const auto& c : r.cells) {
        failed_checks += c.failed;
        if (!c.error.empty()) std::cerr << "error: " << c.algorithm << " seed " << c.seed << ": " << c.error << "\n";
        else if (c.failed > 0)
            std::cerr << "bound check failed: " << c.algorithm << " seed " << c.seed << ": " << c.failed_names << "\n";
    }
    std::cout << r.cells.size() << " cells, " << r.hard_errors << " errors, " << r.bound_failures
              << " cells with failed checks (" << failed_checks << " checks)\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic-regret experiment runner"};
    app.require_subcommand(1);

    bool strict = false;
    std::string seed_override, output_dir;
    std::size_t threads = 1;
    bool no_traces = false;
    auto add_run_flags = [&](CLI::App* sub) {
        sub->add_flag("--strict", strict, "exit with status 2 when any bound check fails");
        sub->add_option("--seed-override", seed_override, "comma-separated seeds replacing the config's list");
        sub->add_option("--output-dir", output_dir, "directory for traces, reports and summaries");
        sub->add_option("--threads", threads, "cells run in parallel")->check(CLI::PositiveNumber);
        sub->add_flag("--no-traces", no_traces, "write reports and summaries only");
    };

    std::string config_path, trace_path;
    auto* run = app.add_subcommand("run", "run every (algorithm, seed) cell of a config");
    run->add_option("config", config_path, "YAML or JSON config")->required();
    add_run_flags(run);

    auto* sweep = app.add_subcommand("sweep", "run the cartesian grid declared under `grid:`");
    sweep->add_option("config", config_path, "YAML or JSON config with a grid section")->required();
    add_run_flags(sweep);

    std::string verify_out;
    auto* verify = app.add_subcommand("verify", "recompute a report from a trace file");
    verify->add_option("trace", trace_path, "trace (.jsonl) written by run")->required();
    verify->add_option("config", config_path, "config the trace should belong to");
    verify->add_option("-o,--output", verify_out, "write the report here instead of stdout");
    verify->add_flag("--strict", strict, "exit with status 2 when any bound check fails");

    auto* list = app.add_subcommand("list-algorithms", "print the available algorithm kinds");

    CLI11_PARSE(app, argc, argv);

    try {
        dynreg::RunOptions opts;
        opts.strict = strict;
        opts.threads = threads;
        opts.write_traces = !no_traces;
        if (!seed_override.empty()) opts.seed_override = parse_seed_list(seed_override);
        if (!output_dir.empty()) opts.output_dir = output_dir;

        if (*list) {
            for (const auto& k : dynreg::algorithm_kinds())
                std::cout << k << "\t" << dynreg::algorithm_description(k) << "\n";
            return 0;
        }
        if (*run) {
            const auto cfg = dynreg::load_experiment(config_path);
            if (!cfg.grid.is_null()) std::cerr << "note: grid section ignored by run (use sweep)\n";
            const auto r = dynreg::run_experiment(cfg, opts);
            print_outcome(r);
            return r.exit_code(strict);
        }
        if (*sweep) {
            const auto r = dynreg::sweep_experiment(dynreg::load_config_file(config_path), opts);
            print_outcome(r);
            return r.exit_code(strict);
        }
        if (*verify) {
            const auto v = dynreg::verify_trace(trace_path, config_path.empty() ? std::nullopt
                                                                                : std::optional<std::string>(config_path));
            if (verify_out.empty()) {
                std::cout << v.text;
            } else {
                std::ofstream out(verify_out, std::ios::binary);
                if (!out) throw std::runtime_error("cannot write '" + verify_out + "'");
                out << v.text;
            }
            for (const auto& c : v.report.checks)
                if (c.status == dynreg::CheckStatus::fail)
                    std::cerr << "bound check failed: " << c.name
                              << (c.round ? " at round " + std::to_string(*c.round) : std::string()) << "\n";
            return strict && !v.report.all_pass() ? 2 : 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
