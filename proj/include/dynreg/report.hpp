#pragma once

// Run reports. build_report is the only path from a trace to a report, so a live
// run and a later verify of its trace produce the same bytes.

#include <string>
#include <vector>

#include "dynreg/bounds.hpp"
#include "dynreg/trace.hpp"

namespace dynreg {

struct RunReport {
    TraceHeader header;
    RunMetrics metrics;
    std::vector<BoundCheck> checks;

    bool all_pass() const {
        for (const auto& c : checks)
            if (c.status == CheckStatus::fail) return false;
        return true;
    }
    const BoundCheck* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
};

inline RunReport build_report(const Trace& tr, const VariabilityOptions& var_opts = {}) {
    RunInputs in = make_inputs(tr);
    in.var_opts = var_opts;
    RunReport rep;
    rep.header = tr.header;
    rep.metrics = compute_metrics(in);
    rep.checks = evaluate_bounds(in, rep.metrics);
    return rep;
}

inline json to_json(const BoundCheck& c) {
    json j = {{"name", c.name}, {"status", to_string(c.status)}, {"lhs", c.lhs}, {"rhs", c.rhs}};
    if (c.round) j["round"] = *c.round;
    if (!c.note.empty()) j["note"] = c.note;
    return j;
}

inline json to_json(const RunReport& r) {
    const RunMetrics& m = r.metrics;
    json metrics = {{"T", m.horizon},
                    {"cumulative_loss", m.cum_loss_x},
                    {"comparator_loss", m.cum_loss_u},
                    {"regret", m.regret},
                    {"static_regret", m.static_regret ? json(*m.static_regret) : json(nullptr)},
                    {"v_signed", m.v_signed},
                    {"v_absolute", m.v_absolute},
                    {"v_exact", m.v_exact},
                    {"v_resolution", m.v_resolution},
                    {"path_length", m.path_length},
                    {"sum_grad_sq", m.sum_grad_sq},
                    {"sum_local_sq", m.sum_local_sq},
                    {"grad_linf", m.linf},
                    {"loss_1_x_1", m.loss1_x1},
                    {"loss_T_x_next", m.lossT_xnext},
                    {"lambda_final", m.lambda_final ? json(*m.lambda_final) : json(nullptr)},
                    {"lambda_max", m.lambda_max ? json(*m.lambda_max) : json(nullptr)},
                    {"epochs", m.epochs},
                    {"restarts", m.restarts},
                    {"min_delta", m.min_delta ? json(*m.min_delta) : json(nullptr)},
                    {"min_delta_round", m.min_delta_round ? json(*m.min_delta_round) : json(nullptr)}};
    json checks = json::array();
    for (const auto& c : r.checks) checks.push_back(to_json(c));
    return {{"schema_version", kSchemaVersion},
            {"generator", r.header.generator},
            {"env", r.header.env},
            {"algorithm", r.header.algorithm},
            {"geometry", r.header.geometry},
            {"T", r.header.horizon},
            {"seed", r.header.seed},
            {"metrics", metrics},
            {"checks", checks},
            {"all_pass", r.all_pass()}};
}

inline std::string report_text(const RunReport& r) { return to_json(r).dump(2) + "\n"; }

}  // namespace dynreg
