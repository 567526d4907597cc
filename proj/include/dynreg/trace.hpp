#pragma once

// Per-round trace records and their line-oriented JSON encoding. A trace file is
//   {"type":"header",...}
//   {"type":"round",...}   one per round
//   {"type":"final",...}
// and carries everything needed to recompute a run report without the live run.

#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dynreg/algorithms.hpp"
#include "dynreg/errors.hpp"
#include "dynreg/geometry.hpp"
#include "dynreg/losses.hpp"

namespace dynreg {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

struct TraceRound {
    std::size_t t = 0;
    Vec x;
    Vec u;
    Loss loss;
    StepInfo info;
    // Written for readers of the trace; reports always recompute these.
    std::optional<double> loss_x, loss_u, grad_norm, local_norm_sq, path_inc;
};

struct TraceHeader {
    int schema_version = kSchemaVersion;
    std::string generator;
    json env;        // environment parameters, including "domain"
    json algorithm;  // algorithm parameters
    json geometry;   // the learner's geometry
    std::size_t horizon = 0;
    std::uint64_t seed = 0;
};

struct Trace {
    TraceHeader header;
    std::vector<TraceRound> rounds;
    Vec x_next;
    std::optional<double> lambda_next;
};

// ---------------------------------------------------------------------------
// Domain / geometry / loss encodings

inline json to_json(const Domain& dom) {
    struct V {
        json operator()(const Interval& i) const { return {{"kind", "interval"}, {"lo", i.lo}, {"hi", i.hi}}; }
        json operator()(const Box& b) const { return {{"kind", "box"}, {"lo", b.lo}, {"hi", b.hi}}; }
        json operator()(const ClippedSimplex& s) const { return {{"kind", "clipped-simplex"}, {"d", s.dim}, {"alpha", s.alpha}}; }
        json operator()(const Ball& b) const { return {{"kind", "euclidean-ball"}, {"center", b.center}, {"radius", b.radius}}; }
    };
    return std::visit(V{}, dom);
}

namespace detail {

template <class T>
T field(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + ": field '" + key + "' has the wrong type");
    }
}

template <class T>
T field_or(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return field<T>(j, key, where);
}

}  // namespace detail

inline Domain domain_from_json(const json& j) {
    const std::string where = "domain";
    const auto kind = detail::field<std::string>(j, "kind", where);
    Domain dom;
    if (kind == "interval") {
        dom = Interval{detail::field<double>(j, "lo", where), detail::field<double>(j, "hi", where)};
    } else if (kind == "box") {
        dom = Box{detail::field<Vec>(j, "lo", where), detail::field<Vec>(j, "hi", where)};
    } else if (kind == "clipped-simplex" || kind == "simplex") {
        const char* d = j.contains("d") ? "d" : "dim";
        dom = ClippedSimplex{detail::field<std::size_t>(j, d, where), detail::field_or<double>(j, "alpha", 0.0, where)};
    } else if (kind == "euclidean-ball" || kind == "ball") {
        dom = Ball{detail::field<Vec>(j, "center", where), detail::field<double>(j, "radius", where)};
    } else {
        throw ConfigError("domain: unknown kind '" + kind + "'");
    }
    validate(dom);
    return dom;
}

inline json to_json(const Geometry& g) { return {{"mirror", to_string(g.mirror())}, {"domain", to_json(g.domain())}}; }

inline Geometry geometry_from_json(const json& j) {
    const auto mirror = detail::field<std::string>(j, "mirror", "geometry");
    const Domain dom = domain_from_json(j.at("domain"));
    if (mirror == "euclidean") return Geometry::euclidean(dom);
    if (mirror == "negative-entropy") {
        const auto* s = std::get_if<ClippedSimplex>(&dom);
        if (!s) throw ConfigError("geometry: negative-entropy needs a simplex domain");
        return Geometry::entropy(s->dim, s->alpha);
    }
    throw ConfigError("geometry: unknown mirror '" + mirror + "'");
}

inline json to_json(const Loss& l) {
    json j = {{"kind", to_string(l.kind)}, {"a", l.a}};
    if (l.kind != LossKind::linear) j["y"] = l.y;
    if (l.composite) j["l1"] = l.l1_weight;
    return j;
}

inline Loss loss_from_json(const json& j) {
    const std::string where = "loss";
    const LossKind kind = loss_kind_from_string(detail::field<std::string>(j, "kind", where));
    Vec a = detail::field<Vec>(j, "a", where);
    Loss l;
    switch (kind) {
        case LossKind::linear: l = Loss::linear(std::move(a)); break;
        case LossKind::quadratic: l = Loss::quadratic(std::move(a), detail::field<double>(j, "y", where)); break;
        case LossKind::absolute: l = Loss::absolute(std::move(a), detail::field<double>(j, "y", where)); break;
        case LossKind::hinge: l = Loss::hinge(std::move(a), detail::field<double>(j, "y", where)); break;
    }
    if (j.contains("l1")) l = Loss::with_l1(l, detail::field<double>(j, "l1", where));
    return l;
}

// ---------------------------------------------------------------------------
// Records

inline json to_json(const TraceHeader& h) {
    return {{"type", "header"},          {"schema_version", h.schema_version},
            {"generator", h.generator},  {"env", h.env},
            {"algorithm", h.algorithm},  {"geometry", h.geometry},
            {"T", h.horizon},            {"seed", h.seed}};
}

inline json to_json(const TraceRound& r) {
    json j = {{"type", "round"}, {"t", r.t}, {"x", r.x}, {"u", r.u}, {"loss", to_json(r.loss)}};
    const StepInfo& s = r.info;
    auto opt = [&j](const char* key, const std::optional<double>& v) {
        if (v) j[key] = *v;
    };
    opt("loss_x", r.loss_x);
    opt("loss_u", r.loss_u);
    opt("delta", s.delta);
    opt("lambda", s.lambda);
    opt("grad_norm", r.grad_norm);
    opt("local_norm_sq", r.local_norm_sq);
    opt("path_inc", r.path_inc);
    j["epoch"] = s.epoch;
    if (s.restart) j["restart"] = true;
    j["solver"] = s.solver;
    j["residual"] = s.residual;
    opt("p_a", s.p_a);
    opt("loss_a", s.loss_a);
    opt("loss_b", s.loss_b);
    opt("r", s.r);
    opt("eta", s.eta);
    opt("k", s.k);
    if (s.active) j["active"] = *s.active;
    return j;
}

inline json final_json(const Trace& tr) {
    json j = {{"type", "final"}, {"x_next", tr.x_next}};
    if (tr.lambda_next) j["lambda_next"] = *tr.lambda_next;
    return j;
}

inline void write_trace(std::ostream& os, const Trace& tr) {
    os << to_json(tr.header).dump() << '\n';
    for (const auto& r : tr.rounds) os << to_json(r).dump() << '\n';
    os << final_json(tr).dump() << '\n';
}

inline TraceRound round_from_json(const json& j) {
    const std::string where = "round";
    TraceRound r;
    r.t = detail::field<std::size_t>(j, "t", where);
    r.x = detail::field<Vec>(j, "x", where);
    r.u = detail::field<Vec>(j, "u", where);
    if (!j.contains("loss")) throw ReportError("round: missing field 'loss'");
    r.loss = loss_from_json(j.at("loss"));
    StepInfo& s = r.info;
    auto opt = [&](const char* key) -> std::optional<double> {
        if (!j.contains(key)) return std::nullopt;
        return detail::field<double>(j, key, where);
    };
    r.loss_x = opt("loss_x");
    r.loss_u = opt("loss_u");
    r.grad_norm = opt("grad_norm");
    r.local_norm_sq = opt("local_norm_sq");
    r.path_inc = opt("path_inc");
    s.delta = opt("delta");
    s.lambda = opt("lambda");
    s.epoch = detail::field_or<std::size_t>(j, "epoch", 0, where);
    s.restart = detail::field_or<bool>(j, "restart", false, where);
    s.solver = detail::field_or<std::string>(j, "solver", "", where);
    s.residual = detail::field_or<double>(j, "residual", 0.0, where);
    s.p_a = opt("p_a");
    s.loss_a = opt("loss_a");
    s.loss_b = opt("loss_b");
    s.r = opt("r");
    s.eta = opt("eta");
    s.k = opt("k");
    if (j.contains("active")) s.active = detail::field<std::size_t>(j, "active", where);
    return r;
}

/// Parse a trace; malformed lines are reported with their 1-based line number.
inline Trace read_trace(std::istream& is) {
    Trace tr;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false, have_final = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string at = "trace line " + std::to_string(lineno) + ": ";
        if (have_final) throw ReportError(at + "content after the final record");
        json j;
        try {
            j = json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ReportError(at + "malformed JSON (" + e.what() + ")");
        }
        try {
            const std::string type = detail::field<std::string>(j, "type", "record");
            if (type == "header") {
                if (have_header) throw ReportError("duplicate header");
                TraceHeader& h = tr.header;
                h.schema_version = detail::field<int>(j, "schema_version", "header");
                if (h.schema_version != kSchemaVersion)
                    throw ReportError("unsupported schema_version " + std::to_string(h.schema_version));
                h.generator = detail::field<std::string>(j, "generator", "header");
                h.env = j.at("env");
                h.algorithm = j.at("algorithm");
                h.geometry = j.at("geometry");
                h.horizon = detail::field<std::size_t>(j, "T", "header");
                h.seed = detail::field<std::uint64_t>(j, "seed", "header");
                have_header = true;
            } else if (type == "round") {
                if (!have_header) throw ReportError("round before header");
                TraceRound r = round_from_json(j);
                if (r.t != tr.rounds.size() + 1)
                    throw ReportError("expected round " + std::to_string(tr.rounds.size() + 1) + ", got " + std::to_string(r.t));
                tr.rounds.push_back(std::move(r));
            } else if (type == "final") {
                tr.x_next = detail::field<Vec>(j, "x_next", "final");
                if (j.contains("lambda_next")) tr.lambda_next = detail::field<double>(j, "lambda_next", "final");
                have_final = true;
            } else {
                throw ReportError("unknown record type '" + type + "'");
            }
        } catch (const ReportError& e) {
            throw ReportError(at + e.what());
        } catch (const std::exception& e) {
            throw ReportError(at + e.what());
        }
    }
    if (!have_header) throw ReportError("trace: missing header");
    if (!have_final) throw ReportError("trace: missing final record (truncated file?)");
    if (tr.rounds.size() != tr.header.horizon)
        throw ReportError("trace: header announces T=" + std::to_string(tr.header.horizon) + " but has " +
                          std::to_string(tr.rounds.size()) + " rounds");
    return tr;
}

inline Trace read_trace_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ReportError("cannot open trace '" + path + "'");
    return read_trace(in);
}

}  // namespace dynreg
