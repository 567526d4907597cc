#pragma once

// Experiment configs, learner construction and the (seed x algorithm) cell runner
// behind the command-line tool.
//
// Config schema (YAML, or the same structure as JSON):
//
//   schema_version: 1
//   name: demo
//   horizon: 1000
//   seeds: [1, 2, 3]            # or {from: 1, count: 200}
//   environment: {kind: drifting-quadratic, tau: 4}
//   geometry: {mirror: euclidean, domain: {kind: interval, lo: -1, hi: 1}}   # optional
//   algorithms:
//     - {kind: greedy}
//     - {kind: diomd, schedule: {kind: adaptive, tau: 4}}
//     - {kind: diomd, schedule: {kind: inv-sqrt, eta: 0.5}}
//     - {kind: doubling}
//     - {kind: ogd, schedule: {kind: constant, eta: 0.1}}
//     - {kind: sa-scaffold, loss_range: [0, 2]}
//     - {kind: ab-prod, a: {kind: sa-scaffold}, b: {kind: greedy}, loss_range: [0, 2]}
//     - {kind: adapt-ml-prod}
//   output_dir: out/demo
//   grid: {environment.tau: [1, 4, 16]}   # sweep only

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "dynreg/algorithms.hpp"
#include "dynreg/envs.hpp"
#include "dynreg/meta.hpp"
#include "dynreg/report.hpp"
#include "dynreg/trace.hpp"

namespace dynreg {

// ---------------------------------------------------------------------------
// Loading

struct ConfigDoc {
    json root;
    std::map<std::string, int> lines;  // dotted path -> 1-based source line
    std::string source = "<config>";

    std::string where(const std::string& path) const {
        auto it = lines.find(path);
        std::string loc = source;
        if (it != lines.end()) loc += ":" + std::to_string(it->second);
        return loc + ": " + (path.empty() ? "<root>" : path);
    }
    [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
        throw ConfigError(where(path) + ": " + msg);
    }
};

namespace detail {

inline std::string join_path(const std::string& base, const std::string& key) {
    return base.empty() ? key : base + "." + key;
}

inline json yaml_scalar(const YAML::Node& n) {
    const std::string s = n.Scalar();
    if (n.Tag() == "!") return s;  // quoted
    if (s == "~" || s == "null" || s == "Null" || s == "NULL") return nullptr;
    if (s == "true" || s == "True" || s == "TRUE") return true;
    if (s == "false" || s == "False" || s == "FALSE") return false;
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
    return s;
}

inline json yaml_to_json(const YAML::Node& n, const std::string& path, std::map<std::string, int>& lines) {
    lines[path] = n.Mark().line + 1;
    switch (n.Type()) {
        case YAML::NodeType::Null:
        case YAML::NodeType::Undefined: return nullptr;
        case YAML::NodeType::Scalar: return yaml_scalar(n);
        case YAML::NodeType::Sequence: {
            json arr = json::array();
            std::size_t i = 0;
            for (const auto& item : n) {
                arr.push_back(yaml_to_json(item, path + "[" + std::to_string(i) + "]", lines));
                ++i;
            }
            return arr;
        }
        case YAML::NodeType::Map: {
            json obj = json::object();
            for (const auto& kv : n) {
                const std::string key = kv.first.as<std::string>();
                obj[key] = yaml_to_json(kv.second, join_path(path, key), lines);
            }
            return obj;
        }
    }
    return nullptr;
}

}  // namespace detail

inline ConfigDoc load_config_text(const std::string& text, const std::string& source = "<config>") {
    ConfigDoc doc;
    doc.source = source;
    const auto first = text.find_first_not_of(" \t\r\n");
    const bool looks_json = first != std::string::npos && text[first] == '{';
    if (looks_json) {
        try {
            doc.root = json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(source + ": invalid JSON: " + e.what());
        }
    } else {
        try {
            doc.root = detail::yaml_to_json(YAML::Load(text), "", doc.lines);
        } catch (const YAML::Exception& e) {
            throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": invalid YAML: " + e.msg);
        }
    }
    if (!doc.root.is_object()) throw ConfigError(source + ": config must be a mapping");
    return doc;
}

inline ConfigDoc load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_config_text(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Typed access with path diagnostics

class Reader {
public:
    Reader(const ConfigDoc& doc, const json& node, std::string path) : doc_(doc), node_(node), path_(std::move(path)) {
        if (!node_.is_object()) doc_.fail(path_, "expected a mapping");
    }

    bool has(const char* key) const { return node_.contains(key) && !node_.at(key).is_null(); }
    std::string sub(const char* key) const { return detail::join_path(path_, key); }
    const json& raw(const char* key) const { return node_.at(key); }
    Reader child(const char* key) const { return Reader(doc_, node_.at(key), sub(key)); }

    void allow(std::initializer_list<const char*> keys) const {
        for (auto it = node_.begin(); it != node_.end(); ++it) {
            bool ok = false;
            for (const char* k : keys) ok = ok || it.key() == k;
            if (!ok) doc_.fail(detail::join_path(path_, it.key()), "unknown field");
        }
    }

    double number(const char* key) const {
        require(key);
        if (!node_.at(key).is_number()) doc_.fail(sub(key), "expected a number");
        return node_.at(key).get<double>();
    }
    double number(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }
    std::size_t count(const char* key) const {
        require(key);
        const json& v = node_.at(key);
        if (!v.is_number_integer() || v.get<long long>() < 0) doc_.fail(sub(key), "expected a non-negative integer");
        return v.get<std::size_t>();
    }
    std::size_t count(const char* key, std::size_t fallback) const { return has(key) ? count(key) : fallback; }
    std::string text(const char* key) const {
        require(key);
        if (!node_.at(key).is_string()) doc_.fail(sub(key), "expected a string");
        return node_.at(key).get<std::string>();
    }
    std::string text(const char* key, const std::string& fallback) const { return has(key) ? text(key) : fallback; }
    bool flag(const char* key, bool fallback) const {
        if (!has(key)) return fallback;
        if (!node_.at(key).is_boolean()) doc_.fail(sub(key), "expected true or false");
        return node_.at(key).get<bool>();
    }
    Vec numbers(const char* key) const {
        require(key);
        const json& v = node_.at(key);
        if (!v.is_array()) doc_.fail(sub(key), "expected a list of numbers");
        Vec out;
        for (const auto& e : v) {
            if (!e.is_number()) doc_.fail(sub(key), "expected a list of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }
    [[noreturn]] void fail(const char* key, const std::string& msg) const { doc_.fail(sub(key), msg); }
    [[noreturn]] void fail(const std::string& msg) const { doc_.fail(path_, msg); }
    const ConfigDoc& doc() const { return doc_; }
    const std::string& path() const { return path_; }

private:
    void require(const char* key) const {
        if (!has(key)) doc_.fail(sub(key), "missing required field");
    }
    const ConfigDoc& doc_;
    const json& node_;
    std::string path_;
};

// ---------------------------------------------------------------------------
// Environment section

inline json env_to_json(const EnvSpec& s) {
    json j = {{"kind", to_string(s.kind)}};
    switch (s.kind) {
        case EnvKind::lower_bound: j["sigma"] = s.sigma; break;
        case EnvKind::alternating_experts: break;
        case EnvKind::shifting_experts:
            j["dim"] = s.dim;
            j["shifts"] = s.shifts;
            j["stochastic"] = s.stochastic;
            break;
        case EnvKind::drifting_quadratic: j["tau"] = s.tau; break;
        case EnvKind::switching_quadratic: j["shifts"] = s.shifts; break;
        case EnvKind::fixed_loss:
            j["dim"] = s.dim;
            j["loss"] = to_string(s.loss);
            break;
        case EnvKind::sparse_regression:
            j["dim"] = s.dim;
            j["shifts"] = s.shifts;
            j["l1_weight"] = s.l1_weight;
            j["noise"] = s.noise;
            break;
    }
    return j;
}

inline EnvSpec parse_env(const Reader& r) {
    EnvSpec s;
    try {
        s.kind = env_kind_from_string(r.text("kind"));
    } catch (const ConfigError& e) {
        r.fail("kind", e.what());
    }
    switch (s.kind) {
        case EnvKind::lower_bound:
            r.allow({"kind", "sigma"});
            s.sigma = r.number("sigma");
            break;
        case EnvKind::alternating_experts: r.allow({"kind"}); break;
        case EnvKind::shifting_experts:
            r.allow({"kind", "dim", "shifts", "stochastic"});
            s.dim = r.count("dim", 2);
            s.shifts = r.count("shifts", 0);
            s.stochastic = r.flag("stochastic", true);
            break;
        case EnvKind::drifting_quadratic:
            r.allow({"kind", "tau"});
            s.tau = r.number("tau");
            if (s.tau < 0.0) r.fail("tau", "must be >= 0");
            break;
        case EnvKind::switching_quadratic:
            r.allow({"kind", "shifts"});
            s.shifts = r.count("shifts", 0);
            break;
        case EnvKind::fixed_loss:
            r.allow({"kind", "dim", "loss"});
            s.dim = r.count("dim", 1);
            try {
                s.loss = loss_kind_from_string(r.text("loss", "quadratic"));
            } catch (const std::exception& e) {
                r.fail("loss", e.what());
            }
            break;
        case EnvKind::sparse_regression:
            r.allow({"kind", "dim", "shifts", "l1_weight", "noise"});
            s.dim = r.count("dim", 10);
            s.shifts = r.count("shifts", 0);
            s.l1_weight = r.number("l1_weight", 0.0);
            s.noise = r.number("noise", 0.0);
            break;
    }
    return s;
}

/// Known range of the per-round losses over the environment domain, when it has one.
inline std::optional<std::pair<double, double>> natural_loss_range(const EnvSpec& s) {
    switch (s.kind) {
        case EnvKind::lower_bound: return std::pair{0.0, 0.5 * (1.0 + s.sigma) * (1.0 + s.sigma)};
        case EnvKind::drifting_quadratic:
        case EnvKind::switching_quadratic: return std::pair{0.0, 2.0};
        case EnvKind::alternating_experts:
        case EnvKind::shifting_experts: return std::pair{0.0, 1.0};
        default: return std::nullopt;
    }
}

// ---------------------------------------------------------------------------
// Algorithms

struct BuildContext {
    const Environment& env;
    std::size_t horizon;
    std::optional<Domain> domain_override;  // euclidean environments only

    bool experts() const { return env.experts(); }
    Domain euclidean_domain() const { return domain_override ? *domain_override : env.domain(); }
};

inline const std::vector<std::string>& algorithm_kinds() {
    static const std::vector<std::string> kinds = {"greedy", "diomd", "doubling", "ogd",
                                                   "ab-prod", "sa-scaffold", "adapt-ml-prod"};
    return kinds;
}

inline std::string algorithm_description(const std::string& kind) {
    if (kind == "greedy") return "play the minimiser of the previous loss";
    if (kind == "diomd") return "implicit mirror descent; fixed (constant, inv-sqrt, inv-t, list) or adaptive schedule";
    if (kind == "doubling") return "adaptive implicit mirror descent restarted on doubling path-length thresholds";
    if (kind == "ogd") return "projected online gradient descent (euclidean)";
    if (kind == "ab-prod") return "anytime (A,B)-Prod combiner of two learners";
    if (kind == "sa-scaffold") return "strongly adaptive scaffold over geometric covering intervals";
    if (kind == "adapt-ml-prod") return "second-order multiplicative weights over the experts";
    return "";
}

namespace detail {

inline double default_alpha(const std::string& kind, const BuildContext& ctx) {
    if (!ctx.experts() || kind == "greedy") return 0.0;
    return static_cast<double>(ctx.env.dim()) / static_cast<double>(ctx.horizon);
}

inline Geometry geometry_for(const json& resolved, const BuildContext& ctx) {
    if (ctx.experts()) {
        const double alpha = resolved.contains("alpha") ? resolved.at("alpha").get<double>() : 0.0;
        return Geometry::entropy(ctx.env.dim(), alpha);
    }
    return Geometry::euclidean(ctx.euclidean_domain());
}

inline json resolve_schedule(const Reader& r, const Geometry& geom, std::size_t horizon, bool adaptive_default) {
    if (!r.has("schedule")) {
        if (!adaptive_default) r.fail("schedule", "missing required field");
        if (!geom.bounded()) r.fail("schedule", "adaptive schedule needs a bounded Bregman diameter");
        return {{"kind", "adaptive"}, {"beta_sq", geom.diameter_sq()}, {"tau", 0.0}};
    }
    const Reader s = r.child("schedule");
    const std::string kind = s.text("kind");
    if (kind == "adaptive") {
        s.allow({"kind", "tau", "beta_sq"});
        const double tau = s.number("tau", 0.0);
        if (tau < 0.0) s.fail("tau", "must be >= 0");
        if (!geom.bounded()) s.fail("adaptive schedule needs a bounded Bregman diameter");
        const double beta_sq = s.number("beta_sq", geom.diameter_sq() + geom.gamma() * tau);
        if (!(beta_sq > 0.0)) s.fail("beta_sq", "must be > 0");
        return {{"kind", "adaptive"}, {"beta_sq", beta_sq}, {"tau", tau}};
    }
    if (kind == "constant" || kind == "inv-sqrt" || kind == "inv-t") {
        s.allow({"kind", "eta"});
        const double eta = s.number("eta");
        if (!(eta > 0.0)) s.fail("eta", "must be > 0");
        return {{"kind", kind}, {"eta", eta}, {"horizon", horizon}};
    }
    if (kind == "list") {
        s.allow({"kind", "values"});
        const Vec v = s.numbers("values");
        try {
            Schedule::fixed(v);
        } catch (const ConfigError& e) {
            s.fail("values", e.what());
        }
        return {{"kind", "list"}, {"values", v}};
    }
    s.fail("kind", "unknown schedule '" + kind + "' (adaptive, constant, inv-sqrt, inv-t, list)");
}

inline Schedule schedule_from(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "adaptive") return Schedule::adaptive(j.at("beta_sq").get<double>(), j.at("tau").get<double>());
    if (kind == "list") return Schedule::fixed(j.at("values").get<Vec>());
    const double eta = j.at("eta").get<double>();
    const std::size_t T = j.at("horizon").get<std::size_t>();
    if (kind == "constant") return Schedule::constant(eta, T);
    if (kind == "inv-sqrt") return Schedule::inv_sqrt(eta, T);
    return Schedule::inv_t(eta, T);
}

inline json resolve_range(const Reader& r, const BuildContext& ctx) {
    if (r.has("loss_range")) {
        const Vec v = r.numbers("loss_range");
        if (v.size() != 2 || !(v[1] > v[0])) r.fail("loss_range", "expected [lo, hi] with lo < hi");
        return v;
    }
    const auto nat = natural_loss_range(ctx.env.spec());
    if (!nat) r.fail("loss_range", "required for this environment");
    return Vec{nat->first, nat->second};
}

}  // namespace detail

/// Validate an algorithm section and fill in every default, so the result fully
/// determines the learner. The resolved form is what the trace header records.
inline json resolve_algorithm(const Reader& r, const BuildContext& ctx) {
    const std::string kind = r.text("kind");
    json out = {{"kind", kind}};
    auto alpha_of = [&]() {
        const double a = r.number("alpha", detail::default_alpha(kind, ctx));
        if (!(a >= 0.0 && a < 1.0)) r.fail("alpha", "must lie in [0,1)");
        if (!ctx.experts() && r.has("alpha")) r.fail("alpha", "only meaningful on expert environments");
        return a;
    };
    if (kind == "greedy") {
        r.allow({"kind", "name", "alpha"});
        if (ctx.experts()) out["alpha"] = alpha_of();
    } else if (kind == "diomd" || kind == "doubling") {
        r.allow({"kind", "name", "alpha", "schedule"});
        if (ctx.experts()) {
            out["alpha"] = alpha_of();
            if (out["alpha"].get<double>() <= 0.0) r.fail("alpha", "must be > 0 for a finite KL diameter");
        }
        const Geometry geom = detail::geometry_for(out, ctx);
        if (kind == "diomd") {
            out["schedule"] = detail::resolve_schedule(r, geom, ctx.horizon, true);
        } else {
            if (r.has("schedule")) r.fail("schedule", "doubling sets its own schedule");
            if (!geom.bounded()) r.fail("doubling needs a bounded Bregman diameter");
        }
    } else if (kind == "ogd") {
        r.allow({"kind", "name", "schedule"});
        if (ctx.experts()) r.fail("kind", "ogd needs a euclidean domain");
        const Geometry geom = detail::geometry_for(out, ctx);
        out["schedule"] = detail::resolve_schedule(r, geom, ctx.horizon, false);
        if (out["schedule"]["kind"] == "adaptive") r.fail("schedule", "ogd needs a fixed step-size schedule");
    } else if (kind == "sa-scaffold") {
        r.allow({"kind", "name", "alpha", "loss_range"});
        if (ctx.experts()) {
            out["alpha"] = alpha_of();
            if (out["alpha"].get<double>() <= 0.0) r.fail("alpha", "must be > 0 for a finite KL diameter");
        }
        out["loss_range"] = detail::resolve_range(r, ctx);
        // Base learners: adaptive implicit mirror descent with beta^2 = D^2 (= ln T on the clipped simplex).
        out["base_beta_sq"] = detail::geometry_for(out, ctx).diameter_sq();
    } else if (kind == "ab-prod") {
        r.allow({"kind", "name", "a", "b", "loss_range"});
        out["loss_range"] = detail::resolve_range(r, ctx);
        json a = r.has("a") ? resolve_algorithm(r.child("a"), ctx) : json{{"kind", "sa-scaffold"}};
        json b = r.has("b") ? resolve_algorithm(r.child("b"), ctx) : json{{"kind", "greedy"}};
        if (!r.has("a")) {
            a["loss_range"] = out["loss_range"];
            if (ctx.experts()) a["alpha"] = detail::default_alpha("sa-scaffold", ctx);
            a["base_beta_sq"] = detail::geometry_for(a, ctx).diameter_sq();
        }
        if (!r.has("b") && ctx.experts()) b["alpha"] = 0.0;
        out["a"] = a;
        out["b"] = b;
    } else if (kind == "adapt-ml-prod") {
        r.allow({"kind", "name", "loss_range"});
        if (!ctx.experts()) r.fail("kind", "adapt-ml-prod runs on expert environments only");
        out["loss_range"] = detail::resolve_range(r, ctx);
    } else {
        r.fail("kind", "unknown algorithm '" + kind + "'");
    }
    return out;
}

inline std::unique_ptr<OnlineLearner> make_learner(const json& a, const BuildContext& ctx) {
    const std::string kind = a.at("kind").get<std::string>();
    const Geometry geom = detail::geometry_for(a, ctx);
    auto range = [&]() {
        const Vec v = a.at("loss_range").get<Vec>();
        return LossNormalizer(v[0], v[1]);
    };
    if (kind == "greedy") return std::make_unique<GreedyLearner>(geom);
    if (kind == "diomd") return std::make_unique<DiomdLearner>(geom, detail::schedule_from(a.at("schedule")));
    if (kind == "doubling") return std::make_unique<DoublingLearner>(geom);
    if (kind == "ogd") return std::make_unique<OgdLearner>(geom, detail::schedule_from(a.at("schedule")));
    if (kind == "adapt-ml-prod") return std::make_unique<MlProdLearner>(ctx.env.dim(), range());
    if (kind == "sa-scaffold") {
        const Schedule base = Schedule::adaptive(a.at("base_beta_sq").get<double>());
        return std::make_unique<SaScaffold>(
            [geom, base](const CoveringInterval&) { return std::make_unique<DiomdLearner>(geom, base); }, range());
    }
    if (kind == "ab-prod")
        return std::make_unique<AbProdLearner>(make_learner(a.at("a"), ctx), make_learner(a.at("b"), ctx), range());
    throw ConfigError("unknown algorithm '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Experiment config

struct AlgorithmEntry {
    std::string name;
    std::string path;  // config path, for diagnostics
    json raw;
};

struct ExperimentConfig {
    ConfigDoc doc;
    std::string name = "experiment";
    std::size_t horizon = 1;
    std::vector<std::uint64_t> seeds;
    EnvSpec env;
    std::optional<Domain> domain_override;
    std::vector<AlgorithmEntry> algorithms;
    std::string output_dir = "out";
    json grid;  // sweep axes, if any
};

namespace detail {

inline std::vector<std::uint64_t> parse_seeds(const Reader& r) {
    std::vector<std::uint64_t> out;
    if (!r.has("seeds")) return {0};
    const json& v = r.raw("seeds");
    if (v.is_array()) {
        for (const auto& e : v) {
            if (!e.is_number_integer() || e.get<long long>() < 0) r.fail("seeds", "seeds must be non-negative integers");
            out.push_back(e.get<std::uint64_t>());
        }
    } else if (v.is_object()) {
        const Reader s = r.child("seeds");
        s.allow({"from", "count"});
        const std::size_t from = s.count("from", 0), n = s.count("count");
        for (std::size_t i = 0; i < n; ++i) out.push_back(from + i);
    } else if (v.is_number_integer()) {
        out.push_back(v.get<std::uint64_t>());
    } else {
        r.fail("seeds", "expected a list, an integer or {from, count}");
    }
    if (out.empty()) r.fail("seeds", "at least one seed is required");
    std::set<std::uint64_t> uniq(out.begin(), out.end());
    if (uniq.size() != out.size()) r.fail("seeds", "duplicate seed");
    return out;
}

}  // namespace detail

/// Parse and validate; every algorithm is resolved against the environment before any run.
inline ExperimentConfig parse_experiment(ConfigDoc doc) {
    ExperimentConfig cfg;
    cfg.doc = std::move(doc);
    const Reader r(cfg.doc, cfg.doc.root, "");
    r.allow({"schema_version", "name", "horizon", "seeds", "environment", "geometry", "algorithms", "output_dir", "grid"});
    if (r.has("schema_version") && r.count("schema_version") != static_cast<std::size_t>(kSchemaVersion))
        r.fail("schema_version", "unsupported schema version");
    cfg.name = r.text("name", cfg.name);
    cfg.horizon = r.count("horizon");
    if (cfg.horizon < 1) r.fail("horizon", "must be >= 1");
    cfg.seeds = detail::parse_seeds(r);
    if (!r.has("environment")) r.fail("environment", "missing required field");
    cfg.env = parse_env(r.child("environment"));
    cfg.env.horizon = cfg.horizon;
    cfg.output_dir = r.text("output_dir", cfg.output_dir);
    if (r.has("grid")) cfg.grid = r.raw("grid");

    cfg.env.seed = cfg.seeds.front();
    std::optional<Environment> env;
    try {
        env.emplace(cfg.env);
    } catch (const ConfigError& e) {
        r.fail("environment", e.what());
    }
    if (r.has("geometry")) {
        const Reader g = r.child("geometry");
        g.allow({"mirror", "domain"});
        if (env->experts()) g.fail("geometry override applies to euclidean environments only");
        if (g.text("mirror", "euclidean") != "euclidean") g.fail("mirror", "only euclidean overrides are supported");
        try {
            cfg.domain_override = domain_from_json(g.raw("domain"));
        } catch (const std::exception& e) {
            g.fail("domain", e.what());
        }
        if (dimension(*cfg.domain_override) != env->dim()) g.fail("domain", "dimension differs from the environment");
    }

    if (!r.has("algorithms") || !r.raw("algorithms").is_array() || r.raw("algorithms").empty())
        r.fail("algorithms", "expected a non-empty list");
    const BuildContext ctx{*env, cfg.horizon, cfg.domain_override};
    std::set<std::string> names;
    const json& algs = r.raw("algorithms");
    for (std::size_t i = 0; i < algs.size(); ++i) {
        const std::string path = "algorithms[" + std::to_string(i) + "]";
        const Reader a(cfg.doc, algs[i], path);
        AlgorithmEntry e;
        e.path = path;
        e.raw = algs[i];
        e.name = a.text("name", a.text("kind"));
        if (!names.insert(e.name).second) a.fail("name", "duplicate algorithm name '" + e.name + "' (set name:)");
        try {
            make_learner(resolve_algorithm(a, ctx), ctx);
        } catch (const ConfigError& err) {
            if (std::string(err.what()).find(cfg.doc.source) == 0) throw;
            a.fail(err.what());
        }
        cfg.algorithms.push_back(std::move(e));
    }
    return cfg;
}

inline ExperimentConfig load_experiment(const std::string& path) { return parse_experiment(load_config_file(path)); }

// ---------------------------------------------------------------------------
// Cells

struct CellOutput {
    std::string algorithm;
    std::uint64_t seed = 0;
    Trace trace;
    RunReport report;
};

/// Run one (algorithm, seed) cell entirely in memory.
inline Trace run_cell_trace(const ExperimentConfig& cfg, const AlgorithmEntry& alg, std::uint64_t seed) {
    EnvSpec spec = cfg.env;
    spec.seed = seed;
    const Environment env(spec);
    const BuildContext ctx{env, cfg.horizon, cfg.domain_override};
    const json resolved = resolve_algorithm(Reader(cfg.doc, alg.raw, alg.path), ctx);
    std::unique_ptr<OnlineLearner> learner = make_learner(resolved, ctx);
    const Geometry geom = detail::geometry_for(resolved, ctx);

    Trace tr;
    tr.header.generator = kGeneratorName;
    tr.header.env = env_to_json(spec);
    tr.header.env["domain"] = to_json(env.domain());
    tr.header.algorithm = resolved;
    tr.header.geometry = to_json(geom);
    tr.header.horizon = cfg.horizon;
    tr.header.seed = seed;
    tr.rounds.reserve(cfg.horizon);
    const bool simplex = geom.mirror() == Mirror::negative_entropy;
    for (std::size_t t = 1; t <= cfg.horizon; ++t) {
        TraceRound r;
        r.t = t;
        r.x = learner->play();
        r.loss = env.loss(t);
        r.u = env.comparator(t);
        const double inc = t > 1 ? geom.primal_dist(r.u, env.comparator(t - 1)) : 0.0;
        r.info = learner->observe(r.loss, RoundContext{t, inc});
        r.loss_x = eval(r.loss, r.x);
        r.loss_u = eval(r.loss, r.u);
        const Vec g = subgradient(r.loss, r.x);
        r.grad_norm = geom.dual(g);
        if (simplex) {
            double s = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) s += r.x[i] * g[i] * g[i];
            r.local_norm_sq = s;
        }
        r.path_inc = inc;
        tr.rounds.push_back(std::move(r));
    }
    tr.x_next = learner->play();
    tr.lambda_next = learner->lambda_next();
    return tr;
}

inline CellOutput run_cell(const ExperimentConfig& cfg, const AlgorithmEntry& alg, std::uint64_t seed) {
    CellOutput out;
    out.algorithm = alg.name;
    out.seed = seed;
    out.trace = run_cell_trace(cfg, alg, seed);
    out.report = build_report(out.trace);
    return out;
}

// ---------------------------------------------------------------------------
// Summaries

struct CellSummary {
    std::string algorithm;
    std::uint64_t seed = 0;
    RunMetrics metrics;
    std::size_t failed = 0, inapplicable = 0;
    std::string failed_names;
    std::string error;  // hard error text, empty on success
};

inline CellSummary summarize(const CellOutput& c) {
    CellSummary s;
    s.algorithm = c.algorithm;
    s.seed = c.seed;
    s.metrics = c.report.metrics;
    for (const auto& chk : c.report.checks) {
        if (chk.status == CheckStatus::fail) {
            ++s.failed;
            s.failed_names += (s.failed_names.empty() ? "" : ";") + chk.name;
        } else if (chk.status == CheckStatus::inapplicable) {
            ++s.inapplicable;
        }
    }
    s.metrics.loss_x.clear();
    s.metrics.loss_u.clear();
    s.metrics.grad_norm.clear();
    s.metrics.path_inc.clear();
    return s;
}

namespace detail {

inline std::string num(double v) {
    json j = v;
    return j.dump();
}
inline std::string num(const std::optional<double>& v) { return v ? num(*v) : ""; }

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

}  // namespace detail

inline std::string summary_csv_header(const std::vector<std::string>& extra = {}) {
    std::string h = "schema_version";
    for (const auto& e : extra) h += "," + detail::csv_field(e);
    h += ",algorithm,seed,T,regret,static_regret,cumulative_loss,v_signed,v_absolute,path_length,sum_grad_sq,"
         "lambda_final,epochs,checks_failed,checks_inapplicable,failed_checks,error\n";
    return h;
}

inline std::string summary_csv_row(const CellSummary& s, const std::vector<std::string>& extra = {}) {
    const RunMetrics& m = s.metrics;
    std::ostringstream os;
    os << kSchemaVersion;
    for (const auto& e : extra) os << ',' << detail::csv_field(e);
    os << ',' << detail::csv_field(s.algorithm) << ',' << s.seed << ',' << m.horizon << ',';
    if (!s.error.empty()) {
        os << ",,,,,,,,,,,," << detail::csv_field(s.error) << '\n';
        return os.str();
    }
    os << detail::num(m.regret) << ',' << detail::num(m.static_regret) << ',' << detail::num(m.cum_loss_x) << ','
       << detail::num(m.v_signed) << ',' << detail::num(m.v_absolute) << ',' << detail::num(m.path_length) << ','
       << detail::num(m.sum_grad_sq) << ',' << detail::num(m.lambda_final) << ',' << m.epochs << ',' << s.failed
       << ',' << s.inapplicable << ',' << detail::csv_field(s.failed_names) << ",\n";
    return os.str();
}

/// Per-algorithm aggregate: mean/std/min/max regret across seeds.
inline std::string aggregate_csv(const std::vector<CellSummary>& cells, const std::vector<std::string>& extra_names = {},
                                 const std::vector<std::vector<std::string>>& extra_values = {}) {
    struct Acc {
        std::size_t n = 0, failed_runs = 0, errors = 0;
        double sum = 0, sum_sq = 0, mn = INFINITY, mx = -INFINITY, v = 0, c = 0;
    };
    std::vector<std::string> order;
    std::map<std::string, Acc> acc;
    std::map<std::string, std::vector<std::string>> extras;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& s = cells[i];
        std::string key = s.algorithm;
        std::vector<std::string> ev = i < extra_values.size() ? extra_values[i] : std::vector<std::string>{};
        for (const auto& e : ev) key = e + "\x1f" + key;
        if (!acc.count(key)) {
            order.push_back(key);
            extras[key] = ev;
        }
        Acc& a = acc[key];
        if (!s.error.empty()) {
            ++a.errors;
            continue;
        }
        ++a.n;
        a.sum += s.metrics.regret;
        a.sum_sq += s.metrics.regret * s.metrics.regret;
        a.mn = std::min(a.mn, s.metrics.regret);
        a.mx = std::max(a.mx, s.metrics.regret);
        a.v += s.metrics.v_signed;
        a.c += s.metrics.path_length;
        if (s.failed > 0) ++a.failed_runs;
    }
    std::string out = "schema_version";
    for (const auto& e : extra_names) out += "," + detail::csv_field(e);
    out += ",algorithm,runs,mean_regret,std_regret,min_regret,max_regret,mean_v_signed,mean_path_length,runs_with_failed_checks,errors\n";
    for (const auto& key : order) {
        const Acc& a = acc[key];
        const std::string alg = key.substr(key.rfind('\x1f') == std::string::npos ? 0 : key.rfind('\x1f') + 1);
        std::ostringstream os;
        os << kSchemaVersion;
        for (const auto& e : extras[key]) os << ',' << detail::csv_field(e);
        const double n = static_cast<double>(a.n);
        const double mean = a.n ? a.sum / n : 0.0;
        const double var = a.n > 1 ? std::max(0.0, (a.sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
        os << ',' << detail::csv_field(alg) << ',' << a.n << ',' << detail::num(mean) << ',' << detail::num(std::sqrt(var))
           << ',' << (a.n ? detail::num(a.mn) : "") << ',' << (a.n ? detail::num(a.mx) : "") << ','
           << detail::num(a.n ? a.v / n : 0.0) << ',' << detail::num(a.n ? a.c / n : 0.0) << ',' << a.failed_runs << ','
           << a.errors << '\n';
        out += os.str();
    }
    return out;
}

// ---------------------------------------------------------------------------
// run / verify / sweep

struct RunOptions {
    bool strict = false;
    std::optional<std::vector<std::uint64_t>> seed_override;
    std::optional<std::string> output_dir;
    std::size_t threads = 1;
    bool write_traces = true;
};

struct RunOutcome {
    std::vector<CellSummary> cells;
    std::size_t hard_errors = 0;
    std::size_t bound_failures = 0;  // cells with at least one failed check

    int exit_code(bool strict) const {
        if (hard_errors > 0) return 1;
        if (strict && bound_failures > 0) return 2;
        return 0;
    }
};

namespace detail {

inline std::string cell_stem(const std::string& alg, std::uint64_t seed) {
    std::string safe;
    for (char c : alg) safe += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
    return safe + "-seed" + std::to_string(seed);
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
    out << content;
}

/// Run the cells in parallel (cells only; each cell is single-threaded). Results are
/// stored by cell index so the output order never depends on scheduling.
inline std::vector<CellSummary> execute_cells(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                              const std::filesystem::path& dir, const RunOptions& opts) {
    struct Job {
        const AlgorithmEntry* alg;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const auto& a : cfg.algorithms)
        for (auto s : seeds) jobs.push_back({&a, s});
    std::vector<CellSummary> results(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const Job& j = jobs[i];
            CellSummary s;
            s.algorithm = j.alg->name;
            s.seed = j.seed;
            try {
                const CellOutput c = run_cell(cfg, *j.alg, j.seed);
                s = summarize(c);
                const std::string stem = cell_stem(j.alg->name, j.seed);
                if (opts.write_traces) {
                    std::ostringstream tr;
                    write_trace(tr, c.trace);
                    write_file(dir / (stem + ".trace.jsonl"), tr.str());
                }
                write_file(dir / (stem + ".report.json"), report_text(c.report));
            } catch (const std::exception& e) {
                s.error = e.what();
                s.metrics.horizon = cfg.horizon;
            }
            results[i] = std::move(s);
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(opts.threads, jobs.size()));
    std::vector<std::thread> pool;
    for (std::size_t k = 1; k < n; ++k) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return results;
}

}  // namespace detail

inline RunOutcome run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
    const std::filesystem::path dir = opts.output_dir.value_or(cfg.output_dir);
    std::filesystem::create_directories(dir);
    const auto seeds = opts.seed_override.value_or(cfg.seeds);
    RunOutcome out;
    out.cells = detail::execute_cells(cfg, seeds, dir, opts);
    std::string csv = summary_csv_header();
    for (const auto& c : out.cells) {
        csv += summary_csv_row(c);
        if (!c.error.empty()) ++out.hard_errors;
        else if (c.failed > 0) ++out.bound_failures;
    }
    detail::write_file(dir / "summary.csv", csv);
    detail::write_file(dir / "aggregate.csv", aggregate_csv(out.cells));
    return out;
}

struct VerifyOutcome {
    RunReport report;
    std::string text;
};

/// Recompute a report from a trace file alone. When a config is given, the trace must
/// come from one of its algorithms (same resolved parameters and environment).
inline VerifyOutcome verify_trace(const std::string& trace_path, const std::optional<std::string>& config_path = {}) {
    const Trace tr = read_trace_file(trace_path);
    if (config_path) {
        const ExperimentConfig cfg = load_experiment(*config_path);
        EnvSpec spec = cfg.env;
        spec.seed = tr.header.seed;
        json env_json = env_to_json(spec);
        json header_env = tr.header.env;
        header_env.erase("domain");
        if (env_json != header_env || cfg.horizon != tr.header.horizon)
            throw ConfigError("trace environment or horizon does not match config '" + *config_path + "'");
        const Environment env(spec);
        const BuildContext ctx{env, cfg.horizon, cfg.domain_override};
        bool found = false;
        for (const auto& a : cfg.algorithms)
            found = found || resolve_algorithm(Reader(cfg.doc, a.raw, a.path), ctx) == tr.header.algorithm;
        if (!found) throw ConfigError("trace algorithm does not match any algorithm in '" + *config_path + "'");
    }
    VerifyOutcome out;
    out.report = build_report(tr);
    out.text = report_text(out.report);
    return out;
}

// Sweeps: `grid` maps dotted config paths to lists; every combination is one experiment.

namespace detail {

inline void set_dotted(json& root, const std::string& dotted, const json& value) {
    json* cur = &root;
    std::size_t start = 0;
    while (true) {
        const auto dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("grid: malformed key '" + dotted + "'");
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            return;
        }
        if (!cur->contains(key)) (*cur)[key] = json::object();
        cur = &(*cur)[key];
        if (!cur->is_object()) throw ConfigError("grid: '" + dotted + "' does not name a mapping field");
        start = dot + 1;
    }
}

inline std::string point_label(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace detail

inline RunOutcome sweep_experiment(const ConfigDoc& base, const RunOptions& opts = {}) {
    if (!base.root.contains("grid") || !base.root.at("grid").is_object() || base.root.at("grid").empty())
        base.fail("grid", "sweep needs a non-empty grid mapping of field -> list");
    const json& grid = base.root.at("grid");
    std::vector<std::string> axes;
    std::vector<json> values;
    for (auto it = grid.begin(); it != grid.end(); ++it) {
        if (!it.value().is_array() || it.value().empty()) base.fail("grid." + it.key(), "expected a non-empty list");
        axes.push_back(it.key());
        values.push_back(it.value());
    }
    // Expand and validate every point before running anything.
    std::vector<ExperimentConfig> points;
    std::vector<std::vector<std::string>> labels;
    std::vector<std::size_t> idx(axes.size(), 0);
    while (true) {
        ConfigDoc doc = base;
        doc.root.erase("grid");
        std::vector<std::string> lab;
        for (std::size_t k = 0; k < axes.size(); ++k) {
            detail::set_dotted(doc.root, axes[k], values[k][idx[k]]);
            lab.push_back(detail::point_label(values[k][idx[k]]));
        }
        points.push_back(parse_experiment(std::move(doc)));
        labels.push_back(lab);
        std::size_t k = 0;
        while (k < axes.size() && ++idx[k] == values[k].size()) idx[k++] = 0;
        if (k == axes.size()) break;
    }
    const std::filesystem::path root = opts.output_dir.value_or(points.front().output_dir);
    std::filesystem::create_directories(root);
    RunOutcome out;
    std::string csv = summary_csv_header(axes);
    std::vector<std::vector<std::string>> cell_labels;
    for (std::size_t p = 0; p < points.size(); ++p) {
        std::string sub = "point";
        for (std::size_t k = 0; k < axes.size(); ++k) sub += "_" + axes[k] + "=" + labels[p][k];
        for (char& c : sub)
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '=' || c == '.')) c = '_';
        RunOptions o = opts;
        o.output_dir = (root / sub).string();
        const RunOutcome r = run_experiment(points[p], o);
        for (const auto& c : r.cells) {
            csv += summary_csv_row(c, labels[p]);
            out.cells.push_back(c);
            cell_labels.push_back(labels[p]);
        }
        out.hard_errors += r.hard_errors;
        out.bound_failures += r.bound_failures;
    }
    detail::write_file(root / "summary.csv", csv);
    detail::write_file(root / "aggregate.csv", aggregate_csv(out.cells, axes, cell_labels));
    return out;
}

}  // namespace dynreg
