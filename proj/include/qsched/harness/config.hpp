#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "qsched/distributions.hpp"
#include "qsched/error.hpp"
#include "qsched/policy.hpp"
#include "qsched/prediction.hpp"

namespace qsched::harness {

using nlohmann::json;

inline constexpr int kConfigVersion = 1;

namespace detail {

inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (auto a : allowed) ok = ok || it.key() == a;
        if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + it.key() + "'");
    }
}

inline double num(const json& j, std::string_view key, std::string_view where) {
    const auto it = j.find(std::string(key));
    if (it == j.end()) throw ConfigError(std::string(where) + ": missing '" + std::string(key) + "'");
    if (!it->is_number()) throw ConfigError(std::string(where) + ": '" + std::string(key) + "' must be a number");
    return it->get<double>();
}

inline double num_or(const json& j, std::string_view key, double fallback, std::string_view where) {
    return j.contains(std::string(key)) ? num(j, key, where) : fallback;
}

inline std::string str(const json& j, std::string_view key, std::string_view where) {
    const auto it = j.find(std::string(key));
    if (it == j.end() || !it->is_string()) {
        throw ConfigError(std::string(where) + ": '" + std::string(key) + "' must be a string");
    }
    return it->get<std::string>();
}

inline std::vector<double> num_list(const json& j, std::string_view where) {
    if (j.is_number()) return {j.get<double>()};
    if (!j.is_array()) throw ConfigError(std::string(where) + ": expected a number or list of numbers");
    std::vector<double> out;
    for (const auto& x : j) {
        if (!x.is_number()) throw ConfigError(std::string(where) + ": list entries must be numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

}  // namespace detail

/// `{family: "pareto", m: 0.6, alpha: 2.5}` or `{family: "pareto", alpha: 2.5, unit_mean: true}`.
inline Distribution parse_distribution(const json& j) {
    using namespace detail;
    const std::string where = "distribution";
    if (j.is_string()) throw ConfigError("distribution: use an object literal, not a bare string");
    const Family fam = parse_family(str(j, "family", where));
    const bool unit = j.contains("unit_mean") && j.at("unit_mean").get<bool>();
    switch (fam) {
        case Family::Exponential:
            check_keys(j, {"family", "rate", "mean"}, where);
            if (j.contains("mean")) return Distribution::exponential(1.0 / num(j, "mean", where));
            return Distribution::exponential(num_or(j, "rate", 1.0, where));
        case Family::Pareto:
            check_keys(j, {"family", "m", "alpha", "unit_mean"}, where);
            if (unit) {
                if (j.contains("m")) throw ConfigError("distribution: 'm' conflicts with unit_mean");
                return Distribution::pareto_unit_mean(num(j, "alpha", where));
            }
            return Distribution::pareto(num(j, "m", where), num(j, "alpha", where));
        case Family::Weibull:
            check_keys(j, {"family", "nu", "alpha", "unit_mean"}, where);
            if (unit) {
                if (j.contains("nu")) throw ConfigError("distribution: 'nu' conflicts with unit_mean");
                return Distribution::weibull_unit_mean(num(j, "alpha", where));
            }
            return Distribution::weibull(num(j, "nu", where), num(j, "alpha", where));
        case Family::Normal:
            check_keys(j, {"family", "mean", "sd"}, where);
            return Distribution::normal(num(j, "mean", where), num(j, "sd", where));
        case Family::Uniform:
            check_keys(j, {"family", "lo", "hi"}, where);
            return Distribution::uniform(num(j, "lo", where), num(j, "hi", where));
        case Family::Poisson:
            check_keys(j, {"family", "rate"}, where);
            return Distribution::poisson(num(j, "rate", where));
        case Family::Gamma:
            check_keys(j, {"family", "shape", "scale"}, where);
            return Distribution::gamma(num(j, "shape", where), num(j, "scale", where));
        case Family::PointMass:
            check_keys(j, {"family", "value"}, where);
            return Distribution::point_mass(num(j, "value", where));
    }
    throw ConfigError("distribution: unsupported family");
}

/// Shorthand `family:p1,p2` used on the command line. A single Pareto or
/// Weibull parameter is the shape under the unit-mean convention.
inline Distribution parse_distribution_arg(std::string_view text) {
    const auto first = text.find_first_not_of(" \t");
    if (first != std::string_view::npos && text[first] == '{') {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("distribution: invalid JSON: ") + e.what());
        }
        return parse_distribution(j);
    }
    const auto colon = text.find(':');
    const std::string name(text.substr(0, colon));
    std::vector<double> p;
    if (colon != std::string_view::npos) {
        std::stringstream ss{std::string(text.substr(colon + 1))};
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                std::size_t used = 0;
                p.push_back(std::stod(item, &used));
                if (used != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                throw ConfigError("distribution: bad parameter '" + item + "' in '" + std::string(text) + "'");
            }
        }
    }
    auto need = [&](std::size_t n) {
        if (p.size() != n) {
            throw ConfigError("distribution: '" + name + "' expects " + std::to_string(n) + " parameter(s)");
        }
    };
    const std::string fam = name == "exp" ? "exponential" : name == "point" ? "point_mass" : name;
    switch (parse_family(fam)) {
        case Family::Exponential:
            if (p.empty()) return Distribution::exponential(1.0);
            need(1);
            return Distribution::exponential(p[0]);
        case Family::Pareto:
            if (p.size() == 1) return Distribution::pareto_unit_mean(p[0]);
            need(2);
            return Distribution::pareto(p[0], p[1]);
        case Family::Weibull:
            if (p.size() == 1) return Distribution::weibull_unit_mean(p[0]);
            need(2);
            return Distribution::weibull(p[0], p[1]);
        case Family::Normal: need(2); return Distribution::normal(p[0], p[1]);
        case Family::Uniform: need(2); return Distribution::uniform(p[0], p[1]);
        case Family::Poisson: need(1); return Distribution::poisson(p[0]);
        case Family::Gamma: need(2); return Distribution::gamma(p[0], p[1]);
        case Family::PointMass: need(1); return Distribution::point_mass(p[0]);
    }
    throw ConfigError("distribution: unsupported family");
}

inline json distribution_to_json(const Distribution& d) {
    json j;
    j["family"] = std::string(family_name(d.family()));
    switch (d.family()) {
        case Family::Exponential: j["rate"] = d.param1(); break;
        case Family::Pareto: j["m"] = d.param1(); j["alpha"] = d.param2(); break;
        case Family::Weibull: j["nu"] = d.param1(); j["alpha"] = d.param2(); break;
        case Family::Normal: j["mean"] = d.param1(); j["sd"] = d.param2(); break;
        case Family::Uniform: j["lo"] = d.param1(); j["hi"] = d.param2(); break;
        case Family::Poisson: j["rate"] = d.param1(); break;
        case Family::Gamma: j["shape"] = d.param1(); j["scale"] = d.param2(); break;
        case Family::PointMass: j["value"] = d.param1(); break;
    }
    return j;
}

inline PredictionModel parse_prediction(const json& j) {
    using namespace detail;
    const std::string where = "prediction";
    if (j.is_string()) {
        if (j.get<std::string>() == "exact") return Exact{};
        throw ConfigError("prediction: only 'exact' may be given as a bare string");
    }
    const std::string kind = str(j, "kind", where);
    PredictionModel m;
    auto features = [&](const json& arr) {
        std::vector<Distribution> out;
        if (!arr.is_array()) throw ConfigError("prediction: 'features' must be a list of distributions");
        for (const auto& f : arr) out.push_back(parse_distribution(f));
        return out;
    };
    if (kind == "exact") {
        check_keys(j, {"kind"}, where);
        m = Exact{};
    } else if (kind == "bounded_error") {
        check_keys(j, {"kind", "M", "error", "worst_case_K", "floor"}, where);
        BoundedError b;
        b.M = num(j, "M", where);
        b.error = j.contains("error") ? parse_distribution(j.at("error")) : Distribution::uniform(-b.M, b.M);
        if (j.contains("worst_case_K")) b.worst_case_K = num(j, "worst_case_K", where);
        b.floor = num_or(j, "floor", 0.001, where);
        m = b;
    } else if (kind == "class_flip") {
        check_keys(j, {"kind", "p12", "p21"}, where);
        m = ClassFlip{num(j, "p12", where), num(j, "p21", where), std::nullopt};
    } else if (kind == "additive_iid") {
        check_keys(j, {"kind", "error", "offset", "floor"}, where);
        AdditiveIID a;
        a.error = parse_distribution(j.at("error"));
        a.offset = num_or(j, "offset", 0.0, where);
        a.floor = num_or(j, "floor", 0.001, where);
        m = a;
    } else if (kind == "linear" || kind == "log_linear") {
        check_keys(j, {"kind", "beta", "intercept", "sigma_e", "features", "floor"}, where);
        std::vector<double> beta = j.contains("beta") ? num_list(j.at("beta"), where) : std::vector<double>{0.1, 0.4, 0.4};
        const double intercept = num_or(j, "intercept", 0.1, where);
        const double sigma = num(j, "sigma_e", where);
        auto feats = j.contains("features") ? features(j.at("features")) : example_features();
        if (kind == "linear") {
            m = LinearFeatures{beta, intercept, feats, sigma, num_or(j, "floor", 0.001, where)};
        } else {
            if (j.contains("floor")) throw ConfigError("prediction: log_linear has no floor");
            m = LogLinearFeatures{beta, intercept, feats, sigma};
        }
    } else if (kind == "gamma_items") {
        check_keys(j, {"kind", "items", "theta"}, where);
        GammaItems g;
        if (j.contains("items")) g.items = parse_distribution(j.at("items"));
        g.theta = num_or(j, "theta", 1.0, where);
        m = g;
    } else {
        throw ConfigError("prediction: unknown kind '" + kind + "'");
    }
    validate(m);
    return m;
}

/// A policy plus the law its threshold is computed on.
struct PolicyConfig {
    PolicySpec spec;
    ThresholdLaw law = ThresholdLaw::Predicted;
};

inline PolicyConfig parse_policy(const json& j, int default_servers = 1) {
    using namespace detail;
    const std::string where = "policy";
    PolicyConfig pc;
    if (j.is_string()) {
        pc.spec = PolicySpec::make(parse_policy_kind(j.get<std::string>()), default_servers);
        pc.spec.validate();
        return pc;
    }
    check_keys(j, {"kind", "threshold", "servers"}, where);
    pc.spec.kind = parse_policy_kind(str(j, "kind", where));
    pc.spec.servers = j.contains("servers") ? j.at("servers").get<int>() : default_servers;
    if (j.contains("threshold")) {
        const auto& t = j.at("threshold");
        check_keys(t, {"mode", "delta", "value", "law"}, "policy.threshold");
        ThresholdSpec ts;
        ts.mode = t.contains("mode") ? parse_threshold_mode(str(t, "mode", where)) : ThresholdMode::TailPower;
        ts.delta = num_or(t, "delta", 0.05, where);
        ts.value = num_or(t, "value", 0.0, where);
        if (t.contains("law")) {
            const auto law = str(t, "law", where);
            if (law == "predicted") pc.law = ThresholdLaw::Predicted;
            else if (law == "service") pc.law = ThresholdLaw::Service;
            else throw ConfigError("policy.threshold: law must be 'predicted' or 'service'");
        }
        pc.spec.threshold = ts;
    } else if (is_two_class(pc.spec.kind)) {
        pc.spec.threshold = ThresholdSpec::tail_power();
    }
    pc.spec.validate();
    return pc;
}

enum class RunMode { Simulate, Analytic, Both };

inline RunMode parse_run_mode(std::string_view s) {
    if (s == "simulate") return RunMode::Simulate;
    if (s == "analytic") return RunMode::Analytic;
    if (s == "both") return RunMode::Both;
    throw ConfigError("mode must be simulate, analytic or both");
}

struct CellConfig {
    std::string id;
    Distribution arrival = Distribution::exponential(1.0);  // rescaled to the cell's rate
    std::optional<Distribution> service;
    PredictionModel prediction = Exact{};
    std::vector<PolicyConfig> policies;
    std::vector<double> rho;
    std::vector<double> lambda;
    double horizon = 1e7;
    int replications = 1;
    int servers = 1;
    double warmup_fraction = 0.0;
    int batches = 32;
    std::optional<double> K;
};

struct ExperimentConfig {
    int version = kConfigVersion;
    RunMode mode = RunMode::Simulate;
    std::string output;
    std::uint64_t master_seed = 1;
    int threads = 1;
    std::vector<CellConfig> cells;
};

inline void check_version(const json& j) {
    if (!j.contains("version")) throw ConfigError("config: missing 'version'");
    if (!j.at("version").is_number_integer() || j.at("version").get<int>() != kConfigVersion) {
        throw ConfigError("config: unsupported version (expected " + std::to_string(kConfigVersion) + ")");
    }
}

inline CellConfig parse_cell(const json& j, std::size_t position) {
    using namespace detail;
    const std::string where = "cell";
    check_keys(j, {"id", "arrival", "service", "prediction", "policies", "rho", "lambda", "horizon", "replications",
                   "servers", "warmup_fraction", "batches", "K"},
               where);
    CellConfig c;
    c.id = j.contains("id") ? str(j, "id", where) : "cell" + std::to_string(position);
    if (j.contains("arrival")) c.arrival = parse_distribution(j.at("arrival"));
    if (j.contains("service")) c.service = parse_distribution(j.at("service"));
    if (j.contains("prediction")) c.prediction = parse_prediction(j.at("prediction"));
    c.servers = j.contains("servers") ? j.at("servers").get<int>() : 1;
    if (!j.contains("policies") || !j.at("policies").is_array() || j.at("policies").empty()) {
        throw ConfigError("cell '" + c.id + "': 'policies' must be a non-empty list");
    }
    for (const auto& p : j.at("policies")) c.policies.push_back(parse_policy(p, c.servers));
    if (j.contains("rho")) c.rho = num_list(j.at("rho"), where);
    if (j.contains("lambda")) c.lambda = num_list(j.at("lambda"), where);
    if (c.rho.empty() == c.lambda.empty()) {
        throw ConfigError("cell '" + c.id + "': give exactly one of 'rho' or 'lambda'");
    }
    for (double r : c.rho) {
        if (!(r > 0.0 && r < 1.0)) throw ConfigError("cell '" + c.id + "': every rho must lie in (0, 1)");
    }
    for (double l : c.lambda) {
        if (!(l > 0.0)) throw ConfigError("cell '" + c.id + "': every lambda must be positive");
    }
    c.horizon = num_or(j, "horizon", 1e7, where);
    c.replications = j.contains("replications") ? j.at("replications").get<int>() : 1;
    if (c.replications < 1) throw ConfigError("cell '" + c.id + "': replications must be at least 1");
    c.warmup_fraction = num_or(j, "warmup_fraction", 0.0, where);
    c.batches = j.contains("batches") ? j.at("batches").get<int>() : 32;
    if (j.contains("K")) c.K = num(j, "K", where);
    if (!c.service && !generates_own_sizes(c.prediction)) {
        throw ConfigError("cell '" + c.id + "': a service law is required for this prediction model");
    }
    return c;
}

inline ExperimentConfig parse_experiment(const json& j) {
    using namespace detail;
    check_keys(j, {"version", "mode", "output", "master_seed", "threads", "cells"}, "config");
    check_version(j);
    ExperimentConfig cfg;
    if (j.contains("mode")) cfg.mode = parse_run_mode(str(j, "mode", "config"));
    if (j.contains("output")) cfg.output = str(j, "output", "config");
    if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
    if (cfg.threads < 1) throw ConfigError("config: threads must be at least 1");
    if (j.contains("cells")) {
        if (!j.at("cells").is_array()) throw ConfigError("config: 'cells' must be a list");
        std::size_t i = 0;
        for (const auto& c : j.at("cells")) cfg.cells.push_back(parse_cell(c, i++));
    }
    return cfg;
}

struct ScalingStudyConfig {
    double beta = 1.0;
    std::vector<double> n = {400, 1600, 6400};
    double delta = 0.05;
    Distribution service = Distribution::exponential(1.0);
    PolicyKind policy = PolicyKind::TwoClassP;
    std::vector<double> horizon = {4e7};
    std::uint64_t master_seed = 1;
    std::string output;
    double runtime_budget_seconds = 0.0;  // 0: unlimited

    double horizon_for(std::size_t i) const { return horizon.size() == 1 ? horizon[0] : horizon.at(i); }

    void validate() const {
        if (!(beta > 0.0)) throw ConfigError("scaling: beta must be positive");
        if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("scaling: delta must lie in (0, 1)");
        if (n.empty()) throw ConfigError("scaling: n grid is empty");
        for (std::size_t i = 0; i < n.size(); ++i) {
            if (i > 0 && !(n[i] > n[i - 1])) throw ConfigError("scaling: n grid must be increasing");
            if (!(1.0 - beta / std::sqrt(n[i]) > 0.0)) {
                throw ConfigError("scaling: rho_n must be positive for n = " + Distribution::format_double(n[i]));
            }
        }
        if (horizon.size() != 1 && horizon.size() != n.size()) {
            throw ConfigError("scaling: give one horizon or one per n");
        }
        for (double h : horizon) {
            if (!(h > 0.0)) throw ConfigError("scaling: horizons must be positive");
        }
        if (!is_two_class(policy)) throw ConfigError("scaling: policy must be a two-class rule");
    }
};

inline ScalingStudyConfig parse_scaling(const json& j) {
    using namespace detail;
    check_keys(j, {"version", "beta", "n", "delta", "service", "policy", "horizon", "master_seed", "output",
                   "runtime_budget_seconds"},
               "scaling");
    check_version(j);
    ScalingStudyConfig c;
    c.beta = num_or(j, "beta", 1.0, "scaling");
    if (j.contains("n")) c.n = num_list(j.at("n"), "scaling");
    c.delta = num_or(j, "delta", 0.05, "scaling");
    if (j.contains("service")) c.service = parse_distribution(j.at("service"));
    if (j.contains("policy")) c.policy = parse_policy_kind(str(j, "policy", "scaling"));
    if (j.contains("horizon")) c.horizon = num_list(j.at("horizon"), "scaling");
    if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("output")) c.output = str(j, "output", "scaling");
    c.runtime_budget_seconds = num_or(j, "runtime_budget_seconds", 0.0, "scaling");
    c.validate();
    return c;
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
}

}  // namespace qsched::harness
