#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "qsched/distributions.hpp"
#include "qsched/error.hpp"

namespace qsched {

enum class ThresholdMode {
    TailPower,  // inverse tail at (1 - rho)^(1 - delta)
    Quantile,   // 100 rho percentile of the (predicted) law
    Fixed,      // K supplied directly
};

inline std::string_view threshold_mode_name(ThresholdMode m) {
    switch (m) {
        case ThresholdMode::TailPower: return "tail_power";
        case ThresholdMode::Quantile: return "quantile";
        case ThresholdMode::Fixed: return "fixed";
    }
    return "unknown";
}

inline ThresholdMode parse_threshold_mode(std::string_view s) {
    if (s == "tail_power" || s == "eq1") return ThresholdMode::TailPower;
    if (s == "quantile") return ThresholdMode::Quantile;
    if (s == "fixed") return ThresholdMode::Fixed;
    throw ConfigError("unknown threshold mode '" + std::string(s) + "'");
}

struct ThresholdSpec {
    double delta = 0.05;
    ThresholdMode mode = ThresholdMode::TailPower;
    double value = 0.0;  // only for Fixed

    void validate() const {
        if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("threshold delta must lie in (0, 1)");
        if (mode == ThresholdMode::Fixed && !(value > 0.0 && std::isfinite(value))) {
            throw ConfigError("fixed threshold value must be positive and finite");
        }
    }

    static ThresholdSpec tail_power(double delta = 0.05) { return {delta, ThresholdMode::TailPower, 0.0}; }
    static ThresholdSpec quantile() { return {0.05, ThresholdMode::Quantile, 0.0}; }
    static ThresholdSpec fixed(double K) { return {0.05, ThresholdMode::Fixed, K}; }
};

/// Class threshold K for a law at traffic intensity rho.
inline double threshold(const Distribution& dist, double rho, const ThresholdSpec& spec = {}) {
    spec.validate();
    if (spec.mode == ThresholdMode::Fixed) return spec.value;
    if (!(rho > 0.0 && rho < 1.0)) throw DomainError("threshold: rho must lie in (0, 1)");
    if (spec.mode == ThresholdMode::TailPower) return dist.inverse_tail_cdf(std::pow(1.0 - rho, 1.0 - spec.delta));
    return dist.quantile(rho);
}

struct ClassParameters {
    double K = 0.0;
    double lambda = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double mu1 = 0.0;
    double mu2 = 0.0;
    double rho1 = 0.0;
    double rho2 = 0.0;
    double gamma = 0.0;
    double F_K = 0.0;     // P(v <= K)
    double Fbar_K = 0.0;  // P(v > K)
    double second_moment_1 = 0.0;  // E[v^2 | v <= K]

    double rho() const { return rho1 + rho2; }
};

inline ClassParameters class_parameters(const Distribution& dist, double lambda, double K) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("class_parameters: lambda must be positive");
    ClassParameters cp;
    cp.K = K;
    cp.lambda = lambda;
    cp.F_K = dist.cdf(K);
    cp.Fbar_K = dist.tail_cdf(K);
    if (!(cp.F_K > 0.0)) {
        throw DomainError("class_parameters: degenerate split, no probability mass at or below K=" +
                          Distribution::format_double(K));
    }
    if (!(cp.Fbar_K > 0.0)) {
        throw DomainError("class_parameters: degenerate split, no probability mass above K=" +
                          Distribution::format_double(K));
    }
    const auto tm = dist.truncated_moments(K);
    cp.lambda1 = lambda * cp.F_K;
    cp.lambda2 = lambda * cp.Fbar_K;
    cp.mu1 = cp.F_K / tm.below_mean_mass;
    cp.mu2 = cp.Fbar_K / tm.above_mean_mass;
    cp.rho1 = lambda * tm.below_mean_mass;
    cp.rho2 = lambda * tm.above_mean_mass;
    cp.gamma = K * cp.mu2;
    cp.second_moment_1 = dist.partial_moment(2, K) / cp.F_K;
    return cp;
}

struct ThresholdDiagnostics {
    double rho = 0.0;
    double K = 0.0;
    ClassParameters classes;
    double tail_mass = 0.0;
    double slack = 0.0;   // 1 - rho1
    double health = 0.0;  // (1 - rho1) / mu2
};

inline ThresholdDiagnostics threshold_diagnostics(const Distribution& dist, double lambda,
                                                  const ThresholdSpec& spec = {}) {
    const double rho = lambda * dist.mean();
    if (!(rho > 0.0 && rho < 1.0)) throw DomainError("threshold_diagnostics: rho = lambda E[v] must lie in (0, 1)");
    ThresholdDiagnostics d;
    d.rho = rho;
    d.K = threshold(dist, rho, spec);
    d.classes = class_parameters(dist, lambda, d.K);
    d.tail_mass = d.classes.Fbar_K;
    d.slack = 1.0 - d.classes.rho1;
    d.health = d.slack / d.classes.mu2;
    return d;
}

inline std::string format_diagnostics(const ThresholdDiagnostics& d) {
    std::ostringstream os;
    os.precision(10);
    const auto& c = d.classes;
    os << "rho=" << d.rho << '\n'
       << "K=" << d.K << '\n'
       << "lambda1=" << c.lambda1 << '\n'
       << "lambda2=" << c.lambda2 << '\n'
       << "mu1=" << c.mu1 << '\n'
       << "mu2=" << c.mu2 << '\n'
       << "mean1=" << 1.0 / c.mu1 << '\n'
       << "mean2=" << 1.0 / c.mu2 << '\n'
       << "rho1=" << c.rho1 << '\n'
       << "rho2=" << c.rho2 << '\n'
       << "gamma=" << c.gamma << '\n'
       << "tail_mass=" << d.tail_mass << '\n'
       << "slack=" << d.slack << '\n'
       << "health=" << d.health << '\n';
    return os.str();
}

enum class PolicyKind { FCFS, SJF, SRPT, FB, TwoClassNP, TwoClassP, TwoClassSP };

inline std::string_view policy_name(PolicyKind k) {
    switch (k) {
        case PolicyKind::FCFS: return "fcfs";
        case PolicyKind::SJF: return "sjf";
        case PolicyKind::SRPT: return "srpt";
        case PolicyKind::FB: return "fb";
        case PolicyKind::TwoClassNP: return "two_class_np";
        case PolicyKind::TwoClassP: return "two_class_p";
        case PolicyKind::TwoClassSP: return "two_class_sp";
    }
    return "unknown";
}

inline PolicyKind parse_policy_kind(std::string_view s) {
    for (PolicyKind k : {PolicyKind::FCFS, PolicyKind::SJF, PolicyKind::SRPT, PolicyKind::FB, PolicyKind::TwoClassNP,
                         PolicyKind::TwoClassP, PolicyKind::TwoClassSP}) {
        if (policy_name(k) == s) return k;
    }
    if (s == "np" || s == "2np") return PolicyKind::TwoClassNP;
    if (s == "p" || s == "2p") return PolicyKind::TwoClassP;
    if (s == "sp" || s == "2sp") return PolicyKind::TwoClassSP;
    throw ConfigError("unknown policy kind '" + std::string(s) + "'");
}

inline bool is_two_class(PolicyKind k) {
    return k == PolicyKind::TwoClassNP || k == PolicyKind::TwoClassP || k == PolicyKind::TwoClassSP;
}

inline bool is_preemptive(PolicyKind k) {
    return k == PolicyKind::SRPT || k == PolicyKind::FB || k == PolicyKind::TwoClassP || k == PolicyKind::TwoClassSP;
}

struct PolicySpec {
    PolicyKind kind = PolicyKind::FCFS;
    std::optional<ThresholdSpec> threshold;
    int servers = 1;

    void validate() const {
        if (servers < 1) throw ConfigError("server count must be a positive integer");
        if (is_two_class(kind) && !threshold) {
            throw ConfigError(std::string(policy_name(kind)) + " requires a threshold");
        }
        if (!is_two_class(kind) && threshold) {
            throw ConfigError(std::string(policy_name(kind)) + " does not take a threshold");
        }
        if (threshold) threshold->validate();
        if (is_preemptive(kind) && servers != 1) {
            throw ConfigError(std::string(policy_name(kind)) + " is only supported with a single server");
        }
    }

    static PolicySpec make(PolicyKind kind, int servers = 1) {
        PolicySpec p{kind, std::nullopt, servers};
        if (is_two_class(kind)) p.threshold = ThresholdSpec::tail_power();
        return p;
    }
    static PolicySpec two_class(PolicyKind kind, ThresholdSpec t, int servers = 1) { return {kind, t, servers}; }
};

}  // namespace qsched
