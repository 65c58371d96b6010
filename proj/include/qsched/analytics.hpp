#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "qsched/distributions.hpp"
#include "qsched/error.hpp"
#include "qsched/policy.hpp"
#include "qsched/quadrature.hpp"

namespace qsched {

struct AnalyticInput {
    double lambda = 0.0;
    Distribution service = Distribution::exponential(1.0);
    std::optional<double> K;
    double rel_tol = 1e-10;
    double tail = 1e-13;  // support truncated at the 1 - tail quantile

    double rho() const { return lambda * service.mean(); }
};

namespace detail {

inline void require_stable(const AnalyticInput& in) {
    if (!(in.lambda >= 0.0)) throw DomainError("analytic: lambda must be non-negative");
    const double rho = in.rho();
    if (!(rho < 1.0)) throw DomainError("analytic: unstable, rho = " + Distribution::format_double(rho));
}

inline ClassParameters two_class_setup(const AnalyticInput& in) {
    require_stable(in);
    if (!in.K) throw ConfigError("two-class formulas need a threshold K");
    return class_parameters(in.service, in.lambda, *in.K);
}

inline std::vector<double> grid(const AnalyticInput& in) { return in.service.quadrature_breakpoints(in.tail); }

inline QuadratureOptions quad_opts(const AnalyticInput& in) {
    QuadratureOptions o;
    o.rel_tol = in.rel_tol;
    o.abs_tol = 1e-15;
    return o;
}

}  // namespace detail

/// M/G/1 FCFS mean number in system (Pollaczek-Khinchine).
inline double mq_fcfs(const AnalyticInput& in) {
    detail::require_stable(in);
    if (in.lambda == 0.0) return 0.0;
    const double rho = in.rho();
    return rho + in.lambda * in.lambda * in.service.moment(2) / (2.0 * (1.0 - rho));
}

inline double mq_two_class_np(const AnalyticInput& in) {
    const auto c = detail::two_class_setup(in);
    const double rho = in.rho();
    const double Ev2 = in.service.moment(2);
    return rho + in.lambda * c.lambda1 * Ev2 / (2.0 * (1.0 - c.rho1)) +
           in.lambda * c.lambda2 * Ev2 / (2.0 * (1.0 - c.rho1) * (1.0 - rho));
}

inline double mq_two_class_p(const AnalyticInput& in) {
    const auto c = detail::two_class_setup(in);
    const double rho = in.rho();
    const double Ev2 = in.service.moment(2);
    return c.rho1 + c.rho2 / (1.0 - c.rho1) + c.lambda1 * c.lambda1 * c.second_moment_1 / (2.0 * (1.0 - c.rho1)) +
           in.lambda * c.lambda2 * Ev2 / (2.0 * (1.0 - c.rho1) * (1.0 - rho));
}

inline double mq_two_class_sp(const AnalyticInput& in) {
    const auto c = detail::two_class_setup(in);
    const double K = *in.K;
    return mq_two_class_p(in) - c.lambda2 * c.rho1 * K / (1.0 - c.rho1) +
           c.lambda1 * c.lambda2 * K * K / (2.0 * (1.0 - c.rho1));
}

/// Non-preemptive shortest job first.
inline double mq_sjf(const AnalyticInput& in) {
    detail::require_stable(in);
    if (in.lambda == 0.0) return 0.0;
    const auto& d = in.service;
    const double lam = in.lambda;
    const auto pts = detail::grid(in);
    auto f = [&](double x) {
        const double s = 1.0 - lam * d.partial_moment(1, x);
        return d.pdf(x) / (s * s);
    };
    double I = integrate_piecewise(f, pts, detail::quad_opts(in));
    const double T = pts.back();
    const double sT = 1.0 - lam * d.partial_moment(1, T);
    I += d.tail_cdf(T) / (sT * sT);
    return in.rho() + lam * lam * d.moment(2) / 2.0 * I;
}

/// Preemptive shortest remaining processing time.
///
/// The residence term's double integral is evaluated after swapping the
/// order of integration: int_0^inf Fbar(y) / (1 - lambda M1(y)) dy.
inline double mq_srpt(const AnalyticInput& in) {
    detail::require_stable(in);
    if (in.lambda == 0.0) return 0.0;
    const auto& d = in.service;
    const double lam = in.lambda;
    const auto pts = detail::grid(in);
    const auto opts = detail::quad_opts(in);
    auto s = [&](double x) { return 1.0 - lam * d.partial_moment(1, x); };

    double residence = std::max(d.support_lo(), 0.0);  // Fbar = 1 and M1 = 0 below the support
    residence += integrate_piecewise([&](double y) { return d.tail_cdf(y) / s(y); }, pts, opts);
    const double T = pts.back();
    // Beyond T: E[(v - T)^+] with the denominator frozen at T.
    residence += (d.upper_partial_moment(1, T) - T * d.tail_cdf(T)) / s(T);

    auto g = [&](double x) {
        const double sx = s(x);
        return d.pdf(x) * (d.partial_moment(2, x) + d.tail_cdf(x) * x * x) / (sx * sx);
    };
    double waiting = integrate_piecewise(g, pts, opts);
    waiting += d.moment(2) * d.tail_cdf(T) / (s(T) * s(T));
    return lam * residence + lam * lam / 2.0 * waiting;
}

struct ClassSojourn {
    double class1 = 0.0;
    double class2 = 0.0;
    double all = 0.0;
};

/// Per-class mean sojourn under FCFS, classes split at K.
inline ClassSojourn sojourn_fcfs(const AnalyticInput& in) {
    const auto c = detail::two_class_setup(in);
    const double wq = in.lambda * in.service.moment(2) / (2.0 * (1.0 - in.rho()));
    return {wq + 1.0 / c.mu1, wq + 1.0 / c.mu2, wq + in.service.mean()};
}

inline ClassSojourn sojourn_two_class_p(const AnalyticInput& in) {
    const auto c = detail::two_class_setup(in);
    const double rho = in.rho();
    ClassSojourn w;
    w.class1 = c.lambda1 * c.second_moment_1 / (2.0 * (1.0 - c.rho1)) + 1.0 / c.mu1;
    w.class2 = (1.0 / c.mu2) / (1.0 - c.rho1) +
               in.lambda * in.service.moment(2) / (2.0 * (1.0 - c.rho1) * (1.0 - rho));
    w.all = (c.lambda1 * w.class1 + c.lambda2 * w.class2) / in.lambda;
    return w;
}

inline ClassSojourn sojourn_two_class_np(const AnalyticInput& in) {
    const auto c = detail::two_class_setup(in);
    const double rho = in.rho();
    const double r = in.lambda * in.service.moment(2) / 2.0;
    ClassSojourn w;
    w.class1 = r / (1.0 - c.rho1) + 1.0 / c.mu1;
    w.class2 = r / ((1.0 - c.rho1) * (1.0 - rho)) + 1.0 / c.mu2;
    w.all = (c.lambda1 * w.class1 + c.lambda2 * w.class2) / in.lambda;
    return w;
}

/// gamma (sigma_a^2 + sigma_s^2) / (2 beta).
inline double heavy_traffic_limit(double sigma_s2, double sigma_a2, double beta, double gamma) {
    if (!(beta > 0.0)) throw DomainError("heavy_traffic_limit: beta must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("heavy_traffic_limit: gamma must lie in (0, 1]");
    return gamma * (sigma_a2 + sigma_s2) / (2.0 * beta);
}

/// Mean number in system for a policy with a closed form.
inline double analytic_mean_number(PolicyKind kind, const AnalyticInput& in) {
    switch (kind) {
        case PolicyKind::FCFS: return mq_fcfs(in);
        case PolicyKind::TwoClassNP: return mq_two_class_np(in);
        case PolicyKind::TwoClassP: return mq_two_class_p(in);
        case PolicyKind::TwoClassSP: return mq_two_class_sp(in);
        case PolicyKind::SJF: return mq_sjf(in);
        case PolicyKind::SRPT: return mq_srpt(in);
        case PolicyKind::FB: break;
    }
    throw ConfigError("no closed form for policy " + std::string(policy_name(kind)));
}

inline bool has_closed_form(PolicyKind kind) { return kind != PolicyKind::FB; }

}  // namespace qsched
