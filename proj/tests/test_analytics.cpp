#include "catch_amalgamated.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>

#include "qsched/analytics.hpp"

using namespace qsched;
using Catch::Approx;

namespace {

using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
constexpr double inf = std::numeric_limits<double>::infinity();

AnalyticInput input(const Distribution& d, double rho, std::optional<double> K = std::nullopt) {
    AnalyticInput in;
    in.service = d;
    in.lambda = rho / d.mean();
    in.K = K;
    return in;
}

// Response time of a size-x job under SRPT, written as the nested integral.
double srpt_oracle(const Distribution& d, double lambda, double hi) {
    auto load = [&](double x) {
        return lambda * GK::integrate([&](double t) { return t * d.pdf(t); }, 0.0, x, 12, 1e-13);
    };
    auto T = [&](double x) {
        const double rx = load(x);
        const double m2 = GK::integrate([&](double t) { return t * t * d.pdf(t); }, 0.0, x, 12, 1e-13);
        const double wait = lambda * (m2 + x * x * d.tail_cdf(x)) / (2.0 * (1.0 - rx) * (1.0 - rx));
        const double res = GK::integrate([&](double t) { return 1.0 / (1.0 - load(t)); }, 0.0, x, 8, 1e-11);
        return wait + res;
    };
    return lambda * GK::integrate([&](double x) { return T(x) * d.pdf(x); }, 0.0, hi, 8, 1e-10);
}

}  // namespace

TEST_CASE("FCFS reduces to the M/M/1 and M/D/1 formulas") {
    for (double rho : {0.3, 0.7, 0.95}) {
        CHECK(mq_fcfs(input(Distribution::exponential(2.0), rho)) == Approx(rho / (1 - rho)));
        CHECK(mq_fcfs(input(Distribution::point_mass(1.5), rho)) == Approx(rho + rho * rho / (2 * (1 - rho))));
    }
    CHECK(mq_fcfs(input(Distribution::exponential(1.0), 0.0)) == 0.0);
}

TEST_CASE("two-class NP on exponential sizes matches per-class waiting times") {
    for (double rho : {0.5, 0.9}) {
        for (double K : {0.3, 1.0, 2.5}) {
            const double lam = rho;
            const double F = 1.0 - std::exp(-K);
            const double lam1 = lam * F, lam2 = lam - lam1;
            const double rho1 = lam * (1.0 - std::exp(-K) * (1.0 + K));
            const double W0 = lam * 2.0 / 2.0;  // lambda E[v^2] / 2
            const double ES1 = (1.0 - std::exp(-K) * (1.0 + K)) / F;
            const double ES2 = K + 1.0;
            const double L = lam1 * (W0 / (1 - rho1) + ES1) + lam2 * (W0 / ((1 - rho1) * (1 - rho)) + ES2);
            const auto in = input(Distribution::exponential(1.0), rho, K);
            CHECK(mq_two_class_np(in) == Approx(L).epsilon(1e-12));
            CHECK(lam * sojourn_two_class_np(in).all == Approx(L).epsilon(1e-12));
        }
    }
}

TEST_CASE("two-class P: class 1 is an isolated M/G/1") {
    const auto d = Distribution::weibull_unit_mean(1.5);
    const double rho = 0.8, K = 1.2;
    const auto in = input(d, rho, K);
    const double lam = rho;
    const double lam1 = lam * d.cdf(K);
    const double m1 = d.partial_moment(1, K) / d.cdf(K);
    const double m2 = d.partial_moment(2, K) / d.cdf(K);
    const double rho1 = lam1 * m1;
    const double W1 = lam1 * m2 / (2 * (1 - rho1)) + m1;
    const auto w = sojourn_two_class_p(in);
    CHECK(w.class1 == Approx(W1).epsilon(1e-9));
    // Little's law ties the per-class sojourns to the mean number.
    CHECK(mq_two_class_p(in) == Approx(lam * w.all).epsilon(1e-9));
    const auto f = sojourn_fcfs(in);
    CHECK(lam * f.all == Approx(mq_fcfs(in)).epsilon(1e-12));
}

TEST_CASE("two-class formulas collapse to FCFS at extreme thresholds") {
    for (const auto& d : {Distribution::exponential(1.0), Distribution::weibull_unit_mean(1.5)}) {
        const double fcfs = mq_fcfs(input(d, 0.8));
        for (double K : {1e-9, 25.0}) {
            INFO(d.describe() << " K=" << K);
            CHECK(mq_two_class_np(input(d, 0.8, K)) == Approx(fcfs).epsilon(1e-6));
            CHECK(mq_two_class_p(input(d, 0.8, K)) == Approx(fcfs).epsilon(1e-6));
            CHECK(mq_two_class_sp(input(d, 0.8, K)) == Approx(fcfs).epsilon(1e-6));
        }
    }
}

TEST_CASE("SJF matches direct integration of the waiting-time integral") {
    for (const auto& d : {Distribution::exponential(1.0), Distribution::uniform(0.0, 2.0),
                          Distribution::pareto_unit_mean(2.5)}) {
        for (double rho : {0.5, 0.9}) {
            const double lam = rho / d.mean();
            auto f = [&](double x) {
                const double r = lam * d.partial_moment(1, x);
                return d.pdf(x) / ((1 - r) * (1 - r));
            };
            const double lo = d.support_lo();
            const double hi = std::isfinite(d.support_hi()) ? d.support_hi() : inf;
            const double I = GK::integrate(f, lo, hi, 15, 1e-12);
            const double L = rho + lam * lam * d.moment(2) / 2 * I;
            INFO(d.describe() << " rho=" << rho);
            CHECK(mq_sjf(input(d, rho)) == Approx(L).epsilon(1e-7));
        }
    }
}

TEST_CASE("SRPT matches the nested-integral form") {
    struct Case {
        Distribution d;
        double hi;
    };
    for (const auto& c : {Case{Distribution::exponential(1.0), 45.0}, Case{Distribution::uniform(0.0, 2.0), 2.0}}) {
        for (double rho : {0.5, 0.9}) {
            const double lam = rho / c.d.mean();
            INFO(c.d.describe() << " rho=" << rho);
            CHECK(mq_srpt(input(c.d, rho)) == Approx(srpt_oracle(c.d, lam, c.hi)).epsilon(1e-6));
        }
    }
}

TEST_CASE("SRPT beats SJF which beats FCFS") {
    for (const auto& d : {Distribution::exponential(1.0), Distribution::pareto_unit_mean(2.5),
                          Distribution::weibull_unit_mean(1.5)}) {
        for (double rho : {0.5, 0.8, 0.95}) {
            const auto in = input(d, rho);
            CHECK(mq_srpt(in) < mq_sjf(in));
            CHECK(mq_sjf(in) < mq_fcfs(in));
        }
    }
}

TEST_CASE("heavy-traffic limit") {
    CHECK(heavy_traffic_limit(1.0, 1.0, 1.0, 1.0) == Approx(1.0));
    CHECK(heavy_traffic_limit(1.0, 1.0, 2.0, 0.5) == Approx(0.25));
    CHECK_THROWS_AS(heavy_traffic_limit(1.0, 1.0, 0.0, 0.5), DomainError);
    CHECK_THROWS_AS(heavy_traffic_limit(1.0, 1.0, 1.0, 0.0), DomainError);
}

TEST_CASE("analytic errors") {
    const auto d = Distribution::exponential(1.0);
    CHECK_THROWS_AS(mq_fcfs(input(d, 1.0)), DomainError);
    CHECK_THROWS_AS(mq_srpt(input(d, 1.2)), DomainError);
    CHECK_THROWS_AS(mq_two_class_p(input(d, 0.5)), ConfigError);
    CHECK_THROWS_AS(analytic_mean_number(PolicyKind::FB, input(d, 0.5)), ConfigError);
    CHECK_FALSE(has_closed_form(PolicyKind::FB));
    CHECK(analytic_mean_number(PolicyKind::FCFS, input(d, 0.5)) == Approx(1.0));
}
