#include "catch_amalgamated.hpp"

#include <boost/math/distributions/exponential.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/pareto.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <boost/math/distributions/uniform.hpp>
#include <boost/math/distributions/weibull.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "qsched/distributions.hpp"

using namespace qsched;
using Catch::Approx;

namespace {

// Independent integrator for partial moments of continuous laws.
template <class Pdf>
double gk_integral(Pdf pdf, double a, double b) {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(pdf, a, b, 15, 1e-13);
}

struct Case {
    Distribution d;
    std::function<double(double)> cdf;
    std::function<double(double)> pdf;
    std::function<double(double)> quantile;
    double mean;
    double second;
};

std::vector<Case> continuous_cases() {
    namespace bm = boost::math;
    std::vector<Case> v;
    {
        bm::exponential_distribution<> e(2.0);
        v.push_back({Distribution::exponential(2.0), [=](double x) { return bm::cdf(e, x); },
                     [=](double x) { return bm::pdf(e, x); }, [=](double p) { return bm::quantile(e, p); }, 0.5, 0.5});
    }
    {
        bm::pareto_distribution<> p(0.6, 2.5);
        v.push_back({Distribution::pareto(0.6, 2.5), [=](double x) { return x < 0.6 ? 0.0 : bm::cdf(p, x); },
                     [=](double x) { return x < 0.6 ? 0.0 : bm::pdf(p, x); },
                     [=](double q) { return bm::quantile(p, q); }, 1.0, 2.5 * 0.36 / 0.5});
    }
    {
        bm::weibull_distribution<> w(1.5, 2.0);
        const double m1 = 2.0 * std::tgamma(1.0 + 1.0 / 1.5);
        const double m2 = 4.0 * std::tgamma(1.0 + 2.0 / 1.5);
        v.push_back({Distribution::weibull(2.0, 1.5), [=](double x) { return x < 0 ? 0.0 : bm::cdf(w, x); },
                     [=](double x) { return x < 0 ? 0.0 : bm::pdf(w, x); },
                     [=](double q) { return bm::quantile(w, q); }, m1, m2});
    }
    {
        bm::gamma_distribution<> g(3.5, 0.7);
        v.push_back({Distribution::gamma(3.5, 0.7), [=](double x) { return x <= 0 ? 0.0 : bm::cdf(g, x); },
                     [=](double x) { return x <= 0 ? 0.0 : bm::pdf(g, x); },
                     [=](double q) { return bm::quantile(g, q); }, 3.5 * 0.7, 3.5 * 4.5 * 0.49});
    }
    {
        bm::normal_distribution<> n(1.0, 0.5);
        v.push_back({Distribution::normal(1.0, 0.5), [=](double x) { return bm::cdf(n, x); },
                     [=](double x) { return bm::pdf(n, x); }, [=](double q) { return bm::quantile(n, q); }, 1.0,
                     1.25});
    }
    {
        bm::uniform_distribution<> u(0.5, 2.0);
        v.push_back({Distribution::uniform(0.5, 2.0),
                     [=](double x) { return x < 0.5 ? 0.0 : x > 2.0 ? 1.0 : bm::cdf(u, x); },
                     [=](double x) { return x < 0.5 || x > 2.0 ? 0.0 : bm::pdf(u, x); },
                     [=](double q) { return bm::quantile(u, q); }, 1.25, (8.0 - 0.125) / 4.5});
    }
    return v;
}

}  // namespace

TEST_CASE("cdf, pdf and quantile agree with reference implementations") {
    for (const auto& c : continuous_cases()) {
        INFO(c.d.describe());
        for (double p : {0.001, 0.05, 0.3, 0.5, 0.77, 0.95, 0.999}) {
            const double x = c.quantile(p);
            CHECK(c.d.quantile(p) == Approx(x).epsilon(1e-9));
            CHECK(c.d.cdf(x) == Approx(c.cdf(x)).epsilon(1e-10));
            CHECK(c.d.tail_cdf(x) == Approx(1.0 - c.cdf(x)).epsilon(1e-8));
            CHECK(c.d.pdf(x) == Approx(c.pdf(x)).epsilon(1e-9));
            CHECK(c.d.inverse_tail_cdf(1.0 - p) == Approx(x).epsilon(1e-8));
        }
        CHECK(c.d.mean() == Approx(c.mean).epsilon(1e-12));
        CHECK(c.d.moment(2) == Approx(c.second).epsilon(1e-10));
    }
}

TEST_CASE("partial moments match independent quadrature") {
    for (const auto& c : continuous_cases()) {
        INFO(c.d.describe());
        const double lo = std::isfinite(c.d.support_lo()) ? c.d.support_lo() : c.quantile(1e-15);
        for (double p : {0.1, 0.5, 0.9, 0.99}) {
            const double K = c.quantile(p);
            for (int k : {0, 1, 2}) {
                const double ref = gk_integral([&](double x) { return std::pow(x, k) * c.pdf(x); }, lo, K);
                CHECK(c.d.partial_moment(k, K) == Approx(ref).epsilon(1e-8).margin(1e-13));
                if (k > 0 && c.d.family() != Family::Normal && c.d.family() != Family::Uniform) {
                    CHECK(c.d.upper_partial_moment(k, K) == Approx(c.d.moment(k) - ref).epsilon(1e-7).margin(1e-12));
                }
            }
        }
    }
}

TEST_CASE("discrete laws") {
    namespace bm = boost::math;
    const auto p = Distribution::poisson(10.0);
    bm::poisson_distribution<> ref(10.0);
    for (int k : {0, 3, 10, 13, 25}) {
        CHECK(p.cdf(k) == Approx(bm::cdf(ref, k)).epsilon(1e-12));
        CHECK(p.pdf(k) == Approx(bm::pdf(ref, k)).epsilon(1e-12));
    }
    CHECK(p.quantile(0.8) == 13.0);
    CHECK(p.quantile(0.5) == 10.0);
    CHECK(p.mean() == Approx(10.0));
    CHECK(p.moment(2) == Approx(110.0));
    CHECK(p.partial_moment(1, 12.0) == Approx(10.0 * bm::cdf(ref, 11)).epsilon(1e-12));

    const auto pm = Distribution::point_mass(2.5);
    CHECK(pm.cdf(2.4) == 0.0);
    CHECK(pm.cdf(2.5) == 1.0);
    CHECK(pm.moment(3) == Approx(15.625));
    CHECK(pm.partial_moment(1, 2.0) == 0.0);
    CHECK(pm.partial_moment(1, 3.0) == Approx(2.5));
}

TEST_CASE("unit-mean conventions") {
    for (double a : {1.5, 2.5, 5.0, 10.0}) {
        const auto par = Distribution::pareto_unit_mean(a);
        CHECK(par.param1() == Approx((a - 1.0) / a));
        CHECK(par.mean() == Approx(1.0).epsilon(1e-14));
        const auto w = Distribution::weibull_unit_mean(a);
        CHECK(w.param1() == Approx(1.0 / std::tgamma(1.0 + 1.0 / a)));
        CHECK(w.mean() == Approx(1.0).epsilon(1e-14));
    }
    CHECK(Distribution::gamma(2.0, 3.0).with_mean(1.0).mean() == Approx(1.0));
    CHECK(Distribution::uniform(1.0, 3.0).with_mean(4.0).mean() == Approx(4.0));
}

TEST_CASE("sample means converge to the analytic mean") {
    auto rng = RandomStream::named(11, "service");
    for (const auto& d : {Distribution::exponential(1.0), Distribution::weibull_unit_mean(1.5),
                          Distribution::gamma(0.5, 2.0), Distribution::gamma(4.0, 0.25),
                          Distribution::normal(0.0, 0.3), Distribution::uniform(-0.5, 0.5),
                          Distribution::poisson(10.0), Distribution::pareto_unit_mean(5.0)}) {
        INFO(d.describe());
        constexpr int n = 400000;
        double s = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = d.sample(rng);
            REQUIRE(x >= d.support_lo());
            REQUIRE(x <= d.support_hi());
            s += x;
            s2 += x * x;
        }
        const double sd = std::sqrt(d.variance());
        CHECK(std::abs(s / n - d.mean()) < 5.0 * sd / std::sqrt(double(n)));
        CHECK(s2 / n == Approx(d.moment(2)).epsilon(0.02).margin(0.002));
    }
}

TEST_CASE("domain and configuration errors") {
    const auto par = Distribution::pareto(1.0, 2.0);
    CHECK_THROWS_AS(par.moment(2), DomainError);
    CHECK_NOTHROW(par.moment(1));
    CHECK_THROWS_AS(Distribution::pareto(1.0, 1.0), ConfigError);
    CHECK_THROWS_AS(par.inverse_tail_cdf(0.0), DomainError);
    CHECK_THROWS_AS(par.inverse_tail_cdf(1.5), DomainError);
    CHECK_THROWS_AS(Distribution::exponential(-1.0), ConfigError);
    CHECK_THROWS_AS(Distribution::weibull(1.0, 0.0), ConfigError);
    CHECK_THROWS_AS(Distribution::uniform(2.0, 1.0), ConfigError);
    CHECK_THROWS_AS(Distribution::normal(0.0, -1.0), ConfigError);
    CHECK_THROWS_AS(Distribution::pareto_unit_mean(1.0), ConfigError);
    CHECK_THROWS_AS(parse_family("lognormal"), ConfigError);
    CHECK(parse_family(family_name(Family::Weibull)) == Family::Weibull);
}

TEST_CASE("truncated moment masses partition the mean") {
    for (const auto& d : {Distribution::exponential(1.0), Distribution::pareto_unit_mean(2.5),
                          Distribution::weibull_unit_mean(1.5)}) {
        for (double K : {0.1, 1.0, 3.0, 30.0}) {
            const auto tm = d.truncated_moments(K);
            CHECK(tm.below_mean_mass + tm.above_mean_mass == Approx(d.mean()).epsilon(1e-12));
            CHECK(tm.below_mean_mass >= 0.0);
        }
    }
}
