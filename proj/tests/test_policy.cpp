#include "catch_amalgamated.hpp"

#include <cmath>

#include "qsched/policy.hpp"

using namespace qsched;
using Catch::Approx;

TEST_CASE("tail-power threshold for exponential and Pareto laws") {
    const auto e = Distribution::exponential(1.0);
    for (double rho : {0.5, 0.8, 0.9, 0.95, 0.99}) {
        for (double delta : {0.01, 0.05, 0.2}) {
            const double K = threshold(e, rho, ThresholdSpec::tail_power(delta));
            CHECK(K == Approx(-(1.0 - delta) * std::log(1.0 - rho)).epsilon(1e-12));
        }
        const auto p = Distribution::pareto_unit_mean(2.5);
        const double m = 0.6;
        CHECK(threshold(p, rho) == Approx(m * std::pow(1.0 - rho, -(1.0 - 0.05) / 2.5)).epsilon(1e-12));
    }
    CHECK(threshold(e, 0.9) == Approx(2.1875).margin(1e-4));
}

TEST_CASE("threshold grows without bound as rho approaches one") {
    const auto w = Distribution::weibull_unit_mean(1.5);
    double prev = 0.0;
    for (double rho : {0.5, 0.9, 0.99, 0.999, 0.9999}) {
        const double K = threshold(w, rho);
        CHECK(K > prev);
        prev = K;
    }
}

TEST_CASE("quantile and fixed modes") {
    const auto e = Distribution::exponential(1.0);
    CHECK(threshold(e, 0.9, ThresholdSpec::quantile()) == Approx(-std::log(0.1)));
    CHECK(threshold(e, 0.9, ThresholdSpec::fixed(3.25)) == 3.25);
    CHECK(threshold(Distribution::poisson(10.0), 0.8, ThresholdSpec::quantile()) == 13.0);
}

TEST_CASE("threshold domain errors") {
    const auto e = Distribution::exponential(1.0);
    CHECK_THROWS_AS(threshold(e, 1.0), DomainError);
    CHECK_THROWS_AS(threshold(e, 0.0), DomainError);
    CHECK_THROWS_AS(threshold(e, 1.2), DomainError);
    ThresholdSpec bad = ThresholdSpec::tail_power(0.0);
    CHECK_THROWS_AS(threshold(e, 0.5, bad), ConfigError);
    CHECK_THROWS_AS(threshold(e, 0.5, ThresholdSpec::fixed(-1.0)), ConfigError);
}

TEST_CASE("class parameters for exponential service") {
    const auto e = Distribution::exponential(1.0);
    const double lambda = 0.9;
    const double K = 2.0;
    const auto c = class_parameters(e, lambda, K);
    CHECK(c.lambda1 == Approx(lambda * (1.0 - std::exp(-K))));
    CHECK(c.lambda2 == Approx(lambda * std::exp(-K)));
    CHECK(c.lambda1 + c.lambda2 == Approx(lambda));
    // Memorylessness: E[v | v > K] = K + 1.
    CHECK(1.0 / c.mu2 == Approx(K + 1.0));
    CHECK(c.gamma == Approx(K / (K + 1.0)));
    CHECK(c.rho() == Approx(lambda));
    CHECK(c.rho1 == Approx(c.lambda1 / c.mu1));
    CHECK(c.rho2 == Approx(c.lambda2 / c.mu2));
    // E[v^2 | v <= K] for Exp(1) from the incomplete gamma function.
    const double m2 = 2.0 - std::exp(-K) * (K * K + 2.0 * K + 2.0);
    CHECK(c.second_moment_1 == Approx(m2 / (1.0 - std::exp(-K))));
}

TEST_CASE("degenerate splits are rejected") {
    CHECK_THROWS_AS(class_parameters(Distribution::pareto(1.0, 2.5), 0.5, 0.5), DomainError);
    CHECK_THROWS_AS(class_parameters(Distribution::uniform(0.0, 1.0), 0.5, 2.0), DomainError);
    CHECK_THROWS_AS(class_parameters(Distribution::exponential(1.0), 0.0, 1.0), DomainError);
}

TEST_CASE("diagnostics report") {
    const auto d = threshold_diagnostics(Distribution::exponential(1.0), 0.9);
    CHECK(d.rho == Approx(0.9));
    CHECK(d.K == Approx(-0.95 * std::log(0.1)));
    CHECK(d.tail_mass == Approx(std::pow(0.1, 0.95)));
    CHECK(d.slack == Approx(1.0 - d.classes.rho1));
    const std::string text = format_diagnostics(d);
    for (const char* key : {"rho=", "K=", "lambda1=", "lambda2=", "mu1=", "mu2=", "rho1=", "rho2=", "gamma="}) {
        CHECK((text.find(std::string("\n") + key) != std::string::npos || text.rfind(key, 0) == 0));
    }
}

TEST_CASE("policy names round-trip and specs validate") {
    for (PolicyKind k : {PolicyKind::FCFS, PolicyKind::SJF, PolicyKind::SRPT, PolicyKind::FB, PolicyKind::TwoClassNP,
                         PolicyKind::TwoClassP, PolicyKind::TwoClassSP}) {
        CHECK(parse_policy_kind(policy_name(k)) == k);
        CHECK_NOTHROW(PolicySpec::make(k).validate());
    }
    CHECK(parse_policy_kind("2np") == PolicyKind::TwoClassNP);
    CHECK_THROWS_AS(parse_policy_kind("lifo"), ConfigError);
    CHECK(parse_threshold_mode(threshold_mode_name(ThresholdMode::Quantile)) == ThresholdMode::Quantile);
    CHECK_THROWS_AS(parse_threshold_mode("median"), ConfigError);

    PolicySpec p{PolicyKind::TwoClassNP, std::nullopt, 1};
    CHECK_THROWS_AS(p.validate(), ConfigError);
    PolicySpec f{PolicyKind::FCFS, ThresholdSpec::tail_power(), 1};
    CHECK_THROWS_AS(f.validate(), ConfigError);
    CHECK_THROWS_AS(PolicySpec::make(PolicyKind::SRPT, 4).validate(), ConfigError);
    CHECK_NOTHROW(PolicySpec::make(PolicyKind::TwoClassNP, 4).validate());
    CHECK_THROWS_AS(PolicySpec::make(PolicyKind::FCFS, 0).validate(), ConfigError);
}
