#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "qsched/error.hpp"
#include "qsched/quadrature.hpp"
#include "qsched/random.hpp"

namespace qsched {

enum class Family { Exponential, Pareto, Weibull, Normal, Uniform, Poisson, Gamma, PointMass };

inline std::string_view family_name(Family f) {
    switch (f) {
        case Family::Exponential: return "exponential";
        case Family::Pareto: return "pareto";
        case Family::Weibull: return "weibull";
        case Family::Normal: return "normal";
        case Family::Uniform: return "uniform";
        case Family::Poisson: return "poisson";
        case Family::Gamma: return "gamma";
        case Family::PointMass: return "point_mass";
    }
    return "unknown";
}

inline Family parse_family(std::string_view name) {
    for (Family f : {Family::Exponential, Family::Pareto, Family::Weibull, Family::Normal, Family::Uniform,
                     Family::Poisson, Family::Gamma, Family::PointMass}) {
        if (family_name(f) == name) return f;
    }
    throw ConfigError("unknown distribution family '" + std::string(name) + "'");
}

/// E[V; V <= K] and E[V; V > K].
struct TruncatedMoments {
    double below_mean_mass = 0.0;
    double above_mean_mass = 0.0;
};

/// A parametric law with sampling and exact analytic queries.
///
/// Parameters are in natural units. Pareto uses tail (m/x)^alpha on x >= m;
/// Weibull uses tail exp(-(x/nu)^alpha); Gamma is (shape, scale).
class Distribution {
public:
    static Distribution exponential(double rate) {
        require_positive(rate, "exponential rate");
        return Distribution(Family::Exponential, rate, 0.0);
    }
    static Distribution pareto(double scale, double shape) {
        require_positive(scale, "pareto scale m");
        if (!(shape > 1.0)) throw ConfigError("pareto shape alpha must exceed 1 (finite mean required)");
        return Distribution(Family::Pareto, scale, shape);
    }
    /// m = (alpha - 1) / alpha, so the mean is 1.
    static Distribution pareto_unit_mean(double shape) {
        if (!(shape > 1.0)) throw ConfigError("pareto shape alpha must exceed 1 (finite mean required)");
        return pareto((shape - 1.0) / shape, shape);
    }
    static Distribution weibull(double scale, double shape) {
        require_positive(scale, "weibull scale nu");
        require_positive(shape, "weibull shape alpha");
        return Distribution(Family::Weibull, scale, shape);
    }
    /// nu = 1 / Gamma(1 + 1/alpha), so the mean is 1.
    static Distribution weibull_unit_mean(double shape) {
        require_positive(shape, "weibull shape alpha");
        return weibull(1.0 / std::tgamma(1.0 + 1.0 / shape), shape);
    }
    static Distribution normal(double mean, double sd) {
        if (!std::isfinite(mean)) throw ConfigError("normal mean must be finite");
        require_positive(sd, "normal sd");
        return Distribution(Family::Normal, mean, sd);
    }
    static Distribution uniform(double lo, double hi) {
        if (!(std::isfinite(lo) && std::isfinite(hi) && hi > lo)) throw ConfigError("uniform requires lo < hi");
        return Distribution(Family::Uniform, lo, hi);
    }
    static Distribution poisson(double rate) {
        require_positive(rate, "poisson rate");
        if (rate > 1e6) throw ConfigError("poisson rate above 1e6 is not supported");
        return Distribution(Family::Poisson, rate, 0.0);
    }
    static Distribution gamma(double shape, double scale) {
        require_positive(shape, "gamma shape");
        require_positive(scale, "gamma scale");
        return Distribution(Family::Gamma, shape, scale);
    }
    static Distribution point_mass(double value) {
        if (!std::isfinite(value)) throw ConfigError("point mass value must be finite");
        return Distribution(Family::PointMass, value, 0.0);
    }

    Family family() const noexcept { return family_; }
    double param1() const noexcept { return p1_; }
    double param2() const noexcept { return p2_; }

    bool is_continuous() const noexcept { return family_ != Family::Poisson && family_ != Family::PointMass; }

    /// Same family and shape, rescaled so the mean equals `mean`.
    Distribution with_mean(double mean) const {
        require_positive(mean, "target mean");
        switch (family_) {
            case Family::Exponential: return exponential(1.0 / mean);
            case Family::Pareto: return pareto(mean * (p2_ - 1.0) / p2_, p2_);
            case Family::Weibull: return weibull(mean / std::tgamma(1.0 + 1.0 / p2_), p2_);
            case Family::Gamma: return gamma(p1_, mean / p1_);
            case Family::PointMass: return point_mass(mean);
            case Family::Uniform: {
                const double scale = mean / this->mean();
                if (!(scale > 0.0)) throw ConfigError("uniform with non-positive mean cannot be rescaled");
                return uniform(p1_ * scale, p2_ * scale);
            }
            case Family::Poisson: return poisson(mean);
            case Family::Normal: return normal(mean, p2_);
        }
        throw ConfigError("with_mean: unsupported family");
    }

    double support_lo() const noexcept {
        switch (family_) {
            case Family::Pareto: return p1_;
            case Family::Normal: return -std::numeric_limits<double>::infinity();
            case Family::Uniform: return p1_;
            case Family::PointMass: return p1_;
            default: return 0.0;
        }
    }
    double support_hi() const noexcept {
        switch (family_) {
            case Family::Uniform: return p2_;
            case Family::PointMass: return p1_;
            default: return std::numeric_limits<double>::infinity();
        }
    }

    // ---- sampling -------------------------------------------------------

    double sample(RandomStream& rng) const {
        switch (family_) {
            case Family::Exponential: return -std::log(rng.uniform()) / p1_;
            case Family::Pareto: return p1_ * std::pow(rng.uniform(), -1.0 / p2_);
            case Family::Weibull: return p1_ * std::pow(-std::log(rng.uniform()), 1.0 / p2_);
            case Family::Uniform: return p1_ + (p2_ - p1_) * rng.uniform();
            case Family::Normal: return p1_ + p2_ * standard_normal(rng);
            case Family::Gamma: return p2_ * standard_gamma(p1_, rng);
            case Family::Poisson: return quantile_poisson(rng.uniform());
            case Family::PointMass: return p1_;
        }
        throw ConfigError("sample: unsupported family");
    }

    // Box-Muller on two fresh uniforms; no cached second variate, so the
    // stream position after a draw depends only on the number of draws.
    static double standard_normal(RandomStream& rng) {
        const double u1 = rng.uniform();
        const double u2 = rng.uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Marsaglia-Tsang; shape < 1 boosted via U^(1/shape).
    static double standard_gamma(double shape, RandomStream& rng) {
        if (shape < 1.0) {
            const double g = standard_gamma(shape + 1.0, rng);
            return g * std::pow(rng.uniform(), 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = 0.0;
            double v = 0.0;
            do {
                x = standard_normal(rng);
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = rng.uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    // ---- distribution function queries --------------------------------

    double cdf(double x) const {
        switch (family_) {
            case Family::Exponential: return x <= 0.0 ? 0.0 : -std::expm1(-p1_ * x);
            case Family::Pareto: return x <= p1_ ? 0.0 : -std::expm1(p2_ * std::log(p1_ / x));
            case Family::Weibull: return x <= 0.0 ? 0.0 : -std::expm1(-std::pow(x / p1_, p2_));
            case Family::Normal: return 0.5 * std::erfc(-(x - p1_) / (p2_ * std::numbers::sqrt2));
            case Family::Uniform: return std::clamp((x - p1_) / (p2_ - p1_), 0.0, 1.0);
            case Family::Gamma: return x <= 0.0 ? 0.0 : boost::math::gamma_p(p1_, x / p2_);
            case Family::Poisson:
                return x < 0.0 ? 0.0 : boost::math::gamma_q(std::floor(x) + 1.0, p1_);
            case Family::PointMass: return x >= p1_ ? 1.0 : 0.0;
        }
        return std::numeric_limits<double>::quiet_NaN();
    }

    /// P(V > x).
    double tail_cdf(double x) const {
        switch (family_) {
            case Family::Exponential: return x <= 0.0 ? 1.0 : std::exp(-p1_ * x);
            case Family::Pareto: return x <= p1_ ? 1.0 : std::pow(p1_ / x, p2_);
            case Family::Weibull: return x <= 0.0 ? 1.0 : std::exp(-std::pow(x / p1_, p2_));
            case Family::Normal: return 0.5 * std::erfc((x - p1_) / (p2_ * std::numbers::sqrt2));
            case Family::Uniform: return std::clamp((p2_ - x) / (p2_ - p1_), 0.0, 1.0);
            case Family::Gamma: return x <= 0.0 ? 1.0 : boost::math::gamma_q(p1_, x / p2_);
            case Family::Poisson:
                return x < 0.0 ? 1.0 : boost::math::gamma_p(std::floor(x) + 1.0, p1_);
            case Family::PointMass: return x >= p1_ ? 0.0 : 1.0;
        }
        return std::numeric_limits<double>::quiet_NaN();
    }

    /// Density for continuous families; probability mass at integers for Poisson.
    double pdf(double x) const {
        switch (family_) {
            case Family::Exponential: return x < 0.0 ? 0.0 : p1_ * std::exp(-p1_ * x);
            case Family::Pareto: return x < p1_ ? 0.0 : p2_ / x * std::pow(p1_ / x, p2_);
            case Family::Weibull: {
                if (x < 0.0) return 0.0;
                if (x == 0.0) return p2_ < 1.0 ? std::numeric_limits<double>::infinity() : (p2_ == 1.0 ? 1.0 / p1_ : 0.0);
                const double z = std::pow(x / p1_, p2_);
                return p2_ / x * z * std::exp(-z);
            }
            case Family::Normal: {
                const double z = (x - p1_) / p2_;
                return std::exp(-0.5 * z * z) / (p2_ * std::sqrt(2.0 * std::numbers::pi));
            }
            case Family::Uniform: return (x < p1_ || x > p2_) ? 0.0 : 1.0 / (p2_ - p1_);
            case Family::Gamma: return x < 0.0 ? 0.0 : boost::math::gamma_p_derivative(p1_, x / p2_) / p2_;
            case Family::Poisson: {
                if (x < 0.0 || x != std::floor(x)) return 0.0;
                return std::exp(x * std::log(p1_) - p1_ - std::lgamma(x + 1.0));
            }
            case Family::PointMass: return x == p1_ ? 1.0 : 0.0;
        }
        return std::numeric_limits<double>::quiet_NaN();
    }

    /// Smallest x with tail_cdf(x) <= q, for q in (0, 1].
    double inverse_tail_cdf(double q) const {
        if (!(q > 0.0)) throw DomainError("inverse_tail_cdf: q must be positive");
        if (q > 1.0) throw DomainError("inverse_tail_cdf: q must not exceed 1");
        switch (family_) {
            case Family::Exponential: return -std::log(q) / p1_;
            case Family::Pareto: return p1_ * std::pow(q, -1.0 / p2_);
            case Family::Weibull: return p1_ * std::pow(-std::log(q), 1.0 / p2_);
            case Family::Normal:
                if (q == 1.0) return -std::numeric_limits<double>::infinity();
                return p1_ + p2_ * std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q);
            case Family::Uniform: return p2_ - q * (p2_ - p1_);
            case Family::Gamma: return q == 1.0 ? 0.0 : p2_ * boost::math::gamma_q_inv(p1_, q);
            case Family::Poisson: return quantile_poisson_tail(q);
            case Family::PointMass: return p1_;
        }
        throw ConfigError("inverse_tail_cdf: unsupported family");
    }

    /// Smallest x with cdf(x) >= p, for p in [0, 1).
    double quantile(double p) const {
        if (!(p >= 0.0 && p < 1.0)) throw DomainError("quantile: p must lie in [0, 1)");
        switch (family_) {
            case Family::Exponential: return -std::log1p(-p) / p1_;
            case Family::Pareto: return p1_ * std::exp(-std::log1p(-p) / p2_);
            case Family::Weibull: return p1_ * std::pow(-std::log1p(-p), 1.0 / p2_);
            case Family::Normal:
                if (p == 0.0) return -std::numeric_limits<double>::infinity();
                return p1_ - p2_ * std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
            case Family::Uniform: return p1_ + p * (p2_ - p1_);
            case Family::Gamma: return p == 0.0 ? 0.0 : p2_ * boost::math::gamma_p_inv(p1_, p);
            case Family::Poisson: return quantile_poisson(p);
            case Family::PointMass: return p1_;
        }
        throw ConfigError("quantile: unsupported family");
    }

    // ---- moments ----------------------------------------------------------

    /// E[V^k] for integer k >= 1.
    double moment(int k) const {
        if (k < 1) throw DomainError("moment: order must be at least 1");
        const double kd = k;
        switch (family_) {
            case Family::Exponential: return std::tgamma(kd + 1.0) / std::pow(p1_, kd);
            case Family::Pareto:
                if (!(p2_ > kd)) {
                    throw DomainError("moment: pareto moment of order " + std::to_string(k) + " diverges for alpha=" +
                                      format_double(p2_));
                }
                return p2_ * std::pow(p1_, kd) / (p2_ - kd);
            case Family::Weibull: return std::pow(p1_, kd) * std::tgamma(1.0 + kd / p2_);
            case Family::Gamma: return std::pow(p2_, kd) * std::exp(std::lgamma(p1_ + kd) - std::lgamma(p1_));
            case Family::Uniform:
                return (std::pow(p2_, kd + 1.0) - std::pow(p1_, kd + 1.0)) / ((kd + 1.0) * (p2_ - p1_));
            case Family::PointMass: return std::pow(p1_, kd);
            case Family::Normal: {
                // E[(mu + s Z)^k] via binomial expansion with E[Z^j] = (j-1)!! for even j.
                double total = 0.0;
                double binom = 1.0;
                for (int j = 0; j <= k; ++j) {
                    if (j > 0) binom = binom * (k - j + 1) / j;
                    if (j % 2 == 0) {
                        double dfact = 1.0;
                        for (int i = j - 1; i > 0; i -= 2) dfact *= i;
                        total += binom * std::pow(p1_, kd - j) * std::pow(p2_, j) * dfact;
                    }
                }
                return total;
            }
            case Family::Poisson: return partial_moment(k, std::numeric_limits<double>::infinity());
        }
        throw ConfigError("moment: unsupported family");
    }

    double mean() const { return moment(1); }
    double variance() const {
        const double m = mean();
        return moment(2) - m * m;
    }

    /// E[V^k; V <= K] (closed form for every family except Poisson, which sums).
    double partial_moment(int k, double K) const {
        if (k < 0) throw DomainError("partial_moment: order must be non-negative");
        if (k == 0) return cdf(K);
        const double kd = k;
        if (K <= support_lo()) {
            if (family_ == Family::PointMass && K >= p1_) return std::pow(p1_, kd);
            return 0.0;
        }
        if (std::isinf(K) && family_ != Family::Poisson) return moment(k);
        switch (family_) {
            case Family::Exponential:
                // Gamma(k+1) P(k+1, rate K) / rate^k
                return std::tgamma(kd + 1.0) * boost::math::gamma_p(kd + 1.0, p1_ * K) / std::pow(p1_, kd);
            case Family::Pareto: {
                if (p2_ == kd) return p2_ * std::pow(p1_, p2_) * std::log(K / p1_);
                return p2_ * std::pow(p1_, p2_) * (std::pow(K, kd - p2_) - std::pow(p1_, kd - p2_)) / (kd - p2_);
            }
            case Family::Weibull:
                return std::pow(p1_, kd) * std::tgamma(1.0 + kd / p2_) *
                       boost::math::gamma_p(1.0 + kd / p2_, std::pow(K / p1_, p2_));
            case Family::Gamma:
                return std::pow(p2_, kd) * std::exp(std::lgamma(p1_ + kd) - std::lgamma(p1_)) *
                       boost::math::gamma_p(p1_ + kd, K / p2_);
            case Family::Uniform: {
                const double top = std::min(K, p2_);
                return (std::pow(top, kd + 1.0) - std::pow(p1_, kd + 1.0)) / ((kd + 1.0) * (p2_ - p1_));
            }
            case Family::PointMass: return K >= p1_ ? std::pow(p1_, kd) : 0.0;
            case Family::Normal: {
                const double z = (K - p1_) / p2_;
                const double Phi = 0.5 * std::erfc(-z / std::numbers::sqrt2);
                const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
                if (k == 1) return p1_ * Phi - p2_ * phi;
                if (k == 2) return (p1_ * p1_ + p2_ * p2_) * Phi - p2_ * (p1_ + K) * phi;
                return quadrature_partial_moment(k, K);
            }
            case Family::Poisson: {
                const double top = std::isinf(K) ? std::ceil(p1_ + 40.0 * std::sqrt(p1_) + 40.0) : std::floor(K);
                double total = 0.0;
                for (double j = 1.0; j <= top; j += 1.0) total += std::pow(j, kd) * pdf(j);
                return total;
            }
        }
        throw ConfigError("partial_moment: unsupported family");
    }

    /// E[V^k; V > K], computed directly where cancellation would lose precision.
    double upper_partial_moment(int k, double K) const {
        const double kd = k;
        switch (family_) {
            case Family::Exponential:
                if (K <= 0.0) return moment(k);
                return std::tgamma(kd + 1.0) * boost::math::gamma_q(kd + 1.0, p1_ * K) / std::pow(p1_, kd);
            case Family::Pareto:
                if (K <= p1_) return moment(k);
                if (!(p2_ > kd)) throw DomainError("upper_partial_moment: pareto moment diverges");
                return p2_ * std::pow(p1_, p2_) * std::pow(K, kd - p2_) / (p2_ - kd);
            case Family::Weibull:
                if (K <= 0.0) return moment(k);
                return std::pow(p1_, kd) * std::tgamma(1.0 + kd / p2_) *
                       boost::math::gamma_q(1.0 + kd / p2_, std::pow(K / p1_, p2_));
            case Family::Gamma:
                if (K <= 0.0) return moment(k);
                return std::pow(p2_, kd) * std::exp(std::lgamma(p1_ + kd) - std::lgamma(p1_)) *
                       boost::math::gamma_q(p1_ + kd, K / p2_);
            default: return moment(k) - partial_moment(k, K);
        }
    }

    /// Splits the mean at K. K outside the support clamps to (mean, 0) or (0, mean).
    TruncatedMoments truncated_moments(double K) const {
        if (K >= support_hi()) return {mean(), 0.0};
        if (K < support_lo() || (K == support_lo() && family_ != Family::PointMass)) return {0.0, mean()};
        return {partial_moment(1, K), upper_partial_moment(1, K)};
    }

    /// Breakpoints that split the effective support into quantile bands
    /// [lo, q(0.5), q(0.9), ..., q(1 - tail)]; used to seed piecewise quadrature.
    std::vector<double> quadrature_breakpoints(double tail = 1e-12) const {
        std::vector<double> pts;
        const double lo = std::isfinite(support_lo()) ? support_lo() : inverse_tail_cdf(1.0 - tail);
        pts.push_back(lo);
        for (double q : {0.75, 0.5, 0.25, 0.1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-8, 1e-10}) {
            if (q <= tail) break;
            const double x = inverse_tail_cdf(q);
            if (x > pts.back()) pts.push_back(x);
        }
        const double hi = std::isfinite(support_hi()) ? support_hi() : inverse_tail_cdf(tail);
        if (hi > pts.back()) pts.push_back(hi);
        return pts;
    }

    std::string describe() const {
        std::ostringstream os;
        os << family_name(family_) << '(';
        switch (family_) {
            case Family::Exponential: os << "rate=" << format_double(p1_); break;
            case Family::Pareto: os << "m=" << format_double(p1_) << ", alpha=" << format_double(p2_); break;
            case Family::Weibull: os << "nu=" << format_double(p1_) << ", alpha=" << format_double(p2_); break;
            case Family::Normal: os << "mean=" << format_double(p1_) << ", sd=" << format_double(p2_); break;
            case Family::Uniform: os << "lo=" << format_double(p1_) << ", hi=" << format_double(p2_); break;
            case Family::Poisson: os << "rate=" << format_double(p1_); break;
            case Family::Gamma: os << "shape=" << format_double(p1_) << ", scale=" << format_double(p2_); break;
            case Family::PointMass: os << "value=" << format_double(p1_); break;
        }
        os << ')';
        return os.str();
    }

    friend bool operator==(const Distribution&, const Distribution&) = default;

    static std::string format_double(double v) {
        std::ostringstream os;
        os.precision(12);
        os << v;
        return os.str();
    }

private:
    Distribution(Family f, double p1, double p2) : family_(f), p1_(p1), p2_(p2) {}

    static void require_positive(double v, const char* what) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be positive and finite");
    }

    double quantile_poisson(double p) const {
        // Sequential search on the cdf; starts near the mode for large rates.
        double k = 0.0;
        if (p1_ > 50.0) k = std::max(0.0, std::floor(p1_ - 10.0 * std::sqrt(p1_)));
        double pmf = std::exp(k * std::log(std::max(p1_, 1e-300)) - p1_ - std::lgamma(k + 1.0));
        double cdf_k = k == 0.0 ? pmf : cdf(k);
        while (cdf_k < p) {
            k += 1.0;
            pmf *= p1_ / k;
            cdf_k += pmf;
            if (pmf < 1e-300 && cdf_k < p && k > p1_) break;
        }
        return k;
    }

    double quantile_poisson_tail(double q) const {
        double k = std::max(0.0, std::floor(p1_ - 10.0 * std::sqrt(p1_) - 1.0));
        while (tail_cdf(k) > q) k += 1.0;
        return k;
    }

    double quadrature_partial_moment(int k, double K) const {
        const auto pts = quadrature_breakpoints();
        std::vector<double> upto;
        for (double x : pts) {
            if (x < K) upto.push_back(x);
        }
        upto.push_back(std::min(K, pts.back()));
        return integrate_piecewise([&](double x) { return std::pow(x, k) * pdf(x); }, upto,
                                   QuadratureOptions{1e-10, 1e-14});
    }

    Family family_;
    double p1_;
    double p2_;
};

}  // namespace qsched
