#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "qsched/distributions.hpp"
#include "qsched/error.hpp"
#include "qsched/policy.hpp"
#include "qsched/quadrature.hpp"
#include "qsched/random.hpp"

namespace qsched {

/// Predicted size equals true size.
struct Exact {};

/// predicted = true + e with |e| <= M. With worst_case_K set, the error is
/// adversarial: true sizes in [K-M, K] are pushed above K and those in
/// (K, K+M] are pulled below it.
struct BoundedError {
    double M = 0.5;
    Distribution error = Distribution::uniform(-0.5, 0.5);
    std::optional<double> worst_case_K;
    double floor = 0.001;
};

/// True class i is reported as the other class with probability p12 / p21.
/// The flipped prediction is the log-mirror K^2 / v so it lands on the other side of K.
struct ClassFlip {
    double p12 = 0.0;
    double p21 = 0.0;
    std::optional<double> K;
};

/// predicted = true + offset + e, e independent of the true size.
struct AdditiveIID {
    Distribution error = Distribution::normal(0.0, 0.3);
    double offset = 0.0;
    double floor = 0.001;
};

/// true = max(beta.X + intercept + N(0, sigma_e^2), floor), predicted = beta.X + intercept.
struct LinearFeatures {
    std::vector<double> beta;
    double intercept = 0.0;
    std::vector<Distribution> features;
    double sigma_e = 0.0;
    double floor = 0.001;
};

/// true = exp(beta.X + intercept + N(0, sigma_e^2)), predicted = exp(beta.X + intercept).
struct LogLinearFeatures {
    std::vector<double> beta;
    double intercept = 0.0;
    std::vector<Distribution> features;
    double sigma_e = 0.0;
};

/// L from the item law, redrawn until L >= 1; true ~ Gamma(L, theta), predicted = L theta.
struct GammaItems {
    Distribution items = Distribution::poisson(10.0);
    double theta = 1.0;
};

using PredictionModel =
    std::variant<Exact, BoundedError, ClassFlip, AdditiveIID, LinearFeatures, LogLinearFeatures, GammaItems>;

inline std::string prediction_kind_name(const PredictionModel& m) {
    static constexpr const char* names[] = {"exact",  "bounded_error", "class_flip", "additive_iid",
                                            "linear", "log_linear",    "gamma_items"};
    return names[m.index()];
}

/// True when sizes come from the model itself rather than from a service law.
inline bool generates_own_sizes(const PredictionModel& m) {
    return std::holds_alternative<LinearFeatures>(m) || std::holds_alternative<LogLinearFeatures>(m) ||
           std::holds_alternative<GammaItems>(m);
}

/// Feature laws of the regression examples: X1 ~ N(1,1), X2 ~ Exp(1), X3 ~ U[0,2].
inline std::vector<Distribution> example_features() {
    return {Distribution::normal(1.0, 1.0), Distribution::exponential(1.0), Distribution::uniform(0.0, 2.0)};
}

inline LogLinearFeatures example_log_linear(double sigma_e) {
    return {{0.1, 0.4, 0.4}, 0.1, example_features(), sigma_e};
}

inline LinearFeatures example_linear(double sigma_e) {
    return {{0.1, 0.4, 0.4}, 0.1, example_features(), sigma_e, 0.001};
}

inline void validate(const PredictionModel& model) {
    std::visit(
        [](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, BoundedError>) {
                if (!(m.M > 0.0)) throw ConfigError("bounded_error: M must be positive");
                if (m.error.support_lo() < -m.M - 1e-12 || m.error.support_hi() > m.M + 1e-12) {
                    throw ConfigError("bounded_error: error law must be supported on [-M, M]");
                }
            } else if constexpr (std::is_same_v<T, ClassFlip>) {
                if (!(m.p12 >= 0.0 && m.p12 <= 1.0 && m.p21 >= 0.0 && m.p21 <= 1.0)) {
                    throw ConfigError("class_flip: probabilities must lie in [0, 1]");
                }
                if (m.K && !(*m.K > 0.0)) throw ConfigError("class_flip: K must be positive");
            } else if constexpr (std::is_same_v<T, LinearFeatures> || std::is_same_v<T, LogLinearFeatures>) {
                if (m.beta.size() != m.features.size()) {
                    throw ConfigError("feature model: beta and features must have equal length");
                }
                if (!(m.sigma_e >= 0.0)) throw ConfigError("feature model: sigma_e must be non-negative");
            } else if constexpr (std::is_same_v<T, GammaItems>) {
                if (!(m.theta > 0.0)) throw ConfigError("gamma_items: theta must be positive");
                if (m.items.support_hi() < 1.0) throw ConfigError("gamma_items: item law cannot reach L >= 1");
            }
        },
        model);
}

/// Fixes the threshold for models that need one at bind time.
inline PredictionModel bind_threshold(PredictionModel model, double K) {
    if (auto* cf = std::get_if<ClassFlip>(&model)) cf->K = K;
    return model;
}

struct PredictionDraw {
    double true_size = 0.0;
    double predicted_size = 0.0;
    bool clamped = false;
    std::vector<double> features;
};

/// One stream per stochastic ingredient so that changing one parameter
/// (say, sigma_e) leaves the other input sequences untouched.
struct PredictionStreams {
    RandomStream service;
    RandomStream error;
    RandomStream features;

    static PredictionStreams from(const StreamSeeds& seeds) {
        return {seeds.stream("service"), seeds.stream("prediction_error"), seeds.stream("features")};
    }
};

namespace detail {

template <bool KeepFeatures>
inline double linear_predictor(const std::vector<double>& beta, double intercept,
                               const std::vector<Distribution>& features, RandomStream& rng,
                               std::vector<double>* out) {
    double z = intercept;
    for (std::size_t i = 0; i < beta.size(); ++i) {
        const double x = features[i].sample(rng);
        if constexpr (KeepFeatures) out->push_back(x);
        z += beta[i] * x;
    }
    return z;
}

template <bool KeepFeatures>
inline PredictionDraw draw_impl(const PredictionModel& model, const Distribution* service, PredictionStreams& s) {
    PredictionDraw d;
    auto need_service = [&]() -> const Distribution& {
        if (service == nullptr) throw ConfigError("prediction model requires a service law");
        return *service;
    };
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Exact>) {
                d.true_size = need_service().sample(s.service);
                d.predicted_size = d.true_size;
            } else if constexpr (std::is_same_v<T, BoundedError>) {
                d.true_size = need_service().sample(s.service);
                if (m.worst_case_K) {
                    const double K = *m.worst_case_K;
                    if (d.true_size >= K - m.M && d.true_size <= K) {
                        d.predicted_size = std::max(d.true_size + m.M, std::nextafter(K, 2.0 * K + 1.0));
                        if (d.predicted_size - d.true_size > m.M) d.predicted_size = d.true_size + m.M;
                    } else if (d.true_size > K && d.true_size <= K + m.M) {
                        d.predicted_size = d.true_size - m.M;
                    } else {
                        d.predicted_size = d.true_size;
                    }
                } else {
                    d.predicted_size = d.true_size + m.error.sample(s.error);
                }
                if (d.predicted_size < m.floor) {
                    d.predicted_size = m.floor;
                    d.clamped = true;
                }
            } else if constexpr (std::is_same_v<T, ClassFlip>) {
                if (!m.K) throw ConfigError("class_flip: model must be bound to a threshold before drawing");
                const double K = *m.K;
                d.true_size = need_service().sample(s.service);
                const double u = s.error.uniform();
                const bool class1 = d.true_size <= K;
                const bool flip = class1 ? (u < m.p12) : (u < m.p21);
                d.predicted_size = d.true_size;
                if (flip) {
                    double mirrored = K * K / d.true_size;
                    if (class1 && mirrored <= K) mirrored = std::nextafter(K, 2.0 * K + 1.0);
                    d.predicted_size = mirrored;
                }
            } else if constexpr (std::is_same_v<T, AdditiveIID>) {
                d.true_size = need_service().sample(s.service);
                d.predicted_size = d.true_size + m.offset + m.error.sample(s.error);
                if (d.predicted_size < m.floor) {
                    d.predicted_size = m.floor;
                    d.clamped = true;
                }
            } else if constexpr (std::is_same_v<T, LinearFeatures>) {
                const double z = linear_predictor<KeepFeatures>(m.beta, m.intercept, m.features, s.features,
                                                                &d.features);
                const double eps = m.sigma_e > 0.0 ? m.sigma_e * Distribution::standard_normal(s.error) : 0.0;
                d.true_size = std::max(z + eps, m.floor);
                d.predicted_size = z;
                if (d.predicted_size < m.floor) {
                    d.predicted_size = m.floor;
                    d.clamped = true;
                }
            } else if constexpr (std::is_same_v<T, LogLinearFeatures>) {
                const double z = linear_predictor<KeepFeatures>(m.beta, m.intercept, m.features, s.features,
                                                                &d.features);
                const double eps = m.sigma_e > 0.0 ? m.sigma_e * Distribution::standard_normal(s.error) : 0.0;
                d.predicted_size = std::exp(z);
                d.true_size = m.sigma_e > 0.0 ? std::exp(z + eps) : d.predicted_size;
            } else if constexpr (std::is_same_v<T, GammaItems>) {
                double L = 0.0;
                for (int tries = 0; L < 1.0; ++tries) {
                    if (tries > 1'000'000) throw NumericalError("gamma_items: could not draw L >= 1");
                    L = m.items.sample(s.features);
                }
                d.predicted_size = L * m.theta;
                d.true_size = m.theta * Distribution::standard_gamma(L, s.service);
            }
        },
        model);
    return d;
}

}  // namespace detail

inline PredictionDraw draw(const PredictionModel& model, const Distribution* service, PredictionStreams& streams) {
    return detail::draw_impl<false>(model, service, streams);
}

inline PredictionDraw draw_with_features(const PredictionModel& model, const Distribution* service,
                                         PredictionStreams& streams) {
    return detail::draw_impl<true>(model, service, streams);
}

namespace detail {

// E[exp(t X)] where a closed form exists.
inline std::optional<double> mgf(const Distribution& d, double t) {
    switch (d.family()) {
        case Family::Normal: return std::exp(t * d.param1() + 0.5 * t * t * d.param2() * d.param2());
        case Family::Exponential:
            if (t >= d.param1()) return std::numeric_limits<double>::infinity();
            return d.param1() / (d.param1() - t);
        case Family::Uniform:
            if (t == 0.0) return 1.0;
            return (std::exp(t * d.param2()) - std::exp(t * d.param1())) / (t * (d.param2() - d.param1()));
        case Family::PointMass: return std::exp(t * d.param1());
        case Family::Gamma:
            if (t * d.param2() >= 1.0) return std::numeric_limits<double>::infinity();
            return std::pow(1.0 - t * d.param2(), -d.param1());
        case Family::Poisson: return std::exp(d.param1() * std::expm1(t));
        default: return std::nullopt;
    }
}

}  // namespace detail

/// E[true size] in closed form, or nullopt where only simulation can tell.
inline std::optional<double> mean_true_size(const PredictionModel& model, const Distribution* service) {
    return std::visit(
        [&](const auto& m) -> std::optional<double> {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, LinearFeatures>) {
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, LogLinearFeatures>) {
                double v = std::exp(m.intercept + 0.5 * m.sigma_e * m.sigma_e);
                for (std::size_t i = 0; i < m.beta.size(); ++i) {
                    auto g = detail::mgf(m.features[i], m.beta[i]);
                    if (!g) return std::nullopt;
                    v *= *g;
                }
                return v;
            } else if constexpr (std::is_same_v<T, GammaItems>) {
                if (m.items.family() == Family::Poisson) {
                    const double r = m.items.param1();
                    return m.theta * r / (-std::expm1(-r));
                }
                return std::nullopt;
            } else {
                if (service == nullptr) throw ConfigError("prediction model requires a service law");
                return service->mean();
            }
        },
        model);
}

/// Seeded Monte Carlo estimate of E[true size].
inline double estimate_mean_true_size(const PredictionModel& model, const Distribution* service, std::size_t n,
                                      std::uint64_t seed) {
    auto streams = PredictionStreams::from(StreamSeeds{seed});
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += draw(model, service, streams).true_size;
    return sum / static_cast<double>(n);
}

/// Closed form when available, otherwise an n-draw estimate.
inline double mean_true_size_or_estimate(const PredictionModel& model, const Distribution* service,
                                         std::size_t n = 10'000'000, std::uint64_t seed = 0x6d65616eULL) {
    if (auto m = mean_true_size(model, service)) return *m;
    return estimate_mean_true_size(model, service, n, seed);
}

struct ClassificationErrors {
    double p12 = 0.0;
    double p21 = 0.0;
    std::size_t n_class1 = 0;
    std::size_t n_class2 = 0;
};

inline ClassificationErrors classification_error_rates(const PredictionModel& model, const Distribution* service,
                                                       double K, std::size_t n, std::uint64_t seed) {
    if (n < 100'000) throw DomainError("classification_error_rates: n must be at least 1e5");
    const auto bound = bind_threshold(model, K);
    auto streams = PredictionStreams::from(StreamSeeds{seed});
    std::size_t c1 = 0, c2 = 0, f12 = 0, f21 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto d = draw(bound, service, streams);
        if (d.true_size <= K) {
            ++c1;
            if (d.predicted_size > K) ++f12;
        } else {
            ++c2;
            if (d.predicted_size <= K) ++f21;
        }
    }
    if (c1 == 0 || c2 == 0) throw DomainError("classification_error_rates: a true class is empty at this K");
    return {static_cast<double>(f12) / c1, static_cast<double>(f21) / c2, c1, c2};
}

inline double r_squared(const PredictionModel& model, const Distribution* service, std::size_t n,
                        std::uint64_t seed) {
    if (n < 100'000) throw DomainError("r_squared: n must be at least 1e5");
    auto streams = PredictionStreams::from(StreamSeeds{seed});
    double sse = 0.0, mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto d = draw(model, service, streams);
        const double r = d.true_size - d.predicted_size;
        sse += r * r;
        const double delta = d.true_size - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (d.true_size - mean);
    }
    if (!(m2 > 0.0)) throw DomainError("r_squared: true sizes have zero variance");
    return 1.0 - sse / m2;
}

/// Empirical q-quantile of the predicted-size law: the ceil(q n)-th order statistic.
inline double predicted_law_quantile(const PredictionModel& model, const Distribution* service, double q,
                                     std::size_t n, std::uint64_t seed) {
    if (!(q > 0.0 && q < 1.0)) throw DomainError("predicted_law_quantile: q must lie in (0, 1)");
    if (n < 1'000'000) throw DomainError("predicted_law_quantile: n must be at least 1e6");
    auto streams = PredictionStreams::from(StreamSeeds{seed});
    std::vector<double> xs(n);
    for (auto& x : xs) x = draw(model, service, streams).predicted_size;
    const std::size_t k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n))) - 1;
    std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(k), xs.end());
    return xs[k];
}

enum class ThresholdLaw { Predicted, Service };

/// Resolves a ThresholdSpec against a prediction model. Exact models and
/// ThresholdLaw::Service use the analytic inverse; otherwise the predicted
/// law is sampled.
inline double resolve_threshold(const ThresholdSpec& spec, const PredictionModel& model, const Distribution* service,
                                double rho, ThresholdLaw law = ThresholdLaw::Predicted, std::size_t n = 1'000'000,
                                std::uint64_t seed = 0x4b4b4bULL) {
    spec.validate();
    if (spec.mode == ThresholdMode::Fixed) return spec.value;
    if (!(rho > 0.0 && rho < 1.0)) throw DomainError("threshold: rho must lie in (0, 1)");
    const bool analytic = service != nullptr && (law == ThresholdLaw::Service || std::holds_alternative<Exact>(model));
    if (analytic) return threshold(*service, rho, spec);
    if (law == ThresholdLaw::Service) throw ConfigError("threshold on the service law needs a service distribution");
    const double q = spec.mode == ThresholdMode::TailPower ? 1.0 - std::pow(1.0 - rho, 1.0 - spec.delta) : rho;
    return predicted_law_quantile(model, service, q, n, seed);
}

struct TailProbeRow {
    double K = 0.0;
    double mean_class2 = 0.0;     // E[v | v + offset + e > K], quadrature
    double class2_mass = 0.0;     // P(v + offset + e > K)
    double mc_mean_class2 = std::numeric_limits<double>::quiet_NaN();
    std::size_t mc_count = 0;
};

/// E[v | predicted > K] across a K grid for predicted = v + offset + e.
///
/// The primary column is quadrature of int t f(t) Pbar(K - offset - t) dt over
/// int f(t) Pbar(K - offset - t) dt. Beyond the point where the error tail is
/// 1 the remaining mass is added in closed form. When mc_draws > 0 a Monte
/// Carlo column is filled for every K with at least 1000 conditioning draws.
inline std::vector<TailProbeRow> tail_dominance_probe(const Distribution& service, const Distribution& error,
                                                      double offset, const std::vector<double>& K_grid,
                                                      std::size_t mc_draws = 0, std::uint64_t seed = 0x7461696cULL) {
    std::vector<TailProbeRow> rows;
    const double err_lo = std::isfinite(error.support_lo()) ? error.support_lo() : error.quantile(1e-16);
    QuadratureOptions opts;
    opts.abs_tol = 0.0;
    opts.rel_tol = 1e-9;
    for (double K : K_grid) {
        TailProbeRow row;
        row.K = K;
        const double t_cut = std::max(service.support_lo(), K - offset - err_lo);
        auto pbar = [&](double t) { return error.tail_cdf(K - offset - t); };
        std::vector<double> pts;
        for (double x : service.quadrature_breakpoints(1e-15)) {
            if (x < t_cut) pts.push_back(x);
        }
        if (pts.empty()) pts.push_back(service.support_lo());
        // Resolve the region where the error tail changes fastest.
        for (double q : {0.999, 0.99, 0.9, 0.5, 0.1, 0.01, 1e-3, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12}) {
            const double t = K - offset - error.inverse_tail_cdf(q);
            if (t > pts.front() && t < t_cut) pts.push_back(t);
        }
        if (std::isfinite(error.support_hi())) {
            const double t = K - offset - error.support_hi();
            if (t > pts.front() && t < t_cut) pts.push_back(t);
        }
        pts.push_back(t_cut);
        std::sort(pts.begin(), pts.end());
        pts.erase(std::unique(pts.begin(), pts.end(),
                              [](double a, double b) { return b - a <= 1e-12 * (1.0 + std::abs(a)); }),
                  pts.end());
        pts.back() = t_cut;
        double num = 0.0, den = 0.0;
        if (t_cut > service.support_lo()) {
            num = integrate_piecewise([&](double t) { return t * service.pdf(t) * pbar(t); }, pts, opts);
            den = integrate_piecewise([&](double t) { return service.pdf(t) * pbar(t); }, pts, opts);
        }
        num += service.upper_partial_moment(1, t_cut);
        den += service.tail_cdf(t_cut);
        row.mean_class2 = num / den;
        row.class2_mass = den;
        rows.push_back(row);
    }
    if (mc_draws > 0) {
        auto seeds = StreamSeeds{seed};
        auto rs = seeds.stream("service");
        auto re = seeds.stream("prediction_error");
        std::vector<double> sum(rows.size(), 0.0);
        std::vector<std::size_t> cnt(rows.size(), 0);
        for (std::size_t i = 0; i < mc_draws; ++i) {
            const double v = service.sample(rs);
            const double vhat = v + offset + error.sample(re);
            for (std::size_t j = 0; j < rows.size(); ++j) {
                if (vhat > rows[j].K) {
                    sum[j] += v;
                    ++cnt[j];
                }
            }
        }
        for (std::size_t j = 0; j < rows.size(); ++j) {
            rows[j].mc_count = cnt[j];
            if (cnt[j] >= 1000) rows[j].mc_mean_class2 = sum[j] / static_cast<double>(cnt[j]);
        }
    }
    return rows;
}

/// Least-squares slope of log(mean_class2) on log(K) over rows with K in [K_lo, K_hi].
inline double log_log_slope(const std::vector<TailProbeRow>& rows, double K_lo, double K_hi) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const auto& r : rows) {
        if (r.K < K_lo || r.K > K_hi) continue;
        const double x = std::log(r.K), y = std::log(r.mean_class2);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 2) throw DomainError("log_log_slope: need at least two grid points in range");
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace qsched
