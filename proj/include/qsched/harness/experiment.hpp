#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qsched/analytics.hpp"
#include "qsched/harness/config.hpp"
#include "qsched/harness/csv.hpp"
#include "qsched/harness/parallel.hpp"
#include "qsched/simulator.hpp"

namespace qsched::harness {

inline const std::vector<std::string>& experiment_columns() {
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> c = {"cell_id", "point", "replication", "seed", "mode", "analytic_mean_number"};
        for (const auto& s : sim_summary_columns()) c.push_back(s);
        c.push_back("error");
        return c;
    }();
    return cols;
}

struct ExperimentResult {
    std::string csv;
    int failures = 0;
    std::size_t result_rows = 0;
    std::size_t aggregate_rows = 0;
    std::vector<std::string> log;

    /// 0 on success, 1 when any cell failed.
    int exit_code() const { return failures > 0 ? 1 : 0; }
};

namespace detail {

struct ExperimentJob {
    const CellConfig* cell = nullptr;
    std::size_t point = 0;
    std::size_t policy = 0;
    int rep = 0;
    double lambda = 0.0;
    double mean_size = 0.0;
    std::string point_label;
    StreamSeeds seeds;
};

struct ExperimentOutcome {
    std::optional<SimSummary> summary;
    std::optional<double> analytic;
    std::optional<double> K;
    std::string error;
};

inline bool analytic_applies(const CellConfig& c, const PolicyConfig& p) {
    return std::holds_alternative<Exact>(c.prediction) && c.service && c.servers == 1 &&
           c.arrival.family() == Family::Exponential && has_closed_form(p.spec.kind);
}

inline ExperimentOutcome run_job(const ExperimentJob& job, RunMode mode) {
    const CellConfig& c = *job.cell;
    const PolicyConfig& pc = c.policies[job.policy];
    ExperimentOutcome out;
    try {
        const Distribution* service = c.service ? &*c.service : nullptr;
        const double rho = job.lambda * job.mean_size / c.servers;
        if (is_two_class(pc.spec.kind)) {
            out.K = c.K ? *c.K : resolve_threshold(*pc.spec.threshold, c.prediction, service, rho, pc.law);
        }
        if (mode != RunMode::Simulate) {
            if (analytic_applies(c, pc)) {
                AnalyticInput in;
                in.lambda = job.lambda;
                in.service = *c.service;
                in.K = out.K;
                out.analytic = analytic_mean_number(pc.spec.kind, in);
            } else if (mode == RunMode::Analytic) {
                out.error = "no closed form for this cell";
                return out;
            }
        }
        if (mode != RunMode::Analytic) {
            SimInput in;
            in.interarrival = c.arrival.with_mean(1.0 / job.lambda);
            in.service = c.service;
            in.model = c.prediction;
            in.policy = pc.spec;
            in.K = out.K;
            in.threshold_law = pc.law;
            in.mean_size = job.mean_size;
            SimOptions o;
            o.horizon = c.horizon;
            o.warmup_fraction = c.warmup_fraction;
            o.batches = c.batches;
            out.summary = run(in, o, job.seeds);
        }
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

inline std::string mode_name(RunMode m) {
    switch (m) {
        case RunMode::Simulate: return "simulate";
        case RunMode::Analytic: return "analytic";
        case RunMode::Both: return "both";
    }
    return "";
}

inline std::vector<std::string> summary_fields(const ExperimentJob& job, const PolicyConfig& pc,
                                               const ExperimentOutcome& o) {
    if (o.summary) {
        std::vector<std::string> f;
        const std::string row = sim_summary_csv_row(*o.summary);
        std::size_t start = 0;
        for (std::size_t i = 0; i <= row.size(); ++i) {
            if (i == row.size() || row[i] == ',') {
                f.push_back(row.substr(start, i - start));
                start = i + 1;
            }
        }
        return f;
    }
    std::map<std::string, std::string> m = {
        {"policy", std::string(policy_name(pc.spec.kind))},
        {"servers", std::to_string(pc.spec.servers)},
        {"lambda", format_number(job.lambda)},
        {"rho", format_number(job.lambda * job.mean_size / pc.spec.servers)},
        {"K", format_number(o.K)},
    };
    std::vector<std::string> f;
    for (const auto& col : sim_summary_columns()) f.push_back(m.count(col) ? m[col] : std::string());
    return f;
}

}  // namespace detail

/// Runs every (cell, load point, policy, replication) and one aggregate row
/// per (cell, load point, policy). Policies within a cell share seeds.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    using namespace detail;
    ExperimentResult res;
    std::vector<ExperimentJob> jobs;
    for (const auto& c : cfg.cells) {
        const Distribution* service = c.service ? &*c.service : nullptr;
        double mean_size = 0.0;
        try {
            mean_size = mean_true_size_or_estimate(c.prediction, service, 10'000'000);
        } catch (const std::exception& e) {
            throw ConfigError("cell '" + c.id + "': " + e.what());
        }
        const bool by_rho = !c.rho.empty();
        const auto& grid = by_rho ? c.rho : c.lambda;
        for (std::size_t pt = 0; pt < grid.size(); ++pt) {
            const double lambda = by_rho ? grid[pt] * c.servers / mean_size : grid[pt];
            const std::string label = (by_rho ? "rho=" : "lambda=") + format_number(grid[pt]);
            for (std::size_t pol = 0; pol < c.policies.size(); ++pol) {
                for (int r = 0; r < c.replications; ++r) {
                    jobs.push_back({&c, pt, pol, r, lambda, mean_size, label,
                                    StreamSeeds::derive(cfg.master_seed, c.id + "/" + label, static_cast<std::uint64_t>(r))});
                }
            }
        }
    }
    std::vector<ExperimentOutcome> outcomes(jobs.size());
    parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) { outcomes[i] = run_job(jobs[i], cfg.mode); });

    res.csv = csv_line(experiment_columns());
    const std::string mode = mode_name(cfg.mode);
    std::size_t i = 0;
    while (i < jobs.size()) {
        const std::size_t begin = i;
        const auto& first = jobs[begin];
        while (i < jobs.size() && jobs[i].cell == first.cell && jobs[i].point == first.point &&
               jobs[i].policy == first.policy) {
            ++i;
        }
        const PolicyConfig& pc = first.cell->policies[first.policy];
        std::vector<double> Ls, Ws;
        std::uint64_t completed = 0, arrivals = 0, events = 0;
        double single_ci = 0.0;
        for (std::size_t k = begin; k < i; ++k) {
            const auto& job = jobs[k];
            const auto& o = outcomes[k];
            std::vector<std::string> row = {job.cell->id, job.point_label, std::to_string(job.rep),
                                            std::to_string(job.seeds.master), mode, format_number(o.analytic)};
            for (auto& f : summary_fields(job, pc, o)) row.push_back(std::move(f));
            row.push_back(o.error);
            res.csv += csv_line(row);
            ++res.result_rows;
            if (!o.error.empty()) {
                ++res.failures;
                res.log.push_back("cell " + job.cell->id + " " + job.point_label + " " +
                                  std::string(policy_name(pc.spec.kind)) + " rep " + std::to_string(job.rep) +
                                  ": " + o.error);
            }
            if (o.summary) {
                Ls.push_back(o.summary->mean_number_in_system);
                Ws.push_back(o.summary->mean_sojourn_all);
                single_ci = o.summary->ci_halfwidth_L;
                completed += o.summary->completed_jobs;
                arrivals += o.summary->arrivals;
                events += o.summary->events;
            }
        }
        // Aggregate across replications: mean and a t interval over replications.
        auto mean_of = [](const std::vector<double>& v) {
            double s = 0.0;
            for (double x : v) s += x;
            return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
        };
        auto ci_of = [&](const std::vector<double>& v) -> std::optional<double> {
            if (v.size() < 2) return v.size() == 1 ? std::optional(single_ci) : std::nullopt;
            const double m = mean_of(v);
            double ss = 0.0;
            for (double x : v) ss += (x - m) * (x - m);
            const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
            return qsched::detail::t_quantile_975(static_cast<int>(v.size()) - 1) * sd /
                   std::sqrt(static_cast<double>(v.size()));
        };
        const auto& o0 = outcomes[begin];
        std::map<std::string, std::string> m = {
            {"policy", std::string(policy_name(pc.spec.kind))},
            {"servers", std::to_string(pc.spec.servers)},
            {"lambda", format_number(first.lambda)},
            {"rho", format_number(first.lambda * first.mean_size / pc.spec.servers)},
            {"K", format_number(o0.K)},
            {"horizon", format_number(first.cell->horizon)},
        };
        if (!Ls.empty()) {
            m["mean_number_in_system"] = format_number(mean_of(Ls));
            m["ci_halfwidth_L"] = format_number(ci_of(Ls));
            m["mean_sojourn_all"] = format_number(mean_of(Ws));
            m["ci_halfwidth_W"] = format_number(ci_of(Ws));
            m["completed_jobs"] = std::to_string(completed);
            m["arrivals"] = std::to_string(arrivals);
            m["events"] = std::to_string(events);
        }
        std::vector<std::string> row = {first.cell->id, first.point_label, "mean", "", mode, format_number(o0.analytic)};
        for (const auto& col : sim_summary_columns()) row.push_back(m.count(col) ? m[col] : std::string());
        const std::size_t failed = (i - begin) - Ls.size();
        row.push_back(failed > 0 && cfg.mode != RunMode::Analytic ? std::to_string(failed) + " replication(s) failed"
                                                                   : std::string());
        res.csv += csv_line(row);
        ++res.aggregate_rows;
    }
    return res;
}

struct SweepRow {
    double K = 0.0;
    double mean_number = 0.0;
    double ci_halfwidth = 0.0;
    double mean_number_c1 = 0.0;
    double mean_number_c2 = 0.0;
    std::optional<double> analytic;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    double reference_K = 0.0;

    std::string csv() const {
        std::string out =
            csv_line({"K", "mean_number_in_system", "ci_halfwidth_L", "mean_number_c1", "mean_number_c2", "analytic"});
        for (const auto& r : rows) {
            out += csv_line({format_number(r.K), format_number(r.mean_number), format_number(r.ci_halfwidth),
                             format_number(r.mean_number_c1), format_number(r.mean_number_c2),
                             format_number(r.analytic)});
        }
        return out;
    }
};

/// Simulated mean number in system across a grid of fixed thresholds, all
/// driven by the same input sequence. An empty grid spans [K*/2, 2 K*] in
/// nine geometric steps around the tail-power threshold K*.
inline SweepResult threshold_sweep(const Distribution& service, double rho, PolicyKind kind, std::vector<double> K_grid,
                                   double horizon = 1e7, std::uint64_t seed = 1, int threads = 1) {
    if (!is_two_class(kind)) throw ConfigError("sweep: policy must be a two-class rule");
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("sweep: rho must lie in (0, 1)");
    SweepResult res;
    res.reference_K = threshold(service, rho, ThresholdSpec::tail_power());
    if (K_grid.empty()) {
        for (int i = 0; i <= 8; ++i) {
            SweepRow r;
            r.K = res.reference_K * std::pow(2.0, (i - 4) / 4.0);
            res.rows.push_back(r);
        }
    } else {
        for (double K : K_grid) {
            if (!(K > 0.0)) throw ConfigError("sweep: every K must be positive");
            SweepRow r;
            r.K = K;
            res.rows.push_back(r);
        }
    }
    const double lambda = rho / service.mean();
    const bool closed = has_closed_form(kind);
    parallel_for(res.rows.size(), threads, [&](std::size_t i) {
        SweepRow& r = res.rows[i];
        SimInput in;
        in.interarrival = Distribution::exponential(lambda);
        in.service = service;
        in.policy = PolicySpec::two_class(kind, ThresholdSpec::fixed(r.K));
        in.mean_size = service.mean();
        SimOptions o;
        o.horizon = horizon;
        const SimSummary s = run(in, o, StreamSeeds::derive(seed, "sweep", 0));
        r.mean_number = s.mean_number_in_system;
        r.ci_halfwidth = s.ci_halfwidth_L;
        r.mean_number_c1 = s.mean_number_c1;
        r.mean_number_c2 = s.mean_number_c2;
        if (closed) {
            try {
                AnalyticInput a;
                a.lambda = lambda;
                a.service = service;
                a.K = r.K;
                r.analytic = analytic_mean_number(kind, a);
            } catch (const DomainError&) {
            }
        }
    });
    return res;
}

struct ScalingRow {
    double n = 0.0;
    double rho_n = 0.0;
    double K_n = 0.0;
    double horizon = 0.0;
    double mean_number = 0.0;
    double ci_halfwidth = 0.0;
    double mean_number_c1 = 0.0;
    double mean_number_c2 = 0.0;
    double scaled_queue = 0.0;    // (K_n / sqrt n) L
    double class1_share = 0.0;    // L1 / L
    double mean_sojourn_c2 = 0.0;
    double scaled_sojourn_c2 = 0.0;  // W2 / sqrt n
    double gamma_n = 0.0;
    double limit = 0.0;
    double analytic_mean_number = 0.0;
    double analytic_scaled_queue = 0.0;
    double seconds = 0.0;
};

struct ScalingResult {
    std::vector<ScalingRow> rows;
    std::vector<std::string> warnings;

    std::string csv() const {
        std::string out = csv_line({"n", "rho_n", "K_n", "horizon", "mean_number_in_system", "ci_halfwidth_L",
                                    "mean_number_c1", "mean_number_c2", "scaled_queue", "class1_share",
                                    "mean_sojourn_c2", "scaled_sojourn_c2", "gamma_n", "limit",
                                    "analytic_mean_number", "analytic_scaled_queue"});
        for (const auto& r : rows) {
            out += csv_line({format_number(r.n), format_number(r.rho_n), format_number(r.K_n), format_number(r.horizon),
                             format_number(r.mean_number), format_number(r.ci_halfwidth),
                             format_number(r.mean_number_c1), format_number(r.mean_number_c2),
                             format_number(r.scaled_queue), format_number(r.class1_share),
                             format_number(r.mean_sojourn_c2), format_number(r.scaled_sojourn_c2),
                             format_number(r.gamma_n), format_number(r.limit), format_number(r.analytic_mean_number),
                             format_number(r.analytic_scaled_queue)});
        }
        return out;
    }
};

/// Simulates the n-th system of the heavy-traffic sequence for each n in the
/// grid. With a runtime budget, the grid is cut short (with a warning) once
/// the projected cost of the next point would exceed it.
inline ScalingResult scaling_study(const ScalingStudyConfig& cfg) {
    cfg.validate();
    ScalingResult res;
    const Distribution& service = cfg.service;
    const double mean = service.mean();
    const double scv = service.variance() / (mean * mean);
    constexpr double arrival_scv = 1.0;  // Poisson arrivals
    double spent = 0.0;
    double last_cost_per_unit = 0.0;
    for (std::size_t i = 0; i < cfg.n.size(); ++i) {
        const double n = cfg.n[i];
        const double horizon = cfg.horizon_for(i);
        if (cfg.runtime_budget_seconds > 0.0 && last_cost_per_unit > 0.0 &&
            spent + last_cost_per_unit * horizon > cfg.runtime_budget_seconds) {
            res.warnings.push_back("runtime budget exceeded: n grid truncated before n = " + format_number(n));
            break;
        }
        ScalingRow r;
        r.n = n;
        r.rho_n = 1.0 - cfg.beta / std::sqrt(n);
        r.horizon = horizon;
        const double lambda = r.rho_n / mean;
        r.K_n = threshold(service, r.rho_n, ThresholdSpec::tail_power(cfg.delta));
        const auto cls = class_parameters(service, lambda, r.K_n);
        r.gamma_n = cls.gamma;

        SimInput in;
        in.interarrival = Distribution::exponential(lambda);
        in.service = service;
        in.policy = PolicySpec::two_class(cfg.policy, ThresholdSpec::fixed(r.K_n));
        in.mean_size = mean;
        SimOptions o;
        o.horizon = horizon;
        const auto t0 = std::chrono::steady_clock::now();
        const SimSummary s = run(in, o, StreamSeeds::derive(cfg.master_seed, "scaling/n=" + format_number(n), 0));
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        spent += secs;
        last_cost_per_unit = secs / horizon;
        r.seconds = secs;
        r.mean_number = s.mean_number_in_system;
        r.ci_halfwidth = s.ci_halfwidth_L;
        r.mean_number_c1 = s.mean_number_c1;
        r.mean_number_c2 = s.mean_number_c2;
        const double scale = r.K_n / std::sqrt(n);
        r.scaled_queue = scale * r.mean_number;
        r.class1_share = r.mean_number > 0.0 ? r.mean_number_c1 / r.mean_number : 0.0;
        r.mean_sojourn_c2 = s.mean_sojourn_c2;
        r.scaled_sojourn_c2 = s.mean_sojourn_c2 / std::sqrt(n);
        r.limit = heavy_traffic_limit(scv, arrival_scv, cfg.beta, r.gamma_n);
        if (has_closed_form(cfg.policy)) {
            AnalyticInput a;
            a.lambda = lambda;
            a.service = service;
            a.K = r.K_n;
            r.analytic_mean_number = analytic_mean_number(cfg.policy, a);
            r.analytic_scaled_queue = scale * r.analytic_mean_number;
        }
        res.rows.push_back(r);
    }
    return res;
}

}  // namespace qsched::harness
