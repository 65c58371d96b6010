#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "qsched/analytics.hpp"
#include "qsched/harness/config.hpp"
#include "qsched/harness/csv.hpp"
#include "qsched/harness/experiment.hpp"
#include "qsched/harness/tables.hpp"

using namespace qsched;
using namespace qsched::harness;

namespace {

constexpr int kExitCellFailure = 1;
constexpr int kExitConfigError = 2;

void emit(const std::string& out_path, const std::string& content) {
    if (out_path.empty()) {
        std::cout << content;
    } else {
        write_atomic(out_path, content);
    }
}

ThresholdSpec threshold_spec(const std::string& mode, double delta, std::optional<double> K) {
    if (K) return ThresholdSpec::fixed(*K);
    ThresholdSpec t;
    t.mode = parse_threshold_mode(mode);
    t.delta = delta;
    t.validate();
    return t;
}

int cmd_threshold(const std::string& dist_arg, double rho, double delta, const std::string& mode) {
    const Distribution d = parse_distribution_arg(dist_arg);
    const auto diag = threshold_diagnostics(d, rho / d.mean(), threshold_spec(mode, delta, std::nullopt));
    std::cout << "dist=" << d.describe() << '\n' << "delta=" << delta << '\n' << format_diagnostics(diag);
    return 0;
}

int cmd_analytic(const std::string& policy, const std::string& dist_arg, double rho, std::optional<double> K,
                 double delta) {
    const Distribution d = parse_distribution_arg(dist_arg);
    const PolicyKind kind = parse_policy_kind(policy);
    AnalyticInput in;
    in.lambda = rho / d.mean();
    in.service = d;
    std::cout.precision(10);
    std::cout << "policy=" << policy_name(kind) << '\n' << "dist=" << d.describe() << '\n';
    if (is_two_class(kind)) {
        in.K = K ? *K : threshold(d, rho, ThresholdSpec::tail_power(delta));
        const auto diag = class_parameters(d, in.lambda, *in.K);
        ThresholdDiagnostics td;
        td.rho = rho;
        td.K = *in.K;
        td.classes = diag;
        td.tail_mass = diag.Fbar_K;
        td.slack = 1.0 - diag.rho1;
        td.health = td.slack / diag.mu2;
        std::cout << format_diagnostics(td);
    } else {
        std::cout << "rho=" << rho << '\n';
    }
    std::cout << "mean_number_in_system=" << analytic_mean_number(kind, in) << '\n';
    return 0;
}

int cmd_table(const std::string& id, const std::string& mode, std::optional<double> horizon, std::uint64_t seed,
              int threads, std::size_t draws, const std::string& out) {
    TableOptions opt;
    if (!mode.empty()) opt.mode = parse_run_mode(mode);
    opt.horizon = horizon;
    opt.seed = seed;
    opt.threads = threads;
    opt.draws = draws;
    const TableResult r = run_table(parse_table_id(id), opt);
    emit(out, r.csv());
    for (const auto& row : r.rows) {
        if (row.status == "error") {
            std::cerr << "error: " << row.row << " " << row.column << ": " << row.message << '\n';
        }
    }
    return r.failures > 0 ? kExitCellFailure : 0;
}

int cmd_simulate(const std::string& config, const std::string& out_override, std::optional<int> threads) {
    ExperimentConfig cfg = parse_experiment(load_json_file(config));
    if (threads) cfg.threads = *threads;
    const ExperimentResult r = run_experiment(cfg);
    emit(out_override.empty() ? cfg.output : out_override, r.csv);
    std::cerr << "cells=" << cfg.cells.size() << " rows=" << r.result_rows << " aggregates=" << r.aggregate_rows
              << " failures=" << r.failures << '\n';
    for (const auto& line : r.log) std::cerr << "error: " << line << '\n';
    return r.exit_code() ? kExitCellFailure : 0;
}

int cmd_scaling(const std::string& config, const std::string& out_override) {
    const ScalingStudyConfig cfg = parse_scaling(load_json_file(config));
    const ScalingResult r = scaling_study(cfg);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    emit(out_override.empty() ? cfg.output : out_override, r.csv());
    return 0;
}

int cmd_sweep(const std::string& dist_arg, double rho, const std::string& policy, const std::vector<double>& Ks,
              double horizon, std::uint64_t seed, int threads, const std::string& out) {
    const Distribution d = parse_distribution_arg(dist_arg);
    const SweepResult r = threshold_sweep(d, rho, parse_policy_kind(policy), Ks, horizon * d.mean(), seed, threads);
    std::cerr << "reference_K=" << format_number(r.reference_K) << '\n';
    emit(out, r.csv());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qsched: size-based scheduling experiments for single- and multi-server queues"};
    app.require_subcommand(1);

    std::string dist = "exp:1", policy, mode, out, config, table_id, thr_mode = "tail_power";
    double rho = 0.9, delta = 0.05, horizon = 1e7;
    std::optional<double> K, table_horizon;
    std::optional<int> sim_threads;
    std::uint64_t seed = 1;
    int threads = 1;
    std::size_t draws = 1'000'000;
    std::vector<double> Ks;

    auto* thr = app.add_subcommand("threshold", "class threshold and derived class parameters");
    thr->add_option("--dist", dist, "service law, e.g. exp:1, pareto:2.5, weibull:1.5, or a JSON literal");
    thr->add_option("--rho", rho, "traffic intensity")->required();
    thr->add_option("--delta", delta, "threshold exponent slack");
    thr->add_option("--mode", thr_mode, "tail_power or quantile");

    auto* ana = app.add_subcommand("analytic", "closed-form mean number in system");
    ana->add_option("--policy", policy, "fcfs, sjf, srpt, two_class_np, two_class_p, two_class_sp")->required();
    ana->add_option("--dist", dist, "service law");
    ana->add_option("--rho", rho, "traffic intensity")->required();
    ana->add_option("--K", K, "threshold (defaults to the tail-power rule)");
    ana->add_option("--delta", delta, "threshold exponent slack");

    auto* tab = app.add_subcommand("table", "reproduce one of the reference tables as long-format CSV");
    tab->add_option("id", table_id, "T1..T10")->required();
    tab->add_option("--mode", mode, "simulate, analytic or both");
    tab->add_option("--horizon", table_horizon, "horizon in units of the mean service time");
    tab->add_option("--seed", seed, "master seed");
    tab->add_option("--threads", threads, "worker threads");
    tab->add_option("--draws", draws, "Monte Carlo draws for metric tables");
    tab->add_option("--out", out, "output CSV (stdout when omitted)");

    auto* sim = app.add_subcommand("simulate", "run an experiment config");
    sim->add_option("--config", config, "experiment JSON")->required();
    sim->add_option("--out", out, "output CSV (overrides the config)");
    sim->add_option("--threads", sim_threads, "worker threads (overrides the config)");

    auto* sca = app.add_subcommand("scaling", "heavy-traffic scaling study");
    sca->add_option("--config", config, "scaling JSON")->required();
    sca->add_option("--out", out, "output CSV (overrides the config)");

    auto* swp = app.add_subcommand("sweep", "mean number in system across a threshold grid");
    swp->add_option("--dist", dist, "service law");
    swp->add_option("--rho", rho, "traffic intensity")->required();
    swp->add_option("--policy", policy, "two-class policy")->required();
    swp->add_option("--K", Ks, "threshold grid (default: nine points on [K*/2, 2K*])")->delimiter(',');
    swp->add_option("--horizon", horizon, "horizon in units of the mean service time");
    swp->add_option("--seed", seed, "master seed");
    swp->add_option("--threads", threads, "worker threads");
    swp->add_option("--out", out, "output CSV (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfigError;
    }

    try {
        if (*thr) return cmd_threshold(dist, rho, delta, thr_mode);
        if (*ana) return cmd_analytic(policy, dist, rho, K, delta);
        if (*tab) return cmd_table(table_id, mode, table_horizon, seed, threads, draws, out);
        if (*sim) return cmd_simulate(config, out, sim_threads);
        if (*sca) return cmd_scaling(config, out);
        if (*swp) return cmd_sweep(dist, rho, policy, Ks, horizon, seed, threads, out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const DomainError& e) {
        std::cerr << "domain error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCellFailure;
    }
    return 0;
}
