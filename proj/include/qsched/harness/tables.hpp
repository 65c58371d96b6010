#pragma once

#include <charconv>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qsched/analytics.hpp"
#include "qsched/distributions.hpp"
#include "qsched/harness/config.hpp"
#include "qsched/harness/csv.hpp"
#include "qsched/harness/parallel.hpp"
#include "qsched/policy.hpp"
#include "qsched/prediction.hpp"
#include "qsched/simulator.hpp"

namespace qsched::harness {

enum class TableId { T1 = 1, T2, T3, T4, T5, T6, T7, T8, T9, T10 };

inline TableId parse_table_id(std::string_view s) {
    if (!s.empty() && (s[0] == 'T' || s[0] == 't')) s.remove_prefix(1);
    int n = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), n);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || n < 1 || n > 10) {
        throw ConfigError("unknown table id (expected T1..T10)");
    }
    return static_cast<TableId>(n);
}

inline std::string table_name(TableId t) { return "T" + std::to_string(static_cast<int>(t)); }

/// Which mode a table runs in when none is requested.
inline RunMode default_table_mode(TableId t) {
    switch (t) {
        case TableId::T1:
        case TableId::T3: return RunMode::Analytic;
        case TableId::T4: return RunMode::Both;
        default: return RunMode::Simulate;
    }
}

struct TableOptions {
    std::optional<RunMode> mode;
    std::optional<double> horizon;  // in units of the mean service time
    std::uint64_t seed = 1;
    std::size_t draws = 1'000'000;  // Monte Carlo metric draws
    int threads = 1;
};

struct TableRow {
    std::string table;
    std::string row;
    std::string column;
    std::string mode;  // analytic | simulate | monte_carlo
    std::optional<double> rho;
    std::optional<double> K;
    std::optional<double> value;
    std::optional<double> ci_halfwidth;
    std::string status = "ok";  // ok | analytic-only | no-closed-form | error
    std::string message;
};

inline const std::vector<std::string>& table_columns() {
    static const std::vector<std::string> cols = {"table", "row",          "column", "mode",   "rho",
                                                  "K",     "value",        "ci_halfwidth", "status", "message"};
    return cols;
}

struct TableResult {
    std::vector<TableRow> rows;
    int failures = 0;

    const TableRow* find(std::string_view row, std::string_view column, std::string_view mode) const {
        for (const auto& r : rows) {
            if (r.row == row && r.column == column && r.mode == mode) return &r;
        }
        return nullptr;
    }

    std::string csv() const {
        std::string out = csv_line(table_columns());
        for (const auto& r : rows) {
            out += csv_line({r.table, r.row, r.column, r.mode, format_number(r.rho), format_number(r.K),
                             format_number(r.value), format_number(r.ci_halfwidth), r.status, r.message});
        }
        return out;
    }
};

namespace detail {

inline std::string rho_label(double rho) { return "rho=" + format_number(rho); }

struct TableTask {
    TableRow label;  // used for the error row if run throws
    std::function<std::vector<TableRow>()> run;
};

struct TableContext {
    TableId id;
    RunMode mode;
    TableOptions opt;
    std::vector<TableTask> tasks;

    bool analytic() const { return mode != RunMode::Simulate; }
    bool simulate() const { return mode != RunMode::Analytic; }

    double horizon(double mean_size, double fallback = 1e7) const {
        return (opt.horizon ? *opt.horizon : fallback) * mean_size;
    }

    TableRow base(std::string row, std::string column, std::string mode_name, std::optional<double> rho,
                  std::optional<double> K) const {
        TableRow r;
        r.table = table_name(id);
        r.row = std::move(row);
        r.column = std::move(column);
        r.mode = std::move(mode_name);
        r.rho = rho;
        r.K = K;
        return r;
    }

    void add(TableRow label, std::function<std::vector<TableRow>()> fn) {
        tasks.push_back({std::move(label), std::move(fn)});
    }
};

struct SimCell {
    std::string row, column, cell_id;
    double rho = 0.0;
    double lambda = 0.0;
    int servers = 1;
    std::optional<Distribution> service;
    PredictionModel model = Exact{};
    PolicyKind policy = PolicyKind::FCFS;
    std::optional<double> K;  // two-class only
    ThresholdLaw law = ThresholdLaw::Predicted;
    double mean_size = 1.0;
    double horizon = 1e7;
};

inline SimSummary simulate_cell(const SimCell& c, std::uint64_t master, std::optional<double> label_threshold = {}) {
    SimInput in;
    in.interarrival = Distribution::exponential(c.lambda);
    in.service = c.service;
    in.model = c.model;
    in.policy = PolicySpec::make(c.policy, c.servers);
    if (is_two_class(c.policy)) in.K = c.K;
    in.threshold_law = c.law;
    in.mean_size = c.mean_size;
    SimOptions o;
    o.horizon = c.horizon;
    o.label_threshold = label_threshold;
    return run(in, o, StreamSeeds::derive(master, c.cell_id, 0));
}

/// Adds a simulated mean-number cell.
inline void add_sim(TableContext& ctx, SimCell c) {
    const std::optional<double> K = is_two_class(c.policy) ? c.K : std::nullopt;
    TableRow label = ctx.base(c.row, c.column, "simulate", c.rho, K);
    const std::uint64_t master = ctx.opt.seed;
    ctx.add(label, [label, c, master] {
        const SimSummary s = simulate_cell(c, master);
        TableRow r = label;
        r.value = s.mean_number_in_system;
        r.ci_halfwidth = s.ci_halfwidth_L;
        return std::vector<TableRow>{r};
    });
}

inline void add_analytic(TableContext& ctx, std::string row, std::string column, PolicyKind kind, double rho,
                         const Distribution& service, std::optional<double> K, std::string status = "ok") {
    TableRow label = ctx.base(std::move(row), std::move(column), "analytic", rho, is_two_class(kind) ? K : std::nullopt);
    label.status = std::move(status);
    ctx.add(label, [label, kind, rho, service, K] {
        AnalyticInput in;
        in.lambda = rho / service.mean();
        in.service = service;
        in.K = K;
        TableRow r = label;
        r.value = analytic_mean_number(kind, in);
        return std::vector<TableRow>{r};
    });
}

inline void add_no_closed_form(TableContext& ctx, std::string row, std::string column, double rho,
                               std::optional<double> K) {
    TableRow r = ctx.base(std::move(row), std::move(column), "analytic", rho, K);
    r.status = "no-closed-form";
    ctx.add(r, [r] { return std::vector<TableRow>{r}; });
}

inline const std::vector<double>& rho_grid_4() {
    static const std::vector<double> g = {0.8, 0.85, 0.9, 0.95};
    return g;
}

/// Exact-information cells on a service law: analytic, simulated, or both.
/// `heavy` cells are never simulated.
inline void add_exact_cells(TableContext& ctx, const std::string& row, const std::string& column,
                            const std::string& cell_id, PolicyKind kind, double rho, const Distribution& service,
                            bool heavy = false) {
    const std::optional<double> K =
        is_two_class(kind) ? std::optional<double>(threshold(service, rho, ThresholdSpec::tail_power())) : std::nullopt;
    if (ctx.analytic() || heavy) {
        add_analytic(ctx, row, column, kind, rho, service, K, heavy && !ctx.analytic() ? "analytic-only" : "ok");
    }
    if (ctx.simulate() && !heavy) {
        SimCell c;
        c.row = row;
        c.column = column;
        c.cell_id = cell_id;
        c.rho = rho;
        c.lambda = rho / service.mean();
        c.service = service;
        c.policy = kind;
        c.K = K;
        c.mean_size = service.mean();
        c.horizon = ctx.horizon(service.mean());
        add_sim(ctx, c);
    }
}

inline void build_t1(TableContext& ctx) {
    const auto service = Distribution::exponential(1.0);
    const PolicyKind kinds[] = {PolicyKind::FCFS, PolicyKind::TwoClassNP, PolicyKind::TwoClassP, PolicyKind::SJF,
                                PolicyKind::SRPT};
    for (PolicyKind k : kinds) {
        for (double rho : rho_grid_4()) {
            add_exact_cells(ctx, std::string(policy_name(k)), rho_label(rho), "T1/" + rho_label(rho), k, rho, service);
        }
    }
}

inline void build_t3(TableContext& ctx) {
    const PolicyKind kinds[] = {PolicyKind::FCFS, PolicyKind::TwoClassP, PolicyKind::SRPT};
    for (double alpha : {2.5, 5.0, 7.5, 10.0}) {
        const auto service = Distribution::pareto_unit_mean(alpha);
        const std::string row = "alpha=" + format_number(alpha);
        for (PolicyKind k : kinds) {
            for (double rho : {0.8, 0.9, 0.99}) {
                const std::string col = std::string(policy_name(k)) + "/" + rho_label(rho);
                add_exact_cells(ctx, row, col, "T3/" + row + "/" + rho_label(rho), k, rho, service, rho > 0.95);
            }
        }
    }
}

inline void build_t4(TableContext& ctx) {
    const auto service = Distribution::exponential(1.0);
    for (double rho : rho_grid_4()) {
        const double K = threshold(service, rho, ThresholdSpec::tail_power());
        const std::string row = rho_label(rho);
        for (PolicyKind kind : {PolicyKind::TwoClassP, PolicyKind::FCFS}) {
            const std::string pname(policy_name(kind));
            auto labels = [&](const std::string& mode) {
                std::vector<TableRow> v;
                for (const char* cls : {"class1", "class2", "all"}) v.push_back(ctx.base(row, pname + "/" + cls, mode, rho, K));
                return v;
            };
            if (ctx.analytic()) {
                auto ls = labels("analytic");
                ctx.add(ls[0], [ls, kind, rho, K, service] {
                    AnalyticInput in;
                    in.lambda = rho;
                    in.service = service;
                    in.K = K;
                    const ClassSojourn w = kind == PolicyKind::FCFS ? sojourn_fcfs(in) : sojourn_two_class_p(in);
                    auto out = ls;
                    out[0].value = w.class1;
                    out[1].value = w.class2;
                    out[2].value = w.all;
                    return out;
                });
            }
            if (ctx.simulate()) {
                auto ls = labels("simulate");
                SimCell c;
                c.cell_id = "T4/" + row;
                c.rho = rho;
                c.lambda = rho;
                c.service = service;
                c.policy = kind;
                c.K = K;
                c.horizon = ctx.horizon(1.0);
                const std::uint64_t master = ctx.opt.seed;
                ctx.add(ls[0], [ls, c, master, K] {
                    const SimSummary s = simulate_cell(c, master, K);
                    auto out = ls;
                    out[0].value = s.mean_sojourn_c1;
                    out[0].ci_halfwidth = s.ci_halfwidth_W1;
                    out[1].value = s.mean_sojourn_c2;
                    out[1].ci_halfwidth = s.ci_halfwidth_W2;
                    out[2].value = s.mean_sojourn_all;
                    out[2].ci_halfwidth = s.ci_halfwidth_W;
                    return out;
                });
            }
        }
    }
}

inline void build_t5(TableContext& ctx) {
    constexpr double K = 6.2;
    const std::size_t n = ctx.opt.draws;
    for (double sigma : {0.25, 0.5, 0.75, 1.0, 1.25, 1.5}) {
        const std::string col = "sigma_e=" + format_number(sigma);
        const std::uint64_t seed = StreamSeeds::derive(ctx.opt.seed, "T5/" + col, 0).master;
        std::vector<TableRow> ls = {ctx.base("r_squared", col, "monte_carlo", std::nullopt, K),
                                    ctx.base("p12", col, "monte_carlo", std::nullopt, K),
                                    ctx.base("p21", col, "monte_carlo", std::nullopt, K)};
        ctx.add(ls[0], [ls, sigma, n, seed] {
            const PredictionModel m = example_log_linear(sigma);
            auto out = ls;
            out[0].value = r_squared(m, nullptr, n, seed);
            const auto e = classification_error_rates(m, nullptr, K, n, seed);
            auto binom = [](double p, std::size_t cnt) {
                return cnt > 0 ? 1.959963984540054 * std::sqrt(p * (1.0 - p) / static_cast<double>(cnt)) : 0.0;
            };
            out[1].value = e.p12;
            out[1].ci_halfwidth = binom(e.p12, e.n_class1);
            out[2].value = e.p21;
            out[2].ci_halfwidth = binom(e.p21, e.n_class2);
            return out;
        });
    }
}

/// Prediction-model cells: policies run on predicted sizes with a fixed K.
inline void add_prediction_cells(TableContext& ctx, const std::string& column, const std::string& cell_id,
                                 const PredictionModel& model, double rho, double mean_size, double K,
                                 std::initializer_list<PolicyKind> kinds) {
    for (PolicyKind k : kinds) {
        if (!ctx.simulate()) {
            add_no_closed_form(ctx, std::string(policy_name(k)), column, rho, is_two_class(k) ? std::optional(K) : std::nullopt);
            continue;
        }
        SimCell c;
        c.row = std::string(policy_name(k));
        c.column = column;
        c.cell_id = cell_id;
        c.rho = rho;
        c.lambda = rho / mean_size;
        c.model = model;
        c.policy = k;
        c.K = K;
        c.mean_size = mean_size;
        c.horizon = ctx.horizon(mean_size);
        add_sim(ctx, c);
    }
}

inline void build_t2(TableContext& ctx) {
    const PredictionModel model = example_log_linear(0.5);
    const double mean = *mean_true_size(model, nullptr);
    const double Ks[] = {3.6, 4.0, 4.7, 6.2};
    for (std::size_t i = 0; i < 4; ++i) {
        const double rho = rho_grid_4()[i];
        add_prediction_cells(ctx, rho_label(rho), "T2/" + rho_label(rho), model, rho, mean, Ks[i],
                             {PolicyKind::FCFS, PolicyKind::TwoClassNP, PolicyKind::SJF});
    }
}

inline void build_t6(TableContext& ctx) {
    for (double sigma : {0.0, 0.25, 0.5}) {
        const PredictionModel model = example_linear(sigma);
        const std::string col = "sigma_e=" + format_number(sigma);
        const double mean = mean_true_size_or_estimate(model, nullptr, 10'000'000);
        add_prediction_cells(ctx, col, "T6/" + col, model, 0.95, mean, 1.8,
                             {PolicyKind::TwoClassNP, PolicyKind::SJF, PolicyKind::FCFS});
    }
}

inline void build_t7(TableContext& ctx) {
    for (double sigma : {0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5}) {
        const PredictionModel model = example_log_linear(sigma);
        const std::string col = "sigma_e=" + format_number(sigma);
        add_prediction_cells(ctx, col, "T7/" + col, model, 0.95, *mean_true_size(model, nullptr), 6.5,
                             {PolicyKind::TwoClassNP, PolicyKind::SJF, PolicyKind::FCFS});
    }
}

inline void build_t8(TableContext& ctx) {
    const PredictionModel model = GammaItems{};
    const double mean = *mean_true_size(model, nullptr);
    const double Ks[] = {12.0, 13.0, 14.0, 15.0};
    for (std::size_t i = 0; i < 4; ++i) {
        const double rho = rho_grid_4()[i];
        add_prediction_cells(ctx, rho_label(rho), "T8/" + rho_label(rho), model, rho, mean, Ks[i],
                             {PolicyKind::TwoClassNP, PolicyKind::SJF, PolicyKind::FCFS});
    }
}

inline void build_t9(TableContext& ctx) {
    const std::pair<const char*, Distribution> laws[] = {{"pareto", Distribution::pareto_unit_mean(2.5)},
                                                         {"weibull", Distribution::weibull_unit_mean(1.5)}};
    const PredictionModel noisy = AdditiveIID{Distribution::normal(0.0, 0.3), 0.0, 0.001};
    for (const auto& [name, service] : laws) {
        for (double rho : rho_grid_4()) {
            const std::string col = std::string(name) + "/" + rho_label(rho);
            const double K = threshold(service, rho, ThresholdSpec::tail_power());
            for (PolicyKind k : {PolicyKind::FCFS, PolicyKind::TwoClassNP, PolicyKind::TwoClassP, PolicyKind::FB}) {
                const bool closed = k == PolicyKind::FCFS;
                if (ctx.analytic()) {
                    if (closed) add_analytic(ctx, std::string(policy_name(k)), col, k, rho, service, std::nullopt);
                    else add_no_closed_form(ctx, std::string(policy_name(k)), col, rho, is_two_class(k) ? std::optional(K) : std::nullopt);
                }
                if (!ctx.simulate()) continue;
                SimCell c;
                c.row = std::string(policy_name(k));
                c.column = col;
                c.cell_id = "T9/" + col;
                c.rho = rho;
                c.lambda = rho / service.mean();
                c.service = service;
                c.model = is_two_class(k) ? noisy : PredictionModel{Exact{}};
                c.policy = k;
                c.K = K;
                c.law = ThresholdLaw::Service;
                c.mean_size = service.mean();
                c.horizon = ctx.horizon(service.mean());
                add_sim(ctx, c);
            }
        }
    }
}

inline void build_t10(TableContext& ctx) {
    const auto service = Distribution::exponential(1.0);
    for (int servers : {10, 100}) {
        for (double rho : {0.8, 0.9, 0.99}) {
            const std::string col = "c=" + std::to_string(servers) + "/" + rho_label(rho);
            const double K = threshold(service, rho, ThresholdSpec::tail_power());
            for (PolicyKind k : {PolicyKind::FCFS, PolicyKind::TwoClassNP, PolicyKind::SJF}) {
                if (!ctx.simulate()) {
                    add_no_closed_form(ctx, std::string(policy_name(k)), col, rho, is_two_class(k) ? std::optional(K) : std::nullopt);
                    continue;
                }
                SimCell c;
                c.row = std::string(policy_name(k));
                c.column = col;
                c.cell_id = "T10/" + col;
                c.rho = rho;
                c.lambda = rho * servers;
                c.servers = servers;
                c.service = service;
                c.policy = k;
                c.K = K;
                c.horizon = ctx.horizon(1.0, servers >= 100 ? 1e6 : 1e7);
                add_sim(ctx, c);
            }
        }
    }
}

}  // namespace detail

/// Reproduces one table as long-format rows. Cells run in parallel; rows come
/// back in definition order. A cell that throws becomes an `error` row.
inline TableResult run_table(TableId id, const TableOptions& opt = {}) {
    detail::TableContext ctx{id, opt.mode ? *opt.mode : default_table_mode(id), opt, {}};
    if (opt.horizon && !(*opt.horizon > 0.0)) throw ConfigError("horizon must be positive");
    switch (id) {
        case TableId::T1: detail::build_t1(ctx); break;
        case TableId::T2: detail::build_t2(ctx); break;
        case TableId::T3: detail::build_t3(ctx); break;
        case TableId::T4: detail::build_t4(ctx); break;
        case TableId::T5: detail::build_t5(ctx); break;
        case TableId::T6: detail::build_t6(ctx); break;
        case TableId::T7: detail::build_t7(ctx); break;
        case TableId::T8: detail::build_t8(ctx); break;
        case TableId::T9: detail::build_t9(ctx); break;
        case TableId::T10: detail::build_t10(ctx); break;
    }
    std::vector<std::vector<TableRow>> slots(ctx.tasks.size());
    parallel_for(ctx.tasks.size(), opt.threads, [&](std::size_t i) {
        try {
            slots[i] = ctx.tasks[i].run();
        } catch (const std::exception& e) {
            TableRow r = ctx.tasks[i].label;
            r.status = "error";
            r.message = e.what();
            slots[i] = {r};
        }
    });
    TableResult out;
    for (auto& s : slots) {
        for (auto& r : s) {
            if (r.status == "error") ++out.failures;
            out.rows.push_back(std::move(r));
        }
    }
    return out;
}

}  // namespace qsched::harness
