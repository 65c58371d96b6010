#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "qsched/analytics.hpp"
#include "qsched/harness/experiment.hpp"
#include "qsched/harness/tables.hpp"
#include "qsched/prediction.hpp"
#include "qsched/simulator.hpp"

using namespace qsched;
using namespace qsched::harness;

namespace {

class Verdict {
public:
    void abs(const std::string& cell, std::optional<double> got, double expected, double tol) {
        const bool ok = got && std::abs(*got - expected) <= tol;
        record(cell, got, expected, "+-" + num(tol), ok);
    }
    void rel(const std::string& cell, std::optional<double> got, double expected, double tol) {
        const bool ok = got && std::abs(*got - expected) <= tol * std::abs(expected);
        record(cell, got, expected, "+-" + num(100.0 * tol) + "%", ok);
    }
    void require(const std::string& what, bool ok) {
        std::cout << "    " << (ok ? "ok   " : "MISS ") << what << '\n';
        if (!ok) ++misses_;
        ++checks_;
    }
    int misses() const { return misses_; }
    int checks() const { return checks_; }

    static std::string num(double v) {
        std::ostringstream s;
        s.precision(6);
        s << v;
        return s.str();
    }

private:
    void record(const std::string& cell, std::optional<double> got, double expected, const std::string& tol, bool ok) {
        std::cout << "    " << (ok ? "ok   " : "MISS ") << cell << ": got " << (got ? num(*got) : "none")
                  << ", reference " << num(expected) << " " << tol << '\n';
        if (!ok) ++misses_;
        ++checks_;
    }
    int misses_ = 0;
    int checks_ = 0;
};

std::optional<double> value(const TableResult& t, const std::string& row, const std::string& col,
                            const std::string& mode) {
    const auto* r = t.find(row, col, mode);
    if (!r) return std::nullopt;
    return r->value;
}

std::string rho_col(double rho) { return "rho=" + format_number(rho); }

const double kRho4[] = {0.8, 0.85, 0.9, 0.95};

void criterion_1(Verdict& v) {
    TableOptions opt;
    opt.mode = RunMode::Analytic;
    const auto t = run_table(TableId::T1, opt);
    const std::map<std::string, std::vector<double>> ref = {{"fcfs", {4.00, 5.67, 9.00, 19.00}},
                                                            {"two_class_np", {2.68, 3.43, 4.76, 8.19}},
                                                            {"two_class_p", {2.29, 2.94, 4.13, 7.30}},
                                                            {"sjf", {2.31, 2.86, 3.78, 5.95}},
                                                            {"srpt", {1.88, 2.36, 3.20, 5.26}}};
    for (const auto& [policy, vals] : ref) {
        const double tol = policy == "sjf" || policy == "srpt" ? 0.05 : 0.02;
        for (int i = 0; i < 4; ++i) {
            v.abs(policy + " " + rho_col(kRho4[i]), value(t, policy, rho_col(kRho4[i]), "analytic"), vals[i], tol);
        }
    }
}

void criterion_2(Verdict& v) {
    const auto t = run_table(TableId::T3, {});
    struct Row {
        double alpha;
        double fcfs[3], p[3], srpt[3];
    };
    const Row rows[] = {{2.5, {3.68, 8.19, 89.20}, {2.53, 4.43, 21.60}, {1.88, 3.05, 10.54}},
                        {5.0, {2.51, 5.22, 53.26}, {2.32, 4.34, 30.20}, {2.11, 3.83, 23.03}},
                        {7.5, {2.44, 5.05, 51.18}, {2.38, 4.57, 35.91}, {2.20, 4.16, 31.64}},
                        {10.0, {2.42, 5.00, 50.61}, {2.40, 4.70, 39.16}, {2.25, 4.35, 34.81}}};
    const double rhos[] = {0.8, 0.9, 0.99};
    for (const auto& r : rows) {
        const std::string row = "alpha=" + format_number(r.alpha);
        for (int i = 0; i < 3; ++i) {
            const std::string c = rho_col(rhos[i]);
            v.rel(row + " fcfs " + c, value(t, row, "fcfs/" + c, "analytic"), r.fcfs[i], 0.01);
            v.rel(row + " two_class_p " + c, value(t, row, "two_class_p/" + c, "analytic"), r.p[i], 0.01);
            v.rel(row + " srpt " + c, value(t, row, "srpt/" + c, "analytic"), r.srpt[i], 0.02);
        }
    }
}

void criterion_3(Verdict& v) {
    TableOptions opt;
    opt.mode = RunMode::Simulate;
    opt.horizon = 1e7;
    const auto t = run_table(TableId::T4, opt);
    const double p[4][3] = {{0.83, 10.19, 2.86}, {1.07, 15.61, 3.46}, {1.52, 28.98, 4.59}, {2.79, 89.34, 7.68}};
    const double f[4][3] = {{4.58, 6.53, 5.00}, {6.31, 8.47, 6.67}, {9.72, 12.19, 10.00}, {19.82, 22.85, 20.00}};
    const char* classes[] = {"class1", "class2", "all"};
    for (int i = 0; i < 4; ++i) {
        const std::string row = rho_col(kRho4[i]);
        for (int k = 0; k < 3; ++k) {
            const double tol = (k == 1 && kRho4[i] == 0.95) ? 0.10 : 0.05;
            v.rel(row + " two_class_p/" + classes[k],
                  value(t, row, std::string("two_class_p/") + classes[k], "simulate"), p[i][k], tol);
            v.rel(row + " fcfs/" + classes[k], value(t, row, std::string("fcfs/") + classes[k], "simulate"), f[i][k],
                  tol);
        }
    }
}

void criterion_4(Verdict& v) {
    TableOptions opt;
    opt.draws = 1'000'000;
    const auto t = run_table(TableId::T5, opt);
    const double sig[] = {0.25, 0.5, 0.75, 1.0, 1.25, 1.5};
    const double r2[] = {87, 61, 33, 20, 8, 3};
    const double p12[] = {0.011, 0.017, 0.022, 0.026, 0.029, 0.033};
    const double p21[] = {0.324, 0.630, 0.778, 0.837, 0.868, 0.886};
    for (int i = 0; i < 6; ++i) {
        const std::string c = "sigma_e=" + format_number(sig[i]);
        auto r = value(t, "r_squared", c, "monte_carlo");
        if (r) *r *= 100.0;
        v.abs("R^2 (points) " + c, r, r2[i], 2.0);
        v.abs("p12 " + c, value(t, "p12", c, "monte_carlo"), p12[i], 0.02);
        v.abs("p21 " + c, value(t, "p21", c, "monte_carlo"), p21[i], 0.02);
    }
}

void criterion_5(Verdict& v) {
    TableOptions opt;
    opt.mode = RunMode::Simulate;
    opt.horizon = 1e7;
    const char* rows[] = {"two_class_np", "sjf", "fcfs"};
    {
        const auto t = run_table(TableId::T6, opt);
        const double ref[3][3] = {{7.67, 7.92, 8.31}, {6.39, 6.50, 6.96}, {12.00, 12.35, 12.79}};
        const double sig[] = {0.0, 0.25, 0.5};
        for (int r = 0; r < 3; ++r) {
            for (int i = 0; i < 3; ++i) {
                const std::string c = "sigma_e=" + format_number(sig[i]);
                v.rel(std::string("T6 ") + rows[r] + " " + c, value(t, rows[r], c, "simulate"), ref[r][i], 0.10);
            }
        }
    }
    {
        const auto t = run_table(TableId::T7, opt);
        const double ref[3][7] = {{8.36, 9.20, 10.89, 14.32, 20.76, 34.70, 67.58},
                                  {6.52, 6.74, 8.46, 10.09, 14.75, 24.06, 47.18},
                                  {16.82, 18.47, 21.21, 30.67, 46.00, 74.52, 137.54}};
        const double sig[] = {0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5};
        for (int r = 0; r < 3; ++r) {
            for (int i = 0; i < 7; ++i) {
                const std::string c = "sigma_e=" + format_number(sig[i]);
                v.rel(std::string("T7 ") + rows[r] + " " + c, value(t, rows[r], c, "simulate"), ref[r][i], 0.10);
            }
        }
    }
    {
        const auto t = run_table(TableId::T8, opt);
        const double ref[3][4] = {{2.36, 3.20, 4.79, 9.15}, {2.27, 3.00, 4.32, 8.08}, {2.71, 3.69, 5.72, 11.72}};
        for (int r = 0; r < 3; ++r) {
            for (int i = 0; i < 4; ++i) {
                const std::string c = rho_col(kRho4[i]);
                v.rel(std::string("T8 ") + rows[r] + " " + c, value(t, rows[r], c, "simulate"), ref[r][i], 0.10);
            }
        }
    }
}

void criterion_6(Verdict& v) {
    TableOptions opt;
    opt.mode = RunMode::Simulate;
    opt.horizon = 1e7;
    const auto t = run_table(TableId::T9, opt);
    const double fb[2][4] = {{3.22, 4.27, 6.12, 10.43}, {4.64, 6.77, 11.20, 25.30}};
    const char* laws[] = {"pareto", "weibull"};
    for (int l = 0; l < 2; ++l) {
        for (int i = 0; i < 4; ++i) {
            const std::string c = std::string(laws[l]) + "/" + rho_col(kRho4[i]);
            v.rel("fb " + c, value(t, "fb", c, "simulate"), fb[l][i], 0.05);
        }
    }
    for (int l = 0; l < 2; ++l) {
        for (int i = 0; i < 4; ++i) {
            const std::string c = std::string(laws[l]) + "/" + rho_col(kRho4[i]);
            const auto f = value(t, "fb", c, "simulate");
            const auto q = value(t, "fcfs", c, "simulate");
            const bool ok = f && q && (l == 0 ? *f < *q : *f > *q);
            v.require(std::string(l == 0 ? "fb < fcfs " : "fb > fcfs ") + c + " (fb " +
                          (f ? Verdict::num(*f) : "none") + ", fcfs " + (q ? Verdict::num(*q) : "none") + ")",
                      ok);
        }
    }
}

void criterion_7(Verdict& v) {
    TableOptions opt;
    opt.mode = RunMode::Simulate;
    const auto t = run_table(TableId::T10, opt);
    const double ref[2][3][3] = {{{9.64, 15.02, 105.31}, {8.96, 11.87, 37.74}, {8.77, 11.14, 26.72}},
                                 {{80.0, 92.0, 186.4}, {80.0, 90.9, 124.5}, {80.0, 90.7, 114.5}}};
    const char* policies[] = {"fcfs", "two_class_np", "sjf"};
    const int servers[] = {10, 100};
    const double rhos[] = {0.8, 0.9, 0.99};
    for (int s = 0; s < 2; ++s) {
        for (int p = 0; p < 3; ++p) {
            for (int i = 0; i < 3; ++i) {
                const std::string c = "c=" + std::to_string(servers[s]) + "/" + rho_col(rhos[i]);
                const double expected = ref[s][p][i];
                // Cells whose reference equals the offered load c*rho have no queueing.
                const bool no_wait = servers[s] == 100 && std::abs(expected - servers[s] * rhos[i]) < 1e-9;
                v.rel(std::string(policies[p]) + " " + c, value(t, policies[p], c, "simulate"), expected,
                      no_wait ? 0.01 : 0.05);
            }
        }
    }
}

struct WorkObserver : SimObserver {
    std::vector<double> work;
    bool wants_unfinished_work() const override { return true; }
    void on_event(double, EventKind k, std::int64_t, std::size_t, double w) override {
        if (k == EventKind::Arrival) work.push_back(w);
    }
};

SimInput mg1(const Distribution& service, double rho, PolicyKind k) {
    SimInput in;
    in.interarrival = Distribution::exponential(rho / service.mean());
    in.service = service;
    in.policy = PolicySpec::make(k);
    return in;
}

void criterion_8(Verdict& v) {
    const PolicyKind all[] = {PolicyKind::FCFS,       PolicyKind::SJF,       PolicyKind::SRPT, PolicyKind::TwoClassNP,
                              PolicyKind::TwoClassP, PolicyKind::TwoClassSP, PolicyKind::FB};
    const auto svc = Distribution::pareto_unit_mean(2.5);
    std::vector<WorkObserver> obs(std::size(all));
    for (std::size_t i = 0; i < obs.size(); ++i) {
        SimOptions opt;
        opt.horizon = 1e5;
        opt.observer = &obs[i];
        run(mg1(svc, 0.9, all[i]), opt, StreamSeeds::derive(8, "work", 0));
    }
    double worst = 0.0;
    bool same_length = true;
    for (std::size_t i = 1; i < obs.size(); ++i) {
        same_length = same_length && obs[i].work.size() == obs[0].work.size();
        for (std::size_t k = 0; k < std::min(obs[i].work.size(), obs[0].work.size()); ++k) {
            worst = std::max(worst, std::abs(obs[i].work[k] - obs[0].work[k]) / (1.0 + obs[0].work[k]));
        }
    }
    v.require("work-conserving paths agree across 7 policies (worst " + Verdict::num(worst) + ")",
              same_length && worst <= 1e-9);

    double worst_little = 0.0;
    for (PolicyKind k : all) {
        SimOptions opt;
        opt.horizon = 1e6;
        worst_little = std::max(worst_little, run(mg1(svc, 0.8, k), opt, StreamSeeds{81}).little_residual());
    }
    v.require("Little's law residual " + Verdict::num(worst_little) + " <= 0.01", worst_little <= 0.01);

    bool ordered = true;
    for (const auto& d : {Distribution::exponential(1.0), Distribution::pareto_unit_mean(2.5),
                          Distribution::weibull_unit_mean(1.5)}) {
        for (double rho = 0.5; rho < 0.991; rho += 0.01) {
            AnalyticInput in;
            in.service = d;
            in.lambda = rho;
            in.K = threshold(d, rho, ThresholdSpec::tail_power());
            const double np = mq_two_class_np(in), sjf = mq_sjf(in), srpt = mq_srpt(in);
            ordered = ordered && np >= sjf && sjf >= srpt;
        }
    }
    v.require("np >= sjf >= srpt on the load grid", ordered);

    struct Spot {
        Distribution d;
        PolicyKind k;
        double rho;
    };
    const Spot spots[] = {{Distribution::exponential(1.0), PolicyKind::FCFS, 0.8},
                          {Distribution::exponential(1.0), PolicyKind::TwoClassNP, 0.9},
                          {Distribution::weibull_unit_mean(1.5), PolicyKind::TwoClassP, 0.85},
                          {Distribution::exponential(1.0), PolicyKind::SJF, 0.85},
                          {Distribution::weibull_unit_mean(1.5), PolicyKind::SRPT, 0.9},
                          {Distribution::uniform(0.0, 2.0), PolicyKind::TwoClassSP, 0.8}};
    std::uint64_t seed = 800;
    for (const auto& s : spots) {
        SimOptions opt;
        opt.horizon = 2e6;
        opt.warmup_fraction = 0.02;
        const auto sim = run(mg1(s.d, s.rho, s.k), opt, StreamSeeds{seed++});
        AnalyticInput in;
        in.service = s.d;
        in.lambda = s.rho / s.d.mean();
        in.K = sim.K;
        const double L = analytic_mean_number(s.k, in);
        v.require(std::string(policy_name(s.k)) + " " + s.d.describe() + " rho=" + Verdict::num(s.rho) + ": sim " +
                      Verdict::num(sim.mean_number_in_system) + " +- " + Verdict::num(sim.ci_halfwidth_L) +
                      ", analytic " + Verdict::num(L),
                  std::abs(sim.mean_number_in_system - L) <= 3.0 * sim.ci_halfwidth_L);
    }

    bool identical = true;
    for (PolicyKind k : all) {
        SimOptions opt;
        opt.horizon = 5e4;
        const auto a = sim_summary_csv_row(run(mg1(svc, 0.9, k), opt, StreamSeeds::derive(8, "rerun", 1)));
        const auto b = sim_summary_csv_row(run(mg1(svc, 0.9, k), opt, StreamSeeds::derive(8, "rerun", 1)));
        identical = identical && a == b;
    }
    v.require("reruns are byte identical", identical);
}

void criterion_9(Verdict& v) {
    ScalingStudyConfig cfg;
    cfg.beta = 1.0;
    cfg.delta = 0.05;
    cfg.n = {400, 1600, 6400};
    cfg.horizon = {1e7, 2e7, 4e7};
    cfg.service = Distribution::exponential(1.0);
    cfg.validate();
    const auto r = scaling_study(cfg);
    for (const auto& w : r.warnings) std::cout << "    warning: " << w << '\n';
    if (r.rows.size() != cfg.n.size()) {
        v.require("all n completed", false);
        return;
    }
    for (const auto& row : r.rows) {
        std::cout << "    n=" << row.n << " rho_n=" << row.rho_n << " K_n=" << row.K_n << " L=" << row.mean_number
                  << " share1=" << row.class1_share << " scaled=" << row.scaled_queue
                  << " analytic_scaled=" << row.analytic_scaled_queue << " limit=" << row.limit
                  << " W2/sqrt(n)=" << row.scaled_sojourn_c2 << '\n';
    }
    bool dec = true, inc = true;
    for (std::size_t i = 1; i < r.rows.size(); ++i) {
        dec = dec && r.rows[i].class1_share < r.rows[i - 1].class1_share;
        inc = inc && r.rows[i].scaled_sojourn_c2 > r.rows[i - 1].scaled_sojourn_c2;
    }
    v.require("(a) class-1 share strictly decreasing in n", dec);
    const auto& last = r.rows.back();
    v.rel("(b) scaled queue at n=" + Verdict::num(last.n), last.scaled_queue, last.limit, 0.15);
    v.require("(c) scaled class-2 sojourn increasing in n", inc);
}

void criterion_10(Verdict& v) {
    const auto svc = Distribution::exponential(1.0);
    for (PolicyKind k : {PolicyKind::TwoClassNP, PolicyKind::TwoClassP}) {
        SimInput exact = mg1(svc, 0.9, k);
        SimInput noisy = exact;
        BoundedError b;
        b.M = 0.5;
        b.error = Distribution::uniform(-0.5, 0.5);
        noisy.model = b;
        noisy.threshold_law = ThresholdLaw::Service;
        SimOptions opt;
        opt.horizon = 1e7;
        const auto se = run(exact, opt, StreamSeeds::derive(10, "bounded", 0));
        const auto sn = run(noisy, opt, StreamSeeds::derive(10, "bounded", 0));
        v.rel(std::string("bounded error M=0.5, ") + std::string(policy_name(k)) + " rho=0.9",
              sn.mean_number_in_system, se.mean_number_in_system, 0.05);
    }

    const std::vector<double> light_K = {2, 4, 8, 16, 32, 64};
    const auto light = tail_dominance_probe(svc, Distribution::normal(0.0, 0.3), 0.0, light_K);
    const double s_light = log_log_slope(light, 2.0, 64.0);
    v.require("light-tailed error slope " + Verdict::num(s_light) + " >= 0.8", s_light >= 0.8);

    std::vector<double> heavy_K;
    for (double K = 10.0; K <= 1000.0 + 1e-9; K *= std::pow(10.0, 0.25)) heavy_K.push_back(K);
    const auto heavy = tail_dominance_probe(Distribution::pareto_unit_mean(4.0), Distribution::pareto(0.6, 2.5), -1.0,
                                            heavy_K);
    const double s_heavy = log_log_slope(heavy, 100.0, 1000.0 + 1e-6);
    v.require("heavy-tailed error plateau slope " + Verdict::num(s_heavy) + " <= 0.2", s_heavy <= 0.2);
}

struct Criterion {
    int id;
    std::string title;
    double budget_seconds;
    std::function<void(Verdict&)> run;
};

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> c = {
        {1, "M/M/1 policy comparison, closed forms", 10, criterion_1},
        {2, "Pareto shape sweep, closed forms", 60, criterion_2},
        {3, "per-class sojourn times, simulated", 600, criterion_3},
        {4, "prediction quality metrics", 30, criterion_4},
        {5, "prediction-model queues, simulated", 1200, criterion_5},
        {6, "foreground-background comparison", 600, criterion_6},
        {7, "multi-server queues", 1800, criterion_7},
        {8, "property suite", 600, criterion_8},
        {9, "heavy-traffic scaling study", 900, criterion_9},
        {10, "prediction-error asymptotics", 600, criterion_10},
    };
    return c;
}

bool run_criterion(const Criterion& c) {
    std::cout << "criterion " << c.id << ": " << c.title << '\n';
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    bool crashed = false;
    try {
        c.run(v);
    } catch (const std::exception& e) {
        std::cout << "    exception: " << e.what() << '\n';
        crashed = true;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_seconds;
    std::cout << "    runtime " << Verdict::num(secs) << " s (budget " << c.budget_seconds << " s)\n";
    const bool pass = !crashed && in_time && v.misses() == 0 && v.checks() > 0;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.title << "): "
              << (v.checks() - v.misses()) << "/" << v.checks() << " checks"
              << (in_time ? "" : ", over time budget") << (crashed ? ", exception" : "") << std::endl;
    return pass;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks"};
    std::vector<int> only;
    app.add_option("--criterion", only, "criterion number(s) to run (default: all)")->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);
    bool all_pass = true;
    for (const auto& c : criteria()) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        all_pass = run_criterion(c) && all_pass;
    }
    return all_pass ? 0 : 1;
}
