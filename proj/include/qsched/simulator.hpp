#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <queue>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "qsched/distributions.hpp"
#include "qsched/error.hpp"
#include "qsched/event_queue.hpp"
#include "qsched/policy.hpp"
#include "qsched/prediction.hpp"
#include "qsched/random.hpp"

namespace qsched {

enum class JobClass : std::uint8_t { None, C1, C2 };

struct Job {
    std::int64_t index = -1;
    double arrival = 0.0;
    double size = 0.0;
    double predicted = 0.0;
    JobClass class_label = JobClass::None;    // scheduling class (mutable only under TwoClassSP)
    JobClass arrival_class = JobClass::None;  // reporting class, fixed at arrival
    double attained = 0.0;
    double remaining = 0.0;
};

/// A job for a deterministic, hand-written arrival sequence.
struct ScriptedJob {
    double arrival = 0.0;
    double size = 0.0;
    double predicted = -1.0;  // negative means "same as size"
};

/// Read-only hooks into a running simulation. Work queries are O(number in system).
class SimObserver {
public:
    virtual ~SimObserver() = default;
    /// Called after each event has been processed.
    virtual void on_event(double /*time*/, EventKind /*kind*/, std::int64_t /*job_index*/,
                          std::size_t /*in_system*/, double /*unfinished_work*/) {}
    virtual void on_arrival(const Job& /*job*/) {}
    virtual void on_completion(const Job& /*job*/, double /*time*/) {}
    /// Preemption of the job in service.
    virtual void on_preempt(const Job& /*job*/, double /*time*/) {}
    virtual bool wants_unfinished_work() const { return false; }
};

struct SimInput {
    std::optional<Distribution> interarrival;  // nullopt: no arrivals
    std::optional<Distribution> service;       // unused by feature and gamma-item models
    PredictionModel model = Exact{};
    PolicySpec policy;
    std::optional<double> K;  // overrides the policy's threshold spec
    ThresholdLaw threshold_law = ThresholdLaw::Predicted;
    std::optional<double> mean_size;  // overrides E[v] for the stability check
    std::vector<ScriptedJob> script;  // when non-empty, replaces the stochastic source
};

struct SimOptions {
    double horizon = 1e7;
    double warmup_fraction = 0.0;
    int batches = 32;
    std::optional<double> label_threshold;  // per-class reporting for classless policies
    std::ostream* trace = nullptr;
    SimObserver* observer = nullptr;
};

struct SimSummary {
    std::string policy;
    int servers = 1;
    double lambda = 0.0;
    double rho = 0.0;
    std::optional<double> K;
    double horizon = 0.0;
    double warmup = 0.0;
    double mean_number_in_system = 0.0;
    double ci_halfwidth_L = 0.0;
    bool has_classes = false;
    double mean_number_c1 = 0.0;
    double mean_number_c2 = 0.0;
    double mean_sojourn_all = 0.0;
    double ci_halfwidth_W = 0.0;
    double mean_sojourn_c1 = 0.0;
    double ci_halfwidth_W1 = 0.0;
    double mean_sojourn_c2 = 0.0;
    double ci_halfwidth_W2 = 0.0;
    std::uint64_t completed_jobs = 0;
    std::uint64_t completed_c1 = 0;
    std::uint64_t completed_c2 = 0;
    std::uint64_t arrivals = 0;
    std::uint64_t events = 0;
    std::uint64_t clamped_predictions = 0;
    std::uint64_t in_system_at_end = 0;

    double little_residual() const {
        const double span = horizon - warmup;
        if (!(mean_number_in_system > 0.0) || span <= 0.0) return 0.0;
        const double lambda_eff = static_cast<double>(completed_jobs) / span;
        return std::abs(mean_number_in_system - lambda_eff * mean_sojourn_all) / mean_number_in_system;
    }

    friend bool operator==(const SimSummary&, const SimSummary&) = default;
};

struct WaitingTimeStats {
    double all = 0.0;
    std::optional<double> class1;
    std::optional<double> class2;
};

inline WaitingTimeStats waiting_time_stats(const SimSummary& s) {
    WaitingTimeStats w;
    w.all = s.mean_sojourn_all;
    if (s.has_classes) {
        if (s.completed_c1 > 0) w.class1 = s.mean_sojourn_c1;
        if (s.completed_c2 > 0) w.class2 = s.mean_sojourn_c2;
    }
    return w;
}

namespace detail {

inline std::string fmt_num(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

inline const std::vector<std::string>& sim_summary_columns() {
    static const std::vector<std::string> cols = {
        "policy",          "servers",         "lambda",          "rho",           "K",
        "horizon",         "warmup",          "mean_number_in_system",            "ci_halfwidth_L",
        "mean_number_c1",  "mean_number_c2",  "mean_sojourn_all", "ci_halfwidth_W", "mean_sojourn_c1",
        "ci_halfwidth_W1", "mean_sojourn_c2", "ci_halfwidth_W2", "completed_jobs", "completed_c1",
        "completed_c2",    "arrivals",        "events",          "clamped_predictions", "in_system_at_end",
        "little_residual"};
    return cols;
}

inline std::string sim_summary_header() {
    std::string h;
    for (const auto& c : sim_summary_columns()) {
        if (!h.empty()) h += ',';
        h += c;
    }
    return h;
}

/// One CSV row in the order of sim_summary_columns(); class fields are empty
/// when the run has no class labels.
inline std::string sim_summary_csv_row(const SimSummary& s) {
    using detail::fmt_num;
    auto opt = [&](bool present, double v) { return present ? fmt_num(v) : std::string(); };
    const bool c = s.has_classes;
    std::vector<std::string> f = {s.policy,
                                  std::to_string(s.servers),
                                  fmt_num(s.lambda),
                                  fmt_num(s.rho),
                                  s.K ? fmt_num(*s.K) : std::string(),
                                  fmt_num(s.horizon),
                                  fmt_num(s.warmup),
                                  fmt_num(s.mean_number_in_system),
                                  fmt_num(s.ci_halfwidth_L),
                                  opt(c, s.mean_number_c1),
                                  opt(c, s.mean_number_c2),
                                  fmt_num(s.mean_sojourn_all),
                                  fmt_num(s.ci_halfwidth_W),
                                  opt(c && s.completed_c1 > 0, s.mean_sojourn_c1),
                                  opt(c && s.completed_c1 > 0, s.ci_halfwidth_W1),
                                  opt(c && s.completed_c2 > 0, s.mean_sojourn_c2),
                                  opt(c && s.completed_c2 > 0, s.ci_halfwidth_W2),
                                  std::to_string(s.completed_jobs),
                                  c ? std::to_string(s.completed_c1) : std::string(),
                                  c ? std::to_string(s.completed_c2) : std::string(),
                                  std::to_string(s.arrivals),
                                  std::to_string(s.events),
                                  std::to_string(s.clamped_predictions),
                                  std::to_string(s.in_system_at_end),
                                  fmt_num(s.little_residual())};
    std::string row;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (i) row += ',';
        row += f[i];
    }
    return row;
}

namespace detail {

struct Accum {
    double area = 0.0, area1 = 0.0, area2 = 0.0;
    double soj = 0.0, soj1 = 0.0, soj2 = 0.0;
    std::uint64_t n = 0, n1 = 0, n2 = 0;
};

inline double t_quantile_975(int dof) {
    boost::math::students_t dist(dof);
    return boost::math::quantile(dist, 0.975);
}

// Half-width of the batch means interval for ratio-free per-batch values.
inline double batch_halfwidth(const std::vector<double>& xs) {
    const int b = static_cast<int>(xs.size());
    if (b < 2) return std::numeric_limits<double>::quiet_NaN();
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= b;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (b - 1));
    return t_quantile_975(b - 1) * sd / std::sqrt(static_cast<double>(b));
}

/// Shared state: job pool, event list, arrival source and statistics.
class EngineBase {
public:
    EngineBase(const SimInput& in, const SimOptions& opt, StreamSeeds seeds, std::optional<double> K, double lambda,
               double rho)
        : in_(in),
          opt_(opt),
          K_(K),
          model_(K ? bind_threshold(in.model, *K) : in.model),
          service_(in.service ? &*in.service : nullptr),
          arrival_rng_(seeds.stream("arrival")),
          pred_streams_(PredictionStreams::from(seeds)),
          lambda_(lambda),
          rho_(rho) {
        t0_ = opt.warmup_fraction * opt.horizon;
        batch_len_ = (opt.horizon - t0_) / opt.batches;
        batches_.resize(static_cast<std::size_t>(opt.batches));
        two_class_ = is_two_class(in.policy.kind);
        labelled_ = two_class_ || opt.label_threshold.has_value();
        label_K_ = two_class_ ? *K : opt.label_threshold.value_or(0.0);
    }

protected:
    // ---- job pool -------------------------------------------------------
    std::int32_t alloc_job() {
        if (!free_jobs_.empty()) {
            const std::int32_t s = free_jobs_.back();
            free_jobs_.pop_back();
            return s;
        }
        jobs_.push_back({});
        live_.push_back(false);
        return static_cast<std::int32_t>(jobs_.size() - 1);
    }
    void free_job(std::int32_t s) {
        live_[static_cast<std::size_t>(s)] = false;
        free_jobs_.push_back(s);
    }
    Job& job(std::int32_t s) { return jobs_[static_cast<std::size_t>(s)]; }

    // ---- arrivals -------------------------------------------------------
    void schedule_first_arrival() {
        if (!in_.script.empty()) {
            events_.schedule(in_.script[0].arrival, EventKind::Arrival);
        } else if (in_.interarrival) {
            events_.schedule(in_.interarrival->sample(arrival_rng_), EventKind::Arrival);
        }
    }

    /// Materializes the next job and schedules the following arrival.
    std::int32_t make_arrival() {
        const std::int32_t s = alloc_job();
        Job& j = job(s);
        j = Job{};
        j.index = static_cast<std::int64_t>(arrivals_);
        j.arrival = now_;
        if (!in_.script.empty()) {
            const auto& sj = in_.script[arrivals_];
            j.size = sj.size;
            j.predicted = sj.predicted < 0.0 ? sj.size : sj.predicted;
            if (arrivals_ + 1 < in_.script.size()) {
                events_.schedule(in_.script[arrivals_ + 1].arrival, EventKind::Arrival);
            }
        } else {
            const auto d = draw(model_, service_, pred_streams_);
            j.size = d.true_size;
            j.predicted = d.predicted_size;
            if (d.clamped) ++clamped_;
            events_.schedule(now_ + in_.interarrival->sample(arrival_rng_), EventKind::Arrival);
        }
        j.remaining = j.size;
        if (labelled_) {
            j.arrival_class = j.predicted <= label_K_ ? JobClass::C1 : JobClass::C2;
        }
        if (two_class_) j.class_label = j.arrival_class;
        live_[static_cast<std::size_t>(s)] = true;
        ++arrivals_;
        ++n_;
        if (j.arrival_class == JobClass::C1) ++n1_;
        if (j.arrival_class == JobClass::C2) ++n2_;
        if (opt_.observer) opt_.observer->on_arrival(j);
        return s;
    }

    void record_completion(std::int32_t s) {
        Job& j = job(s);
        j.remaining = 0.0;
        --n_;
        if (j.arrival_class == JobClass::C1) --n1_;
        if (j.arrival_class == JobClass::C2) --n2_;
        if (accumulating_) {
            const double w = now_ - j.arrival;
            Accum& b = batches_[current_batch_];
            total_.soj += w;
            b.soj += w;
            ++total_.n;
            ++b.n;
            if (j.arrival_class == JobClass::C1) {
                total_.soj1 += w;
                b.soj1 += w;
                ++total_.n1;
                ++b.n1;
            } else if (j.arrival_class == JobClass::C2) {
                total_.soj2 += w;
                b.soj2 += w;
                ++total_.n2;
                ++b.n2;
            }
        }
        if (opt_.observer) opt_.observer->on_completion(j, now_);
        free_job(s);
    }

    // ---- time and statistics -------------------------------------------
    void accumulate_to(double t) {
        const double dt = t - last_;
        if (dt > 0.0 && accumulating_) {
            const double a = dt * static_cast<double>(n_);
            const double a1 = dt * static_cast<double>(n1_);
            const double a2 = dt * static_cast<double>(n2_);
            Accum& b = batches_[current_batch_];
            total_.area += a;
            total_.area1 += a1;
            total_.area2 += a2;
            b.area += a;
            b.area1 += a1;
            b.area2 += a2;
        }
        last_ = t;
    }

    void schedule_ticks() {
        if (t0_ > 0.0) {
            events_.schedule(t0_, EventKind::MeasurementTick, -1, -1);
        } else {
            accumulating_ = true;
        }
        for (int i = 1; i <= opt_.batches; ++i) {
            const double t = i == opt_.batches ? opt_.horizon : t0_ + batch_len_ * i;
            events_.schedule(t, EventKind::MeasurementTick, -1, i);
        }
    }

    /// Returns true when the final tick fired.
    bool handle_tick(const Event& ev) {
        if (ev.job < 0) {
            accumulating_ = true;
            return false;
        }
        if (ev.job >= opt_.batches) return true;
        current_batch_ = static_cast<std::size_t>(ev.job);
        return false;
    }

    void emit(const Event& ev, std::int64_t job_index, double work) {
        ++events_processed_;
        if (opt_.trace) {
            *opt_.trace << fmt_num(ev.time) << ',' << event_kind_name(ev.kind) << ',' << job_index << ',' << n_
                        << '\n';
        }
        if (opt_.observer) opt_.observer->on_event(ev.time, ev.kind, job_index, n_, work);
    }

    bool wants_work() const { return opt_.observer && opt_.observer->wants_unfinished_work(); }

    SimSummary summarize() const {
        SimSummary s;
        s.policy = std::string(policy_name(in_.policy.kind));
        s.servers = in_.policy.servers;
        s.lambda = lambda_;
        s.rho = rho_;
        s.K = K_;
        s.horizon = opt_.horizon;
        s.warmup = t0_;
        const double span = opt_.horizon - t0_;
        s.mean_number_in_system = total_.area / span;
        s.has_classes = labelled_;
        if (labelled_) {
            s.mean_number_c1 = total_.area1 / span;
            s.mean_number_c2 = total_.area2 / span;
        }
        s.completed_jobs = total_.n;
        s.completed_c1 = total_.n1;
        s.completed_c2 = total_.n2;
        s.mean_sojourn_all = total_.n ? total_.soj / static_cast<double>(total_.n) : 0.0;
        s.mean_sojourn_c1 = total_.n1 ? total_.soj1 / static_cast<double>(total_.n1) : 0.0;
        s.mean_sojourn_c2 = total_.n2 ? total_.soj2 / static_cast<double>(total_.n2) : 0.0;
        std::vector<double> bl, bw, bw1, bw2;
        for (const auto& b : batches_) {
            bl.push_back(b.area / batch_len_);
            if (b.n) bw.push_back(b.soj / static_cast<double>(b.n));
            if (b.n1) bw1.push_back(b.soj1 / static_cast<double>(b.n1));
            if (b.n2) bw2.push_back(b.soj2 / static_cast<double>(b.n2));
        }
        s.ci_halfwidth_L = batch_halfwidth(bl);
        s.ci_halfwidth_W = batch_halfwidth(bw);
        s.ci_halfwidth_W1 = batch_halfwidth(bw1);
        s.ci_halfwidth_W2 = batch_halfwidth(bw2);
        if (!std::isfinite(s.ci_halfwidth_W)) s.ci_halfwidth_W = 0.0;
        if (!std::isfinite(s.ci_halfwidth_W1)) s.ci_halfwidth_W1 = 0.0;
        if (!std::isfinite(s.ci_halfwidth_W2)) s.ci_halfwidth_W2 = 0.0;
        s.arrivals = arrivals_;
        s.events = events_processed_;
        s.clamped_predictions = clamped_;
        s.in_system_at_end = n_;
        return s;
    }

    const SimInput& in_;
    const SimOptions& opt_;
    std::optional<double> K_;
    PredictionModel model_;
    const Distribution* service_;
    RandomStream arrival_rng_;
    PredictionStreams pred_streams_;
    double lambda_;
    double rho_;

    EventQueue events_;
    std::vector<Job> jobs_;
    std::vector<bool> live_;
    std::vector<std::int32_t> free_jobs_;
    double now_ = 0.0;
    double last_ = 0.0;
    double t0_ = 0.0;
    double batch_len_ = 0.0;
    bool accumulating_ = false;
    bool two_class_ = false;
    bool labelled_ = false;
    double label_K_ = 0.0;
    std::size_t current_batch_ = 0;
    std::vector<Accum> batches_;
    Accum total_;
    std::uint64_t n_ = 0, n1_ = 0, n2_ = 0;
    std::uint64_t arrivals_ = 0;
    std::uint64_t clamped_ = 0;
    std::uint64_t events_processed_ = 0;
};

// ---- waiting-room disciplines ------------------------------------------

class FifoRoom {
public:
    void push(std::int32_t s, const Job&) { q_.push_back(s); }
    void push_front(std::int32_t s, const Job&) { q_.push_front(s); }
    bool empty() const { return q_.empty(); }
    std::int32_t pop() {
        const std::int32_t s = q_.front();
        q_.pop_front();
        return s;
    }

private:
    std::deque<std::int32_t> q_;
};

// Min-heap on (key, arrival, index). `ByRemaining` selects remaining work, otherwise predicted size.
template <bool ByRemaining>
class KeyedRoom {
public:
    void push(std::int32_t s, const Job& j) { q_.push({ByRemaining ? j.remaining : j.predicted, j.arrival, j.index, s}); }
    void push_front(std::int32_t s, const Job& j) { push(s, j); }
    bool empty() const { return q_.empty(); }
    std::int32_t pop() {
        const std::int32_t s = std::get<3>(q_.top());
        q_.pop();
        return s;
    }

private:
    using Key = std::tuple<double, double, std::int64_t, std::int32_t>;
    std::priority_queue<Key, std::vector<Key>, std::greater<Key>> q_;
};

class TwoClassRoom {
public:
    void push(std::int32_t s, const Job& j) { (j.class_label == JobClass::C1 ? c1_ : c2_).push_back(s); }
    // A preempted job was the head of its class, so it goes back to the front.
    void push_front(std::int32_t s, const Job& j) { (j.class_label == JobClass::C1 ? c1_ : c2_).push_front(s); }
    bool empty() const { return c1_.empty() && c2_.empty(); }
    std::int32_t pop() {
        auto& q = c1_.empty() ? c2_ : c1_;
        const std::int32_t s = q.front();
        q.pop_front();
        return s;
    }

private:
    std::deque<std::int32_t> c1_, c2_;
};

/// Engine for disciplines that serve one job per server at a time.
template <class Room, PolicyKind Kind>
class ServerEngine : public EngineBase {
public:
    using EngineBase::EngineBase;

    SimSummary run() {
        servers_.assign(static_cast<std::size_t>(in_.policy.servers), Server{});
        for (int i = in_.policy.servers - 1; i >= 0; --i) idle_.push_back(i);
        schedule_ticks();
        schedule_first_arrival();
        while (!events_.empty()) {
            if (events_.top().time > opt_.horizon) break;
            const Event ev = events_.pop();
            accumulate_to(ev.time);
            now_ = ev.time;
            std::int64_t job_index = -1;
            bool done = false;
            switch (ev.kind) {
                case EventKind::Arrival: job_index = on_arrival(); break;
                case EventKind::ServiceCompletion: job_index = on_completion(ev.server); break;
                case EventKind::Reclassification: job_index = on_reclassify(ev.server); break;
                case EventKind::MeasurementTick: done = handle_tick(ev); break;
                case EventKind::FBLevelChange: break;
            }
            emit(ev, job_index, wants_work() ? unfinished_work() : 0.0);
            if (done) break;
        }
        accumulate_to(opt_.horizon);
        return summarize();
    }

private:
    struct Server {
        std::int32_t job = -1;
        double seg_start = 0.0;
        double seg_remaining = 0.0;
        EventHandle completion;
        EventHandle reclass;
    };

    static constexpr bool preemptive = Kind == PolicyKind::SRPT || Kind == PolicyKind::TwoClassP ||
                                       Kind == PolicyKind::TwoClassSP;

    double unfinished_work() const {
        double w = 0.0;
        for (std::size_t i = 0; i < jobs_.size(); ++i) {
            if (live_[i]) w += jobs_[i].remaining;
        }
        for (const auto& sv : servers_) {
            if (sv.job >= 0) {
                const double elapsed = now_ - sv.seg_start;
                w -= jobs_[static_cast<std::size_t>(sv.job)].remaining - (sv.seg_remaining - elapsed);
            }
        }
        return w;
    }

    void start(std::int32_t server, std::int32_t s) {
        Server& sv = servers_[static_cast<std::size_t>(server)];
        Job& j = job(s);
        sv.job = s;
        sv.seg_start = now_;
        sv.seg_remaining = j.remaining;
        sv.completion = events_.schedule(now_ + j.remaining, EventKind::ServiceCompletion, server, s);
        if constexpr (Kind == PolicyKind::TwoClassSP) {
            if (j.class_label == JobClass::C2) {
                const double until = (j.predicted - j.attained) - *K_;
                if (until < j.remaining) {
                    sv.reclass = events_.schedule(now_ + std::max(until, 0.0), EventKind::Reclassification, server, s);
                }
            }
        }
    }

    // Brings the in-service job's attained/remaining up to now.
    void materialize(Server& sv) {
        Job& j = job(sv.job);
        const double elapsed = now_ - sv.seg_start;
        j.attained += elapsed;
        j.remaining = std::max(sv.seg_remaining - elapsed, 0.0);
        sv.seg_start = now_;
        sv.seg_remaining = j.remaining;
    }

    bool preempts(const Job& arriving, Server& sv) {
        const Job& cur = job(sv.job);
        if constexpr (Kind == PolicyKind::SRPT) {
            const double cur_rem = sv.seg_remaining - (now_ - sv.seg_start);
            return arriving.remaining < cur_rem;
        } else if constexpr (Kind == PolicyKind::TwoClassP || Kind == PolicyKind::TwoClassSP) {
            return arriving.class_label == JobClass::C1 && cur.class_label == JobClass::C2;
        } else {
            return false;
        }
    }

    std::int64_t on_arrival() {
        const std::int32_t s = make_arrival();
        const Job& j = job(s);
        if (!idle_.empty()) {
            const int server = idle_.back();
            idle_.pop_back();
            start(server, s);
        } else if constexpr (preemptive) {
            Server& sv = servers_[0];
            if (preempts(j, sv)) {
                materialize(sv);
                events_.cancel(sv.completion);
                events_.cancel(sv.reclass);
                const std::int32_t old = sv.job;
                if (opt_.observer) opt_.observer->on_preempt(job(old), now_);
                room_.push_front(old, job(old));
                start(0, s);
            } else {
                room_.push(s, j);
            }
        } else {
            room_.push(s, j);
        }
        return j.index;
    }

    std::int64_t on_completion(std::int32_t server) {
        Server& sv = servers_[static_cast<std::size_t>(server)];
        const std::int32_t s = sv.job;
        Job& j = job(s);
        j.attained += now_ - sv.seg_start;
        events_.cancel(sv.reclass);
        const std::int64_t idx = j.index;
        record_completion(s);
        sv.job = -1;
        if (!room_.empty()) {
            start(server, room_.pop());
        } else {
            idle_.push_back(server);
        }
        return idx;
    }

    std::int64_t on_reclassify(std::int32_t server) {
        Server& sv = servers_[static_cast<std::size_t>(server)];
        Job& j = job(sv.job);
        j.class_label = JobClass::C1;
        return j.index;
    }

    Room room_;
    std::vector<Server> servers_;
    std::vector<int> idle_;
};

/// Foreground-background: the jobs with the least attained service share the server.
///
/// Jobs with equal attained service form a group; groups sit on a stack whose
/// top has the lowest level and is the one being served. Within a group a
/// min-heap on size gives the next completion. When the top group's level
/// reaches the level of the group below it the two merge.
class FBEngine : public EngineBase {
public:
    using EngineBase::EngineBase;

    SimSummary run() {
        schedule_ticks();
        schedule_first_arrival();
        while (!events_.empty()) {
            if (events_.top().time > opt_.horizon) break;
            const Event ev = events_.pop();
            accumulate_to(ev.time);
            advance_level(ev.time);
            now_ = ev.time;
            std::int64_t job_index = -1;
            bool done = false;
            switch (ev.kind) {
                case EventKind::Arrival: job_index = on_arrival(); break;
                case EventKind::ServiceCompletion: job_index = on_completion(); break;
                case EventKind::FBLevelChange: on_level_change(); break;
                case EventKind::MeasurementTick: done = handle_tick(ev); break;
                case EventKind::Reclassification: break;
            }
            emit(ev, job_index, wants_work() ? unfinished_work() : 0.0);
            if (done) break;
        }
        accumulate_to(opt_.horizon);
        return summarize();
    }

    static constexpr double kMergeTolerance = 1e-12;

private:
    struct Entry {
        double size;
        std::int64_t index;
        std::int32_t slot;
        bool operator>(const Entry& o) const { return size > o.size || (size == o.size && index > o.index); }
    };
    struct Group {
        double level = 0.0;
        std::vector<Entry> heap;  // min-heap via std::greater
    };

    static bool same_level(double a, double b) {
        return std::abs(a - b) <= kMergeTolerance * std::max({std::abs(a), std::abs(b), 1e-300}) || a == b;
    }

    double unfinished_work() const {
        double w = 0.0;
        for (const auto& g : stack_) {
            for (const auto& e : g.heap) w += e.size - g.level;
        }
        return w;
    }

    void advance_level(double t) {
        if (stack_.empty()) return;
        Group& g = stack_.back();
        g.level += (t - now_) / static_cast<double>(g.heap.size());
    }

    static void heap_push(Group& g, const Entry& e) {
        g.heap.push_back(e);
        std::push_heap(g.heap.begin(), g.heap.end(), std::greater<Entry>());
    }

    void reschedule() {
        events_.cancel(pending_);
        pending_ = {};
        if (stack_.empty()) return;
        const Group& g = stack_.back();
        const double n = static_cast<double>(g.heap.size());
        const double t_done = now_ + std::max(g.heap.front().size - g.level, 0.0) * n;
        if (stack_.size() >= 2) {
            const double t_level = now_ + std::max(stack_[stack_.size() - 2].level - g.level, 0.0) * n;
            if (t_level < t_done) {
                pending_ = events_.schedule(t_level, EventKind::FBLevelChange);
                return;
            }
        }
        pending_ = events_.schedule(t_done, EventKind::ServiceCompletion, 0, g.heap.front().slot);
    }

    std::int64_t on_arrival() {
        const std::int32_t s = make_arrival();
        const Job& j = job(s);
        const Entry e{j.size, j.index, s};
        if (!stack_.empty() && same_level(stack_.back().level, 0.0)) {
            heap_push(stack_.back(), e);
        } else {
            Group g;
            g.level = 0.0;
            g.heap.push_back(e);
            stack_.push_back(std::move(g));
        }
        reschedule();
        return j.index;
    }

    std::int64_t on_completion() {
        Group& g = stack_.back();
        std::pop_heap(g.heap.begin(), g.heap.end(), std::greater<Entry>());
        const Entry e = g.heap.back();
        g.heap.pop_back();
        g.level = e.size;
        Job& j = job(e.slot);
        j.attained = j.size;
        record_completion(e.slot);
        if (g.heap.empty()) stack_.pop_back();
        merge_equal_levels();
        reschedule();
        return e.index;
    }

    void on_level_change() {
        // The top group has caught up with the one below.
        stack_.back().level = stack_[stack_.size() - 2].level;
        merge_equal_levels();
        reschedule();
    }

    void merge_equal_levels() {
        while (stack_.size() >= 2 && same_level(stack_.back().level, stack_[stack_.size() - 2].level)) {
            Group top = std::move(stack_.back());
            stack_.pop_back();
            Group& below = stack_.back();
            if (top.heap.size() > below.heap.size()) {
                std::swap(top.heap, below.heap);
            }
            for (const auto& e : top.heap) heap_push(below, e);
        }
    }

    std::vector<Group> stack_;
    EventHandle pending_;
};

}  // namespace detail

/// Runs one simulation. Arrival epochs and job sizes are drawn from named
/// streams in arrival order, so every policy sees the same k-th job.
inline SimSummary run(const SimInput& in, const SimOptions& opt, StreamSeeds seeds) {
    in.policy.validate();
    validate(in.model);
    if (!(opt.horizon > 0.0) || !std::isfinite(opt.horizon)) throw ConfigError("horizon must be positive");
    if (!(opt.warmup_fraction >= 0.0 && opt.warmup_fraction < 1.0)) {
        throw ConfigError("warmup fraction must lie in [0, 1)");
    }
    if (opt.batches < 2) throw ConfigError("at least two batches are required");
    if (!generates_own_sizes(in.model) && !in.service && in.script.empty()) {
        throw ConfigError("a service law is required for this prediction model");
    }
    const Distribution* service = in.service ? &*in.service : nullptr;
    double lambda = 0.0;
    double rho = 0.0;
    if (in.script.empty() && in.interarrival) {
        lambda = 1.0 / in.interarrival->mean();
        const double mean_size = in.mean_size ? *in.mean_size : mean_true_size_or_estimate(in.model, service, 1'000'000);
        rho = lambda * mean_size / in.policy.servers;
        if (!(rho < 1.0)) {
            throw ConfigError("unstable load: rho = " + Distribution::format_double(rho) + " must be below 1");
        }
    }
    for (std::size_t i = 1; i < in.script.size(); ++i) {
        if (in.script[i].arrival < in.script[i - 1].arrival) throw ConfigError("script arrivals must be sorted");
    }
    std::optional<double> K;
    if (is_two_class(in.policy.kind)) {
        if (in.K) {
            K = *in.K;
        } else if (in.policy.threshold->mode == ThresholdMode::Fixed) {
            K = in.policy.threshold->value;
        } else {
            if (!(rho > 0.0)) throw ConfigError("threshold needs a positive load or an explicit K");
            K = resolve_threshold(*in.policy.threshold, in.model, service, rho, in.threshold_law);
        }
    }
    using namespace detail;
    switch (in.policy.kind) {
        case PolicyKind::FCFS: return ServerEngine<FifoRoom, PolicyKind::FCFS>(in, opt, seeds, K, lambda, rho).run();
        case PolicyKind::SJF: return ServerEngine<KeyedRoom<false>, PolicyKind::SJF>(in, opt, seeds, K, lambda, rho).run();
        case PolicyKind::SRPT: return ServerEngine<KeyedRoom<true>, PolicyKind::SRPT>(in, opt, seeds, K, lambda, rho).run();
        case PolicyKind::TwoClassNP:
            return ServerEngine<TwoClassRoom, PolicyKind::TwoClassNP>(in, opt, seeds, K, lambda, rho).run();
        case PolicyKind::TwoClassP:
            return ServerEngine<TwoClassRoom, PolicyKind::TwoClassP>(in, opt, seeds, K, lambda, rho).run();
        case PolicyKind::TwoClassSP:
            return ServerEngine<TwoClassRoom, PolicyKind::TwoClassSP>(in, opt, seeds, K, lambda, rho).run();
        case PolicyKind::FB: return FBEngine(in, opt, seeds, K, lambda, rho).run();
    }
    throw ConfigError("unsupported policy");
}

}  // namespace qsched
