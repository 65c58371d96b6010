#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <vector>

#include "qsched/error.hpp"

namespace qsched {

struct QuadratureOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-14;
    int max_depth = 48;
    std::size_t max_evaluations = 20'000'000;
};

namespace detail {

template <class F>
struct SimpsonState {
    F& f;
    const QuadratureOptions& opts;
    std::size_t evaluations = 0;
    std::size_t unconverged = 0;
    double worst_error = 0.0;
    double worst_a = 0.0;
    double worst_b = 0.0;

    double eval(double x) {
        ++evaluations;
        return f(x);
    }

    double recurse(double a, double b, double fa, double fm, double fb, double whole, double tol, int depth) {
        const double m = 0.5 * (a + b);
        const double lm = 0.5 * (a + m);
        const double rm = 0.5 * (m + b);
        const double flm = eval(lm);
        const double frm = eval(rm);
        const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        const double delta = left + right - whole;
        if (std::abs(delta) <= 15.0 * tol || !std::isfinite(delta)) {
            return left + right + delta / 15.0;
        }
        if (depth <= 0 || evaluations >= opts.max_evaluations || m <= a || b <= m) {
            ++unconverged;
            if (std::abs(delta) > worst_error) {
                worst_error = std::abs(delta);
                worst_a = a;
                worst_b = b;
            }
            return left + right + delta / 15.0;
        }
        return recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
               recurse(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    }
};

}  // namespace detail

/// Adaptive Simpson with Richardson correction over [a, b].
///
/// The tolerance is max(abs_tol, rel_tol * |coarse estimate|) where the coarse
/// estimate comes from a 16-panel composite rule, so narrow spikes that a
/// single initial panel would miss are still resolved. Throws NumericalError
/// when any subinterval exhausts the depth budget without converging.
template <class F>
double adaptive_simpson(F&& f, double a, double b, const QuadratureOptions& opts = {}) {
    if (a == b) return 0.0;
    if (b < a) return -adaptive_simpson(f, b, a, opts);
    detail::SimpsonState<F> state{f, opts};

    constexpr int panels = 16;
    const double h = (b - a) / panels;
    std::vector<double> xs(2 * panels + 1);
    std::vector<double> fs(2 * panels + 1);
    for (int i = 0; i <= 2 * panels; ++i) {
        xs[i] = (i == 2 * panels) ? b : a + 0.5 * h * i;
        fs[i] = state.eval(xs[i]);
    }
    double coarse = 0.0;
    for (int p = 0; p < panels; ++p) {
        coarse += (xs[2 * p + 2] - xs[2 * p]) / 6.0 * (fs[2 * p] + 4.0 * fs[2 * p + 1] + fs[2 * p + 2]);
    }
    const double tol = std::max(opts.abs_tol, opts.rel_tol * std::abs(coarse)) / panels;

    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double pa = xs[2 * p];
        const double pb = xs[2 * p + 2];
        const double whole = (pb - pa) / 6.0 * (fs[2 * p] + 4.0 * fs[2 * p + 1] + fs[2 * p + 2]);
        total += state.recurse(pa, pb, fs[2 * p], fs[2 * p + 1], fs[2 * p + 2], whole, tol, opts.max_depth);
    }
    if (state.unconverged > 0 || !std::isfinite(total)) {
        std::ostringstream msg;
        msg << "adaptive_simpson: " << state.unconverged << " subinterval(s) did not converge on [" << a << ", "
            << b << "]; worst error estimate " << state.worst_error << " on [" << state.worst_a << ", "
            << state.worst_b << "], " << state.evaluations << " evaluations, result " << total;
        throw NumericalError(msg.str());
    }
    return total;
}

/// Integrates piecewise over consecutive breakpoints (sorted, at least two).
template <class F>
double integrate_piecewise(F&& f, std::span<const double> breakpoints, const QuadratureOptions& opts = {}) {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
        if (breakpoints[i + 1] > breakpoints[i]) {
            total += adaptive_simpson(f, breakpoints[i], breakpoints[i + 1], opts);
        }
    }
    return total;
}

}  // namespace qsched
