#pragma once

// Generic ODE drivers: adaptive Dormand-Prince 5(4) and a fixed-step driver
// for one-step propagators. States are fixed-size Eigen column vectors,
// real or complex.

#include "spinphase/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace spinphase {

enum class Method {
    dopri5,              ///< adaptive embedded 5(4) pair
    exponential_midpoint ///< norm-preserving, second order, fixed step
};

inline const char* to_string(Method m) { return m == Method::dopri5 ? "dopri5" : "exponential_midpoint"; }

struct IntegratorConfig {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double max_step = std::numeric_limits<double>::infinity();
    std::optional<std::vector<double>> dense_output_grid;
    Method method = Method::dopri5;
    /// Fixed step for exponential_midpoint when max_step is not finite.
    double fixed_step = 1e-2;

    void validate() const {
        auto ok = [](double v) { return v > 0.0 && v <= 1e-2; };
        if (!ok(rel_tol) || !ok(abs_tol)) throw ConfigError("integrator tolerances must lie in (0, 1e-2]");
        if (!(max_step > 0.0)) throw ConfigError("max_step must be positive");
        if (!(fixed_step > 0.0)) throw ConfigError("fixed_step must be positive");
    }
};

struct IntegrationStats {
    long accepted = 0;
    long rejected = 0;
    long rhs_evals = 0;
};

template <class State>
struct OdeSolution {
    std::vector<double> times;
    std::vector<State> states;
    IntegrationStats stats;
};

namespace detail {

template <class State>
double scaled_error(const State& err, const State& y0, const State& y1, double rtol, double atol) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
        const double sc = atol + rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
        worst = std::max(worst, std::abs(err(i)) / sc);
    }
    return worst;
}

/// Output nodes strictly inside (t0, t1] in integration order, ending at t1.
inline std::vector<double> output_targets(double t0, double t1, const std::optional<std::vector<double>>& grid) {
    std::vector<double> out;
    if (!grid) return out;
    const double dir = t1 >= t0 ? 1.0 : -1.0;
    for (double g : *grid) {
        if (dir * (g - t0) > 0.0 && dir * (t1 - g) > 0.0) out.push_back(g);
    }
    std::sort(out.begin(), out.end(), [dir](double a, double b) { return dir * a < dir * b; });
    // Nodes within rounding distance of a neighbour or of t1 would force a
    // step below the underflow threshold; they are merged instead.
    const double tiny = 1e-12 * std::max({1.0, std::abs(t0), std::abs(t1)});
    std::vector<double> merged;
    for (double g : out) {
        if (std::abs(t1 - g) <= tiny) continue;
        if (!merged.empty() && std::abs(g - merged.back()) <= tiny) continue;
        merged.push_back(g);
    }
    merged.push_back(t1);
    return merged;
}

} // namespace detail

/// One Dormand-Prince step from (t, y) with step h; k1 = f(t, y) on entry.
/// Returns the fifth-order solution, the embedded error vector, and f at the
/// new point (FSAL).
template <class State, class Rhs>
void dopri5_step(Rhs& f, double t, const State& y, const State& k1, double h, State& y_new, State& err,
                 State& k_new) {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;

    const State k2 = f(t + c2 * h, (y + h * a21 * k1).eval());
    const State k3 = f(t + c3 * h, (y + h * (a31 * k1 + a32 * k2)).eval());
    const State k4 = f(t + c4 * h, (y + h * (a41 * k1 + a42 * k2 + a43 * k3)).eval());
    const State k5 = f(t + c5 * h, (y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)).eval());
    const State k6 = f(t + h, (y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)).eval());
    y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    k_new = f(t + h, y_new);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k_new);
}

/// Adaptive Dormand-Prince 5(4) from t0 to t1 (either direction). With a dense
/// output grid the steps are shortened to land exactly on each grid time;
/// otherwise every accepted step is recorded.
template <class State, class Rhs>
OdeSolution<State> integrate_dopri5(Rhs f, const State& y0, double t0, double t1, const IntegratorConfig& cfg) {
    OdeSolution<State> sol;
    sol.times.push_back(t0);
    sol.states.push_back(y0);
    if (t0 == t1) return sol;

    auto rhs = [&](double t, const State& y) {
        ++sol.stats.rhs_evals;
        return State(f(t, y));
    };

    const double dir = t1 > t0 ? 1.0 : -1.0;
    const auto targets = detail::output_targets(t0, t1, cfg.dense_output_grid);
    std::size_t next_target = 0;

    State y = y0;
    State k1 = rhs(t0, y);
    double t = t0;
    const double span = std::abs(t1 - t0);
    double h = std::min({cfg.max_step, span, 0.01 * std::max(1e-6, y.norm()) / std::max(1e-12, k1.norm())});
    h = std::max(h, 1e-6 * span);
    State y_new = y, err = y, k_new = y;

    while (dir * (t1 - t) > 0.0) {
        double stop = t1;
        if (!targets.empty()) stop = targets[next_target];
        bool hits = false;
        double step = std::min(h, cfg.max_step);
        if (step >= std::abs(stop - t)) {
            step = std::abs(stop - t);
            hits = true;
        }
        if (step < 1e-14 * std::max(1.0, std::abs(t))) {
            throw StepSizeUnderflow("step size underflow at t = " + std::to_string(t));
        }
        dopri5_step(rhs, t, y, k1, dir * step, y_new, err, k_new);
        const double e = detail::scaled_error(err, y, y_new, cfg.rel_tol, cfg.abs_tol);
        if (!std::isfinite(e)) throw StepSizeUnderflow("non-finite error estimate at t = " + std::to_string(t));
        if (e <= 1.0) {
            ++sol.stats.accepted;
            t = hits ? stop : t + dir * step;
            y = y_new;
            k1 = k_new;
            const bool record = targets.empty() || hits;
            if (record) {
                sol.times.push_back(t);
                sol.states.push_back(y);
                if (hits && !targets.empty()) ++next_target;
            }
            const double grow = e == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(e, -0.2), 0.2, 5.0);
            // A step truncated to land on an output node does not shrink the next one.
            h = hits ? std::max(h, step * grow) : step * grow;
        } else {
            ++sol.stats.rejected;
            h = step * std::clamp(0.9 * std::pow(e, -0.2), 0.1, 1.0);
        }
    }
    return sol;
}

/// Fixed-step driver for a one-step propagator `step(t, h, y) -> y`.
/// Steps are shortened where needed to land on output nodes.
template <class State, class Step>
OdeSolution<State> integrate_fixed(Step step, const State& y0, double t0, double t1, double h,
                                   const std::optional<std::vector<double>>& grid) {
    OdeSolution<State> sol;
    sol.times.push_back(t0);
    sol.states.push_back(y0);
    if (t0 == t1) return sol;
    const double dir = t1 > t0 ? 1.0 : -1.0;
    auto targets = detail::output_targets(t0, t1, grid);
    std::vector<double> nodes = targets;
    if (!grid) nodes = {t1};
    State y = y0;
    double t = t0;
    for (double stop : nodes) {
        const double len = std::abs(stop - t);
        const long n = std::max(1L, static_cast<long>(std::ceil(len / h - 1e-9)));
        const double hs = dir * len / static_cast<double>(n);
        for (long i = 0; i < n; ++i) {
            y = step(t, hs, y);
            t = (i + 1 == n) ? stop : t + hs;
            ++sol.stats.accepted;
            if (!grid) {
                sol.times.push_back(t);
                sol.states.push_back(y);
            }
        }
        if (grid) {
            sol.times.push_back(t);
            sol.states.push_back(y);
        }
    }
    return sol;
}

} // namespace spinphase
