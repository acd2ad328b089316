#pragma once

#include "spinphase/errors.hpp"
#include "spinphase/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace spinphase {

struct RombergOptions {
    double panel_width = 4.0;   ///< span is split into panels no wider than this
    double abs_tol = 1e-12;     ///< per unit length of integration span
    int min_levels = 4;
    int max_levels = 22;
};

/// Romberg integration (trapezoid with Richardson refinement) of f over [a, b],
/// panel by panel. Returns a signed value; a == b gives 0.
template <class F>
double romberg(F&& f, double a, double b, const RombergOptions& opt = {}) {
    if (a == b) return 0.0;
    const double sign = b > a ? 1.0 : -1.0;
    const double lo = std::min(a, b), hi = std::max(a, b);
    const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / opt.panel_width)));
    const double width = (hi - lo) / panels;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double x0 = lo + p * width;
        const double x1 = (p + 1 == panels) ? hi : x0 + width;
        const double h0 = x1 - x0;
        std::vector<double> prev, cur;
        prev.push_back(0.5 * h0 * (f(x0) + f(x1)));
        double trap = prev[0];
        long n = 1;
        double result = prev[0];
        for (int level = 1; level < opt.max_levels; ++level) {
            const double h = h0 / static_cast<double>(2 * n);
            double mid = 0.0;
            for (long i = 0; i < n; ++i) mid += f(x0 + (2 * i + 1) * h);
            trap = 0.5 * trap + h * mid;
            n *= 2;
            cur.assign(static_cast<std::size_t>(level) + 1, 0.0);
            cur[0] = trap;
            double factor = 1.0;
            for (int k = 1; k <= level; ++k) {
                factor *= 4.0;
                cur[static_cast<std::size_t>(k)] = cur[static_cast<std::size_t>(k) - 1]
                    + (cur[static_cast<std::size_t>(k) - 1] - prev[static_cast<std::size_t>(k) - 1]) / (factor - 1.0);
            }
            const double diff = std::abs(cur.back() - prev.back());
            result = cur.back();
            prev.swap(cur);
            if (level >= opt.min_levels && diff <= opt.abs_tol * h0) break;
        }
        total += result;
    }
    return sign * total;
}

namespace detail {

/// Coefficients of the cubic through four nodes, evaluated via Lagrange form.
struct LocalCubic {
    std::array<double, 4> x{};
    std::array<double, 4> y{};

    double value(double t) const {
        double acc = 0.0;
        for (int i = 0; i < 4; ++i) {
            double li = 1.0;
            for (int j = 0; j < 4; ++j)
                if (j != i) li *= (t - x[j]) / (x[i] - x[j]);
            acc += y[i] * li;
        }
        return acc;
    }

    double slope(double t) const {
        double acc = 0.0;
        for (int i = 0; i < 4; ++i) {
            double sum = 0.0;
            for (int k = 0; k < 4; ++k) {
                if (k == i) continue;
                double prod = 1.0 / (x[i] - x[k]);
                for (int j = 0; j < 4; ++j)
                    if (j != i && j != k) prod *= (t - x[j]) / (x[i] - x[j]);
                sum += prod;
            }
            acc += y[i] * sum;
        }
        return acc;
    }
};

} // namespace detail

/// Stieltjes integral  \int f dg  over sampled curves f(t_i), g(t_i).
/// Each interval is integrated with 3-point Gauss-Legendre on the local
/// four-node cubic interpolants of f and g (fourth order on smooth data).
/// With fewer than four nodes it falls back to the trapezoid rule.
inline double path_integral(std::span<const double> t, std::span<const double> f, std::span<const double> g) {
    const std::size_t n = t.size();
    if (n < 2) return 0.0;
    double total = 0.0;
    if (n < 4) {
        for (std::size_t i = 0; i + 1 < n; ++i) total += 0.5 * (f[i] + f[i + 1]) * (g[i + 1] - g[i]);
        return total;
    }
    static constexpr std::array<double, 3> gx{-0.7745966692414834, 0.0, 0.7745966692414834};
    static constexpr std::array<double, 3> gw{5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const std::size_t first = std::clamp<std::size_t>(i == 0 ? 0 : i - 1, 0, n - 4);
        detail::LocalCubic cf, cg;
        for (std::size_t k = 0; k < 4; ++k) {
            cf.x[k] = cg.x[k] = t[first + k];
            cf.y[k] = f[first + k];
            cg.y[k] = g[first + k];
        }
        const double a = t[i], b = t[i + 1];
        const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
        double seg = 0.0;
        for (int q = 0; q < 3; ++q) {
            const double tq = mid + half * gx[q];
            seg += gw[q] * cf.value(tq) * cg.slope(tq);
        }
        total += half * seg;
    }
    return total;
}

/// \int f dt over a sampled curve.
inline double sampled_integral(std::span<const double> t, std::span<const double> f) {
    return path_integral(t, f, t);
}

/// Unwrap a sequence of angles so adjacent differences lie in (-pi, pi].
inline std::vector<double> unwrap(std::span<const double> raw) {
    std::vector<double> out(raw.begin(), raw.end());
    for (std::size_t i = 1; i < out.size(); ++i) out[i] = out[i - 1] + wrap_angle(raw[i] - raw[i - 1]);
    return out;
}

} // namespace spinphase
