#pragma once

// Experiments that turn the adiabatic theory into numbers: convergence
// orders of the quasi-stationary corrections, phase budgets against exact
// integration, Stokes checks in the (theta, theta_dot) plane and the t1/t2
// timescales of the second-order phase.

#include "spinphase/adiabatic.hpp"
#include "spinphase/errors.hpp"
#include "spinphase/exact_dynamics.hpp"
#include "spinphase/field_profile.hpp"
#include "spinphase/geometric_phases.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spinphase {

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;
};

/// Ordinary least squares of log(y) against log(x), all points kept.
inline SlopeFit fit_loglog(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < n; ++i) {
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(std::max(y[i], std::numeric_limits<double>::min())));
        mx += lx.back();
        my += ly.back();
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    SlopeFit f;
    f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    f.intercept = my - f.slope * mx;
    if (n > 2 && sxx > 0.0) {
        double rss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = ly[i] - (f.intercept + f.slope * lx[i]);
            rss += r * r;
        }
        f.stderr_slope = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
    }
    return f;
}

/// Horizon beyond which the neglected fourth-order frequency shift matters,
/// t2 = B^3 / eps^4, with eps the largest angular rate of the field direction
/// and B the smallest field strength over the span. Infinite for a fixed
/// direction.
inline double t2_horizon(const FieldProfile& profile, double t0, double t1) {
    double rate = 0.0, bmin = std::numeric_limits<double>::infinity();
    for (double t : uniform_grid(t0, t1, 1000)) {
        const FieldSample s = profile.sample(t);
        rate = std::max(rate, std::hypot(s.theta_dot, s.phi_dot * std::sin(s.theta)));
        bmin = std::min(bmin, s.B_mag);
    }
    if (rate == 0.0) return std::numeric_limits<double>::infinity();
    return bmin * bmin * bmin / (rate * rate * rate * rate);
}

inline void require_within_t2(const FieldProfile& profile, double t0, double t1) {
    const double t2 = t2_horizon(profile, t0, t1);
    if (std::abs(t1 - t0) > 0.1 * t2) {
        throw DomainError("span " + std::to_string(std::abs(t1 - t0)) + " exceeds 0.1 t2 = " + std::to_string(0.1 * t2));
    }
}

// ---------------------------------------------------------------- convergence

struct ConvergenceReport {
    std::vector<double> epsilons;
    std::vector<double> errors_order0;
    std::vector<double> errors_order1;
    std::vector<double> errors_order2;
    std::array<SlopeFit, 3> fits{};
};

/// For each eps the profile family is run over t in [0, horizon_eps_t / eps],
/// the Bloch equation is integrated from the normalized quasi-stationary
/// seed, and the largest distance to S0, S0+S1 and S0+S1+S2 is recorded.
inline ConvergenceReport run_convergence(const FieldProfile& family, std::span<const double> eps_list,
                                         double horizon_eps_t, IntegratorConfig cfg = {}, long samples = 2000) {
    if (eps_list.size() < 2) throw ConfigError("convergence needs at least two epsilon values");
    for (std::size_t i = 1; i < eps_list.size(); ++i) {
        if (!(eps_list[i] < eps_list[i - 1])) throw ConfigError("epsilon list must be strictly decreasing");
    }
    if (!(horizon_eps_t > 0.0)) throw ConfigError("horizon must be positive");

    ConvergenceReport rep;
    for (double eps : eps_list) {
        const FieldProfile profile = family.with_epsilon(eps);
        const double t_end = horizon_eps_t / eps;
        require_within_t2(profile, 0.0, t_end);
        cfg.dense_output_grid = uniform_grid(0.0, t_end, samples);
        const BlochVector seed(quasi_stationary(profile, 0.0).total().normalized());
        const BlochTrajectory traj = integrate_bloch(profile, seed, 0.0, t_end, cfg);
        double e0 = 0.0, e1 = 0.0, e2 = 0.0;
        for (std::size_t i = 0; i < traj.size(); ++i) {
            const QuasiStationary q = quasi_stationary(profile, traj.times[i]);
            const Vec3 S = traj.states[i].vec();
            e0 = std::max(e0, (S - q.S0).norm());
            e1 = std::max(e1, (S - q.S0 - q.S1).norm());
            e2 = std::max(e2, (S - q.total()).norm());
        }
        rep.epsilons.push_back(eps);
        rep.errors_order0.push_back(e0);
        rep.errors_order1.push_back(e1);
        rep.errors_order2.push_back(e2);
    }
    rep.fits[0] = fit_loglog(rep.epsilons, rep.errors_order0);
    rep.fits[1] = fit_loglog(rep.epsilons, rep.errors_order1);
    rep.fits[2] = fit_loglog(rep.epsilons, rep.errors_order2);
    return rep;
}

// ---------------------------------------------------------------- phase budget

struct PhaseBudget {
    PhaseDecomposition phases;
    double r_total = 0.0;  ///< phi_total_exact - (phi0 + phi2)
    double r_aa = 0.0;     ///< phi_geom_aa - 2 phi2, reported only
    std::string profile_kind;
    double t0 = 0.0;
    double t1 = 0.0;
    double rel_tol = 0.0;
    double abs_tol = 0.0;

    /// phi_geom_aa / phi2; NaN when phi2 vanishes.
    double aa_to_phi2_ratio() const {
        return phases.phi2 != 0.0 ? phases.phi_geom_aa / phases.phi2 : std::numeric_limits<double>::quiet_NaN();
    }
};

struct PhaseBudgetRun {
    PhaseBudget budget;
    PhaseRun run;
};

/// Quasi-stationary run seeded with the aligned second-order eigenvector;
/// the exact phase is tracked against that eigenvector.
inline PhaseBudgetRun run_phase_budget_detailed(const FieldProfile& profile, double t0, double t1,
                                                const IntegratorConfig& cfg = {}) {
    require_within_t2(profile, t0, t1);
    const Spinor seed = second_order_eigenvector(profile, t0);
    PhaseRun run = integrate_with_phase(profile, seed, t0, t1, cfg, PhaseReference::tracked_eigenvector);

    PhaseBudget b;
    b.phases.phi0 = phi0(profile, t0, t1);
    b.phases.phi1 = profile.in_plane() ? 0.0 : berry_phi1(profile, t0, t1);
    b.phases.phi2 = phi2(profile, t0, t1);
    b.phases.phi_total_exact = run.phase.final();
    b.phases.phi_dyn_expect = phi_dyn_expect(run.trajectory, profile);
    b.phases.phi_geom_aa = b.phases.phi_total_exact - b.phases.phi_dyn_expect;
    b.r_total = b.phases.phi_total_exact - (b.phases.phi0 + b.phases.phi2);
    b.r_aa = b.phases.phi_geom_aa - 2.0 * b.phases.phi2;
    b.profile_kind = to_string(profile.kind());
    b.t0 = t0;
    b.t1 = t1;
    b.rel_tol = cfg.rel_tol;
    b.abs_tol = cfg.abs_tol;
    return {b, std::move(run)};
}

inline PhaseBudget run_phase_budget(const FieldProfile& profile, double t0, double t1, const IntegratorConfig& cfg = {}) {
    return run_phase_budget_detailed(profile, t0, t1, cfg).budget;
}

// ---------------------------------------------------------------- Stokes

struct StokesRow {
    std::size_t loop_id = 0;
    double B = 0.0;
    double line_integral = 0.0;
    double surface_integral = 0.0;
    double abs_diff = 0.0;
};

inline std::vector<StokesRow> run_stokes_check(std::span<const MLoop> loops, std::span<const double> B_list) {
    std::vector<StokesRow> rows;
    for (std::size_t i = 0; i < loops.size(); ++i) {
        for (double B : B_list) {
            StokesRow r;
            r.loop_id = i;
            r.B = B;
            r.line_integral = generalized_line_integral(loops[i], B);
            r.surface_integral = stokes_surface_integral(loops[i], B);
            r.abs_diff = std::abs(r.line_integral - r.surface_integral);
            rows.push_back(r);
        }
    }
    return rows;
}

/// One period of theta = theta0 sin(Omega t) in the (theta, theta_dot) plane.
inline MLoop sinusoidal_loop(double theta0, double Omega, long nodes) {
    MLoop loop;
    for (long k = 0; k <= nodes; ++k) {
        const double a = 2.0 * pi * static_cast<double>(k) / static_cast<double>(nodes);
        loop.points.push_back({theta0 * std::sin(a), theta0 * Omega * std::cos(a)});
    }
    loop.points.back() = loop.points.front();
    return loop;
}

// ---------------------------------------------------------------- timescales

struct TimescaleReport {
    double B = 0.0;
    double omega = 0.0;
    double t1 = 0.0;                ///< B / omega^2, infinite for omega = 0
    double t2 = 0.0;                ///< B^3 / omega^4
    bool unbounded = false;
    double phi2_closed_form = 0.0;  ///< -omega^2 t1 / (4B)
    double phi2_quadrature = 0.0;
    std::optional<double> total_minus_phi0;  ///< exact phase minus phi0 at t1, when measured
};

/// Uniform rotation at angular rate omega: the second-order phase reaches
/// magnitude 1/4 at t1 = B / omega^2. With `measure` set the exact phase is
/// integrated up to t1 as well.
inline TimescaleReport run_timescale_demo(double B, double omega, bool measure = false, const IntegratorConfig& cfg = {}) {
    if (!(B > 0.0)) throw DegenerateField("field strength must be positive");
    TimescaleReport r;
    r.B = B;
    r.omega = omega;
    if (omega == 0.0) {
        r.unbounded = true;
        r.t1 = r.t2 = std::numeric_limits<double>::infinity();
        return r;
    }
    r.t1 = B / (omega * omega);
    r.t2 = B * B * B / (omega * omega * omega * omega);
    r.phi2_closed_form = -omega * omega * r.t1 / (4.0 * B);
    const FieldProfile profile = FieldProfile::uniform_rotation(B, omega);
    r.phi2_quadrature = phi2(profile, 0.0, r.t1);
    if (measure) {
        const PhaseBudget b = run_phase_budget(profile, 0.0, r.t1, cfg);
        r.total_minus_phi0 = b.phases.phi_total_exact - b.phases.phi0;
    }
    return r;
}

} // namespace spinphase
