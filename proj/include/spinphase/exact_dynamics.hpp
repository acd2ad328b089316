#pragma once

// Reference (non-adiabatic) dynamics: the spinor Schrodinger equation
// i psi' = (B.sigma/2) psi and the Bloch equation S' = B x S, integrated
// numerically, plus state conversions and continuous phase extraction.

#include "spinphase/adiabatic.hpp"
#include "spinphase/errors.hpp"
#include "spinphase/field_profile.hpp"
#include "spinphase/integrator.hpp"
#include "spinphase/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace spinphase {

struct TrajectoryMetadata {
    double rel_tol = 0.0;
    double abs_tol = 0.0;
    Method method = Method::dopri5;
    std::string profile_kind;
    double epsilon = 1.0;
    IntegrationStats stats;
};

/// Time-stamped states. Times are strictly monotone in the integration
/// direction (increasing for forward runs).
template <class State>
struct Trajectory {
    std::vector<double> times;
    std::vector<State> states;
    TrajectoryMetadata meta;

    std::size_t size() const { return times.size(); }
    const State& back() const { return states.back(); }
};

using SpinorTrajectory = Trajectory<Spinor>;
using BlochTrajectory = Trajectory<BlochVector>;

inline Mat2c hamiltonian(const Vec3& B) {
    const cplx I(0.0, 1.0);
    Mat2c h;
    h << B(2), B(0) - I * B(1), B(0) + I * B(1), -B(2);
    return 0.5 * h;
}

/// S = <psi| sigma |psi>.
inline BlochVector spinor_to_bloch(const Spinor& psi) {
    const cplx ud = std::conj(psi.up) * psi.down;
    return {2.0 * ud.real(), 2.0 * ud.imag(), std::norm(psi.up) - std::norm(psi.down)};
}

/// Spinor with Bloch vector S in the gauge regular at the north pole,
/// (cos(th/2), e^{i ph} sin(th/2)).
inline Spinor bloch_to_spinor(const BlochVector& S) {
    const double th = S.polar(), ph = S.azimuth();
    return {std::cos(0.5 * th), std::polar(std::sin(0.5 * th), ph)};
}

/// Energy expectation <psi|H|psi> = B.S / 2.
inline double energy_expectation(const Vec3& B, const Spinor& psi) {
    return 0.5 * B.dot(spinor_to_bloch(psi).vec()) / std::max(psi.norm2(), 1e-300);
}

/// Accepted norm error of initial states. Loose enough to restart from the
/// end of a previous run, whose drift may reach 10 rel_tol per unit time.
inline constexpr double input_norm_tol = 1e-6;

namespace detail {

inline void check_span(const FieldProfile& profile, double t0, double t1) {
    const TimeDomain d = profile.domain();
    if (!d.contains(t0) || !d.contains(t1)) {
        throw DomainError("time span [" + std::to_string(t0) + ", " + std::to_string(t1) + "] outside profile domain");
    }
}

inline Vec2c exp_midpoint_spinor(const FieldProfile& profile, double t, double h, const Vec2c& psi) {
    const Vec3 B = profile.sample(t + 0.5 * h).B_vec;
    const double b = B.norm();
    const double ang = 0.5 * b * h;
    const Vec3 n = b > 0.0 ? Vec3(B / b) : Vec3(0.0, 0.0, 1.0);
    const cplx I(0.0, 1.0);
    Mat2c ns;
    ns << n(2), n(0) - I * n(1), n(0) + I * n(1), -n(2);
    const Mat2c U = std::cos(ang) * Mat2c::Identity() - I * std::sin(ang) * ns;
    return U * psi;
}

inline Vec3 exp_midpoint_bloch(const FieldProfile& profile, double t, double h, const Vec3& S) {
    const Vec3 B = profile.sample(t + 0.5 * h).B_vec;
    const double b = B.norm();
    if (b == 0.0) return S;
    const Vec3 n = B / b;
    const double a = b * h;
    // Rodrigues rotation about n by angle a (right-handed, as S' = B x S).
    return S * std::cos(a) + n.cross(S) * std::sin(a) + n * n.dot(S) * (1.0 - std::cos(a));
}

template <class State, class Vec>
Trajectory<State> wrap_solution(const OdeSolution<Vec>& sol, const FieldProfile& profile, const IntegratorConfig& cfg) {
    Trajectory<State> traj;
    traj.times = sol.times;
    traj.states.reserve(sol.states.size());
    for (const auto& v : sol.states) traj.states.emplace_back(v);
    traj.meta.rel_tol = cfg.rel_tol;
    traj.meta.abs_tol = cfg.abs_tol;
    traj.meta.method = cfg.method;
    traj.meta.profile_kind = to_string(profile.kind());
    traj.meta.epsilon = profile.epsilon();
    traj.meta.stats = sol.stats;
    return traj;
}

} // namespace detail

inline SpinorTrajectory integrate_schrodinger(const FieldProfile& profile, const Spinor& psi0, double t0, double t1,
                                              const IntegratorConfig& cfg = {}) {
    cfg.validate();
    if (std::abs(psi0.norm2() - 1.0) > input_norm_tol) throw NormalizationError("initial spinor is not normalized");
    detail::check_span(profile, t0, t1);
    const Vec2c y0 = psi0.vec();
    OdeSolution<Vec2c> sol;
    if (cfg.method == Method::dopri5) {
        const cplx mI(0.0, -1.0);
        auto rhs = [&](double t, const Vec2c& psi) -> Vec2c { return mI * (hamiltonian(profile.sample(t).B_vec) * psi); };
        sol = integrate_dopri5(rhs, y0, t0, t1, cfg);
    } else {
        const double h = std::isfinite(cfg.max_step) ? cfg.max_step : cfg.fixed_step;
        auto step = [&](double t, double hs, const Vec2c& psi) { return detail::exp_midpoint_spinor(profile, t, hs, psi); };
        sol = integrate_fixed(step, y0, t0, t1, h, cfg.dense_output_grid);
    }
    return detail::wrap_solution<Spinor>(sol, profile, cfg);
}

inline BlochTrajectory integrate_bloch(const FieldProfile& profile, const BlochVector& S0, double t0, double t1,
                                       const IntegratorConfig& cfg = {}) {
    cfg.validate();
    if (std::abs(S0.norm2() - 1.0) > input_norm_tol) throw NormalizationError("initial spin vector is not unit length");
    detail::check_span(profile, t0, t1);
    const Vec3 y0 = S0.vec();
    OdeSolution<Vec3> sol;
    if (cfg.method == Method::dopri5) {
        auto rhs = [&](double t, const Vec3& S) -> Vec3 { return profile.sample(t).B_vec.cross(S); };
        sol = integrate_dopri5(rhs, y0, t0, t1, cfg);
    } else {
        const double h = std::isfinite(cfg.max_step) ? cfg.max_step : cfg.fixed_step;
        auto step = [&](double t, double hs, const Vec3& S) { return detail::exp_midpoint_bloch(profile, t, hs, S); };
        sol = integrate_fixed(step, y0, t0, t1, h, cfg.dense_output_grid);
    }
    return detail::wrap_solution<BlochVector>(sol, profile, cfg);
}

/// Largest |norm^2 - 1| over a trajectory.
template <class State>
double max_norm_drift(const Trajectory<State>& traj) {
    double worst = 0.0;
    for (const auto& s : traj.states) worst = std::max(worst, std::abs(s.norm2() - 1.0));
    return worst;
}

/// Step-doubling defect of a spinor trajectory: each stored node is
/// re-propagated to the next one with a full Dormand-Prince step and with two
/// half steps; the Richardson-combined result is compared with the stored
/// next node. Returns the per-interval defects.
inline std::vector<double> local_defects(const FieldProfile& profile, const SpinorTrajectory& traj) {
    const cplx mI(0.0, -1.0);
    auto rhs = [&](double t, const Vec2c& psi) -> Vec2c { return mI * (hamiltonian(profile.sample(t).B_vec) * psi); };
    std::vector<double> out;
    for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
        const double t = traj.times[i], h = traj.times[i + 1] - t;
        const Vec2c y = traj.states[i].vec();
        Vec2c full, half, err, k;
        dopri5_step(rhs, t, y, rhs(t, y), h, full, err, k);
        Vec2c mid;
        dopri5_step(rhs, t, y, rhs(t, y), 0.5 * h, mid, err, k);
        dopri5_step(rhs, t + 0.5 * h, mid, rhs(t + 0.5 * h, mid), 0.5 * h, half, err, k);
        const Vec2c best = half + (half - full) / 31.0;
        out.push_back((best - traj.states[i + 1].vec()).norm());
    }
    return out;
}

enum class PhaseReference {
    /// Phase of psi_up, i.e. the total phase in the spin-sphere gauge that is
    /// regular at the north pole, shifted to vanish at t0. Equals
    /// arg<psi(t0)|psi(t)> whenever the spin returns to its initial direction.
    initial_state,
    /// arg<n(t)|psi(t)> with n(t) the aligned second-order eigenvector.
    tracked_eigenvector,
};

/// A continuous phase as a function of time, zero at the first node.
struct PhaseSeries {
    std::vector<double> times;
    std::vector<double> phase;

    double final() const { return phase.back(); }

    double at(double t) const {
        if (t <= times.front()) return phase.front();
        if (t >= times.back()) return phase.back();
        const auto it = std::upper_bound(times.begin(), times.end(), t);
        const std::size_t i = static_cast<std::size_t>(it - times.begin()) - 1;
        const double w = (t - times[i]) / (times[i + 1] - times[i]);
        return (1.0 - w) * phase[i] + w * phase[i + 1];
    }
};

inline PhaseSeries extract_total_phase(const SpinorTrajectory& traj, const FieldProfile& profile, PhaseReference reference) {
    PhaseSeries out;
    out.times = traj.times;
    out.phase.reserve(traj.size());
    double prev_raw = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const Spinor& psi = traj.states[i];
        double raw = 0.0;
        if (reference == PhaseReference::tracked_eigenvector) {
            const Spinor ref = second_order_eigenvector(profile, traj.times[i]);
            const cplx ov = inner(ref, psi);
            if (std::abs(ov) <= 0.5) {
                throw OverlapLoss("overlap with tracked eigenvector fell to " + std::to_string(std::abs(ov)) + " at t = "
                                  + std::to_string(traj.times[i]));
            }
            raw = std::arg(ov);
        } else {
            if (std::norm(psi.up) < 2.5e-7 * psi.norm2()) {
                throw PoleSingularity("spin passed the south pole at t = " + std::to_string(traj.times[i]));
            }
            raw = std::arg(psi.up);
        }
        if (i > 0) {
            // No state can turn faster than |B|/2; a wider spacing would alias.
            const double dt = std::abs(traj.times[i] - traj.times[i - 1]);
            const double bmax = std::max(profile.sample(traj.times[i - 1]).B_mag, profile.sample(traj.times[i]).B_mag);
            if (0.5 * bmax * dt >= 0.5 * pi) {
                throw BranchJump("node spacing " + std::to_string(dt) + " cannot resolve the phase at t = "
                                 + std::to_string(traj.times[i - 1]));
            }
            const double step = wrap_angle(raw - prev_raw);
            if (std::abs(step) > 0.5 * pi) {
                throw BranchJump("phase step " + std::to_string(step) + " between t = " + std::to_string(traj.times[i - 1])
                                 + " and " + std::to_string(traj.times[i]));
            }
            acc += step;
        }
        prev_raw = raw;
        out.phase.push_back(acc);
    }
    return out;
}

/// Uniform output grid of n + 1 nodes on [t0, t1].
inline std::vector<double> uniform_grid(double t0, double t1, long n) {
    std::vector<double> g;
    g.reserve(static_cast<std::size_t>(n) + 1);
    for (long k = 0; k <= n; ++k) g.push_back(t0 + (t1 - t0) * static_cast<double>(k) / static_cast<double>(n));
    return g;
}

struct PhaseRun {
    SpinorTrajectory trajectory;
    PhaseSeries phase;
};

/// Integrate and extract a phase; on a branch jump the output grid is refined
/// by successive halving, up to a factor of 16, before giving up.
inline PhaseRun integrate_with_phase(const FieldProfile& profile, const Spinor& psi0, double t0, double t1,
                                     IntegratorConfig cfg, PhaseReference reference) {
    for (int refine = 0;; ++refine) {
        SpinorTrajectory traj = integrate_schrodinger(profile, psi0, t0, t1, cfg);
        try {
            PhaseSeries ph = extract_total_phase(traj, profile, reference);
            return {std::move(traj), std::move(ph)};
        } catch (const BranchJump&) {
            if (refine == 4) throw;
            double widest = 0.0;
            for (std::size_t i = 0; i + 1 < traj.size(); ++i)
                widest = std::max(widest, std::abs(traj.times[i + 1] - traj.times[i]));
            const double spacing = 0.5 * widest;
            cfg.dense_output_grid = uniform_grid(t0, t1, static_cast<long>(std::ceil(std::abs(t1 - t0) / spacing)));
        }
    }
}

} // namespace spinphase
