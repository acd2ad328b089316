#pragma once

// Phase objects of the adiabatic spin problem:
//  - dynamical phase phi0 = -1/2 \int B dt and the second-order correction
//    phi2 = -1/4 \int theta_dot^2 / B dt,
//  - the exact spin-sphere (Aharonov-Anandan) geometric phase, by a
//    coordinate integral and by a gauge-free solid-angle sum,
//  - the first-order Berry phase and the pieces of the second-order one,
//  - the (theta, theta_dot) generalized-parameter-space holonomy and its
//    Stokes (oriented area) form.

#include "spinphase/errors.hpp"
#include "spinphase/exact_dynamics.hpp"
#include "spinphase/field_profile.hpp"
#include "spinphase/quadrature.hpp"
#include "spinphase/types.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace spinphase {

/// Phase budget of one run. phi_geom_aa is defined as
/// phi_total_exact - phi_dyn_expect.
struct PhaseDecomposition {
    double phi0 = 0.0;
    double phi1 = 0.0;
    double phi2 = 0.0;
    double phi_total_exact = 0.0;
    double phi_dyn_expect = 0.0;
    double phi_geom_aa = 0.0;
};

inline constexpr double pole_guard = 1e-3;

// ---------------------------------------------------------------- profile phases

inline double phi0(const FieldProfile& profile, double t0, double t1) {
    return -0.5 * romberg([&](double t) { return profile.sample(t).B_mag; }, t0, t1);
}

inline double phi2(const FieldProfile& profile, double t0, double t1) {
    return -0.25 * romberg(
                       [&](double t) {
                           const FieldSample s = profile.sample(t);
                           return s.theta_dot * s.theta_dot / s.B_mag;
                       },
                       t0, t1);
}

/// First-order Berry phase 1/2 \int (1 - cos theta) dphi along the field path.
inline double berry_phi1(const FieldProfile& profile, double t0, double t1) {
    return 0.5 * romberg(
                     [&](double t) {
                         const FieldSample s = profile.sample(t);
                         return (1.0 - std::cos(s.theta)) * s.phi_dot;
                     },
                     t0, t1);
}

struct Phi2Decomposition {
    double term_accel = 0.0;    ///< -1/2 \int gamma sin(theta) dphi
    double term_byparts = 0.0;  ///< -1/2 \int delta dtheta
    double boundary = 0.0;      ///< 1/2 [(1 - cos theta) delta / sin theta] between the endpoints
    double term_direct = 0.0;   ///< 1/2 \int (1 - cos theta) d(delta / sin theta), for cross-checking
};

inline Phi2Decomposition phi2_decomposition(const FieldProfile& profile, double t0, double t1) {
    auto guarded = [&](double t) {
        FieldSample s = profile.sample(t);
        if (std::abs(std::sin(s.theta)) < pole_guard) {
            throw PoleSingularity("field direction within sin(theta) < 1e-3 of a pole at t = " + std::to_string(t));
        }
        return s;
    };
    // Coarse scan so short pole visits are not missed between quadrature nodes.
    for (double t : uniform_grid(t0, t1, 2000)) guarded(t);

    Phi2Decomposition d;
    d.term_accel = -0.5 * romberg(
                              [&](double t) {
                                  const FieldSample s = guarded(t);
                                  return adiabatic_params(s).gamma * std::sin(s.theta) * s.phi_dot;
                              },
                              t0, t1);
    d.term_byparts = -0.5 * romberg(
                                [&](double t) {
                                    const FieldSample s = guarded(t);
                                    return adiabatic_params(s).delta * s.theta_dot;
                                },
                                t0, t1);
    auto edge = [&](double t) {
        const FieldSample s = guarded(t);
        return (1.0 - std::cos(s.theta)) * adiabatic_params(s).delta / std::sin(s.theta);
    };
    d.boundary = 0.5 * (edge(t1) - edge(t0));
    d.term_direct = 0.5 * romberg(
                              [&](double t) {
                                  const FieldSample s = guarded(t);
                                  const AdiabaticParams p = adiabatic_params(s);
                                  const double sn = std::sin(s.theta), cs = std::cos(s.theta);
                                  const double rate = p.gamma * s.B_mag / sn - p.delta * cs * s.theta_dot / (sn * sn);
                                  return (1.0 - cs) * rate;
                              },
                              t0, t1);
    return d;
}

// ---------------------------------------------------------------- trajectory phases

/// -\int <psi|H|psi> dt over the trajectory nodes.
inline double phi_dyn_expect(const SpinorTrajectory& traj, const FieldProfile& profile) {
    std::vector<double> energy;
    energy.reserve(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        energy.push_back(energy_expectation(profile.sample(traj.times[i]).B_vec, traj.states[i]));
    }
    for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
        const double step_phase = std::max(std::abs(energy[i]), std::abs(energy[i + 1])) * std::abs(traj.times[i + 1] - traj.times[i]);
        if (step_phase >= 0.5 * pi) {
            throw GridTooCoarse("dynamical phase step " + std::to_string(step_phase) + " at t = " + std::to_string(traj.times[i]));
        }
    }
    return -sampled_integral(traj.times, energy);
}

/// Spin-sphere coordinates (polar, unwrapped azimuth) along a trajectory.
struct SphericalPath {
    std::vector<double> polar;
    std::vector<double> azimuth;
};

inline SphericalPath spherical_path(const BlochTrajectory& traj) {
    SphericalPath p;
    std::vector<double> raw;
    for (const auto& S : traj.states) {
        const double r = std::sqrt(S.norm2());
        const double sin_polar = std::hypot(S.x, S.y) / r;
        if (sin_polar < pole_guard) {
            throw PoleSingularity("spin path within sin(theta) < 1e-3 of a pole");
        }
        p.polar.push_back(S.polar());
        raw.push_back(S.azimuth());
    }
    for (std::size_t i = 1; i < raw.size(); ++i) {
        if (std::abs(wrap_angle(raw[i] - raw[i - 1])) > 0.5 * pi) {
            throw GridTooCoarse("azimuth step larger than pi/2 at node " + std::to_string(i));
        }
    }
    p.azimuth = unwrap(raw);
    return p;
}

/// -1/2 \int (1 - cos theta~) dphi~ along the spin path.
inline double aa_geometric_phase_coordinate(const BlochTrajectory& traj) {
    if (traj.size() < 2) return 0.0;
    const SphericalPath p = spherical_path(traj);
    std::vector<double> weight(p.polar.size());
    std::transform(p.polar.begin(), p.polar.end(), weight.begin(), [](double th) { return 1.0 - std::cos(th); });
    return -0.5 * path_integral(traj.times, weight, p.azimuth);
}

namespace detail {

/// Signed solid angle of the spherical triangle (a, b, c).
inline double triangle_solid_angle(const Vec3& a, const Vec3& b, const Vec3& c) {
    const double num = a.dot(b.cross(c));
    const double den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    return 2.0 * std::atan2(num, den);
}

/// Solid angle to the left of the closed geodesic polygon through `pts`.
inline double polygon_solid_angle(const std::vector<Vec3>& pts) {
    const std::size_t n = pts.size();
    if (n < 3) return 0.0;
    Vec3 axis = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) axis += pts[i].cross(pts[(i + 1) % n]);
    if (axis.norm() < 1e-14) {
        axis = Vec3::Zero();
        for (const auto& p : pts) axis += p;
        if (axis.norm() < 1e-14) return 0.0;
    }
    const Vec3 centre = axis.normalized();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += triangle_solid_angle(centre, pts[i], pts[(i + 1) % n]);
    return total;
}

} // namespace detail

/// -1/2 times the solid angle swept by the spin path, closed by a geodesic.
/// Triangles are fanned from the path's vector-area direction; one level of
/// Richardson extrapolation (every-other node) removes the chord error.
/// Agrees with the coordinate integral modulo 2 pi on closed paths.
inline double aa_geometric_phase_solid_angle(const BlochTrajectory& traj) {
    std::vector<Vec3> pts;
    pts.reserve(traj.size());
    for (const auto& S : traj.states) pts.push_back(S.vec().normalized());
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double arc = std::atan2(pts[i].cross(pts[i + 1]).norm(), pts[i].dot(pts[i + 1]));
        if (arc >= 0.25 * pi) throw ArcTooLong("consecutive spin nodes " + std::to_string(arc) + " rad apart");
    }
    if (pts.size() < 3) return 0.0;
    const double fine = detail::polygon_solid_angle(pts);
    if (pts.size() < 7) return -0.5 * fine;
    std::vector<Vec3> coarse;
    for (std::size_t i = 0; i < pts.size(); i += 2) coarse.push_back(pts[i]);
    if ((pts.size() - 1) % 2 != 0) coarse.push_back(pts.back());
    const double rough = detail::polygon_solid_angle(coarse);
    return -0.5 * (fine + (fine - rough) / 3.0);
}

// ---------------------------------------------------------------- (theta, theta_dot) plane

struct MPoint {
    double theta = 0.0;
    double theta_dot = 0.0;
};

/// Closed loop in the generalized parameter plane; the last point repeats
/// the first within the closure tolerance.
struct MLoop {
    std::vector<MPoint> points;

    MLoop reversed() const {
        MLoop r{points};
        std::reverse(r.points.begin(), r.points.end());
        return r;
    }
};

inline constexpr double loop_closure_tol = 1e-9;

/// Samples (theta, theta_dot) of a profile at n + 1 uniform times on [t0, t1].
inline MLoop loop_from_profile(const FieldProfile& profile, double t0, double t1, long n) {
    MLoop loop;
    for (double t : uniform_grid(t0, t1, n)) {
        const FieldSample s = profile.sample(t);
        loop.points.push_back({s.theta, s.theta_dot});
    }
    return loop;
}

namespace detail {

/// Loop in the scaled coordinates (theta, theta_dot / B), checked for closure.
inline std::vector<MPoint> scaled_closed_loop(const MLoop& loop, double B) {
    if (!(B > 0.0)) throw DegenerateField("loop field strength must be positive");
    if (loop.points.size() < 2) throw LoopNotClosed("loop needs at least two points");
    std::vector<MPoint> out;
    out.reserve(loop.points.size());
    for (const auto& p : loop.points) out.push_back({p.theta, p.theta_dot / B});
    const MPoint& a = out.front();
    const MPoint& b = out.back();
    if (std::abs(a.theta - b.theta) > loop_closure_tol || std::abs(a.theta_dot - b.theta_dot) > loop_closure_tol) {
        throw LoopNotClosed("loop endpoints differ by (" + std::to_string(b.theta - a.theta) + ", "
                            + std::to_string(b.theta_dot - a.theta_dot) + ")");
    }
    return out;
}

inline double orient(const MPoint& a, const MPoint& b, const MPoint& c) {
    return (b.theta - a.theta) * (c.theta_dot - a.theta_dot) - (b.theta_dot - a.theta_dot) * (c.theta - a.theta);
}

inline bool segments_cross(const MPoint& p1, const MPoint& p2, const MPoint& q1, const MPoint& q2) {
    const double d1 = orient(q1, q2, p1), d2 = orient(q1, q2, p2);
    const double d3 = orient(p1, p2, q1), d4 = orient(p1, p2, q2);
    return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

inline void require_simple(const std::vector<MPoint>& pts) {
    const std::size_t m = pts.size() - 1;  // number of edges
    for (std::size_t i = 0; i < m; ++i) {
        const double xmin = std::min(pts[i].theta, pts[i + 1].theta), xmax = std::max(pts[i].theta, pts[i + 1].theta);
        const double ymin = std::min(pts[i].theta_dot, pts[i + 1].theta_dot),
                     ymax = std::max(pts[i].theta_dot, pts[i + 1].theta_dot);
        for (std::size_t j = i + 2; j < m; ++j) {
            if (i == 0 && j + 1 == m) continue;  // first and last edges share the closing vertex
            const MPoint &q1 = pts[j], &q2 = pts[j + 1];
            if (std::max(q1.theta, q2.theta) < xmin || std::min(q1.theta, q2.theta) > xmax) continue;
            if (std::max(q1.theta_dot, q2.theta_dot) < ymin || std::min(q1.theta_dot, q2.theta_dot) > ymax) continue;
            if (segments_cross(pts[i], pts[i + 1], q1, q2)) {
                throw SelfIntersection("loop edges " + std::to_string(i) + " and " + std::to_string(j) + " cross");
            }
        }
    }
}

/// Sums edge(p[i], p[i+1]) along the loop in a canonical direction (the
/// lexicographically smaller of the point sequence and its reverse) and
/// restores the sign, so reversing a loop negates the result bit for bit.
template <class Edge>
double oriented_edge_sum(const std::vector<MPoint>& pts, Edge edge) {
    auto less = [](const MPoint& a, const MPoint& b) {
        return a.theta < b.theta || (a.theta == b.theta && a.theta_dot < b.theta_dot);
    };
    const bool flip = std::lexicographical_compare(pts.rbegin(), pts.rend(), pts.begin(), pts.end(), less);
    const bool palindrome = !flip && !std::lexicographical_compare(pts.begin(), pts.end(), pts.rbegin(), pts.rend(), less);
    if (palindrome) return 0.0;  // out and back along the same path
    double acc = 0.0;
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        acc += flip ? edge(pts[n - 1 - i], pts[n - 2 - i]) : edge(pts[i], pts[i + 1]);
    }
    return flip ? -acc : acc;
}

} // namespace detail

/// -\oint A . dM with A = (theta_dot / 4B, 0), trapezoid rule along the loop.
inline double generalized_line_integral(const MLoop& loop, double B) {
    const auto pts = detail::scaled_closed_loop(loop, B);
    const double acc = detail::oriented_edge_sum(
        pts, [](const MPoint& a, const MPoint& b) { return 0.5 * (a.theta_dot + b.theta_dot) * (b.theta - a.theta); });
    return -0.25 * acc;
}

/// Curvature of the (theta, theta_dot) connection, F = -1/(4B).
inline double generalized_field(double B, double B_min = 1e-6) {
    if (!(B >= B_min)) throw DegenerateField("field strength " + std::to_string(B) + " below B_min");
    return -0.25 / B;
}

/// Oriented (counterclockwise positive) area of the loop in the
/// (theta, theta_dot) plane.
inline double oriented_area(const MLoop& loop) {
    double acc = 0.0;
    const auto& p = loop.points;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) acc += p[i].theta * p[i + 1].theta_dot - p[i + 1].theta * p[i].theta_dot;
    return 0.5 * acc;
}

/// -\int F dM^dM = s / (4B), with s the oriented area (shoelace formula).
inline double stokes_surface_integral(const MLoop& loop, double B) {
    const auto pts = detail::scaled_closed_loop(loop, B);
    detail::require_simple(pts);
    const double acc = detail::oriented_edge_sum(
        pts, [](const MPoint& a, const MPoint& b) { return a.theta * b.theta_dot - b.theta * a.theta_dot; });
    const double scaled_area = 0.5 * acc;  // = s / B
    return -generalized_field(B) * B * scaled_area;
}

} // namespace spinphase
