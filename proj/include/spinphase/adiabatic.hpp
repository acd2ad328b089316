#pragma once

// Second-order adiabatic construction for a spin-1/2 in a slowly varying
// field: adiabatic parameters, the SU(2) and SO(3) diagonalization chains,
// and the closed-form second-order spinor and classical-spin solutions.
//
// Everything here is exact only up to O(eps^3); tests compare at several
// eps to tell truncation error from bugs.

#include "spinphase/errors.hpp"
#include "spinphase/field_profile.hpp"
#include "spinphase/types.hpp"

#include <cmath>
#include <string>

namespace spinphase {

/// Both |delta| and |gamma| must stay below this for the truncated chains.
inline constexpr double perturbative_limit = 0.5;

/// Order of the first neglected term in every truncated transform.
inline constexpr int truncation_order = 3;

struct AdiabaticParams {
    double delta = 0.0;  ///< theta_dot / B
    double gamma = 0.0;  ///< delta_dot / B = (theta_ddot - theta_dot B_dot / B) / B^2
    double B_eff = 0.0;  ///< B (1 + delta^2 / 2)
};

inline AdiabaticParams adiabatic_params(const FieldSample& s) {
    const double B = s.B_mag;
    AdiabaticParams p;
    p.delta = s.theta_dot / B;
    p.gamma = (s.theta_ddot - s.theta_dot * s.B_dot / B) / (B * B);
    p.B_eff = B * (1.0 + 0.5 * p.delta * p.delta);
    return p;
}

inline AdiabaticParams adiabatic_params(const FieldProfile& profile, double t) {
    return adiabatic_params(profile.sample(t));
}

inline void require_perturbative(const AdiabaticParams& p) {
    if (!(std::abs(p.delta) < perturbative_limit) || !(std::abs(p.gamma) < perturbative_limit)) {
        throw PerturbativeRegimeViolation("delta = " + std::to_string(p.delta) + ", gamma = " + std::to_string(p.gamma)
                                          + " outside the perturbative regime");
    }
}

/// SU(2) chain: psi = U0 U1 U2 psi3. U0 is exact, U1 and U2 are truncated.
struct UChain {
    Mat2c U0, U1, U2;
    Mat2c composite() const { return U0 * U1 * U2; }
};

/// SO(3) chain: S = R0 R1 R2 S3, the rotation image of the U chain.
struct RChain {
    Mat3 R0, R1, R2;
    Mat3 composite() const { return R0 * R1 * R2; }
};

inline UChain u_chain(double theta, const AdiabaticParams& p) {
    require_perturbative(p);
    const double c = std::cos(0.5 * theta), s = std::sin(0.5 * theta);
    const double d = p.delta, g = p.gamma;
    const cplx I(0.0, 1.0);
    UChain u;
    u.U0 << c, -s, s, c;
    u.U1 << 1.0 - d * d / 8.0, -I * (d / 2.0), -I * (d / 2.0), 1.0 - d * d / 8.0;
    u.U2 << 1.0, g / 2.0, -g / 2.0, 1.0;
    return u;
}

inline RChain r_chain(double theta, const AdiabaticParams& p) {
    require_perturbative(p);
    const double c = std::cos(theta), s = std::sin(theta);
    const double d = p.delta, g = p.gamma;
    RChain r;
    r.R0 << c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c;
    r.R1 << 1.0, 0.0, 0.0, 0.0, 1.0 - d * d / 2.0, -d, 0.0, d, 1.0 - d * d / 2.0;
    r.R2 << 1.0, 0.0, -g, 0.0, 1.0, 0.0, g, 0.0, 1.0;
    return r;
}

/// Integration constants of the general solution: quantum (alpha, beta) and
/// the classical (A, B, C) they map to.
struct SolutionConstants {
    cplx alpha{1.0, 0.0};
    cplx beta{0.0, 0.0};
    double A = 0.0;
    double B = 0.0;
    double C = 1.0;
};

struct ClassicalConstants {
    double A = 0.0;
    double B = 0.0;
    double C = 1.0;
};

inline ClassicalConstants constants_map(cplx alpha, cplx beta) {
    const double n = std::norm(alpha) + std::norm(beta);
    if (std::abs(n - 1.0) > 1e-9) {
        throw NormalizationError("|alpha|^2 + |beta|^2 = " + std::to_string(n) + ", expected 1");
    }
    const cplx ab = std::conj(alpha) * beta;
    return {2.0 * ab.real(), 2.0 * ab.imag(), std::norm(alpha) - std::norm(beta)};
}

inline SolutionConstants make_constants(cplx alpha, cplx beta) {
    const auto abc = constants_map(alpha, beta);
    return {alpha, beta, abc.A, abc.B, abc.C};
}

/// Quasi-stationary branch aligned with the field (alpha = 1, beta = 0).
inline SolutionConstants aligned_branch() { return make_constants(1.0, 0.0); }

/// Second-order spinor solution in the original basis, written out in
/// closed form (superposition of the two adiabatic columns).
inline Spinor spinor_solution(const SolutionConstants& k, const FieldSample& s, double phase) {
    const AdiabaticParams p = adiabatic_params(s);
    require_perturbative(p);
    const double c = std::cos(0.5 * s.theta), sn = std::sin(0.5 * s.theta);
    const double d = p.delta, g = p.gamma, a = 1.0 - d * d / 8.0;
    const cplx I(0.0, 1.0);
    const cplx up_col_up = a * c + I * (d / 2.0) * sn + (g / 2.0) * sn;
    const cplx up_col_dn = a * sn - I * (d / 2.0) * c - (g / 2.0) * c;
    const cplx dn_col_up = -a * sn - I * (d / 2.0) * c + (g / 2.0) * c;
    const cplx dn_col_dn = a * c - I * (d / 2.0) * sn + (g / 2.0) * sn;
    const cplx ea = k.alpha * std::exp(I * phase), eb = k.beta * std::exp(-I * phase);
    return {ea * up_col_up + eb * dn_col_up, ea * up_col_dn + eb * dn_col_dn};
}

inline Spinor spinor_solution(const SolutionConstants& k, const FieldProfile& profile, double t, double phase) {
    return spinor_solution(k, profile.sample(t), phase);
}

/// Classical spin in the diagonal frame. The azimuth advances as -2 phase,
/// i.e. precession about +z at the rate B_eff.
inline Vec3 diagonal_frame_spin(const SolutionConstants& k, double phase) {
    const double c2 = std::cos(2.0 * phase), s2 = std::sin(2.0 * phase);
    return {k.A * c2 + k.B * s2, k.B * c2 - k.A * s2, k.C};
}

/// Second-order classical solution in the original frame, written out in
/// closed form.
inline BlochVector classical_solution(const SolutionConstants& k, const FieldSample& s, double phase) {
    const AdiabaticParams p = adiabatic_params(s);
    require_perturbative(p);
    const double ct = std::cos(s.theta), st = std::sin(s.theta);
    const double d = p.delta, g = p.gamma, r = 1.0 - d * d / 2.0;
    const Vec3 S3 = diagonal_frame_spin(k, phase);
    // Images of the diagonal-frame axes, truncated at second order.
    const Vec3 ex(ct + g * st, 0.0, -st + g * ct);
    const Vec3 ey(d * st, r, d * ct);
    const Vec3 ez(r * st - g * ct, -d, r * ct + g * st);
    return BlochVector(S3(0) * ex + S3(1) * ey + S3(2) * ez);
}

inline BlochVector classical_solution(const SolutionConstants& k, const FieldProfile& profile, double t, double phase) {
    return classical_solution(k, profile.sample(t), phase);
}

/// Quasi-stationary spin and its adiabatic decomposition.
struct QuasiStationary {
    Vec3 S0 = Vec3::Zero();  ///< field direction
    Vec3 S1 = Vec3::Zero();  ///< first-order (Coriolis) tilt
    Vec3 S2 = Vec3::Zero();  ///< second-order correction
    Vec3 total() const { return S0 + S1 + S2; }
    BlochVector spin() const { return BlochVector(total()); }
};

/// Coordinate-free construction valid for general 3-D field paths:
///   S0 = B/|B|,  S1 = (dS0/dt x S0)/|B|,
///   S2 = (dS1/dt x S0)/|B| - |S1|^2/2 S0,
/// with the time derivatives taken analytically from the profile.
inline QuasiStationary quasi_stationary(const FieldSample& s) {
    require_perturbative(adiabatic_params(s));
    const double B = s.B_mag;
    const Vec3 n = s.e_r(), n_dot = s.direction_dot(), n_ddot = s.direction_ddot();
    QuasiStationary q;
    q.S0 = n;
    q.S1 = n_dot.cross(n) / B;
    const Vec3 S1_dot = n_ddot.cross(n) / B - n_dot.cross(n) * (s.B_dot / (B * B));
    q.S2 = S1_dot.cross(n) / B - 0.5 * q.S1.squaredNorm() * n;
    return q;
}

inline QuasiStationary quasi_stationary(const FieldProfile& profile, double t) {
    return quasi_stationary(profile.sample(t));
}

/// The aligned second-order eigenvector at time t, normalized; used to seed
/// quasi-stationary runs and as the reference for tracked phases.
/// The closed-form chain only covers fields in the x-z plane. Off that plane
/// the spinor points along the coordinate-free quasi-stationary spin, in the
/// spin-sphere gauge regular at the north pole.
inline Spinor second_order_eigenvector(const FieldProfile& profile, double t) {
    if (profile.in_plane()) return spinor_solution(aligned_branch(), profile, t, 0.0).normalized();
    const Vec3 m = quasi_stationary(profile, t).total().normalized();
    const double half = 0.5 * std::atan2(std::hypot(m(0), m(1)), m(2));
    return {std::cos(half), std::polar(std::sin(half), std::atan2(m(1), m(0)))};
}

/// Cartesian in-plane form of the decomposition (field in the x-z plane).
inline QuasiStationary quasi_stationary_in_plane(const FieldSample& s) {
    const AdiabaticParams p = adiabatic_params(s);
    require_perturbative(p);
    const double ct = std::cos(s.theta), st = std::sin(s.theta);
    const double d = p.delta, g = p.gamma;
    QuasiStationary q;
    q.S0 = Vec3(st, 0.0, ct);
    q.S1 = Vec3(0.0, -d, 0.0);
    q.S2 = Vec3(-g * ct - 0.5 * d * d * st, 0.0, g * st - 0.5 * d * d * ct);
    return q;
}

/// Components (radial, polar, azimuthal) of a vector in the local spherical
/// basis at the field direction.
inline Vec3 spherical_components(const FieldSample& s, const Vec3& v) {
    return {v.dot(s.e_r()), v.dot(s.e_theta()), v.dot(s.e_phi())};
}

} // namespace spinphase
