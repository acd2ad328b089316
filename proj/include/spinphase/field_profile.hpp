#pragma once

// Time-dependent magnetic field trajectories B(eps t) with exact derivatives.

#include "spinphase/errors.hpp"
#include "spinphase/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spinphase {

enum class ProfileKind {
    constant,
    uniform_rotation,
    polynomial_angle,
    sinusoidal_angle,
    cone_3d,
    user_tabulated,
};

inline const char* to_string(ProfileKind k) {
    switch (k) {
    case ProfileKind::constant: return "constant";
    case ProfileKind::uniform_rotation: return "uniform_rotation";
    case ProfileKind::polynomial_angle: return "polynomial_angle";
    case ProfileKind::sinusoidal_angle: return "sinusoidal_angle";
    case ProfileKind::cone_3d: return "cone_3d";
    case ProfileKind::user_tabulated: return "user_tabulated";
    }
    return "unknown";
}

inline ProfileKind profile_kind_from_string(const std::string& s) {
    for (auto k : {ProfileKind::constant, ProfileKind::uniform_rotation, ProfileKind::polynomial_angle,
                   ProfileKind::sinusoidal_angle, ProfileKind::cone_3d, ProfileKind::user_tabulated}) {
        if (s == to_string(k)) return k;
    }
    // Short aliases accepted on the command line.
    if (s == "sinusoidal") return ProfileKind::sinusoidal_angle;
    if (s == "polynomial") return ProfileKind::polynomial_angle;
    if (s == "cone") return ProfileKind::cone_3d;
    if (s == "tabulated") return ProfileKind::user_tabulated;
    throw ConfigError("unknown profile kind '" + s + "'");
}

/// Field value and derivatives at one instant. Angles are unwrapped.
struct FieldSample {
    double t = 0.0;
    Vec3 B_vec = Vec3::Zero();
    double B_mag = 0.0;
    double theta = 0.0;
    double phi = 0.0;
    double theta_dot = 0.0;
    double theta_ddot = 0.0;
    double phi_dot = 0.0;
    double phi_ddot = 0.0;
    double B_dot = 0.0;

    Vec3 e_r() const {
        return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
    }
    Vec3 e_theta() const {
        return {std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi), -std::sin(theta)};
    }
    Vec3 e_phi() const { return {-std::sin(phi), std::cos(phi), 0.0}; }

    /// d/dt of the unit field direction.
    Vec3 direction_dot() const { return theta_dot * e_theta() + phi_dot * std::sin(theta) * e_phi(); }

    /// d^2/dt^2 of the unit field direction.
    Vec3 direction_ddot() const {
        const double s = std::sin(theta), c = std::cos(theta);
        const Vec3 er = e_r(), et = e_theta(), ep = e_phi();
        const Vec3 et_dot = -theta_dot * er + phi_dot * c * ep;
        const Vec3 ep_dot = -phi_dot * (s * er + c * et);
        return theta_ddot * et + theta_dot * et_dot + (phi_ddot * s + phi_dot * theta_dot * c) * ep
             + phi_dot * s * ep_dot;
    }

    /// d/dt of the field vector B = |B| e_r.
    Vec3 B_vec_dot() const { return B_dot * e_r() + B_mag * direction_dot(); }
};

struct TimeDomain {
    double begin = -std::numeric_limits<double>::infinity();
    double end = std::numeric_limits<double>::infinity();

    bool contains(double t) const { return t >= begin && t <= end; }
    bool operator==(const TimeDomain&) const = default;
};

/// One tabulated node in the scaled time s = eps t.
struct TableRow {
    double s = 0.0;
    double B = 1.0;
    double theta = 0.0;
    double phi = 0.0;

    bool operator==(const TableRow&) const = default;
};

namespace detail {

/// Natural cubic spline through (x_i, y_i).
class CubicSpline {
public:
    CubicSpline() = default;
    CubicSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        m_.assign(n, 0.0);
        if (n < 3) return;
        // Tridiagonal solve for second derivatives.
        std::vector<double> c(n, 0.0), d(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
            const double a = h0, b = 2.0 * (h0 + h1), cc = h1;
            const double r = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
            const double denom = b - a * c[i - 1];
            c[i] = cc / denom;
            d[i] = (r - a * d[i - 1]) / denom;
        }
        for (std::size_t i = n - 2; i >= 1; --i) {
            m_[i] = d[i] - c[i] * m_[i + 1];
            if (i == 1) break;
        }
    }

    double operator()(double x) const {
        const std::size_t n = x_.size();
        if (n == 1) return y_[0];
        std::size_t i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin());
        i = std::clamp<std::size_t>(i, 1, n - 1) - 1;
        const double h = x_[i + 1] - x_[i];
        const double a = (x_[i + 1] - x) / h, b = (x - x_[i]) / h;
        return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
    }

private:
    std::vector<double> x_, y_, m_;
};

inline double poly_eval(std::span<const double> a, double s, int deriv) {
    double acc = 0.0;
    for (std::size_t k = static_cast<std::size_t>(deriv); k < a.size(); ++k) {
        double coeff = a[k];
        for (int j = 0; j < deriv; ++j) coeff *= static_cast<double>(k - static_cast<std::size_t>(j));
        acc += coeff * std::pow(s, static_cast<double>(k - static_cast<std::size_t>(deriv)));
    }
    return acc;
}

} // namespace detail

/// An immutable, time-parameterized magnetic field. Every analytic kind is a
/// function of the scaled time s = epsilon * t, so angle derivatives pick up
/// one factor of epsilon per time derivative.
///
/// Parameters by kind (all kinds also accept B_min, default 1e-6):
///   constant           B0, theta, phi
///   uniform_rotation   B0, omega, theta_start            theta = theta_start + omega s
///   polynomial_angle   B0, a0..a5                         theta = sum a_k s^k
///   sinusoidal_angle   B0, theta0, Omega, theta_c        theta = theta_c + theta0 sin(Omega s)
///   cone_3d            B0, theta, Omega, phi_start       phi = phi_start + Omega s
///   user_tabulated     fd_step                            spline through table rows
/// The in-plane kinds and cone_3d accept an optional magnitude modulation
/// B(s) = B0 + B1 sin(OmegaB s).
class FieldProfile {
public:
    using Params = std::map<std::string, double>;

    static FieldProfile make(ProfileKind kind, Params params, double epsilon = 1.0, TimeDomain domain = {},
                             std::vector<TableRow> table = {}) {
        FieldProfile p;
        p.kind_ = kind;
        p.params_ = std::move(params);
        p.epsilon_ = epsilon;
        p.domain_ = domain;
        p.table_ = std::move(table);
        p.validate();
        return p;
    }

    static FieldProfile constant(double B0, double theta = 0.0, double phi = 0.0) {
        return make(ProfileKind::constant, {{"B0", B0}, {"theta", theta}, {"phi", phi}});
    }
    static FieldProfile uniform_rotation(double B0, double omega, double theta_start = 0.0) {
        return make(ProfileKind::uniform_rotation, {{"B0", B0}, {"omega", omega}, {"theta_start", theta_start}});
    }
    static FieldProfile sinusoidal_angle(double B0, double theta0, double Omega, double theta_c = 0.0) {
        return make(ProfileKind::sinusoidal_angle,
                     {{"B0", B0}, {"theta0", theta0}, {"Omega", Omega}, {"theta_c", theta_c}});
    }
    static FieldProfile polynomial_angle(double B0, std::span<const double> coeffs) {
        Params p{{"B0", B0}};
        for (std::size_t k = 0; k < coeffs.size(); ++k) p["a" + std::to_string(k)] = coeffs[k];
        return make(ProfileKind::polynomial_angle, std::move(p));
    }
    static FieldProfile cone_3d(double B0, double cone_theta, double Omega, double phi_start = 0.0) {
        return make(ProfileKind::cone_3d, {{"B0", B0}, {"theta", cone_theta}, {"Omega", Omega}, {"phi_start", phi_start}});
    }
    static FieldProfile tabulated(std::vector<TableRow> rows, double fd_step = 1e-4) {
        return make(ProfileKind::user_tabulated, {{"fd_step", fd_step}}, 1.0, {}, std::move(rows));
    }

    FieldProfile with_epsilon(double eps) const {
        return make(kind_, params_, eps, domain_, table_);
    }
    FieldProfile with_domain(TimeDomain d) const { return make(kind_, params_, epsilon_, d, table_); }
    FieldProfile with_param(const std::string& name, double v) const {
        Params p = params_;
        p[name] = v;
        return make(kind_, std::move(p), epsilon_, domain_, table_);
    }

    ProfileKind kind() const { return kind_; }
    const Params& params() const { return params_; }
    double epsilon() const { return epsilon_; }
    const TimeDomain& declared_domain() const { return domain_; }
    const std::vector<TableRow>& table() const { return table_; }
    double b_min() const { return param("B_min", 1e-6); }
    double fd_step() const { return param("fd_step", 1e-4); }

    /// Effective domain: the declared domain intersected with the table range.
    TimeDomain domain() const {
        TimeDomain d = domain_;
        if (kind_ == ProfileKind::user_tabulated) {
            d.begin = std::max(d.begin, table_.front().s / epsilon_);
            d.end = std::min(d.end, table_.back().s / epsilon_);
        }
        return d;
    }

    /// True when the field stays in the (x, z) plane (phi == 0 identically).
    bool in_plane() const {
        switch (kind_) {
        case ProfileKind::constant: return param("phi", 0.0) == 0.0;
        case ProfileKind::cone_3d: return false;
        case ProfileKind::user_tabulated:
            return std::all_of(table_.begin(), table_.end(), [](const TableRow& r) { return r.phi == 0.0; });
        default: return true;
        }
    }

    double param(const std::string& name, double fallback) const {
        auto it = params_.find(name);
        return it == params_.end() ? fallback : it->second;
    }

    FieldSample sample(double t) const {
        const TimeDomain d = domain();
        if (!d.contains(t) || !std::isfinite(t)) {
            throw DomainError("t = " + std::to_string(t) + " outside profile domain [" + std::to_string(d.begin) + ", "
                              + std::to_string(d.end) + "]");
        }
        const double s = epsilon_ * t;
        const double e1 = epsilon_, e2 = epsilon_ * epsilon_;

        // Scaled-time values: angle, phi and magnitude with their s-derivatives.
        double th = 0, th1 = 0, th2 = 0, ph = 0, ph1 = 0, ph2 = 0, b = 0, b1 = 0;
        const double B0 = param("B0", 1.0);
        const double Bm = param("B1", 0.0), Wm = param("OmegaB", 0.0);
        b = B0 + Bm * std::sin(Wm * s);
        b1 = Bm * Wm * std::cos(Wm * s);

        switch (kind_) {
        case ProfileKind::constant:
            th = param("theta", 0.0);
            ph = param("phi", 0.0);
            b = B0;
            b1 = 0.0;
            break;
        case ProfileKind::uniform_rotation: {
            const double w = params_.at("omega");
            th = param("theta_start", 0.0) + w * s;
            th1 = w;
            break;
        }
        case ProfileKind::polynomial_angle: {
            const auto a = poly_coeffs();
            th = detail::poly_eval(a, s, 0);
            th1 = detail::poly_eval(a, s, 1);
            th2 = detail::poly_eval(a, s, 2);
            break;
        }
        case ProfileKind::sinusoidal_angle: {
            const double a = params_.at("theta0"), w = params_.at("Omega");
            th = param("theta_c", 0.0) + a * std::sin(w * s);
            th1 = a * w * std::cos(w * s);
            th2 = -a * w * w * std::sin(w * s);
            break;
        }
        case ProfileKind::cone_3d: {
            const double w = params_.at("Omega");
            th = params_.at("theta");
            ph = param("phi_start", 0.0) + w * s;
            ph1 = w;
            break;
        }
        case ProfileKind::user_tabulated:
            tabulated_values(s, th, th1, th2, ph, ph1, ph2, b, b1);
            break;
        }

        FieldSample out;
        out.t = t;
        out.B_mag = b;
        out.theta = th;
        out.phi = ph;
        out.theta_dot = e1 * th1;
        out.theta_ddot = e2 * th2;
        out.phi_dot = e1 * ph1;
        out.phi_ddot = e2 * ph2;
        out.B_dot = e1 * b1;
        out.B_vec = b * out.e_r();
        if (!(b >= b_min())) {
            throw DegenerateField("|B| = " + std::to_string(b) + " below B_min = " + std::to_string(b_min()) + " at t = "
                                  + std::to_string(t));
        }
        return out;
    }

private:
    FieldProfile() = default;

    std::vector<double> poly_coeffs() const {
        std::vector<double> a;
        for (int k = 0; k <= 5; ++k) a.push_back(param("a" + std::to_string(k), 0.0));
        return a;
    }

    void validate() {
        if (!(epsilon_ > 0.0) || !std::isfinite(epsilon_)) throw ConfigError("epsilon must be positive and finite");
        if (!(domain_.begin <= domain_.end)) throw ConfigError("t_domain must satisfy begin <= end");

        std::vector<std::string> allowed{"B_min"};
        std::vector<std::string> required;
        const std::vector<std::string> modulation{"B1", "OmegaB"};
        auto add = [](std::vector<std::string>& v, std::initializer_list<const char*> names) {
            for (auto n : names) v.emplace_back(n);
        };
        switch (kind_) {
        case ProfileKind::constant:
            add(allowed, {"B0", "theta", "phi"});
            add(required, {"B0"});
            break;
        case ProfileKind::uniform_rotation:
            add(allowed, {"B0", "omega", "theta_start", "B1", "OmegaB"});
            add(required, {"B0", "omega"});
            break;
        case ProfileKind::polynomial_angle:
            add(allowed, {"B0", "a0", "a1", "a2", "a3", "a4", "a5", "B1", "OmegaB"});
            add(required, {"B0"});
            break;
        case ProfileKind::sinusoidal_angle:
            add(allowed, {"B0", "theta0", "Omega", "theta_c", "B1", "OmegaB"});
            add(required, {"B0", "theta0", "Omega"});
            break;
        case ProfileKind::cone_3d:
            add(allowed, {"B0", "theta", "Omega", "phi_start", "B1", "OmegaB"});
            add(required, {"B0", "theta", "Omega"});
            break;
        case ProfileKind::user_tabulated:
            add(allowed, {"fd_step"});
            break;
        }
        for (const auto& [name, value] : params_) {
            if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
                throw ConfigError("parameter '" + name + "' not accepted by profile kind " + to_string(kind_));
            }
            if (!std::isfinite(value)) throw ConfigError("parameter '" + name + "' is not finite");
        }
        for (const auto& name : required) {
            if (!params_.count(name)) throw ConfigError("profile kind " + std::string(to_string(kind_)) + " requires '" + name + "'");
        }
        if (!(b_min() > 0.0)) throw ConfigError("B_min must be positive");

        if (kind_ == ProfileKind::user_tabulated) {
            if (table_.size() < 2) throw ConfigError("user_tabulated needs at least two table rows");
            for (std::size_t i = 1; i < table_.size(); ++i) {
                if (!(table_[i].s > table_[i - 1].s)) throw ConfigError("table times must be strictly increasing");
            }
            if (!(fd_step() > 0.0)) throw ConfigError("fd_step must be positive");
            std::vector<double> s, b, th, ph;
            for (const auto& r : table_) {
                s.push_back(r.s);
                b.push_back(r.B);
                th.push_back(r.theta);
                ph.push_back(r.phi);
            }
            spline_B_ = detail::CubicSpline(s, b);
            spline_theta_ = detail::CubicSpline(s, th);
            spline_phi_ = detail::CubicSpline(s, ph);
        } else if (!table_.empty()) {
            throw ConfigError("table rows are only accepted by user_tabulated profiles");
        }
    }

    void tabulated_values(double s, double& th, double& th1, double& th2, double& ph, double& ph1, double& ph2,
                          double& b, double& b1) const {
        const double h = fd_step();
        const double lo = table_.front().s, hi = table_.back().s;
        // Shift the stencil inward near the ends and extrapolate the slope linearly.
        const double c = (hi - lo > 2.0 * h) ? std::clamp(s, lo + h, hi - h) : 0.5 * (lo + hi);
        auto diff = [&](const detail::CubicSpline& f, double& v, double& d1, double& d2) {
            const double fm = f(c - h), f0 = f(c), fp = f(c + h);
            d2 = (fp - 2.0 * f0 + fm) / (h * h);
            d1 = (fp - fm) / (2.0 * h) + d2 * (s - c);
            v = f(s);
        };
        double unused = 0.0;
        diff(spline_theta_, th, th1, th2);
        diff(spline_phi_, ph, ph1, ph2);
        diff(spline_B_, b, b1, unused);
    }

    ProfileKind kind_ = ProfileKind::constant;
    Params params_;
    double epsilon_ = 1.0;
    TimeDomain domain_;
    std::vector<TableRow> table_;
    detail::CubicSpline spline_B_, spline_theta_, spline_phi_;
};

inline FieldSample sample(const FieldProfile& profile, double t) { return profile.sample(t); }

/// Largest scaled mismatch between the profile's derivatives and central
/// differences of its own lower-order values, over a grid of times.
/// Each mismatch is divided by max(1, |derivative|).
inline double derivative_selftest(const FieldProfile& profile, std::span<const double> t_grid, double h) {
    if (!(h > 0.0)) throw DomainError("finite-difference step must be positive");
    double worst = 0.0;
    auto track = [&](double analytic, double numeric) {
        worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)));
    };
    for (double t : t_grid) {
        const FieldSample m = profile.sample(t - h), c = profile.sample(t), p = profile.sample(t + h);
        track(c.theta_dot, (p.theta - m.theta) / (2.0 * h));
        track(c.theta_ddot, (p.theta_dot - m.theta_dot) / (2.0 * h));
        track(c.phi_dot, (p.phi - m.phi) / (2.0 * h));
        track(c.phi_ddot, (p.phi_dot - m.phi_dot) / (2.0 * h));
        track(c.B_dot, (p.B_mag - m.B_mag) / (2.0 * h));
    }
    return worst;
}

} // namespace spinphase
