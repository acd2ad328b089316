#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>

namespace spinphase {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec2c = Eigen::Vector2cd;
using Mat2c = Eigen::Matrix2cd;

inline constexpr double pi = std::numbers::pi;

/// Two-component spin-1/2 state (psi_up, psi_down).
struct Spinor {
    cplx up{1.0, 0.0};
    cplx down{0.0, 0.0};

    Spinor() = default;
    Spinor(cplx u, cplx d) : up(u), down(d) {}
    explicit Spinor(const Vec2c& v) : up(v(0)), down(v(1)) {}

    Vec2c vec() const { return Vec2c(up, down); }
    double norm2() const { return std::norm(up) + std::norm(down); }

    Spinor normalized() const {
        const double n = std::sqrt(norm2());
        return {up / n, down / n};
    }
};

inline cplx inner(const Spinor& a, const Spinor& b) {
    return std::conj(a.up) * b.up + std::conj(a.down) * b.down;
}

/// Mean spin direction on the unit sphere.
struct BlochVector {
    double x = 0.0;
    double y = 0.0;
    double z = 1.0;

    BlochVector() = default;
    BlochVector(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}
    explicit BlochVector(const Vec3& v) : x(v(0)), y(v(1)), z(v(2)) {}

    Vec3 vec() const { return {x, y, z}; }
    double norm2() const { return x * x + y * y + z * z; }

    /// Polar angle measured from +z.
    double polar() const { return std::atan2(std::hypot(x, y), z); }
    double azimuth() const { return std::atan2(y, x); }
};

/// Wrap an angle into (-pi, pi].
inline double wrap_angle(double a) {
    double r = std::remainder(a, 2.0 * pi);
    if (r <= -pi) r += 2.0 * pi;
    return r;
}

} // namespace spinphase
