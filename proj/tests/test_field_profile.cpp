#include "spinphase/field_profile.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace spinphase;

namespace {

std::vector<double> grid(double a, double b, int n) {
    std::vector<double> g;
    for (int k = 0; k <= n; ++k) g.push_back(a + (b - a) * k / n);
    return g;
}

} // namespace

TEST(FieldProfile, ConstantAlongZ) {
    const FieldSample s = FieldProfile::constant(1.0).sample(5.0);
    EXPECT_DOUBLE_EQ(s.B_vec(0), 0.0);
    EXPECT_DOUBLE_EQ(s.B_vec(1), 0.0);
    EXPECT_DOUBLE_EQ(s.B_vec(2), 1.0);
    EXPECT_EQ(s.theta, 0.0);
    EXPECT_EQ(s.theta_dot, 0.0);
    EXPECT_EQ(s.B_dot, 0.0);
}

TEST(FieldProfile, UniformRotationAtZero) {
    const FieldSample s = FieldProfile::uniform_rotation(1.0, 0.1).sample(0.0);
    EXPECT_EQ(s.theta, 0.0);
    EXPECT_DOUBLE_EQ(s.theta_dot, 0.1);
    EXPECT_EQ(s.theta_ddot, 0.0);
    EXPECT_EQ(s.B_dot, 0.0);
}

TEST(FieldProfile, SinusoidalAtZero) {
    const FieldSample s = FieldProfile::sinusoidal_angle(1.0, 0.3, 0.05).sample(0.0);
    EXPECT_EQ(s.theta, 0.0);
    EXPECT_NEAR(s.theta_dot, 0.015, 1e-15);
    EXPECT_EQ(s.theta_ddot, 0.0);
}

TEST(FieldProfile, SinusoidalClosedFormAwayFromZero) {
    const double th0 = 0.3, W = 0.05, t = 17.0;
    const FieldSample s = FieldProfile::sinusoidal_angle(1.0, th0, W).sample(t);
    EXPECT_NEAR(s.theta, th0 * std::sin(W * t), 1e-15);
    EXPECT_NEAR(s.theta_dot, th0 * W * std::cos(W * t), 1e-15);
    EXPECT_NEAR(s.theta_ddot, -th0 * W * W * std::sin(W * t), 1e-15);
}

TEST(FieldProfile, InPlaceHasNoAzimuth) {
    for (const auto& p : {FieldProfile::uniform_rotation(1.0, 0.1), FieldProfile::sinusoidal_angle(1.0, 0.3, 0.05)}) {
        EXPECT_TRUE(p.in_plane());
        for (double t : grid(0.0, 100.0, 50)) {
            const FieldSample s = p.sample(t);
            EXPECT_EQ(s.phi, 0.0);
            EXPECT_EQ(s.phi_dot, 0.0);
            EXPECT_EQ(s.B_vec(1), 0.0);
        }
    }
    EXPECT_FALSE(FieldProfile::cone_3d(1.0, pi / 3, 0.1).in_plane());
}

TEST(FieldProfile, CartesianReconstruction) {
    const std::vector<double> a{0.1, 0.2, -0.01};
    const std::vector<FieldProfile> profiles{
        FieldProfile::constant(2.0, 0.4, 1.1),
        FieldProfile::uniform_rotation(1.0, 0.1),
        FieldProfile::sinusoidal_angle(1.0, 0.3, 0.05, 0.7).with_param("B1", 0.1).with_param("OmegaB", 0.01),
        FieldProfile::polynomial_angle(1.5, a),
        FieldProfile::cone_3d(1.0, pi / 3, 0.2, 0.5),
    };
    for (const auto& p : profiles) {
        for (double t : grid(0.0, 30.0, 60)) {
            const FieldSample s = p.sample(t);
            const Vec3 rebuilt = s.B_mag * Vec3(std::sin(s.theta) * std::cos(s.phi), std::sin(s.theta) * std::sin(s.phi),
                                                std::cos(s.theta));
            EXPECT_LE((rebuilt - s.B_vec).norm(), 1e-12 * s.B_mag);
        }
    }
}

TEST(FieldProfile, EpsilonScaling) {
    const double eps = 0.03;
    const std::vector<FieldProfile> family{
        FieldProfile::uniform_rotation(1.0, 0.7),
        FieldProfile::sinusoidal_angle(1.0, 0.3, 1.0, 0.2),
        FieldProfile::cone_3d(1.0, pi / 4, 1.3),
    };
    for (const auto& unit : family) {
        const FieldProfile scaled = unit.with_epsilon(eps);
        for (double t : grid(0.0, 200.0, 40)) {
            const FieldSample a = scaled.sample(t), b = unit.sample(eps * t);
            EXPECT_EQ(a.theta, b.theta);
            EXPECT_EQ(a.phi, b.phi);
            EXPECT_NEAR(a.theta_dot, eps * b.theta_dot, 1e-16);
            EXPECT_NEAR(a.theta_ddot, eps * eps * b.theta_ddot, 1e-16);
            EXPECT_NEAR(a.phi_dot, eps * b.phi_dot, 1e-16);
        }
    }
}

TEST(FieldProfile, DerivativeSelftest) {
    const auto g = grid(0.0, 100.0, 25);
    EXPECT_LE(derivative_selftest(FieldProfile::uniform_rotation(1.0, 0.1), g, 1e-4), 1e-7);
    EXPECT_EQ(derivative_selftest(FieldProfile::constant(1.0, 0.3), g, 1e-4), 0.0);
    const auto period = grid(0.0, 2.0 * pi / 0.05, 40);
    EXPECT_LE(derivative_selftest(FieldProfile::sinusoidal_angle(1.0, 0.3, 0.05), period, 1e-3), 1e-6);
    const std::vector<double> a{0.0, 0.1, 0.02, -0.003};
    EXPECT_LE(derivative_selftest(FieldProfile::polynomial_angle(1.0, a), grid(0.0, 5.0, 20), 1e-4), 1e-7);
    EXPECT_LE(derivative_selftest(FieldProfile::cone_3d(1.0, 1.0, 0.1).with_param("B1", 0.1).with_param("OmegaB", 0.5),
                                  g, 1e-4),
              1e-7);
    EXPECT_THROW(derivative_selftest(FieldProfile::constant(1.0), g, 0.0), DomainError);
}

TEST(FieldProfile, MagnitudeModulation) {
    // B(t) = 1 + 0.1 sin(0.01 t).
    const FieldProfile p = FieldProfile::uniform_rotation(1.0, 0.0).with_param("B1", 0.1).with_param("OmegaB", 0.01);
    const FieldSample s = p.sample(50.0);
    EXPECT_NEAR(s.B_mag, 1.0 + 0.1 * std::sin(0.5), 1e-15);
    EXPECT_NEAR(s.B_dot, 0.001 * std::cos(0.5), 1e-15);
}

TEST(FieldProfile, TabulatedFollowsSmoothData) {
    std::vector<TableRow> rows;
    for (int k = 0; k <= 400; ++k) {
        const double s = 0.05 * k;
        rows.push_back({s, 1.0 + 0.05 * std::sin(s), 0.3 * std::sin(0.5 * s), 0.0});
    }
    const FieldProfile p = FieldProfile::tabulated(rows, 1e-3);
    EXPECT_TRUE(p.in_plane());
    for (double t : grid(1.0, 19.0, 30)) {
        const FieldSample s = p.sample(t);
        EXPECT_NEAR(s.theta, 0.3 * std::sin(0.5 * t), 1e-6);
        EXPECT_NEAR(s.theta_dot, 0.15 * std::cos(0.5 * t), 1e-5);
        EXPECT_NEAR(s.theta_ddot, -0.075 * std::sin(0.5 * t), 1e-3);
        EXPECT_NEAR(s.B_mag, 1.0 + 0.05 * std::sin(t), 1e-6);
    }
    EXPECT_THROW(p.sample(20.5), DomainError);
    EXPECT_DOUBLE_EQ(p.domain().end, 20.0);
}

TEST(FieldProfile, Errors) {
    const FieldProfile p = FieldProfile::uniform_rotation(1.0, 0.1).with_domain({0.0, 10.0});
    EXPECT_THROW(p.sample(-1.0), DomainError);
    EXPECT_THROW(p.sample(10.5), DomainError);
    EXPECT_NO_THROW(p.sample(10.0));

    // Modulation drives |B| through zero.
    const FieldProfile weak = FieldProfile::uniform_rotation(1.0, 0.1).with_param("B1", 1.5).with_param("OmegaB", 1.0);
    EXPECT_THROW(weak.sample(-pi / 2), DegenerateField);
    EXPECT_THROW(FieldProfile::constant(1e-8).sample(0.0), DegenerateField);
    EXPECT_NO_THROW(FieldProfile::constant(1e-8).with_param("B_min", 1e-9).sample(0.0));

    EXPECT_THROW(FieldProfile::make(ProfileKind::uniform_rotation, {{"B0", 1.0}}), ConfigError);
    EXPECT_THROW(FieldProfile::make(ProfileKind::constant, {{"B0", 1.0}, {"omega", 1.0}}), ConfigError);
    EXPECT_THROW(FieldProfile::constant(1.0).with_epsilon(0.0), ConfigError);
    EXPECT_THROW(profile_kind_from_string("helix"), ConfigError);
    EXPECT_EQ(profile_kind_from_string("sinusoidal"), ProfileKind::sinusoidal_angle);
}
