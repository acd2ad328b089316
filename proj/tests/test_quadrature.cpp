#include "spinphase/quadrature.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace spinphase;

TEST(Romberg, PolynomialAndTrig) {
    EXPECT_NEAR(romberg([](double x) { return x * x * x; }, 0.0, 2.0), 4.0, 1e-13);
    EXPECT_NEAR(romberg([](double x) { return std::sin(x); }, 0.0, pi), 2.0, 1e-12);
    // Long span split into panels; sin over whole periods.
    EXPECT_NEAR(romberg([](double x) { return 1.0 + 0.1 * std::sin(0.01 * x); }, 0.0, 2.0 * pi / 0.01), 2.0 * pi / 0.01,
                1e-9);
}

TEST(Romberg, OrientationAndEmptySpan) {
    auto f = [](double x) { return std::exp(x); };
    EXPECT_NEAR(romberg(f, 1.0, 0.0), -(std::exp(1.0) - 1.0), 1e-13);
    EXPECT_EQ(romberg(f, 3.0, 3.0), 0.0);
}

TEST(PathIntegral, ExactForCubicsOnUnevenGrid) {
    std::vector<double> t{0.0, 0.1, 0.35, 0.5, 0.9, 1.2, 1.25, 2.0};
    std::vector<double> f, g;
    for (double x : t) {
        f.push_back(x * x);
        g.push_back(x);
    }
    EXPECT_NEAR(path_integral(t, f, g), 8.0 / 3.0, 1e-13);
    EXPECT_NEAR(sampled_integral(t, f), 8.0 / 3.0, 1e-13);
}

TEST(PathIntegral, FourthOrderOnSmoothData) {
    auto err = [](int n) {
        std::vector<double> t, f, g;
        for (int k = 0; k <= n; ++k) {
            const double x = 2.0 * pi * k / n;
            t.push_back(x);
            f.push_back(1.0 + std::cos(x) * std::cos(x));
            g.push_back(std::sin(x));
        }
        // \int (1 + cos^2) d(sin) over a period vanishes.
        return std::abs(path_integral(t, f, g));
    };
    const double e1 = err(40), e2 = err(80);
    EXPECT_LT(e2, e1 / 12.0);
    EXPECT_LT(e2, 5e-6);
}

TEST(PathIntegral, TrapezoidFallbackAndTrivial) {
    std::vector<double> t{0.0, 1.0, 2.0}, f{1.0, 1.0, 1.0};
    EXPECT_DOUBLE_EQ(sampled_integral(t, f), 2.0);
    std::vector<double> one{1.0};
    EXPECT_EQ(sampled_integral(one, one), 0.0);
}

TEST(Unwrap, RemovesTwoPiJumps) {
    std::vector<double> raw{3.0, -3.0, -2.5, 3.1, -3.1};
    const auto u = unwrap(raw);
    EXPECT_NEAR(u[1], -3.0 + 2.0 * pi, 1e-15);
    for (std::size_t i = 1; i < u.size(); ++i) EXPECT_LT(std::abs(u[i] - u[i - 1]), pi);
    EXPECT_NEAR(wrap_angle(3.0 * pi), pi, 1e-15);
    EXPECT_NEAR(wrap_angle(-pi), pi, 1e-15);
}
