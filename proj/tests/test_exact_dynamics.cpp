#include "spinphase/exact_dynamics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace spinphase;

namespace {

const cplx I(0.0, 1.0);

// exp(-i t (b . sigma) / 2) for a constant vector b, written out by hand.
Mat2c precession(const Vec3& b, double t) {
    const double m = b.norm(), a = 0.5 * m * t;
    const Vec3 n = b / m;
    Mat2c ns;
    ns << n(2), n(0) - I * n(1), n(0) + I * n(1), -n(2);
    return std::cos(a) * Mat2c::Identity() - I * std::sin(a) * ns;
}

// Field rotating in the x-z plane at rate w: in the frame co-rotating with the
// field the Hamiltonian is the static B sz/2 - w sy/2, so
// psi(t) = R(t) exp(-i H_rot t) R(0)^dagger psi(0) with R = exp(-i sy w t / 2).
Spinor rotating_frame_oracle(double B, double w, const Spinor& psi0, double t) {
    auto R = [&](double s) {
        Mat2c r;
        r << std::cos(0.5 * w * s), -std::sin(0.5 * w * s), std::sin(0.5 * w * s), std::cos(0.5 * w * s);
        return r;
    };
    // H_rot = (B sz - w sy)/2 = (b . sigma)/2 with b = (0, -w, B).
    const Mat2c U = R(t) * precession(Vec3(0.0, -w, B), t) * R(0.0).adjoint();
    return Spinor(Vec2c(U * psi0.vec()));
}

double dist(const Spinor& a, const Spinor& b) { return (a.vec() - b.vec()).norm(); }

IntegratorConfig tight() {
    IntegratorConfig c;
    c.rel_tol = 1e-10;
    c.abs_tol = 1e-12;
    return c;
}

} // namespace

TEST(SpinorToBloch, Conventions) {
    const double r = 1.0 / std::sqrt(2.0);
    const BlochVector up = spinor_to_bloch({1.0, 0.0});
    EXPECT_EQ(up.z, 1.0);
    const BlochVector x = spinor_to_bloch({r, r});
    EXPECT_NEAR(x.x, 1.0, 1e-15);
    EXPECT_NEAR(x.y, 0.0, 1e-15);
    // Direct matrix evaluation of <psi|sigma_y|psi> for (1, i)/sqrt2.
    const Spinor yi{r, I * r};
    Mat2c sy;
    sy << 0.0, -I, I, 0.0;
    const double sy_direct = (yi.vec().adjoint() * sy * yi.vec())(0).real();
    const BlochVector y = spinor_to_bloch(yi);
    EXPECT_NEAR(y.y, sy_direct, 1e-15);
    EXPECT_NEAR(y.y, 1.0, 1e-15);
    EXPECT_NEAR(y.x, 0.0, 1e-15);
}

TEST(SpinorToBloch, RoundTripThroughNorthGauge) {
    for (double th : {0.1, 1.0, 2.0, 3.0}) {
        for (double ph : {-2.0, 0.0, 0.7, 3.0}) {
            const BlochVector S(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
            const BlochVector back = spinor_to_bloch(bloch_to_spinor(S));
            EXPECT_LE((back.vec() - S.vec()).norm(), 1e-14);
            EXPECT_GE(bloch_to_spinor(S).up.real(), 0.0);
        }
    }
}

TEST(Schrodinger, ConstantFieldEigenstate) {
    const auto traj = integrate_schrodinger(FieldProfile::constant(1.0), {1.0, 0.0}, 0.0, 10.0, tight());
    const Spinor expected{std::exp(-5.0 * I), 0.0};
    EXPECT_LE(dist(traj.back(), expected), 1e-8);
    EXPECT_DOUBLE_EQ(traj.times.back(), 10.0);
}

TEST(Schrodinger, FullPrecessionFlipsSign) {
    const double r = 1.0 / std::sqrt(2.0);
    const Spinor psi0{r, r};
    const auto traj = integrate_schrodinger(FieldProfile::constant(1.0), psi0, 0.0, 2.0 * pi, tight());
    EXPECT_LE(dist(traj.back(), Spinor(-r, -r)), 1e-8);
}

TEST(Schrodinger, TiltedConstantFieldAgainstClosedForm) {
    const FieldProfile p = FieldProfile::constant(1.3, 0.7, 0.4);
    const Spinor psi0{0.6, 0.8 * I};
    const auto traj = integrate_schrodinger(p, psi0, 0.0, 25.0, tight());
    const Spinor expected(Vec2c(precession(p.sample(0.0).B_vec, 25.0) * psi0.vec()));
    EXPECT_LE(dist(traj.back(), expected), 1e-8);
}

TEST(Schrodinger, RotatingFrameOracle) {
    const double r = 1.0 / std::sqrt(2.0);
    const Spinor psi0{r, I * r};
    IntegratorConfig cfg = tight();
    cfg.dense_output_grid = uniform_grid(0.0, 200.0, 50);
    const auto traj = integrate_schrodinger(FieldProfile::uniform_rotation(1.0, 0.1), psi0, 0.0, 200.0, cfg);
    ASSERT_EQ(traj.size(), 51u);
    for (std::size_t i = 0; i < traj.size(); ++i) {
        EXPECT_LE(dist(traj.states[i], rotating_frame_oracle(1.0, 0.1, psi0, traj.times[i])), 2e-7) << traj.times[i];
    }
}

TEST(Bloch, QuarterTurnAboutZ) {
    // S' = B x S with B = z: x rotates toward +y.
    const auto traj = integrate_bloch(FieldProfile::constant(1.0), {1.0, 0.0, 0.0}, 0.0, pi / 2, tight());
    EXPECT_NEAR(traj.back().x, 0.0, 1e-9);
    EXPECT_NEAR(traj.back().y, 1.0, 1e-9);
    EXPECT_NEAR(traj.back().z, 0.0, 1e-9);
}

TEST(Bloch, AlignedSpinIsStationary) {
    const auto traj = integrate_bloch(FieldProfile::constant(2.0), {0.0, 0.0, 1.0}, 0.0, 50.0, tight());
    for (const auto& S : traj.states) EXPECT_EQ(S.z, 1.0);
}

TEST(Ehrenfest, SpinorAndBlochAgree) {
    const std::vector<FieldProfile> profiles{
        FieldProfile::sinusoidal_angle(1.0, 0.3, 0.05),
        FieldProfile::cone_3d(1.0, pi / 3, 0.2).with_param("B1", 0.2).with_param("OmegaB", 0.05),
        FieldProfile::uniform_rotation(1.0, 0.1),
    };
    const Spinor psi0{0.6, 0.8 * std::exp(0.3 * I)};
    for (const auto& p : profiles) {
        IntegratorConfig cfg = tight();
        cfg.dense_output_grid = uniform_grid(0.0, 120.0, 240);
        const auto a = integrate_schrodinger(p, psi0, 0.0, 120.0, cfg);
        const auto b = integrate_bloch(p, spinor_to_bloch(psi0), 0.0, 120.0, cfg);
        ASSERT_EQ(a.size(), b.size());
        double worst = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i)
            worst = std::max(worst, (spinor_to_bloch(a.states[i]).vec() - b.states[i].vec()).lpNorm<Eigen::Infinity>());
        EXPECT_LE(worst, 1e-8) << to_string(p.kind());
    }
}

TEST(Invariants, NormDrift) {
    for (double rtol : {1e-8, 1e-10}) {
        IntegratorConfig cfg = tight();
        cfg.rel_tol = rtol;
        const double span = 300.0;
        const auto a = integrate_schrodinger(FieldProfile::sinusoidal_angle(1.0, 0.4, 0.03), {1.0, 0.0}, 0.0, span, cfg);
        EXPECT_LE(max_norm_drift(a), 10.0 * rtol * span);
        const auto b = integrate_bloch(FieldProfile::cone_3d(1.0, 1.0, 0.05), {1.0, 0.0, 0.0}, 0.0, span, cfg);
        EXPECT_LE(max_norm_drift(b), 10.0 * rtol * span);
    }
}

TEST(Invariants, TimeReversal) {
    const FieldProfile p = FieldProfile::sinusoidal_angle(1.0, 0.3, 0.05);
    const Spinor psi0{0.8, 0.6 * I};
    const IntegratorConfig cfg = tight();
    const auto fwd = integrate_schrodinger(p, psi0, 0.0, 100.0, cfg);
    const auto back = integrate_schrodinger(p, fwd.back(), 100.0, 0.0, cfg);
    EXPECT_DOUBLE_EQ(back.times.back(), 0.0);
    EXPECT_LE(dist(back.back(), psi0), 100.0 * cfg.rel_tol);
}

TEST(Invariants, DormandPrinceOrder) {
    // Halving a fixed step must cut the constant-field error by at least 4x
    // (a fifth-order pair gives about 32x).
    const Vec3 B(0.6, 0.0, 0.8);
    auto rhs = [&](double, const Vec2c& psi) -> Vec2c { return -I * (hamiltonian(B) * psi); };
    const Vec2c psi0(1.0, 0.0);
    const Vec2c exact = precession(B, 10.0) * psi0;
    auto run = [&](int n) {
        const double h = 10.0 / n;
        Vec2c y = psi0, y_new, err, k_new;
        for (int i = 0; i < n; ++i) {
            dopri5_step(rhs, i * h, y, rhs(i * h, y), h, y_new, err, k_new);
            y = y_new;
        }
        return (y - exact).norm();
    };
    const double e1 = run(20), e2 = run(40), e3 = run(80);
    EXPECT_GE(e1 / e2, 4.0);
    EXPECT_GE(e2 / e3, 4.0);
    EXPECT_GE(e2 / e3, 20.0);

    // Adaptive runs: tighter tolerance, smaller error.
    auto adaptive = [&](double tol) {
        IntegratorConfig c;
        c.rel_tol = c.abs_tol = tol;
        const auto t = integrate_schrodinger(FieldProfile::constant(1.0, 0.6435011087932844), {1.0, 0.0}, 0.0, 10.0, c);
        const Spinor ref(Vec2c(precession(FieldProfile::constant(1.0, 0.6435011087932844).sample(0).B_vec, 10.0) * psi0));
        return dist(t.back(), ref);
    };
    EXPECT_GE(adaptive(1e-6) / adaptive(1e-8), 4.0);
}

TEST(Invariants, LocalDefects) {
    IntegratorConfig cfg = tight();
    cfg.dense_output_grid = uniform_grid(0.0, 60.0, 300);
    const FieldProfile p = FieldProfile::sinusoidal_angle(1.0, 0.3, 0.1);
    const auto traj = integrate_schrodinger(p, {1.0, 0.0}, 0.0, 60.0, cfg);
    const auto d = local_defects(p, traj);
    ASSERT_EQ(d.size(), traj.size() - 1);
    for (double v : d) EXPECT_LE(v, 1e-8);
}

TEST(ExponentialMidpoint, PreservesNormAndConvergesAtSecondOrder) {
    const Spinor psi0{1.0, 0.0};
    const FieldProfile p = FieldProfile::uniform_rotation(1.0, 0.1);
    auto run = [&](double h) {
        IntegratorConfig c;
        c.method = Method::exponential_midpoint;
        c.fixed_step = h;
        return integrate_schrodinger(p, psi0, 0.0, 100.0, c);
    };
    const auto coarse = run(0.1), fine = run(0.05);
    EXPECT_LE(max_norm_drift(coarse), 1e-13);
    const Spinor exact = rotating_frame_oracle(1.0, 0.1, psi0, 100.0);
    const double ratio = dist(coarse.back(), exact) / dist(fine.back(), exact);
    EXPECT_NEAR(ratio, 4.0, 0.4);

    IntegratorConfig c;
    c.method = Method::exponential_midpoint;
    c.fixed_step = 0.01;
    const auto b = integrate_bloch(p, {1.0, 0.0, 0.0}, 0.0, 100.0, c);
    EXPECT_LE(max_norm_drift(b), 1e-12);
}

TEST(PhaseExtraction, ConstantFieldTracked) {
    IntegratorConfig cfg = tight();
    cfg.dense_output_grid = uniform_grid(0.0, 40.0, 400);
    const FieldProfile p = FieldProfile::constant(1.0);
    const auto traj = integrate_schrodinger(p, {1.0, 0.0}, 0.0, 40.0, cfg);
    const PhaseSeries ph = extract_total_phase(traj, p, PhaseReference::tracked_eigenvector);
    EXPECT_EQ(ph.phase.front(), 0.0);
    for (std::size_t i = 0; i < ph.times.size(); i += 37) EXPECT_NEAR(ph.phase[i], -0.5 * ph.times[i], 1e-8);
    EXPECT_NEAR(ph.final(), -20.0, 1e-8);
    EXPECT_NEAR(ph.at(10.05), -5.025, 1e-8);
}

TEST(PhaseExtraction, InitialStateOneCycle) {
    const double r = 1.0 / std::sqrt(2.0);
    IntegratorConfig cfg = tight();
    cfg.dense_output_grid = uniform_grid(0.0, 2.0 * pi, 200);
    const FieldProfile p = FieldProfile::constant(1.0);
    const auto traj = integrate_schrodinger(p, {r, r}, 0.0, 2.0 * pi, cfg);
    const double phase = extract_total_phase(traj, p, PhaseReference::initial_state).final();
    EXPECT_NEAR(std::abs(wrap_angle(phase + pi)), 0.0, 1e-8);
    // Cyclic evolution: phase agrees with arg<psi0|psi(T)>.
    EXPECT_NEAR(std::abs(wrap_angle(phase - std::arg(inner({r, r}, traj.back())))), 0.0, 1e-8);
}

TEST(PhaseExtraction, UniformRotationTracked) {
    const FieldProfile p = FieldProfile::uniform_rotation(1.0, 0.1);
    const PhaseRun run = integrate_with_phase(p, second_order_eigenvector(p, 0.0), 0.0, 200.0, tight(),
                                              PhaseReference::tracked_eigenvector);
    const double analytic = -0.5 * std::sqrt(1.01) * 200.0;
    EXPECT_NEAR(run.phase.final(), analytic, 1e-5);
    EXPECT_NEAR(run.phase.final(), -100.5, 2e-3);
}

TEST(PhaseExtraction, ConeTrackedOverOnePeriod) {
    // Co-rotating about z at W the field is static, b = B n0 - W z. The
    // aligned eigenstate of b.sigma/2 returns after T = 2 pi / W with phase
    // -W T / 2 - |b| T / 2 in the north-regular gauge.
    const double B = 1.0, th = pi / 3, W = 0.05, T = 2.0 * pi / W;
    const FieldProfile p = FieldProfile::cone_3d(B, th, W);
    const Vec3 b = B * Vec3(std::sin(th), 0.0, std::cos(th)) - W * Vec3::UnitZ();
    const double expected = -pi - 0.5 * b.norm() * T;
    const PhaseRun run = integrate_with_phase(p, second_order_eigenvector(p, 0.0), 0.0, T, tight(),
                                              PhaseReference::tracked_eigenvector);
    EXPECT_NEAR(run.phase.final(), expected, 1e-4);
    // The reference follows the field azimuth: overlap stays near 1 throughout.
    for (std::size_t i = 0; i < run.trajectory.size(); i += 50) {
        const Spinor n = second_order_eigenvector(p, run.trajectory.times[i]);
        EXPECT_GT(std::abs(inner(n, run.trajectory.states[i])), 1.0 - 1e-4);
    }
}

TEST(Integration, GridEndingAnUlpShortOfTheSpan) {
    // The last grid node lands one ulp below t1; it must not force a tiny step.
    const double t1 = 2.0 * pi / 0.05;
    IntegratorConfig c = tight();
    std::vector<double> g = uniform_grid(0.0, t1, 400);
    g.back() = std::nextafter(t1, 0.0);
    c.dense_output_grid = g;
    const auto traj = integrate_schrodinger(FieldProfile::sinusoidal_angle(1.0, 0.3, 0.05), {1.0, 0.0}, 0.0, t1, c);
    EXPECT_EQ(traj.times.back(), t1);
    EXPECT_EQ(traj.size(), 401u);
}

TEST(PhaseExtraction, Errors) {
    const FieldProfile p = FieldProfile::constant(1.0);
    IntegratorConfig cfg = tight();
    cfg.dense_output_grid = uniform_grid(0.0, 5.0, 50);
    const auto down = integrate_schrodinger(p, {0.0, 1.0}, 0.0, 5.0, cfg);
    EXPECT_THROW(extract_total_phase(down, p, PhaseReference::tracked_eigenvector), OverlapLoss);
    EXPECT_THROW(extract_total_phase(down, p, PhaseReference::initial_state), PoleSingularity);

    const FieldProfile strong = FieldProfile::constant(10.0);
    cfg.dense_output_grid = uniform_grid(0.0, 5.0, 5);
    const auto coarse = integrate_schrodinger(strong, {1.0, 0.0}, 0.0, 5.0, cfg);
    EXPECT_THROW(extract_total_phase(coarse, strong, PhaseReference::tracked_eigenvector), BranchJump);
    // The refining driver recovers (unit spacing needs 4x refinement at B = 10).
    const PhaseRun ok = integrate_with_phase(strong, {1.0, 0.0}, 0.0, 5.0, cfg, PhaseReference::tracked_eigenvector);
    EXPECT_NEAR(ok.phase.final(), -25.0, 1e-7);
    // Beyond 16x refinement it gives up.
    cfg.dense_output_grid = uniform_grid(0.0, 5.0, 1);
    EXPECT_THROW(integrate_with_phase(FieldProfile::constant(100.0), {1.0, 0.0}, 0.0, 5.0, cfg,
                                      PhaseReference::tracked_eigenvector),
                 BranchJump);
}

TEST(Integration, Errors) {
    const FieldProfile p = FieldProfile::constant(1.0).with_domain({0.0, 10.0});
    EXPECT_THROW(integrate_schrodinger(p, {1.0, 1.0}, 0.0, 1.0), NormalizationError);
    EXPECT_THROW(integrate_schrodinger(p, {1.0 + 1e-5, 0.0}, 0.0, 1.0), NormalizationError);
    EXPECT_THROW(integrate_bloch(p, {1.0, 1.0, 0.0}, 0.0, 1.0), NormalizationError);
    EXPECT_THROW(integrate_schrodinger(p, {1.0, 0.0}, 0.0, 11.0), DomainError);
    IntegratorConfig bad;
    bad.rel_tol = 0.1;
    EXPECT_THROW(integrate_schrodinger(p, {1.0, 0.0}, 0.0, 1.0, bad), ConfigError);
    EXPECT_THROW(integrate_schrodinger(FieldProfile::constant(1e15, 1.0), {1.0, 0.0}, 1e3, 1e3 + 1.0), StepSizeUnderflow);
}
