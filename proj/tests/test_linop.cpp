#include <gtest/gtest.h>

#include "common.hpp"
#include "tfdw/linop.hpp"

using namespace tfdw;
using namespace tfdw::testing;

namespace {

std::vector<double> dense_spectrum(const FiberOperator& f) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(f.dense());
    const Eigen::VectorXd& v = es.eigenvalues();
    return std::vector<double>(v.data(), v.data() + v.size());
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    EXPECT_EQ(a.size(), b.size());
    double d = 0.0;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

LinearizedOperator jellium_op(double nu0, std::array<int, 3> res) {
    const Model m = jellium_model(nu0, res);
    return LinearizedOperator(jellium_state(m.grid, nu0), 0.0);
}

}  // namespace

TEST(Linop, FrechetDerivativeOfElMap) {
    std::mt19937_64 rng(31);
    const Model m = modulated(0.7, 0.3, 1.0, {8, 8, 1});
    const State u = random_state(m, rng);
    const ScalarField h = smooth_random(m.grid, rng, 1, 0.05);
    const LinearizedOperator op(u, h);
    const Triple w = random_triple(m.grid, rng);
    const Triple Lw = op.apply(w);
    double err[2];
    for (int k = 0; k < 2; ++k) {
        const double t = 1e-3 / (1 << k);
        const Triple fd =
            (1.0 / (2.0 * t)) * (el_map(u.plus_scaled(t, w), h, m) - el_map(u.plus_scaled(-t, w), h, m));
        err[k] = l2_norm(fd - Lw);
    }
    EXPECT_LE(err[1], 1e-6 * l2_norm(Lw));
    EXPECT_NEAR(std::log2(err[0] / err[1]), 2.0, 0.2);
}

TEST(Linop, SelfAdjoint) {
    std::mt19937_64 rng(32);
    const Model m = modulated(0.7, 0.3, 1.0, {8, 6, 4});
    const LinearizedOperator op(random_state(m, rng), smooth_random(m.grid, rng, 1, 0.05));
    for (int t = 0; t < 5; ++t) {
        const Triple v = random_triple(m.grid, rng), w = random_triple(m.grid, rng);
        EXPECT_NEAR(inner(v, op.apply(w)), inner(op.apply(v), w), 1e-10 * l2_norm(v) * l2_norm(w));
    }
}

TEST(Linop, ConstantPotentialDirection) {
    std::mt19937_64 rng(33);
    const Model m = modulated(0.7, 0.3, 1.0, {8, 4, 1});
    const State u = random_state(m, rng);
    const LinearizedOperator op(u, 0.02);
    const double c = 0.8;
    const Triple out = op.apply(Triple(ScalarField(m.grid), ScalarField(m.grid), ScalarField(m.grid, c)));
    EXPECT_LE((out.plus - c * u.nu_plus).max_abs(), 1e-13);
    EXPECT_LE((out.minus - c * u.nu_minus).max_abs(), 1e-13);
    EXPECT_LE(out.potential.max_abs(), 1e-13);
}

TEST(Linop, JelliumPlaneWaveSymbol) {
    const double nu0 = 0.6;
    const LinearizedOperator op = jellium_op(nu0, {8, 1, 1});
    const GridSpec& g = op.grid();
    const jellium::Params p(nu0);
    const ScalarField c = ScalarField::from_function(g, [](const Eigen::Vector3d& x) { return std::cos(2 * pi * x[0]); });
    const Eigen::Matrix3d S = jellium::symbol_matrix(p, 4 * pi * pi);
    const Eigen::Vector3d a(0.3, -1.1, 0.7);
    const Triple out = op.apply(Triple(a[0] * c, a[1] * c, a[2] * c));
    const Eigen::Vector3d e = S * a;
    EXPECT_LE((out.plus - e[0] * c).max_abs(), 1e-12);
    EXPECT_LE((out.minus - e[1] * c).max_abs(), 1e-12);
    EXPECT_LE((out.potential - e[2] * c).max_abs(), 1e-12);
}

TEST(Fiber, MatchesAnalyticJelliumSpectrum) {
    for (double nu0 : {0.3, 0.5, 1.0}) {
        const LinearizedOperator op = jellium_op(nu0, {4, 4, 4});
        for (const Eigen::Vector3d xi : {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1.3, -0.4, 2.0),
                                         Eigen::Vector3d(pi, pi, 0)}) {
            const auto num = dense_spectrum(FiberOperator(op, xi));
            EXPECT_LE(max_diff(num, jellium_fiber_spectrum(op.grid(), nu0, xi)), 1e-10) << nu0;
        }
    }
}

TEST(Fiber, ReciprocalTranslationInvariance) {
    std::mt19937_64 rng(34);
    const Model m = modulated(0.7, 0.3, 1.0, {4, 4, 1});
    const LinearizedOperator op(random_state(m, rng), 0.01);
    const Eigen::Vector3d xi(0.7, -1.9, 0.0);
    const Eigen::Vector3d G = m.grid.lattice().reciprocal().col(0) - 2.0 * m.grid.lattice().reciprocal().col(1);
    EXPECT_LE(max_diff(dense_spectrum(FiberOperator(op, xi)), dense_spectrum(FiberOperator(op, xi + G))), 1e-10);
}

TEST(Fiber, ZeroFiberContainsSpinEigenvalue) {
    const double nu0 = 0.45;
    const LinearizedOperator op = jellium_op(nu0, {4, 4, 1});
    const auto ev = dense_spectrum(FiberOperator(op, Eigen::Vector3d::Zero()));
    const double c = jellium::Params(nu0).c();
    double best = 1e300;
    for (double v : ev) best = std::min(best, std::abs(v - c));
    EXPECT_LE(best, 1e-12);
}

TEST(Fiber, ShiftMovesSpectrum) {
    const LinearizedOperator op = jellium_op(0.5, {4, 4, 1});
    auto a = dense_spectrum(FiberOperator(op, Eigen::Vector3d(0.4, 0, 0)));
    const auto b = dense_spectrum(FiberOperator(op.shifted(0.25), Eigen::Vector3d(0.4, 0, 0)));
    for (double& v : a) v += 0.25;
    EXPECT_LE(max_diff(a, b), 1e-12);
}

TEST(Stability, GapClosesAtSpinThreshold) {
    const LinearizedOperator op = jellium_op(jellium::sdw_threshold(), {4, 4, 4});
    const auto rep = stability_scan(op, {Eigen::Vector3d::Zero()});
    EXPECT_LT(rep.global_gap, 1e-6);
    EXPECT_FALSE(rep.stable());
}

TEST(Stability, JelliumClassification) {
    const auto xis = xi_grid(Lattice::cubic(1.0), {4, 1, 1});
    const auto good = stability_scan(jellium_op(0.5, {4, 4, 1}), xis);
    EXPECT_EQ(good.classification, Stability::stable);
    EXPECT_TRUE(good.stable());
    EXPECT_DOUBLE_EQ(good.M, 1.0 / good.global_gap);
    const auto bad = stability_scan(jellium_op(0.2, {4, 4, 1}), xis);
    EXPECT_EQ(bad.classification, Stability::sdw_unstable);
    EXPECT_FALSE(bad.stable());
    // Global gap equals the analytic minimum over the sampled fibers.
    double expect = 1e300;
    for (const auto& xi : xis) {
        for (double v : jellium_fiber_spectrum(GridSpec(Lattice::cubic(1.0), {4, 4, 1}), 0.5, xi))
            expect = std::min(expect, std::abs(v));
    }
    EXPECT_NEAR(good.global_gap, expect, 1e-10);
}

TEST(Stability, LobpcgAgreesWithDense) {
    std::mt19937_64 rng(35);
    const Model m = modulated(0.7, 0.3, 1.0, {8, 4, 4});
    const LinearizedOperator op(jellium_state(m.grid, 0.7).plus_scaled(0.02, random_triple(m.grid, rng)), 0.0);
    const FiberOperator f(op, Eigen::Vector3d(0.5, 0.0, 0.0));
    GapOptions it;
    it.force_iterative = true;
    it.tol = 1e-10;
    GapOptions de;
    de.dense_limit = 100000;
    const GapResult a = spectral_gap(f, it), b = spectral_gap(f, de);
    EXPECT_EQ(a.method, "lobpcg");
    EXPECT_EQ(b.method, "dense");
    EXPECT_NEAR(a.gap, b.gap, 1e-6 * b.gap);
}

TEST(Stability, SupercellSpectrumIsUnionOfFibers) {
    std::mt19937_64 rng(36);
    const Model m = modulated(0.7, 0.3, 1.0, {4, 4, 1});
    const State u = random_state(m, rng);
    const ScalarField h = smooth_random(m.grid, rng, 1, 0.05);
    const LinearizedOperator cell(u, h);
    const std::array<int, 3> sc{2, 1, 1};
    const State ue(periodic_extension(u.nu_plus, sc), periodic_extension(u.nu_minus, sc),
                   periodic_extension(u.V, sc), u.gauge);
    const LinearizedOperator super(ue, periodic_extension(h, sc));
    const Eigen::Vector3d xi(0.3, 0.2, 0.0);
    std::vector<double> uni;
    for (int j = 0; j < 2; ++j) {
        const Eigen::Vector3d x = xi + 0.5 * j * m.grid.lattice().reciprocal().col(0);
        const auto s = dense_spectrum(FiberOperator(cell, x));
        uni.insert(uni.end(), s.begin(), s.end());
    }
    std::sort(uni.begin(), uni.end());
    EXPECT_LE(max_diff(dense_spectrum(FiberOperator(super, xi)), uni), 1e-10);
}

TEST(Stability, XiGridShape) {
    const auto xs = xi_grid(Lattice::cubic(2.0), {4, 1, 1});
    ASSERT_EQ(xs.size(), 5u);
    EXPECT_EQ(xs.front(), Eigen::Vector3d::Zero());
    const GridSpec g(Lattice::cubic(1.0), {4, 1, 1}, {2, 1, 1});
    EXPECT_NEAR(xi_grid(g, {2, 1, 1})[1][0], -0.25 * pi, 1e-14);
}

TEST(OperatorDrift, Examples) {
    std::mt19937_64 rng(37);
    const Model m = modulated(0.7, 0.3, 1.0, {8, 4, 1});
    const State u = random_state(m, rng);
    const ScalarField h = smooth_random(m.grid, rng, 1, 0.05);
    EXPECT_EQ(operator_drift(u, u, h), 0.0);
    State shifted = u;
    shifted.gauge += 0.125;
    EXPECT_NEAR(operator_drift(shifted, u, h), 0.125, 1e-12);
}

TEST(LinearSolve, MinresSolvesSystem) {
    std::mt19937_64 rng(38);
    const Model m = modulated(0.7, 0.3, 1.0, {8, 4, 1});
    const LinearizedOperator op(jellium_state(m.grid, 0.7), 0.0);
    const Triple b = random_triple(m.grid, rng);
    const Triple x = solve(op, b);
    EXPECT_LE(l2_norm(op.apply(x) - b), 1e-9 * l2_norm(b));
}
