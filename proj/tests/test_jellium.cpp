#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "common.hpp"

using namespace tfdw;
using namespace tfdw::testing;

TEST(Jellium, UnitDensitySymbol) {
    const jellium::Params p(1.0);
    EXPECT_NEAR(p.c(), 12.0 / 9.0, 1e-15);
    const Eigen::Matrix3d S = jellium::symbol_matrix(p, 0.0);
    EXPECT_NEAR(S(0, 0), 12.0 / 9.0, 1e-15);
    EXPECT_NEAR(S(1, 1), 12.0 / 9.0, 1e-15);
    EXPECT_EQ(S(0, 2), 1.0);
    EXPECT_EQ(S(2, 1), 1.0);
    EXPECT_EQ(S(2, 2), 0.0);
    const auto e = jellium::eigenvalues(p, 0.0);
    EXPECT_NEAR(e.lambda1, 4.0 / 3.0, 1e-15);
    EXPECT_NEAR(e.lambda_plus, 2.0 / 3.0 + std::sqrt(4.0 / 9.0 + 2.0), 1e-14);
    EXPECT_NEAR(e.lambda_minus, 2.0 / 3.0 - std::sqrt(4.0 / 9.0 + 2.0), 1e-14);
}

TEST(Jellium, MatchesDenseEigensolve) {
    for (double nu0 : {0.1, 0.3, 0.5, 1.0, 2.0}) {
        const jellium::Params p(nu0);
        for (double xi : {0.0, 0.3, 1.0, 2.0 * pi, 20.0}) {
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(jellium::symbol_matrix(p, xi * xi));
            const auto a = jellium::eigenvalues(p, xi * xi).sorted();
            for (int i = 0; i < 3; ++i) EXPECT_NEAR(a[std::size_t(i)], es.eigenvalues()[i], 1e-12 * (1 + xi * xi));
        }
    }
}

TEST(Jellium, ChargeProductIdentity) {
    for (double nu0 : {0.3, 0.7}) {
        const jellium::Params p(nu0);
        for (double xi2 : {0.0, 1.0, 10.0}) {
            const auto e = jellium::eigenvalues(p, xi2);
            EXPECT_NEAR(e.lambda_plus * e.lambda_minus, jellium::charge_product(p, xi2), 1e-12 * (1 + xi2 * xi2));
            // The literature form differs by exactly nu0^2.
            EXPECT_NEAR(jellium::charge_product(p, xi2) - jellium::displayed_charge_product(p, xi2), -nu0 * nu0,
                        1e-12);
            EXPECT_NEAR(jellium::symbol_matrix(p, xi2).determinant(), e.lambda1 * jellium::charge_product(p, xi2),
                        1e-10 * (1 + xi2 * xi2 * xi2));
        }
    }
}

TEST(Jellium, ChargePairSignsAtLargeXi) {
    const jellium::Params p(0.3);
    for (double xi : {5.0, 10.0, 50.0}) {
        const auto e = jellium::eigenvalues(p, xi * xi);
        EXPECT_LT(e.lambda_minus, 0.0);
        EXPECT_GT(e.lambda_plus, 0.0);
        EXPECT_GT(e.lambda1, 0.0);
    }
}

TEST(Jellium, SpinThreshold) {
    const double t = jellium::sdw_threshold();
    EXPECT_NEAR(t, std::pow(2.0 / 5.0, 1.5), 1e-15);
    EXPECT_NEAR(jellium::Params(t).c(), 0.0, 1e-14);
    EXPECT_NEAR(jellium::bisect_sdw_threshold(), t, 1e-10);
    EXPECT_LT(jellium::Params(0.9 * t).c(), 0.0);
    EXPECT_GT(jellium::Params(1.1 * t).c(), 0.0);
    EXPECT_TRUE(jellium::cdw_condition(jellium::Params(t)));
    EXPECT_THROW(jellium::bisect_sdw_threshold(0.5, 1.0), Error);
}

TEST(Jellium, CdwConditionExample) {
    // For small nu0, c ~ -8/9 nu0^{2/3} beats -8 sqrt(pi) nu0 once nu0 < (9 sqrt(pi))^{-3}.
    const double cross = std::pow(9.0 * std::sqrt(pi), -3.0);
    EXPECT_FALSE(jellium::cdw_condition(jellium::Params(0.2 * cross)));
    EXPECT_TRUE(jellium::cdw_condition(jellium::Params(10.0 * cross)));
    for (double nu : {0.01, 0.1, 0.5, 1.0}) EXPECT_TRUE(jellium::cdw_condition(jellium::Params(nu)));
}

TEST(Jellium, ConstantsAndGauge) {
    const jellium::Params p(0.7);
    EXPECT_NEAR(p.rho_b(), 0.98, 1e-15);
    EXPECT_EQ(p.gauge(), -p.lambda());
    const Model m = jellium_model(0.7, {4, 4, 4});
    const State s = jellium_state(m.grid, 0.7);
    EXPECT_LE(residual(s, 0.0, m).norm(), 1e-14);
}

TEST(Jellium, SweepCsv) {
    const std::string csv = jellium::sweep_csv({0.5}, {0.0, 1.0});
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "nu0,xi,lambda1,lambda_plus,lambda_minus");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 2);
}
