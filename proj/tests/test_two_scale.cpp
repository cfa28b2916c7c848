#include <gtest/gtest.h>

#include "common.hpp"
#include "tfdw/two_scale.hpp"

using namespace tfdw;
using namespace tfdw::testing;

namespace {

const CBTable& table() {
    static const CBTable t = small_table();
    return t;
}

PeriodicProfile sine_profile(double h0, double A) {
    PeriodicProfile p;
    p.mean = h0;
    p.modes = {FourierMode{{1, 0, 0}, 0.0, A}};
    return p;
}

}  // namespace

TEST(TrigWeights, InterpolateLowModes) {
    for (int K : {1, 4, 8}) {
        for (int k = 0; k < K; ++k) {
            const auto w = detail::trig_weights(K, double(k) / K);
            for (int j = 0; j < K; ++j) EXPECT_NEAR(w[std::size_t(j)], j == k ? 1.0 : 0.0, 1e-14);
        }
        for (double x : {0.03, 0.41, 0.77}) {
            const auto w = detail::trig_weights(K, x);
            double one = 0.0, cs = 0.0;
            for (int j = 0; j < K; ++j) {
                one += w[std::size_t(j)];
                if (K >= 4) cs += w[std::size_t(j)] * std::cos(2 * pi * (double(j) / K) + 0.3);
            }
            EXPECT_NEAR(one, 1.0, 1e-14);
            if (K >= 4) EXPECT_NEAR(cs, std::cos(2 * pi * x + 0.3), 1e-13);
        }
    }
}

TEST(TwoScale, ConstantFieldHasNoCorrectors) {
    PeriodicProfile p;
    p.mean = 0.02;
    const CorrectorSet cs = build_correctors(table(), p);
    EXPECT_EQ(cs.samples.size(), 1u);
    EXPECT_EQ(l2_norm(cs.samples[0].u1), 0.0);
    EXPECT_EQ(l2_norm(cs.samples[0].u2), 0.0);
    for (int n : {2, 4}) {
        const GridSpec g = table().model().grid.with_supercell({n, 1, 1});
        const State u0 = assemble_u0(table(), cs, g, 1.0 / n);
        const State cb = cb_field(table(), ScalarField(g, 0.02), 1.0 / n);
        EXPECT_EQ(u0.nu_plus.values(), cb.nu_plus.values());
        EXPECT_LE(residual(u0, 0.02, table().model().supercell({n, 1, 1})).norm(), 1e-9);
    }
}

TEST(TwoScale, FirstCorrectorLinearInGradient) {
    TwoScaleOptions o;
    o.macro_resolution = 8;
    const CorrectorSet a = first_order_correctors(table(), sine_profile(0.01, 0.02), o);
    const CorrectorSet b = first_order_correctors(table(), sine_profile(0.01, 0.01), o);
    // At X = 0, h = h0 for both while grad h halves.
    EXPECT_NEAR(a.samples[0].h, 0.01, 1e-15);
    EXPECT_NEAR(a.samples[0].grad_h[0], 2 * pi * 0.02, 1e-14);
    const Triple diff = a.samples[0].u1 - 2.0 * b.samples[0].u1;
    EXPECT_LE(l2_norm(diff), 1e-8 * l2_norm(a.samples[0].u1));
    EXPECT_GT(l2_norm(a.samples[0].u1), 0.0);
}

TEST(TwoScale, CorrectorEquationsSolved) {
    TwoScaleOptions o;
    o.macro_resolution = 8;
    const CorrectorSet cs = build_correctors(table(), sine_profile(0.01, 0.03), o);
    EXPECT_TRUE(cs.has_first);
    EXPECT_TRUE(cs.has_second);
    EXPECT_LE(cs.max_residual(1), 1e-10);
    EXPECT_LE(cs.max_residual(2), 1e-10);
    EXPECT_EQ(cs.samples.size(), 8u);
    const auto j = cs.summary();
    EXPECT_EQ(j["macro_points"], 8);
}

TEST(TwoScale, AnsatzOrdering) {
    TwoScaleOptions o;
    o.macro_resolution = 8;
    const CorrectorSet cs = build_correctors(table(), sine_profile(0.0, 0.03), o);
    const int n = 8;
    const Model m = table().model().supercell({n, 1, 1});
    const ScalarField hf = sample_macro(cs.h_profile, m.grid);
    const State u0 = assemble_u0(table(), cs, m.grid, 1.0 / n, 0);
    EXPECT_EQ(u0.nu_plus.values(), cb_field(table(), hf, 1.0 / n).nu_plus.values());
    const double r0 = residual(u0, hf, m).norm();
    const double r1 = residual(assemble_u0(table(), cs, m.grid, 1.0 / n, 1), hf, m).norm();
    const double r2 = residual(assemble_u0(table(), cs, m.grid, 1.0 / n, 2), hf, m).norm();
    EXPECT_LT(r1, r0);
    EXPECT_LT(r2, r1);
    EXPECT_THROW(assemble_u0(table(), cs, m.grid, 0.2), Error);
}
