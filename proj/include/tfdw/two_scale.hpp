#pragma once

#include <array>
#include <cmath>
#include <vector>

#include <json.hpp>

#include "tfdw/cauchy_born.hpp"
#include "tfdw/parallel.hpp"

namespace tfdw {

// Two-scale ansatz U(X, z) = u0 + eps u1 + eps^2 u2, X = eps x macro, z = x micro.
// Correctors are computed at the points X_k of a macro collocation grid over the
// cell (axes along which h is constant get a single point). First macro
// derivatives of u0 use the chain rule with the exact du/dh; every further macro
// derivative is spectral on the macro grid.

struct TwoScaleOptions {
    int macro_resolution = 16;
    double solve_rel_tol = 1e-10;
    int threads = 1;
};

struct MacroSample {
    double h = 0.0;
    Eigen::Vector3d grad_h = Eigen::Vector3d::Zero();
    State u0;
    Triple dudh;
    std::array<Triple, 3> grad_u0;  // d/dX_a u0 (Cartesian)
    Triple u1;
    Triple u2;
    double residual1 = 0.0;  // ||L u1 - rhs|| / ||rhs||
    double residual2 = 0.0;
};

struct CorrectorSet {
    GridSpec macro_grid;
    PeriodicProfile h_profile;
    std::vector<MacroSample> samples;  // macro grid order
    bool has_first = false;
    bool has_second = false;

    double max_residual(int order) const {
        double r = 0.0;
        for (const auto& s : samples) r = std::max(r, order == 1 ? s.residual1 : s.residual2);
        return r;
    }

    nlohmann::json summary() const {
        double n1 = 0.0, n2 = 0.0;
        for (const auto& s : samples) {
            n1 = std::max(n1, l2_norm(s.u1));
            n2 = std::max(n2, l2_norm(s.u2));
        }
        return {{"macro_points", samples.size()},
                {"macro_resolution", macro_grid.resolution()},
                {"first_order", has_first},
                {"second_order", has_second},
                {"max_corrector_residual_1", max_residual(1)},
                {"max_corrector_residual_2", max_residual(2)},
                {"max_norm_u1", n1},
                {"max_norm_u2", n2}};
    }
};

namespace detail {

inline GridSpec macro_grid_for(const Lattice& l, const PeriodicProfile& h, int k) {
    std::array<int, 3> res{1, 1, 1};
    for (int a = 0; a < 3; ++a) {
        if (h.varies_along(a)) res[a] = k;
    }
    return GridSpec(l, res);
}

/// Spectral macro derivative d/dX_a of a per-sample triple family.
inline std::vector<Triple> macro_derivative(const GridSpec& macro, const std::vector<Triple>& f, int axis) {
    const std::size_t K = macro.size();
    const GridSpec& micro = f.front().grid();
    const std::size_t N = micro.size();
    std::vector<Triple> out(K, Triple(micro));
    std::array<int, 3> alpha{0, 0, 0};
    alpha[axis] = 1;
    ScalarField line(macro);
    for (int c = 0; c < 3; ++c) {
        for (std::size_t j = 0; j < N; ++j) {
            for (std::size_t k = 0; k < K; ++k) line[k] = f[k][c][j];
            const ScalarField d = derivative(line, alpha);
            for (std::size_t k = 0; k < K; ++k) out[k][c][j] = d[k];
        }
    }
    return out;
}

/// sum_a d/dz_a of the fields g[a] (a micro divergence).
inline ScalarField micro_divergence(const std::array<ScalarField, 3>& g) {
    ScalarField out(g[0].grid());
    for (int a = 0; a < 3; ++a) {
        std::array<int, 3> alpha{0, 0, 0};
        alpha[a] = 1;
        out += derivative(g[a], alpha);
    }
    return out;
}

/// 1D trigonometric interpolation weights on K equispaced points of [0,1) at x,
/// with the Nyquist mode taken as a cosine.
inline std::vector<double> trig_weights(int K, double x) {
    std::vector<double> w(std::size_t(K), 1.0);
    if (K == 1) return w;
    for (int k = 0; k < K; ++k) {
        const double d = 2.0 * pi * (x - double(k) / K);
        double s = 1.0;
        for (int m = 1; m < K / 2; ++m) s += 2.0 * std::cos(m * d);
        s += std::cos(0.5 * K * d);
        w[std::size_t(k)] = s / K;
    }
    return w;
}

inline Triple solve_corrector(const MacroSample& s, const Triple& rhs, double rel_tol, double& rel_res) {
    if (l2_norm(rhs) == 0.0) {
        rel_res = 0.0;
        return Triple(rhs.grid());
    }
    const LinearizedOperator op(s.u0, s.h);
    LinearSolveOptions lo;
    lo.rel_tol = rel_tol;
    Triple x;
    try {
        x = solve(op, rhs, lo);
    } catch (const Error& e) {
        fail(ErrorKind::stability, "corrector solve failed; the linearized operator may be near singular",
             {{"h", s.h}, {"cause", e.to_json()}});
    }
    rel_res = l2_norm(op.apply(x) - rhs) / l2_norm(rhs);
    return x;
}

}  // namespace detail

/// Leading order u0(eps x, x) = u_CB(x; h(eps x)); same as cb_field.
inline State leading_order(const CBTable& table, const ScalarField& h_field, double eps) {
    return cb_field(table, h_field, eps);
}

/// Leading-order data and first-order correctors at the macro points.
inline CorrectorSet first_order_correctors(const CBTable& table, const PeriodicProfile& h,
                                           const TwoScaleOptions& opts = {}) {
    CorrectorSet cs;
    const Lattice& lat = table.model().grid.lattice();
    cs.macro_grid = detail::macro_grid_for(lat, h, opts.macro_resolution);
    cs.h_profile = h;
    const std::size_t K = cs.macro_grid.size();
    cs.samples.resize(K);
    // Leading order and du/dh (polish calls share the table cache, so run serially).
    for (std::size_t k = 0; k < K; ++k) {
        MacroSample& s = cs.samples[k];
        const Eigen::Vector3d t = cs.macro_grid.fractional(k);
        s.h = h.at_fractional(t);
        s.grad_h = h.gradient_at_fractional(t, lat);
        s.u0 = table.solution_at(s.h);
        s.dudh = table.derivative_at(s.h);
        for (int a = 0; a < 3; ++a) s.grad_u0[a] = s.grad_h[a] * s.dudh;
    }
    parallel_for(K, opts.threads, [&](std::size_t k) {
        MacroSample& s = cs.samples[k];
        // f+-,1 = 2 grad_X . grad_z nu+-,0 ;  g1 = -(1/4 pi) grad_X . grad_z V0
        Triple rhs(detail::micro_divergence({s.grad_u0[0].plus, s.grad_u0[1].plus, s.grad_u0[2].plus}) * 2.0,
                   detail::micro_divergence({s.grad_u0[0].minus, s.grad_u0[1].minus, s.grad_u0[2].minus}) * 2.0,
                   detail::micro_divergence({s.grad_u0[0].potential, s.grad_u0[1].potential,
                                             s.grad_u0[2].potential}) *
                       (-1.0 / (4.0 * pi)));
        s.u1 = detail::solve_corrector(s, rhs, opts.solve_rel_tol, s.residual1);
    });
    cs.has_first = true;
    return cs;
}

/// Second-order right-hand side at one macro sample given its macro derivatives.
inline Triple second_order_rhs(const MacroSample& s, const std::array<Triple, 3>& grad_u1, const Triple& lap_u0,
                               double C_nu) {
    if (s.u0.min_nu() < C_nu || !(s.u0.min_nu() > 0.0)) {
        fail(ErrorKind::positivity_loss, "leading-order density below C_nu in the second-order source",
             {{"min_nu", s.u0.min_nu()}, {"C_nu", C_nu}, {"h", s.h}});
    }
    // 1/2 f''(nu) = 70/27 nu^{1/3} - 20/27 nu^{-1/3}
    const auto half_f2 = [](double v) { return 70.0 / 27.0 * std::cbrt(v) - 20.0 / 27.0 / std::cbrt(v); };
    const ScalarField& V1 = s.u1.potential;
    auto channel = [&](const ScalarField& nu0, const ScalarField& nu1, const ScalarField& lap, int c) {
        ScalarField r = 2.0 * detail::micro_divergence({grad_u1[0][c], grad_u1[1][c], grad_u1[2][c]}) + lap;
        r -= nu0.map(half_f2) * nu1 * nu1;
        r -= V1 * nu1;
        return r;
    };
    ScalarField g2 = (-1.0 / (8.0 * pi)) *
                     (2.0 * detail::micro_divergence({grad_u1[0].potential, grad_u1[1].potential,
                                                      grad_u1[2].potential}) +
                      lap_u0.potential);
    g2 -= 0.5 * (s.u1.plus * s.u1.plus + s.u1.minus * s.u1.minus);
    return Triple(channel(s.u0.nu_plus, s.u1.plus, lap_u0.plus, 0),
                  channel(s.u0.nu_minus, s.u1.minus, lap_u0.minus, 1), std::move(g2));
}

inline void second_order_correctors(const CBTable& table, CorrectorSet& cs, const TwoScaleOptions& opts = {}) {
    if (!cs.has_first) fail(ErrorKind::structural, "first-order correctors missing");
    const std::size_t K = cs.samples.size();
    std::vector<Triple> u1(K);
    for (std::size_t k = 0; k < K; ++k) u1[k] = cs.samples[k].u1;
    std::array<std::vector<Triple>, 3> grad_u1;
    std::vector<Triple> lap_u0(K, Triple(table.model().grid));
    for (int a = 0; a < 3; ++a) {
        grad_u1[a] = detail::macro_derivative(cs.macro_grid, u1, a);
        std::vector<Triple> g0(K);
        for (std::size_t k = 0; k < K; ++k) g0[k] = cs.samples[k].grad_u0[a];
        const auto d = detail::macro_derivative(cs.macro_grid, g0, a);
        for (std::size_t k = 0; k < K; ++k) lap_u0[k] += d[k];
    }
    parallel_for(K, opts.threads, [&](std::size_t k) {
        MacroSample& s = cs.samples[k];
        const Triple rhs = second_order_rhs(s, {grad_u1[0][k], grad_u1[1][k], grad_u1[2][k]}, lap_u0[k], table.C_nu());
        s.u2 = detail::solve_corrector(s, rhs, opts.solve_rel_tol, s.residual2);
    });
    cs.has_second = true;
}

inline CorrectorSet build_correctors(const CBTable& table, const PeriodicProfile& h, const TwoScaleOptions& opts = {}) {
    CorrectorSet cs = first_order_correctors(table, h, opts);
    second_order_correctors(table, cs, opts);
    return cs;
}

/// u0(x) = U0(eps x, x) + eps U1(eps x, x) + eps^2 U2(eps x, x) on the supercell.
/// The leading term is the exact Cauchy-Born field; correctors are
/// trigonometrically interpolated from the macro grid. max_order truncates.
inline State assemble_u0(const CBTable& table, const CorrectorSet& cs, const GridSpec& supercell, double eps,
                         int max_order = 2) {
    const GridSpec& cg = table.model().grid;
    const auto& sc = supercell.supercell();
    const int nmax = std::max({sc[0], sc[1], sc[2]});
    if (std::abs(eps * nmax - 1.0) > 1e-12) fail(ErrorKind::structural, "eps does not match the supercell", {{"eps", eps}});
    for (int a = 0; a < 3; ++a) {
        if (cs.macro_grid.resolution()[a] > 1 && sc[a] != nmax) {
            fail(ErrorKind::structural, "h varies along an axis that the supercell does not scale", {{"axis", a}});
        }
    }
    if (max_order >= 1 && !cs.has_first) fail(ErrorKind::structural, "first-order correctors missing");
    if (max_order >= 2 && !cs.has_second) fail(ErrorKind::structural, "second-order correctors missing");

    const ScalarField hf = sample_macro(cs.h_profile, supercell);
    State u = cb_field(table, hf, eps);
    if (max_order == 0) return u;

    Triple t = u.as_triple();
    const auto& mres = cs.macro_grid.resolution();
    const auto& r = cg.resolution();
    // Per-axis weights per supercell coordinate index.
    std::array<std::vector<std::vector<double>>, 3> w;
    for (int a = 0; a < 3; ++a) {
        const int p = supercell.points(a);
        w[a].resize(std::size_t(p));
        for (int i = 0; i < p; ++i) w[a][std::size_t(i)] = detail::trig_weights(mres[a], double(i) / p);
    }
    for (std::size_t i = 0; i < supercell.size(); ++i) {
        const auto m = supercell.multi_index(i);
        const std::size_t ci = cg.index(m[0] % r[0], m[1] % r[1], m[2] % r[2]);
        const auto& w0 = w[0][std::size_t(m[0])];
        const auto& w1 = w[1][std::size_t(m[1])];
        const auto& w2 = w[2][std::size_t(m[2])];
        for (int c = 0; c < 3; ++c) {
            double v1 = 0.0, v2 = 0.0;
            for (int k0 = 0; k0 < mres[0]; ++k0) {
                for (int k1 = 0; k1 < mres[1]; ++k1) {
                    for (int k2 = 0; k2 < mres[2]; ++k2) {
                        const double ww = w0[std::size_t(k0)] * w1[std::size_t(k1)] * w2[std::size_t(k2)];
                        const MacroSample& s = cs.samples[cs.macro_grid.index(k0, k1, k2)];
                        v1 += ww * s.u1[c][ci];
                        if (max_order >= 2) v2 += ww * s.u2[c][ci];
                    }
                }
            }
            t[c][i] += eps * v1 + eps * eps * v2;
        }
    }
    return State::from_triple(t);
}

}  // namespace tfdw
