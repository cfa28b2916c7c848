#pragma once

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "tfdw/field.hpp"

namespace tfdw {

/// Odd extension t -> |t|^{p-1} t of the power t^p.
inline double odd_pow(double t, double p) { return t == 0.0 ? 0.0 : std::pow(std::abs(t), p - 1.0) * t; }

/// Triple (omega+, omega-, W) of fields on one grid: perturbations, EL residuals
/// and Newton increments. W here is a full potential (its mean is meaningful).
struct Triple {
    ScalarField plus;
    ScalarField minus;
    ScalarField potential;

    Triple() = default;
    explicit Triple(const GridSpec& g) : plus(g), minus(g), potential(g) {}
    Triple(ScalarField a, ScalarField b, ScalarField c) : plus(std::move(a)), minus(std::move(b)), potential(std::move(c)) {
        plus.require_same_grid(minus);
        plus.require_same_grid(potential);
    }

    const GridSpec& grid() const { return plus.grid(); }
    std::size_t points() const { return plus.size(); }

    ScalarField& operator[](int c) { return c == 0 ? plus : (c == 1 ? minus : potential); }
    const ScalarField& operator[](int c) const { return c == 0 ? plus : (c == 1 ? minus : potential); }

    Triple& operator+=(const Triple& o) {
        plus += o.plus;
        minus += o.minus;
        potential += o.potential;
        return *this;
    }
    Triple& operator-=(const Triple& o) {
        plus -= o.plus;
        minus -= o.minus;
        potential -= o.potential;
        return *this;
    }
    Triple& operator*=(double s) {
        plus *= s;
        minus *= s;
        potential *= s;
        return *this;
    }
    Triple& axpy(double a, const Triple& x) {
        plus.axpy(a, x.plus);
        minus.axpy(a, x.minus);
        potential.axpy(a, x.potential);
        return *this;
    }
    friend Triple operator+(Triple a, const Triple& b) { return a += b; }
    friend Triple operator-(Triple a, const Triple& b) { return a -= b; }
    friend Triple operator*(double s, Triple a) { return a *= s; }

    Eigen::VectorXd flatten() const {
        const std::size_t n = points();
        Eigen::VectorXd v(3 * n);
        for (int c = 0; c < 3; ++c) {
            const auto& f = (*this)[c];
            for (std::size_t i = 0; i < n; ++i) v[c * n + i] = f[i];
        }
        return v;
    }

    static Triple unflatten(const GridSpec& g, const Eigen::VectorXd& v) {
        Triple t(g);
        const std::size_t n = g.size();
        if (std::size_t(v.size()) != 3 * n) fail(ErrorKind::structural, "vector length does not match triple grid");
        for (int c = 0; c < 3; ++c) {
            for (std::size_t i = 0; i < n; ++i) t[c][i] = v[c * n + i];
        }
        return t;
    }
};

/// (L^2_n)^3 inner product.
inline double inner(const Triple& a, const Triple& b) {
    return l2_inner(a.plus, b.plus) + l2_inner(a.minus, b.minus) + l2_inner(a.potential, b.potential);
}

/// Euclidean product of the componentwise L^2_n norms.
inline double l2_norm(const Triple& t) {
    return std::sqrt(std::pow(l2_norm(t.plus), 2) + std::pow(l2_norm(t.minus), 2) + std::pow(l2_norm(t.potential), 2));
}

/// Euclidean product of the componentwise H^k_n norms.
inline double hk_norm(const Triple& t, int k) {
    return std::sqrt(std::pow(hk_norm(t.plus, k), 2) + std::pow(hk_norm(t.minus, k), 2) +
                     std::pow(hk_norm(t.potential, k), 2));
}

/// Unknown of all solvers: u = (nu+, nu-, V) with V stored mean-zero and the
/// additive constant (Lagrange multiplier) carried by `gauge`.
struct State {
    ScalarField nu_plus;
    ScalarField nu_minus;
    ScalarField V;
    double gauge = 0.0;

    State() = default;
    State(ScalarField np, ScalarField nm, ScalarField v, double g = 0.0)
        : nu_plus(std::move(np)), nu_minus(std::move(nm)), V(std::move(v)), gauge(g) {
        nu_plus.require_same_grid(nu_minus);
        nu_plus.require_same_grid(V);
        const double m = V.mean();
        V += -m;
        gauge += m;
    }

    const GridSpec& grid() const { return nu_plus.grid(); }

    ScalarField total_potential() const { return V + gauge; }
    ScalarField rho() const { return nu_plus * nu_plus + nu_minus * nu_minus; }
    ScalarField magnetization() const { return nu_plus * nu_plus - nu_minus * nu_minus; }
    double min_nu() const { return std::min(nu_plus.min(), nu_minus.min()); }

    /// (nu+, nu-, V + gauge).
    Triple as_triple() const { return Triple(nu_plus, nu_minus, total_potential()); }

    static State from_triple(const Triple& t) { return State(t.plus, t.minus, t.potential, 0.0); }

    /// u + t * d, with d a full-potential triple.
    State plus_scaled(double t, const Triple& d) const {
        Triple x = as_triple();
        x.axpy(t, d);
        return from_triple(x);
    }
};

/// u - u' as a triple of full potentials.
inline Triple difference(const State& a, const State& b) { return a.as_triple() - b.as_triple(); }

/// Lattice, background and grid bundled for field-level evaluation.
struct Model {
    LatticeSpec lattice;
    GridSpec grid;
    ScalarField rho_b;

    Model() = default;
    Model(LatticeSpec spec, GridSpec g) : lattice(std::move(spec)), grid(std::move(g)), rho_b(sample(lattice.rho_b, grid)) {
        if (!(grid.lattice() == lattice.lattice)) fail(ErrorKind::structural, "grid lattice differs from model lattice");
    }

    double Z() const { return lattice.Z; }
    Model on(const GridSpec& g) const { return Model(lattice, g); }
    Model supercell(std::array<int, 3> sc) const { return Model(lattice, grid.with_supercell(sc)); }
    Model cell() const { return Model(lattice, grid.cell()); }
};

/// n^{-3} int rho.
inline double electrons_per_cell(const State& s) {
    return s.rho().integral() / double(s.grid().cell_count());
}

/// Uniform rescaling nu -> c nu onto n^{-3} int rho = Z.
inline State normalize(State s, double Z) {
    const double n = electrons_per_cell(s);
    if (!(n > 0.0)) fail(ErrorKind::degenerate_state, "cannot normalize a state with zero density");
    const double c = std::sqrt(Z / n);
    s.nu_plus *= c;
    s.nu_minus *= c;
    return s;
}

/// Coulomb potential of the state's density (mean-zero), 4 pi (-Laplacian)^{-1}(rho - rho_b).
inline ScalarField coulomb_potential(const ScalarField& rho, const ScalarField& rho_b) {
    ScalarField g = 4.0 * pi * (rho - rho_b);
    const double scale = 4.0 * pi * std::abs(rho_b.mean());
    require_mean_zero(g, 1e-10, scale, "coulomb_potential");
    g += -g.mean();
    return poisson_solve(g, scale);
}

}  // namespace tfdw
