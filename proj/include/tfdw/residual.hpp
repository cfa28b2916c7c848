#pragma once

#include "tfdw/state.hpp"

namespace tfdw {

/// Euler-Lagrange residual in the form the equations are written:
///   r+- = -Lap nu+- + 5/3 nu^{7/3} - 4/3 nu^{5/3} + (V + gauge -+ h) nu+-
///   r_poisson = -Lap V - 4 pi (rho - rho_b) with its mean removed,
/// the removed mean being reported through constraint_defect = n^{-3} int rho - Z.
struct Residual {
    ScalarField r_plus;
    ScalarField r_minus;
    ScalarField r_poisson;
    double constraint_defect = 0.0;

    /// The map F whose derivative is the linearized operator: third component
    /// -(full Poisson residual)/(8 pi) = Lap V/(8 pi) + (rho - rho_b)/2.
    Triple as_triple() const {
        const double cell_volume = r_poisson.grid().cell_volume();
        ScalarField third = (-1.0 / (8.0 * pi)) * r_poisson;
        third += 0.5 * constraint_defect / cell_volume;
        return Triple(r_plus, r_minus, std::move(third));
    }

    /// (L^2_n)^3 norm of the F form.
    double norm() const { return l2_norm(as_triple()); }
};

namespace detail {

/// Channel terms without the potential: -Lap nu + 5/3 nu^{7/3} - 4/3 nu^{5/3}.
inline ScalarField channel_kinetic(const ScalarField& nu) {
    ScalarField out = -laplacian(nu);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double t = nu[i];
        out[i] += 5.0 / 3.0 * odd_pow(t, 7.0 / 3.0) - 4.0 / 3.0 * odd_pow(t, 5.0 / 3.0);
    }
    return out;
}

}  // namespace detail

inline Residual residual(const State& s, const ScalarField& h, const ScalarField& rho_b, double Z) {
    s.nu_plus.require_same_grid(h);
    s.nu_plus.require_same_grid(rho_b);
    Residual r;
    const ScalarField vt = s.total_potential();
    r.r_plus = detail::channel_kinetic(s.nu_plus) + (vt - h) * s.nu_plus;
    r.r_minus = detail::channel_kinetic(s.nu_minus) + (vt + h) * s.nu_minus;
    ScalarField p = -laplacian(s.V) - 4.0 * pi * (s.rho() - rho_b);
    p += -p.mean();
    r.r_poisson = std::move(p);
    r.constraint_defect = electrons_per_cell(s) - Z;
    return r;
}

inline Residual residual(const State& s, const ScalarField& h, const Model& m) { return residual(s, h, m.rho_b, m.Z()); }

inline Residual residual(const State& s, double h, const Model& m) {
    return residual(s, ScalarField(s.grid(), h), m.rho_b, m.Z());
}

/// F(u, h) as a triple (see Residual::as_triple).
inline Triple el_map(const State& s, const ScalarField& h, const Model& m) { return residual(s, h, m).as_triple(); }

/// Least-squares gauge: the constant c minimizing ||(r+, r-)||^2 over V -> V + c.
inline double gauge_fit(const State& s, const ScalarField& h) {
    s.nu_plus.require_same_grid(h);
    const double denom = l2_inner(s.nu_plus, s.nu_plus) + l2_inner(s.nu_minus, s.nu_minus);
    if (!(denom > 0.0)) fail(ErrorKind::degenerate_state, "gauge_fit: both spin channels vanish");
    const ScalarField a_plus = detail::channel_kinetic(s.nu_plus) + (s.V - h) * s.nu_plus;
    const ScalarField a_minus = detail::channel_kinetic(s.nu_minus) + (s.V + h) * s.nu_minus;
    return -(l2_inner(a_plus, s.nu_plus) + l2_inner(a_minus, s.nu_minus)) / denom;
}

inline double gauge_fit(const State& s, double h) { return gauge_fit(s, ScalarField(s.grid(), h)); }

inline State with_fitted_gauge(State s, const ScalarField& h) {
    s.gauge = gauge_fit(s, h);
    return s;
}

}  // namespace tfdw
