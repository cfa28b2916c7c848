#pragma once

#include <json.hpp>

#include "tfdw/state.hpp"

namespace tfdw {

/// Per-term TFDW energy; integrals are totals over the grid's domain.
struct EnergyBreakdown {
    double thomas_fermi = 0.0;
    double weizsacker = 0.0;
    double dirac = 0.0;
    double coulomb = 0.0;
    double zeeman = 0.0;
    double total = 0.0;

    EnergyBreakdown scaled(double s) const {
        return {thomas_fermi * s, weizsacker * s, dirac * s, coulomb * s, zeeman * s, total * s};
    }

    nlohmann::json to_json() const {
        return {{"thomas_fermi", thomas_fermi}, {"weizsacker", weizsacker}, {"dirac", dirac},
                {"coulomb", coulomb},           {"zeeman", zeeman},         {"total", total}};
    }
};

/// -int h m with m = nu+^2 - nu-^2.
inline double zeeman_coupling(const State& s, const ScalarField& h) {
    s.nu_plus.require_same_grid(h);
    return -(h * s.magnetization()).integral();
}

/// Supercell TFDW functional with applied field h (already sampled at eps x).
/// The Coulomb term is 1/2 D(rho - rho_b, rho - rho_b) through the H^{-1} product.
inline EnergyBreakdown energy_supercell(const State& s, const ScalarField& h, const ScalarField& rho_b) {
    s.nu_plus.require_same_grid(h);
    s.nu_plus.require_same_grid(rho_b);
    EnergyBreakdown e;
    const auto tf = [](double t) { return std::pow(std::abs(t), 10.0 / 3.0); };
    const auto dx = [](double t) { return std::pow(std::abs(t), 8.0 / 3.0); };
    e.thomas_fermi = s.nu_plus.map(tf).integral() + s.nu_minus.map(tf).integral();
    e.dirac = -(s.nu_plus.map(dx).integral() + s.nu_minus.map(dx).integral());
    // int |grad nu|^2 = int nu (-Laplacian nu), same symbol as the EL operator.
    e.weizsacker = -(s.nu_plus * laplacian(s.nu_plus)).integral() - (s.nu_minus * laplacian(s.nu_minus)).integral();

    ScalarField charge = s.rho() - rho_b;
    const double scale = std::abs(rho_b.mean());
    require_mean_zero(charge, 1e-10, scale, "energy_supercell");
    charge += -charge.mean();
    e.coulomb = 0.5 * hminus1_inner(charge, charge, scale);
    e.zeeman = zeeman_coupling(s, h);
    e.total = e.thomas_fermi + e.weizsacker + e.dirac + e.coulomb + e.zeeman;
    return e;
}

inline EnergyBreakdown energy_supercell(const State& s, const ScalarField& h, const Model& model) {
    return energy_supercell(s, h, model.rho_b);
}

/// Energy with a constant field h on the state's grid.
inline EnergyBreakdown energy_constant_field(const State& s, double h, const Model& model) {
    return energy_supercell(s, ScalarField(s.grid(), h), model.rho_b);
}

/// Volume-averaged energy (barred integrals): total / |n Gamma|.
inline EnergyBreakdown averaged(const EnergyBreakdown& e, const GridSpec& g) { return e.scaled(1.0 / g.domain_volume()); }

}  // namespace tfdw
