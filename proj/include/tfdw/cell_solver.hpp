#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfdw/energy.hpp"
#include "tfdw/linop.hpp"
#include "tfdw/residual.hpp"
#include "tfdw/tfw_io.hpp"

namespace tfdw {

enum class InitPreset { uniform, uniform_random, background };

inline std::string to_string(InitPreset p) {
    switch (p) {
        case InitPreset::uniform: return "uniform";
        case InitPreset::uniform_random: return "uniform_random";
        case InitPreset::background: return "background";
    }
    return "unknown";
}

inline InitPreset init_preset_from_string(const std::string& s) {
    if (s == "uniform") return InitPreset::uniform;
    if (s == "uniform_random") return InitPreset::uniform_random;
    if (s == "background") return InitPreset::background;
    fail(ErrorKind::config, "unknown init preset: " + s);
}

struct CellSolveOptions {
    double tol = 1e-10;            // (L^2_n)^3 norm of F
    double switch_tol = 1e-3;      // phase 1 -> phase 2
    int max_descent_iterations = 5000;
    int max_newton_iterations = 40;
    double nu_floor = 1e-8;
    double C_nu = 0.0;
    double h_max = 1.0;
    double armijo = 1e-4;
    double perturbation = 1e-3;    // amplitude for uniform_random
    unsigned seed = 0;
    InitPreset preset = InitPreset::background;
};

struct CellSolution {
    State state;
    double h_value = 0.0;
    EnergyBreakdown energy;  // totals over the cell
    double residual_norm = 0.0;
    double min_nu = 0.0;
    double C_nu = 0.0;
    bool C_nu_ok = false;
    std::string preset;
    unsigned seed = 0;
    int descent_iterations = 0;
    int newton_iterations = 0;
    std::vector<double> energy_trace;
    std::vector<double> residual_trace;

    nlohmann::json manifest() const {
        return {{"h_value", h_value},
                {"energy", energy.to_json()},
                {"residual_norm", residual_norm},
                {"min_nu", min_nu},
                {"C_nu", C_nu},
                {"C_nu_ok", C_nu_ok},
                {"gauge", state.gauge},
                {"preset", preset},
                {"seed", seed},
                {"descent_iterations", descent_iterations},
                {"newton_iterations", newton_iterations},
                {"grid", grid_to_json(state.grid())}};
    }
};

/// Fields written as nu_plus.tfw, nu_minus.tfw, V.tfw (V including the gauge).
inline void save_state(const std::filesystem::path& dir, const State& s, const nlohmann::json& meta = {}) {
    std::filesystem::create_directories(dir);
    write_tfw(dir / "nu_plus.tfw", s.nu_plus, meta);
    write_tfw(dir / "nu_minus.tfw", s.nu_minus, meta);
    write_tfw(dir / "V.tfw", s.total_potential(), meta);
}

inline State load_state(const std::filesystem::path& dir) {
    return State(read_tfw(dir / "nu_plus.tfw"), read_tfw(dir / "nu_minus.tfw"), read_tfw(dir / "V.tfw"));
}

inline void save_solution(const std::filesystem::path& dir, const CellSolution& sol) {
    save_state(dir, sol.state, {{"h_value", sol.h_value}});
    write_text_atomic(dir / "manifest.json", sol.manifest().dump(2) + "\n");
}

/// Density fields with the Coulomb potential of their charge (mean-zero V).
inline State with_coulomb(ScalarField nu_plus, ScalarField nu_minus, const ScalarField& rho_b, double gauge = 0.0) {
    ScalarField rho = nu_plus * nu_plus + nu_minus * nu_minus;
    ScalarField v = coulomb_potential(rho, rho_b);
    return State(std::move(nu_plus), std::move(nu_minus), std::move(v), gauge);
}

inline State initial_state(const Model& m, InitPreset preset, unsigned seed = 0, double amplitude = 1e-3) {
    const GridSpec& g = m.grid;
    ScalarField base(g);
    if (preset == InitPreset::background) {
        if (!(m.rho_b.min() > 0.0)) fail(ErrorKind::config, "background preset needs a positive background");
        base = m.rho_b.map([](double r) { return std::sqrt(0.5 * r); });
    } else {
        base = ScalarField(g, std::sqrt(0.5 * m.Z() / g.cell_volume()));
    }
    if (preset == InitPreset::uniform_random) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd(0.0, 1.0);
        ScalarField noise(g);
        for (auto& v : noise.values()) v = nd(rng);
        noise = helmholtz_inverse(helmholtz_inverse(noise));
        noise *= amplitude * base.mean() / std::max(noise.max_abs(), 1e-300);
        base += noise;
    }
    State s = normalize(State(base, base, ScalarField(g)), m.Z());
    return with_coulomb(s.nu_plus, s.nu_minus, m.rho_b);
}

namespace detail {

struct DescentResult {
    State state;
    int iterations = 0;
    std::vector<double> energies;
};

/// Preconditioned projected gradient descent on (nu+, nu-) with V eliminated
/// and the normalization restored by rescaling after every step.
inline DescentResult descend(State s, const ScalarField& h, const Model& m, const CellSolveOptions& o) {
    DescentResult out;
    double e = energy_supercell(s, h, m).total;
    out.energies.push_back(e);
    double t = 1.0;
    for (int it = 0; it < o.max_descent_iterations; ++it) {
        s.gauge = gauge_fit(s, h);
        if (residual(s, h, m).norm() <= o.switch_tol) break;
        // L^2 gradient of the energy.
        const ScalarField gp = 2.0 * (detail::channel_kinetic(s.nu_plus) + (s.V - h) * s.nu_plus);
        const ScalarField gm = 2.0 * (detail::channel_kinetic(s.nu_minus) + (s.V + h) * s.nu_minus);
        const ScalarField pgp = helmholtz_inverse(gp), pgm = helmholtz_inverse(gm);
        const ScalarField pnp = helmholtz_inverse(s.nu_plus), pnm = helmholtz_inverse(s.nu_minus);
        const double mu = (l2_inner(s.nu_plus, pgp) + l2_inner(s.nu_minus, pgm)) /
                          (l2_inner(s.nu_plus, pnp) + l2_inner(s.nu_minus, pnm));
        const ScalarField dp = -(pgp - mu * pnp);
        const ScalarField dm = -(pgm - mu * pnm);
        const double slope = l2_inner(gp, dp) + l2_inner(gm, dm);
        if (!(slope < 0.0)) break;  // stationary to rounding
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            State trial = normalize(State(s.nu_plus + t * dp, s.nu_minus + t * dm, ScalarField(s.grid())), m.Z());
            trial = with_coulomb(trial.nu_plus, trial.nu_minus, m.rho_b);
            const double et = energy_supercell(trial, h, m).total;
            if (et <= e + o.armijo * t * slope) {
                if (!(et <= e)) fail(ErrorKind::descent_failure, "energy increased in descent", {{"trace", out.energies}});
                s = std::move(trial);
                e = et;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        out.energies.push_back(e);
        out.iterations = it + 1;
        if (!accepted) {
            // No decrease possible at this precision; accept if already close.
            if (residual(s, h, m).norm() <= 100.0 * o.switch_tol) break;
            fail(ErrorKind::descent_failure, "line search failed to decrease the energy",
                 {{"trace", out.energies}, {"iteration", it}});
        }
        t = std::min(4.0 * t, 1e3);
    }
    s.gauge = gauge_fit(s, h);
    out.state = std::move(s);
    return out;
}

}  // namespace detail

struct NewtonPolishResult {
    State state;
    int iterations = 0;
    std::vector<double> residuals;
};

/// Full Newton on the (nu+, nu-, V) system, renormalizing after each step.
/// Positivity-loss error if min nu drops below the floor.
inline NewtonPolishResult newton_polish(State s, const ScalarField& h, const Model& m, double tol, int max_it,
                                        double nu_floor = 1e-8) {
    NewtonPolishResult out;
    double rn = residual(s, h, m).norm();
    out.residuals.push_back(rn);
    for (int it = 0; it < max_it && rn > tol; ++it) {
        const Triple F = residual(s, h, m).as_triple();
        const LinearizedOperator op(s, h);
        LinearSolveOptions lo;
        lo.rel_tol = 1e-4;
        lo.abs_tol = 0.01 * tol;
        const Triple d = solve(op, F, lo);
        s = normalize(s.plus_scaled(-1.0, d), m.Z());
        if (s.min_nu() < nu_floor) {
            fail(ErrorKind::positivity_loss, "density amplitude dropped below the floor",
                 {{"min_nu", s.min_nu()}, {"floor", nu_floor}, {"iteration", it}});
        }
        rn = residual(s, h, m).norm();
        out.residuals.push_back(rn);
        out.iterations = it + 1;
    }
    if (rn > tol) {
        fail(ErrorKind::non_convergence, "Newton polish did not converge", {{"residuals", out.residuals}});
    }
    out.state = std::move(s);
    return out;
}

inline CellSolution finish_solution(State s, double h_value, const Model& m, const CellSolveOptions& o) {
    CellSolution sol;
    const ScalarField h(s.grid(), h_value);
    sol.residual_norm = residual(s, h, m).norm();
    sol.energy = energy_supercell(s, h, m);
    sol.min_nu = s.min_nu();
    sol.C_nu = o.C_nu;
    sol.C_nu_ok = sol.min_nu >= o.C_nu;
    sol.h_value = h_value;
    sol.preset = to_string(o.preset);
    sol.seed = o.seed;
    sol.state = std::move(s);
    return sol;
}

/// Ground state of the cell problem with constant field h_value.
inline CellSolution solve_cell(const Model& model, double h_value, const CellSolveOptions& o = {},
                               std::optional<State> init = std::nullopt) {
    if (!model.grid.is_cell()) fail(ErrorKind::structural, "solve_cell expects a cell grid");
    if (std::abs(h_value) > o.h_max) fail(ErrorKind::range, "|h| exceeds the configured h_max", {{"h", h_value}});
    const double mean_err = std::abs(model.rho_b.mean() * model.grid.cell_volume() - model.Z());
    if (mean_err > 1e-10 * model.Z()) fail(ErrorKind::structural, "background mean inconsistent with Z");
    const ScalarField h(model.grid, h_value);
    State s = init ? *init : initial_state(model, o.preset, o.seed, o.perturbation);
    s.nu_plus.require_same_grid(h);

    auto d = detail::descend(std::move(s), h, model, o);
    auto p = newton_polish(std::move(d.state), h, model, o.tol, o.max_newton_iterations, o.nu_floor);
    CellSolution sol = finish_solution(std::move(p.state), h_value, model, o);
    sol.descent_iterations = d.iterations;
    sol.newton_iterations = p.iterations;
    sol.energy_trace = std::move(d.energies);
    sol.residual_trace = std::move(p.residuals);
    return sol;
}

/// Linearized-spectrum certificate at a cell solution.
inline StabilityReport verify_minimizer(const CellSolution& sol, const std::vector<Eigen::Vector3d>& xis,
                                        const StabilityOptions& opts = {}) {
    return stability_scan(LinearizedOperator(sol.state, sol.h_value), xis, opts);
}

}  // namespace tfdw
