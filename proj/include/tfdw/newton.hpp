#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfdw/linop.hpp"
#include "tfdw/residual.hpp"

namespace tfdw {

struct NewtonOptions {
    double tol = 1e-10;         // (L^2_n)^3 residual
    int max_iterations = 30;
    double inner_factor = 0.01;  // inner absolute target = inner_factor * tol
    double inner_rel_floor = 1e-10;
    bool full_newton = false;    // re-linearize every step (comparison mode)
    bool check_gap = false;      // estimate the gap of L_{u0} before iterating
    double gap_threshold = 1e-6;
    int divergence_window = 3;
};

struct NewtonTrace {
    std::vector<double> residuals;           // ||F(u^k)||, k = 0..
    std::vector<double> increments;          // ||u^{k+1} - u^k||_{(H^2_n)^3}
    std::vector<double> contraction_ratios;  // increments[k] / increments[k-1], k >= 1
    double distance_to_u0 = 0.0;
    double distance_to_cb = std::numeric_limits<double>::quiet_NaN();
    double gap_estimate = std::numeric_limits<double>::quiet_NaN();
    int inner_iterations = 0;
    bool converged = false;

    int steps() const { return int(increments.size()); }

    double max_contraction() const {
        double m = 0.0;
        for (double r : contraction_ratios) m = std::max(m, r);
        return m;
    }

    std::string to_csv() const {
        std::ostringstream os;
        os.precision(17);
        os << "step,residual,increment,ratio\n";
        for (std::size_t k = 0; k < residuals.size(); ++k) {
            os << k << ',' << residuals[k] << ',';
            if (k < increments.size()) os << increments[k];
            os << ',';
            if (k >= 1 && k - 1 < contraction_ratios.size()) os << contraction_ratios[k - 1];
            os << '\n';
        }
        return os.str();
    }

    nlohmann::json to_json() const {
        nlohmann::json j = {{"residuals", residuals},
                            {"increments", increments},
                            {"contraction_ratios", contraction_ratios},
                            {"distance_to_u0", distance_to_u0},
                            {"inner_iterations", inner_iterations},
                            {"converged", converged},
                            {"steps", steps()}};
        j["distance_to_cb"] = std::isnan(distance_to_cb) ? nlohmann::json(nullptr) : nlohmann::json(distance_to_cb);
        j["gap_estimate"] = std::isnan(gap_estimate) ? nlohmann::json(nullptr) : nlohmann::json(gap_estimate);
        return j;
    }
};

/// Gap of a (supercell) operator via its xi = 0 fiber, loose tolerance.
inline double estimate_gap(const LinearizedOperator& op, double tol = 1e-4) {
    GapOptions go;
    go.tol = tol;
    go.dense_limit = 0;
    go.force_iterative = true;
    return spectral_gap(FiberOperator(op, Eigen::Vector3d::Zero()), go).gap;
}

/// u^{k+1} = u^k - L_{u0}^{-1} F(u^k) with the Jacobian frozen at u0.
inline std::pair<State, NewtonTrace> newton_solve(const State& u0, const ScalarField& h, const Model& model,
                                                  const NewtonOptions& opts = {},
                                                  const std::optional<State>& u_cb = std::nullopt) {
    NewtonTrace tr;
    LinearizedOperator op(u0, h);
    if (opts.check_gap) {
        tr.gap_estimate = estimate_gap(op);
        if (tr.gap_estimate < opts.gap_threshold) {
            fail(ErrorKind::stability, "linearized operator at u0 is numerically singular",
                 {{"gap_estimate", tr.gap_estimate}});
        }
    }
    State u = u0;
    int growth = 0;
    for (int k = 0;; ++k) {
        const Triple F = residual(u, h, model).as_triple();
        const double rn = l2_norm(F);
        tr.residuals.push_back(rn);
        if (rn <= opts.tol) {
            tr.converged = true;
            break;
        }
        if (k >= opts.max_iterations) break;
        if (opts.full_newton && k > 0) op = LinearizedOperator(u, h);
        LinearSolveOptions lo;
        lo.rel_tol = opts.inner_rel_floor;
        lo.abs_tol = opts.inner_factor * opts.tol;
        Triple d;
        MinresResult info;
        try {
            d = solve(op, F, lo, &info);
        } catch (const Error& e) {
            nlohmann::json p = e.payload();
            p["gap_estimate"] = estimate_gap(op);
            p["step"] = k;
            fail(ErrorKind::linear_solver, e.what(), p);
        }
        tr.inner_iterations += info.iterations;
        u = u.plus_scaled(-1.0, d);
        tr.increments.push_back(hk_norm(d, 2));
        if (tr.increments.size() >= 2) {
            const double ratio = tr.increments.back() / tr.increments[tr.increments.size() - 2];
            tr.contraction_ratios.push_back(ratio);
            growth = ratio > 1.0 ? growth + 1 : 0;
            if (growth >= opts.divergence_window) {
                fail(ErrorKind::divergence, "Newton increments grew for consecutive steps",
                     {{"increments", tr.increments}, {"residuals", tr.residuals}});
            }
        }
    }
    tr.distance_to_u0 = hk_norm(difference(u, u0), 2);
    if (u_cb) tr.distance_to_cb = hk_norm(difference(u, *u_cb), 2);
    return {std::move(u), std::move(tr)};
}

}  // namespace tfdw
