#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "tfdw/error.hpp"

namespace tfdw {

using LinearMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct MinresOptions {
    double rel_tol = 1e-10;   // on ||b - A x|| / ||b||
    double abs_tol = 0.0;     // on ||b - A x|| (Euclidean)
    int max_iterations = 5000;
    int max_restarts = 4;
};

struct MinresResult {
    Eigen::VectorXd x;
    int iterations = 0;
    double residual_norm = 0.0;  // true Euclidean residual
    bool converged = false;
    std::vector<double> history;
};

namespace detail {

/// One preconditioned MINRES cycle (Paige-Saunders recurrences) from x0.
inline int minres_cycle(const LinearMap& A, const LinearMap& M, const Eigen::VectorXd& b, Eigen::VectorXd& x,
                        double target, int max_it, std::vector<double>& history) {
    Eigen::VectorXd r1 = b - A(x);
    Eigen::VectorXd y = M(r1);
    const double beta1_sq = r1.dot(y);
    if (beta1_sq < 0.0) fail(ErrorKind::linear_solver, "MINRES preconditioner is not positive definite");
    const double beta1 = std::sqrt(beta1_sq);
    if (beta1 == 0.0) return 0;
    // Stop on the preconditioned residual estimate, scaled to the Euclidean target.
    const double scale = r1.norm() / beta1;

    double oldb = 0.0, beta = beta1, dbar = 0.0, epsln = 0.0, phibar = beta1;
    double cs = -1.0, sn = 0.0;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(b.size());
    Eigen::VectorXd w2 = w, w1;
    Eigen::VectorXd r2 = r1;
    int it = 0;
    while (it < max_it) {
        ++it;
        const double s = 1.0 / beta;
        const Eigen::VectorXd v = s * y;
        y = A(v);
        if (it >= 2) y -= (beta / oldb) * r1;
        const double alfa = v.dot(y);
        y -= (alfa / beta) * r2;
        r1 = r2;
        r2 = y;
        y = M(r2);
        oldb = beta;
        const double bsq = r2.dot(y);
        if (bsq < 0.0) fail(ErrorKind::linear_solver, "MINRES preconditioner is not positive definite");
        beta = std::sqrt(bsq);
        const double oldeps = epsln;
        const double delta = cs * dbar + sn * alfa;
        const double gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        double gamma = std::hypot(gbar, beta);
        gamma = std::max(gamma, std::numeric_limits<double>::min());
        cs = gbar / gamma;
        sn = beta / gamma;
        const double phi = cs * phibar;
        phibar = sn * phibar;
        w1 = w2;
        w2 = w;
        w = (v - oldeps * w1 - delta * w2) / gamma;
        x += phi * w;
        history.push_back(phibar * scale);
        if (phibar * scale <= target || beta == 0.0) break;
    }
    return it;
}

}  // namespace detail

/// Preconditioned MINRES for symmetric (possibly indefinite) A with SPD
/// preconditioner M (applied as M ~ A^{-1} in magnitude). Restarts from the
/// current iterate until the true residual meets the tolerance.
inline MinresResult minres(const LinearMap& A, const Eigen::VectorXd& b, const LinearMap& M,
                           const MinresOptions& opts = {}, Eigen::VectorXd x0 = {}) {
    MinresResult res;
    res.x = x0.size() == b.size() ? x0 : Eigen::VectorXd::Zero(b.size());
    const double bnorm = b.norm();
    const double target = std::max(opts.rel_tol * bnorm, opts.abs_tol);
    if (bnorm == 0.0) {
        res.x.setZero();
        res.converged = true;
        return res;
    }
    for (int cycle = 0; cycle <= opts.max_restarts; ++cycle) {
        // Aim a little below the target so that the true residual lands under it.
        res.iterations += detail::minres_cycle(A, M, b, res.x, 0.5 * target, opts.max_iterations, res.history);
        res.residual_norm = (b - A(res.x)).norm();
        if (res.residual_norm <= target) {
            res.converged = true;
            return res;
        }
    }
    return res;
}

}  // namespace tfdw
