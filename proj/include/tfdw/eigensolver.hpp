#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "tfdw/error.hpp"

namespace tfdw {

template <class Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using OperatorFn = std::function<VecX<Scalar>(const VecX<Scalar>&)>;

struct LobpcgOptions {
    int block_size = 4;
    double tol = 1e-9;  // relative: ||A x - mu x|| <= tol * mu
    // Also stop once the residual is at rounding level for the operator scale
    // (largest Ritz value seen); a relative test cannot pass when mu ~ 0.
    double floor_rel = 1e-12;
    int max_iterations = 1000;
    unsigned seed = 12345;
};

template <class Scalar>
struct LobpcgResult {
    double eigenvalue = 0.0;
    VecX<Scalar> eigenvector;
    int iterations = 0;
    bool at_floor = false;  // stopped by floor_rel, not tol
    std::vector<double> residual_history;
};

namespace detail {

template <class Scalar>
Scalar random_scalar(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    if constexpr (std::is_same_v<Scalar, double>) {
        return u(rng);
    } else {
        const double re = u(rng);
        const double im = u(rng);
        return Scalar(re, im);
    }
}

/// Orthonormalize columns (two passes of modified Gram-Schmidt), dropping
/// columns that are numerically dependent on earlier ones.
template <class Scalar>
MatX<Scalar> orthonormalize(const MatX<Scalar>& s, double drop_tol = 1e-10) {
    std::vector<VecX<Scalar>> cols;
    for (int j = 0; j < s.cols(); ++j) {
        VecX<Scalar> v = s.col(j);
        const double n0 = v.norm();
        if (n0 == 0.0) continue;
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& q : cols) v -= q * q.dot(v);
        }
        const double n1 = v.norm();
        if (n1 <= drop_tol * n0) continue;
        cols.push_back(v / n1);
    }
    MatX<Scalar> q(s.rows(), Eigen::Index(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) q.col(Eigen::Index(j)) = cols[j];
    return q;
}

template <class Scalar>
MatX<Scalar> apply_columns(const OperatorFn<Scalar>& a, const MatX<Scalar>& x) {
    MatX<Scalar> out(x.rows(), x.cols());
    for (int j = 0; j < x.cols(); ++j) out.col(j) = a(x.col(j));
    return out;
}

}  // namespace detail

/// Smallest eigenpair of a Hermitian positive semi-definite operator by
/// preconditioned LOBPCG. `precond` should approximate the inverse.
template <class Scalar>
LobpcgResult<Scalar> lobpcg_smallest(const OperatorFn<Scalar>& a, const OperatorFn<Scalar>& precond, Eigen::Index dim,
                                     const LobpcgOptions& opts = {}) {
    const int m = std::min<int>(opts.block_size, int(dim));
    std::mt19937_64 rng(opts.seed);
    MatX<Scalar> x(dim, m);
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (int j = 0; j < m; ++j) x(i, j) = detail::random_scalar<Scalar>(rng);
    }
    x = detail::orthonormalize<Scalar>(x);
    MatX<Scalar> ax = detail::apply_columns(a, x);
    {
        MatX<Scalar> g = x.adjoint() * ax;
        g = (0.5 * (g + g.adjoint())).eval();
        Eigen::SelfAdjointEigenSolver<MatX<Scalar>> es(g);
        x = x * es.eigenvectors();
        ax = ax * es.eigenvectors();
    }
    MatX<Scalar> p(dim, 0);
    LobpcgResult<Scalar> result;
    double scale = 0.0;
    for (int it = 0; it < opts.max_iterations; ++it) {
        VecX<Scalar> mu(x.cols());
        for (int j = 0; j < x.cols(); ++j) mu[j] = x.col(j).dot(ax.col(j));
        MatX<Scalar> r = ax;
        for (int j = 0; j < x.cols(); ++j) r.col(j) -= mu[j] * x.col(j);
        const double mu0 = std::real(mu[0]);
        const double rn = r.col(0).norm();
        result.residual_history.push_back(rn);
        result.iterations = it + 1;
        const bool rel_ok = rn <= opts.tol * std::max(std::abs(mu0), 1e-300) || rn == 0.0;
        if (rel_ok || rn <= opts.floor_rel * scale) {
            result.at_floor = !rel_ok;
            result.eigenvalue = mu0;
            result.eigenvector = x.col(0);
            return result;
        }
        MatX<Scalar> w = detail::apply_columns(precond, r);
        MatX<Scalar> s(dim, x.cols() + w.cols() + p.cols());
        s << x, w, p;
        MatX<Scalar> q = detail::orthonormalize<Scalar>(s);
        MatX<Scalar> aq = detail::apply_columns(a, q);
        MatX<Scalar> g = q.adjoint() * aq;
        g = (0.5 * (g + g.adjoint())).eval();
        Eigen::SelfAdjointEigenSolver<MatX<Scalar>> es(g);
        scale = std::max(scale, es.eigenvalues().cwiseAbs().maxCoeff());
        const MatX<Scalar> c = es.eigenvectors().leftCols(m);
        MatX<Scalar> xn = q * c;
        MatX<Scalar> axn = aq * c;
        // Search direction: the part of the update outside span(x).
        p = xn - x * (x.adjoint() * xn);
        x = std::move(xn);
        ax = std::move(axn);
    }
    fail(ErrorKind::non_convergence, "LOBPCG did not converge",
         {{"iterations", opts.max_iterations}, {"residual_history", result.residual_history}});
}

}  // namespace tfdw
