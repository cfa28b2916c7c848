#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tfdw/error.hpp"
#include "tfdw/lattice.hpp"

namespace tfdw::jellium {

/// Constant solution nu+ = nu- = nu0 over the neutral background rho_b = 2 nu0^2.
struct Params {
    double nu0 = 1.0;

    explicit Params(double nu) : nu0(nu) {
        if (!(nu0 > 0.0)) fail(ErrorKind::structural, "jellium nu0 must be positive");
    }
    double rho_b() const { return 2.0 * nu0 * nu0; }
    /// Lagrange multiplier of the constant solution (V = 0).
    double lambda() const { return 5.0 / 3.0 * std::pow(nu0, 4.0 / 3.0) - 4.0 / 3.0 * std::pow(nu0, 2.0 / 3.0); }
    /// Gauge making the residual vanish with V = 0: minus the multiplier.
    double gauge() const { return -lambda(); }
    /// c = 20/9 nu0^{4/3} - 8/9 nu0^{2/3}.
    double c() const { return 20.0 / 9.0 * std::pow(nu0, 4.0 / 3.0) - 8.0 / 9.0 * std::pow(nu0, 2.0 / 3.0); }
};

/// Symbol of the linearized operator at frequency |xi|^2 = xi2.
inline Eigen::Matrix3d symbol_matrix(const Params& p, double xi2) {
    const double d = xi2 + p.c();
    Eigen::Matrix3d m;
    m << d, 0.0, p.nu0,  //
        0.0, d, p.nu0,   //
        p.nu0, p.nu0, -xi2 / (8.0 * pi);
    return m;
}

struct Eigenvalues {
    double lambda1;       // spin channel, eigenvector (1, -1, 0)
    double lambda_plus;   // charge channel, larger
    double lambda_minus;  // charge channel, smaller

    std::array<double, 3> sorted() const {
        std::array<double, 3> a{lambda1, lambda_plus, lambda_minus};
        std::sort(a.begin(), a.end());
        return a;
    }
    double min_abs() const {
        return std::min({std::abs(lambda1), std::abs(lambda_plus), std::abs(lambda_minus)});
    }
};

/// Exact eigenvalues: lambda1 = xi^2 + c, and the charge pair from the 2x2
/// reduction [[xi^2 + c, sqrt2 nu0], [sqrt2 nu0, -xi^2/(8 pi)]] on the
/// complement of (1, -1, 0).
inline Eigenvalues eigenvalues(const Params& p, double xi2) {
    const double a = xi2 + p.c();
    const double d = -xi2 / (8.0 * pi);
    const double b = std::sqrt(2.0) * p.nu0;
    const double mean = 0.5 * (a + d);
    const double rad = std::hypot(0.5 * (a - d), b);
    return {a, mean + rad, mean - rad};
}

/// Product of the charge pair as displayed in the literature, with nu0^2 in
/// place of the determinant's 2 nu0^2. Kept only for comparison.
inline double displayed_charge_product(const Params& p, double xi2) {
    return -(xi2 / (8.0 * pi)) * (xi2 + p.c()) - p.nu0 * p.nu0;
}

/// lambda+ lambda- from the 2x2 determinant: -(xi^2/8pi)(xi^2 + c) - 2 nu0^2.
inline double charge_product(const Params& p, double xi2) {
    return -(xi2 / (8.0 * pi)) * (xi2 + p.c()) - 2.0 * p.nu0 * p.nu0;
}

/// Spin-wave threshold: c > 0 iff nu0 > (2/5)^{3/2}.
inline double sdw_threshold() { return std::pow(0.4, 1.5); }

/// Charge-wave condition c > -8 sqrt(pi) nu0.
inline bool cdw_condition(const Params& p) { return p.c() > -8.0 * std::sqrt(pi) * p.nu0; }

/// Bisection for the sign change of lambda_{0,1}(nu0) = c(nu0) on [lo, hi].
inline double bisect_sdw_threshold(double lo = 0.1, double hi = 1.0, double tol = 1e-12) {
    auto f = [](double nu) { return eigenvalues(Params(nu), 0.0).lambda1; };
    double flo = f(lo);
    if (flo * f(hi) > 0.0) fail(ErrorKind::range, "no sign change of lambda1 in bracket", {{"lo", lo}, {"hi", hi}});
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// CSV rows (nu0, xi, lambda1, lambda+, lambda-) with xi = |xi|.
inline std::string sweep_csv(const std::vector<double>& nu0s, const std::vector<double>& xis) {
    std::ostringstream os;
    os.precision(17);
    os << "nu0,xi,lambda1,lambda_plus,lambda_minus\n";
    for (double nu : nu0s) {
        const Params p(nu);
        for (double xi : xis) {
            const auto e = eigenvalues(p, xi * xi);
            os << nu << ',' << xi << ',' << e.lambda1 << ',' << e.lambda_plus << ',' << e.lambda_minus << '\n';
        }
    }
    return os.str();
}

/// Lattice spec with the neutral constant background for nu0.
inline LatticeSpec lattice_spec(const Lattice& l, const Params& p) { return LatticeSpec::jellium(l, p.nu0); }

}  // namespace tfdw::jellium
