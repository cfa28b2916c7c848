#pragma once

#include <random>
#include <vector>

#include "tfdw/cauchy_born.hpp"
#include "tfdw/jellium.hpp"

namespace tfdw::testing {

/// Crystal with background 2 nu0^2 (1 + a cos(2 pi x1 / L)) on a cubic cell of side L.
inline Model modulated(double nu0, double a, double L, std::array<int, 3> res) {
    const Lattice lat = Lattice::cubic(L);
    const double rb = 2.0 * nu0 * nu0;
    LatticeSpec spec(lat, rb * lat.volume(), a == 0.0 ? std::vector<FourierMode>{}
                                                      : std::vector<FourierMode>{FourierMode{{1, 0, 0}, a * rb, 0.0}});
    return Model(spec, GridSpec(lat, res));
}

inline Model jellium_model(double nu0, std::array<int, 3> res, double L = 1.0) { return modulated(nu0, 0.0, L, res); }

/// Exact constant solution nu+- = nu0, V = 0, gauge = -lambda.
inline State jellium_state(const GridSpec& g, double nu0) {
    const jellium::Params p(nu0);
    return State(ScalarField(g, nu0), ScalarField(g, nu0), ScalarField(g), p.gauge());
}

/// Smooth random field: a few low Fourier modes with Gaussian amplitudes.
inline ScalarField smooth_random(const GridSpec& g, std::mt19937_64& rng, int kmax = 2, double amp = 1.0) {
    std::normal_distribution<double> nd(0.0, 1.0);
    PeriodicProfile p;
    p.mean = amp * nd(rng);
    for (int i = -kmax; i <= kmax; ++i) {
        for (int j = -kmax; j <= kmax; ++j) {
            for (int k = 0; k <= kmax; ++k) {
                if (i == 0 && j == 0 && k == 0) continue;
                const std::array<int, 3> idx{g.resolution()[0] > 1 ? i : 0, g.resolution()[1] > 1 ? j : 0,
                                             g.resolution()[2] > 1 ? k : 0};
                if (idx == std::array<int, 3>{0, 0, 0}) continue;
                p.modes.push_back({idx, amp * nd(rng) / (1 + i * i + j * j + k * k), amp * nd(rng) / (1 + i * i + j * j + k * k)});
            }
        }
    }
    return sample(p, g);
}

inline ScalarField smooth_random_zero_mean(const GridSpec& g, std::mt19937_64& rng, int kmax = 2) {
    ScalarField f = smooth_random(g, rng, kmax);
    f += -f.mean();
    return f;
}

/// Positive smooth densities normalized to Z, Coulomb potential, random gauge.
inline State random_state(const Model& m, std::mt19937_64& rng, double amp = 0.1) {
    const double base = std::sqrt(0.5 * m.Z() / m.grid.cell_volume());
    ScalarField np = smooth_random(m.grid, rng, 2, amp * base);
    ScalarField nm = smooth_random(m.grid, rng, 2, amp * base);
    np += base - np.mean();
    nm += base - nm.mean();
    State s = normalize(State(np, nm, ScalarField(m.grid)), m.Z());
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    const ScalarField rho = s.rho();
    ScalarField g = 4.0 * pi * (rho - m.rho_b);
    g += -g.mean();
    return State(s.nu_plus, s.nu_minus, poisson_solve(g), u(rng));
}

inline Triple random_triple(const GridSpec& g, std::mt19937_64& rng) {
    return Triple(smooth_random(g, rng), smooth_random(g, rng), smooth_random(g, rng));
}

/// Analytic jellium fiber spectrum: the 3 eigenvalues at every mode k + xi,
/// with k + xi folded into the grid's frequency window (same convention as the fiber).
inline std::vector<double> jellium_fiber_spectrum(const GridSpec& g, double nu0, const Eigen::Vector3d& xi) {
    const jellium::Params p(nu0);
    const Eigen::Matrix3d b = g.lattice().reciprocal();
    const Eigen::Vector3d t = b.inverse() * xi;
    std::vector<double> out;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto m = g.multi_index(i);
        Eigen::Vector3d s;
        for (int a = 0; a < 3; ++a) {
            const double n = g.points(a);
            const double f = m[a] < (g.points(a) + 1) / 2 ? m[a] : m[a] - g.points(a);
            double v = f + t[a];
            v -= n * std::floor((v + 0.5 * n) / n);
            s[a] = v;
        }
        const double k2 = (b * s).squaredNorm();
        const auto e = jellium::eigenvalues(p, k2);
        out.push_back(e.lambda1);
        out.push_back(e.lambda_plus);
        out.push_back(e.lambda_minus);
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Quasi-1D CB table used by several tests (cheap: 16 points, |h| <= 0.06).
inline CBTable small_table(double L = 1.0, double h_max = 0.06, double step = 0.02) {
    const Model m = modulated(0.7, 0.3, L, {16, 1, 1});
    CBTableOptions o;
    o.h_max = h_max;
    o.step = step;
    return build_cb_table(m, o);
}

}  // namespace tfdw::testing
