#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tfdw/eigensolver.hpp"
#include "tfdw/krylov.hpp"
#include "tfdw/residual.hpp"

namespace tfdw {

/// Linearization of the EL map at a state:
///   L(w+, w-, W) = (L+ w+ + nu+ W,  L- w- + nu- W,  nu+ w+ + nu- w- + Lap W / (8 pi))
/// with L+- = -Lap + F+-,  F+- = 35/9 |nu+-|^{4/3} - 20/9 |nu+-|^{2/3} + V -+ h.
/// `shift` adds shift * I (used to probe spectra).
class LinearizedOperator {
public:
    LinearizedOperator() = default;

    LinearizedOperator(State base, ScalarField h, double shift = 0.0)
        : base_(std::move(base)), h_(std::move(h)), shift_(shift) {
        base_.nu_plus.require_same_grid(h_);
        const ScalarField vt = base_.total_potential();
        const auto local = [](double t) {
            const double a = std::abs(t);
            return 35.0 / 9.0 * std::pow(a, 4.0 / 3.0) - 20.0 / 9.0 * std::pow(a, 2.0 / 3.0);
        };
        F_plus_ = base_.nu_plus.map(local) + vt - h_;
        F_minus_ = base_.nu_minus.map(local) + vt + h_;
    }

    LinearizedOperator(State base, double h, double shift = 0.0)
        : LinearizedOperator(base, ScalarField(base.grid(), h), shift) {}

    const State& base() const { return base_; }
    const ScalarField& h() const { return h_; }
    const GridSpec& grid() const { return base_.grid(); }
    const ScalarField& F_plus() const { return F_plus_; }
    const ScalarField& F_minus() const { return F_minus_; }
    const ScalarField& nu_plus() const { return base_.nu_plus; }
    const ScalarField& nu_minus() const { return base_.nu_minus; }
    double shift() const { return shift_; }
    Eigen::Index dim() const { return Eigen::Index(3 * grid().size()); }

    LinearizedOperator shifted(double s) const {
        LinearizedOperator out = *this;
        out.shift_ += s;
        return out;
    }

    Triple apply(const Triple& w) const {
        const ScalarField& np = base_.nu_plus;
        const ScalarField& nm = base_.nu_minus;
        Triple out(-laplacian(w.plus) + F_plus_ * w.plus + np * w.potential,
                   -laplacian(w.minus) + F_minus_ * w.minus + nm * w.potential,
                   np * w.plus + nm * w.minus + (1.0 / (8.0 * pi)) * laplacian(w.potential));
        if (shift_ != 0.0) out.axpy(shift_, w);
        return out;
    }

    Eigen::VectorXd apply_flat(const Eigen::VectorXd& v) const {
        return apply(Triple::unflatten(grid(), v)).flatten();
    }

    LinearMap as_map() const {
        return [this](const Eigen::VectorXd& v) { return apply_flat(v); };
    }

    /// SPD block preconditioner approximating |L|^{-1}: (sigma - Lap)^{-1} on the
    /// density blocks and the inverse of |k|^2/(8 pi) + rho_bar/(|k|^2 + sigma)
    /// (the magnitude of the jellium Schur complement) on the potential block.
    LinearMap preconditioner(double sigma = 1.0) const {
        const GridSpec g = grid();
        const double rho_bar = std::max(base_.rho().mean(), 1e-12);
        return [g, sigma, rho_bar](const Eigen::VectorXd& v) {
            Triple t = Triple::unflatten(g, v);
            Triple out(helmholtz_inverse(t.plus, sigma), helmholtz_inverse(t.minus, sigma),
                       apply_symbol(t.potential, [&](std::size_t i) -> cplx {
                           const double k2 = g.laplacian_symbol(i);
                           return 1.0 / (k2 / (8.0 * pi) + rho_bar / (k2 + sigma));
                       }));
            return out.flatten();
        };
    }

private:
    State base_;
    ScalarField h_;
    ScalarField F_plus_;
    ScalarField F_minus_;
    double shift_ = 0.0;
};

struct LinearSolveOptions {
    double rel_tol = 1e-10;
    double abs_tol = 0.0;  // on the (L^2_n)^3 residual norm
    int max_iterations = 5000;
};

/// Solve L x = b with preconditioned MINRES; linear-solver error on failure.
inline Triple solve(const LinearizedOperator& op, const Triple& b, const LinearSolveOptions& opts = {},
                    MinresResult* info = nullptr) {
    MinresOptions mo;
    mo.rel_tol = opts.rel_tol;
    // Convert the averaged-norm target to the Euclidean norm of the flat vector.
    const double euclid = std::sqrt(double(op.grid().size()) / op.grid().cell_volume());
    mo.abs_tol = opts.abs_tol * euclid;
    mo.max_iterations = opts.max_iterations;
    MinresResult r = minres(op.as_map(), b.flatten(), op.preconditioner(), mo);
    if (info) *info = r;
    if (!r.converged) {
        fail(ErrorKind::linear_solver, "MINRES did not reach the requested tolerance",
             {{"iterations", r.iterations},
              {"residual", r.residual_norm},
              {"rhs", b.flatten().norm()},
              {"rel_tol", opts.rel_tol}});
    }
    return Triple::unflatten(op.grid(), r.x);
}

// ---- Bloch-Floquet fibers --------------------------------------------------

/// Fiber L_xi acting on periodic (complex) triples over the operator's grid:
/// -Lap is replaced by |k + xi|^2. Each grid mode is paired with the
/// representative of k + xi inside the grid's frequency window, so xi and
/// xi + G give identical operators and the commensurate fibers of a cell
/// operator tile the supercell spectrum exactly.
class FiberOperator {
public:
    FiberOperator(const LinearizedOperator& op, const Eigen::Vector3d& xi)
        : grid_(op.grid()), xi_(xi), shift_(op.shift()) {
        const std::size_t n = grid_.size();
        k2_.resize(n);
        const Eigen::Matrix3d b = grid_.lattice().reciprocal();
        const Eigen::Vector3d t = b.inverse() * xi;  // xi in units of the cell reciprocal vectors
        const auto& sc = grid_.supercell();
        for (std::size_t i = 0; i < n; ++i) {
            const auto m = grid_.multi_index(i);
            Eigen::Vector3d s;
            for (int a = 0; a < 3; ++a) {
                const double p = grid_.points(a);
                double v = grid_.frequency(a, m[a]) + sc[a] * t[a];
                v -= p * std::floor((v + 0.5 * p) / p);
                s[a] = v / sc[a];
            }
            k2_[i] = (b * s).squaredNorm();
        }
        Fp_ = op.F_plus().values();
        Fm_ = op.F_minus().values();
        np_ = op.nu_plus().values();
        nm_ = op.nu_minus().values();
    }

    const GridSpec& grid() const { return grid_; }
    const Eigen::Vector3d& xi() const { return xi_; }
    Eigen::Index dim() const { return Eigen::Index(3 * grid_.size()); }
    std::size_t points() const { return grid_.size(); }

    Eigen::VectorXcd apply(const Eigen::VectorXcd& v) const {
        const std::size_t n = points();
        Eigen::VectorXcd out(3 * n);
        std::vector<cplx> lap[3];
        for (int c = 0; c < 3; ++c) lap[c] = minus_laplacian(v.segment(Eigen::Index(c * n), Eigen::Index(n)));
        for (std::size_t i = 0; i < n; ++i) {
            const cplx a = v[i], b = v[n + i], w = v[2 * n + i];
            out[i] = lap[0][i] + Fp_[i] * a + np_[i] * w;
            out[n + i] = lap[1][i] + Fm_[i] * b + nm_[i] * w;
            out[2 * n + i] = np_[i] * a + nm_[i] * b - lap[2][i] / (8.0 * pi);
        }
        if (shift_ != 0.0) out += shift_ * v;
        return out;
    }

    /// Approximate inverse of L_xi^2, diagonal in the shifted Fourier basis.
    Eigen::VectorXcd precondition_squared(const Eigen::VectorXcd& v, double sigma = 1.0) const {
        const std::size_t n = points();
        Eigen::VectorXcd out(3 * n);
        for (int c = 0; c < 3; ++c) {
            std::vector<cplx> buf(n);
            for (std::size_t i = 0; i < n; ++i) buf[i] = v[c * n + i];
            detail::fft_inplace(buf, grid_.points(), FFTW_FORWARD);
            for (std::size_t i = 0; i < n; ++i) {
                const double d = k2_[i] + sigma;
                buf[i] *= c < 2 ? 1.0 / (d * d) : (8.0 * pi) * (8.0 * pi) / (d * d);
            }
            detail::fft_inplace(buf, grid_.points(), FFTW_BACKWARD);
            for (std::size_t i = 0; i < n; ++i) out[c * n + i] = buf[i] / double(n);
        }
        return out;
    }

    /// Dense Hermitian matrix of the fiber (column j = L e_j).
    Eigen::MatrixXcd dense() const {
        const Eigen::Index d = dim();
        Eigen::MatrixXcd m(d, d);
        Eigen::VectorXcd e = Eigen::VectorXcd::Zero(d);
        for (Eigen::Index j = 0; j < d; ++j) {
            e[j] = 1.0;
            m.col(j) = apply(e);
            e[j] = 0.0;
        }
        return 0.5 * (m + m.adjoint());
    }

    /// Fraction of v carried by the spin channel (phi, -phi, 0).
    double sdw_fraction(const Eigen::VectorXcd& v) const {
        const std::size_t n = points();
        const Eigen::Index nn = Eigen::Index(n);
        const double diff = (v.segment(0, nn) - v.segment(nn, nn)).norm() / std::sqrt(2.0);
        const double total = v.norm();
        return total > 0.0 ? diff / total : 0.0;
    }

private:
    std::vector<cplx> minus_laplacian(const Eigen::VectorXcd& seg) const {
        const std::size_t n = points();
        std::vector<cplx> buf(seg.data(), seg.data() + n);
        detail::fft_inplace(buf, grid_.points(), FFTW_FORWARD);
        for (std::size_t i = 0; i < n; ++i) buf[i] *= k2_[i] / double(n);
        detail::fft_inplace(buf, grid_.points(), FFTW_BACKWARD);
        return buf;
    }

    GridSpec grid_;
    Eigen::Vector3d xi_;
    double shift_ = 0.0;
    std::vector<double> k2_;
    std::vector<double> Fp_, Fm_, np_, nm_;
};

inline FiberOperator fiber(const LinearizedOperator& op, const Eigen::Vector3d& xi) { return FiberOperator(op, xi); }

struct GapOptions {
    double tol = 1e-9;           // relative accuracy of the gap
    Eigen::Index dense_limit = 1200;  // dense diagonalization when dim <= limit
    bool force_iterative = false;
    int max_iterations = 2000;
    int block_size = 4;
    unsigned seed = 12345;
};

struct GapResult {
    double gap = 0.0;         // min |eigenvalue|
    double eigenvalue = 0.0;  // signed eigenvalue attaining it
    Eigen::VectorXcd eigenvector;
    std::string method;       // "dense" or "lobpcg"
    int iterations = 0;
    std::vector<double> residual_history;
    // Dense path only: full spectrum and eigenvectors.
    std::optional<Eigen::VectorXd> spectrum;
    std::optional<Eigen::MatrixXcd> eigenvectors;
};

/// Smallest |eigenvalue| of a fiber: dense diagonalization for small fibers,
/// otherwise LOBPCG on L_xi^2 with a squared Helmholtz preconditioner.
inline GapResult spectral_gap(const FiberOperator& f, const GapOptions& opts = {}) {
    GapResult r;
    if (!opts.force_iterative && f.dim() <= opts.dense_limit) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(f.dense());
        if (es.info() != Eigen::Success) fail(ErrorKind::non_convergence, "dense fiber eigensolver failed");
        const Eigen::VectorXd& ev = es.eigenvalues();
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < ev.size(); ++i) {
            if (std::abs(ev[i]) < std::abs(ev[best])) best = i;
        }
        r.gap = std::abs(ev[best]);
        r.eigenvalue = ev[best];
        r.eigenvector = es.eigenvectors().col(best);
        r.method = "dense";
        r.spectrum = ev;
        r.eigenvectors = es.eigenvectors();
        return r;
    }
    LobpcgOptions lo;
    lo.tol = opts.tol;
    lo.max_iterations = opts.max_iterations;
    lo.block_size = opts.block_size;
    lo.seed = opts.seed;
    const OperatorFn<cplx> sq = [&f](const Eigen::VectorXcd& v) { return f.apply(f.apply(v)); };
    const OperatorFn<cplx> pre = [&f](const Eigen::VectorXcd& v) { return f.precondition_squared(v); };
    const auto res = lobpcg_smallest<cplx>(sq, pre, f.dim(), lo);
    r.eigenvector = res.eigenvector;
    // Rayleigh quotient of L itself: its sign, and |theta| + ||L x - theta x||
    // bounds the distance from 0 to the spectrum, which stays sharp when the
    // squared problem stalls at rounding level near a zero eigenvalue.
    const Eigen::VectorXcd lx = f.apply(res.eigenvector);
    const double xx = res.eigenvector.squaredNorm();
    const double rq = std::real(res.eigenvector.dot(lx)) / xx;
    const double rho = (lx - rq * res.eigenvector).norm() / std::sqrt(xx);
    r.gap = std::min(std::sqrt(std::max(res.eigenvalue, 0.0)), std::abs(rq) + rho);
    r.eigenvalue = rq < 0.0 ? -r.gap : r.gap;
    r.method = "lobpcg";
    r.iterations = res.iterations;
    r.residual_history = res.residual_history;
    return r;
}

// ---- stability scan --------------------------------------------------------

enum class Stability { stable, sdw_unstable, cdw_unstable, both };

inline std::string to_string(Stability s) {
    switch (s) {
        case Stability::stable: return "stable";
        case Stability::sdw_unstable: return "sdw_unstable";
        case Stability::cdw_unstable: return "cdw_unstable";
        case Stability::both: return "both";
    }
    return "unknown";
}

inline Stability combine(Stability a, Stability b) {
    if (a == b) return a;
    if (a == Stability::stable) return b;
    if (b == Stability::stable) return a;
    return Stability::both;
}

struct StabilityOptions {
    GapOptions gap;
    double instability_threshold = 1e-6;
    double sdw_cutoff = 0.9;
};

struct FiberGap {
    Eigen::Vector3d xi = Eigen::Vector3d::Zero();
    double gap = 0.0;
    double eigenvalue = 0.0;
    double sdw_fraction = 0.0;
    int negative_count = -1;  // dense path only
    Stability classification = Stability::stable;
    std::string method;
};

struct StabilityReport {
    std::vector<FiberGap> fiber_gaps;
    double global_gap = 0.0;
    double M = 0.0;
    Stability classification = Stability::stable;
    double threshold = 1e-6;

    bool stable() const { return classification == Stability::stable && global_gap > threshold; }

    nlohmann::json to_json() const {
        nlohmann::json fibers = nlohmann::json::array();
        for (const auto& f : fiber_gaps) {
            fibers.push_back({{"xi", {f.xi[0], f.xi[1], f.xi[2]}},
                              {"gap", f.gap},
                              {"eigenvalue", f.eigenvalue},
                              {"sdw_fraction", f.sdw_fraction},
                              {"negative_count", f.negative_count},
                              {"class", to_string(f.classification)},
                              {"method", f.method}});
        }
        return {{"global_gap", global_gap},
                {"M", M},
                {"classification", to_string(classification)},
                {"threshold", threshold},
                {"fibers", fibers}};
    }

    std::string to_csv() const {
        std::ostringstream os;
        os.precision(17);
        os << "xi1,xi2,xi3,gap,class\n";
        for (const auto& f : fiber_gaps) {
            os << f.xi[0] << ',' << f.xi[1] << ',' << f.xi[2] << ',' << f.gap << ','
               << to_string(f.classification) << '\n';
        }
        return os.str();
    }
};

/// Classify one fiber. With the full spectrum available the inertia decides:
/// a stable fiber has exactly one negative eigenvalue per potential mode
/// (the Schur complement of the potential block is negative definite), so
/// extra negative directions are instabilities, typed by their eigenvectors.
/// Otherwise only a gap below threshold flags an instability.
inline FiberGap classify_fiber(const FiberOperator& f, const GapResult& g, const StabilityOptions& opts) {
    FiberGap out;
    out.xi = f.xi();
    out.gap = g.gap;
    out.eigenvalue = g.eigenvalue;
    out.method = g.method;
    out.sdw_fraction = f.sdw_fraction(g.eigenvector);
    Stability cls = Stability::stable;
    if (g.gap < opts.instability_threshold) {
        cls = out.sdw_fraction > opts.sdw_cutoff ? Stability::sdw_unstable : Stability::cdw_unstable;
    }
    if (g.spectrum) {
        const Eigen::VectorXd& ev = *g.spectrum;
        int negative = 0, sdw_negative = 0;
        for (Eigen::Index i = 0; i < ev.size(); ++i) {
            if (ev[i] >= 0.0) continue;
            ++negative;
            if (f.sdw_fraction(g.eigenvectors->col(i)) > opts.sdw_cutoff) ++sdw_negative;
        }
        out.negative_count = negative;
        const int potential_modes = int(f.points());
        if (sdw_negative > 0) cls = combine(cls, Stability::sdw_unstable);
        if (negative - sdw_negative > potential_modes) cls = combine(cls, Stability::cdw_unstable);
    }
    out.classification = cls;
    return out;
}

namespace detail {

inline std::vector<Eigen::Vector3d> xi_grid_from(const Eigen::Matrix3d& b, std::array<int, 3> density) {
    std::array<std::vector<double>, 3> t;
    for (int a = 0; a < 3; ++a) {
        const int d = std::max(density[a], 1);
        if (d == 1) {
            t[a] = {0.0};
            continue;
        }
        for (int j = 0; j < d; ++j) t[a].push_back((j + 0.5) / d - 0.5);
    }
    std::vector<Eigen::Vector3d> out{Eigen::Vector3d::Zero()};
    for (double x : t[0]) {
        for (double y : t[1]) {
            for (double z : t[2]) {
                if (std::abs(x) < 1e-14 && std::abs(y) < 1e-14 && std::abs(z) < 1e-14) continue;
                out.push_back(b * Eigen::Vector3d(x, y, z));
            }
        }
    }
    return out;
}

}  // namespace detail

/// Monkhorst-Pack style sampling of the first zone, with xi = 0 always first.
/// density[a] points along reciprocal axis a (1 means xi_a = 0 only).
inline std::vector<Eigen::Vector3d> xi_grid(const Lattice& lattice, std::array<int, 3> density) {
    return detail::xi_grid_from(lattice.reciprocal(), density);
}

/// Same sampling for the zone of a supercell grid, whose reciprocal vectors are
/// b_a / n_a. With density d_a / n_a the folded points reproduce the cell grid.
inline std::vector<Eigen::Vector3d> xi_grid(const GridSpec& g, std::array<int, 3> density) {
    Eigen::Matrix3d b = g.lattice().reciprocal();
    for (int a = 0; a < 3; ++a) b.col(a) /= g.supercell()[a];
    return detail::xi_grid_from(b, density);
}

inline StabilityReport stability_scan(const LinearizedOperator& op, const std::vector<Eigen::Vector3d>& xis,
                                      const StabilityOptions& opts = {}) {
    if (xis.empty()) fail(ErrorKind::structural, "stability_scan needs at least one xi");
    StabilityReport rep;
    rep.threshold = opts.instability_threshold;
    rep.global_gap = std::numeric_limits<double>::infinity();
    for (const auto& xi : xis) {
        const FiberOperator f(op, xi);
        const GapResult g = spectral_gap(f, opts.gap);
        FiberGap fg = classify_fiber(f, g, opts);
        rep.global_gap = std::min(rep.global_gap, fg.gap);
        rep.classification = combine(rep.classification, fg.classification);
        rep.fiber_gaps.push_back(std::move(fg));
    }
    rep.M = 1.0 / rep.global_gap;
    return rep;
}

inline StabilityReport stability_scan(const State& s, const ScalarField& h, const std::vector<Eigen::Vector3d>& xis,
                                      const StabilityOptions& opts = {}) {
    return stability_scan(LinearizedOperator(s, h), xis, opts);
}

/// Probe-set estimate of ||L_u - L_ref|| in (L^2_n)^3: max over seeded smooth
/// probes (density-only and potential-only) of ||(L_u - L_ref) v|| / ||v||.
inline double operator_drift(const State& u, const State& u_ref, const ScalarField& h, int probes = 6,
                             unsigned seed = 7) {
    u.nu_plus.require_same_grid(u_ref.nu_plus);
    const LinearizedOperator a(u, h), b(u_ref, h);
    const GridSpec& g = u.grid();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    const auto smooth = [&]() {
        ScalarField f(g);
        for (auto& v : f.values()) v = nd(rng);
        return helmholtz_inverse(helmholtz_inverse(f));
    };
    double best = 0.0;
    for (int p = 0; p < probes; ++p) {
        Triple v(g);
        if (p % 2 == 0) {
            v.plus = smooth();
            v.minus = smooth();
        } else {
            v.potential = smooth();
        }
        const double nv = l2_norm(v);
        if (nv == 0.0) continue;
        best = std::max(best, l2_norm(a.apply(v) - b.apply(v)) / nv);
    }
    return best;
}

}  // namespace tfdw
