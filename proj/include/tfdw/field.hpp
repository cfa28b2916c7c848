#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <span>
#include <tuple>
#include <vector>

#include <fftw3.h>

#include "tfdw/error.hpp"
#include "tfdw/lattice.hpp"

namespace tfdw {

using cplx = std::complex<double>;

namespace detail {

/// Process-wide cache of FFTW plans. Planning is serialized; execution uses the
/// new-array interface, which FFTW documents as thread-safe.
class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(const std::array<int, 3>& dims, int sign) {
        std::lock_guard<std::mutex> lock(mutex_);
        const auto key = std::make_tuple(dims[0], dims[1], dims[2], sign);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        const std::size_t n = std::size_t(dims[0]) * dims[1] * dims[2];
        std::vector<cplx> scratch(n);
        auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
        fftw_plan p = fftw_plan_dft_3d(dims[0], dims[1], dims[2], buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(key, p);
        return p;
    }

    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

private:
    PlanCache() = default;
    ~PlanCache() {
        for (auto& [k, p] : plans_) fftw_destroy_plan(p);
    }
    std::mutex mutex_;
    std::map<std::tuple<int, int, int, int>, fftw_plan> plans_;
};

/// Unnormalized in-place DFT. sign = FFTW_FORWARD (-1) or FFTW_BACKWARD (+1).
inline void fft_inplace(std::span<cplx> data, const std::array<int, 3>& dims, int sign) {
    fftw_plan p = PlanCache::instance().get(dims, sign);
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(p, buf, buf);
}

}  // namespace detail

enum class Domain { cell, supercell };

/// Real periodic field sampled on a collocation grid (row-major, axis 0 slowest).
class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(GridSpec grid, double value = 0.0) : grid_(std::move(grid)), values_(grid_.size(), value) {}
    ScalarField(GridSpec grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
        if (values_.size() != grid_.size()) {
            fail(ErrorKind::structural, "value count does not match grid",
                 {{"values", values_.size()}, {"grid", grid_.size()}});
        }
    }

    template <class Fn>
    static ScalarField from_function(const GridSpec& grid, Fn&& fn) {
        ScalarField f(grid);
        for (std::size_t i = 0; i < f.size(); ++i) f.values_[i] = fn(grid.position(i));
        return f;
    }

    const GridSpec& grid() const { return grid_; }
    Domain domain() const { return grid_.is_cell() ? Domain::cell : Domain::supercell; }
    std::size_t size() const { return values_.size(); }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    double mean() const { return std::accumulate(values_.begin(), values_.end(), 0.0) / double(values_.size()); }
    double integral() const { return mean() * grid_.domain_volume(); }
    double min() const { return *std::min_element(values_.begin(), values_.end()); }
    double max() const { return *std::max_element(values_.begin(), values_.end()); }
    double max_abs() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }
    /// Root mean square over the grid points (scale of the field, domain independent).
    double rms() const {
        double s = 0.0;
        for (double v : values_) s += v * v;
        return std::sqrt(s / double(values_.size()));
    }

    template <class Fn>
    ScalarField map(Fn&& fn) const {
        ScalarField out(grid_);
        for (std::size_t i = 0; i < size(); ++i) out.values_[i] = fn(values_[i]);
        return out;
    }

    void require_same_grid(const ScalarField& other) const {
        if (!(grid_ == other.grid_)) fail(ErrorKind::structural, "fields live on different grids");
    }

    ScalarField& operator+=(const ScalarField& o) {
        require_same_grid(o);
        for (std::size_t i = 0; i < size(); ++i) values_[i] += o.values_[i];
        return *this;
    }
    ScalarField& operator-=(const ScalarField& o) {
        require_same_grid(o);
        for (std::size_t i = 0; i < size(); ++i) values_[i] -= o.values_[i];
        return *this;
    }
    ScalarField& operator*=(const ScalarField& o) {
        require_same_grid(o);
        for (std::size_t i = 0; i < size(); ++i) values_[i] *= o.values_[i];
        return *this;
    }
    ScalarField& operator*=(double s) {
        for (double& v : values_) v *= s;
        return *this;
    }
    ScalarField& operator+=(double s) {
        for (double& v : values_) v += s;
        return *this;
    }
    /// this += a * x
    ScalarField& axpy(double a, const ScalarField& x) {
        require_same_grid(x);
        for (std::size_t i = 0; i < size(); ++i) values_[i] += a * x.values_[i];
        return *this;
    }

    friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
    friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
    friend ScalarField operator*(ScalarField a, const ScalarField& b) { return a *= b; }
    friend ScalarField operator*(double s, ScalarField a) { return a *= s; }
    friend ScalarField operator*(ScalarField a, double s) { return a *= s; }
    friend ScalarField operator+(ScalarField a, double s) { return a += s; }
    friend ScalarField operator-(ScalarField a) { return a *= -1.0; }

private:
    GridSpec grid_;
    std::vector<double> values_;
};

/// Fourier coefficients f^(k) = (2 pi)^{-3/2} int_{n Gamma} f e^{-ik.x} dx, in DFT order.
struct Spectrum {
    GridSpec grid;
    std::vector<cplx> coeffs;

    cplx operator[](std::size_t i) const { return coeffs[i]; }
};

inline double fourier_prefactor(const GridSpec& g) {
    return std::pow(2.0 * pi, -1.5) * g.domain_volume() / double(g.size());
}

inline Spectrum forward(const ScalarField& f) {
    for (double v : f.values()) {
        if (!std::isfinite(v)) fail(ErrorKind::structural, "field contains non-finite values");
    }
    Spectrum s{f.grid(), std::vector<cplx>(f.values().begin(), f.values().end())};
    detail::fft_inplace(s.coeffs, f.grid().points(), FFTW_FORWARD);
    const double c = fourier_prefactor(f.grid());
    for (auto& v : s.coeffs) v *= c;
    return s;
}

inline ScalarField inverse(const Spectrum& s) {
    if (s.coeffs.size() != s.grid.size()) fail(ErrorKind::structural, "spectrum size does not match grid");
    std::vector<cplx> buf = s.coeffs;
    detail::fft_inplace(buf, s.grid.points(), FFTW_BACKWARD);
    const double c = 1.0 / (fourier_prefactor(s.grid) * double(s.grid.size()));
    ScalarField out(s.grid);
    for (std::size_t i = 0; i < buf.size(); ++i) out[i] = buf[i].real() * c;
    return out;
}

/// Multiply by a real-space-real symbol in Fourier space: out = F^{-1}[sym(k) F f].
/// `symbol(idx)` returns the complex multiplier for DFT index idx.
template <class Symbol>
ScalarField apply_symbol(const ScalarField& f, Symbol&& symbol) {
    const GridSpec& g = f.grid();
    std::vector<cplx> buf(f.values().begin(), f.values().end());
    detail::fft_inplace(buf, g.points(), FFTW_FORWARD);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] *= symbol(i);
    detail::fft_inplace(buf, g.points(), FFTW_BACKWARD);
    ScalarField out(g);
    const double c = 1.0 / double(g.size());
    for (std::size_t i = 0; i < buf.size(); ++i) out[i] = buf[i].real() * c;
    return out;
}

/// Spectral derivative d^alpha over Cartesian multi-index alpha. Modes on a
/// Nyquist plane are dropped for any nonzero order.
inline ScalarField derivative(const ScalarField& f, const std::array<int, 3>& alpha) {
    if (alpha == std::array<int, 3>{0, 0, 0}) return f;
    const GridSpec& g = f.grid();
    return apply_symbol(f, [&](std::size_t i) -> cplx {
        if (g.has_nyquist(i)) return 0.0;
        const Eigen::Vector3d k = g.wavevector(i);
        cplx s = 1.0;
        for (int a = 0; a < 3; ++a) {
            for (int p = 0; p < alpha[a]; ++p) s *= cplx(0.0, k[a]);
        }
        return s;
    });
}

inline std::array<ScalarField, 3> gradient(const ScalarField& f) {
    return {derivative(f, {1, 0, 0}), derivative(f, {0, 1, 0}), derivative(f, {0, 0, 1})};
}

inline ScalarField laplacian(const ScalarField& f) {
    const GridSpec& g = f.grid();
    return apply_symbol(f, [&](std::size_t i) -> cplx { return -g.laplacian_symbol(i); });
}

/// (shift - Laplacian)^{-1}, shift > 0.
inline ScalarField helmholtz_inverse(const ScalarField& f, double shift = 1.0) {
    const GridSpec& g = f.grid();
    return apply_symbol(f, [&](std::size_t i) -> cplx { return 1.0 / (shift + g.laplacian_symbol(i)); });
}

/// |mean| <= tol * max(rms, scale); the mean-zero test used by Poisson and H^{-1}.
inline void require_mean_zero(const ScalarField& f, double tol, double scale, const char* what) {
    const double m = f.mean();
    const double ref = std::max(f.rms(), scale);
    if (std::abs(m) > tol * ref) {
        const double coeff0 = std::pow(2.0 * pi, -1.5) * f.integral();
        fail(ErrorKind::solvability, std::string(what) + ": nonzero mean violates the solvability condition",
             {{"mean", m}, {"k0_coefficient", coeff0}, {"tolerance", tol * ref}});
    }
}

/// Unique mean-zero solution of -Laplacian V = rhs. `scale` sets an absolute
/// floor for the mean-zero check (useful when rhs is a near-cancelling difference).
inline ScalarField poisson_solve(const ScalarField& rhs, double scale = 0.0) {
    require_mean_zero(rhs, 1e-10, scale, "poisson_solve");
    const GridSpec& g = rhs.grid();
    return apply_symbol(rhs, [&](std::size_t i) -> cplx {
        const double s = g.laplacian_symbol(i);
        return i == 0 || s == 0.0 ? 0.0 : 1.0 / s;
    });
}

// ---- averaged norms -------------------------------------------------------

/// <f, g>_{L^2_n} = n^{-3} int_{n Gamma} f g.
inline double l2_inner(const ScalarField& f, const ScalarField& g) {
    f.require_same_grid(g);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * g[i];
    return s / double(f.size()) * f.grid().cell_volume();
}

inline double lp_norm(const ScalarField& f, double p) {
    if (std::isinf(p)) return f.max_abs();
    double s = 0.0;
    for (double v : f.values()) s += std::pow(std::abs(v), p);
    return std::pow(s / double(f.size()) * f.grid().cell_volume(), 1.0 / p);
}

inline double l2_norm(const ScalarField& f) { return std::sqrt(l2_inner(f, f)); }

/// All Cartesian multi-indices with |alpha| <= k.
inline std::vector<std::array<int, 3>> multi_indices(int k) {
    std::vector<std::array<int, 3>> out;
    for (int total = 0; total <= k; ++total) {
        for (int a = total; a >= 0; --a) {
            for (int b = total - a; b >= 0; --b) out.push_back({a, b, total - a - b});
        }
    }
    return out;
}

/// ||f||_{H^k_n} = sum_{|alpha|<=k} ||d^alpha f||_{L^2_n}, computed spectrally.
inline double hk_norm(const ScalarField& f, int k) {
    const Spectrum s = forward(f);
    const GridSpec& g = f.grid();
    // Parseval: n^{-3} int |f|^2 = (2 pi)^3 / (|n Gamma| n^3) sum |f^|^2.
    const double c = std::pow(2.0 * pi, 3.0) / (g.domain_volume() * g.cell_count());
    double total = 0.0;
    for (const auto& alpha : multi_indices(k)) {
        const bool zero_order = alpha == std::array<int, 3>{0, 0, 0};
        double acc = 0.0;
        for (std::size_t i = 0; i < s.coeffs.size(); ++i) {
            if (!zero_order && g.has_nyquist(i)) continue;
            const Eigen::Vector3d kv = g.wavevector(i);
            double w = 1.0;
            for (int a = 0; a < 3; ++a) w *= std::pow(kv[a], alpha[a]);
            acc += w * w * std::norm(s.coeffs[i]);
        }
        total += std::sqrt(acc * c);
    }
    return total;
}

/// Coulomb inner product 4 pi (2 pi)^3 / |n Gamma| sum_{k != 0} conj(f^) g^ / |k|^2,
/// which equals int f 4 pi (-Laplacian)^{-1} g. Both arguments must be mean-zero.
inline double hminus1_inner(const ScalarField& f, const ScalarField& g, double scale = 0.0) {
    f.require_same_grid(g);
    require_mean_zero(f, 1e-10, scale, "hminus1_inner");
    require_mean_zero(g, 1e-10, scale, "hminus1_inner");
    const Spectrum sf = forward(f);
    const Spectrum sg = forward(g);
    const GridSpec& grid = f.grid();
    double acc = 0.0;
    for (std::size_t i = 1; i < sf.coeffs.size(); ++i) {
        const double k2 = grid.laplacian_symbol(i);
        if (k2 == 0.0) continue;
        acc += (std::conj(sf.coeffs[i]) * sg.coeffs[i]).real() / k2;
    }
    return 4.0 * pi * std::pow(2.0 * pi, 3.0) / grid.domain_volume() * acc;
}

inline double hminus1_norm(const ScalarField& f, double scale = 0.0) { return std::sqrt(hminus1_inner(f, f, scale)); }

enum class NormKind { lp, hk, hminus1 };

/// Norm dispatcher: L^p_n (param = p), H^k_n (param = k) or H^{-1} (param ignored).
inline double norm(const ScalarField& f, NormKind kind, double param = 2.0) {
    switch (kind) {
        case NormKind::lp: return lp_norm(f, param);
        case NormKind::hk: return hk_norm(f, static_cast<int>(param));
        case NormKind::hminus1: return hminus1_norm(f);
    }
    return 0.0;
}

// ---- construction helpers -------------------------------------------------

/// Sample a lattice-periodic profile on the grid (micro variable).
inline ScalarField sample(const PeriodicProfile& p, const GridSpec& g) {
    ScalarField f(g);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = p.at_fractional(g.fractional(i));
    return f;
}

/// Sample x -> p(eps x) on a supercell with eps = 1/n per axis: the macro
/// coordinate of a point is its fractional position divided by the supercell factor.
inline ScalarField sample_macro(const PeriodicProfile& p, const GridSpec& g) {
    ScalarField f(g);
    const auto& sc = g.supercell();
    for (std::size_t i = 0; i < f.size(); ++i) {
        Eigen::Vector3d t = g.fractional(i);
        for (int a = 0; a < 3; ++a) t[a] /= sc[a];
        f[i] = p.at_fractional(t);
    }
    return f;
}

/// Periodic extension of a cell field onto a supercell grid with the same resolution.
inline ScalarField periodic_extension(const ScalarField& cell_field, std::array<int, 3> supercell) {
    const GridSpec& cg = cell_field.grid();
    if (!cg.is_cell()) fail(ErrorKind::structural, "periodic_extension expects a cell field");
    GridSpec sg = cg.with_supercell(supercell);
    ScalarField out(sg);
    const auto& r = cg.resolution();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto m = sg.multi_index(i);
        out[i] = cell_field[cg.index(m[0] % r[0], m[1] % r[1], m[2] % r[2])];
    }
    return out;
}

/// Translate by whole grid steps: (tau f)(x) = f(x - shift).
inline ScalarField translate(const ScalarField& f, std::array<int, 3> shift) {
    const GridSpec& g = f.grid();
    ScalarField out(g);
    const auto& p = g.points();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto m = g.multi_index(i);
        std::array<int, 3> src{};
        for (int a = 0; a < 3; ++a) src[a] = ((m[a] - shift[a]) % p[a] + p[a]) % p[a];
        out[i] = f[g.index(src[0], src[1], src[2])];
    }
    return out;
}

}  // namespace tfdw
