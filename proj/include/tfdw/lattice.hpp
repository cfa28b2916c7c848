#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "tfdw/error.hpp"

namespace tfdw {

inline constexpr double pi = std::numbers::pi;

/// Bravais lattice given by the columns of `vectors` (a1, a2, a3).
struct Lattice {
    Eigen::Matrix3d vectors = Eigen::Matrix3d::Identity();

    static Lattice cubic(double a) { return orthorhombic(a, a, a); }

    static Lattice orthorhombic(double a, double b, double c) {
        Lattice l;
        l.vectors = Eigen::Vector3d(a, b, c).asDiagonal();
        return l;
    }

    double volume() const { return vectors.determinant(); }

    /// Columns b_j with a_i . b_j = 2 pi delta_ij.
    Eigen::Matrix3d reciprocal() const { return 2.0 * pi * vectors.inverse().transpose(); }

    bool operator==(const Lattice& other) const { return vectors == other.vectors; }
};

/// Collocation grid on the supercell n1 a1 x n2 a2 x n3 a3. `resolution` counts
/// points per unit cell along each axis; an axis with resolution 1 is flat
/// (fields constant along it).
class GridSpec {
public:
    GridSpec() { points_ = resolution_; cache_metric(); }

    GridSpec(Lattice lattice, std::array<int, 3> resolution, std::array<int, 3> supercell = {1, 1, 1})
        : lattice_(std::move(lattice)), resolution_(resolution), supercell_(supercell) {
        if (!(lattice_.volume() > 0.0)) {
            fail(ErrorKind::structural, "lattice vectors must have positive determinant");
        }
        for (int a = 0; a < 3; ++a) {
            const int r = resolution_[a];
            if (r != 1 && (r < 4 || r % 2 != 0)) {
                fail(ErrorKind::structural, "resolution must be 1 (flat axis) or an even integer >= 4",
                     {{"axis", a}, {"resolution", r}});
            }
            if (supercell_[a] < 1) {
                fail(ErrorKind::structural, "supercell factors must be positive", {{"axis", a}});
            }
            points_[a] = resolution_[a] * supercell_[a];
        }
        cache_metric();
    }

    const Lattice& lattice() const { return lattice_; }
    const std::array<int, 3>& resolution() const { return resolution_; }
    const std::array<int, 3>& supercell() const { return supercell_; }
    const std::array<int, 3>& points() const { return points_; }
    int points(int axis) const { return points_[axis]; }

    std::size_t size() const {
        return static_cast<std::size_t>(points_[0]) * static_cast<std::size_t>(points_[1]) *
               static_cast<std::size_t>(points_[2]);
    }

    bool is_cell() const { return supercell_ == std::array<int, 3>{1, 1, 1}; }

    /// Number of unit cells in the supercell (the n^3 of the averaged norms).
    int cell_count() const { return supercell_[0] * supercell_[1] * supercell_[2]; }

    double cell_volume() const { return lattice_.volume(); }
    double domain_volume() const { return cell_volume() * cell_count(); }

    GridSpec cell() const { return GridSpec(lattice_, resolution_); }
    GridSpec with_supercell(std::array<int, 3> sc) const { return GridSpec(lattice_, resolution_, sc); }

    std::size_t index(int i0, int i1, int i2) const {
        return (static_cast<std::size_t>(i0) * points_[1] + i1) * points_[2] + i2;
    }

    std::array<int, 3> multi_index(std::size_t idx) const {
        const int i2 = static_cast<int>(idx % points_[2]);
        idx /= points_[2];
        const int i1 = static_cast<int>(idx % points_[1]);
        const int i0 = static_cast<int>(idx / points_[1]);
        return {i0, i1, i2};
    }

    /// Fractional coordinate (in units of the unit-cell vectors) of a point.
    Eigen::Vector3d fractional(std::size_t idx) const {
        const auto m = multi_index(idx);
        return {double(m[0]) / resolution_[0], double(m[1]) / resolution_[1], double(m[2]) / resolution_[2]};
    }

    Eigen::Vector3d position(std::size_t idx) const { return lattice_.vectors * fractional(idx); }

    /// Signed DFT frequency of an index along an axis (Nyquist mapped to -P/2).
    int frequency(int axis, int i) const {
        const int p = points_[axis];
        return i < (p + 1) / 2 ? i : i - p;
    }

    bool is_nyquist(int axis, int i) const {
        const int p = points_[axis];
        return p % 2 == 0 && p > 1 && i == p / 2;
    }

    /// Wavevector k = sum_j (m_j / n_j) b_j of the reciprocal lattice of the supercell.
    Eigen::Vector3d wavevector(std::size_t idx) const {
        const auto m = multi_index(idx);
        Eigen::Vector3d f(double(frequency(0, m[0])) / supercell_[0], double(frequency(1, m[1])) / supercell_[1],
                          double(frequency(2, m[2])) / supercell_[2]);
        return reciprocal_ * f;
    }

    const Eigen::Matrix3d& reciprocal() const { return reciprocal_; }

    bool has_nyquist(std::size_t idx) const {
        const auto m = multi_index(idx);
        return is_nyquist(0, m[0]) || is_nyquist(1, m[1]) || is_nyquist(2, m[2]);
    }

    /// Symbol of -Laplacian. Cross terms touching a Nyquist axis are dropped so
    /// the symbol is even under m -> -m with Nyquist aliasing.
    double laplacian_symbol(std::size_t idx) const {
        const auto m = multi_index(idx);
        const Eigen::Matrix3d& metric = metric_;
        std::array<double, 3> f{};
        std::array<bool, 3> nyq{};
        for (int a = 0; a < 3; ++a) {
            f[a] = double(frequency(a, m[a])) / supercell_[a];
            nyq[a] = is_nyquist(a, m[a]);
        }
        double s = 0.0;
        for (int a = 0; a < 3; ++a) {
            for (int c = 0; c < 3; ++c) {
                if (a != c && (nyq[a] || nyq[c])) continue;
                s += metric(a, c) * f[a] * f[c];
            }
        }
        return s;
    }

    bool operator==(const GridSpec& o) const {
        return lattice_ == o.lattice_ && resolution_ == o.resolution_ && supercell_ == o.supercell_;
    }

private:
    void cache_metric() {
        reciprocal_ = lattice_.reciprocal();
        metric_ = reciprocal_.transpose() * reciprocal_;
    }

    Lattice lattice_;
    Eigen::Matrix3d reciprocal_;
    Eigen::Matrix3d metric_;
    std::array<int, 3> resolution_{4, 4, 4};
    std::array<int, 3> supercell_{1, 1, 1};
    std::array<int, 3> points_{4, 4, 4};
};

/// One real Fourier component c cos(G.x) + s sin(G.x) with G = sum index_j b_j.
struct FourierMode {
    std::array<int, 3> index{0, 0, 0};
    double cos_amp = 0.0;
    double sin_amp = 0.0;
};

/// Smooth lattice-periodic real function: mean plus finitely many modes.
/// Real and periodic by construction.
struct PeriodicProfile {
    double mean = 0.0;
    std::vector<FourierMode> modes;

    bool is_constant() const {
        for (const auto& m : modes) {
            if (m.cos_amp != 0.0 || m.sin_amp != 0.0) return false;
        }
        return true;
    }

    /// True when the profile varies along the given lattice axis.
    bool varies_along(int axis) const {
        for (const auto& m : modes) {
            if (m.index[axis] != 0 && (m.cos_amp != 0.0 || m.sin_amp != 0.0)) return true;
        }
        return false;
    }

    /// Evaluate at a fractional coordinate t (in units of the cell vectors).
    double at_fractional(const Eigen::Vector3d& t) const {
        double v = mean;
        for (const auto& m : modes) {
            const double phase = 2.0 * pi * (m.index[0] * t[0] + m.index[1] * t[1] + m.index[2] * t[2]);
            v += m.cos_amp * std::cos(phase) + m.sin_amp * std::sin(phase);
        }
        return v;
    }

    /// Gradient with respect to the Cartesian coordinate, at fractional t.
    Eigen::Vector3d gradient_at_fractional(const Eigen::Vector3d& t, const Lattice& lattice) const {
        Eigen::Vector3d g = Eigen::Vector3d::Zero();
        const Eigen::Matrix3d b = lattice.reciprocal();
        for (const auto& m : modes) {
            const Eigen::Vector3d gv = b * Eigen::Vector3d(m.index[0], m.index[1], m.index[2]);
            const double phase = 2.0 * pi * (m.index[0] * t[0] + m.index[1] * t[1] + m.index[2] * t[2]);
            g += gv * (-m.cos_amp * std::sin(phase) + m.sin_amp * std::cos(phase));
        }
        return g;
    }

    double sup_bound() const {
        double s = std::abs(mean);
        for (const auto& m : modes) s += std::hypot(m.cos_amp, m.sin_amp);
        return s;
    }
};

/// Crystal description: lattice, electrons per cell and the background charge.
struct LatticeSpec {
    Lattice lattice;
    double Z = 1.0;
    PeriodicProfile rho_b;

    LatticeSpec() = default;

    /// Background with mean Z/|cell| plus the given zero-mean modes.
    LatticeSpec(Lattice l, double z, std::vector<FourierMode> modes = {}) : lattice(std::move(l)), Z(z) {
        if (!(lattice.volume() > 0.0)) fail(ErrorKind::structural, "lattice vectors must have positive determinant");
        if (!(Z > 0.0)) fail(ErrorKind::structural, "Z must be positive");
        for (const auto& m : modes) {
            if (m.index == std::array<int, 3>{0, 0, 0}) {
                fail(ErrorKind::structural, "background modes must have nonzero index; the mean is fixed by Z");
            }
        }
        rho_b.mean = Z / lattice.volume();
        rho_b.modes = std::move(modes);
    }

    /// Jellium background rho_b = 2 nu0^2 on the given lattice.
    static LatticeSpec jellium(Lattice l, double nu0) {
        const double z = 2.0 * nu0 * nu0 * l.volume();
        return LatticeSpec(std::move(l), z);
    }
};

}  // namespace tfdw
