#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfdw/cauchy_born.hpp"
#include "tfdw/study.hpp"

namespace tfdw {

/// Everything a CLI command needs, parsed and validated from one JSON document.
/// See configs/schema.json for the published layout.
struct StudyConfig {
    LatticeSpec spec;
    std::array<int, 3> resolution{32, 1, 1};
    PeriodicProfile h;
    CellSolveOptions cell;
    CBTableOptions table;
    std::array<int, 3> xi_density{8, 1, 1};
    std::vector<int> n_values{4, 6, 8, 12, 16};
    std::vector<int> supercells{1, 2, 4};
    TwoScaleOptions two_scale;
    NewtonOptions newton;
    bool include_largest_eps = false;
    std::vector<double> jellium_nu0;
    int jellium_xi_points = 21;
    double jellium_xi_max = 2.0 * pi;
    std::vector<double> legendre_h;
    unsigned seed = 0;
    int threads = 0;  // 0: resolve from the environment
    std::string out;

    GridSpec grid() const { return GridSpec(spec.lattice, resolution); }
    Model model() const { return Model(spec, grid()); }

    EpsStudyOptions eps_options() const {
        EpsStudyOptions o;
        o.n_values = n_values;
        o.two_scale = two_scale;
        o.newton = newton;
        o.include_largest_eps = include_largest_eps;
        o.threads = resolve_threads(threads);
        o.two_scale.threads = o.threads;
        return o;
    }
};

namespace detail {

inline void require(bool ok, const std::string& what, const nlohmann::json& detail = {}) {
    if (!ok) fail(ErrorKind::config, what, detail.is_null() ? nlohmann::json::object() : detail);
}

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    require(j.is_object(), where + " must be an object");
    for (const auto& [k, v] : j.items()) {
        require(allowed.count(k) > 0, "unknown key '" + k + "' in " + where);
    }
}

inline double positive(const nlohmann::json& j, const char* key, double fallback, const std::string& where) {
    const double v = j.value(key, fallback);
    require(v > 0.0, where + "." + key + " must be positive", {{"value", v}});
    return v;
}

inline std::vector<FourierMode> parse_modes(const nlohmann::json& arr, const std::string& where) {
    require(arr.is_array(), where + " must be an array");
    std::vector<FourierMode> out;
    for (const auto& m : arr) {
        check_keys(m, {"index", "cos", "sin"}, where + "[]");
        FourierMode f;
        f.index = m.at("index").get<std::array<int, 3>>();
        f.cos_amp = m.value("cos", 0.0);
        f.sin_amp = m.value("sin", 0.0);
        out.push_back(f);
    }
    return out;
}

inline Lattice parse_lattice(const nlohmann::json& j) {
    check_keys(j, {"cubic", "orthorhombic", "vectors"}, "lattice");
    if (j.contains("cubic")) return Lattice::cubic(positive(j, "cubic", 1.0, "lattice"));
    if (j.contains("orthorhombic")) {
        const auto a = j.at("orthorhombic").get<std::array<double, 3>>();
        for (double v : a) require(v > 0.0, "lattice.orthorhombic lengths must be positive");
        return Lattice::orthorhombic(a[0], a[1], a[2]);
    }
    if (j.contains("vectors")) {
        const auto v = j.at("vectors").get<std::array<std::array<double, 3>, 3>>();
        Lattice l;
        for (int c = 0; c < 3; ++c) {
            for (int r = 0; r < 3; ++r) l.vectors(r, c) = v[c][r];
        }
        require(l.volume() > 0.0, "lattice vectors must be right-handed and independent");
        return l;
    }
    fail(ErrorKind::config, "lattice needs one of cubic, orthorhombic, vectors");
}

inline std::vector<int> positive_ints(const nlohmann::json& j, const std::string& where) {
    auto v = j.get<std::vector<int>>();
    require(!v.empty(), where + " must be non-empty");
    for (int n : v) require(n > 0, where + " entries must be positive integers", {{"value", n}});
    return v;
}

}  // namespace detail

inline StudyConfig parse_config(const nlohmann::json& j) {
    using detail::check_keys;
    using detail::positive;
    using detail::require;
    StudyConfig c;
    try {
        check_keys(j, {"lattice", "nu0", "Z", "background_modes", "grid", "h", "solver", "table", "xi_density",
                       "n_values", "supercells", "macro_resolution", "newton", "fit", "jellium_scan", "legendre",
                       "seed", "threads", "out", "description"},
                   "config");
        const Lattice lat = detail::parse_lattice(j.value("lattice", nlohmann::json{{"cubic", 1.0}}));
        double Z = 0.0;
        require(!(j.contains("nu0") && j.contains("Z")), "give either nu0 or Z, not both");
        if (j.contains("Z")) {
            Z = positive(j, "Z", 1.0, "config");
        } else {
            const double nu0 = positive(j, "nu0", 0.7, "config");
            Z = 2.0 * nu0 * nu0 * lat.volume();
        }
        const auto modes =
            j.contains("background_modes") ? detail::parse_modes(j["background_modes"], "background_modes")
                                           : std::vector<FourierMode>{};
        c.spec = LatticeSpec(lat, Z, modes);
        require(c.spec.rho_b.mean > c.spec.rho_b.sup_bound() - c.spec.rho_b.mean, "background must stay positive");

        if (j.contains("grid")) {
            check_keys(j["grid"], {"resolution"}, "grid");
            c.resolution = j["grid"].at("resolution").get<std::array<int, 3>>();
            for (int r : c.resolution) {
                require(r == 1 || (r >= 4 && r % 2 == 0), "grid.resolution entries must be 1 or even and >= 4",
                        {{"value", r}});
            }
        }
        if (j.contains("h")) {
            const auto& h = j["h"];
            check_keys(h, {"constant", "mean", "modes"}, "h");
            require(!(h.contains("constant") && (h.contains("mean") || h.contains("modes"))),
                    "h is either constant or mean+modes");
            c.h.mean = h.value("constant", h.value("mean", 0.0));
            if (h.contains("modes")) c.h.modes = detail::parse_modes(h["modes"], "h.modes");
        }
        if (j.contains("solver")) {
            const auto& s = j["solver"];
            check_keys(s, {"tol", "switch_tol", "max_descent_iterations", "max_newton_iterations", "nu_floor",
                           "init", "perturbation"},
                       "solver");
            c.cell.tol = positive(s, "tol", c.cell.tol, "solver");
            c.cell.switch_tol = positive(s, "switch_tol", c.cell.switch_tol, "solver");
            c.cell.nu_floor = positive(s, "nu_floor", c.cell.nu_floor, "solver");
            c.cell.perturbation = positive(s, "perturbation", c.cell.perturbation, "solver");
            c.cell.max_descent_iterations = s.value("max_descent_iterations", c.cell.max_descent_iterations);
            c.cell.max_newton_iterations = s.value("max_newton_iterations", c.cell.max_newton_iterations);
            require(c.cell.max_descent_iterations > 0 && c.cell.max_newton_iterations > 0,
                    "solver iteration caps must be positive");
            if (s.contains("init")) c.cell.preset = init_preset_from_string(s["init"].get<std::string>());
        }
        if (j.contains("xi_density")) {
            c.xi_density = j["xi_density"].get<std::array<int, 3>>();
            for (int d : c.xi_density) require(d > 0, "xi_density entries must be positive");
        }
        if (j.contains("table")) {
            const auto& t = j["table"];
            check_keys(t, {"h_max", "step", "min_step", "check_stability", "instability_threshold"}, "table");
            c.table.h_max = positive(t, "h_max", c.table.h_max, "table");
            c.table.step = positive(t, "step", c.table.step, "table");
            c.table.min_step = positive(t, "min_step", c.table.min_step, "table");
            c.table.check_stability = t.value("check_stability", true);
            c.table.stability.instability_threshold =
                positive(t, "instability_threshold", c.table.stability.instability_threshold, "table");
        }
        if (j.contains("n_values")) c.n_values = detail::positive_ints(j["n_values"], "n_values");
        if (j.contains("supercells")) c.supercells = detail::positive_ints(j["supercells"], "supercells");
        if (j.contains("macro_resolution")) {
            c.two_scale.macro_resolution = j["macro_resolution"].get<int>();
            require(c.two_scale.macro_resolution >= 2, "macro_resolution must be at least 2");
        }
        if (j.contains("newton")) {
            const auto& n = j["newton"];
            check_keys(n, {"tol", "max_iterations", "inner_factor", "full_newton", "check_gap"}, "newton");
            c.newton.tol = positive(n, "tol", c.newton.tol, "newton");
            c.newton.inner_factor = positive(n, "inner_factor", c.newton.inner_factor, "newton");
            c.newton.max_iterations = n.value("max_iterations", c.newton.max_iterations);
            require(c.newton.max_iterations > 0, "newton.max_iterations must be positive");
            c.newton.full_newton = n.value("full_newton", false);
            c.newton.check_gap = n.value("check_gap", false);
        }
        if (j.contains("fit")) {
            check_keys(j["fit"], {"include_largest_eps"}, "fit");
            c.include_largest_eps = j["fit"].value("include_largest_eps", false);
        }
        if (j.contains("jellium_scan")) {
            const auto& s = j["jellium_scan"];
            check_keys(s, {"nu0", "nu0_min", "nu0_max", "count", "xi_points", "xi_max"}, "jellium_scan");
            if (s.contains("nu0")) {
                c.jellium_nu0 = s["nu0"].get<std::vector<double>>();
            } else {
                const double lo = positive(s, "nu0_min", 0.1, "jellium_scan");
                const double hi = positive(s, "nu0_max", 1.0, "jellium_scan");
                const int count = s.value("count", 19);
                require(hi > lo && count >= 2, "jellium_scan range must be increasing with count >= 2");
                for (int i = 0; i < count; ++i) c.jellium_nu0.push_back(lo + (hi - lo) * i / (count - 1));
            }
            for (double v : c.jellium_nu0) require(v > 0.0, "jellium_scan nu0 values must be positive");
            c.jellium_xi_points = s.value("xi_points", c.jellium_xi_points);
            require(c.jellium_xi_points >= 1, "jellium_scan.xi_points must be positive");
            c.jellium_xi_max = positive(s, "xi_max", c.jellium_xi_max, "jellium_scan");
        }
        if (j.contains("legendre")) {
            check_keys(j["legendre"], {"h_values"}, "legendre");
            c.legendre_h = j["legendre"].at("h_values").get<std::vector<double>>();
        }
        c.seed = j.value("seed", 0u);
        c.cell.seed = c.seed;
        c.threads = j.value("threads", 0);
        require(c.threads >= 0, "threads must be non-negative");
        c.out = j.value("out", std::string{});
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::config, std::string("config schema violation: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::config) throw;
        fail(ErrorKind::config, e.what(), e.payload());
    }
    c.table.cell = c.cell;
    c.table.xi_density = c.xi_density;
    return c;
}

inline StudyConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::config, "cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

}  // namespace tfdw
