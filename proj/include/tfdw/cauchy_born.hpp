#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfdw/cell_solver.hpp"

namespace tfdw {

struct CBTableOptions {
    double h_max = 0.1;
    double step = 0.01;
    double min_step = 1e-4;
    CellSolveOptions cell;
    bool check_stability = true;
    StabilityOptions stability;
    std::array<int, 3> xi_density{8, 1, 1};
    bool strict = true;  // throw when the requested range is not reached
};

namespace detail {

struct Hermite {
    double h00, h10, h01, h11, d;
};

/// Cubic Hermite weights on [a, b] at x (derivative weights include b - a).
inline Hermite hermite(double a, double b, double x) {
    const double d = b - a;
    const double s = (x - a) / d;
    return {2 * s * s * s - 3 * s * s + 1, (s * s * s - 2 * s * s + s) * d, -2 * s * s * s + 3 * s * s,
            (s * s * s - s * s) * d, d};
}

/// -(nu+, -nu-, 0) is dF/dh; the h-derivative solves L u' = (nu+, -nu-, 0).
inline Triple field_source(const State& s) {
    return Triple(s.nu_plus, -s.nu_minus, ScalarField(s.grid()));
}

inline double total_magnetization(const State& s) { return s.magnetization().integral() / s.grid().cell_count(); }

}  // namespace detail

/// Tabulated Cauchy-Born map h -> u_CB(.; h) with E_CB, m_tot and du/dh.
/// E_CB is the cell energy averaged over the cell; m_tot is int_Gamma m.
class CBTable {
public:
    CBTable() = default;

    const Model& model() const { return model_; }
    const std::vector<double>& h_samples() const { return h_; }
    const std::vector<CellSolution>& solutions() const { return sol_; }
    const std::vector<double>& E_samples() const { return E_; }
    const std::vector<double>& m_samples() const { return m_; }
    const std::vector<Triple>& dudh_samples() const { return dudh_; }
    const std::vector<double>& gaps() const { return gaps_; }
    double C_nu() const { return C_nu_; }
    double h_min() const { return h_.front(); }
    double h_max() const { return h_.back(); }
    double tol() const { return tol_; }
    const std::string& stop_reason() const { return stop_reason_; }

    std::size_t anchor_index() const {
        return std::size_t(std::find(h_.begin(), h_.end(), 0.0) - h_.begin());
    }

    void require_in_range(double h) const {
        if (h < h_.front() - 1e-14 || h > h_.back() + 1e-14) {
            fail(ErrorKind::range, "h outside the Cauchy-Born table",
                 {{"h", h}, {"h_min", h_.front()}, {"h_max", h_.back()}});
        }
    }

    double E_CB(double h) const {
        const auto [i, w] = locate(h);
        const double vol = model_.grid.cell_volume();
        return w.h00 * E_[i] + w.h10 * (-m_[i] / vol) + w.h01 * E_[i + 1] + w.h11 * (-m_[i + 1] / vol);
    }

    double m_of_h(double h) const {
        const auto [i, w] = locate(h);
        return w.h00 * m_[i] + w.h10 * dm_[i] + w.h01 * m_[i + 1] + w.h11 * dm_[i + 1];
    }

    /// Piecewise cubic Hermite prediction of u_CB(h) from tabulated values and slopes.
    State predict(double h) const {
        const auto [i, w] = locate(h);
        Triple t = w.h00 * sol_[i].state.as_triple();
        t.axpy(w.h10, dudh_[i]);
        t.axpy(w.h01, sol_[i + 1].state.as_triple());
        t.axpy(w.h11, dudh_[i + 1]);
        return State::from_triple(t);
    }

    /// u_CB(h) to the table tolerance: Hermite prediction plus Newton polish.
    /// Results are cached per exact h value.
    State solution_at(double h) const {
        require_in_range(h);
        {
            std::lock_guard<std::mutex> lock(cache_->mutex);
            if (auto it = cache_->states.find(h); it != cache_->states.end()) return it->second;
        }
        State s;
        if (auto it = std::find(h_.begin(), h_.end(), h); it != h_.end()) {
            s = sol_[std::size_t(it - h_.begin())].state;
        } else {
            s = newton_polish(predict(h), ScalarField(model_.grid, h), model_, tol_, 40, nu_floor_).state;
        }
        std::lock_guard<std::mutex> lock(cache_->mutex);
        cache_->states.emplace(h, s);
        return s;
    }

    /// du/dh at h from one linear solve at the polished solution.
    Triple derivative_at(double h) const {
        if (auto it = std::find(h_.begin(), h_.end(), h); it != h_.end()) return dudh_[std::size_t(it - h_.begin())];
        const State s = solution_at(h);
        return solve(LinearizedOperator(s, h), detail::field_source(s), derivative_solve_options());
    }

    LinearSolveOptions derivative_solve_options() const {
        LinearSolveOptions lo;
        lo.rel_tol = 1e-10;
        return lo;
    }

    std::string curves_csv() const {
        std::ostringstream os;
        os << std::setprecision(17);
        os << "h,E_CB,m_tot\n";
        for (std::size_t i = 0; i < h_.size(); ++i) os << h_[i] << ',' << E_[i] << ',' << m_[i] << '\n';
        return os.str();
    }

    nlohmann::json manifest() const {
        return {{"h_samples", h_},   {"E_CB", E_},           {"m_tot", m_},        {"dm_dh", dm_},
                {"gaps", gaps_},     {"C_nu", C_nu_},        {"tol", tol_},        {"nu_floor", nu_floor_},
                {"h_min", h_min()},  {"h_max", h_max()},     {"stop_reason", stop_reason_},
                {"grid", grid_to_json(model_.grid)},
                {"Z", model_.Z()}};
    }

    friend CBTable build_cb_table(const Model& model, const CBTableOptions& opts);
    friend CBTable load_cb_table(const std::filesystem::path& dir, const LatticeSpec& spec);

private:
    struct Cache {
        std::mutex mutex;
        std::map<double, State> states;
    };

    std::pair<std::size_t, detail::Hermite> locate(double h) const {
        require_in_range(h);
        if (h_.size() < 2) fail(ErrorKind::range, "table has a single sample");
        std::size_t i = std::size_t(std::upper_bound(h_.begin(), h_.end(), h) - h_.begin());
        i = std::clamp<std::size_t>(i, 1, h_.size() - 1) - 1;
        return {i, detail::hermite(h_[i], h_[i + 1], h)};
    }

    void append(double h, CellSolution s, Triple d, double gap) {
        const double vol = model_.grid.cell_volume();
        E_.push_back(s.energy.total / vol);
        m_.push_back(detail::total_magnetization(s.state));
        dm_.push_back(2.0 * l2_inner(s.state.nu_plus, d.plus) - 2.0 * l2_inner(s.state.nu_minus, d.minus));
        h_.push_back(h);
        sol_.push_back(std::move(s));
        dudh_.push_back(std::move(d));
        gaps_.push_back(gap);
    }

    void sort_samples() {
        std::vector<std::size_t> order(h_.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return h_[a] < h_[b]; });
        auto permute = [&](auto& v) {
            auto copy = v;
            for (std::size_t k = 0; k < order.size(); ++k) v[k] = std::move(copy[order[k]]);
        };
        permute(h_);
        permute(sol_);
        permute(E_);
        permute(m_);
        permute(dm_);
        permute(dudh_);
        permute(gaps_);
    }

    Model model_;
    std::vector<double> h_;
    std::vector<CellSolution> sol_;
    std::vector<double> E_;
    std::vector<double> m_;
    std::vector<double> dm_;
    std::vector<Triple> dudh_;
    std::vector<double> gaps_;
    double C_nu_ = 0.0;
    double tol_ = 1e-10;
    double nu_floor_ = 1e-8;
    std::string stop_reason_;
    std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

/// Predictor-corrector continuation from the h = 0 anchor towards +-h_max.
inline CBTable build_cb_table(const Model& model, const CBTableOptions& opts) {
    if (!(opts.step > 0.0) || !(opts.h_max > 0.0)) fail(ErrorKind::config, "h step and range must be positive");
    CBTable t;
    t.model_ = model;
    t.tol_ = opts.cell.tol;
    t.nu_floor_ = opts.cell.nu_floor;
    const auto xis = xi_grid(model.grid.lattice(), opts.xi_density);

    CellSolveOptions co = opts.cell;
    co.h_max = std::max(co.h_max, opts.h_max);
    CellSolution anchor = solve_cell(model, 0.0, co);
    t.C_nu_ = opts.cell.C_nu > 0.0 ? opts.cell.C_nu : 0.5 * anchor.min_nu;

    auto gap_of = [&](const State& s, double h) {
        if (!opts.check_stability) return std::numeric_limits<double>::quiet_NaN();
        const StabilityReport rep = stability_scan(LinearizedOperator(s, h), xis, opts.stability);
        return rep.stable() ? rep.global_gap : -rep.global_gap;
    };
    auto derivative = [&](const State& s, double h) {
        return solve(LinearizedOperator(s, h), detail::field_source(s), t.derivative_solve_options());
    };

    const double g0 = gap_of(anchor.state, 0.0);
    if (g0 < 0.0) fail(ErrorKind::stability, "anchor solution is not linearly stable", {{"gap", -g0}});
    Triple d0 = derivative(anchor.state, 0.0);
    anchor.C_nu = t.C_nu_;
    anchor.C_nu_ok = anchor.min_nu >= t.C_nu_;
    const CellSolution anchor_copy = anchor;
    const Triple d0_copy = d0;
    t.append(0.0, std::move(anchor), std::move(d0), g0);

    std::vector<std::string> stops;
    for (int dir : {+1, -1}) {
        State u = anchor_copy.state;
        Triple du = d0_copy;
        double h = 0.0;
        double step = opts.step;
        while (h * dir < opts.h_max - 1e-14) {
            const double hn = dir * std::min(std::abs(h) + step, opts.h_max);
            const double dh = hn - h;
            State pred = u.plus_scaled(dh, du);
            try {
                auto p = newton_polish(pred, ScalarField(model.grid, hn), model, co.tol, 25, co.nu_floor);
                const double g = gap_of(p.state, hn);
                if (g < 0.0) fail(ErrorKind::stability, "linearized gap collapsed", {{"gap", -g}, {"h", hn}});
                Triple dn = derivative(p.state, hn);
                CellSolution sol = finish_solution(p.state, hn, model, co);
                sol.C_nu = t.C_nu_;
                sol.C_nu_ok = sol.min_nu >= t.C_nu_;
                sol.newton_iterations = p.iterations;
                sol.residual_trace = p.residuals;
                u = sol.state;
                du = dn;
                h = hn;
                t.append(hn, std::move(sol), std::move(dn), g);
            } catch (const Error& e) {
                step *= 0.5;
                if (step < opts.min_step) {
                    stops.push_back(std::string(dir > 0 ? "+" : "-") + " side stopped at h=" + std::to_string(h) +
                                    ": " + e.what());
                    if (opts.strict) {
                        fail(ErrorKind::continuation_stop, "continuation stopped before h_max",
                             {{"last_good_h", h}, {"cause", e.to_json()}});
                    }
                    break;
                }
            }
        }
    }
    t.sort_samples();
    for (std::size_t i = 0; i < stops.size(); ++i) t.stop_reason_ += (i ? "; " : "") + stops[i];
    return t;
}

inline void save_cb_table(const std::filesystem::path& dir, const CBTable& t) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < t.h_samples().size(); ++i) {
        std::ostringstream name;
        name << "sample_" << std::setw(3) << std::setfill('0') << i;
        const auto sub = dir / name.str();
        save_solution(sub, t.solutions()[i]);
        const Triple& d = t.dudh_samples()[i];
        write_tfw(sub / "dnu_plus_dh.tfw", d.plus);
        write_tfw(sub / "dnu_minus_dh.tfw", d.minus);
        write_tfw(sub / "dV_dh.tfw", d.potential);
    }
    write_text_atomic(dir / "manifest.json", t.manifest().dump(2) + "\n");
    write_text_atomic(dir / "curves.csv", t.curves_csv());
}

inline CBTable load_cb_table(const std::filesystem::path& dir, const LatticeSpec& spec) {
    std::ifstream in(dir / "manifest.json");
    if (!in) fail(ErrorKind::io, "missing CB table manifest in " + dir.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::io, std::string("bad CB table manifest: ") + e.what());
    }
    CBTable t;
    t.model_ = Model(spec, grid_from_json(j.at("grid")));
    t.C_nu_ = j.at("C_nu").get<double>();
    t.tol_ = j.at("tol").get<double>();
    t.nu_floor_ = j.value("nu_floor", 1e-8);
    t.stop_reason_ = j.value("stop_reason", "");
    const auto hs = j.at("h_samples").get<std::vector<double>>();
    const auto gaps = j.at("gaps").get<std::vector<double>>();
    for (std::size_t i = 0; i < hs.size(); ++i) {
        std::ostringstream name;
        name << "sample_" << std::setw(3) << std::setfill('0') << i;
        const auto sub = dir / name.str();
        State s = load_state(sub);
        s.nu_plus.require_same_grid(t.model_.rho_b);
        CellSolveOptions co;
        co.C_nu = t.C_nu_;
        CellSolution sol = finish_solution(s, hs[i], t.model_, co);
        Triple d(read_tfw(sub / "dnu_plus_dh.tfw"), read_tfw(sub / "dnu_minus_dh.tfw"), read_tfw(sub / "dV_dh.tfw"));
        t.append(hs[i], std::move(sol), std::move(d), gaps[i]);
    }
    t.sort_samples();
    return t;
}

/// Cauchy-Born field on a supercell: nu(x) = nu_CB(x; h(eps x)) with the micro
/// argument the grid point itself. `h_field` holds the samples h(eps x).
inline State cb_field(const CBTable& table, const ScalarField& h_field, double eps) {
    const GridSpec& g = h_field.grid();
    const GridSpec& cg = table.model().grid;
    if (!(g.lattice() == cg.lattice()) || g.resolution() != cg.resolution()) {
        fail(ErrorKind::structural, "h field grid does not refine the table's cell grid");
    }
    const auto& sc = g.supercell();
    const int nmax = std::max({sc[0], sc[1], sc[2]});
    if (std::abs(eps * nmax - 1.0) > 1e-12) fail(ErrorKind::structural, "eps does not match the supercell", {{"eps", eps}});
    std::map<double, State> cache;
    for (double v : h_field.values()) {
        if (!cache.count(v)) cache.emplace(v, table.solution_at(v));
    }
    ScalarField np(g), nm(g), vt(g);
    const auto& r = cg.resolution();
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto mi = g.multi_index(i);
        const std::size_t ci = cg.index(mi[0] % r[0], mi[1] % r[1], mi[2] % r[2]);
        const State& s = cache.at(h_field[i]);
        np[i] = s.nu_plus[ci];
        nm[i] = s.nu_minus[ci];
        vt[i] = s.V[ci] + s.gauge;
    }
    return State(std::move(np), std::move(nm), std::move(vt));
}

// ---- dual problem ----------------------------------------------------------

struct DualResult {
    State state;
    double h_eff = 0.0;     // magnetization multiplier
    double energy = 0.0;    // averaged cell energy without Zeeman term
    int iterations = 0;
};

/// Cell minimization with int_Gamma m = m_target: the EL system with an extra
/// unknown field h_eff and the magnetization constraint, by bordered Newton.
inline DualResult dual_solve(const CBTable& table, double m_target, double tol = 1e-11, int max_it = 30) {
    const Model& model = table.model();
    const auto& ms = table.m_samples();
    const double m_lo = *std::min_element(ms.begin(), ms.end());
    const double m_hi = *std::max_element(ms.begin(), ms.end());
    if (m_target < m_lo || m_target > m_hi) {
        fail(ErrorKind::infeasible, "target magnetization outside the attainable range",
             {{"m_target", m_target}, {"m_min", m_lo}, {"m_max", m_hi}});
    }
    // Initial multiplier: invert the tabulated m(h) by bisection.
    double a = table.h_min(), b = table.h_max();
    for (int k = 0; k < 200 && b - a > 1e-15; ++k) {
        const double mid = 0.5 * (a + b);
        (table.m_of_h(mid) < m_target ? a : b) = mid;
    }
    double h = 0.5 * (a + b);
    State u = table.solution_at(h);
    DualResult r;
    LinearSolveOptions lo;
    lo.rel_tol = 1e-6;
    lo.abs_tol = 1e-2 * tol;
    const double vol = model.grid.cell_volume();
    for (int it = 0; it <= max_it; ++it) {
        const ScalarField hf(model.grid, h);
        const Triple F = residual(u, hf, model).as_triple();
        const double g = detail::total_magnetization(u) - m_target;
        const double res = std::hypot(l2_norm(F), g / vol);
        r.iterations = it;
        if (res <= tol) break;
        if (it == max_it) fail(ErrorKind::non_convergence, "dual solve did not converge", {{"residual", res}});
        const LinearizedOperator op(u, hf);
        const Triple x1 = solve(op, F, lo);
        const Triple src = detail::field_source(u);  // = -dF/dh
        const Triple x2 = solve(op, src, lo);        // L x2 = -dF/dh
        // Linearized constraint: dm = 2 (nu+ w+ - nu- w-) integrated over the cell.
        auto dm = [&](const Triple& w) {
            return 2.0 * (l2_inner(u.nu_plus, w.plus) - l2_inner(u.nu_minus, w.minus));
        };
        // Solve L du + dh dF/dh = F, dm(du) = g  =>  du = x1 + dh x2.
        const double dh = (g - dm(x1)) / dm(x2);
        Triple du = x1;
        du.axpy(dh, x2);
        u = u.plus_scaled(-1.0, du);
        h -= dh;
    }
    r.state = u;
    r.h_eff = h;
    r.energy = energy_constant_field(u, 0.0, model).total / vol;
    return r;
}

inline double dual_energy(const CBTable& table, double m_target, double tol = 1e-11) {
    return dual_solve(table, m_target, tol).energy;
}

struct LegendreResult {
    double h = 0.0;
    double m_star = 0.0;
    double dual_value = 0.0;  // E~(m*) - h m*/|Gamma|
    double E_CB = 0.0;        // table value
    double E_CB_exact = 0.0;  // averaged energy of the polished solution at h
    double relative_error = 0.0;
};

/// min_m (E~(m) - h m/|Gamma|): the stationarity condition is h_eff(m) = h,
/// found by secant iteration on dual solves.
inline LegendreResult legendre_check(const CBTable& table, double h, double tol = 1e-11) {
    const double vol = table.model().grid.cell_volume();
    double m0 = table.m_of_h(h);
    DualResult d0 = dual_solve(table, m0, tol);
    const double scale = std::max(std::abs(table.m_samples().back() - table.m_samples().front()), 1e-12);
    double m1 = m0 + 1e-4 * scale;
    DualResult d1 = dual_solve(table, m1, tol);
    for (int it = 0; it < 30 && std::abs(d1.h_eff - h) > 1e-12; ++it) {
        const double slope = (d1.h_eff - d0.h_eff) / (m1 - m0);
        const double m2 = m1 - (d1.h_eff - h) / slope;
        m0 = m1;
        d0 = std::move(d1);
        m1 = m2;
        d1 = dual_solve(table, m1, tol);
    }
    LegendreResult r;
    r.h = h;
    r.m_star = m1;
    r.dual_value = d1.energy - h * m1 / vol;
    r.E_CB = table.E_CB(h);
    const State s = table.solution_at(h);
    r.E_CB_exact = energy_constant_field(s, h, table.model()).total / vol;
    r.relative_error = std::abs(r.dual_value - r.E_CB) / std::abs(r.E_CB);
    return r;
}

}  // namespace tfdw
