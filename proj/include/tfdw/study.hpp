#pragma once

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tfdw/newton.hpp"
#include "tfdw/parallel.hpp"
#include "tfdw/two_scale.hpp"

namespace tfdw {

/// Ordinary least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) fail(ErrorKind::structural, "slope fit needs at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = double(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) fail(ErrorKind::range, "slope fit needs positive data");
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double den = n * sxx - sx * sx;
    if (den == 0.0) fail(ErrorKind::structural, "slope fit needs distinct abscissae");
    return (n * sxy - sx * sy) / den;
}

/// Slope, or NaN when some value is not positive (e.g. residuals at rounding level
/// that are exactly zero in a degenerate study).
inline double slope_or_nan(const std::vector<double>& x, const std::vector<double>& y) {
    for (double v : y) {
        if (!(v > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    }
    return loglog_slope(x, y);
}

struct EpsStudyOptions {
    std::vector<int> n_values{4, 6, 8, 12, 16};
    int axis = 0;  // supercell direction (quasi-1D)
    TwoScaleOptions two_scale;
    NewtonOptions newton;
    bool include_largest_eps = false;
    int threads = 1;
};

struct EpsStudyRow {
    int n = 0;
    double eps = 0.0;
    double ansatz_residual = 0.0;
    double newton_distance_u0 = 0.0;
    double cb_distance = 0.0;
    double contraction_max = 0.0;
    double ansatz_residual_first_order = 0.0;  // u0 without the eps^2 term
    double cb_residual = 0.0;                  // residual of the Cauchy-Born field
    int newton_steps = 0;
    bool converged = false;
};

struct EpsStudyResult {
    std::vector<EpsStudyRow> rows;
    double slope_ansatz_residual = 0.0;
    double slope_first_order_residual = 0.0;
    double slope_newton_distance_u0 = 0.0;
    double slope_cb_distance = 0.0;
    double slope_cb_residual = 0.0;
    bool included_largest_eps = false;
    nlohmann::json correctors;

    std::string to_csv() const {
        std::ostringstream os;
        os << std::setprecision(17);
        os << "n,eps,ansatz_residual,newton_distance_u0,cb_distance,contraction_max,"
              "ansatz_residual_first_order,cb_residual,newton_steps,converged\n";
        for (const auto& r : rows) {
            os << r.n << ',' << r.eps << ',' << r.ansatz_residual << ',' << r.newton_distance_u0 << ','
               << r.cb_distance << ',' << r.contraction_max << ',' << r.ansatz_residual_first_order << ','
               << r.cb_residual << ',' << r.newton_steps << ',' << (r.converged ? 1 : 0) << '\n';
        }
        return os.str();
    }

    std::string slopes_csv() const {
        std::ostringstream os;
        os << std::setprecision(17);
        os << "quantity,slope\n";
        os << "ansatz_residual," << slope_ansatz_residual << '\n';
        os << "ansatz_residual_first_order," << slope_first_order_residual << '\n';
        os << "newton_distance_u0," << slope_newton_distance_u0 << '\n';
        os << "cb_distance," << slope_cb_distance << '\n';
        os << "cb_residual," << slope_cb_residual << '\n';
        return os.str();
    }

    nlohmann::json to_json() const {
        return {{"slopes",
                 {{"ansatz_residual", slope_ansatz_residual},
                  {"ansatz_residual_first_order", slope_first_order_residual},
                  {"newton_distance_u0", slope_newton_distance_u0},
                  {"cb_distance", slope_cb_distance},
                  {"cb_residual", slope_cb_residual}}},
                {"included_largest_eps", included_largest_eps},
                {"correctors", correctors}};
    }
};

/// One supercell of the sweep: u0, Newton from u0, distances.
inline EpsStudyRow eps_study_row(const CBTable& table, const CorrectorSet& cs, int n, const EpsStudyOptions& o) {
    std::array<int, 3> sc{1, 1, 1};
    sc[o.axis] = n;
    const Model model = table.model().supercell(sc);
    const double eps = 1.0 / n;
    const ScalarField hf = sample_macro(cs.h_profile, model.grid);
    EpsStudyRow r;
    r.n = n;
    r.eps = eps;
    const State ucb = cb_field(table, hf, eps);
    const State u1 = assemble_u0(table, cs, model.grid, eps, 1);
    const State u0 = assemble_u0(table, cs, model.grid, eps, 2);
    r.cb_residual = residual(ucb, hf, model).norm();
    r.ansatz_residual_first_order = residual(u1, hf, model).norm();
    r.ansatz_residual = residual(u0, hf, model).norm();
    auto [ustar, tr] = newton_solve(u0, hf, model, o.newton, ucb);
    r.newton_distance_u0 = tr.distance_to_u0;
    r.cb_distance = tr.distance_to_cb;
    r.contraction_max = tr.max_contraction();
    r.newton_steps = tr.steps();
    r.converged = tr.converged;
    return r;
}

inline EpsStudyResult eps_study(const CBTable& table, const PeriodicProfile& h, const EpsStudyOptions& o) {
    if (o.n_values.size() < 2) fail(ErrorKind::config, "eps study needs at least two n values");
    EpsStudyResult res;
    const CorrectorSet cs = build_correctors(table, h, o.two_scale);
    res.correctors = cs.summary();
    res.rows.resize(o.n_values.size());
    parallel_for(o.n_values.size(), o.threads,
                 [&](std::size_t i) { res.rows[i] = eps_study_row(table, cs, o.n_values[i], o); });
    std::sort(res.rows.begin(), res.rows.end(), [](const auto& a, const auto& b) { return a.n < b.n; });

    // Fit on all but the largest eps (smallest n) unless asked otherwise.
    std::vector<EpsStudyRow> fit(res.rows.begin() + (o.include_largest_eps ? 0 : 1), res.rows.end());
    if (fit.size() < 2) fit = res.rows;
    res.included_largest_eps = fit.size() == res.rows.size();
    auto column = [&](auto get) {
        std::vector<double> v;
        for (const auto& r : fit) v.push_back(get(r));
        return v;
    };
    const auto e = column([](const EpsStudyRow& r) { return r.eps; });
    res.slope_ansatz_residual = slope_or_nan(e, column([](const EpsStudyRow& r) { return r.ansatz_residual; }));
    res.slope_first_order_residual =
        slope_or_nan(e, column([](const EpsStudyRow& r) { return r.ansatz_residual_first_order; }));
    res.slope_newton_distance_u0 = slope_or_nan(e, column([](const EpsStudyRow& r) { return r.newton_distance_u0; }));
    res.slope_cb_distance = slope_or_nan(e, column([](const EpsStudyRow& r) { return r.cb_distance; }));
    res.slope_cb_residual = slope_or_nan(e, column([](const EpsStudyRow& r) { return r.cb_residual; }));
    return res;
}

}  // namespace tfdw
