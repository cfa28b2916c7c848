// tfdw: command-line front end for the solver suite.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tfdw/config.hpp"
#include "tfdw/jellium.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tfdw;

namespace {

struct Globals {
    std::string config;
    std::string out;
    std::optional<unsigned> seed;
    int threads = 0;
    bool verbose = false;
    std::string table_dir;  // two-scale-build / newton-study / eps-study / legendre-check
    int n = 0;              // newton-study
};

bool g_verbose = false;

void log(const std::string& msg) {
    if (g_verbose) std::cerr << "[tfdw] " << msg << std::endl;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

StudyConfig load(const Globals& g) {
    StudyConfig c = load_config(g.config);
    if (g.seed) {
        c.seed = *g.seed;
        c.cell.seed = *g.seed;
        c.table.cell.seed = *g.seed;
    }
    if (g.threads > 0) c.threads = g.threads;
    c.threads = resolve_threads(c.threads);
    if (!g.out.empty()) c.out = g.out;
    if (c.out.empty()) c.out = "out";
    fs::create_directories(c.out);
    return c;
}

void write_json(const fs::path& p, const json& j) { write_text_atomic(p, j.dump(2) + "\n"); }

ScalarField h_constant(const StudyConfig& c) {
    if (!c.h.is_constant()) fail(ErrorKind::config, "this command needs a constant h");
    return ScalarField(c.grid(), c.h.mean);
}

CBTable table_for(const StudyConfig& c, const Globals& g) {
    if (!g.table_dir.empty()) {
        log("loading CB table from " + g.table_dir);
        return load_cb_table(g.table_dir, c.spec);
    }
    log("building CB table");
    CBTable t = build_cb_table(c.model(), c.table);
    log("CB table: " + std::to_string(t.h_samples().size()) + " samples on [" + fmt(t.h_min()) + ", " +
        fmt(t.h_max()) + "]");
    return t;
}

// ---- commands ---------------------------------------------------------------

void cmd_solve_cell(const Globals& g) {
    const StudyConfig c = load(g);
    const ScalarField h = h_constant(c);
    log("solving cell problem at h = " + fmt(c.h.mean));
    const CellSolution sol = solve_cell(c.model(), h.values()[0], c.cell);
    save_solution(fs::path(c.out) / "cell", sol);
    json j = sol.manifest();
    j["energy_trace_length"] = sol.energy_trace.size();
    j["residual_trace"] = sol.residual_trace;
    write_json(fs::path(c.out) / "solve_cell.json", j);
    std::cout << j.dump(2) << std::endl;
}

void cmd_jellium_scan(const Globals& g) {
    const StudyConfig c = load(g);
    std::vector<double> nu0 = c.jellium_nu0;
    if (nu0.empty()) {
        for (int i = 0; i < 19; ++i) nu0.push_back(0.1 + 0.05 * i);
    }
    std::vector<double> xis;
    for (int i = 0; i < c.jellium_xi_points; ++i) {
        xis.push_back(c.jellium_xi_points == 1 ? 0.0 : c.jellium_xi_max * i / (c.jellium_xi_points - 1));
    }
    write_text_atomic(fs::path(c.out) / "jellium_scan.csv", jellium::sweep_csv(nu0, xis));
    const double est = jellium::bisect_sdw_threshold(nu0.front(), nu0.back());
    const jellium::Params at(est);
    const json j = {{"sdw_threshold_estimate", est},
                    {"sdw_threshold_closed_form", jellium::sdw_threshold()},
                    {"cdw_condition_at_threshold", jellium::cdw_condition(at)},
                    {"nu0_values", nu0.size()},
                    {"xi_values", xis.size()}};
    write_json(fs::path(c.out) / "jellium_scan.json", j);
    std::cout << j.dump(2) << std::endl;
}

void cmd_stability_scan(const Globals& g) {
    const StudyConfig c = load(g);
    const ScalarField h = h_constant(c);
    log("solving cell problem");
    const CellSolution sol = solve_cell(c.model(), c.h.mean, c.cell);
    json summary = {{"h", c.h.mean}, {"supercells", json::array()}};
    std::ostringstream csv;
    csv.precision(17);
    csv << "n,xi1,xi2,xi3,gap,class\n";
    for (int n : c.supercells) {
        const std::array<int, 3> sc{n, 1, 1};
        const GridSpec sg = c.grid().with_supercell(sc);
        const State s(periodic_extension(sol.state.nu_plus, sc), periodic_extension(sol.state.nu_minus, sc),
                      periodic_extension(sol.state.total_potential(), sc));
        std::array<int, 3> density = c.xi_density;
        density[0] = std::max(1, density[0] / n);
        log("scanning supercell n = " + std::to_string(n));
        StabilityOptions so = c.table.stability;
        const StabilityReport rep = stability_scan(s, ScalarField(sg, c.h.mean), xi_grid(sg, density), so);
        for (const auto& f : rep.fiber_gaps) {
            csv << n << ',' << f.xi[0] << ',' << f.xi[1] << ',' << f.xi[2] << ',' << f.gap << ','
                << to_string(f.classification) << '\n';
        }
        json r = rep.to_json();
        r["n"] = n;
        summary["supercells"].push_back(r);
    }
    write_text_atomic(fs::path(c.out) / "stability.csv", csv.str());
    write_json(fs::path(c.out) / "stability.json", summary);
    json brief = json::array();
    for (const auto& r : summary["supercells"]) brief.push_back({{"n", r["n"]}, {"M", r["M"]}, {"class", r["classification"]}});
    std::cout << brief.dump(2) << std::endl;
}

void cmd_cb_table(const Globals& g) {
    const StudyConfig c = load(g);
    const CBTable t = table_for(c, g);
    save_cb_table(fs::path(c.out) / "cb_table", t);
    std::cout << t.manifest().dump(2) << std::endl;
}

void cmd_two_scale_build(const Globals& g) {
    const StudyConfig c = load(g);
    const CBTable t = table_for(c, g);
    TwoScaleOptions o = c.two_scale;
    o.threads = c.threads;
    log("computing correctors");
    const CorrectorSet cs = build_correctors(t, c.h, o);
    std::ostringstream csv;
    csv.precision(17);
    csv << "X,h,norm_u1,norm_u2,residual1,residual2\n";
    for (std::size_t k = 0; k < cs.samples.size(); ++k) {
        const auto& s = cs.samples[k];
        csv << double(k) / cs.samples.size() << ',' << s.h << ',' << l2_norm(s.u1) << ',' << l2_norm(s.u2) << ','
            << s.residual1 << ',' << s.residual2 << '\n';
    }
    write_text_atomic(fs::path(c.out) / "correctors.csv", csv.str());
    write_json(fs::path(c.out) / "correctors.json", cs.summary());
    std::cout << cs.summary().dump(2) << std::endl;
}

void cmd_newton_study(const Globals& g) {
    const StudyConfig c = load(g);
    const int n = g.n > 0 ? g.n : c.n_values.back();
    const CBTable t = table_for(c, g);
    TwoScaleOptions o = c.two_scale;
    o.threads = c.threads;
    const CorrectorSet cs = build_correctors(t, c.h, o);
    const Model m = t.model().supercell({n, 1, 1});
    const ScalarField hf = sample_macro(cs.h_profile, m.grid);
    const double eps = 1.0 / n;
    const State u0 = assemble_u0(t, cs, m.grid, eps, 2);
    log("Newton on supercell n = " + std::to_string(n));
    auto [u, tr] = newton_solve(u0, hf, m, c.newton, cb_field(t, hf, eps));
    save_state(fs::path(c.out) / "newton_state", u, {{"n", n}});
    write_text_atomic(fs::path(c.out) / "newton_trace.csv", tr.to_csv());
    json j = tr.to_json();
    j["n"] = n;
    j["eps"] = eps;
    write_json(fs::path(c.out) / "newton_trace.json", j);
    std::cout << j.dump(2) << std::endl;
}

void cmd_eps_study(const Globals& g) {
    const StudyConfig c = load(g);
    const CBTable t = table_for(c, g);
    log("running the eps sweep on " + std::to_string(c.threads) + " thread(s)");
    const EpsStudyResult r = eps_study(t, c.h, c.eps_options());
    write_text_atomic(fs::path(c.out) / "eps_study.csv", r.to_csv());
    write_text_atomic(fs::path(c.out) / "slopes.csv", r.slopes_csv());
    write_json(fs::path(c.out) / "eps_study.json", r.to_json());
    std::cout << r.to_csv() << r.slopes_csv();
}

void cmd_legendre_check(const Globals& g) {
    const StudyConfig c = load(g);
    const CBTable t = table_for(c, g);
    std::vector<double> hs = c.legendre_h;
    if (hs.empty()) {
        // Midpoints between samples, away from the ends.
        for (std::size_t i = 1; i + 2 < t.h_samples().size(); i += std::max<std::size_t>(1, t.h_samples().size() / 6)) {
            hs.push_back(0.5 * (t.h_samples()[i] + t.h_samples()[i + 1]));
        }
    }
    std::ostringstream csv;
    csv.precision(17);
    csv << "h,m_star,dual_value,E_CB,E_CB_exact,relative_error\n";
    double worst = 0.0;
    for (double h : hs) {
        log("Legendre check at h = " + fmt(h));
        const LegendreResult r = legendre_check(t, h);
        csv << r.h << ',' << r.m_star << ',' << r.dual_value << ',' << r.E_CB << ',' << r.E_CB_exact << ','
            << r.relative_error << '\n';
        worst = std::max(worst, r.relative_error);
    }
    write_text_atomic(fs::path(c.out) / "legendre.csv", csv.str());
    const json j = {{"points", hs.size()}, {"max_relative_error", worst}};
    write_json(fs::path(c.out) / "legendre.json", j);
    std::cout << csv.str();
}

int report(const Error& e, const Globals& g) {
    const json j = e.to_json();
    std::cerr << j.dump(2) << std::endl;
    if (!g.out.empty()) {
        try {
            fs::create_directories(g.out);
            write_json(fs::path(g.out) / "error.json", j);
        } catch (...) {
        }
    }
    return e.kind() == ErrorKind::config ? 2 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spin-polarized TFDW solver suite"};
    app.require_subcommand(1);
    Globals g;

    const auto add = [&](const std::string& name, const std::string& help, void (*fn)(const Globals&)) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", g.config, "JSON config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", g.out, "output directory (overrides config)");
        sub->add_option("--seed", g.seed, "random seed (overrides config)");
        sub->add_option("--threads", g.threads, "worker threads (fallback: TFDW_THREADS)")->check(CLI::NonNegativeNumber);
        sub->add_flag("--verbose,-v", g.verbose, "progress on stderr");
        sub->callback([&g, fn] {
            g_verbose = g.verbose;
            fn(g);
        });
        return sub;
    };
    add("solve-cell", "ground state of the cell problem at constant h", cmd_solve_cell);
    add("jellium-scan", "closed-form jellium spectra and the SDW threshold", cmd_jellium_scan);
    add("stability-scan", "fiber gaps and M on the configured supercells", cmd_stability_scan);
    add("cb-table", "Cauchy-Born continuation table", cmd_cb_table);
    for (CLI::App* sub : {add("two-scale-build", "first and second order correctors", cmd_two_scale_build),
                          add("newton-study", "frozen-Jacobian Newton from the two-scale ansatz", cmd_newton_study),
                          add("eps-study", "ansatz / Newton / Cauchy-Born sweep over n", cmd_eps_study),
                          add("legendre-check", "E_CB against the dual minimization", cmd_legendre_check)}) {
        sub->add_option("--table", g.table_dir, "load a saved CB table instead of building one");
        if (sub->get_name() == "newton-study") sub->add_option("--n", g.n, "supercell size (default: largest n)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        const json j = {{"error", "config"}, {"message", e.what()}, {"details", json::object()}};
        std::cerr << j.dump(2) << std::endl;
        return 2;
    } catch (const Error& e) {
        return report(e, g);
    } catch (const std::exception& e) {
        return report(Error(ErrorKind::io, e.what()), g);
    }
    return 0;
}
