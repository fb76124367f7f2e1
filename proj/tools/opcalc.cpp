// opcalc: batch front-end for the disentangling engine.
// Exit codes: 0 all checks pass, 1 a check failed, 2 input error, 3 engine error.

#include "opcalc/disentangle.hpp"
#include "opcalc/evolution.hpp"
#include "opcalc/feynman_kac.hpp"
#include "opcalc/io.hpp"
#include "opcalc/parallel.hpp"
#include "opcalc/reduced.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using namespace opcalc;
using io::CheckRecord;
using io::json;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<double> tol;
    std::string out;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int workers_of(const Globals& g) { return g.workers.value_or(default_workers()); }

double tolerance_of(const Globals& g, const io::ProblemSpec& s, double fallback) {
    if (g.tol) return *g.tol;
    return s.tolerance.value_or(fallback);
}

const DisentanglingProblem& need_problem(const io::ProblemSpec& s) {
    if (!s.problem) throw ParseError("spec has no generator/families");
    return *s.problem;
}

bool wants(const io::ProblemSpec& s, const std::string& name, bool by_default) {
    if (s.checks.empty()) return by_default;
    return std::find(s.checks.begin(), s.checks.end(), name) != s.checks.end();
}

json finish(const std::string& command, const Globals& g, const std::vector<CheckRecord>& checks, json extra,
            const Stopwatch& clock) {
    json rep = {{"command", command}, {"workers", workers_of(g)}};
    json arr = json::array();
    bool all = true;
    for (const auto& c : checks) {
        arr.push_back(c.to_json());
        all = all && c.pass;
    }
    rep["checks"] = arr;
    rep["all_pass"] = all;
    for (auto& [k, v] : extra.items()) rep[k] = v;
    rep["wall_time"] = clock.seconds();
    return rep;
}

void emit(const json& rep, const Globals& g) {
    const std::string text = rep.dump(2) + "\n";
    if (g.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(g.out);
    if (!f) throw ParseError("cannot write " + g.out);
    f << text;
}

/// Smallest degree whose Dyson tail bound is below `target`.
int dyson_degree(const DisentanglingProblem& p, std::span<const Complex> scale, double target) {
    const auto r = p.weights();
    double x = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) x += std::abs(scale[j]) * r[j];
    double term = 1.0, partial = 0.0;
    for (int n = 0; n < 200; ++n) {
        partial += term;
        term *= x / (n + 1);
        if (std::exp(x) - partial <= target || term == 0.0) return n;
    }
    return 200;
}

int cmd_disentangle(const std::string& path, std::optional<double> t_override, const Globals& g) {
    Stopwatch clock;
    const auto spec = io::parse_spec(io::load_json(path));
    const auto& problem = need_problem(spec);
    const double t = t_override.value_or(spec.time);
    DisentangleOptions opt;
    opt.rule.max_order = spec.quadrature.max_simplex_order;
    opt.workers = workers_of(g);
    if (spec.fixtures.value("merge_only", false)) opt.form = MonomialForm::merge_only;
    const auto d = disentangle_series(problem, t, opt);
    const double series_norm = problem.series().norm(opt.form == MonomialForm::merge_only);
    std::vector<CheckRecord> checks;
    if (wants(spec, "contraction", false)) {
        Stopwatch w;
        CheckRecord c;
        c.name = "contraction";
        c.value = opnorm(d.value);
        c.residual = std::max(0.0, opnorm(d.value) - series_norm);
        c.tolerance = d.error_budget;
        c.pass = c.residual <= c.tolerance;
        c.budget = {{"series_norm", series_norm}, {"error_budget", d.error_budget}};
        c.wall_time = w.seconds();
        checks.push_back(c);
    }
    json extra = {{"time", t},
                  {"value", io::matrix_to_json(d.value)},
                  {"opnorm", opnorm(d.value)},
                  {"series_norm", series_norm},
                  {"truncation_degree", d.truncation_degree},
                  {"tail_bound", d.tail_bound},
                  {"error_budget", d.error_budget},
                  {"method", d.method}};
    const auto rep = finish("disentangle", g, checks, extra, clock);
    emit(rep, g);
    return rep["all_pass"].get<bool>() ? 0 : 1;
}

int cmd_verify_evolution(const std::string& path, const Globals& g) {
    Stopwatch clock;
    const auto spec = io::parse_spec(io::load_json(path));
    const auto& problem = need_problem(spec);
    const double t = spec.time, tol = tolerance_of(g, spec, 1e-6);
    EvolutionOptions opt;
    opt.picard.tolerance = spec.quadrature.picard_tol;
    opt.corrupt_dyson = spec.fixtures.value("corrupt_dyson", false);
    std::vector<CheckRecord> checks;

    Stopwatch w1;
    const auto picard = exp_disentangle_picard(problem, spec.scale, t, 1, 200, opt);
    const double pic_time = w1.seconds();
    Stopwatch w2;
    const int n = dyson_degree(problem, spec.scale, 1e-3 * tol);
    const auto dyson = exp_disentangle_dyson_path(problem, spec.scale, t, n, opt);
    const double dys_time = w2.seconds();

    if (wants(spec, "evolution_residual_picard", true)) {
        Stopwatch w;
        CheckRecord c;
        c.name = "evolution_residual_picard";
        c.residual = evolution_residual(problem, picard, spec.quadrature.quad_tol);
        c.value = io::matrix_to_json(picard.final_value());
        c.tolerance = tol;
        c.pass = c.residual <= tol;
        c.budget = {{"picard_iterations", picard.stats.max_iterations_used}, {"quad_tol", spec.quadrature.quad_tol}};
        c.wall_time = pic_time + w.seconds();
        checks.push_back(c);
    }
    if (wants(spec, "evolution_residual_dyson", true)) {
        Stopwatch w;
        CheckRecord c;
        c.name = "evolution_residual_dyson";
        c.residual = evolution_residual(problem, dyson, spec.quadrature.quad_tol);
        c.value = io::matrix_to_json(dyson.final_value());
        c.tolerance = tol;
        c.pass = c.residual <= tol;
        c.budget = {{"truncation_degree", n}, {"tail_bound", dyson.tail_bound}, {"quad_tol", spec.quadrature.quad_tol}};
        c.wall_time = dys_time + w.seconds();
        checks.push_back(c);
    }
    if (wants(spec, "dyson_picard_agreement", true)) {
        CheckRecord c;
        c.name = "dyson_picard_agreement";
        c.residual = opnorm(Matrix(dyson.final_value() - picard.final_value()));
        c.value = c.residual;
        c.tolerance = tol;
        c.pass = c.residual <= tol;
        c.budget = {{"tail_bound", dyson.tail_bound}};
        c.wall_time = 0.0;
        checks.push_back(c);
    }
    json extra = {{"time", t}};
    if (auto warn = contraction_warning(problem.generator())) extra["warning"] = *warn;
    const auto rep = finish("verify-evolution", g, checks, extra, clock);
    emit(rep, g);
    return rep["all_pass"].get<bool>() ? 0 : 1;
}

int cmd_ie_residual(const std::string& path, const Globals& g) {
    Stopwatch clock;
    const auto spec = io::parse_spec(io::load_json(path));
    const auto& problem = need_problem(spec);
    const double t = spec.time, tol = tolerance_of(g, spec, 1e-6);
    ReducedOptions opt;
    opt.contour_nodes = spec.quadrature.contour_nodes;
    opt.picard.tolerance = spec.quadrature.picard_tol;
    opt.workers = workers_of(g);
    const auto method_name = spec.raw.value("method", std::string("contour"));
    ReducedMethod method;
    if (method_name == "contour") method = ReducedMethod::contour;
    else if (method_name == "direct" || method_name == "direct-series") method = ReducedMethod::direct_series;
    else throw ParseError("unknown method '" + method_name + "'");
    const EquationForm form = spec.fixtures.value("full_form", false) ? EquationForm::full : EquationForm::reduced;
    Stopwatch w;
    const auto r = integral_equation_residual(problem, t, opt, method, form, spec.quadrature.quad_tol);
    CheckRecord c;
    c.name = "integral_equation";
    c.value = io::matrix_to_json(r.lhs);
    c.residual = r.residual;
    c.tolerance = tol;
    c.pass = r.residual <= tol;
    c.budget = {{"lhs_norm", r.lhs_norm},
                {"method", to_string(r.method)},
                {"form", r.form == EquationForm::full ? "full" : "reduced"},
                {"quad_tol", spec.quadrature.quad_tol},
                {"contour_nodes", opt.contour_nodes}};
    c.wall_time = w.seconds();
    const auto rep = finish("ie-residual", g, {c}, {{"time", t}}, clock);
    emit(rep, g);
    return rep["all_pass"].get<bool>() ? 0 : 1;
}

Field parse_psi(const json& spec) {
    const auto psi = spec.value("psi", json::object());
    const double width = psi.value("width", 1.0), center = psi.value("center", 0.0), amp = psi.value("amplitude", 1.0);
    return [=](double x) {
        const double u = (x - center) / width;
        return amp * std::exp(-0.5 * u * u);
    };
}

int cmd_feynman_kac(const std::string& path, const std::string& potential_path, const std::string& csv_path,
                    const Globals& g) {
    Stopwatch clock;
    const auto spec = io::parse_spec(io::load_json(path));
    const auto v = io::parse_potential(io::load_json(potential_path));
    const double t = spec.time;
    const std::uint64_t seed = g.seed.value_or(spec.mc.seed);
    const int workers = workers_of(g);
    const Field psi = parse_psi(spec.raw);
    const auto& grid = v.grid();
    const bool ti = v.kind() == Potential::Kind::time_independent;
    const double interior = spec.raw.value("interior", 6.0);
    const double k_se = spec.raw.value("se_multiplier", 3.0);
    const auto paths = sample_paths(spec.mc.paths, spec.mc.steps, t, seed);
    std::vector<CheckRecord> checks;

    if (wants(spec, "fk_heat_solution", true)) {
        Stopwatch w;
        GridOracle oracle(grid);
        const auto exact = ti ? oracle.propagate(v, psi, t) : oracle.propagate_stepped(v, psi, t, 1000);
        std::vector<double> xs;
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < grid.n; ++i)
            if (std::abs(grid.x(i)) <= interior + 1e-12) {
                xs.push_back(grid.x(i));
                idx.push_back(i);
            }
        const auto est = fk_heat_solution(paths, v, psi, xs, workers);
        const double h2 = grid.h * grid.h;
        std::size_t good = 0;
        double worst = 0.0;
        std::ofstream csv;
        if (!csv_path.empty()) {
            csv.open(csv_path);
            if (!csv) throw ParseError("cannot write " + csv_path);
            csv.precision(17);
            csv << "x,estimate,std_error,oracle,residual\n";
        }
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const double res = std::abs(est.estimate[k] - exact[idx[k]]);
            worst = std::max(worst, res);
            if (res <= k_se * est.std_error[k] + h2) ++good;
            if (csv) csv << xs[k] << ',' << est.estimate[k] << ',' << est.std_error[k] << ',' << exact[idx[k]] << ','
                         << res << '\n';
        }
        const double fraction = xs.empty() ? 0.0 : static_cast<double>(good) / static_cast<double>(xs.size());
        CheckRecord c;
        c.name = "fk_heat_solution";
        c.value = {{"fraction_within_budget", fraction}, {"points", xs.size()}};
        c.residual = worst;
        c.tolerance = 0.95;
        c.pass = fraction >= 0.95;
        c.budget = {{"se_multiplier", k_se}, {"h2", h2}, {"oracle", ti ? "expm" : "strang-1000"}};
        c.wall_time = w.seconds();
        checks.push_back(c);
    }
    if (wants(spec, "reduced_fk_check", ti)) {
        Stopwatch w;
        const auto xs = spec.raw.value("reduced_x", std::vector<double>{-2.0, -1.0, 0.0, 1.0, 2.0});
        const auto r = reduced_fk_check(paths, v, psi, grid, xs, nullptr, workers);
        double worst = 0.0, worst_ratio = 0.0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            worst = std::max(worst, std::abs(r.difference[k]));
            worst_ratio = std::max(worst_ratio, std::abs(r.difference[k]) / r.combined_se[k]);
        }
        CheckRecord c;
        c.name = "reduced_fk_check";
        c.value = {{"x", r.x}, {"heat_solution", r.heat_solution}, {"reduced_side", r.reduced_side}};
        c.residual = worst;
        c.tolerance = k_se;
        c.pass = r.within(k_se);
        c.budget = {{"combined_se", r.combined_se}, {"max_difference_over_se", worst_ratio}};
        c.wall_time = w.seconds();
        checks.push_back(c);
    }
    if (wants(spec, "j_identity_check", true)) {
        Stopwatch w;
        const std::size_t d = spec.raw.value("j_grid_points", std::size_t{64});
        const auto jgrid = SpatialGrid::with_points(grid.x_min, grid.x_max(), d);
        const auto vj = ti ? Potential::time_independent(jgrid, [&](double x) { return v(0.0, x); })
                           : Potential::time_dependent(jgrid, v.times(), [&](double s, double x) { return v(s, x); });
        GridOracle oracle(jgrid);
        std::vector<double> xs;
        for (double x : spec.raw.value("j_x", std::vector<double>{-2.0, -1.0, 0.0, 1.0, 2.0}))
            xs.push_back(jgrid.x(oracle.index_of(x)));
        const double r1 = std::max(1e-300, ti ? t * vj.sup_bound() : vj.mixed_norm());
        const auto g1 = PowerSeries::geometric({r1}, 40);
        ReducedOptions ropt;
        ropt.workers = workers;
        const auto r = j_identity_check(paths, oracle, vj, psi, xs, g1, ropt, workers);
        CheckRecord c;
        c.name = "j_identity_check";
        c.value = {{"x", r.x}, {"matrix_side", r.matrix_side}, {"path_side", r.path_side}};
        c.residual = r.residual;
        c.tolerance = k_se;
        c.pass = r.within(k_se);
        c.budget = {{"std_error", r.std_error}, {"discretization", r.discretization}, {"grid_points", d}};
        c.wall_time = w.seconds();
        checks.push_back(c);
    }
    json extra = {{"time", t},
                  {"seed", seed},
                  {"paths", spec.mc.paths},
                  {"steps", spec.mc.steps},
                  {"potential_sup", v.sup_bound()},
                  {"potential_kind", ti ? "time-independent" : "time-dependent"}};
    const auto rep = finish("feynman-kac", g, checks, extra, clock);
    emit(rep, g);
    return rep["all_pass"].get<bool>() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Disentangling engine: time-ordered operator calculus checks"};
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed = 0;
    int workers = 0;
    double tol = 0.0;
    auto* seed_opt = app.add_option("--seed", seed, "Monte Carlo seed override");
    auto* workers_opt = app.add_option("--workers", workers, "worker threads (default DISENTANGLE_WORKERS or 1)")
                            ->check(CLI::PositiveNumber);
    auto* tol_opt = app.add_option("--tol", tol, "pass tolerance override")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "write the JSON report here instead of stdout");

    std::string spec_path, potential_path, csv_path;
    double time = 0.0;

    auto* dis = app.add_subcommand("disentangle", "disentangle the spec's series at time t");
    dis->add_option("spec", spec_path)->required();
    auto* time_opt = dis->add_option("--time", time, "time t (default: spec time)");
    dis->add_option("--out", g.out, "report path");

    auto* evo = app.add_subcommand("verify-evolution", "check the evolution equation by Picard and Dyson");
    evo->add_option("spec", spec_path)->required();
    evo->add_option("--out", g.out, "report path");

    auto* ie = app.add_subcommand("ie-residual", "residual of the integral equation for the reduced disentangling");
    ie->add_option("spec", spec_path)->required();
    ie->add_option("--out", g.out, "report path");

    auto* fk = app.add_subcommand("feynman-kac", "Monte Carlo path-integral checks against grid oracles");
    fk->add_option("spec", spec_path)->required();
    fk->add_option("--potential", potential_path, "potential JSON")->required();
    fk->add_option("--csv", csv_path, "per-point CSV output");
    fk->add_option("--out", g.out, "report path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    if (*seed_opt) g.seed = seed;
    if (*workers_opt) g.workers = workers;
    if (*tol_opt) g.tol = tol;

    try {
        if (*dis) return cmd_disentangle(spec_path, *time_opt ? std::optional<double>(time) : std::nullopt, g);
        if (*evo) return cmd_verify_evolution(spec_path, g);
        if (*ie) return cmd_ie_residual(spec_path, g);
        if (*fk) return cmd_feynman_kac(spec_path, potential_path, csv_path, g);
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "engine error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
