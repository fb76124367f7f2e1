#pragma once

#include "opcalc/collocation.hpp"
#include "opcalc/contour.hpp"
#include "opcalc/errors.hpp"
#include "opcalc/evolution.hpp"
#include "opcalc/linalg.hpp"
#include "opcalc/parallel.hpp"
#include "opcalc/power_series.hpp"
#include "opcalc/problem.hpp"
#include "opcalc/propagation.hpp"
#include "opcalc/quadrature.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace opcalc {

enum class ReducedMethod { contour, direct_series };

inline const char* to_string(ReducedMethod m) { return m == ReducedMethod::contour ? "contour" : "direct-series"; }

struct ReducedOptions {
    int contour_nodes = 64;
    /// Contour radii are radius_factor * r_j; 0 selects the factor that
    /// balances the two aliasing sums of the trapezoidal rule.
    double radius_factor = 0.0;
    CollocationOptions grid;
    PicardOptions picard;
    int workers = 1;
    /// Truncation degree of the direct series; -1 uses the series' own.
    int max_degree = -1;
};

struct ReducedOperator {
    Matrix value;
    ReducedMethod method = ReducedMethod::contour;
    int contour_nodes = 0;
    std::vector<double> contour_radii;
    int truncation_degree = 0;
    double tail_bound = 0.0;
    int max_picard_iterations = 0;
};

/// Coefficient shift: the series of (g(z) - g(z | z_j = 0)) / z_j, j 0-based.
inline PowerSeries phi_series(const PowerSeries& g, std::size_t j) {
    if (j >= static_cast<std::size_t>(g.arity())) throw PreconditionError("phi_series: variable index out of range");
    PowerSeries::Coefficients c;
    for (const auto& [m, v] : g.coefficients())
        if (m[j] > 0) {
            MultiIndex s = m;
            --s[j];
            c[s] = v;
        }
    const int n = std::max(0, g.max_degree() - 1);
    if (!g.has_generator()) return PowerSeries(g.arity(), std::move(c), g.radii(), n);
    auto gen = g.generator();
    auto shifted = [gen, j](const MultiIndex& m) {
        MultiIndex s = m;
        ++s[j];
        return gen(s);
    };
    PowerSeries::EvaluatorFn closed;
    if (g.has_closed_form()) {
        PowerSeries truncated_phi(g.arity(), c, g.radii(), n);
        closed = [g, j, truncated_phi](std::span<const Complex> z) {
            // The removable singularity at z_j = 0 falls back to the stored polynomial.
            if (std::abs(z[j]) < 1e-3) return truncated_phi.evaluate_truncated(z);
            std::vector<Complex> z0(z.begin(), z.end());
            z0[j] = 0.0;
            return (g(z) - g(std::span<const Complex>(z0))) / z[j];
        };
    }
    return PowerSeries::from_generator(g.arity(), shifted, g.radii(), n, closed);
}

/// Default shrink factor q of the contour radii: max((M!)^{-1/(2M)}, 1e-16^{1/M}).
inline double contour_radius_factor(int nodes_per_circle) {
    const double m = nodes_per_circle;
    const double balance = std::exp(-std::lgamma(m + 1.0) / (2.0 * m));
    return std::max(balance, std::pow(1e-16, 1.0 / m));
}

/// Contour evaluation of several reduced disentanglings sharing one problem:
/// for each function h_i of the torus point, the path
/// s -> (2 pi i)^{-n} oint h_i(xi) E^s(1/xi) dxi / xi applied to X0.
/// Variables with zero weight are frozen at 0 and their families dropped.
struct ContourPaths {
    std::vector<CollocatedPath> paths;
    std::vector<double> radii;
    int max_picard_iterations = 0;
};

inline ContourPaths reduced_contour_paths(const DisentanglingProblem& problem, double t, const Matrix& x0,
                                          const std::vector<PowerSeries::EvaluatorFn>& fns,
                                          const ReducedOptions& opt = {}) {
    const auto r = problem.weights();
    std::vector<std::size_t> active;
    std::vector<double> rho;
    const double q = opt.radius_factor > 0.0 ? opt.radius_factor : contour_radius_factor(opt.contour_nodes);
    for (std::size_t j = 0; j < r.size(); ++j)
        if (r[j] > 0.0) {
            active.push_back(j);
            rho.push_back(q * r[j]);
        }
    std::vector<double> moduli(problem.arity(), 0.0);
    for (std::size_t i = 0; i < active.size(); ++i) moduli[active[i]] = 1.0 / rho[i];
    ContourPaths out;
    out.radii.assign(problem.arity(), 0.0);
    for (std::size_t i = 0; i < active.size(); ++i) out.radii[active[i]] = rho[i];

    if (active.empty()) {
        // g(0) e^{-s alpha} X0: a Picard solve with no families.
        auto kernel = make_kernel(problem, t, moduli, opt.grid, {});
        std::vector<Complex> zero_scale(problem.arity(), 0.0);
        auto base = picard_solve(*kernel, zero_scale, x0, opt.picard);
        std::vector<Complex> z(problem.arity(), 0.0);
        for (const auto& f : fns) {
            CollocatedPath p = base;
            p.scale_by(f(z));
            out.paths.push_back(std::move(p));
        }
        return out;
    }

    auto kernel = make_kernel(problem, t, moduli, opt.grid, active);
    TorusGrid torus(rho, opt.contour_nodes);
    struct Partial {
        std::vector<std::optional<CollocatedPath>> acc;
        int iterations = 0;
    };
    auto partials = map_chunks<Partial>(torus.size(), 256, opt.workers, [&](std::size_t b, std::size_t e) {
        Partial part;
        part.acc.resize(fns.size());
        std::vector<Complex> xi(active.size()), z(problem.arity(), 0.0), scale(active.size());
        for (std::size_t idx = b; idx < e; ++idx) {
            torus.point(idx, xi);
            for (std::size_t i = 0; i < active.size(); ++i) {
                z[active[i]] = xi[i];
                scale[i] = 1.0 / xi[i];
            }
            PicardStats st;
            auto path = picard_solve(*kernel, scale, x0, opt.picard, &st);
            part.iterations = std::max(part.iterations, st.max_iterations_used);
            for (std::size_t f = 0; f < fns.size(); ++f) {
                const Complex w = fns[f](std::span<const Complex>(z));
                if (!part.acc[f]) {
                    part.acc[f] = path;
                    part.acc[f]->scale_by(w);
                } else {
                    part.acc[f]->add_scaled(w, path);
                }
            }
        }
        return part;
    });
    for (std::size_t f = 0; f < fns.size(); ++f) {
        CollocatedPath total = *partials.front().acc[f];
        for (std::size_t c = 1; c < partials.size(); ++c) total.add_scaled(1.0, *partials[c].acc[f]);
        total.scale_by(torus.weight());
        out.paths.push_back(std::move(total));
    }
    for (const auto& p : partials) out.max_picard_iterations = std::max(out.max_picard_iterations, p.iterations);
    return out;
}

/// Reduced disentangling by the Cauchy contour integral of g(xi) E^t(1/xi).
inline ReducedOperator reduced_disentangle_contour(const DisentanglingProblem& problem, double t,
                                                   const ReducedOptions& opt = {}) {
    const auto& g = problem.series();
    auto cp = reduced_contour_paths(problem, t, identity(problem.dim()),
                                    {[&g](std::span<const Complex> z) { return g(z); }}, opt);
    ReducedOperator out;
    out.value = cp.paths.front().final_value();
    out.method = ReducedMethod::contour;
    out.contour_nodes = opt.contour_nodes;
    out.contour_radii = cp.radii;
    out.truncation_degree = g.has_closed_form() ? -1 : g.max_degree();
    out.max_picard_iterations = cp.max_picard_iterations;
    return out;
}

/// Same as reduced_disentangle_contour applied to a block X0 (e.g. a vector).
inline Matrix reduced_apply_contour(const DisentanglingProblem& problem, double t, const Matrix& x0,
                                    const ReducedOptions& opt = {}) {
    const auto& g = problem.series();
    auto cp = reduced_contour_paths(problem, t, x0, {[&g](std::span<const Complex> z) { return g(z); }}, opt);
    return cp.paths.front().final_value();
}

namespace detail {

/// sum_m w_m L_m on the collocation grid, one path per weight function.
inline std::vector<CollocatedPath> graded_paths(const DisentanglingProblem& problem, double t, int max_degree,
                                                const std::vector<std::function<Complex(const MultiIndex&)>>& weights,
                                                const CollocationOptions& grid, const Matrix& x0) {
    const std::vector<double> ones(problem.arity(), 1.0);
    auto kernel = make_kernel(problem, t, ones, grid);
    GradedRecursion rec(static_cast<int>(problem.arity()), max_degree);
    std::vector<std::vector<Complex>> w(weights.size());
    for (std::size_t o = 0; o < weights.size(); ++o)
        for (const auto& m : rec.indices()) w[o].push_back(weights[o](m));
    return rec.solve(*kernel, w, x0);
}

}  // namespace detail

/// Reduced disentangling as the series sum_m g_m L_m(t): every merge pattern
/// counted once, without the m_1!...m_n! factor.
inline ReducedOperator reduced_disentangle_direct(const DisentanglingProblem& problem, double t, int max_degree = -1,
                                                  const ReducedOptions& opt = {}) {
    const auto& g = problem.series();
    const int n = max_degree >= 0 ? max_degree : (opt.max_degree >= 0 ? opt.max_degree : g.max_degree());
    auto paths = detail::graded_paths(problem, t, n, {[&g](const MultiIndex& m) { return g.coefficient(m); }},
                                      opt.grid, identity(problem.dim()));
    ReducedOperator out;
    out.value = paths.front().final_value();
    out.method = ReducedMethod::direct_series;
    out.truncation_degree = n;
    // ||L_m|| <= K r^m / m!.
    const auto tail = g.truncated(n).tail_bound(true);
    double stored_beyond = 0.0;
    for (const auto& [m, c] : g.coefficients())
        if (total_degree(m) > n) {
            double w = std::abs(c) / factorial_product(m);
            for (std::size_t j = 0; j < m.size(); ++j) w *= std::pow(g.radii()[j], m[j]);
            stored_beyond += w;
        }
    out.tail_bound = semigroup_bound(problem.generator(), t) *
                     (tail ? std::max(*tail, stored_beyond) : stored_beyond);
    return out;
}

/// Full disentangling with semigroup factors: sum_m g_m m_1!...m_n! L_m(t).
inline Matrix full_disentangle_direct(const DisentanglingProblem& problem, double t, int max_degree = -1,
                                      const CollocationOptions& grid = {}) {
    const auto& g = problem.series();
    const int n = max_degree >= 0 ? max_degree : g.max_degree();
    auto paths = detail::graded_paths(
        problem, t, n, {[&g](const MultiIndex& m) { return g.coefficient(m) * factorial_product(m); }}, grid,
        identity(problem.dim()));
    return paths.front().final_value();
}

/// Which disentangling the integral-equation check is fed. `full` is the
/// negative-control fixture: it keeps the m_1!...m_n! factor the reduced
/// form drops, and must violate the equation.
enum class EquationForm { reduced, full };

struct IntegralEquationReport {
    double residual = 0.0;
    Matrix lhs;
    Matrix rhs;
    double lhs_norm = 0.0;
    ReducedMethod method = ReducedMethod::contour;
    EquationForm form = EquationForm::reduced;
};

/// || f_R^t - g(0) e^{-t alpha} - sum_j int_0^t e^{-(t-s) alpha} A_j(s) Phi_R^{j,s} mu_j(ds) ||,
/// with Phi^j from phi_series, the outer s-integral by adaptive Gauss rules
/// independent of the collocation grid, and Phi_R^{j,s} interpolated from the
/// collocated paths.
inline IntegralEquationReport integral_equation_residual(const DisentanglingProblem& problem, double t,
                                                         const ReducedOptions& opt = {},
                                                         ReducedMethod method = ReducedMethod::contour,
                                                         EquationForm form = EquationForm::reduced,
                                                         double quad_tol = 1e-11) {
    const auto& g = problem.series();
    const std::size_t n = problem.arity();
    std::vector<CollocatedPath> paths;
    if (form == EquationForm::full || method == ReducedMethod::direct_series) {
        const bool full = form == EquationForm::full;
        std::vector<std::function<Complex(const MultiIndex&)>> w;
        w.push_back([&g, full](const MultiIndex& m) {
            return g.coefficient(m) * (full ? factorial_product(m) : 1.0);
        });
        for (std::size_t j = 0; j < n; ++j)
            w.push_back([&g, j, full](const MultiIndex& m) {
                MultiIndex s = m;
                ++s[j];
                return g.coefficient(s) * (full ? factorial_product(m) : 1.0);
            });
        const int deg = opt.max_degree >= 0 ? opt.max_degree : g.max_degree();
        paths = detail::graded_paths(problem, t, deg, w, opt.grid, identity(problem.dim()));
        method = ReducedMethod::direct_series;
    } else {
        std::vector<PowerSeries::EvaluatorFn> fns;
        fns.push_back([&g](std::span<const Complex> z) { return g(z); });
        std::vector<PowerSeries> phis;
        for (std::size_t j = 0; j < n; ++j) phis.push_back(phi_series(g, j));
        for (std::size_t j = 0; j < n; ++j) fns.push_back([&phis, j](std::span<const Complex> z) { return phis[j](z); });
        paths = reduced_contour_paths(problem, t, identity(problem.dim()), fns, opt).paths;
    }
    IntegralEquationReport rep;
    rep.method = method;
    rep.form = form;
    rep.lhs = paths[0].final_value();
    rep.rhs = g.coefficient(MultiIndex(n, 0)) * semigroup(problem.generator(), t);
    for (std::size_t j = 0; j < n; ++j) {
        const auto& fam = problem.family(j);
        if (fam.is_zero() || t == 0.0) continue;
        const auto& phi = paths[j + 1];
        auto h = [&](double s) -> Matrix {
            return semigroup(problem.generator(), t - s) * fam.value(s) * phi.value_at(s);
        };
        rep.rhs += integrate_time(h, fam.measure(), t, quad_tol, fam.breakpoints());
    }
    rep.lhs_norm = opnorm(rep.lhs);
    rep.residual = opnorm(Matrix(rep.lhs - rep.rhs));
    return rep;
}

}  // namespace opcalc
