#pragma once

#include "opcalc/collocation.hpp"
#include "opcalc/errors.hpp"
#include "opcalc/linalg.hpp"
#include "opcalc/problem.hpp"
#include "opcalc/propagation.hpp"
#include "opcalc/quadrature.hpp"

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace opcalc {

/// e^{-t alpha}.
inline Matrix semigroup(const Matrix& alpha, double t) {
    if (t < 0.0) throw DomainError("semigroup: negative time");
    if (t == 0.0) return identity(alpha.rows());
    return expm(Matrix(-t * alpha));
}

/// Warning text when -alpha does not generate a contraction semigroup
/// (positive logarithmic norm of -alpha); the computation proceeds regardless.
inline std::optional<std::string> contraction_warning(const Matrix& alpha) {
    const double mu = lognorm(Matrix(-alpha));
    if (mu > 1e-12)
        return "generator: -alpha has logarithmic norm " + std::to_string(mu) +
               " > 0, so e^{-s alpha} is not a contraction";
    return std::nullopt;
}

/// sup_{0<=s<=t} ||e^{-s alpha}|| bounded by e^{t max(0, lognorm(-alpha))}.
inline double semigroup_bound(const Matrix& alpha, double t) {
    return std::exp(t * std::max(0.0, lognorm(Matrix(-alpha))));
}

enum class EvolutionMethod { dyson_series, picard_iteration };

inline const char* to_string(EvolutionMethod m) {
    return m == EvolutionMethod::dyson_series ? "dyson-series" : "picard-iteration";
}

struct EvolutionOptions {
    CollocationOptions grid;
    PicardOptions picard;
    /// Test fixture: perturbs one degree-2 Dyson term (negative control).
    bool corrupt_dyson = false;
};

/// E^t(scale) on a collocation grid: values at the grid times plus an
/// interpolant for any s in [0, t].
class Propagator {
public:
    Propagator(CollocatedPath path, EvolutionMethod method, std::vector<Complex> scale)
        : path_(std::move(path)), method_(method), scale_(std::move(scale)) {}

    EvolutionMethod method() const noexcept { return method_; }
    const std::vector<Complex>& scale() const noexcept { return scale_; }
    const CollocatedPath& path() const noexcept { return path_; }
    std::vector<double> times() const { return path_.times(); }
    std::vector<Matrix> values() const {
        std::vector<Matrix> v{path_.start()};
        for (std::size_t i = 0; i < path_.grid().panel_count(); ++i) v.push_back(path_.endpoint(i));
        return v;
    }
    Matrix value_at(double s) const { return path_.value_at(s); }
    const Matrix& final_value() const { return path_.final_value(); }
    double end_time() const { return path_.grid().end(); }

    double tail_bound = 0.0;
    PicardStats stats;

private:
    CollocatedPath path_;
    EvolutionMethod method_;
    std::vector<Complex> scale_;
};

namespace detail {

inline void check_scale(const DisentanglingProblem& problem, std::span<const Complex> scale) {
    if (scale.size() != problem.arity())
        throw PreconditionError("evolution: one scale per family is required");
}

inline std::vector<double> moduli(std::span<const Complex> scale) {
    std::vector<double> m;
    for (auto c : scale) m.push_back(std::abs(c));
    return m;
}

}  // namespace detail

/// Truncated Dyson series of the disentangled exponential with semigroup
/// factors: sum_{|m| <= N} prod_j c_j^{m_j} L_m(t), all merge patterns of
/// each multi-index summed by the graded recursion.
inline Propagator exp_disentangle_dyson_path(const DisentanglingProblem& problem, std::span<const Complex> scale,
                                             double t, int max_degree, const EvolutionOptions& opt = {}) {
    detail::check_scale(problem, scale);
    if (max_degree < 0) throw PreconditionError("exp_disentangle_dyson: negative truncation degree");
    const std::vector<double> ones(problem.arity(), 1.0);
    auto kernel = make_kernel(problem, t, ones, opt.grid);
    GradedRecursion rec(static_cast<int>(problem.arity()), max_degree);
    std::vector<Complex> w;
    bool corrupted = false;
    for (const auto& m : rec.indices()) {
        Complex c = 1.0;
        for (std::size_t j = 0; j < m.size(); ++j) c *= std::pow(scale[j], m[j]);
        if (opt.corrupt_dyson && !corrupted && total_degree(m) == 2) {
            c *= 1.5;
            corrupted = true;
        }
        w.push_back(c);
    }
    auto paths = rec.solve(*kernel, {w}, identity(problem.dim()));
    Propagator out(std::move(paths.front()), EvolutionMethod::dyson_series,
                   std::vector<Complex>(scale.begin(), scale.end()));
    // ||L_m|| <= K prod r_j^{m_j} / m_j!, so the tail is bounded by
    // K (e^{sum |c_j| r_j} - partial sum).
    const auto r = problem.weights();
    double partial = 0.0, x = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) x += std::abs(scale[j]) * r[j];
    double term = 1.0;
    for (int n = 0; n <= max_degree; ++n) {
        partial += term;
        term *= x / (n + 1);
    }
    out.tail_bound = semigroup_bound(problem.generator(), t) * std::max(0.0, std::exp(x) - partial);
    return out;
}

inline Matrix exp_disentangle_dyson(const DisentanglingProblem& problem, std::span<const Complex> scale, double t,
                                    int max_degree, const EvolutionOptions& opt = {}) {
    return exp_disentangle_dyson_path(problem, scale, t, max_degree, opt).final_value();
}

/// Picard fixed-point iteration of the evolution equation. `min_panels` is the
/// least number of collocation panels on [0, t]; `iterations` caps the sweeps
/// per panel.
inline Propagator exp_disentangle_picard(const DisentanglingProblem& problem, std::span<const Complex> scale,
                                         double t, int min_panels = 1, int iterations = 200,
                                         const EvolutionOptions& opt = {}) {
    detail::check_scale(problem, scale);
    if (iterations < 1) throw PreconditionError("exp_disentangle_picard: need at least one iteration");
    EvolutionOptions o = opt;
    if (min_panels > 0 && t > 0.0) o.grid.max_panel_length = std::min(o.grid.max_panel_length, t / min_panels);
    o.picard.max_iterations = iterations;
    const auto mod = detail::moduli(scale);
    auto kernel = make_kernel(problem, t, mod, o.grid);
    PicardStats stats;
    auto path = picard_solve(*kernel, scale, identity(problem.dim()), o.picard, &stats);
    Propagator out(std::move(path), EvolutionMethod::picard_iteration,
                   std::vector<Complex>(scale.begin(), scale.end()));
    out.stats = stats;
    return out;
}

/// ||E(t) - e^{-t alpha} - sum_j int_0^t e^{-(t-s) alpha} c_j A_j(s) E(s) mu_j(ds)||
/// by adaptive Gauss-Legendre bisection split only at the family breakpoints,
/// so the quadrature shares nothing with the propagator's grid.
inline double evolution_residual(const DisentanglingProblem& problem, const Propagator& e, double quad_tol = 1e-11) {
    const double t = e.end_time();
    Matrix rhs = semigroup(problem.generator(), t);
    for (std::size_t j = 0; j < problem.arity(); ++j) {
        const auto& fam = problem.family(j);
        const Complex c = e.scale()[j];
        if (c == Complex(0.0) || fam.is_zero()) continue;
        auto h = [&](double s) -> Matrix {
            return semigroup(problem.generator(), t - s) * (c * fam.value(s)) * e.value_at(s);
        };
        rhs += integrate_time(h, fam.measure(), t, quad_tol, fam.breakpoints());
    }
    return opnorm(Matrix(e.final_value() - rhs));
}

inline double evolution_residual(const DisentanglingProblem& problem, std::span<const Complex> scale, double t) {
    return evolution_residual(problem, exp_disentangle_picard(problem, scale, t));
}

}  // namespace opcalc
