#pragma once

#include "opcalc/combinatorics.hpp"
#include "opcalc/errors.hpp"
#include "opcalc/linalg.hpp"
#include "opcalc/parallel.hpp"
#include "opcalc/power_series.hpp"
#include "opcalc/problem.hpp"
#include "opcalc/propagation.hpp"
#include "opcalc/quadrature.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace opcalc {

/// `full`: n_1!...n_k! times the merge-pattern sum (the disentangling map).
/// `merge_only`: the bare merge-pattern sum.
enum class MonomialForm { full, merge_only };

/// How disentangle_series sums its monomials: pattern by pattern, by the
/// graded recursion over multi-indices, or whichever is cheaper.
enum class SeriesMethod { automatic, patterns, graded };

struct DisentangleOptions {
    SimplexRule rule{SimplexMode::collocation_chain};
    std::uint64_t pattern_budget = 1'000'000;
    MonomialForm form = MonomialForm::full;
    SeriesMethod method = SeriesMethod::automatic;
    /// Above this many patterns in total, `automatic` switches to graded.
    std::uint64_t automatic_pattern_limit = 20'000;
    CollocationOptions grid;
    int workers = 1;
};

struct MonomialResult {
    Matrix value;
    double std_error = 0.0;
    std::uint64_t patterns = 0;
    bool escalated = false;
};

struct DisentangledOperator {
    Matrix value;
    int truncation_degree = 0;
    double tail_bound = 0.0;
    double error_budget = 0.0;
    std::string method;
};

namespace detail {

inline void check_time(const DisentanglingProblem& problem, double t) {
    if (!(t >= 0.0 && t <= problem.horizon() * (1 + 1e-14)))
        throw DomainError("disentangle: t outside [0, T]");
}

}  // namespace detail

/// Disentangled monomial: sum over merge patterns of the ordered-simplex
/// integrals of the time-ordered products, times n_1!...n_k! in full form.
inline MonomialResult disentangle_monomial_detail(const DisentanglingProblem& problem, const MultiIndex& m, double t,
                                                  const DisentangleOptions& opt = {}) {
    detail::check_time(problem, t);
    if (m.size() != problem.arity()) throw PreconditionError("disentangle_monomial: multi-index arity");
    MonomialResult out;
    out.value = Matrix::Zero(problem.dim(), problem.dim());
    for (std::size_t j = 0; j < m.size(); ++j)
        if (m[j] > 0 && problem.family(j).is_zero()) {
            out.patterns = multinomial(m).value_or(0);
            return out;
        }
    const auto fams = std::span<const OperatorFamily>(problem.families());
    std::vector<MergePattern> patterns = enumerate_merge_patterns(m, opt.pattern_budget);
    auto partial = map_chunks<MonomialResult>(patterns.size(), 64, opt.workers, [&](std::size_t b, std::size_t e) {
        MonomialResult r;
        r.value = Matrix::Zero(problem.dim(), problem.dim());
        double var = 0.0;
        for (std::size_t i = b; i < e; ++i) {
            auto res = integrate_ordered_product(opt.rule, patterns[i], fams, t);
            r.value += res.value;
            var += res.std_error * res.std_error;
            r.escalated = r.escalated || res.escalated;
        }
        r.std_error = std::sqrt(var);
        return r;
    });
    double var = 0.0;
    for (const auto& r : partial) {
        out.value += r.value;
        var += r.std_error * r.std_error;
        out.escalated = out.escalated || r.escalated;
    }
    out.std_error = std::sqrt(var);
    out.patterns = patterns.size();
    if (opt.form == MonomialForm::full) {
        const double f = factorial_product(m);
        out.value *= f;
        out.std_error *= f;
    }
    return out;
}

inline Matrix disentangle_monomial(const DisentanglingProblem& problem, const MultiIndex& m, double t,
                                   const DisentangleOptions& opt = {}) {
    return disentangle_monomial_detail(problem, m, t, opt).value;
}

/// Merge-pattern sums L_m(t) of every multi-index up to total degree N,
/// without semigroup factors, by the graded recursion.
inline std::vector<Matrix> merge_sums_graded(const DisentanglingProblem& problem, int max_degree, double t,
                                             const CollocationOptions& grid = {}) {
    const Matrix zero = Matrix::Zero(problem.dim(), problem.dim());
    DisentanglingProblem p0(zero, problem.families(), problem.series(), problem.time());
    const std::vector<double> ones(problem.arity(), 1.0);
    auto kernel = make_kernel(p0, t, ones, grid);
    GradedRecursion rec(static_cast<int>(problem.arity()), max_degree);
    std::vector<Matrix> finals;
    rec.solve(*kernel, {std::vector<Complex>(rec.indices().size(), 0.0)}, identity(problem.dim()), &finals);
    return finals;
}

/// T^t g = sum_m g_m T^t P^m for the problem's series g, truncated at its
/// max degree.
inline DisentangledOperator disentangle_series(const DisentanglingProblem& problem, double t,
                                               const DisentangleOptions& opt = {}) {
    detail::check_time(problem, t);
    const auto& g = problem.series();
    const int n = g.max_degree();
    const auto indices = multi_indices_up_to(g.arity(), n);
    DisentangledOperator out;
    out.value = Matrix::Zero(problem.dim(), problem.dim());
    out.truncation_degree = n;
    const bool full = opt.form == MonomialForm::full;

    std::uint64_t total_patterns = 0;
    bool overflow = false;
    for (const auto& [m, c] : g.coefficients()) {
        auto k = multinomial(m);
        if (!k || *k > opt.pattern_budget) overflow = true;
        else total_patterns += *k;
    }
    SeriesMethod method = opt.method;
    if (method == SeriesMethod::automatic)
        method = (overflow || total_patterns > opt.automatic_pattern_limit) ? SeriesMethod::graded : SeriesMethod::patterns;

    double quad_err = 0.0;
    if (method == SeriesMethod::patterns) {
        out.method = std::string("patterns/") + to_string(opt.rule.mode);
        for (const auto& [m, c] : g.coefficients()) {
            auto r = disentangle_monomial_detail(problem, m, t, opt);
            out.value += c * r.value;
            quad_err += std::abs(c) * (opt.rule.tolerance * static_cast<double>(r.patterns) + 3.0 * r.std_error);
        }
    } else {
        out.method = "graded";
        const auto sums = merge_sums_graded(problem, n, t, opt.grid);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const Complex c = g.coefficient(indices[i]);
            if (c == Complex(0.0)) continue;
            out.value += (full ? c * factorial_product(indices[i]) : c) * sums[i];
            quad_err += std::abs(c) * opt.rule.tolerance * static_cast<double>(multinomial(indices[i]).value_or(1));
        }
    }
    // ||T P^m|| <= r^m in full form, r^m / m! for the bare pattern sum.
    const auto tail = g.tail_bound(!full);
    out.tail_bound = tail.value_or(0.0);
    out.error_budget = quad_err + out.tail_bound;
    return out;
}

/// S_n form (explicit sum over all n! orderings, each integrated by nested
/// Gauss rules) against n_1!...n_k! times the merge-pattern form.
inline double cross_validate_sn_form(const DisentanglingProblem& problem, const MultiIndex& m, double t,
                                     const DisentangleOptions& opt = {}) {
    detail::check_time(problem, t);
    const int n = total_degree(m);
    if (n > 5) throw PreconditionError("cross_validate_sn_form: n = " + std::to_string(n) + " exceeds 5");
    for (std::size_t j = 0; j < problem.arity(); ++j)
        if (!problem.family(j).self_commuting())
            throw PreconditionError("cross_validate_sn_form: family " + std::to_string(j + 1) +
                                    " is not flagged self-commuting");
    if (n == 0) return 0.0;
    const auto fams = std::span<const OperatorFamily>(problem.families());
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    SimplexRule gauss = opt.rule;
    gauss.mode = SimplexMode::iterated_gauss;
    gauss.max_order = std::max(gauss.max_order, n);
    Matrix sn = Matrix::Zero(problem.dim(), problem.dim());
    do {
        // Slot k (k-th earliest time) carries index perm[k], which belongs to
        // block block_of(m, perm[k]).
        MergePattern p{m, std::vector<int>(static_cast<std::size_t>(n))};
        for (int k = 0; k < n; ++k) p.assignment[static_cast<std::size_t>(k)] = block_of(m, perm[static_cast<std::size_t>(k)]);
        sn += integrate_ordered_product(gauss, p, fams, t).value;
    } while (std::next_permutation(perm.begin(), perm.end()));
    DisentangleOptions o = opt;
    o.form = MonomialForm::full;
    if (o.rule.mode == SimplexMode::iterated_gauss) o.rule.mode = SimplexMode::collocation_chain;
    const Matrix pf = disentangle_monomial(problem, m, t, o);
    return opnorm(Matrix(sn - pf));
}

struct ContractionReport {
    double opnorm = 0.0;
    double series_norm = 0.0;
    double error_budget = 0.0;
    bool holds() const { return opnorm <= series_norm + error_budget; }
};

/// (||T^t g||_op, ||g||) for the problem's series.
inline ContractionReport contraction_check(const DisentanglingProblem& problem, double t,
                                           const DisentangleOptions& opt = {}) {
    const auto d = disentangle_series(problem, t, opt);
    return {opnorm(d.value), problem.series().norm(opt.form == MonomialForm::merge_only), d.error_budget};
}

}  // namespace opcalc
