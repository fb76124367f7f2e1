#pragma once

#include "opcalc/collocation.hpp"
#include "opcalc/combinatorics.hpp"
#include "opcalc/errors.hpp"
#include "opcalc/gauss_legendre.hpp"
#include "opcalc/linalg.hpp"
#include "opcalc/measure.hpp"
#include "opcalc/operator_family.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace opcalc {

enum class SimplexMode { iterated_gauss, collocation_chain, monte_carlo };

inline const char* to_string(SimplexMode m) {
    switch (m) {
        case SimplexMode::iterated_gauss: return "iterated-gauss";
        case SimplexMode::collocation_chain: return "collocation-chain";
        case SimplexMode::monte_carlo: return "monte-carlo";
    }
    return "?";
}

struct SimplexRule {
    SimplexMode mode = SimplexMode::iterated_gauss;
    /// Gauss nodes per subinterval and level; 0 picks the count from `degree`.
    int nodes_per_level = 0;
    /// Polynomial degree of the integrand in each time variable (per piece).
    int degree = 1;
    int max_order = 8;
    double tolerance = 1e-8;
    std::uint64_t seed = 20240601;
    std::size_t samples = 200'000;
};

struct SimplexIntegral {
    Matrix value;
    double std_error = 0.0;
    SimplexMode mode_used = SimplexMode::iterated_gauss;
    bool escalated = false;
    std::size_t evaluations = 0;
};

namespace detail {

/// Gauss nodes/weights (density included) on [lo, hi] split at the cuts.
struct NodeSet {
    std::vector<double> s;
    std::vector<double> w;
};

inline NodeSet nodes_on(double lo, double hi, std::span<const double> cuts, const Measure& mu, int q) {
    NodeSet out;
    if (!(hi > lo)) return out;
    std::vector<double> pts{lo};
    for (double c : cuts)
        if (c > lo && c < hi) pts.push_back(c);
    pts.push_back(hi);
    const auto& rule = gauss_legendre(q);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double a = pts[i], b = pts[i + 1];
        if (!(b > a)) continue;
        const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
        for (int k = 0; k < q; ++k) {
            const double s = mid + half * rule.nodes[k];
            out.s.push_back(s);
            out.w.push_back(half * rule.weights[k] * mu.density(s));
        }
    }
    return out;
}

inline std::vector<double> merged_cuts(std::span<const Measure> measures, std::span<const double> extra) {
    std::vector<double> c(extra.begin(), extra.end());
    for (const auto& m : measures)
        for (double x : m.breakpoints()) c.push_back(x);
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    return c;
}

inline int gauss_nodes_for(const SimplexRule& rule, std::size_t n, std::span<const Measure> measures) {
    if (rule.nodes_per_level > 0) return rule.nodes_per_level;
    int dens = 0;
    for (const auto& m : measures) dens = std::max(dens, m.degree());
    // The innermost antiderivatives raise the degree by (degree + density + 1)
    // per level; the outermost integrand has total degree below n times that.
    const int total = static_cast<int>(n) * (rule.degree + dens + 1);
    return std::max(1, (total + 1) / 2 + 1);
}

}  // namespace detail

/// Integral over {0 < s_1 < ... < s_n < t} with slot i weighted by
/// mu_{pattern(i)}(ds_i). `integrand` receives the sorted times. `cuts` lists
/// extra breakpoints of the integrand (family sample times).
template <class F>
SimplexIntegral integrate_ordered_simplex(const SimplexRule& rule, const MergePattern& pattern, const F& integrand,
                                          std::span<const Measure> measures, double t,
                                          std::span<const double> cuts = {}) {
    const std::size_t n = pattern.size();
    for (int j : pattern.assignment)
        if (j < 0 || static_cast<std::size_t>(j) >= measures.size())
            throw PreconditionError("integrate_ordered_simplex: pattern refers to a missing measure");
    for (const auto& m : measures)
        if (t > m.horizon() * (1 + 1e-14) || t < 0.0) throw DomainError("integrate_ordered_simplex: t outside [0, T]");
    SimplexIntegral out;
    std::vector<double> times(n);
    if (n == 0) {
        out.value = integrand(std::span<const double>(times));
        out.evaluations = 1;
        return out;
    }
    SimplexMode mode = rule.mode == SimplexMode::collocation_chain ? SimplexMode::iterated_gauss : rule.mode;
    if (mode == SimplexMode::iterated_gauss && static_cast<int>(n) > rule.max_order) {
        mode = SimplexMode::monte_carlo;
        out.escalated = true;
    }
    out.mode_used = mode;

    if (mode == SimplexMode::iterated_gauss) {
        const auto all_cuts = detail::merged_cuts(measures, cuts);
        const int q = detail::gauss_nodes_for(rule, n, measures);
        std::function<Matrix(std::size_t, double)> level = [&](std::size_t k, double upper) -> Matrix {
            // k counts remaining variables; slot k-1 is integrated over [0, upper].
            const auto& mu = measures[static_cast<std::size_t>(pattern.assignment[k - 1])];
            const auto ns = detail::nodes_on(0.0, upper, all_cuts, mu, q);
            Matrix acc;
            for (std::size_t i = 0; i < ns.s.size(); ++i) {
                if (ns.w[i] == 0.0) continue;
                times[k - 1] = ns.s[i];
                Matrix v = k == 1 ? Matrix(integrand(std::span<const double>(times))) : level(k - 1, ns.s[i]);
                if (k == 1) ++out.evaluations;
                if (acc.size() == 0) acc = ns.w[i] * v;
                else acc += ns.w[i] * v;
            }
            if (acc.size() == 0) {
                // Empty region: evaluate once at the origin only to learn the shape.
                std::fill(times.begin(), times.end(), 0.0);
                Matrix z = integrand(std::span<const double>(times));
                return Matrix::Zero(z.rows(), z.cols());
            }
            return acc;
        };
        out.value = level(n, t);
        return out;
    }

    // Stratified Monte Carlo on the uniform ordered simplex, reweighted by the
    // densities: the first uniform draw of sample i lies in stratum i.
    std::mt19937_64 rng(rule.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const std::size_t N = std::max<std::size_t>(rule.samples, 2);
    const double vol = simplex_volume(static_cast<int>(n), t);
    Matrix sum;
    double sumsq = 0.0;
    std::vector<double> u(n);
    for (std::size_t i = 0; i < N; ++i) {
        u[0] = (static_cast<double>(i) + unif(rng)) / static_cast<double>(N);
        for (std::size_t k = 1; k < n; ++k) u[k] = unif(rng);
        std::sort(u.begin(), u.end());
        double w = vol;
        for (std::size_t k = 0; k < n; ++k) {
            times[k] = t * u[k];
            w *= measures[static_cast<std::size_t>(pattern.assignment[k])].density(times[k]);
        }
        Matrix v = w * Matrix(integrand(std::span<const double>(times)));
        if (sum.size() == 0) sum = v;
        else sum += v;
        sumsq += v.squaredNorm();
    }
    out.evaluations = N;
    out.value = sum / static_cast<double>(N);
    const double mean_sq = sumsq / static_cast<double>(N);
    const double var = std::max(0.0, mean_sq - out.value.squaredNorm());
    out.std_error = std::sqrt(var / static_cast<double>(N - 1));
    return out;
}

/// Time-ordered product integral C_{p(n)}(s_n) ... C_{p(1)}(s_1) over the
/// ordered simplex, with C_j the families. Iterated-gauss mode nests the sums
/// (one matrix product per node); collocation-chain mode integrates the chain
/// F_k(s) = int_0^s C_{p(k)}(u) F_{k-1}(u) mu(du) on a Gauss panel grid.
inline SimplexIntegral integrate_ordered_product(const SimplexRule& rule, const MergePattern& pattern,
                                                 std::span<const OperatorFamily> families, double t) {
    const std::size_t n = pattern.size();
    if (families.empty()) throw PreconditionError("integrate_ordered_product: no families");
    const auto d = families.front().dim();
    std::vector<Measure> measures;
    std::vector<double> cuts;
    int lin = 0;
    for (const auto& f : families) {
        measures.push_back(f.measure());
        for (double x : f.breakpoints()) cuts.push_back(x);
        if (f.interpolation() == Interpolation::linear) lin = 1;
    }
    if (n == 0) {
        SimplexIntegral out;
        out.value = identity(d);
        out.evaluations = 1;
        return out;
    }
    SimplexRule r = rule;
    r.degree = std::max(r.degree, lin);
    const bool escalate = static_cast<int>(n) > rule.max_order && rule.mode != SimplexMode::monte_carlo;

    if (rule.mode == SimplexMode::monte_carlo || escalate) {
        r.mode = SimplexMode::monte_carlo;
        r.max_order = static_cast<int>(n);
        auto f = [&](std::span<const double> s) {
            return time_ordered_product(pattern, families, s, d);
        };
        auto res = integrate_ordered_simplex(r, pattern, f, measures, t, cuts);
        res.escalated = escalate;
        return res;
    }

    SimplexIntegral out;
    out.mode_used = rule.mode;
    if (rule.mode == SimplexMode::iterated_gauss) {
        const auto all_cuts = detail::merged_cuts(measures, cuts);
        const int q = detail::gauss_nodes_for(r, n, measures);
        std::function<Matrix(std::size_t, double)> level = [&](std::size_t k, double upper) -> Matrix {
            const auto& fam = families[static_cast<std::size_t>(pattern.assignment[k - 1])];
            const auto ns = detail::nodes_on(0.0, upper, all_cuts, fam.measure(), q);
            Matrix acc = Matrix::Zero(d, d);
            for (std::size_t i = 0; i < ns.s.size(); ++i) {
                if (ns.w[i] == 0.0) continue;
                ++out.evaluations;
                if (k == 1) acc += ns.w[i] * fam.value(ns.s[i]);
                else acc += ns.w[i] * (fam.value(ns.s[i]) * level(k - 1, ns.s[i]));
            }
            return acc;
        };
        out.value = level(n, t);
        return out;
    }

    // Collocation chain: exact whenever every level's integrand is a
    // polynomial of degree below p on each panel.
    int dens = 0;
    for (const auto& m : measures) dens = std::max(dens, m.degree());
    const int p = std::clamp(static_cast<int>(n) * (r.degree + dens + 1) + 2, 4, 48);
    std::vector<double> bps{0.0, t};
    for (double x : detail::merged_cuts(measures, cuts))
        if (x > 0.0 && x < t) bps.push_back(x);
    CollocationGrid grid(bps, std::max(t, 1e-300), p);
    const auto& S = grid.cumulative_matrix();
    const auto& ref = grid.reference_rule();
    std::vector<Matrix> at_a(n + 1, Matrix::Zero(d, d));
    at_a[0] = identity(d);
    std::vector<std::vector<Matrix>> vals(n + 1, std::vector<Matrix>(p, Matrix::Zero(d, d)));
    std::vector<Matrix> w(p);
    for (std::size_t i = 0; i < grid.panel_count(); ++i) {
        const auto& pn = grid.panel(i);
        const double half = 0.5 * (pn.b - pn.a);
        for (int k = 0; k < p; ++k) vals[0][k] = at_a[0];
        for (std::size_t lev = 1; lev <= n; ++lev) {
            const auto& fam = families[static_cast<std::size_t>(pattern.assignment[lev - 1])];
            for (int k = 0; k < p; ++k) {
                const double u = grid.node(i, k);
                w[k] = (fam.measure().density(u) * fam.value(u)) * vals[lev - 1][k];
            }
            Matrix end = at_a[lev];
            for (int row = 0; row < p; ++row) {
                Matrix v = at_a[lev];
                for (int k = 0; k < p; ++k) v += (half * S(row, k)) * w[k];
                vals[lev][row] = std::move(v);
            }
            for (int k = 0; k < p; ++k) end += (half * ref.weights[k]) * w[k];
            at_a[lev] = std::move(end);
        }
        out.evaluations += static_cast<std::size_t>(p) * n;
    }
    out.value = at_a[n];
    return out;
}

/// int_[0,t] h(s) mu(ds) for scalar or matrix-valued h; `cuts` are extra
/// breakpoints where h may jump.
template <class F>
auto integrate_time(const F& h, const Measure& mu, double t, double quad_tol = 1e-10,
                    std::span<const double> cuts = {}) {
    if (t > mu.horizon() * (1 + 1e-14) || t < 0.0) throw DomainError("integrate_time: t outside [0, T]");
    std::vector<double> pts{0.0};
    for (double c : detail::merged_cuts(std::span<const Measure>(&mu, 1), cuts))
        if (c > 0.0 && c < t) pts.push_back(c);
    pts.push_back(t);
    auto g = [&](double s) { return detail::integral_t<F>(h(s) * mu.density(s)); };
    detail::integral_t<F> total = integrate_interval(g, pts[0], pts[0], quad_tol);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        if (pts[i + 1] > pts[i])
            total += integrate_interval(g, pts[i], pts[i + 1], quad_tol * (pts[i + 1] - pts[i]) / t);
    return total;
}

}  // namespace opcalc
