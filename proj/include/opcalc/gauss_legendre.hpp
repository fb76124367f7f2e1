#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include <Eigen/Core>
#include <complex>

namespace opcalc {

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

namespace detail {

/// Evaluates P_n(x) and P_n'(x) by the three-term recurrence.
inline void legendre_with_derivative(int n, double x, double& p, double& dp) {
    double p0 = 1.0, p1 = x;
    if (n == 0) {
        p = 1.0;
        dp = 0.0;
        return;
    }
    for (int k = 2; k <= n; ++k) {
        double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
    }
    p = p1;
    dp = n * (x * p1 - p0) / (x * x - 1.0);
}

inline GaussRule compute_gauss_rule(int n) {
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        // Tricomi initial guess, then Newton.
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double p = 0, dp = 1;
        for (int it = 0; it < 100; ++it) {
            legendre_with_derivative(n, x, p, dp);
            double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        legendre_with_derivative(n, x, p, dp);
        rule.nodes[n - 1 - i] = x;
        rule.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
}

}  // namespace detail

/// Cached n-point rule; n >= 1.
inline const GaussRule& gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: need n >= 1");
    static std::map<int, GaussRule> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, detail::compute_gauss_rule(n)).first;
    return it->second;
}

/// Legendre polynomial P_n(x).
inline double legendre(int n, double x) {
    if (n == 0) return 1.0;
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
        double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
    }
    return p1;
}

namespace detail {

inline double value_norm(double v) { return std::abs(v); }
inline double value_norm(const std::complex<double>& v) { return std::abs(v); }
template <class Derived>
double value_norm(const Eigen::MatrixBase<Derived>& v) {
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

template <class F>
using integral_t = std::decay_t<std::invoke_result_t<const F&, double>>;

template <class F>
integral_t<F> gauss_panel(const F& f, double a, double b, const GaussRule& rule) {
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    integral_t<F> acc = f(mid + half * rule.nodes[0]) * (half * rule.weights[0]);
    for (std::size_t i = 1; i < rule.nodes.size(); ++i)
        acc += f(mid + half * rule.nodes[i]) * (half * rule.weights[i]);
    return acc;
}

template <class F, class V>
V adaptive_gauss(const F& f, double a, double b, const V& whole, double tol,
                 const GaussRule& rule, int depth) {
    const double m = 0.5 * (a + b);
    V left = gauss_panel(f, a, m, rule);
    V right = gauss_panel(f, m, b, rule);
    V both = left + right;
    if (depth <= 0 || value_norm(both - whole) <= tol) return both;
    return adaptive_gauss(f, a, m, left, 0.5 * tol, rule, depth - 1) +
           adaptive_gauss(f, m, b, right, 0.5 * tol, rule, depth - 1);
}

}  // namespace detail

/// Adaptive composite Gauss-Legendre on [a, b] (bisection until two levels
/// agree to `tol`). Works for scalar and Eigen matrix valued integrands.
template <class F>
detail::integral_t<F> integrate_interval(const F& f, double a, double b, double tol,
                                         int order = 12, int max_depth = 30) {
    const GaussRule& rule = gauss_legendre(order);
    detail::integral_t<F> whole = detail::gauss_panel(f, a, b, rule);
    return detail::adaptive_gauss(f, a, b, whole, tol, rule, max_depth);
}

}  // namespace opcalc
