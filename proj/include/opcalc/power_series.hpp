#pragma once

#include "opcalc/contour.hpp"
#include "opcalc/errors.hpp"
#include "opcalc/linalg.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace opcalc {

using MultiIndex = std::vector<int>;

inline int total_degree(const MultiIndex& m) {
    int s = 0;
    for (int v : m) s += v;
    return s;
}

inline std::string to_string(const MultiIndex& m) {
    std::string s = "(";
    for (std::size_t i = 0; i < m.size(); ++i) s += (i ? "," : "") + std::to_string(m[i]);
    return s + ")";
}

/// All multi-indices of the given arity with total degree exactly `degree`,
/// in lexicographic order.
inline std::vector<MultiIndex> multi_indices_of_degree(int arity, int degree) {
    std::vector<MultiIndex> out;
    if (arity == 0) {
        if (degree == 0) out.push_back({});
        return out;
    }
    MultiIndex m(arity, 0);
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == arity - 1) {
            m[pos] = left;
            out.push_back(m);
            return;
        }
        for (int v = left; v >= 0; --v) {
            m[pos] = v;
            rec(pos + 1, left - v);
        }
    };
    rec(0, degree);
    return out;
}

/// Multi-indices with total degree <= max_degree, graded then lexicographic.
inline std::vector<MultiIndex> multi_indices_up_to(int arity, int max_degree) {
    std::vector<MultiIndex> out;
    for (int d = 0; d <= max_degree; ++d) {
        auto level = multi_indices_of_degree(arity, d);
        out.insert(out.end(), level.begin(), level.end());
    }
    return out;
}

/// m_1! ... m_k! accumulated in floating point.
inline double factorial_product(const MultiIndex& m) {
    double f = 1.0;
    for (int v : m)
        for (int i = 2; i <= v; ++i) f *= i;
    return f;
}

/// Sparse multivariate Taylor series truncated at total degree N, carrying the
/// polydisk radii that define its algebra norm. Optionally carries a closed-form
/// coefficient generator (enables tail bounds) and a closed-form evaluator.
class PowerSeries {
public:
    using Coefficients = std::map<MultiIndex, Complex>;
    using CoefficientFn = std::function<Complex(const MultiIndex&)>;
    using EvaluatorFn = std::function<Complex(std::span<const Complex>)>;

    PowerSeries(int arity, Coefficients coeffs, std::vector<double> radii, int max_degree)
        : arity_(arity), coeffs_(std::move(coeffs)), radii_(std::move(radii)), max_degree_(max_degree) {
        if (arity_ < 1) throw InvalidProblem("PowerSeries: arity must be positive");
        if (static_cast<int>(radii_.size()) != arity_)
            throw InvalidProblem("PowerSeries: one radius per variable is required");
        for (double r : radii_)
            if (!(r >= 0.0)) throw InvalidProblem("PowerSeries: radii must be nonnegative");
        for (auto it = coeffs_.begin(); it != coeffs_.end();) {
            if (static_cast<int>(it->first.size()) != arity_)
                throw InvalidProblem("PowerSeries: multi-index arity mismatch " + to_string(it->first));
            for (int v : it->first)
                if (v < 0) throw InvalidProblem("PowerSeries: negative exponent");
            if (total_degree(it->first) > max_degree_)
                throw InvalidProblem("PowerSeries: coefficient above max degree " + to_string(it->first));
            if (it->second == Complex(0.0)) it = coeffs_.erase(it);
            else ++it;
        }
    }

    /// Truncates `gen` at total degree N.
    static PowerSeries from_generator(int arity, CoefficientFn gen, std::vector<double> radii,
                                      int max_degree, EvaluatorFn closed_form = {}) {
        Coefficients c;
        for (const auto& m : multi_indices_up_to(arity, max_degree)) c[m] = gen(m);
        PowerSeries s(arity, std::move(c), std::move(radii), max_degree);
        s.generator_ = std::move(gen);
        s.closed_form_ = std::move(closed_form);
        return s;
    }

    /// exp(z_1 + ... + z_k).
    static PowerSeries exp_sum(std::vector<double> radii, int max_degree) {
        const int k = static_cast<int>(radii.size());
        return from_generator(
            k, [](const MultiIndex& m) { return Complex(1.0 / factorial_product(m)); },
            std::move(radii), max_degree, [](std::span<const Complex> z) {
                Complex s = 0.0;
                for (auto v : z) s += v;
                return std::exp(s);
            });
    }

    /// prod_j 1 / (1 - z_j); every coefficient equals 1.
    static PowerSeries geometric(std::vector<double> radii, int max_degree) {
        const int k = static_cast<int>(radii.size());
        return from_generator(
            k, [](const MultiIndex&) { return Complex(1.0); }, std::move(radii), max_degree,
            [](std::span<const Complex> z) {
                Complex p = 1.0;
                for (auto v : z) p /= (1.0 - v);
                return p;
            });
    }

    /// The constant series g = c.
    static PowerSeries constant(Complex c, std::vector<double> radii) {
        const int k = static_cast<int>(radii.size());
        return PowerSeries(k, {{MultiIndex(k, 0), c}}, std::move(radii), 0);
    }

    int arity() const noexcept { return arity_; }
    int max_degree() const noexcept { return max_degree_; }
    const std::vector<double>& radii() const noexcept { return radii_; }
    const Coefficients& coefficients() const noexcept { return coeffs_; }
    bool has_generator() const noexcept { return static_cast<bool>(generator_); }
    bool has_closed_form() const noexcept { return static_cast<bool>(closed_form_); }
    const CoefficientFn& generator() const noexcept { return generator_; }

    Complex coefficient(const MultiIndex& m) const {
        auto it = coeffs_.find(m);
        return it == coeffs_.end() ? Complex(0.0) : it->second;
    }

    /// Same series with coefficients above total degree N dropped.
    PowerSeries truncated(int max_degree) const {
        PowerSeries s = *this;
        s.max_degree_ = std::min(max_degree_, max_degree);
        for (auto it = s.coeffs_.begin(); it != s.coeffs_.end();) {
            if (total_degree(it->first) > s.max_degree_) it = s.coeffs_.erase(it);
            else ++it;
        }
        return s;
    }

    PowerSeries with_radii(std::vector<double> radii) const {
        PowerSeries s = *this;
        if (static_cast<int>(radii.size()) != arity_)
            throw InvalidProblem("PowerSeries: one radius per variable is required");
        s.radii_ = std::move(radii);
        return s;
    }

    /// Evaluates the closed form when present, otherwise the stored polynomial.
    Complex operator()(std::span<const Complex> z) const {
        if (closed_form_) return closed_form_(z);
        return evaluate_truncated(z);
    }

    Complex evaluate_truncated(std::span<const Complex> z) const {
        Complex s = 0.0;
        for (const auto& [m, c] : coeffs_) {
            Complex term = c;
            for (int j = 0; j < arity_; ++j)
                for (int p = 0; p < m[j]; ++p) term *= z[j];
            s += term;
        }
        return s;
    }

    /// sum |a_m| r^m, optionally dividing each term by m_1!...m_k!.
    double norm(bool factorial_weighted = false) const {
        double s = 0.0;
        for (const auto& [m, c] : coeffs_) s += term_weight(m, c, factorial_weighted);
        return s;
    }

    /// sum_{|m| > N} |a_m| r^m from the generator; nullopt without one and
    /// +inf when the tail does not visibly converge. With `factorial_weighted`
    /// each term is divided by m_1!...m_k! (bound for reduced disentangling).
    std::optional<double> tail_bound(bool factorial_weighted = false) const {
        if (!generator_) return std::nullopt;
        const int extra = arity_ <= 2 ? 400 : 60;
        double tail = 0.0;
        int quiet_levels = 0;
        for (int d = max_degree_ + 1; d <= max_degree_ + extra; ++d) {
            double level = 0.0;
            for (const auto& m : multi_indices_of_degree(arity_, d))
                level += term_weight(m, generator_(m), factorial_weighted);
            tail += level;
            if (!std::isfinite(tail)) return INFINITY;
            if (level <= 1e-17 * tail || level == 0.0) {
                if (++quiet_levels >= 3) return tail;
            } else {
                quiet_levels = 0;
            }
        }
        return INFINITY;
    }

private:
    double term_weight(const MultiIndex& m, Complex c, bool factorial_weighted) const {
        double w = std::abs(c);
        for (int j = 0; j < arity_ && w != 0.0; ++j) w *= std::pow(radii_[j], m[j]);
        if (factorial_weighted) w /= factorial_product(m);
        return w;
    }

    int arity_;
    Coefficients coeffs_;
    std::vector<double> radii_;
    int max_degree_;
    CoefficientFn generator_;
    EvaluatorFn closed_form_;
};

inline double series_norm(const PowerSeries& f) { return f.norm(); }

/// Taylor coefficient a_m of an analytic function by the Cauchy formula,
/// trapezoidal rule with M nodes per circle |xi_j| = radii_j. A variable with
/// zero radius is frozen at 0, which is only valid for m_j = 0.
template <class F>
Complex series_coefficient_via_cauchy(const F& f, const MultiIndex& m, const std::vector<double>& radii,
                                      int nodes_per_circle = 64) {
    if (m.size() != radii.size())
        throw InvalidProblem("series_coefficient_via_cauchy: multi-index and radii differ in length");
    std::vector<std::size_t> live;
    std::vector<double> live_radii;
    for (std::size_t j = 0; j < radii.size(); ++j) {
        if (radii[j] > 0.0) {
            live.push_back(j);
            live_radii.push_back(radii[j]);
        } else if (m[j] > 0) {
            throw DegenerateContour("series_coefficient_via_cauchy: zero radius for variable " +
                                    std::to_string(j + 1) + " with positive exponent");
        }
    }
    std::vector<Complex> z(radii.size(), Complex(0.0));
    auto integrand = [&](std::span<const Complex> xi) {
        Complex w = 1.0;
        for (std::size_t k = 0; k < live.size(); ++k) {
            z[live[k]] = xi[k];
            w *= std::pow(xi[k], -m[live[k]]);
        }
        return Complex(f(std::span<const Complex>(z)) * w);
    };
    return integrate_polydisk_contour(integrand, live_radii, nodes_per_circle);
}

}  // namespace opcalc
