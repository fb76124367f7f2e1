#pragma once

#include "opcalc/errors.hpp"
#include "opcalc/gauss_legendre.hpp"
#include "opcalc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace opcalc {

/// Finite nonnegative continuous measure on [0, T] given by a piecewise
/// polynomial density against Lebesgue measure. No atoms.
class Measure {
public:
    enum class Kind { lebesgue, uniform_probability, density };

    /// One polynomial piece; `coeffs[k]` multiplies s^k (global time variable).
    struct Piece {
        double from;
        double to;
        std::vector<double> coeffs;
    };

    static Measure lebesgue(double horizon) {
        return Measure(Kind::lebesgue, horizon, {{0.0, horizon, {1.0}}});
    }

    static Measure uniform_probability(double horizon) {
        return Measure(Kind::uniform_probability, horizon, {{0.0, horizon, {1.0 / horizon}}});
    }

    /// Pieces must tile [0, horizon] in order.
    static Measure from_density(double horizon, std::vector<Piece> pieces) {
        return Measure(Kind::density, horizon, std::move(pieces));
    }

    Kind kind() const noexcept { return kind_; }
    double horizon() const noexcept { return horizon_; }
    double total_mass() const noexcept { return total_mass_; }
    const std::vector<Piece>& pieces() const noexcept { return pieces_; }

    bool is_probability(double tol = 1e-12) const {
        return std::abs(total_mass_ - 1.0) <= tol;
    }

    /// Highest polynomial degree over the pieces.
    int degree() const {
        int d = 0;
        for (const auto& p : pieces_) d = std::max<int>(d, static_cast<int>(p.coeffs.size()) - 1);
        return d;
    }

    /// Piece boundaries, including 0 and T.
    std::vector<double> breakpoints() const {
        std::vector<double> b;
        b.reserve(pieces_.size() + 1);
        for (const auto& p : pieces_) b.push_back(p.from);
        b.push_back(horizon_);
        return b;
    }

    /// Density value; right-continuous at interior breakpoints, left-continuous at T.
    double density(double s) const {
        return eval_piece(piece_index(s), s);
    }

    /// Density on a given piece (used where the caller already knows the panel).
    double density_on_piece(std::size_t piece, double s) const { return eval_piece(piece, s); }

    std::size_t piece_index(double s) const {
        if (s < 0.0 || s > horizon_) throw DomainError("Measure: time outside [0, T]");
        auto it = std::upper_bound(pieces_.begin(), pieces_.end(), s,
                                   [](double v, const Piece& p) { return v < p.from; });
        std::size_t idx = static_cast<std::size_t>(it - pieces_.begin());
        return idx == 0 ? 0 : idx - 1;
    }

    /// Mass of [0, t].
    double mass_up_to(double t) const {
        double m = 0.0;
        for (const auto& p : pieces_) {
            if (p.from >= t) break;
            m += poly_integral(p.coeffs, p.from, std::min(p.to, t));
        }
        return m;
    }

private:
    Measure(Kind kind, double horizon, std::vector<Piece> pieces)
        : kind_(kind), horizon_(horizon), pieces_(std::move(pieces)) {
        if (!(horizon_ > 0.0) || !std::isfinite(horizon_))
            throw InvalidMeasure("Measure: horizon must be a positive finite number");
        if (pieces_.empty()) throw InvalidMeasure("Measure: no density pieces");
        double expect = 0.0;
        for (const auto& p : pieces_) {
            if (std::abs(p.from - expect) > 1e-14 * horizon_ || !(p.to > p.from))
                throw InvalidMeasure("Measure: pieces must tile [0, T] in increasing order");
            if (p.coeffs.empty()) throw InvalidMeasure("Measure: empty polynomial piece");
            expect = p.to;
        }
        if (std::abs(expect - horizon_) > 1e-14 * horizon_)
            throw InvalidMeasure("Measure: pieces must end at the horizon");
        pieces_.back().to = horizon_;
        check_nonnegative();
        total_mass_ = mass_up_to(horizon_);
    }

    double eval_piece(std::size_t i, double s) const {
        const auto& c = pieces_[i].coeffs;
        double v = 0.0;
        for (auto k = c.size(); k-- > 0;) v = v * s + c[k];
        return v;
    }

    static double poly_integral(const std::vector<double>& c, double a, double b) {
        double fa = 0.0, fb = 0.0;
        for (auto k = c.size(); k-- > 0;) {
            fa = fa * a + c[k] / static_cast<double>(k + 1);
            fb = fb * b + c[k] / static_cast<double>(k + 1);
        }
        return fb * b - fa * a;
    }

    void check_nonnegative() const {
        constexpr int samples = 256;
        for (std::size_t i = 0; i < pieces_.size(); ++i) {
            const auto& p = pieces_[i];
            double scale = 0.0;
            for (double c : p.coeffs) scale = std::max(scale, std::abs(c));
            for (int k = 0; k <= samples; ++k) {
                double s = p.from + (p.to - p.from) * k / samples;
                if (eval_piece(i, s) < -1e-13 * std::max(1.0, scale))
                    throw InvalidMeasure("Measure: negative density detected at s = " +
                                         std::to_string(s));
            }
        }
    }

    Kind kind_;
    double horizon_;
    std::vector<Piece> pieces_;
    double total_mass_ = 0.0;
};

inline const char* to_string(Measure::Kind k) {
    switch (k) {
        case Measure::Kind::lebesgue: return "lebesgue";
        case Measure::Kind::uniform_probability: return "uniform-probability";
        case Measure::Kind::density: return "density";
    }
    return "?";
}

/// Integral of h against mu over [0, t]; adaptive Gauss-Legendre per density
/// piece. `h` may return a scalar or an Eigen matrix.
template <class F>
auto measure_integrate(const Measure& mu, const F& h, double t, double quad_tol = 1e-10) {
    if (t > mu.horizon() * (1 + 1e-14))
        throw DomainError("measure_integrate: t exceeds the horizon");
    if (t < 0.0) throw DomainError("measure_integrate: negative t");
    using V = detail::integral_t<F>;
    V total = h(0.0) * 0.0;
    const auto& pieces = mu.pieces();
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        const double a = pieces[i].from;
        if (a >= t) break;
        const double b = std::min(pieces[i].to, t);
        auto weighted = [&](double s) -> V { return h(s) * mu.density_on_piece(i, s); };
        total += integrate_interval(weighted, a, b, quad_tol * (b - a) / std::max(t, 1e-300));
    }
    return total;
}

}  // namespace opcalc
