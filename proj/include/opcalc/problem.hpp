#pragma once

#include "opcalc/errors.hpp"
#include "opcalc/linalg.hpp"
#include "opcalc/operator_family.hpp"
#include "opcalc/power_series.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace opcalc {

inline std::vector<double> family_weights(const std::vector<OperatorFamily>& families) {
    std::vector<double> r;
    r.reserve(families.size());
    for (const auto& f : families) r.push_back(f.weight());
    return r;
}

/// Generator alpha (-alpha generates the semigroup), k operator families, the
/// series g in k variables on the polydisk of the family weights, horizon T and
/// evaluation time t.
class DisentanglingProblem {
public:
    DisentanglingProblem(Matrix generator, std::vector<OperatorFamily> families, PowerSeries g,
                         std::optional<double> time = std::nullopt)
        : generator_(std::move(generator)), families_(std::move(families)), g_(std::move(g)) {
        if (families_.empty()) throw InvalidProblem("DisentanglingProblem: no operator families");
        horizon_ = families_.front().horizon();
        time_ = time.value_or(horizon_);
        const auto d = families_.front().dim();
        if (generator_.rows() != d || generator_.cols() != d)
            throw InvalidProblem("DisentanglingProblem: generator dimension differs from the families");
        for (const auto& f : families_) {
            if (f.dim() != d) throw InvalidProblem("DisentanglingProblem: families differ in dimension");
            if (std::abs(f.horizon() - horizon_) > 1e-14 * horizon_)
                throw InvalidProblem("DisentanglingProblem: families differ in horizon");
        }
        if (!(time_ >= 0.0 && time_ <= horizon_ * (1 + 1e-14)))
            throw InvalidProblem("DisentanglingProblem: time must lie in [0, T]");
        if (g_.arity() != static_cast<int>(families_.size()))
            throw InvalidProblem("DisentanglingProblem: series arity differs from family count");
        const auto w = family_weights(families_);
        for (std::size_t j = 0; j < w.size(); ++j)
            if (std::abs(g_.radii()[j] - w[j]) > 1e-12 * std::max(1.0, w[j]))
                throw InvalidProblem("DisentanglingProblem: series radius " + std::to_string(j + 1) +
                                     " differs from the family weight");
    }

    /// Problem with g = 1 (used where only the families and generator matter).
    static DisentanglingProblem without_series(Matrix generator, std::vector<OperatorFamily> families,
                                               std::optional<double> time = std::nullopt) {
        auto g = PowerSeries::constant(1.0, family_weights(families));
        return DisentanglingProblem(std::move(generator), std::move(families), std::move(g), time);
    }

    const Matrix& generator() const noexcept { return generator_; }
    const std::vector<OperatorFamily>& families() const noexcept { return families_; }
    const OperatorFamily& family(std::size_t j) const { return families_.at(j); }
    const PowerSeries& series() const noexcept { return g_; }
    std::size_t arity() const noexcept { return families_.size(); }
    Eigen::Index dim() const noexcept { return generator_.rows(); }
    double horizon() const noexcept { return horizon_; }
    double time() const noexcept { return time_; }
    std::vector<double> weights() const { return family_weights(families_); }

    DisentanglingProblem with_series(PowerSeries g) const {
        return DisentanglingProblem(generator_, families_, std::move(g), time_);
    }
    DisentanglingProblem at_time(double t) const {
        return DisentanglingProblem(generator_, families_, g_, t);
    }

    /// Union of all family and measure breakpoints, clipped to [0, t].
    std::vector<double> breakpoints(double t) const {
        std::vector<double> b{0.0, t};
        for (const auto& f : families_)
            for (double x : f.breakpoints())
                if (x > 0.0 && x < t) b.push_back(x);
        std::sort(b.begin(), b.end());
        b.erase(std::unique(b.begin(), b.end(),
                            [&](double x, double y) { return std::abs(x - y) <= 1e-13 * std::max(1.0, t); }),
                b.end());
        return b;
    }

private:
    Matrix generator_;
    std::vector<OperatorFamily> families_;
    PowerSeries g_;
    double horizon_ = 0.0;
    double time_ = 0.0;
};

}  // namespace opcalc
