#pragma once

#include "opcalc/errors.hpp"
#include "opcalc/linalg.hpp"
#include "opcalc/measure.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace opcalc {

enum class Interpolation { piecewise_constant, linear };

/// Time-indexed d x d matrix function A(.) on [0, T], sampled on a grid and
/// paired with the measure that attaches its time indices. The weight
/// r = int ||A(s)|| mu(ds) is computed once at construction.
class OperatorFamily {
public:
    OperatorFamily(std::vector<double> times, std::vector<Matrix> samples, Measure measure,
                   Interpolation mode = Interpolation::piecewise_constant,
                   bool self_commuting = false)
        : times_(std::move(times)),
          samples_(std::move(samples)),
          measure_(std::move(measure)),
          mode_(mode),
          self_commuting_(self_commuting) {
        validate();
        weight_ = compute_weight();
    }

    /// Time-independent family A(s) = a on [0, T].
    static OperatorFamily constant(const Matrix& a, Measure measure) {
        const double T = measure.horizon();
        return OperatorFamily({0.0, T}, {a, a}, std::move(measure),
                              Interpolation::piecewise_constant, true);
    }

    Eigen::Index dim() const noexcept { return samples_.front().rows(); }
    double horizon() const noexcept { return measure_.horizon(); }
    const Measure& measure() const noexcept { return measure_; }
    const std::vector<double>& times() const noexcept { return times_; }
    const std::vector<Matrix>& samples() const noexcept { return samples_; }
    Interpolation interpolation() const noexcept { return mode_; }
    bool self_commuting() const noexcept { return self_commuting_; }

    /// r = int_[0,T] ||A(s)|| mu(ds), spectral norm.
    double weight() const noexcept { return weight_; }

    /// True when every sample is zero.
    bool is_zero() const {
        return std::all_of(samples_.begin(), samples_.end(),
                           [](const Matrix& m) { return m.isZero(0.0); });
    }

    Matrix value(double s) const {
        const std::size_t i = interval(s);
        if (mode_ == Interpolation::piecewise_constant || samples_.size() == 1) return samples_[i];
        const double a = times_[i], b = times_[i + 1];
        const double w = (s - a) / (b - a);
        return (1.0 - w) * samples_[i] + w * samples_[i + 1];
    }

    /// max_s ||A(s)||; attained at a grid node for both interpolation modes.
    double sup_norm() const {
        double m = 0.0;
        for (const auto& a : samples_) m = std::max(m, opnorm(a));
        return m;
    }

    /// Points where A(.) or the density may fail to be smooth.
    std::vector<double> breakpoints() const {
        std::vector<double> b = measure_.breakpoints();
        b.insert(b.end(), times_.begin(), times_.end());
        std::sort(b.begin(), b.end());
        b.erase(std::unique(b.begin(), b.end(),
                            [&](double x, double y) { return std::abs(x - y) <= 1e-14 * horizon(); }),
                b.end());
        return b;
    }

    /// Family with every sample multiplied by `lambda`.
    OperatorFamily scaled(Complex lambda) const {
        std::vector<Matrix> s;
        s.reserve(samples_.size());
        for (const auto& a : samples_) s.push_back(lambda * a);
        return OperatorFamily(times_, std::move(s), measure_, mode_, self_commuting_);
    }

    OperatorFamily with_measure(Measure mu) const {
        return OperatorFamily(times_, samples_, std::move(mu), mode_, self_commuting_);
    }

private:
    std::size_t interval(double s) const {
        if (s < -1e-14 * horizon() || s > horizon() * (1 + 1e-14))
            throw DomainError("OperatorFamily: time outside [0, T]");
        if (samples_.size() == 1) return 0;
        auto it = std::upper_bound(times_.begin(), times_.end(), s);
        std::size_t i = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
        return std::min(i, times_.size() - 2);
    }

    void validate() {
        if (samples_.empty() || times_.empty())
            throw InvalidFamily("OperatorFamily: empty sample grid");
        if (samples_.size() != times_.size())
            throw InvalidFamily("OperatorFamily: one sample per grid node is required");
        const auto d = samples_.front().rows();
        if (d <= 0) throw InvalidFamily("OperatorFamily: zero dimension");
        for (const auto& a : samples_)
            if (a.rows() != d || a.cols() != d)
                throw InvalidFamily("OperatorFamily: samples must be square and share one dimension");
        const double T = measure_.horizon();
        if (std::abs(times_.front()) > 1e-14 * T)
            throw InvalidFamily("OperatorFamily: grid must start at 0");
        if (times_.size() > 1 && std::abs(times_.back() - T) > 1e-12 * T)
            throw InvalidFamily("OperatorFamily: grid must end at the measure horizon");
        for (std::size_t i = 1; i < times_.size(); ++i)
            if (!(times_[i] > times_[i - 1]))
                throw InvalidFamily("OperatorFamily: grid must be strictly increasing");
        if (times_.size() > 1) times_.back() = T;
        if (self_commuting_) {
            for (std::size_t i = 0; i < samples_.size(); ++i)
                for (std::size_t j = i + 1; j < samples_.size(); ++j) {
                    const Matrix& a = samples_[i];
                    const Matrix& b = samples_[j];
                    double bound = 1e-12 * opnorm(a) * opnorm(b);
                    if (opnorm(a * b - b * a) > bound)
                        throw InvalidFamily("OperatorFamily: flagged self-commuting but samples " +
                                            std::to_string(i) + " and " + std::to_string(j) +
                                            " do not commute");
                }
        }
    }

    double compute_weight() const {
        if (samples_.size() == 1) return opnorm(samples_[0]) * measure_.total_mass();
        double r = 0.0;
        for (std::size_t i = 0; i + 1 < times_.size(); ++i) {
            const double a = times_[i], b = times_[i + 1];
            if (mode_ == Interpolation::piecewise_constant) {
                r += opnorm(samples_[i]) * (measure_.mass_up_to(b) - measure_.mass_up_to(a));
            } else {
                // ||A(s)|| is only piecewise smooth; split at density pieces too.
                std::vector<double> cuts{a};
                for (double x : measure_.breakpoints())
                    if (x > a && x < b) cuts.push_back(x);
                cuts.push_back(b);
                for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
                    auto f = [&](double s) { return opnorm(value(s)) * measure_.density(s); };
                    r += integrate_interval(f, cuts[k], cuts[k + 1], 1e-13);
                }
            }
        }
        return r;
    }

    std::vector<double> times_;
    std::vector<Matrix> samples_;
    Measure measure_;
    Interpolation mode_;
    bool self_commuting_;
    double weight_ = 0.0;
};

inline double family_weight(const OperatorFamily& fam) { return fam.weight(); }

}  // namespace opcalc
