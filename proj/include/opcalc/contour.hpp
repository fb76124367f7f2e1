#pragma once

#include "opcalc/errors.hpp"
#include "opcalc/gauss_legendre.hpp"
#include "opcalc/linalg.hpp"
#include "opcalc/parallel.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <type_traits>
#include <vector>

namespace opcalc {

/// Equispaced nodes on the torus |xi_j| = radii_j, M per circle, enumerated
/// with variable 0 varying slowest.
class TorusGrid {
public:
    TorusGrid(std::vector<double> radii, int nodes_per_circle)
        : radii_(std::move(radii)), m_(nodes_per_circle) {
        if (m_ < 1) throw DegenerateContour("contour: need at least one node per circle");
        for (std::size_t j = 0; j < radii_.size(); ++j)
            if (!(radii_[j] > 0.0))
                throw DegenerateContour("contour: radius of variable " + std::to_string(j + 1) +
                                        " is zero");
        total_ = 1;
        for (std::size_t j = 0; j < radii_.size(); ++j) total_ *= static_cast<std::size_t>(m_);
        roots_.resize(m_);
        for (int k = 0; k < m_; ++k)
            roots_[k] = std::polar(1.0, 2.0 * std::numbers::pi * k / m_);
    }

    std::size_t size() const noexcept { return total_; }
    std::size_t arity() const noexcept { return radii_.size(); }
    int nodes_per_circle() const noexcept { return m_; }
    const std::vector<double>& radii() const noexcept { return radii_; }

    /// Writes the point with flat index `idx` into `xi`.
    void point(std::size_t idx, std::span<Complex> xi) const {
        for (std::size_t j = radii_.size(); j-- > 0;) {
            xi[j] = radii_[j] * roots_[idx % m_];
            idx /= m_;
        }
    }

    /// Trapezoid weight of each node for (2 pi i)^{-n} oint ... dxi / xi.
    double weight() const noexcept { return 1.0 / static_cast<double>(total_); }

private:
    std::vector<double> radii_;
    int m_;
    std::size_t total_ = 1;
    std::vector<Complex> roots_;
};

/// Trapezoidal approximation of (2 pi i)^{-n} oint...oint F(xi) xi_1^{-1}...xi_n^{-1} dxi
/// over |xi_j| = radii_j, i.e. the mean of F over the torus nodes. `F` maps a
/// span of n complex points to a matrix (or scalar).
template <class F>
auto integrate_polydisk_contour(const F& fn, const std::vector<double>& radii, int nodes_per_circle,
                                int workers = 1) {
    using V = std::decay_t<std::invoke_result_t<const F&, std::span<const Complex>>>;
    TorusGrid grid(radii, nodes_per_circle);
    const std::size_t n = grid.arity();
    auto partials = map_chunks<std::optional<V>>(
        grid.size(), 256, workers, [&](std::size_t b, std::size_t e) {
            std::vector<Complex> xi(n);
            std::optional<V> acc;
            for (std::size_t i = b; i < e; ++i) {
                grid.point(i, xi);
                V v = fn(std::span<const Complex>(xi));
                if (acc) *acc += v;
                else acc.emplace(std::move(v));
            }
            return acc;
        });
    V total = *partials.front();
    for (std::size_t c = 1; c < partials.size(); ++c) total += *partials[c];
    return V(total * grid.weight());
}

}  // namespace opcalc
