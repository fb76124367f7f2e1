#pragma once

#include "opcalc/errors.hpp"
#include "opcalc/gauss_legendre.hpp"
#include "opcalc/linalg.hpp"
#include "opcalc/measure.hpp"
#include "opcalc/operator_family.hpp"
#include "opcalc/parallel.hpp"
#include "opcalc/power_series.hpp"
#include "opcalc/problem.hpp"
#include "opcalc/reduced.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace opcalc {

/// Uniform spatial grid x_i = x_min + i h, i = 0..n-1.
struct SpatialGrid {
    double x_min = -8.0;
    double h = 0.05;
    std::size_t n = 321;

    static SpatialGrid covering(double lo, double hi, double h) {
        const auto n = static_cast<std::size_t>(std::llround((hi - lo) / h)) + 1;
        return {lo, h, n};
    }
    static SpatialGrid with_points(double lo, double hi, std::size_t n) {
        return {lo, (hi - lo) / static_cast<double>(n - 1), n};
    }
    double x(std::size_t i) const { return x_min + h * static_cast<double>(i); }
    double x_max() const { return x(n - 1); }
    std::vector<double> points() const {
        std::vector<double> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = x(i);
        return p;
    }
};

/// Potential sampled on a spatial grid (and, if time-dependent, on a time
/// grid), linearly interpolated, constant beyond the spatial grid edges.
class Potential {
public:
    enum class Kind { time_independent, time_dependent };

    static Potential time_independent(SpatialGrid grid, std::vector<double> values) {
        if (values.size() != grid.n) throw PreconditionError("Potential: one value per grid point");
        Potential v;
        v.kind_ = Kind::time_independent;
        v.grid_ = grid;
        v.times_ = {0.0};
        v.values_ = {std::move(values)};
        v.finish();
        return v;
    }

    static Potential time_independent(SpatialGrid grid, const std::function<double(double)>& f) {
        std::vector<double> v(grid.n);
        for (std::size_t i = 0; i < grid.n; ++i) v[i] = f(grid.x(i));
        return time_independent(grid, std::move(v));
    }

    /// values[k][i] = V(times[k], x_i).
    static Potential time_dependent(SpatialGrid grid, std::vector<double> times, std::vector<std::vector<double>> values) {
        if (times.size() < 2 || values.size() != times.size())
            throw PreconditionError("Potential: need at least two time samples, one row each");
        for (std::size_t k = 0; k + 1 < times.size(); ++k)
            if (!(times[k + 1] > times[k])) throw PreconditionError("Potential: time grid must increase");
        for (const auto& row : values)
            if (row.size() != grid.n) throw PreconditionError("Potential: one value per grid point");
        Potential v;
        v.kind_ = Kind::time_dependent;
        v.grid_ = grid;
        v.times_ = std::move(times);
        v.values_ = std::move(values);
        v.finish();
        return v;
    }

    static Potential time_dependent(SpatialGrid grid, std::vector<double> times,
                                    const std::function<double(double, double)>& f) {
        std::vector<std::vector<double>> v(times.size(), std::vector<double>(grid.n));
        for (std::size_t k = 0; k < times.size(); ++k)
            for (std::size_t i = 0; i < grid.n; ++i) v[k][i] = f(times[k], grid.x(i));
        return time_dependent(grid, std::move(times), std::move(v));
    }

    Kind kind() const noexcept { return kind_; }
    const SpatialGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& times() const noexcept { return times_; }
    const std::vector<std::vector<double>>& samples() const noexcept { return values_; }
    double sup_bound() const noexcept { return sup_; }
    /// int_0^T ||V(s, .)||_inf ds over the time grid (zero span when time-independent).
    double mixed_norm() const noexcept { return mixed_; }

    /// V(x) on time row k.
    double at_row(std::size_t k, double x) const {
        const auto& row = values_[k];
        const double u = (x - grid_.x_min) / grid_.h;
        if (u <= 0.0) return row.front();
        if (u >= static_cast<double>(grid_.n - 1)) return row.back();
        const auto i = static_cast<std::size_t>(u);
        const double w = u - static_cast<double>(i);
        return row[i] + w * (row[i + 1] - row[i]);
    }

    double operator()(double s, double x) const {
        if (kind_ == Kind::time_independent) return at_row(0, x);
        if (s <= times_.front()) return at_row(0, x);
        if (s >= times_.back()) return at_row(times_.size() - 1, x);
        const auto it = std::upper_bound(times_.begin(), times_.end(), s);
        const std::size_t k = static_cast<std::size_t>(it - times_.begin()) - 1;
        const double w = (s - times_[k]) / (times_[k + 1] - times_[k]);
        return (1.0 - w) * at_row(k, x) + w * at_row(k + 1, x);
    }

    /// Spatial samples at time s (time-linear interpolation of the rows).
    std::vector<double> row_at(double s) const {
        std::vector<double> r(grid_.n);
        for (std::size_t i = 0; i < grid_.n; ++i) r[i] = (*this)(s, grid_.x(i));
        return r;
    }

    /// V with every sample multiplied by c.
    Potential scaled(double c) const {
        Potential v = *this;
        for (auto& row : v.values_)
            for (auto& x : row) x *= c;
        v.finish();
        return v;
    }

private:
    void finish() {
        sup_ = 0.0;
        std::vector<double> row_sup;
        for (const auto& row : values_) {
            double m = 0.0;
            for (double x : row) m = std::max(m, std::abs(x));
            row_sup.push_back(m);
            sup_ = std::max(sup_, m);
        }
        mixed_ = 0.0;
        // ||V(s,.)||_inf is convex in s between rows (max of linear functions),
        // so the trapezoid over the time grid bounds it from above.
        for (std::size_t k = 0; k + 1 < times_.size(); ++k)
            mixed_ += 0.5 * (times_[k + 1] - times_[k]) * (row_sup[k] + row_sup[k + 1]);
    }

    Kind kind_ = Kind::time_independent;
    SpatialGrid grid_;
    std::vector<double> times_;
    std::vector<std::vector<double>> values_;
    double sup_ = 0.0;
    double mixed_ = 0.0;
};

/// P Brownian paths on [0, t], m steps each, starting at 0; increments are
/// independent N(0, t/m) draws from a seeded mt19937_64, path by path.
class PathEnsemble {
public:
    PathEnsemble(std::size_t paths, std::size_t steps, double t, std::uint64_t seed)
        : p_(paths), m_(steps), t_(t), seed_(seed) {
        if (paths < 1 || steps < 1) throw PreconditionError("sample_paths: need P >= 1 and m >= 1");
        if (!(t > 0.0)) throw DomainError("sample_paths: horizon must be positive");
        inc_.resize(p_ * m_);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, std::sqrt(t / static_cast<double>(m_)));
        for (auto& x : inc_) x = normal(rng);
    }

    std::size_t paths() const noexcept { return p_; }
    std::size_t steps() const noexcept { return m_; }
    double horizon() const noexcept { return t_; }
    double dt() const noexcept { return t_ / static_cast<double>(m_); }
    std::uint64_t seed() const noexcept { return seed_; }
    std::span<const double> increments(std::size_t path) const { return {inc_.data() + path * m_, m_}; }
    const std::vector<double>& increments() const noexcept { return inc_; }

    /// y(k dt) for k = 0..m.
    void positions(std::size_t path, std::vector<double>& y) const {
        y.resize(m_ + 1);
        y[0] = 0.0;
        const double* d = inc_.data() + path * m_;
        for (std::size_t k = 0; k < m_; ++k) y[k + 1] = y[k] + d[k];
    }

    /// y at the step nearest below s.
    double position_at(std::size_t path, double s) const {
        const auto k = std::min(m_, static_cast<std::size_t>(std::floor(s / dt() + 1e-9)));
        double y = 0.0;
        for (std::size_t i = 0; i < k; ++i) y += inc_[path * m_ + i];
        return y;
    }

private:
    std::size_t p_, m_;
    double t_;
    std::uint64_t seed_;
    std::vector<double> inc_;
};

inline PathEnsemble sample_paths(std::size_t paths, std::size_t steps, double t, std::uint64_t seed) {
    return PathEnsemble(paths, steps, t, seed);
}

using Field = std::function<double(double)>;

/// (2 pi t)^{-1/2} int psi(u) e^{-(x-u)^2 / 2t} du by the trapezoid rule on the
/// grid carrying psi; returned at the requested points.
inline std::vector<double> heat_apply(std::span<const double> psi, const SpatialGrid& grid, double t,
                                      std::span<const double> xs) {
    if (!(t > 0.0)) throw DomainError("heat_apply: t must be positive");
    if (psi.size() != grid.n) throw PreconditionError("heat_apply: psi must be sampled on the grid");
    std::vector<double> out(xs.size(), 0.0);
    const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi * t);
    for (std::size_t k = 0; k < xs.size(); ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < grid.n; ++i) {
            const double w = (i == 0 || i + 1 == grid.n) ? 0.5 : 1.0;
            const double d = xs[k] - grid.x(i);
            s += w * psi[i] * std::exp(-d * d / (2.0 * t));
        }
        out[k] = c * grid.h * s;
    }
    return out;
}

inline std::vector<double> heat_apply(const Field& psi, const SpatialGrid& grid, double t, std::span<const double> xs) {
    std::vector<double> v(grid.n);
    for (std::size_t i = 0; i < grid.n; ++i) v[i] = psi(grid.x(i));
    return heat_apply(v, grid, t, xs);
}

/// -(1/2) times the Dirichlet second-difference Laplacian on a spatial grid,
/// with matrix-exponential propagators.
class GridOracle {
public:
    explicit GridOracle(SpatialGrid grid) : grid_(grid) {
        const auto n = static_cast<Eigen::Index>(grid.n);
        h0_ = RealMatrix::Zero(n, n);
        const double c = 0.5 / (grid.h * grid.h);
        for (Eigen::Index i = 0; i < n; ++i) {
            h0_(i, i) = 2.0 * c;
            if (i > 0) h0_(i, i - 1) = -c;
            if (i + 1 < n) h0_(i, i + 1) = -c;
        }
    }

    const SpatialGrid& grid() const noexcept { return grid_; }
    const RealMatrix& h0() const noexcept { return h0_; }

    RealMatrix potential_matrix(std::span<const double> v) const {
        RealMatrix m = RealMatrix::Zero(h0_.rows(), h0_.cols());
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, i) = v[static_cast<std::size_t>(i)];
        return m;
    }

    std::vector<double> sample(const Field& f) const {
        std::vector<double> v(grid_.n);
        for (std::size_t i = 0; i < grid_.n; ++i) v[i] = f(grid_.x(i));
        return v;
    }

    /// e^{-t (H0 + V)} psi for a time-independent potential.
    std::vector<double> propagate(const Potential& v, const Field& psi, double t) const {
        const auto vs = v.row_at(0.0);
        RealMatrix gen = h0_ + potential_matrix(vs);
        RealMatrix e = expm(RealMatrix(-t * gen));
        return apply(e, sample(psi));
    }

    /// Strang splitting e^{-dt V/2} e^{-dt H0} e^{-dt V/2} per step, V at the
    /// step midpoint; approximates the time-ordered propagator.
    std::vector<double> propagate_stepped(const Potential& v, const Field& psi, double t, int steps) const {
        const double dt = t / steps;
        const RealMatrix heat = expm(RealMatrix(-dt * h0_));
        Eigen::VectorXd y = to_vec(sample(psi));
        for (int k = 0; k < steps; ++k) {
            const auto vs = v.row_at((k + 0.5) * dt);
            Eigen::VectorXd half(y.size());
            for (Eigen::Index i = 0; i < y.size(); ++i) half(i) = std::exp(-0.5 * dt * vs[static_cast<std::size_t>(i)]);
            y = half.cwiseProduct(y);
            y = heat * y;
            y = half.cwiseProduct(y);
        }
        return {y.data(), y.data() + y.size()};
    }

    static std::vector<double> apply(const RealMatrix& m, const std::vector<double>& v) {
        Eigen::VectorXd y = m * to_vec(v);
        return {y.data(), y.data() + y.size()};
    }

    /// Grid index of x (nearest node).
    std::size_t index_of(double x) const {
        return static_cast<std::size_t>(std::llround((x - grid_.x_min) / grid_.h));
    }

private:
    static Eigen::VectorXd to_vec(const std::vector<double>& v) {
        return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }

    SpatialGrid grid_;
    RealMatrix h0_;
};

/// Per-point Monte Carlo estimate.
struct FieldEstimate {
    std::vector<double> x;
    std::vector<double> estimate;
    std::vector<double> std_error;
};

namespace detail {

/// Left-endpoint Riemann sum of V along a path started at x. A path run
/// forward from x walks the propagator backwards in time, so path time s
/// sees the potential at t - s; that keeps the latest V leftmost, as in the
/// time-ordered operator.
inline double path_integral(const Potential& v, std::span<const double> y, double x, double dt) {
    double s = 0.0;
    if (v.kind() == Potential::Kind::time_independent) {
        for (std::size_t k = 0; k + 1 < y.size(); ++k) s += v.at_row(0, y[k] + x);
    } else {
        const double t = static_cast<double>(y.size() - 1) * dt;
        for (std::size_t k = 0; k + 1 < y.size(); ++k) s += v(t - static_cast<double>(k) * dt, y[k] + x);
    }
    return s * dt;
}

/// Mean and standard error over paths of K per-path samples at each x,
/// accumulated in fixed path chunks so the result does not depend on the
/// worker count. `sample(y, x)` returns std::array<double, K>.
template <std::size_t K, class Sample>
std::array<FieldEstimate, K> path_average_k(const PathEnsemble& paths, std::span<const double> xs, int workers,
                                            const Sample& sample) {
    const std::size_t nx = xs.size();
    using Sums = std::vector<double>;  // [k][x] sums then [k][x] squares
    auto parts = map_chunks<Sums>(paths.paths(), 1024, workers, [&](std::size_t b, std::size_t e) {
        Sums acc(2 * K * nx, 0.0);
        std::vector<double> y;
        for (std::size_t p = b; p < e; ++p) {
            paths.positions(p, y);
            for (std::size_t i = 0; i < nx; ++i) {
                const std::array<double, K> v = sample(std::span<const double>(y), xs[i]);
                for (std::size_t k = 0; k < K; ++k) {
                    acc[k * nx + i] += v[k];
                    acc[(K + k) * nx + i] += v[k] * v[k];
                }
            }
        }
        return acc;
    });
    Sums tot(2 * K * nx, 0.0);
    for (const auto& p : parts)
        for (std::size_t i = 0; i < tot.size(); ++i) tot[i] += p[i];
    const double n = static_cast<double>(paths.paths());
    std::array<FieldEstimate, K> out;
    for (std::size_t k = 0; k < K; ++k) {
        out[k].x.assign(xs.begin(), xs.end());
        for (std::size_t i = 0; i < nx; ++i) {
            const double mean = tot[k * nx + i] / n;
            const double var = std::max(0.0, tot[(K + k) * nx + i] / n - mean * mean) * n / std::max(1.0, n - 1.0);
            out[k].estimate.push_back(mean);
            out[k].std_error.push_back(std::sqrt(var / n));
        }
    }
    return out;
}

template <class Sample>
FieldEstimate path_average(const PathEnsemble& paths, std::span<const double> xs, int workers, const Sample& sample) {
    return path_average_k<1>(paths, xs, workers, [&](std::span<const double> y, double x) {
        return std::array<double, 1>{sample(y, x)};
    })[0];
}

}  // namespace detail

/// G(int_0^t V(s, y(s) + x) ds) per path; G is a one-variable series whose
/// radius (radii()[0]) must exceed t sup|V|.
inline std::vector<Complex> fk_functional(const PathEnsemble& paths, const Potential& v, double x, const PowerSeries& g) {
    if (g.arity() != 1) throw PreconditionError("fk_functional: G must be a series in one variable");
    const double bound = paths.horizon() * v.sup_bound();
    if (!(bound < g.radii()[0]))
        throw PreconditionError("fk_functional: path-integral bound t sup|V| = " + std::to_string(bound) +
                                " reaches the radius " + std::to_string(g.radii()[0]) + " of G");
    std::vector<Complex> out(paths.paths());
    std::vector<double> y;
    for (std::size_t p = 0; p < paths.paths(); ++p) {
        paths.positions(p, y);
        const Complex z = detail::path_integral(v, y, x, paths.dt());
        out[p] = g(std::span<const Complex>(&z, 1));
    }
    return out;
}

/// Feynman-Kac estimate of e^{-t(H0+V)} psi at the points xs.
inline FieldEstimate fk_heat_solution(const PathEnsemble& paths, const Potential& v, const Field& psi,
                                      std::span<const double> xs, int workers = 1) {
    const double dt = paths.dt();
    return detail::path_average(paths, xs, workers, [&](std::span<const double> y, double x) {
        return std::exp(-detail::path_integral(v, y, x, dt)) * psi(y.back() + x);
    });
}

struct ReducedFkReport {
    std::vector<double> x;
    std::vector<double> heat_solution;   ///< E[e^{-int V} psi(y(t) + x)]
    std::vector<double> reduced_side;    ///< e^{-tH0} psi - E[int_0^t ... ds]
    std::vector<double> difference;
    std::vector<double> combined_se;
    bool within(double k_se) const {
        for (std::size_t i = 0; i < x.size(); ++i)
            if (std::abs(difference[i]) > k_se * combined_se[i]) return false;
        return true;
    }
};

/// Time-independent V with sup|V| < 1 and g1 = sum a_m z^m (geometric by
/// default): compares the Feynman-Kac estimate of e^{-t(H0+V)} psi with the
/// reduced-disentangling side
///   e^{-tH0} psi(x) - int_0^t E[ sum_m a_m (-1)^m / m! (int_0^s V)^m V(y(s)+x) psi(y(t)+x) ] ds,
/// on common paths. The s-integral runs per path step with Gauss-Legendre
/// nodes against the step-constant path potential.
inline ReducedFkReport reduced_fk_check(const PathEnsemble& paths, const Potential& v, const Field& psi,
                                        const SpatialGrid& psi_grid, std::span<const double> xs,
                                        const PowerSeries* g1 = nullptr, int workers = 1) {
    if (v.kind() != Potential::Kind::time_independent)
        throw PreconditionError("reduced_fk_check: the potential must be time-independent");
    if (!(v.sup_bound() < 1.0))
        throw PreconditionError("reduced_fk_check: sup|V| = " + std::to_string(v.sup_bound()) + " is not below 1");
    const double t = paths.horizon(), dt = paths.dt();
    // c_m = a_m (-1)^m / m!, truncated once the terms are negligible on |z| <= t sup|V|.
    const double bound = std::max(t * v.sup_bound(), 1e-300);
    std::vector<double> c;
    double fact = 1.0;
    for (int m = 0; m < 200; ++m) {
        if (m > 0) fact *= m;
        double a = 1.0;
        if (g1) a = (g1->has_generator() ? g1->generator()({m}) : g1->coefficient({m})).real();
        c.push_back(((m % 2) ? -a : a) / fact);
        if (g1 && !g1->has_generator() && m >= g1->max_degree()) break;
        if (m > 2 && std::abs(c.back()) * std::pow(bound, m) < 1e-18) break;
    }
    auto series = [&](double z) {
        double s = 0.0;
        for (std::size_t m = c.size(); m-- > 0;) s = s * z + c[m];
        return s;
    };
    const auto& gl = gauss_legendre(3);
    std::vector<double> psi_samples(psi_grid.n);
    for (std::size_t i = 0; i < psi_grid.n; ++i) psi_samples[i] = psi(psi_grid.x(i));
    const auto heat = heat_apply(psi_samples, psi_grid, t, xs);

    // Per path: FK sample a = e^{-I_t} psi_end, s-integral sample b = J psi_end;
    // the estimator difference a - (H(x) - b) shares the path.
    auto est = detail::path_average_k<3>(paths, xs, workers, [&](std::span<const double> y, double x) {
        double integral = 0.0, acc = 0.0;
        for (std::size_t k = 0; k + 1 < y.size(); ++k) {
            const double vk = v.at_row(0, y[k] + x);
            for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
                const double tau = 0.5 * dt * (gl.nodes[q] + 1.0);
                acc += 0.5 * dt * gl.weights[q] * series(integral + vk * tau) * vk;
            }
            integral += vk * dt;
        }
        const double pe = psi(y.back() + x);
        const double a = std::exp(-integral) * pe, b = acc * pe;
        return std::array<double, 3>{a, b, a + b};
    });
    ReducedFkReport rep;
    rep.x.assign(xs.begin(), xs.end());
    for (std::size_t k = 0; k < xs.size(); ++k) {
        rep.heat_solution.push_back(est[0].estimate[k]);
        rep.reduced_side.push_back(heat[k] - est[1].estimate[k]);
        rep.difference.push_back(est[2].estimate[k] - heat[k]);
        rep.combined_se.push_back(est[2].std_error[k]);
    }
    return rep;
}

struct JIdentityReport {
    std::vector<double> x;
    std::vector<double> matrix_side;
    std::vector<double> path_side;
    std::vector<double> std_error;
    std::vector<double> discretization;
    double residual = 0.0;
    bool within(double k_se) const {
        for (std::size_t i = 0; i < x.size(); ++i)
            if (std::abs(matrix_side[i] - path_side[i]) > k_se * std_error[i] + discretization[i]) return false;
        return true;
    }
};

/// The reduced disentangling of e^{z0}(z1 g1(z1) + g1(0)) at (-H0, -V),
/// computed on the grid matrices by the contour method and applied to psi.
inline std::vector<double> reduced_heat_matrix_side(const GridOracle& oracle, const Potential& v, const Field& psi,
                                                    double t, const PowerSeries& g1, const ReducedOptions& opt = {}) {
    const auto& grid = oracle.grid();
    const auto n = static_cast<Eigen::Index>(grid.n);
    const Matrix alpha = oracle.h0().cast<Complex>();
    const Measure leb = Measure::lebesgue(t);
    OperatorFamily fam = [&] {
        if (v.kind() == Potential::Kind::time_independent) {
            Matrix a = Matrix::Zero(n, n);
            const auto row = v.row_at(0.0);
            for (Eigen::Index i = 0; i < n; ++i) a(i, i) = -row[static_cast<std::size_t>(i)];
            return OperatorFamily::constant(a, leb);
        }
        std::vector<double> ts;
        std::vector<Matrix> samples;
        for (double s : v.times())
            if (s < t) ts.push_back(s);
        ts.push_back(t);
        if (ts.front() > 0.0) ts.insert(ts.begin(), 0.0);
        for (double s : ts) {
            Matrix a = Matrix::Zero(n, n);
            const auto row = v.row_at(s);
            for (Eigen::Index i = 0; i < n; ++i) a(i, i) = -row[static_cast<std::size_t>(i)];
            samples.push_back(a);
        }
        return OperatorFamily(ts, samples, leb, Interpolation::linear, true);
    }();
    const double r = fam.weight();
    const Complex g10 = g1.coefficient({0});
    auto gen = g1.generator();
    PowerSeries::CoefficientFn coef = [g1, g10](const MultiIndex& m) {
        return m[0] == 0 ? g10 : g1.coefficient({m[0] - 1});
    };
    if (gen)
        coef = [gen, g10](const MultiIndex& m) { return m[0] == 0 ? g10 : gen({m[0] - 1}); };
    PowerSeries::EvaluatorFn closed;
    if (g1.has_closed_form())
        closed = [g1, g10](std::span<const Complex> z) { return z[0] * g1(z) + g10; };
    auto g = PowerSeries::from_generator(1, coef, {r}, g1.max_degree() + 1, closed);
    DisentanglingProblem problem(alpha, {fam}, g, t);
    Matrix x0(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) x0(i, 0) = psi(grid.x(static_cast<std::size_t>(i)));
    const Matrix y = reduced_apply_contour(problem, t, x0, opt);
    std::vector<double> out(grid.n);
    for (std::size_t i = 0; i < grid.n; ++i) out[i] = y(static_cast<Eigen::Index>(i), 0).real();
    return out;
}

/// Compares, at the points xs (grid nodes of `oracle`), the matrix-side
/// reduced disentangling f_R(-H0, -V) psi with the path side
/// g1(0) e^{-tH0} psi(x) + E[G(int_0^t V(s, y(s)+x) ds) psi(y(t)+x)],
/// G(z) = sum_m (-1)^{m+1} a_m z^{m+1} / (m+1)!. The discretization budget is
/// twice the Richardson estimate from the oracle on the half-spacing grid
/// (the bare 4/3 factor is asymptotic and undershoots on coarse grids).
inline JIdentityReport j_identity_check(const PathEnsemble& paths, const GridOracle& oracle, const Potential& v,
                                        const Field& psi, std::span<const double> xs, const PowerSeries& g1,
                                        const ReducedOptions& opt = {}, int workers = 1) {
    const double t = paths.horizon();
    const auto matrix_full = reduced_heat_matrix_side(oracle, v, psi, t, g1, opt);
    // G coefficients; the series is entire when g1 has a finite radius.
    const int deg = std::max(g1.max_degree(), 40);
    std::vector<double> gc(static_cast<std::size_t>(deg) + 2, 0.0);
    double fact = 1.0;
    for (int m = 0; m <= deg; ++m) {
        fact *= (m + 1);
        const double a = g1.has_generator() ? g1.generator()({m}).real() : g1.coefficient({m}).real();
        gc[static_cast<std::size_t>(m) + 1] = ((m % 2) ? a : -a) / fact;
    }
    auto big_g = [&](double z) {
        double s = 0.0;
        for (std::size_t m = gc.size(); m-- > 0;) s = s * z + gc[m];
        return s;
    };
    const double dt = paths.dt();
    auto mc = detail::path_average(paths, xs, workers, [&](std::span<const double> y, double x) {
        return big_g(detail::path_integral(v, y, x, dt)) * psi(y.back() + x);
    });
    const auto heat = heat_apply(psi, oracle.grid(), t, xs);
    const double g10 = g1.coefficient({0}).real();

    // Richardson: the grid oracle at spacing h and h/2.
    const auto& gr = oracle.grid();
    GridOracle fine(SpatialGrid{gr.x_min, gr.h / 2, 2 * gr.n - 1});
    const bool ti = v.kind() == Potential::Kind::time_independent;
    Potential vf = ti ? Potential::time_independent(fine.grid(), [&](double x) { return v(0.0, x); })
                      : Potential::time_dependent(fine.grid(), v.times(), [&](double s, double x) { return v(s, x); });
    const auto coarse_exact = ti ? oracle.propagate(v, psi, t) : oracle.propagate_stepped(v, psi, t, 1000);
    const auto fine_exact = ti ? fine.propagate(vf, psi, t) : fine.propagate_stepped(vf, psi, t, 1000);

    JIdentityReport rep;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const std::size_t i = oracle.index_of(xs[k]);
        rep.x.push_back(xs[k]);
        rep.matrix_side.push_back(matrix_full[i]);
        rep.path_side.push_back(g10 * heat[k] + mc.estimate[k]);
        rep.std_error.push_back(mc.std_error[k]);
        rep.discretization.push_back(2.0 * std::abs(coarse_exact[i] - fine_exact[2 * i]) +
                                     v.sup_bound() * dt * t);
        rep.residual = std::max(rep.residual, std::abs(rep.matrix_side.back() - rep.path_side.back()));
    }
    return rep;
}

}  // namespace opcalc
