#pragma once

// Reference values computed without the engine's own machinery.

#include "opcalc/linalg.hpp"
#include "opcalc/measure.hpp"
#include "opcalc/operator_family.hpp"
#include "opcalc/power_series.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

using opcalc::Complex;
using opcalc::Matrix;

/// Matrix exponential by scaling and squaring of a degree-24 Taylor
/// polynomial; independent of the Pade-based routine used by the engine.
inline Matrix taylor_expm(const Matrix& a) {
    const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
    int squarings = 0;
    if (norm > 0.25) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.25)));
    const Matrix b = a / std::ldexp(1.0, squarings);
    Matrix term = Matrix::Identity(a.rows(), a.cols()), sum = term;
    for (int k = 1; k <= 24; ++k) {
        term = term * b / static_cast<double>(k);
        sum += term;
    }
    for (int i = 0; i < squarings; ++i) sum = sum * sum;
    return sum;
}

/// n! as a double (exact for n <= 18).
inline double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

/// Multinomial coefficient from factorials; exact while (sum n)! < 2^53.
inline std::uint64_t multinomial_by_factorials(const std::vector<int>& n) {
    int total = 0;
    double denom = 1.0;
    for (int v : n) {
        total += v;
        denom *= factorial(v);
    }
    return static_cast<std::uint64_t>(std::llround(factorial(total) / denom));
}

/// Heat semigroup applied to exp(-x^2 / (2 w^2)): the Gaussian convolution
/// identity gives w / sqrt(w^2 + t) exp(-x^2 / (2 (w^2 + t))).
inline double heat_of_gaussian(double x, double w, double t) {
    const double v = w * w + t;
    return w / std::sqrt(v) * std::exp(-x * x / (2.0 * v));
}

/// Seeded complex Gaussian matrix rescaled to the given spectral norm.
inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index d, double norm) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index k = 0; k < d; ++k) m(i, k) = Complex(n(rng), n(rng));
    return m * (norm / opcalc::opnorm(m));
}

/// Random matrix with spectral norm drawn uniformly from [lo, hi].
inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index d, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    return random_matrix(rng, d, u(rng));
}

/// Pairwise-commuting family generators: S diag(random) S^{-1} for a shared
/// well-conditioned S, rescaled to the given norm.
inline std::vector<Matrix> commuting_matrices(std::mt19937_64& rng, Eigen::Index d, std::size_t count, double norm) {
    Matrix s = Matrix::Identity(d, d) + random_matrix(rng, d, 0.3);
    const Matrix s_inv = s.inverse();
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Matrix> out;
    for (std::size_t c = 0; c < count; ++c) {
        Matrix dg = Matrix::Zero(d, d);
        for (Eigen::Index i = 0; i < d; ++i) dg(i, i) = Complex(u(rng), u(rng));
        Matrix a = s * dg * s_inv;
        out.push_back(a * (norm / opcalc::opnorm(a)));
    }
    return out;
}

/// Time-dependent family A(s) = p(s) B + q(s) B^2 with linear p, q: every
/// pair of values commutes, so the family is self-commuting.
inline opcalc::OperatorFamily self_commuting_family(std::mt19937_64& rng, Eigen::Index d, double horizon,
                                                    const opcalc::Measure& mu, double norm) {
    const Matrix b = random_matrix(rng, d, norm);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double p0 = u(rng), p1 = u(rng), q0 = u(rng), q1 = u(rng);
    const Matrix a0 = p0 * b + q0 * b * b, a1 = p1 * b + q1 * b * b;
    return opcalc::OperatorFamily({0.0, horizon}, {a0, a1}, mu, opcalc::Interpolation::linear, true);
}

/// Generic time-dependent family: linear interpolation of `pieces + 1`
/// random samples on [0, T].
inline opcalc::OperatorFamily random_family(std::mt19937_64& rng, Eigen::Index d, double horizon,
                                            const opcalc::Measure& mu, double norm, int pieces = 2) {
    std::vector<double> times;
    std::vector<Matrix> samples;
    for (int i = 0; i <= pieces; ++i) {
        times.push_back(horizon * i / pieces);
        samples.push_back(random_matrix(rng, d, norm));
    }
    return opcalc::OperatorFamily(times, samples, mu, opcalc::Interpolation::linear, false);
}

/// Random polynomial in `arity` variables of total degree <= n, coefficients
/// of modulus <= 1.
inline opcalc::PowerSeries random_polynomial(std::mt19937_64& rng, int arity, int n, std::vector<double> radii) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    opcalc::PowerSeries::Coefficients c;
    for (const auto& m : opcalc::multi_indices_up_to(arity, n)) c[m] = Complex(u(rng), u(rng)) / std::sqrt(2.0);
    return opcalc::PowerSeries(arity, std::move(c), std::move(radii), n);
}

}  // namespace oracle
