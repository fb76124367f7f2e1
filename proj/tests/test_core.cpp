// Measures, families, power series, merge patterns and quadrature.

#include "oracles.hpp"

#include "opcalc/combinatorics.hpp"
#include "opcalc/contour.hpp"
#include "opcalc/measure.hpp"
#include "opcalc/operator_family.hpp"
#include "opcalc/power_series.hpp"
#include "opcalc/problem.hpp"
#include "opcalc/quadrature.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

using namespace opcalc;

namespace {

Matrix diag2(double a, double b) {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = a;
    m(1, 1) = b;
    return m;
}

const Measure kUniform1 = Measure::uniform_probability(1.0);

}  // namespace

// ---- measures ----

TEST(Measure, UniformProbabilityHasUnitMass) {
    EXPECT_NEAR(measure_integrate(kUniform1, [](double) { return 1.0; }, 1.0), 1.0, 1e-14);
}

TEST(Measure, LebesgueIntegratesIdentity) {
    const auto mu = Measure::lebesgue(2.0);
    EXPECT_NEAR(measure_integrate(mu, [](double s) { return s; }, 2.0), 2.0, 1e-13);
}

TEST(Measure, PolynomialDensityMatchesAntiderivative) {
    const auto mu = Measure::from_density(1.0, {{0.0, 1.0, {0.0, 2.0}}});
    // 2 int_0^1 s^3 ds
    EXPECT_NEAR(measure_integrate(mu, [](double s) { return s * s; }, 1.0), 0.5, 1e-13);
    EXPECT_NEAR(mu.total_mass(), 1.0, 1e-15);
}

TEST(Measure, RejectsNegativeDensityAndBadHorizon) {
    EXPECT_THROW(Measure::from_density(1.0, {{0.0, 1.0, {-0.5, 1.0}}}), InvalidMeasure);
    EXPECT_THROW(Measure::lebesgue(0.0), InvalidMeasure);
    EXPECT_THROW(Measure::from_density(1.0, {{0.0, 0.5, {1.0}}}), InvalidMeasure);
}

TEST(Measure, IntegrationBeyondHorizonIsDomainError) {
    EXPECT_THROW(measure_integrate(kUniform1, [](double) { return 1.0; }, 1.5), DomainError);
}

TEST(Measure, LinearAndAdditive) {
    const auto mu = Measure::from_density(2.0, {{0.0, 0.7, {1.0, 0.5}}, {0.7, 2.0, {0.2, 0.0, 0.3}}});
    auto f = [](double s) { return std::sin(3 * s); };
    auto g = [](double s) { return std::exp(-s); };
    const double lhs = measure_integrate(mu, [&](double s) { return 2.0 * f(s) - 3.0 * g(s); }, 2.0, 1e-12);
    const double rhs = 2.0 * measure_integrate(mu, f, 2.0, 1e-12) - 3.0 * measure_integrate(mu, g, 2.0, 1e-12);
    EXPECT_NEAR(lhs, rhs, 1e-11);
    // Additivity over [0, 1] and [1, 2]: integrate the indicator-split pieces.
    const double whole = measure_integrate(mu, f, 2.0, 1e-12);
    const double first = measure_integrate(mu, f, 1.0, 1e-12);
    const double second = integrate_time([&](double s) { return s >= 1.0 ? f(s) : 0.0; }, mu, 2.0, 1e-12,
                                         std::vector<double>{1.0});
    EXPECT_NEAR(whole, first + second, 1e-11);
}

// ---- operator families ----

TEST(OperatorFamily, ConstantWeightUnderProbabilityMeasure) {
    const auto fam = OperatorFamily::constant(diag2(0.5, 0.1), kUniform1);
    EXPECT_NEAR(family_weight(fam), 0.5, 1e-14);
}

TEST(OperatorFamily, ConstantWeightUnderLebesgueScalesWithLength) {
    const auto fam = OperatorFamily::constant(diag2(0.5, -0.2), Measure::lebesgue(2.0));
    EXPECT_NEAR(fam.weight(), 1.0, 1e-14);
}

TEST(OperatorFamily, LinearRampWeight) {
    const OperatorFamily fam({0.0, 1.0}, {diag2(0, 0), diag2(1, 1)}, Measure::lebesgue(1.0), Interpolation::linear);
    EXPECT_NEAR(fam.weight(), 0.5, 1e-12);
}

TEST(OperatorFamily, ProbabilityWeightBoundedBySupNorm) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 10; ++i) {
        const auto fam = oracle::random_family(rng, 3, 1.0, Measure::from_density(1.0, {{0.0, 1.0, {0.0, 2.0}}}), 0.8, 3);
        EXPECT_LE(fam.weight(), fam.sup_norm() + 1e-12);
    }
}

TEST(OperatorFamily, RejectsEmptyGridAndFalseSelfCommutingFlag) {
    EXPECT_THROW(OperatorFamily({}, {}, kUniform1), InvalidFamily);
    Matrix a = Matrix::Zero(2, 2), b = Matrix::Zero(2, 2);
    a(0, 1) = 1.0;
    b(1, 0) = 1.0;
    EXPECT_THROW(OperatorFamily({0.0, 1.0}, {a, b}, kUniform1, Interpolation::linear, true), InvalidFamily);
}

TEST(OperatorFamily, InterpolationModes) {
    const OperatorFamily pc({0.0, 0.5, 1.0}, {diag2(1, 1), diag2(2, 2), diag2(3, 3)}, kUniform1);
    EXPECT_NEAR(pc.value(0.25)(0, 0).real(), 1.0, 0.0);
    EXPECT_NEAR(pc.value(0.75)(0, 0).real(), 2.0, 0.0);
    const OperatorFamily lin({0.0, 1.0}, {diag2(1, 1), diag2(3, 3)}, kUniform1, Interpolation::linear);
    EXPECT_NEAR(lin.value(0.25)(0, 0).real(), 1.5, 1e-15);
    EXPECT_THROW(lin.value(1.5), DomainError);
}

// ---- power series ----

TEST(PowerSeries, NormExamples) {
    EXPECT_DOUBLE_EQ(series_norm(PowerSeries::constant(1.0, {0.3})), 1.0);
    const PowerSeries z(1, {{{1}, 1.0}}, {0.5}, 1);
    EXPECT_DOUBLE_EQ(series_norm(z), 0.5);
    EXPECT_NEAR(series_norm(PowerSeries::exp_sum({1.0}, 3)), 1 + 1 + 0.5 + 1.0 / 6, 1e-15);
}

TEST(PowerSeries, NormHomogeneousAndSubadditive) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<double> r{0.4 + 0.5 * std::abs(u(rng)), 0.2 + std::abs(u(rng))};
        PowerSeries::Coefficients a, b, sum, scaled;
        const Complex lambda(u(rng), u(rng));
        for (const auto& m : multi_indices_up_to(2, 5)) {
            if (u(rng) > 0.3) a[m] = Complex(u(rng), u(rng));
            if (u(rng) > 0.3) b[m] = Complex(u(rng), u(rng));
        }
        for (const auto& [m, c] : a) {
            sum[m] += c;
            scaled[m] = lambda * c;
        }
        for (const auto& [m, c] : b) sum[m] += c;
        const PowerSeries fa(2, a, r, 5), fb(2, b, r, 5), fs(2, sum, r, 5), fl(2, scaled, r, 5);
        EXPECT_LE(fs.norm(), fa.norm() + fb.norm() + 1e-12);
        EXPECT_NEAR(fl.norm(), std::abs(lambda) * fa.norm(), 1e-12);
    }
}

TEST(PowerSeries, RejectsCoefficientsAboveMaxDegree) {
    EXPECT_THROW(PowerSeries(1, {{{3}, 1.0}}, {1.0}, 2), InvalidProblem);
    EXPECT_THROW(PowerSeries(2, {{{1}, 1.0}}, {1.0, 1.0}, 2), InvalidProblem);
}

TEST(PowerSeries, TailBoundOfTruncatedExponential) {
    const auto g = PowerSeries::exp_sum({1.0}, 5);
    double expect = std::exp(1.0);
    for (int k = 0; k <= 5; ++k) expect -= 1.0 / oracle::factorial(k);
    EXPECT_NEAR(g.tail_bound().value(), expect, 1e-14);
    const PowerSeries poly(1, {{{2}, 1.0}}, {1.0}, 2);
    EXPECT_FALSE(poly.tail_bound().has_value());
}

TEST(PowerSeries, CauchyCoefficientExamples) {
    auto one = [](std::span<const Complex>) { return Complex(1.0); };
    EXPECT_NEAR(std::abs(series_coefficient_via_cauchy(one, {0}, {1.0}) - 1.0), 0.0, 1e-14);
    auto sq = [](std::span<const Complex> z) { return z[0] * z[0]; };
    EXPECT_NEAR(std::abs(series_coefficient_via_cauchy(sq, {2}, {0.5}) - 1.0), 0.0, 1e-13);
    auto geo = [](std::span<const Complex> z) { return 1.0 / (1.0 - z[0]); };
    EXPECT_NEAR(std::abs(series_coefficient_via_cauchy(geo, {3}, {0.5}) - 1.0), 0.0, 1e-13);
    EXPECT_THROW(series_coefficient_via_cauchy(one, {1}, {0.0}), DegenerateContour);
}

TEST(PowerSeries, CauchyRecoversRandomPolynomial) {
    std::mt19937_64 rng(3);
    const auto g = oracle::random_polynomial(rng, 2, 6, {0.7, 1.3});
    for (const auto& [m, c] : g.coefficients()) {
        const Complex got = series_coefficient_via_cauchy(g, m, g.radii(), 64);
        EXPECT_LE(std::abs(got - c), 1e-10) << to_string(m);
    }
}

TEST(DisentanglingProblem, ValidatesRadiiAndDimensions) {
    const auto fam = OperatorFamily::constant(diag2(0.5, 0.1), kUniform1);
    EXPECT_NO_THROW(DisentanglingProblem(Matrix::Zero(2, 2), {fam}, PowerSeries::constant(1.0, {0.5})));
    EXPECT_THROW(DisentanglingProblem(Matrix::Zero(2, 2), {fam}, PowerSeries::constant(1.0, {0.4})), InvalidProblem);
    EXPECT_THROW(DisentanglingProblem(Matrix::Zero(3, 3), {fam}, PowerSeries::constant(1.0, {0.5})), InvalidProblem);
    EXPECT_THROW(DisentanglingProblem(Matrix::Zero(2, 2), {fam}, PowerSeries::constant(1.0, {0.5}), 2.0),
                 InvalidProblem);
}

// ---- merge patterns ----

TEST(MergePatterns, SmallCases) {
    const auto p11 = enumerate_merge_patterns({1, 1});
    ASSERT_EQ(p11.size(), 2u);
    EXPECT_EQ(p11[0].assignment, (std::vector<int>{0, 1}));
    EXPECT_EQ(p11[1].assignment, (std::vector<int>{1, 0}));
    EXPECT_EQ(enumerate_merge_patterns({2, 1}).size(), 3u);
    const auto empty = enumerate_merge_patterns({0, 0, 0});
    ASSERT_EQ(empty.size(), 1u);
    EXPECT_TRUE(empty[0].assignment.empty());
}

TEST(MergePatterns, CountEqualsMultinomialAndPatternsAreDistinct) {
    for (int k = 1; k <= 3; ++k)
        for (const auto& m : multi_indices_up_to(k, 7)) {
            const auto pats = enumerate_merge_patterns(m);
            EXPECT_EQ(pats.size(), oracle::multinomial_by_factorials(m));
            std::set<std::vector<int>> seen;
            for (const auto& p : pats) {
                for (std::size_t j = 0; j < m.size(); ++j)
                    EXPECT_EQ(std::count(p.assignment.begin(), p.assignment.end(), static_cast<int>(j)), m[j]);
                seen.insert(p.assignment);
            }
            EXPECT_EQ(seen.size(), pats.size());
        }
}

TEST(MergePatterns, BudgetExceededNamesTheMultiIndex) {
    try {
        enumerate_merge_patterns({6, 6}, 100);
        FAIL() << "expected an explosion";
    } catch (const CombinatorialExplosion& e) {
        EXPECT_NE(std::string(e.what()).find("(6,6)"), std::string::npos) << e.what();
    }
}

TEST(MergePatterns, RegionsTileTheProductSimplex) {
    // Random points of Delta_2 x Delta_1 x Delta_2 fall in exactly one interleaving.
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const MultiIndex m{2, 1, 2};
    const auto pats = enumerate_merge_patterns(m);
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<std::pair<double, int>> pts;
        for (std::size_t j = 0; j < m.size(); ++j) {
            std::vector<double> s;
            for (int i = 0; i < m[j]; ++i) s.push_back(u(rng));
            std::sort(s.begin(), s.end());
            for (double x : s) pts.push_back({x, static_cast<int>(j)});
        }
        std::sort(pts.begin(), pts.end());
        int hits = 0;
        for (const auto& p : pats) {
            bool match = true;
            for (std::size_t i = 0; i < pts.size(); ++i) match = match && p.assignment[i] == pts[i].second;
            hits += match;
        }
        EXPECT_EQ(hits, 1);
    }
}

TEST(MergePatterns, VolumesSumToProductOfSimplexVolumes) {
    for (const MultiIndex& m : {MultiIndex{1, 1}, MultiIndex{2, 1}, MultiIndex{2, 2, 1}, MultiIndex{3, 0, 2}}) {
        const double t = 1.7;
        int n = 0;
        double prod = 1.0;
        for (int v : m) {
            n += v;
            prod *= simplex_volume(v, t);
        }
        const double sum = static_cast<double>(enumerate_merge_patterns(m).size()) * simplex_volume(n, t);
        EXPECT_NEAR(sum, prod, 1e-12);
    }
}

TEST(SimplexVolume, Examples) {
    EXPECT_DOUBLE_EQ(simplex_volume(0, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(simplex_volume(2, 1.0), 0.5);
    EXPECT_NEAR(simplex_volume(3, 2.0), 8.0 / 6.0, 1e-15);
    // Fraction of ordered uniform triples on [0, 2].
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    int ordered = 0;
    const int n = 600000;
    for (int i = 0; i < n; ++i) {
        double a = u(rng), b = u(rng), c = u(rng);
        ordered += (a < b && b < c);
    }
    const double p = ordered / static_cast<double>(n);
    EXPECT_NEAR(8.0 * p, simplex_volume(3, 2.0), 8.0 * 4.0 * std::sqrt(p * (1 - p) / n));
}

TEST(TimeOrderSelector, LaterTimesActToTheLeft) {
    const std::vector<OperatorFamily> fams{
        OperatorFamily({0.0, 1.0}, {diag2(1, 1), diag2(2, 2)}, kUniform1, Interpolation::linear),
        OperatorFamily({0.0, 1.0}, {diag2(10, 10), diag2(20, 20)}, kUniform1, Interpolation::linear)};
    const std::vector<double> times{0.2, 0.7};
    auto a = time_order_selector({{1, 1}, {0, 1}}, fams, times);
    ASSERT_EQ(a.size(), 2u);
    EXPECT_NEAR(a[0](0, 0).real(), 17.0, 1e-12);  // A_2(0.7)
    EXPECT_NEAR(a[1](0, 0).real(), 1.2, 1e-12);   // A_1(0.2)
    auto b = time_order_selector({{1, 1}, {1, 0}}, fams, times);
    EXPECT_NEAR(b[0](0, 0).real(), 1.7, 1e-12);
    EXPECT_NEAR(b[1](0, 0).real(), 12.0, 1e-12);
    EXPECT_TRUE(time_order_selector({{0, 0}, {}}, fams, {}).empty());
    EXPECT_THROW(time_order_selector({{1, 1}, {0, 1}}, fams, std::vector<double>{0.2, 1.5}), DomainError);
}

// ---- quadrature ----

TEST(SimplexQuadrature, EmptyPatternGivesTheIntegrand) {
    const std::vector<Measure> mus{kUniform1};
    auto r = integrate_ordered_simplex({}, {{0}, {}}, [](std::span<const double>) { return Matrix(Matrix::Identity(2, 2)); },
                                       std::span<const Measure>(mus), 1.0);
    EXPECT_NEAR(max_abs(Matrix(r.value - Matrix::Identity(2, 2))), 0.0, 0.0);
}

TEST(SimplexQuadrature, ConstantIntegrandUnderUniformProduct) {
    const std::vector<Measure> mus{kUniform1, kUniform1};
    for (auto mode : {SimplexMode::iterated_gauss, SimplexMode::monte_carlo}) {
        SimplexRule rule{mode};
        auto r = integrate_ordered_simplex(rule, {{1, 1}, {0, 1}},
                                           [](std::span<const double>) { return Matrix(Matrix::Identity(2, 2)); },
                                           std::span<const Measure>(mus), 1.0);
        const double tol = mode == SimplexMode::monte_carlo ? 4 * r.std_error + 1e-3 : 1e-13;
        EXPECT_NEAR(r.value(0, 0).real(), 0.5, tol) << to_string(mode);
    }
}

TEST(SimplexQuadrature, LinearIntegrandLebesgue) {
    const std::vector<Measure> mus{Measure::lebesgue(2.0)};
    auto r = integrate_ordered_simplex({}, {{1}, {0}}, [](std::span<const double> s) { return Matrix(s[0] * Matrix::Identity(2, 2)); },
                                       std::span<const Measure>(mus), 2.0);
    EXPECT_NEAR(r.value(1, 1).real(), 2.0, 1e-13);
}

TEST(SimplexQuadrature, GaussSelfConvergenceOnSmoothIntegrand) {
    const std::vector<Measure> mus{Measure::lebesgue(1.0), kUniform1};
    auto f = [](std::span<const double> s) {
        Matrix m(1, 1);
        m(0, 0) = std::exp(s[0] * s[1]) * std::cos(s[2]);
        return m;
    };
    SimplexRule a{SimplexMode::iterated_gauss, 8}, b{SimplexMode::iterated_gauss, 16};
    const MergePattern p{{2, 1}, {0, 1, 0}};
    auto ra = integrate_ordered_simplex(a, p, f, std::span<const Measure>(mus), 1.0);
    auto rb = integrate_ordered_simplex(b, p, f, std::span<const Measure>(mus), 1.0);
    EXPECT_LE(std::abs(ra.value(0, 0) - rb.value(0, 0)), 10 * a.tolerance);
}

TEST(SimplexQuadrature, MonteCarloIsSeededAndShrinksLikeInverseRoot) {
    const std::vector<Measure> mus{kUniform1};
    auto f = [](std::span<const double> s) {
        Matrix m(1, 1);
        m(0, 0) = s[0] + 2 * s[1] * s[2];
        return m;
    };
    const MergePattern p{{3}, {0, 0, 0}};
    SimplexRule small{SimplexMode::monte_carlo}, large{SimplexMode::monte_carlo};
    small.samples = 20000;
    large.samples = 320000;
    auto r1 = integrate_ordered_simplex(small, p, f, std::span<const Measure>(mus), 1.0);
    auto r2 = integrate_ordered_simplex(small, p, f, std::span<const Measure>(mus), 1.0);
    auto r3 = integrate_ordered_simplex(large, p, f, std::span<const Measure>(mus), 1.0);
    EXPECT_EQ(r1.value(0, 0), r2.value(0, 0));
    EXPECT_LT(r3.std_error, 0.3 * r1.std_error);
    auto exact = integrate_ordered_simplex(SimplexRule{}, p, f, std::span<const Measure>(mus), 1.0);
    EXPECT_LE(std::abs(r3.value(0, 0) - exact.value(0, 0)), 3 * r3.std_error + 1e-12);
}

TEST(SimplexQuadrature, EscalatesToMonteCarloAboveMaxOrder) {
    const std::vector<Measure> mus{kUniform1};
    SimplexRule rule{SimplexMode::iterated_gauss};
    rule.max_order = 3;
    rule.samples = 50000;
    const MergePattern p{{5}, {0, 0, 0, 0, 0}};
    auto r = integrate_ordered_simplex(rule, p, [](std::span<const double>) { return Matrix(Matrix::Identity(1, 1)); },
                                       std::span<const Measure>(mus), 1.0);
    EXPECT_TRUE(r.escalated);
    EXPECT_EQ(r.mode_used, SimplexMode::monte_carlo);
    EXPECT_NEAR(r.value(0, 0).real(), 1.0 / 120.0, 4 * r.std_error + 1e-12);
}

TEST(SimplexQuadrature, OrderedProductModesAgree) {
    std::mt19937_64 rng(23);
    const auto mu = Measure::from_density(1.0, {{0.0, 0.4, {1.0}}, {0.4, 1.0, {0.2, 1.0}}});
    const std::vector<OperatorFamily> fams{oracle::random_family(rng, 3, 1.0, mu, 0.7, 3),
                                           oracle::random_family(rng, 3, 1.0, Measure::lebesgue(1.0), 0.9, 2)};
    for (const MultiIndex& m : {MultiIndex{2, 1}, MultiIndex{1, 2}, MultiIndex{3, 1}})
        for (const auto& p : enumerate_merge_patterns(m)) {
            auto g = integrate_ordered_product({SimplexMode::iterated_gauss}, p, fams, 0.8);
            auto c = integrate_ordered_product({SimplexMode::collocation_chain}, p, fams, 0.8);
            EXPECT_LE(max_abs(Matrix(g.value - c.value)), 1e-12);
        }
}

TEST(TimeQuadrature, Examples) {
    auto id = [](double) { return Matrix(Matrix::Identity(2, 2)); };
    EXPECT_NEAR(integrate_time(id, kUniform1, 1.0)(0, 0).real(), 1.0, 1e-14);
    auto e = [](double s) { return Matrix(std::exp(s) * Matrix::Identity(2, 2)); };
    EXPECT_NEAR(integrate_time(e, Measure::lebesgue(1.0), 1.0)(1, 1).real(), std::numbers::e - 1.0, 1e-12);
    auto z = [](double) { return Matrix(Matrix::Zero(2, 2)); };
    EXPECT_EQ(max_abs(integrate_time(z, kUniform1, 1.0)), 0.0);
}

TEST(Contour, Examples) {
    Matrix c(2, 2);
    c << 1.0, 2.0, Complex(0, 1), -1.0;
    auto constant = [&](std::span<const Complex>) { return c; };
    EXPECT_LE(max_abs(Matrix(integrate_polydisk_contour(constant, {0.7}, 16) - c)), 1e-15);
    auto linear = [&](std::span<const Complex> xi) { return Matrix(xi[0] * c); };
    EXPECT_LE(max_abs(integrate_polydisk_contour(linear, {0.7}, 16)), 1e-15);
    auto geo = [](std::span<const Complex> xi) { return Matrix(Matrix::Identity(2, 2) / (1.0 - xi[0])); };
    EXPECT_LE(max_abs(Matrix(integrate_polydisk_contour(geo, {0.5}, 64) - Matrix::Identity(2, 2))), 1e-15);
    EXPECT_THROW(integrate_polydisk_contour(constant, {0.0}, 16), DegenerateContour);
}

TEST(Contour, NodeDoublingOnRationalFunction) {
    auto f = [](std::span<const Complex> xi) {
        return Complex(1.0) / ((2.0 - xi[0]) * (1.5 + xi[1])) + xi[0] / (3.0 - xi[1]);
    };
    const Complex a = integrate_polydisk_contour(f, {0.8, 0.6}, 32);
    const Complex b = integrate_polydisk_contour(f, {0.8, 0.6}, 64);
    EXPECT_LE(std::abs(a - b), 1e-10);
    EXPECT_LE(std::abs(b - 1.0 / 3.0), 1e-12);
}
