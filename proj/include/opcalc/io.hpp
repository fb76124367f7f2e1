#pragma once

// JSON problem specs and reports. Matrices are row-major nested arrays whose
// entries are [re, im] pairs (a bare number is read as a real entry).

#include "opcalc/errors.hpp"
#include "opcalc/feynman_kac.hpp"
#include "opcalc/linalg.hpp"
#include "opcalc/measure.hpp"
#include "opcalc/operator_family.hpp"
#include "opcalc/power_series.hpp"
#include "opcalc/problem.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace opcalc::io {

using json = nlohmann::json;

inline json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("field '") + key + "': " + e.what());
    }
}

inline const json& require(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
    return j.at(key);
}

inline Complex parse_complex(const json& v) {
    if (v.is_number()) return {v.get<double>(), 0.0};
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
        return {v[0].get<double>(), v[1].get<double>()};
    throw ParseError("expected a number or an [re, im] pair, got " + v.dump());
}

inline json complex_to_json(Complex c) { return json::array({c.real(), c.imag()}); }

inline Matrix parse_matrix(const json& v) {
    if (!v.is_array() || v.empty()) throw ParseError("matrix must be a nonempty array of rows");
    const auto rows = static_cast<Eigen::Index>(v.size());
    Matrix m(rows, rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = v[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != rows)
            throw ParseError("matrix must be square");
        for (Eigen::Index k = 0; k < rows; ++k) m(i, k) = parse_complex(row[static_cast<std::size_t>(k)]);
    }
    return m;
}

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(complex_to_json(m(i, k)));
        rows.push_back(row);
    }
    return rows;
}

inline Measure parse_measure(const json& v, double horizon) {
    const auto kind = get_or<std::string>(v, "kind", "lebesgue");
    if (kind == "lebesgue") return Measure::lebesgue(horizon);
    if (kind == "uniform-probability" || kind == "uniform_probability") return Measure::uniform_probability(horizon);
    if (kind == "density") {
        std::vector<Measure::Piece> pieces;
        for (const auto& p : require(v, "pieces"))
            pieces.push_back({require(p, "from").get<double>(), require(p, "to").get<double>(),
                              require(p, "coeffs").get<std::vector<double>>()});
        return Measure::from_density(horizon, std::move(pieces));
    }
    throw ParseError("unknown measure kind '" + kind + "'");
}

inline OperatorFamily parse_family(const json& v, double horizon, Eigen::Index dim) {
    const Measure mu = parse_measure(v.value("measure", json::object()), horizon);
    auto check = [dim](const Matrix& a) {
        if (a.rows() != dim) throw ParseError("family matrix dimension differs from dim");
        return a;
    };
    if (v.contains("matrix")) return OperatorFamily::constant(check(parse_matrix(v.at("matrix"))), mu);
    const auto mode_name = get_or<std::string>(v, "interpolation", "piecewise-constant");
    Interpolation mode;
    if (mode_name == "piecewise-constant" || mode_name == "piecewise_constant") mode = Interpolation::piecewise_constant;
    else if (mode_name == "linear") mode = Interpolation::linear;
    else throw ParseError("unknown interpolation '" + mode_name + "'");
    std::vector<double> times;
    std::vector<Matrix> samples;
    for (const auto& s : require(v, "samples")) {
        times.push_back(require(s, "time").get<double>());
        samples.push_back(check(parse_matrix(require(s, "matrix"))));
    }
    return OperatorFamily(std::move(times), std::move(samples), mu, mode, get_or<bool>(v, "self_commuting", false));
}

/// Series with radii equal to the family weights.
inline PowerSeries parse_series(const json& v, const std::vector<double>& radii) {
    const int k = static_cast<int>(radii.size());
    const auto named = get_or<std::string>(v, "named", "");
    const int n = get_or<int>(v, "max_degree", 20);
    if (named == "exp") return PowerSeries::exp_sum(radii, n);
    if (named == "geometric") return PowerSeries::geometric(radii, n);
    if (named == "constant") return PowerSeries::constant(parse_complex(v.value("value", json(1.0))), radii);
    if (!named.empty() && named != "polynomial") throw ParseError("unknown named series '" + named + "'");
    PowerSeries::Coefficients c;
    int deg = 0;
    for (const auto& e : require(v, "coeffs")) {
        auto m = require(e, "index").get<MultiIndex>();
        if (static_cast<int>(m.size()) != k) throw ParseError("coefficient index arity differs from family count");
        deg = std::max(deg, total_degree(m));
        c[m] += parse_complex(require(e, "value"));
    }
    return PowerSeries(k, std::move(c), radii, get_or<int>(v, "max_degree", deg));
}

struct QuadratureConfig {
    double quad_tol = 1e-11;
    int contour_nodes = 64;
    double picard_tol = 1e-13;
    int max_simplex_order = 8;
};

struct McConfig {
    std::size_t paths = 100000;
    std::size_t steps = 100;
    std::uint64_t seed = 1;
};

struct ProblemSpec {
    std::optional<DisentanglingProblem> problem;
    double time = 0.0;
    std::vector<std::string> checks;
    QuadratureConfig quadrature;
    McConfig mc;
    std::optional<double> tolerance;
    std::vector<Complex> scale;
    json fixtures = json::object();
    json raw;
};

inline ProblemSpec parse_spec(const json& j) {
    if (!j.is_object()) throw ParseError("spec must be a JSON object");
    ProblemSpec s;
    s.raw = j;
    try {
        if (j.contains("quadrature")) {
            const auto& q = j.at("quadrature");
            s.quadrature.quad_tol = get_or(q, "quad_tol", s.quadrature.quad_tol);
            s.quadrature.contour_nodes = get_or(q, "contour_nodes", s.quadrature.contour_nodes);
            s.quadrature.picard_tol = get_or(q, "picard_tol", s.quadrature.picard_tol);
            s.quadrature.max_simplex_order = get_or(q, "max_simplex_order", s.quadrature.max_simplex_order);
        }
        if (j.contains("mc")) {
            const auto& m = j.at("mc");
            s.mc.paths = get_or<std::size_t>(m, "paths", s.mc.paths);
            s.mc.steps = get_or<std::size_t>(m, "steps", s.mc.steps);
            s.mc.seed = get_or<std::uint64_t>(m, "seed", s.mc.seed);
        }
        s.checks = get_or<std::vector<std::string>>(j, "checks", {});
        if (j.contains("tolerance")) s.tolerance = j.at("tolerance").get<double>();
        s.fixtures = j.value("fixtures", json::object());
        if (!j.contains("generator")) {
            s.time = get_or<double>(j, "time", get_or<double>(j, "horizon", 1.0));
            return s;
        }
        const double horizon = require(j, "horizon").get<double>();
        if (!(horizon > 0.0)) throw ParseError("horizon must be positive");
        s.time = get_or<double>(j, "time", horizon);
        const Matrix alpha = parse_matrix(j.at("generator"));
        if (j.contains("dim") && j.at("dim").get<Eigen::Index>() != alpha.rows())
            throw ParseError("generator dimension differs from dim");
        std::vector<OperatorFamily> fams;
        for (const auto& f : require(j, "families")) fams.push_back(parse_family(f, horizon, alpha.rows()));
        if (fams.empty()) throw ParseError("at least one family is required");
        const auto radii = family_weights(fams);
        PowerSeries g = j.contains("series") ? parse_series(j.at("series"), radii) : PowerSeries::constant(1.0, radii);
        s.problem.emplace(alpha, std::move(fams), std::move(g), s.time);
        if (j.contains("scale"))
            for (const auto& c : j.at("scale")) s.scale.push_back(parse_complex(c));
        else
            s.scale.assign(s.problem->arity(), Complex(1.0));
        if (s.scale.size() != s.problem->arity()) throw ParseError("scale needs one entry per family");
    } catch (const json::exception& e) {
        throw ParseError(e.what());
    } catch (const InvalidProblem& e) {
        throw ParseError(e.what());
    } catch (const InvalidMeasure& e) {
        throw ParseError(e.what());
    } catch (const InvalidFamily& e) {
        throw ParseError(e.what());
    }
    return s;
}

/// Potential document: {kind, grid: {x_min, x_max, h}, values | named, ...}.
/// Named shapes: "constant" {value}, "gaussian" {amplitude, width, center},
/// and for time-dependent potentials "modulated-gaussian" {amplitude, width,
/// frequency} = amplitude cos(frequency s) exp(-x^2 / (2 width^2)).
inline Potential parse_potential(const json& j) {
    try {
        const auto& g = require(j, "grid");
        const auto grid = SpatialGrid::covering(get_or(g, "x_min", -8.0), get_or(g, "x_max", 8.0), get_or(g, "h", 0.05));
        const auto kind = get_or<std::string>(j, "kind", "time-independent");
        const auto named = get_or<std::string>(j, "named", "");
        const double amp = get_or(j, "amplitude", get_or(j, "value", 0.0));
        const double width = get_or(j, "width", 1.0), center = get_or(j, "center", 0.0);
        if (kind == "time-independent" || kind == "time_independent") {
            if (j.contains("values")) return Potential::time_independent(grid, j.at("values").get<std::vector<double>>());
            if (named == "constant") return Potential::time_independent(grid, [amp](double) { return amp; });
            if (named == "gaussian")
                return Potential::time_independent(grid, [=](double x) {
                    const double u = (x - center) / width;
                    return amp * std::exp(-0.5 * u * u);
                });
            throw ParseError("potential needs 'values' or a known 'named' shape");
        }
        if (kind == "time-dependent" || kind == "time_dependent") {
            const auto times = require(j, "times").get<std::vector<double>>();
            if (j.contains("values"))
                return Potential::time_dependent(grid, times, j.at("values").get<std::vector<std::vector<double>>>());
            if (named == "modulated-gaussian") {
                const double w = get_or(j, "frequency", 1.0);
                return Potential::time_dependent(grid, times, [=](double s, double x) {
                    const double u = (x - center) / width;
                    return amp * std::cos(w * s) * std::exp(-0.5 * u * u);
                });
            }
            throw ParseError("time-dependent potential needs 'values' or named 'modulated-gaussian'");
        }
        throw ParseError("unknown potential kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw ParseError(e.what());
    } catch (const PreconditionError& e) {
        throw ParseError(e.what());
    }
}

/// One check record of a report.
struct CheckRecord {
    std::string name;
    json value;
    double residual = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    json budget = json::object();
    double wall_time = 0.0;

    json to_json() const {
        return {{"check", name}, {"value", value},       {"residual", residual}, {"tolerance", tolerance},
                {"pass", pass},  {"error_budget", budget}, {"wall_time", wall_time}};
    }
};

/// Report body without wall-time fields (for bit-identical comparisons).
inline json strip_wall_times(json report) {
    if (report.contains("checks"))
        for (auto& c : report["checks"]) c.erase("wall_time");
    report.erase("wall_time");
    return report;
}

}  // namespace opcalc::io
