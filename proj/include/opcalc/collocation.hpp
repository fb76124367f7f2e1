#pragma once

#include "opcalc/errors.hpp"
#include "opcalc/gauss_legendre.hpp"
#include "opcalc/linalg.hpp"
#include "opcalc/operator_family.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <vector>

namespace opcalc {

using RowMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct CollocationOptions {
    int nodes_per_panel = 16;
    double max_panel_length = 0.25;
    /// Upper bound on h * ||K|| per panel (K the interaction-picture integrand).
    double contraction_target = 0.75;
};

/// Composite Gauss-Legendre collocation grid on [0, t]: panels never straddle a
/// breakpoint, and each panel carries the spectral cumulative-integration
/// matrix of its nodes.
class CollocationGrid {
public:
    struct Panel {
        double a;
        double b;
    };

    CollocationGrid(std::vector<double> breakpoints, double max_length, int nodes_per_panel)
        : p_(nodes_per_panel) {
        if (p_ < 2) throw PreconditionError("CollocationGrid: need at least 2 nodes per panel");
        std::sort(breakpoints.begin(), breakpoints.end());
        for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
            const double a = breakpoints[i], b = breakpoints[i + 1];
            if (!(b > a)) continue;
            const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) / max_length - 1e-12)));
            for (int k = 0; k < pieces; ++k)
                panels_.push_back({a + (b - a) * k / pieces, k + 1 == pieces ? b : a + (b - a) * (k + 1) / pieces});
        }
        end_ = breakpoints.empty() ? 0.0 : breakpoints.back();
        build_reference();
    }

    int nodes_per_panel() const noexcept { return p_; }
    std::size_t panel_count() const noexcept { return panels_.size(); }
    const Panel& panel(std::size_t i) const { return panels_[i]; }
    const std::vector<Panel>& panels() const noexcept { return panels_; }
    double end() const noexcept { return end_; }

    /// Node k of panel i.
    double node(std::size_t i, int k) const {
        const auto& pn = panels_[i];
        return 0.5 * (pn.a + pn.b) + 0.5 * (pn.b - pn.a) * ref_.nodes[k];
    }

    const GaussRule& reference_rule() const noexcept { return ref_; }

    /// S(i, k) = int_{-1}^{x_i} l_k(x) dx on the reference panel.
    const Eigen::MatrixXd& cumulative_matrix() const noexcept { return cumulative_; }

    /// Panel containing s (the last panel for s = end).
    std::size_t locate(double s) const {
        if (panels_.empty()) throw DomainError("CollocationGrid: empty grid");
        auto it = std::upper_bound(panels_.begin(), panels_.end(), s,
                                   [](double v, const Panel& p) { return v < p.b; });
        if (it == panels_.end()) return panels_.size() - 1;
        return static_cast<std::size_t>(it - panels_.begin());
    }

    /// Lagrange basis values l_k(s) for s in panel i (barycentric form).
    std::vector<double> interpolation_weights(std::size_t i, double s) const {
        const auto& pn = panels_[i];
        const double x = (2.0 * s - pn.a - pn.b) / (pn.b - pn.a);
        std::vector<double> l(p_, 0.0);
        for (int k = 0; k < p_; ++k)
            if (x == ref_.nodes[k]) {
                l[k] = 1.0;
                return l;
            }
        double denom = 0.0;
        for (int k = 0; k < p_; ++k) {
            l[k] = bary_[k] / (x - ref_.nodes[k]);
            denom += l[k];
        }
        for (auto& v : l) v /= denom;
        return l;
    }

private:
    void build_reference() {
        ref_ = gauss_legendre(p_);
        cumulative_.resize(p_, p_);
        // Expand l_k in Legendre polynomials (exact under p-point Gauss), then
        // integrate termwise: int_{-1}^x P_n = (P_{n+1} - P_{n-1}) / (2n + 1).
        for (int i = 0; i < p_; ++i) {
            const double xi = ref_.nodes[i];
            std::vector<double> integral(p_);
            integral[0] = xi + 1.0;
            for (int n = 1; n < p_; ++n)
                integral[n] = (legendre(n + 1, xi) - legendre(n - 1, xi)) / (2.0 * n + 1.0);
            for (int k = 0; k < p_; ++k) {
                double s = 0.0;
                for (int n = 0; n < p_; ++n)
                    s += (2.0 * n + 1.0) / 2.0 * ref_.weights[k] * legendre(n, ref_.nodes[k]) * integral[n];
                cumulative_(i, k) = s;
            }
        }
        bary_.resize(p_);
        for (int k = 0; k < p_; ++k)
            bary_[k] = ((k % 2) ? -1.0 : 1.0) * std::sqrt((1.0 - ref_.nodes[k] * ref_.nodes[k]) * ref_.weights[k]);
    }

    int p_;
    std::vector<Panel> panels_;
    double end_ = 0.0;
    GaussRule ref_;
    Eigen::MatrixXd cumulative_;
    std::vector<double> bary_;
};

/// Interaction-picture data of a problem on a collocation grid. For a panel
/// [a, b] and node u: P+(u) = e^{(u-a) alpha}, P-(u) = e^{-(u-a) alpha}, and per
/// family K_j(u) = P+(u) A_j(u) rho_j(u) P-(u). Then, with
/// Y(u) = e^{(u-a) alpha} E(u), the propagator obeys
/// Y(u) = E(a) + sum_j c_j int_a^u K_j(v) Y(v) dv on the panel.
class PanelKernel {
public:
    PanelKernel(std::shared_ptr<const CollocationGrid> grid, const Matrix& generator,
                std::span<const OperatorFamily> families)
        : grid_(std::move(grid)), generator_(generator), families_(families.size()) {
        const int p = grid_->nodes_per_panel();
        const std::size_t np = grid_->panel_count();
        minus_.resize(np * p);
        minus_end_.resize(np);
        k_.resize(families_ * np * p);
        for (std::size_t i = 0; i < np; ++i) {
            const auto& pn = grid_->panel(i);
            minus_end_[i] = expm(Matrix(-(pn.b - pn.a) * generator));
            for (int k = 0; k < p; ++k) {
                const double u = grid_->node(i, k);
                Matrix plus = expm(Matrix((u - pn.a) * generator));
                Matrix minus = expm(Matrix(-(u - pn.a) * generator));
                for (std::size_t j = 0; j < families_; ++j) {
                    const auto& fam = families[j];
                    const double rho = fam.measure().density(u);
                    k_[(i * p + k) * families_ + j] = plus * (rho * fam.value(u)) * minus;
                }
                minus_[i * p + k] = std::move(minus);
            }
        }
    }

    const CollocationGrid& grid() const noexcept { return *grid_; }
    std::shared_ptr<const CollocationGrid> grid_ptr() const noexcept { return grid_; }
    const Matrix& generator() const noexcept { return generator_; }
    std::size_t family_count() const noexcept { return families_; }
    Eigen::Index dim() const noexcept { return generator_.rows(); }

    const Matrix& k(std::size_t panel, int node, std::size_t family) const {
        return k_[(panel * grid_->nodes_per_panel() + node) * families_ + family];
    }
    const Matrix& minus(std::size_t panel, int node) const {
        return minus_[panel * grid_->nodes_per_panel() + node];
    }
    const Matrix& minus_end(std::size_t panel) const { return minus_end_[panel]; }

private:
    std::shared_ptr<const CollocationGrid> grid_;
    Matrix generator_;
    std::size_t families_;
    std::vector<Matrix> minus_;
    std::vector<Matrix> minus_end_;
    std::vector<Matrix> k_;
};

/// A matrix-valued function of time stored on a collocation grid: values at
/// panel endpoints plus interaction-picture node values, so that
/// E(s) = e^{-(s-a) alpha} sum_k l_k(s) Y_k on panel [a, b].
class CollocatedPath {
public:
    CollocatedPath(std::shared_ptr<const CollocationGrid> grid, Matrix generator, Matrix start,
                   std::vector<RowMatrix> node_values, std::vector<Matrix> endpoint_values)
        : grid_(std::move(grid)),
          generator_(std::move(generator)),
          start_(std::move(start)),
          nodes_(std::move(node_values)),
          ends_(std::move(endpoint_values)) {}

    const CollocationGrid& grid() const noexcept { return *grid_; }
    Eigen::Index rows() const noexcept { return start_.rows(); }
    Eigen::Index cols() const noexcept { return start_.cols(); }

    /// Value at time 0.
    const Matrix& start() const noexcept { return start_; }
    /// Value at the end of the grid.
    const Matrix& final_value() const { return ends_.empty() ? start_ : ends_.back(); }
    /// Value at the end of panel i.
    const Matrix& endpoint(std::size_t i) const { return ends_[i]; }
    const RowMatrix& node_values(std::size_t panel) const { return nodes_[panel]; }

    Matrix value_at(double s) const {
        if (grid_->panel_count() == 0 || s <= 0.0) return start_;
        if (s > grid_->end() * (1 + 1e-14) + 1e-300) throw DomainError("CollocatedPath: time beyond grid");
        const std::size_t i = grid_->locate(s);
        const auto& pn = grid_->panel(i);
        if (s >= pn.b) return ends_[i];
        const auto l = grid_->interpolation_weights(i, s);
        Matrix y = Matrix::Zero(rows(), cols());
        for (int k = 0; k < grid_->nodes_per_panel(); ++k)
            y += l[k] * Eigen::Map<const Matrix>(nodes_[i].row(k).data(), rows(), cols());
        return expm(Matrix(-(s - pn.a) * generator_)) * y;
    }

    /// this += c * other (same grid).
    void add_scaled(Complex c, const CollocatedPath& other) {
        start_ += c * other.start_;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            nodes_[i] += c * other.nodes_[i];
            ends_[i] += c * other.ends_[i];
        }
    }

    void scale_by(Complex c) {
        start_ *= c;
        for (auto& n : nodes_) n *= c;
        for (auto& e : ends_) e *= c;
    }

    /// Panel endpoint times t_0 = 0 < t_1 < ... < t_Q.
    std::vector<double> times() const {
        std::vector<double> t{0.0};
        for (const auto& p : grid_->panels()) t.push_back(p.b);
        return t;
    }

private:
    std::shared_ptr<const CollocationGrid> grid_;
    Matrix generator_;
    Matrix start_;
    std::vector<RowMatrix> nodes_;
    std::vector<Matrix> ends_;
};

/// Panel length keeping h ||alpha|| and h sum_j |c_j| sup ||A_j rho_j|| bounded.
inline double choose_panel_length(const Matrix& generator, std::span<const OperatorFamily> families,
                                  std::span<const double> scale_moduli, const CollocationOptions& opt) {
    double h = opt.max_panel_length;
    const double a = opnorm(generator);
    if (a > 0.0) h = std::min(h, 0.25 / a);
    double drive = 0.0;
    for (std::size_t j = 0; j < families.size(); ++j) {
        const auto& fam = families[j];
        double rho_max = 0.0;
        for (const auto& pc : fam.measure().pieces())
            for (int k = 0; k <= 32; ++k)
                rho_max = std::max(rho_max, fam.measure().density_on_piece(
                                                static_cast<std::size_t>(&pc - fam.measure().pieces().data()),
                                                pc.from + (pc.to - pc.from) * k / 32.0));
        drive += scale_moduli[j] * fam.sup_norm() * rho_max;
    }
    // e^{2 h ||alpha||} <= e^{0.5} bounds the interaction-picture conjugation.
    if (drive > 0.0) h = std::min(h, opt.contraction_target / (std::exp(0.5) * drive));
    return h;
}

}  // namespace opcalc
