#pragma once

#include "opcalc/collocation.hpp"
#include "opcalc/errors.hpp"
#include "opcalc/linalg.hpp"
#include "opcalc/power_series.hpp"
#include "opcalc/problem.hpp"

#include <map>
#include <memory>
#include <span>
#include <vector>

namespace opcalc {

/// Collocation grid and interaction-picture kernel for a problem on [0, t],
/// restricted to the families listed in `active` (all when empty).
inline std::shared_ptr<const PanelKernel> make_kernel(const DisentanglingProblem& problem, double t,
                                                      std::span<const double> scale_moduli,
                                                      const CollocationOptions& opt,
                                                      std::vector<std::size_t> active = {}) {
    if (active.empty())
        for (std::size_t j = 0; j < problem.arity(); ++j) active.push_back(j);
    std::vector<OperatorFamily> fams;
    for (auto j : active) fams.push_back(problem.family(j));
    std::vector<double> moduli(active.size(), 1.0);
    if (!scale_moduli.empty())
        for (std::size_t i = 0; i < active.size(); ++i) moduli[i] = scale_moduli[active[i]];
    const double h = choose_panel_length(problem.generator(), fams, moduli, opt);
    auto grid = std::make_shared<const CollocationGrid>(problem.breakpoints(t), h, opt.nodes_per_panel);
    return std::make_shared<const PanelKernel>(grid, problem.generator(), fams);
}

namespace detail {

/// [S; w^T] * h/2 as a complex (p+1) x p matrix: rows 0..p-1 give the
/// cumulative integral at the nodes, row p the integral over the panel.
inline Matrix extended_cumulative(const CollocationGrid& grid, double half) {
    const int p = grid.nodes_per_panel();
    Matrix s(p + 1, p);
    for (int i = 0; i < p; ++i)
        for (int k = 0; k < p; ++k) s(i, k) = half * grid.cumulative_matrix()(i, k);
    for (int k = 0; k < p; ++k) s(p, k) = half * grid.reference_rule().weights[k];
    return s;
}

inline Eigen::Map<Matrix> block_of_row(RowMatrix& m, Eigen::Index row, Eigen::Index d, Eigen::Index cols) {
    return Eigen::Map<Matrix>(m.row(row).data(), d, cols);
}
inline Eigen::Map<const Matrix> block_of_row(const RowMatrix& m, Eigen::Index row, Eigen::Index d,
                                             Eigen::Index cols) {
    return Eigen::Map<const Matrix>(m.row(row).data(), d, cols);
}

}  // namespace detail

struct PicardOptions {
    double tolerance = 1e-13;
    int max_iterations = 200;
};

struct PicardStats {
    int max_iterations_used = 0;
    int total_iterations = 0;
    double last_update = 0.0;
};

/// Panel-marching Picard iteration for
/// E(u) = e^{-u alpha} X0 + sum_j c_j int_0^u e^{-(u-s) alpha} A_j(s) E(s) mu_j(ds).
/// On each panel the fixed point of the collocated Volterra equation is
/// iterated until successive iterates differ by at most tolerance (relative).
inline CollocatedPath picard_solve(const PanelKernel& kernel, std::span<const Complex> scale, const Matrix& x0,
                                   const PicardOptions& opt = {}, PicardStats* stats = nullptr) {
    const auto& grid = kernel.grid();
    const int p = grid.nodes_per_panel();
    const Eigen::Index d = kernel.dim(), cols = x0.cols();
    const Eigen::Index width = d * cols;
    if (scale.size() != kernel.family_count()) throw PreconditionError("picard_solve: one scale per family");
    std::vector<RowMatrix> nodes;
    std::vector<Matrix> ends;
    nodes.reserve(grid.panel_count());
    ends.reserve(grid.panel_count());
    Matrix xa = x0;
    std::vector<Matrix> kc(p, Matrix(d, d));
    RowMatrix y(p, width), w(p, width), next(p + 1, width);
    Matrix s_ext;
    double s_half = -1.0;
    PicardStats st;
    for (std::size_t i = 0; i < grid.panel_count(); ++i) {
        const auto& pn = grid.panel(i);
        const double half = 0.5 * (pn.b - pn.a);
        if (half != s_half) {
            s_ext = detail::extended_cumulative(grid, half);
            s_half = half;
        }
        for (int k = 0; k < p; ++k) {
            kc[k].setZero();
            for (std::size_t j = 0; j < scale.size(); ++j)
                if (scale[j] != Complex(0.0)) kc[k].noalias() += scale[j] * kernel.k(i, k, j);
        }
        const Eigen::Map<const Eigen::Matrix<Complex, 1, Eigen::Dynamic>> xa_row(xa.data(), width);
        for (int k = 0; k < p; ++k) y.row(k) = xa_row;
        const double scale_ref = std::max(1.0, xa.cwiseAbs().maxCoeff());
        int it = 0;
        double update = 0.0;
        for (;;) {
            for (int k = 0; k < p; ++k)
                detail::block_of_row(w, k, d, cols).noalias() = kc[k] * detail::block_of_row(y, k, d, cols);
            next.noalias() = s_ext * w;
            next.rowwise() += xa_row;
            update = (next.topRows(p) - y).cwiseAbs().maxCoeff();
            y = next.topRows(p);
            ++it;
            if (update <= opt.tolerance * std::max(scale_ref, y.cwiseAbs().maxCoeff())) break;
            if (it >= opt.max_iterations || !std::isfinite(update))
                throw ConvergenceError("picard_solve: no convergence on panel [" + std::to_string(pn.a) + ", " +
                                           std::to_string(pn.b) + "] after " + std::to_string(it) +
                                           " iterations",
                                       update);
        }
        st.max_iterations_used = std::max(st.max_iterations_used, it);
        st.total_iterations += it;
        st.last_update = std::max(st.last_update, update);
        nodes.push_back(y);
        xa = kernel.minus_end(i) * detail::block_of_row(next, p, d, cols);
        ends.push_back(xa);
    }
    if (stats) *stats = st;
    return CollocatedPath(kernel.grid_ptr(), kernel.generator(), x0, std::move(nodes), std::move(ends));
}

/// Graded Dyson recursion over all multi-indices of total degree <= N:
/// L_m(u) = [m = 0] e^{-u alpha} X0 + sum_j int_0^u e^{-(u-s) alpha} A_j(s) L_{m-e_j}(s) mu_j(ds),
/// so that L_m(t) is the sum over merge patterns of the time-ordered integrals
/// with semigroup factors in between. Returns, for each weight vector w (indexed
/// like `multi_indices_up_to`), the path sum_m w_m L_m.
class GradedRecursion {
public:
    GradedRecursion(int arity, int max_degree)
        : arity_(arity), indices_(multi_indices_up_to(arity, max_degree)) {
        std::map<MultiIndex, std::size_t> pos;
        for (std::size_t i = 0; i < indices_.size(); ++i) pos[indices_[i]] = i;
        pred_.resize(indices_.size(), std::vector<long>(arity, -1));
        for (std::size_t i = 0; i < indices_.size(); ++i)
            for (int j = 0; j < arity; ++j)
                if (indices_[i][j] > 0) {
                    MultiIndex m = indices_[i];
                    --m[j];
                    pred_[i][j] = static_cast<long>(pos.at(m));
                }
    }

    const std::vector<MultiIndex>& indices() const noexcept { return indices_; }

    /// `finals`, if given, receives L_m(t) for every multi-index.
    std::vector<CollocatedPath> solve(const PanelKernel& kernel, const std::vector<std::vector<Complex>>& weights,
                                      const Matrix& x0, std::vector<Matrix>* finals = nullptr) const {
        if (static_cast<int>(kernel.family_count()) != arity_)
            throw PreconditionError("GradedRecursion: kernel family count differs from arity");
        for (const auto& w : weights)
            if (w.size() != indices_.size()) throw PreconditionError("GradedRecursion: weight vector size");
        const auto& grid = kernel.grid();
        const int p = grid.nodes_per_panel();
        const Eigen::Index d = kernel.dim(), cols = x0.cols(), width = d * cols;
        const std::size_t nm = indices_.size(), no = weights.size();
        std::vector<Matrix> la(nm, Matrix::Zero(d, cols));
        la[0] = x0;
        std::vector<RowMatrix> y(nm, RowMatrix(p, width));
        std::vector<std::vector<RowMatrix>> out_nodes(no);
        std::vector<std::vector<Matrix>> out_ends(no);
        RowMatrix w(p, width), next(p + 1, width), z(p, width);
        for (std::size_t i = 0; i < grid.panel_count(); ++i) {
            const auto& pn = grid.panel(i);
            const Matrix s_ext = detail::extended_cumulative(grid, 0.5 * (pn.b - pn.a));
            std::vector<Matrix> lb(nm);
            for (std::size_t mi = 0; mi < nm; ++mi) {
                const Eigen::Map<const Eigen::Matrix<Complex, 1, Eigen::Dynamic>> a_row(la[mi].data(), width);
                if (mi == 0) {
                    for (int k = 0; k < p; ++k) y[0].row(k) = a_row;
                    lb[0] = kernel.minus_end(i) * la[0];
                    continue;
                }
                w.setZero();
                for (int j = 0; j < arity_; ++j) {
                    const long pj = pred_[mi][j];
                    if (pj < 0) continue;
                    for (int k = 0; k < p; ++k)
                        detail::block_of_row(w, k, d, cols).noalias() +=
                            kernel.k(i, k, static_cast<std::size_t>(j)) *
                            detail::block_of_row(y[static_cast<std::size_t>(pj)], k, d, cols);
                }
                next.noalias() = s_ext * w;
                next.rowwise() += a_row;
                y[mi] = next.topRows(p);
                lb[mi] = kernel.minus_end(i) * detail::block_of_row(next, p, d, cols);
            }
            for (std::size_t o = 0; o < no; ++o) {
                z.setZero();
                Matrix e = Matrix::Zero(d, cols);
                for (std::size_t mi = 0; mi < nm; ++mi) {
                    const Complex c = weights[o][mi];
                    if (c == Complex(0.0)) continue;
                    z += c * y[mi];
                    e += c * lb[mi];
                }
                out_nodes[o].push_back(z);
                out_ends[o].push_back(std::move(e));
            }
            la = std::move(lb);
        }
        if (finals) *finals = la;
        std::vector<CollocatedPath> out;
        for (std::size_t o = 0; o < no; ++o) {
            Matrix start = Matrix::Zero(d, cols);
            if (!weights[o].empty()) start = weights[o][0] * x0;
            out.emplace_back(kernel.grid_ptr(), kernel.generator(), start, std::move(out_nodes[o]),
                             std::move(out_ends[o]));
        }
        return out;
    }

private:
    int arity_;
    std::vector<MultiIndex> indices_;
    std::vector<std::vector<long>> pred_;
};

}  // namespace opcalc
