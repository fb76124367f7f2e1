#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <complex>
#include <numbers>
#include <vector>

namespace opcalc {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXcd;

inline Matrix identity(Eigen::Index d) { return Matrix::Identity(d, d); }

/// Spectral norm (largest singular value).
inline double opnorm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    if (a.isZero(0.0)) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues()(0);
}

/// Logarithmic 2-norm: largest eigenvalue of the Hermitian part. Bounds
/// ||exp(s a)|| <= exp(s * lognorm(a)) for s >= 0.
inline double lognorm(const Matrix& a) {
    Matrix h = 0.5 * (a + a.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

/// Matrix exponential (Pade scaling and squaring, Higham 2005, via Eigen).
inline Matrix expm(const Matrix& a) { return a.exp(); }

inline RealMatrix expm(const RealMatrix& a) { return a.exp(); }

/// Largest entrywise modulus; used for fixed-point convergence tests.
inline double max_abs(const Matrix& a) {
    return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

}  // namespace opcalc
