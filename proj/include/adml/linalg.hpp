#pragma once

#include <adml/error.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace adml {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

/// Flips each column so its largest-magnitude entry is positive (first such
/// entry on ties). Returns the applied signs.
inline VectorXd canonicalize_signs(MatrixXd& w) {
    VectorXd signs = VectorXd::Ones(w.cols());
    for (Index j = 0; j < w.cols(); ++j) {
        Index arg = 0;
        double best = -1.0;
        for (Index i = 0; i < w.rows(); ++i) {
            if (std::abs(w(i, j)) > best) {
                best = std::abs(w(i, j));
                arg = i;
            }
        }
        if (w.rows() > 0 && w(arg, j) < 0.0) {
            w.col(j) *= -1.0;
            signs(j) = -1.0;
        }
    }
    return signs;
}

struct EigenPairs {
    VectorXd values;  ///< ascending
    MatrixXd vectors; ///< unit columns matching `values`
};

/// Full symmetric eigendecomposition of (M + M^T)/2, ascending, signs canonical.
inline EigenPairs symmetric_eigen(const MatrixXd& m) {
    if (m.rows() != m.cols()) throw Error(ErrorCode::ShapeMismatch, "matrix must be square");
    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(symmetrize(m));
    if (solver.info() != Eigen::Success) throw Error(ErrorCode::BadDimension, "eigendecomposition did not converge");
    EigenPairs out{solver.eigenvalues(), solver.eigenvectors()};
    canonicalize_signs(out.vectors);
    return out;
}

/// Eigenvectors of the q algebraically smallest eigenvalues (which may be
/// negative), ascending.
inline EigenPairs eigen_smallest(const MatrixXd& m, Index q) {
    if (q < 1 || q > m.rows())
        throw Error(ErrorCode::BadDimension, "q=" + std::to_string(q) + " outside [1, " + std::to_string(m.rows()) + "]");
    auto full = symmetric_eigen(m);
    return {full.values.head(q), full.vectors.leftCols(q)};
}

/// Thin QR: orthonormal basis of the column span, same column count.
inline MatrixXd orthonormalize(const MatrixXd& a) {
    Eigen::HouseholderQR<MatrixXd> qr(a);
    MatrixXd q = qr.householderQ() * MatrixXd::Identity(a.rows(), a.cols());
    // Keep each basis vector pointing the same way as the column it came from.
    const MatrixXd r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
    for (Index j = 0; j < a.cols(); ++j)
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    return q;
}

inline VectorXd singular_values(const MatrixXd& m) {
    if (m.size() == 0) return VectorXd();
    return Eigen::BDCSVD<MatrixXd>(m).singularValues();
}

/// Largest singular value.
inline double spectral_norm(const MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    return singular_values(m)(0);
}

inline double orthonormality_error(const MatrixXd& w) {
    return (w.transpose() * w - MatrixXd::Identity(w.cols(), w.cols())).norm();
}

/// Frobenius distance between the orthogonal projectors onto span(W1) and
/// span(W2). Blind to column signs and rotations within the span.
inline double subspace_distance(const MatrixXd& w1, const MatrixXd& w2) {
    if (w1.rows() != w2.rows() || w1.cols() != w2.cols())
        throw Error(ErrorCode::ShapeMismatch, "subspace_distance needs equal shapes");
    if (orthonormality_error(w1) > 1e-6 || orthonormality_error(w2) > 1e-6)
        throw Error(ErrorCode::NotOrthonormal, "subspace_distance needs orthonormal columns");
    // ||P1 - P2||_F^2 = 2q - 2 ||W1^T W2||_F^2, but the direct form keeps
    // accuracy near zero.
    return (w1 * w1.transpose() - w2 * w2.transpose()).norm();
}

} // namespace adml
