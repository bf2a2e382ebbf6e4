#pragma once

#include <adml/error.hpp>
#include <adml/linalg.hpp>
#include <adml/patch.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace adml {

enum class SolveMode { Auto, Direct, Gram };

constexpr std::string_view to_string(SolveMode m) noexcept {
    switch (m) {
    case SolveMode::Auto: return "auto";
    case SolveMode::Direct: return "direct";
    case SolveMode::Gram: return "gram";
    }
    return "auto";
}

struct SolveOptions {
    SolveMode mode = SolveMode::Auto;
    /// Gram-path regulariser; unset means 1e-8 * tr(X^T X) / N_k.
    std::optional<double> ridge;
};

/// Gram path when d > N_k, direct otherwise.
inline SolveMode resolve_mode(SolveMode requested, Index d, Index n) {
    if (requested != SolveMode::Auto) return requested;
    return d > n ? SolveMode::Gram : SolveMode::Direct;
}

/// Scatter mode each solve path consumes.
inline ScatterMode scatter_mode_for(SolveMode resolved) {
    return resolved == SolveMode::Gram ? ScatterMode::Factored : ScatterMode::Dense;
}

struct SubsetSolution {
    std::uint32_t subset_id = 0;
    MatrixXd W;            ///< d x q, orthonormal columns
    VectorXd eigenvalues;  ///< ascending, may be negative
    double sigma_max = 0.0; ///< largest singular value of R_k
    double sigma_min = 0.0; ///< smallest singular value of R_k
    Index rank = 0;
    SolveMode mode = SolveMode::Direct;
};

namespace detail {

inline void fill_spectrum_diagnostics(SubsetSolution& sol, const VectorXd& spectrum, Index d) {
    const VectorXd mags = spectrum.cwiseAbs();
    sol.sigma_max = mags.size() ? mags.maxCoeff() : 0.0;
    const double tol = 1e-10 * sol.sigma_max;
    sol.rank = static_cast<Index>((mags.array() > tol).count());
    // Any dimension beyond the available spectrum is a null direction of R_k.
    sol.sigma_min = mags.size() < d ? 0.0 : mags.minCoeff();
}

inline SubsetSolution solve_direct(const ScatterRep& scatter, Index q) {
    const auto full = symmetric_eigen(scatter.dense());
    SubsetSolution sol;
    sol.mode = SolveMode::Direct;
    sol.W = full.vectors.leftCols(q);
    sol.eigenvalues = full.values.head(q);
    fill_spectrum_diagnostics(sol, full.values, scatter.dim());
    return sol;
}

// W_k = X_k U_k turns R_k w = lambda w into L_k G u = lambda u with G = X^T X.
// That problem is similar to the symmetric G^{1/2} L_k G^{1/2} v = lambda v,
// u = G^{-1/2} v.
inline SubsetSolution solve_gram(const ScatterRep& scatter, Index q, std::optional<double> ridge_opt) {
    if (!scatter.has_factors())
        throw Error(ErrorCode::InvalidArgument, "gram solve needs a factored scatter");
    const Index n = scatter.samples();
    const MatrixXd& X = scatter.X;
    const MatrixXd gram = X.transpose() * X;
    const double ridge = ridge_opt.value_or(1e-8 * gram.trace() / static_cast<double>(n));
    if (ridge < 0.0) throw Error(ErrorCode::InvalidArgument, "ridge must be >= 0");

    Eigen::SelfAdjointEigenSolver<MatrixXd> gsolve(gram);
    const VectorXd g = gsolve.eigenvalues().array() + ridge;
    const double gmax = g.maxCoeff();
    const double gmin = g.minCoeff();
    if (!(gmin > 0.0) || gmax / gmin > 1e12)
        throw Error(ErrorCode::GramIllConditioned,
                    "Gram matrix condition exceeds 1e12 (ridge=" + std::to_string(ridge) + "); increase the ridge");
    const MatrixXd& E = gsolve.eigenvectors();
    const MatrixXd sqrt_g = E * g.cwiseSqrt().asDiagonal() * E.transpose();
    const MatrixXd inv_sqrt_g = E * g.cwiseSqrt().cwiseInverse().asDiagonal() * E.transpose();

    const MatrixXd l_sqrt = scatter.L * sqrt_g;
    const MatrixXd a = sqrt_g * l_sqrt;
    const auto reduced = symmetric_eigen(a);
    const MatrixXd u = inv_sqrt_g * reduced.vectors.leftCols(q);
    MatrixXd w = orthonormalize(X * u);

    // Rayleigh quotients on the true (unregularised) R_k.
    const MatrixXd xtw = X.transpose() * w;
    const MatrixXd lxtw = scatter.L * xtw;
    VectorXd rq(q);
    for (Index j = 0; j < q; ++j) rq(j) = xtw.col(j).dot(lxtw.col(j));

    std::vector<Index> order(static_cast<std::size_t>(q));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a_, Index b_) { return rq(a_) < rq(b_); });

    SubsetSolution sol;
    sol.mode = SolveMode::Gram;
    sol.W.resize(w.rows(), q);
    sol.eigenvalues.resize(q);
    for (Index j = 0; j < q; ++j) {
        sol.W.col(j) = w.col(order[static_cast<std::size_t>(j)]);
        sol.eigenvalues(j) = rq(order[static_cast<std::size_t>(j)]);
    }
    canonicalize_signs(sol.W);

    if (scatter.dim() <= n) {
        // R_k is small here; take the diagnostics from it exactly.
        fill_spectrum_diagnostics(sol, symmetric_eigen(scatter.dense()).values, scatter.dim());
    } else {
        fill_spectrum_diagnostics(sol, reduced.values, scatter.dim());
    }
    return sol;
}

} // namespace detail

/// Minimises tr(W^T R_k W) over orthonormal d x q W.
inline SubsetSolution solve_subset(const ScatterRep& scatter, Index q, const SolveOptions& opts = {}) {
    const Index d = scatter.dim();
    const Index n = scatter.samples();
    if (q < 1 || q > std::min(d, n))
        throw Error(ErrorCode::BadDimension,
                    "q=" + std::to_string(q) + " outside [1, min(d=" + std::to_string(d) + ", N_k=" + std::to_string(n) + ")]");
    const SolveMode mode = resolve_mode(opts.mode, d, n);
    return mode == SolveMode::Gram ? detail::solve_gram(scatter, q, opts.ridge) : detail::solve_direct(scatter, q);
}

} // namespace adml
