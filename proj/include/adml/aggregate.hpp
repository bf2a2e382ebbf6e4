#pragma once

#include <adml/error.hpp>
#include <adml/linalg.hpp>
#include <adml/patch.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace adml {

/// What one subset hands to the aggregator.
struct SubsetContribution {
    std::uint32_t subset_id = 0;
    MatrixXd P;                ///< R_k W_k, d x q
    MatrixXd W;                ///< W_k, d x q
    std::optional<MatrixXd> R; ///< dense R_k, diagnostics and ADML-I only
};

using AggregationInput = std::vector<SubsetContribution>;

/// R_k W_k. In factored form this is X_k (L_k (X_k^T W_k)) and no d x d
/// matrix is formed.
inline MatrixXd compute_pk(const ScatterRep& scatter, const MatrixXd& w) {
    if (w.rows() != scatter.dim())
        throw Error(ErrorCode::ShapeMismatch, "W_k has " + std::to_string(w.rows()) + " rows, scatter has d=" +
                                                  std::to_string(scatter.dim()));
    return scatter.apply(w);
}

namespace detail {

/// Contributions in ascending subset-id order; the fold order is fixed by id.
inline std::vector<const SubsetContribution*> ordered(const AggregationInput& in) {
    if (in.empty()) throw Error(ErrorCode::InvalidArgument, "no subset contributions to aggregate");
    std::vector<const SubsetContribution*> out;
    out.reserve(in.size());
    for (const auto& c : in) out.push_back(&c);
    std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->subset_id < b->subset_id; });
    const auto d = out.front()->P.rows();
    const auto q = out.front()->P.cols();
    for (auto* c : out) {
        if (c->P.rows() != d || c->P.cols() != q || c->W.rows() != d || c->W.cols() != q)
            throw Error(ErrorCode::ShapeMismatch, "subset contributions disagree on (d, q)");
        if (c->R && (c->R->rows() != d || c->R->cols() != d))
            throw Error(ErrorCode::ShapeMismatch, "dense R_k has wrong shape");
    }
    return out;
}

inline MatrixXd sum_p(const std::vector<const SubsetContribution*>& cs) {
    MatrixXd m = MatrixXd::Zero(cs.front()->P.rows(), cs.front()->P.cols());
    for (auto* c : cs) m += c->P;
    return m;
}

inline MatrixXd sum_r(const std::vector<const SubsetContribution*>& cs) {
    const auto d = cs.front()->P.rows();
    MatrixXd r = MatrixXd::Zero(d, d);
    for (auto* c : cs) {
        if (!c->R) throw Error(ErrorCode::MissingDense, "subset " + std::to_string(c->subset_id) + " has no dense R_k");
        r += *c->R;
    }
    return r;
}

/// Singular values of a symmetric matrix are the magnitudes of its eigenvalues.
inline VectorXd symmetric_singular_values(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs();
}

} // namespace detail

/// Solves (sum R_k) W_A = sum R_k W_k by LU; R is never inverted explicitly.
inline MatrixXd aggregate_inverse(const AggregationInput& input) {
    const auto cs = detail::ordered(input);
    const MatrixXd r = detail::sum_r(cs);
    const VectorXd sv = detail::symmetric_singular_values(r);
    const double smax = sv.maxCoeff();
    const double smin = sv.minCoeff();
    if (!(smax > 0.0) || smin <= 1e-10 * smax)
        throw Error(ErrorCode::SingularAggregate,
                    "sum of R_k is numerically singular (sigma_min/sigma_max = " + std::to_string(smax > 0 ? smin / smax : 0.0) +
                        "); use adml2");
    return Eigen::PartialPivLU<MatrixXd>(r).solve(detail::sum_p(cs));
}

struct SvdAggregate {
    MatrixXd W;  ///< d x q, orthonormal, signs canonical
    VectorXd D;  ///< descending, >= 0
    MatrixXd V;  ///< q x q orthogonal
    bool rank_deficient = false; ///< min(D) <= 1e-12 max(D)
};

/// Thin SVD of sum_k R_k W_k; W_A is its left factor.
inline SvdAggregate aggregate_svd(const AggregationInput& input) {
    const auto cs = detail::ordered(input);
    const MatrixXd m = detail::sum_p(cs);
    if (m.norm() == 0.0) throw Error(ErrorCode::ZeroAggregate, "sum of R_k W_k is zero");
    Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    SvdAggregate out{svd.matrixU(), svd.singularValues(), svd.matrixV(), false};
    const VectorXd signs = canonicalize_signs(out.W);
    out.V = out.V * signs.asDiagonal();
    out.rank_deficient = out.D.minCoeff() <= 1e-12 * out.D.maxCoeff();
    return out;
}

// ---------------------------------------------------------------------------
// Consistency bounds

enum class BoundStatus { Holds, Violated, NotApplicable };

constexpr std::string_view to_string(BoundStatus s) noexcept {
    switch (s) {
    case BoundStatus::Holds: return "holds";
    case BoundStatus::Violated: return "violated";
    case BoundStatus::NotApplicable: return "n/a";
    }
    return "n/a";
}

/// Relative slack for the holds/violated decision, so that a zero deviation
/// is not reported as violated through rounding.
inline constexpr double kBoundSlack = 1e-10;

/// Distances are spectral norms. Undefined quantities are NaN.
struct BoundReport {
    Index K = 0;
    double S1 = std::numeric_limits<double>::quiet_NaN();
    double S2 = std::numeric_limits<double>::quiet_NaN();
    double S3 = std::numeric_limits<double>::quiet_NaN();
    double lhs = 0.0;        ///< ||W_A - W_hat||
    double max_dev = 0.0;    ///< max_k ||W_k - W_hat||
    double rhs1 = std::numeric_limits<double>::quiet_NaN();
    double rhs2 = std::numeric_limits<double>::quiet_NaN();
    double rhs3 = std::numeric_limits<double>::quiet_NaN();
    double rhs3_corrected = std::numeric_limits<double>::quiet_NaN();
    double min_diag_D = std::numeric_limits<double>::quiet_NaN();
    double sigma_max_R = 0.0;
    double sigma_min_R = 0.0;
    BoundStatus bound1 = BoundStatus::NotApplicable;
    BoundStatus bound2 = BoundStatus::NotApplicable;
    BoundStatus bound3 = BoundStatus::NotApplicable;
    BoundStatus bound3_corrected = BoundStatus::NotApplicable;

    std::string to_key_value() const;
    static std::string csv_header();
    std::string to_csv_row() const;
};

namespace detail {

inline BoundStatus judge(double lhs, double rhs) {
    if (!std::isfinite(rhs)) return BoundStatus::NotApplicable;
    return lhs <= rhs + kBoundSlack * (1.0 + rhs) ? BoundStatus::Holds : BoundStatus::Violated;
}

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace detail

/// Evaluates both consistency bounds for an aggregate W_A against a target.
///
/// Pass `D` when W_A came from the SVD rule; then the SVD-rule bounds are
/// judged and the inverse-rule bounds are reported as values only. Without
/// `D`, the inverse-rule bounds are judged.
///
/// rhs3 uses the constant K * S3; rhs3_corrected replaces
/// K * sigma_max(R) with sum_k sigma_max(R_k), which is what the triangle
/// inequality actually yields when R_k can partially cancel.
inline BoundReport bound_report(const AggregationInput& input, const MatrixXd& w_agg, const MatrixXd& w_target,
                                const std::optional<VectorXd>& D = std::nullopt) {
    const auto cs = detail::ordered(input);
    const MatrixXd r = detail::sum_r(cs);
    if (w_agg.rows() != r.rows() || w_target.rows() != r.rows() || w_agg.cols() != w_target.cols())
        throw Error(ErrorCode::ShapeMismatch, "W_A and target must both be d x q");

    BoundReport rep;
    rep.K = static_cast<Index>(cs.size());
    const double K = static_cast<double>(rep.K);

    double max_sigma_k = 0.0;
    double sum_sigma_k = 0.0;
    double min_lambda_k = std::numeric_limits<double>::infinity();
    bool all_pd = true;
    for (auto* c : cs) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(*c->R), Eigen::EigenvaluesOnly);
        const VectorXd& ev = es.eigenvalues();
        const double smax = ev.cwiseAbs().maxCoeff();
        max_sigma_k = std::max(max_sigma_k, smax);
        sum_sigma_k += smax;
        min_lambda_k = std::min(min_lambda_k, ev.minCoeff());
        if (!(ev.minCoeff() > 0.0)) all_pd = false;
        rep.max_dev = std::max(rep.max_dev, spectral_norm(c->W - w_target));
    }
    const VectorXd sv = detail::symmetric_singular_values(r);
    rep.sigma_max_R = sv.maxCoeff();
    rep.sigma_min_R = sv.minCoeff();
    rep.lhs = spectral_norm(w_agg - w_target);

    const bool r_invertible = rep.sigma_max_R > 0.0 && rep.sigma_min_R > 1e-10 * rep.sigma_max_R;
    if (r_invertible) {
        rep.S1 = K * max_sigma_k / rep.sigma_min_R;
        rep.rhs1 = rep.S1 * rep.max_dev;
    }
    if (all_pd) {
        rep.S2 = max_sigma_k / min_lambda_k;
        rep.rhs2 = rep.S2 * rep.max_dev;
    }
    if (D && D->size() > 0) {
        rep.min_diag_D = D->minCoeff();
        if (rep.min_diag_D > 1e-12 * D->maxCoeff()) {
            rep.S3 = rep.sigma_max_R / rep.min_diag_D;
            rep.rhs3 = K * rep.S3 * rep.max_dev + rep.S3 + 1.0;
            rep.rhs3_corrected = sum_sigma_k * rep.max_dev / rep.min_diag_D + rep.S3 + 1.0;
        }
    }

    if (D) {
        rep.bound3 = detail::judge(rep.lhs, rep.rhs3);
        rep.bound3_corrected = detail::judge(rep.lhs, rep.rhs3_corrected);
    } else {
        rep.bound1 = detail::judge(rep.lhs, rep.rhs1);
        rep.bound2 = detail::judge(rep.lhs, rep.rhs2);
    }
    return rep;
}

inline std::string BoundReport::to_key_value() const {
    std::ostringstream os;
    os << "K=" << K << '\n'
       << "S1=" << detail::fmt(S1) << '\n'
       << "S2=" << detail::fmt(S2) << '\n'
       << "S3=" << detail::fmt(S3) << '\n'
       << "lhs=" << detail::fmt(lhs) << '\n'
       << "max_dev=" << detail::fmt(max_dev) << '\n'
       << "rhs1=" << detail::fmt(rhs1) << '\n'
       << "rhs2=" << detail::fmt(rhs2) << '\n'
       << "rhs3=" << detail::fmt(rhs3) << '\n'
       << "rhs3_corrected=" << detail::fmt(rhs3_corrected) << '\n'
       << "min_diag_D=" << detail::fmt(min_diag_D) << '\n'
       << "sigma_max_R=" << detail::fmt(sigma_max_R) << '\n'
       << "sigma_min_R=" << detail::fmt(sigma_min_R) << '\n'
       << "bound1=" << to_string(bound1) << '\n'
       << "bound2=" << to_string(bound2) << '\n'
       << "bound3=" << to_string(bound3) << '\n'
       << "bound3_corrected=" << to_string(bound3_corrected) << '\n';
    return os.str();
}

inline std::string BoundReport::csv_header() {
    return "K,S1,S2,S3,lhs,max_dev,rhs1,rhs2,rhs3,rhs3_corrected,min_diag_D,sigma_max_R,sigma_min_R,"
           "bound1,bound2,bound3,bound3_corrected";
}

inline std::string BoundReport::to_csv_row() const {
    std::ostringstream os;
    os << K;
    for (double v : {S1, S2, S3, lhs, max_dev, rhs1, rhs2, rhs3, rhs3_corrected, min_diag_D, sigma_max_R, sigma_min_R})
        os << ',' << detail::fmt(v);
    for (auto s : {bound1, bound2, bound3, bound3_corrected}) os << ',' << to_string(s);
    return os.str();
}

} // namespace adml
