#pragma once

#include <adml/dataset.hpp>
#include <adml/error.hpp>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

namespace adml {

/// Neighbourhood sizes and the within/between trade-off of a patch.
struct PatchSpec {
    Index k_within = 10;
    Index k_between = 20;
    double beta = 0.1;

    void validate() const {
        if (k_within < 0 || k_between < 1 || !(beta > 0.0))
            throw Error(ErrorCode::InvalidArgument, "patch spec needs k_within >= 0, k_between >= 1, beta > 0");
    }
};

/// A centre sample with its nearest same-class and other-class neighbours.
/// All indices are local positions within the subset view.
struct Patch {
    Index center = 0;
    std::vector<Index> within;
    std::vector<Index> between;
    Eigen::VectorXd omega; ///< |within| ones followed by |between| entries of -beta

    Index size() const { return static_cast<Index>(within.size() + between.size()); }

    /// Centre first, then within, then between.
    std::vector<Index> members() const {
        std::vector<Index> out;
        out.reserve(within.size() + between.size() + 1);
        out.push_back(center);
        out.insert(out.end(), within.begin(), within.end());
        out.insert(out.end(), between.begin(), between.end());
        return out;
    }
};

/// (m+1)x(m+1) coefficient matrix of a patch's quadratic form, in the order
/// given by Patch::members().
struct LocalPenalty {
    Eigen::MatrixXd matrix;
    std::vector<Index> members;
};

namespace detail {

struct Candidate {
    double dist2;
    Index global;
    Index local;
    bool operator<(const Candidate& o) const { return dist2 < o.dist2 || (dist2 == o.dist2 && global < o.global); }
};

inline std::vector<Index> take_nearest(std::vector<Candidate>& cands, Index k) {
    const auto n = std::min<std::size_t>(cands.size(), static_cast<std::size_t>(k));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(n), cands.end());
    std::vector<Index> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(cands[i].local);
    return out;
}

} // namespace detail

/// Exact Euclidean neighbour search inside the subset. Distance ties go to the
/// smaller sample id. Classes with fewer than k members contribute what they have.
inline Patch find_patch(const SubsetView& subset, Index i, const PatchSpec& spec) {
    if (i < 0 || i >= subset.size()) throw Error(ErrorCode::InvalidArgument, "patch centre outside subset");
    std::vector<detail::Candidate> same;
    std::vector<detail::Candidate> other;
    const auto xi = subset.column(i);
    for (Index j = 0; j < subset.size(); ++j) {
        if (j == i) continue;
        detail::Candidate c{(subset.column(j) - xi).squaredNorm(), subset.global(j), j};
        (subset.same_class(i, j) ? same : other).push_back(c);
    }
    if (other.empty())
        throw Error(ErrorCode::NoBetweenClass, "sample " + std::to_string(subset.global(i)) + " has no other-class peer");

    Patch p;
    p.center = i;
    p.within = detail::take_nearest(same, spec.k_within);
    p.between = detail::take_nearest(other, spec.k_between);
    p.omega.resize(p.size());
    const auto nw = static_cast<Index>(p.within.size());
    p.omega.head(nw).setOnes();
    p.omega.tail(p.size() - nw).setConstant(-spec.beta);
    return p;
}

/// [[sum(w), -w^T], [-w, diag(w)]]; every row sums to zero.
inline LocalPenalty build_local_penalty(const Patch& patch) {
    const Index m = patch.omega.size();
    if (m < 1) throw Error(ErrorCode::InvalidArgument, "patch has no neighbours");
    LocalPenalty out;
    out.members = patch.members();
    out.matrix = Eigen::MatrixXd::Zero(m + 1, m + 1);
    out.matrix(0, 0) = patch.omega.sum();
    out.matrix.block(0, 1, 1, m) = -patch.omega.transpose();
    out.matrix.block(1, 0, m, 1) = -patch.omega;
    out.matrix.diagonal().tail(m) = patch.omega;
    return out;
}

enum class ScatterMode { Dense, Factored };

/// Subset scatter R_k = X_k L_k X_k^T. Dense mode stores the d x d matrix
/// (accumulated patch by patch from difference vectors); factored mode stores
/// the sparse N_k x N_k L_k and never forms a d x d product.
struct ScatterRep {
    ScatterMode mode = ScatterMode::Dense;
    Eigen::MatrixXd X;                ///< d x N_k subset features (both modes)
    Eigen::MatrixXd R;                ///< dense mode only
    Eigen::SparseMatrix<double> L;    ///< factored mode only
    Index patch_count = 0;
    Index skipped = 0;                ///< samples without an other-class peer

    Index dim() const { return X.rows(); }
    Index samples() const { return X.cols(); }
    bool has_dense() const { return mode == ScatterMode::Dense; }
    bool has_factors() const { return mode == ScatterMode::Factored; }

    Eigen::MatrixXd dense() const {
        if (has_dense()) return R;
        const Eigen::MatrixXd lx = L * X.transpose();
        const Eigen::MatrixXd r = X * lx;
        return 0.5 * (r + r.transpose());
    }

    /// R_k * W, evaluated right-to-left in factored mode.
    Eigen::MatrixXd apply(const Eigen::MatrixXd& w) const {
        if (w.rows() != dim()) throw Error(ErrorCode::ShapeMismatch, "operand rows must equal feature dimension");
        if (has_dense()) return R * w;
        const Eigen::MatrixXd xtw = X.transpose() * w;
        const Eigen::MatrixXd lxtw = L * xtw;
        return X * lxtw;
    }
};

/// Builds one patch per subset sample and sums their quadratic forms.
/// Samples without an other-class peer are skipped and counted.
inline ScatterRep accumulate_scatter(const SubsetView& subset, const PatchSpec& spec, ScatterMode mode) {
    spec.validate();
    ScatterRep rep;
    rep.mode = mode;
    rep.X = subset.matrix();
    const Index d = rep.dim();
    const Index n = rep.samples();
    if (mode == ScatterMode::Dense) rep.R = Eigen::MatrixXd::Zero(d, d);

    std::vector<Eigen::Triplet<double>> triplets;
    if (mode == ScatterMode::Factored)
        triplets.reserve(static_cast<std::size_t>(n * (3 * (spec.k_within + spec.k_between) + 1)));

    Eigen::MatrixXd diffs;
    for (Index i = 0; i < n; ++i) {
        Patch p;
        try {
            p = find_patch(subset, i, spec);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoBetweenClass) throw;
            ++rep.skipped;
            continue;
        }
        ++rep.patch_count;
        const auto members = p.members();
        const Index m = p.size();
        if (mode == ScatterMode::Dense) {
            // X_Ni L_i X_Ni^T = sum_j w_j (x_i - x_j)(x_i - x_j)^T
            diffs.resize(d, m);
            for (Index j = 0; j < m; ++j)
                diffs.col(j) = rep.X.col(i) - rep.X.col(members[static_cast<std::size_t>(j + 1)]);
            rep.R.noalias() += diffs * p.omega.asDiagonal() * diffs.transpose();
        } else {
            // Scatter L_i into L_k through the patch's selection indices.
            triplets.emplace_back(i, i, p.omega.sum());
            for (Index j = 0; j < m; ++j) {
                const Index g = members[static_cast<std::size_t>(j + 1)];
                const double w = p.omega(j);
                triplets.emplace_back(i, g, -w);
                triplets.emplace_back(g, i, -w);
                triplets.emplace_back(g, g, w);
            }
        }
    }
    if (rep.patch_count == 0)
        throw Error(ErrorCode::SubsetDegenerate,
                    "subset " + std::to_string(subset.subset_id) + " has no sample with an other-class peer");

    if (mode == ScatterMode::Dense) {
        rep.R = 0.5 * (rep.R + rep.R.transpose());
    } else {
        rep.L.resize(n, n);
        rep.L.setFromTriplets(triplets.begin(), triplets.end());
    }
    return rep;
}

} // namespace adml
