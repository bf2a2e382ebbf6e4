#pragma once

#include <adml/dataset.hpp>
#include <adml/error.hpp>
#include <adml/model.hpp>
#include <adml/random.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace adml {

/// ||W^T (x - y)||.
template <typename DerivedX, typename DerivedY>
double mdist(const MetricModel& model, const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
    if (x.size() != model.dim() || y.size() != model.dim())
        throw Error(ErrorCode::ShapeMismatch, "vector length does not match model dimension");
    return (model.W.transpose() * (x - y)).norm();
}

/// W^T X: q x N coordinates in the learned subspace.
inline Eigen::MatrixXd project(const MetricModel& model, const Eigen::MatrixXd& features) {
    if (features.rows() != model.dim()) throw Error(ErrorCode::ShapeMismatch, "feature rows do not match model dimension");
    return model.W.transpose() * features;
}

/// The identity model: plain Euclidean distance in the input space.
inline MetricModel euclidean_model(Index d) {
    MetricModel m;
    m.W = Eigen::MatrixXd::Identity(d, d);
    m.algo = Algo::Ddml;
    return m;
}

struct Neighbour {
    double dist = 0.0;
    Index id = 0;
};

/// Reference set pre-projected once, for repeated neighbour queries.
class NeighbourIndex {
public:
    NeighbourIndex(const LabeledDataset& ref, const MetricModel& model) : ref_(&ref), model_(&model) {
        if (ref.size() == 0) throw Error(ErrorCode::EmptyReference, "reference set is empty");
        projected_ = project(model, ref.features);
    }

    const LabeledDataset& reference() const { return *ref_; }

    /// k nearest by learned distance; equal distances go to the smaller id.
    template <typename Derived>
    std::vector<Neighbour> query(const Eigen::MatrixBase<Derived>& x, Index k) const {
        if (x.size() != model_->dim()) throw Error(ErrorCode::ShapeMismatch, "query length does not match model dimension");
        if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
        const Eigen::VectorXd px = model_->W.transpose() * x;
        std::vector<Neighbour> all(static_cast<std::size_t>(projected_.cols()));
        for (Index j = 0; j < projected_.cols(); ++j) all[static_cast<std::size_t>(j)] = {(projected_.col(j) - px).squaredNorm(), j};
        const auto n = std::min<std::size_t>(all.size(), static_cast<std::size_t>(k));
        auto less = [](const Neighbour& a, const Neighbour& b) { return a.dist < b.dist || (a.dist == b.dist && a.id < b.id); };
        std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), less);
        all.resize(n);
        for (auto& nb : all) nb.dist = std::sqrt(nb.dist);
        return all;
    }

private:
    const LabeledDataset* ref_;
    const MetricModel* model_;
    Eigen::MatrixXd projected_;
};

/// Majority vote among neighbours; vote ties go to the smaller summed
/// distance, then to the smaller label id.
inline int vote(const LabeledDataset& ref, const std::vector<Neighbour>& nbs) {
    std::map<int, std::pair<Index, double>> tally; // label -> (votes, summed distance)
    for (const auto& nb : nbs) {
        auto& t = tally[ref.label(nb.id)];
        ++t.first;
        t.second += nb.dist;
    }
    auto best = tally.begin();
    for (auto it = std::next(tally.begin()); it != tally.end(); ++it) {
        const auto& [votes, dsum] = it->second;
        if (votes > best->second.first || (votes == best->second.first && dsum < best->second.second)) best = it;
    }
    return best->first;
}

template <typename Derived>
int knn_classify(const LabeledDataset& ref, const MetricModel& model, const Eigen::MatrixBase<Derived>& x, Index k) {
    if (ref.size() == 0) throw Error(ErrorCode::EmptyReference, "reference set is empty");
    if (k < 1 || k > ref.size()) throw Error(ErrorCode::InvalidArgument, "k must be in [1, N_ref]");
    NeighbourIndex index(ref, model);
    return vote(ref, index.query(x, k));
}

/// Classifies every column of `queries`.
inline std::vector<int> knn_classify_all(const LabeledDataset& ref, const MetricModel& model,
                                         const Eigen::MatrixXd& queries, Index k) {
    if (ref.size() == 0) throw Error(ErrorCode::EmptyReference, "reference set is empty");
    if (k < 1 || k > ref.size()) throw Error(ErrorCode::InvalidArgument, "k must be in [1, N_ref]");
    NeighbourIndex index(ref, model);
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(queries.cols()));
    for (Index j = 0; j < queries.cols(); ++j) out.push_back(vote(ref, index.query(queries.col(j), k)));
    return out;
}

inline double accuracy(const std::vector<int>& predicted, const LabeledDataset& truth) {
    if (static_cast<Index>(predicted.size()) != truth.size())
        throw Error(ErrorCode::ShapeMismatch, "prediction count does not match sample count");
    Index hits = 0;
    for (Index j = 0; j < truth.size(); ++j) hits += predicted[static_cast<std::size_t>(j)] == truth.label(j);
    return truth.size() ? static_cast<double>(hits) / static_cast<double>(truth.size()) : 0.0;
}

// ---------------------------------------------------------------------------
// Tag annotation

/// Background rate of each tag over a reference set.
struct TagStats {
    std::vector<int> vocabulary; ///< ascending
    std::vector<double> rate;    ///< r0 per vocabulary entry
};

inline TagStats compute_tag_stats(const LabeledDataset& ref) {
    if (ref.size() == 0) throw Error(ErrorCode::EmptyReference, "reference set is empty");
    std::map<int, Index> counts;
    for (const auto& tags : ref.labels)
        for (int t : tags) ++counts[t];
    TagStats s;
    for (const auto& [tag, c] : counts) {
        s.vocabulary.push_back(tag);
        s.rate.push_back(static_cast<double>(c) / static_cast<double>(ref.size()));
    }
    return s;
}

/// Predicts a tag when its share among the neighbours strictly exceeds its
/// background rate.
inline LabelSet annotate_from_neighbours(const LabeledDataset& ref, const TagStats& stats,
                                         const std::vector<Neighbour>& nbs) {
    if (nbs.empty()) return {};
    std::map<int, Index> hits;
    for (const auto& nb : nbs)
        for (int t : ref.labels[static_cast<std::size_t>(nb.id)]) ++hits[t];
    LabelSet out;
    const double k = static_cast<double>(nbs.size());
    for (std::size_t i = 0; i < stats.vocabulary.size(); ++i) {
        const auto it = hits.find(stats.vocabulary[i]);
        const double r1 = it == hits.end() ? 0.0 : static_cast<double>(it->second) / k;
        if (r1 > stats.rate[i]) out.push_back(stats.vocabulary[i]);
    }
    return out;
}

inline constexpr Index kMaxAnnotateNeighbours = 15;

template <typename Derived>
LabelSet annotate(const LabeledDataset& ref, const TagStats& stats, const MetricModel& model,
                  const Eigen::MatrixBase<Derived>& x, Index k) {
    if (ref.size() == 0) throw Error(ErrorCode::EmptyReference, "reference set is empty");
    if (k < 1 || k > kMaxAnnotateNeighbours) throw Error(ErrorCode::InvalidArgument, "annotation k must be in [1, 15]");
    NeighbourIndex index(ref, model);
    return annotate_from_neighbours(ref, stats, index.query(x, k));
}

inline std::vector<LabelSet> annotate_all(const LabeledDataset& ref, const TagStats& stats, const MetricModel& model,
                                          const Eigen::MatrixXd& queries, Index k) {
    if (ref.size() == 0) throw Error(ErrorCode::EmptyReference, "reference set is empty");
    if (k < 1 || k > kMaxAnnotateNeighbours) throw Error(ErrorCode::InvalidArgument, "annotation k must be in [1, 15]");
    NeighbourIndex index(ref, model);
    std::vector<LabelSet> out;
    out.reserve(static_cast<std::size_t>(queries.cols()));
    for (Index j = 0; j < queries.cols(); ++j) out.push_back(annotate_from_neighbours(ref, stats, index.query(queries.col(j), k)));
    return out;
}

// ---------------------------------------------------------------------------
// F1

struct TagScore {
    int tag = 0;
    Index tp = 0, fp = 0, fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct F1Report {
    std::vector<TagScore> per_tag;
    double macro_f1 = 0.0;
};

/// F1 = 2PR / (P + R) from counts; every 0/0 case scores 0.
inline TagScore score_counts(int tag, Index tp, Index fp, Index fn) {
    TagScore s{tag, tp, fp, fn};
    s.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    s.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

/// Per-tag F1 and their unweighted mean. Without a vocabulary, every tag seen
/// in either argument is scored.
inline F1Report f1_scores(const std::vector<LabelSet>& predicted, const std::vector<LabelSet>& truth,
                          std::optional<std::vector<int>> vocabulary = std::nullopt) {
    if (predicted.size() != truth.size()) throw Error(ErrorCode::ShapeMismatch, "prediction and truth counts differ");
    std::set<int> vocab;
    if (vocabulary) {
        vocab.insert(vocabulary->begin(), vocabulary->end());
    } else {
        for (const auto& s : predicted) vocab.insert(s.begin(), s.end());
        for (const auto& s : truth) vocab.insert(s.begin(), s.end());
    }
    std::map<int, std::array<Index, 3>> counts; // tp, fp, fn
    for (int t : vocab) counts[t] = {0, 0, 0};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const std::set<int> p(predicted[i].begin(), predicted[i].end());
        const std::set<int> g(truth[i].begin(), truth[i].end());
        for (int t : vocab) {
            const bool in_p = p.count(t) > 0;
            const bool in_g = g.count(t) > 0;
            auto& c = counts[t];
            if (in_p && in_g) ++c[0];
            else if (in_p) ++c[1];
            else if (in_g) ++c[2];
        }
    }
    F1Report rep;
    for (const auto& [tag, c] : counts) rep.per_tag.push_back(score_counts(tag, c[0], c[1], c[2]));
    double sum = 0.0;
    for (const auto& s : rep.per_tag) sum += s.f1;
    rep.macro_f1 = rep.per_tag.empty() ? 0.0 : sum / static_cast<double>(rep.per_tag.size());
    return rep;
}

// ---------------------------------------------------------------------------
// Pair-distance histogram

struct Histogram {
    std::vector<double> edges; ///< bins + 1 edges over [0, 1]
    std::vector<Index> counts_within;
    std::vector<Index> counts_between;
    Index n_pairs = 0;
    double normalizer = 0.0;   ///< largest sampled distance
    double mean_within = 0.0;  ///< mean normalised within-class distance
    double mean_between = 0.0;
    bool degenerate = false;   ///< every sampled distance was zero

    void write_csv(std::ostream& out) const {
        out << "bin_lo,bin_hi,count_within,count_between\n";
        out.precision(17);
        for (std::size_t b = 0; b + 1 < edges.size(); ++b)
            out << edges[b] << ',' << edges[b + 1] << ',' << counts_within[b] << ',' << counts_between[b] << '\n';
    }
};

/// Samples unordered pairs with replacement (endpoints distinct), scales all
/// distances by the largest one and bins same-class and cross-class pairs
/// separately. Bins are [lo, hi) except the last, which also holds 1.
inline Histogram pair_histogram(const LabeledDataset& ds, const MetricModel& model, Index n_pairs, Index bins,
                                std::uint64_t seed) {
    if (ds.size() < 2) throw Error(ErrorCode::InvalidArgument, "pair histogram needs at least two samples");
    if (n_pairs < 1 || bins < 1) throw Error(ErrorCode::InvalidArgument, "n_pairs and bins must be >= 1");
    if (ds.dim() != model.dim()) throw Error(ErrorCode::ShapeMismatch, "dataset and model dimensions differ");

    const Eigen::MatrixXd proj = project(model, ds.features);
    Rng rng(seed);
    const auto n = static_cast<std::uint64_t>(ds.size());
    std::vector<double> dist(static_cast<std::size_t>(n_pairs));
    std::vector<char> same(static_cast<std::size_t>(n_pairs));
    for (Index p = 0; p < n_pairs; ++p) {
        const auto i = static_cast<Index>(rng.below(n));
        auto j = static_cast<Index>(rng.below(n - 1));
        if (j >= i) ++j;
        dist[static_cast<std::size_t>(p)] = (proj.col(i) - proj.col(j)).norm();
        same[static_cast<std::size_t>(p)] = ds.same_class(i, j);
    }

    Histogram h;
    h.n_pairs = n_pairs;
    h.normalizer = *std::max_element(dist.begin(), dist.end());
    h.degenerate = !(h.normalizer > 0.0);
    h.counts_within.assign(static_cast<std::size_t>(bins), 0);
    h.counts_between.assign(static_cast<std::size_t>(bins), 0);
    for (Index b = 0; b <= bins; ++b) h.edges.push_back(static_cast<double>(b) / static_cast<double>(bins));

    double sum_w = 0.0, sum_b = 0.0;
    Index n_w = 0, n_b = 0;
    for (std::size_t p = 0; p < dist.size(); ++p) {
        const double v = h.degenerate ? 0.0 : std::clamp(dist[p] / h.normalizer, 0.0, 1.0);
        const auto b = std::min<std::size_t>(static_cast<std::size_t>(v * static_cast<double>(bins)),
                                             static_cast<std::size_t>(bins - 1));
        if (same[p]) {
            ++h.counts_within[b];
            sum_w += v;
            ++n_w;
        } else {
            ++h.counts_between[b];
            sum_b += v;
            ++n_b;
        }
    }
    h.mean_within = n_w ? sum_w / static_cast<double>(n_w) : 0.0;
    h.mean_between = n_b ? sum_b / static_cast<double>(n_b) : 0.0;
    return h;
}

/// `label,p1,...,pq`, one row per sample. Multi-label rows join tags with ';'.
inline void write_projection_csv(std::ostream& out, const LabeledDataset& ds, const MetricModel& model) {
    const Eigen::MatrixXd proj = project(model, ds.features);
    out << "label";
    for (Index j = 0; j < model.q(); ++j) out << ",p" << (j + 1);
    out << '\n';
    out.precision(17);
    for (Index i = 0; i < ds.size(); ++i) {
        const auto& tags = ds.labels[static_cast<std::size_t>(i)];
        for (std::size_t t = 0; t < tags.size(); ++t) out << (t ? ";" : "") << tags[t];
        for (Index j = 0; j < model.q(); ++j) out << ',' << proj(j, i);
        out << '\n';
    }
}

} // namespace adml
