#pragma once

#include <adml/error.hpp>
#include <adml/random.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace adml {

using Index = Eigen::Index;

enum class LabelMode { Categorical, MultiLabel };

/// Sorted, duplicate-free label ids of one sample.
using LabelSet = std::vector<int>;

/// Features are stored feature-major: column j is sample j.
struct LabeledDataset {
    Eigen::MatrixXd features;
    LabelMode mode = LabelMode::Categorical;
    std::vector<LabelSet> labels;
    std::vector<Index> sample_ids;

    Index dim() const { return features.rows(); }
    Index size() const { return features.cols(); }

    /// Class id in categorical mode; first tag in multi-label mode.
    int label(Index i) const { return labels[static_cast<std::size_t>(i)].front(); }

    /// Categorical: equal class ids. Multi-label: at least one shared tag.
    bool same_class(Index i, Index j) const {
        const auto& a = labels[static_cast<std::size_t>(i)];
        const auto& b = labels[static_cast<std::size_t>(j)];
        if (mode == LabelMode::Categorical) return a.front() == b.front();
        auto ia = a.begin();
        auto ib = b.begin();
        while (ia != a.end() && ib != b.end()) {
            if (*ia == *ib) return true;
            if (*ia < *ib) ++ia; else ++ib;
        }
        return false;
    }

    void validate() const {
        if (size() < 1 || dim() < 1) throw Error(ErrorCode::EmptyFile, "dataset has no samples or no features");
        if (static_cast<Index>(labels.size()) != size())
            throw Error(ErrorCode::ShapeMismatch, "label count does not match sample count");
        if (!features.allFinite()) throw Error(ErrorCode::NonNumericFeature, "dataset contains NaN or Inf");
        for (const auto& l : labels) {
            if (l.empty()) throw Error(ErrorCode::MalformedRow, "sample without label");
            if (mode == LabelMode::Categorical && l.size() != 1)
                throw Error(ErrorCode::MalformedRow, "categorical sample with more than one label");
        }
    }
};

inline LabeledDataset make_dataset(Eigen::MatrixXd features, std::vector<LabelSet> labels,
                                   LabelMode mode = LabelMode::Categorical) {
    LabeledDataset ds;
    ds.features = std::move(features);
    ds.labels = std::move(labels);
    ds.mode = mode;
    ds.sample_ids.resize(static_cast<std::size_t>(ds.size()));
    for (Index i = 0; i < ds.size(); ++i) ds.sample_ids[static_cast<std::size_t>(i)] = i;
    ds.validate();
    return ds;
}

inline LabeledDataset make_dataset(Eigen::MatrixXd features, const std::vector<int>& classes) {
    std::vector<LabelSet> labels;
    labels.reserve(classes.size());
    for (int c : classes) labels.push_back({c});
    return make_dataset(std::move(features), std::move(labels), LabelMode::Categorical);
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            return out;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
}

inline bool parse_double(std::string_view token, double& value) {
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    const auto* end = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(token.data(), end, value);
    return ec == std::errc() && ptr == end && !token.empty();
}

inline bool parse_int(std::string_view token, int& value) {
    const auto* end = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(token.data(), end, value);
    return ec == std::errc() && ptr == end && !token.empty();
}

} // namespace detail

/// Reads `label,f1,...,fd` (categorical) or `tags,f1,...,fd` with `;`-separated
/// tag ids (multi-label). Blank lines are ignored.
inline LabeledDataset load_csv(std::istream& in, LabelMode mode) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line).empty())
        throw Error(ErrorCode::EmptyFile, "missing header line");
    const auto header = detail::split(line, ',');
    if (header.size() < 2) throw Error(ErrorCode::MalformedRow, "header needs a label column and at least one feature");
    const std::size_t d = header.size() - 1;

    std::vector<double> values;
    std::vector<LabelSet> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split(line, ',');
        if (fields.size() != header.size())
            throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": expected " +
                                                     std::to_string(header.size()) + " fields, got " +
                                                     std::to_string(fields.size()));
        LabelSet tags;
        const auto label_tokens =
            mode == LabelMode::MultiLabel ? detail::split(fields[0], ';') : std::vector<std::string_view>{fields[0]};
        for (auto token : label_tokens) {
            if (token.empty() && mode == LabelMode::MultiLabel) continue;
            int tag = 0;
            if (!detail::parse_int(token, tag))
                throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": bad label '" +
                                                         std::string(token) + "'");
            tags.push_back(tag);
        }
        if (tags.empty()) throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": no label");
        std::sort(tags.begin(), tags.end());
        tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
        labels.push_back(std::move(tags));

        for (std::size_t f = 1; f < fields.size(); ++f) {
            double v = 0.0;
            if (!detail::parse_double(fields[f], v) || !std::isfinite(v))
                throw Error(ErrorCode::NonNumericFeature, "line " + std::to_string(line_no) + ": feature '" +
                                                              std::string(fields[f]) + "'");
            values.push_back(v);
        }
    }
    if (labels.empty()) throw Error(ErrorCode::EmptyFile, "no data rows");

    const auto n = static_cast<Index>(labels.size());
    Eigen::MatrixXd features(static_cast<Index>(d), n);
    for (Index j = 0; j < n; ++j)
        for (Index f = 0; f < static_cast<Index>(d); ++f)
            features(f, j) = values[static_cast<std::size_t>(j) * d + static_cast<std::size_t>(f)];
    return make_dataset(std::move(features), std::move(labels), mode);
}

inline LabeledDataset load_csv(const std::string& path, LabelMode mode) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::EmptyFile, "cannot open " + path);
    return load_csv(in, mode);
}

/// Writes the format read by load_csv, with round-trip exact values.
inline void save_csv(std::ostream& out, const LabeledDataset& ds) {
    out << (ds.mode == LabelMode::MultiLabel ? "tags" : "label");
    for (Index f = 0; f < ds.dim(); ++f) out << ",f" << (f + 1);
    out << '\n' << std::setprecision(17);
    for (Index j = 0; j < ds.size(); ++j) {
        const auto& tags = ds.labels[static_cast<std::size_t>(j)];
        for (std::size_t t = 0; t < tags.size(); ++t) out << (t ? ";" : "") << tags[t];
        for (Index f = 0; f < ds.dim(); ++f) out << ',' << ds.features(f, j);
        out << '\n';
    }
}

inline void save_csv(const std::string& path, const LabeledDataset& ds) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path);
    save_csv(out, ds);
}

// ---------------------------------------------------------------------------
// Normalization

struct FeatureStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    Eigen::MatrixXd apply(const Eigen::MatrixXd& features) const {
        if (features.rows() != mean.size())
            throw Error(ErrorCode::ShapeMismatch, "feature count does not match normalization stats");
        return (features.colwise() - mean).array().colwise() / scale.array();
    }

    LabeledDataset apply(const LabeledDataset& ds) const {
        LabeledDataset out = ds;
        out.features = apply(ds.features);
        return out;
    }
};

/// `feature,mean,scale` rows, so held-out data can reuse training stats.
inline void save_stats(const std::string& path, const FeatureStats& stats) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path);
    out << "feature,mean,scale\n" << std::setprecision(17);
    for (Index f = 0; f < stats.mean.size(); ++f) out << f << ',' << stats.mean(f) << ',' << stats.scale(f) << '\n';
}

inline FeatureStats load_stats(const std::string& path) {
    std::ifstream in(path);
    std::string line;
    if (!in || !std::getline(in, line)) throw Error(ErrorCode::EmptyFile, "cannot read stats file " + path);
    std::vector<double> mean, scale;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split(line, ',');
        double m = 0.0, s = 0.0;
        if (fields.size() != 3 || !detail::parse_double(fields[1], m) || !detail::parse_double(fields[2], s) || !(s > 0.0))
            throw Error(ErrorCode::MalformedRow, "bad stats row '" + line + "'");
        mean.push_back(m);
        scale.push_back(s);
    }
    FeatureStats stats;
    stats.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Index>(mean.size()));
    stats.scale = Eigen::Map<Eigen::VectorXd>(scale.data(), static_cast<Index>(scale.size()));
    return stats;
}

struct Normalized {
    LabeledDataset data;
    FeatureStats stats;
};

/// Z-scores each feature with the sample standard deviation (N-1). A feature
/// with zero spread maps to zeros and records scale 1.
inline Normalized normalize(const LabeledDataset& ds) {
    if (ds.size() < 2) throw Error(ErrorCode::InvalidArgument, "normalize needs at least two samples");
    const double n = static_cast<double>(ds.size());
    FeatureStats stats;
    stats.mean = ds.features.rowwise().sum() / n;
    stats.scale.resize(ds.dim());
    for (Index f = 0; f < ds.dim(); ++f) {
        const auto centered = ds.features.row(f).array() - stats.mean(f);
        const double sd = std::sqrt(centered.square().sum() / (n - 1.0));
        const double magnitude = ds.features.row(f).cwiseAbs().maxCoeff();
        if (sd <= 1e-14 * magnitude) {
            // Dead column: anchor at the first value so every entry maps to 0.
            stats.mean(f) = ds.features(f, 0);
            stats.scale(f) = 1.0;
        } else {
            stats.scale(f) = sd;
        }
    }
    Normalized out{stats.apply(ds), stats};
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Two interleaved spiral sheets in 3-D. Class c sits at angle offset c*pi.
struct CoilSpec {
    Index n_per_class = 1000;
    double noise_sigma = 0.05;
    double z_halfwidth = 2.0;
    double turns = 1.0;
};

/// Each point: t ~ U[0, 2*pi*turns], r = 0.25 + 0.15 t,
/// (x, y) = r (cos, sin)(t + c*pi) + N(0, sigma^2), z ~ U[-h, h].
/// Samples alternate between the two classes.
inline LabeledDataset gen_coiled_surfaces(const CoilSpec& spec, std::uint64_t seed) {
    if (spec.n_per_class < 1) throw Error(ErrorCode::InvalidArgument, "n_per_class must be >= 1");
    if (spec.noise_sigma < 0.0 || spec.z_halfwidth <= 0.0 || spec.turns <= 0.0)
        throw Error(ErrorCode::InvalidArgument, "coil parameters out of range");
    Rng rng(seed);
    const Index n = 2 * spec.n_per_class;
    Eigen::MatrixXd x(3, n);
    std::vector<int> classes(static_cast<std::size_t>(n));
    const double t_max = 2.0 * std::numbers::pi * spec.turns;
    for (Index j = 0; j < n; ++j) {
        const int c = static_cast<int>(j % 2);
        const double t = rng.uniform(0.0, t_max);
        const double r = 0.25 + 0.15 * t;
        const double angle = t + c * std::numbers::pi;
        const double ex = spec.noise_sigma > 0.0 ? rng.normal(0.0, spec.noise_sigma) : 0.0;
        const double ey = spec.noise_sigma > 0.0 ? rng.normal(0.0, spec.noise_sigma) : 0.0;
        x(0, j) = r * std::cos(angle) + ex;
        x(1, j) = r * std::sin(angle) + ey;
        x(2, j) = rng.uniform(-spec.z_halfwidth, spec.z_halfwidth);
        classes[static_cast<std::size_t>(j)] = c;
    }
    return make_dataset(std::move(x), classes);
}

/// Appends `extra_dims` i.i.d. N(0, sigma^2) features.
inline LabeledDataset pad_with_noise(const LabeledDataset& ds, Index extra_dims, double sigma, std::uint64_t seed) {
    LabeledDataset out = ds;
    out.features.conservativeResize(ds.dim() + extra_dims, Eigen::NoChange);
    Rng rng(seed);
    for (Index j = 0; j < ds.size(); ++j)
        for (Index f = ds.dim(); f < out.dim(); ++f) out.features(f, j) = rng.normal(0.0, sigma);
    return out;
}

// ---------------------------------------------------------------------------
// Subsets

/// Non-owning view of a subset. `indices` are sample positions in `data`,
/// kept ascending.
struct SubsetView {
    const LabeledDataset* data = nullptr;
    std::vector<Index> indices;
    std::uint32_t subset_id = 0;

    Index size() const { return static_cast<Index>(indices.size()); }
    Index dim() const { return data->dim(); }
    Index global(Index local) const { return indices[static_cast<std::size_t>(local)]; }
    auto column(Index local) const { return data->features.col(global(local)); }
    bool same_class(Index a, Index b) const { return data->same_class(global(a), global(b)); }

    Eigen::MatrixXd matrix() const {
        Eigen::MatrixXd out(dim(), size());
        for (Index j = 0; j < size(); ++j) out.col(j) = column(j);
        return out;
    }
};

inline SubsetView full_view(const LabeledDataset& ds) {
    SubsetView view{&ds, {}, 0};
    view.indices.resize(static_cast<std::size_t>(ds.size()));
    for (Index i = 0; i < ds.size(); ++i) view.indices[static_cast<std::size_t>(i)] = i;
    return view;
}

struct SplitPlan {
    Index K = 0;
    std::uint64_t seed = 0;
    std::vector<std::uint32_t> assignment; ///< sample position -> subset id in [0, K)
};

struct Split {
    std::vector<SubsetView> subsets;
    SplitPlan plan;
};

/// Shuffles with the seed, then cuts the permutation into K contiguous runs
/// whose sizes differ by at most one (larger runs first).
inline Split random_split(const LabeledDataset& ds, Index K, std::uint64_t seed) {
    const Index n = ds.size();
    if (K < 1 || K > n)
        throw Error(ErrorCode::InvalidK, "K=" + std::to_string(K) + " outside [1, " + std::to_string(n) + "]");
    std::vector<Index> perm(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(perm);

    Split out;
    out.plan.K = K;
    out.plan.seed = seed;
    out.plan.assignment.assign(static_cast<std::size_t>(n), 0);
    const Index base = n / K;
    const Index extra = n % K;
    auto it = perm.begin();
    for (Index k = 0; k < K; ++k) {
        const Index len = base + (k < extra ? 1 : 0);
        SubsetView view{&ds, std::vector<Index>(it, it + len), static_cast<std::uint32_t>(k)};
        it += len;
        std::sort(view.indices.begin(), view.indices.end());
        for (Index i : view.indices) out.plan.assignment[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(k);
        out.subsets.push_back(std::move(view));
    }
    return out;
}

/// K = ceil(N / subset_size).
inline Split random_split_by_size(const LabeledDataset& ds, Index subset_size, std::uint64_t seed) {
    if (subset_size < 1) throw Error(ErrorCode::InvalidK, "subset_size must be >= 1");
    return random_split(ds, (ds.size() + subset_size - 1) / subset_size, seed);
}

} // namespace adml
