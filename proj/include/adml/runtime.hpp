#pragma once

#include <adml/aggregate.hpp>
#include <adml/dataset.hpp>
#include <adml/error.hpp>
#include <adml/model.hpp>
#include <adml/patch.hpp>
#include <adml/solver.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace adml {

struct JobConfig {
    PatchSpec patch;
    Index q = 2;
    Algo algo = Algo::Adml2;
    Index subset_size = 600;
    Index K = 0;              ///< when > 0, overrides subset_size
    unsigned workers = 1;
    std::uint64_t seed = 0;
    SolveOptions solve;
    bool collect_dense_R = false;
    Index dense_cap = 2000;   ///< largest d for which dense R_k is materialised

    void validate() const {
        patch.validate();
        if (q < 1) throw Error(ErrorCode::InvalidArgument, "q must be >= 1");
        if (workers < 1) throw Error(ErrorCode::InvalidArgument, "workers must be >= 1");
        if (algo != Algo::Ddml && K <= 0 && subset_size < 1)
            throw Error(ErrorCode::InvalidK, "need K >= 1 or subset_size >= 1");
    }

    bool needs_dense() const { return algo == Algo::Adml1 || collect_dense_R; }

    /// Everything that affects the learned model; `workers` is deliberately absent.
    std::string canonical() const {
        std::string s = "algo=" + std::string(to_string(algo)) + ";q=" + std::to_string(q) +
                        ";kw=" + std::to_string(patch.k_within) + ";kb=" + std::to_string(patch.k_between);
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", patch.beta);
        s += std::string(";beta=") + buf;
        if (algo != Algo::Ddml) s += ";K=" + std::to_string(K) + ";subset_size=" + std::to_string(subset_size);
        s += ";seed=" + std::to_string(seed) + ";solve=" + std::string(to_string(solve.mode));
        if (solve.ridge) {
            std::snprintf(buf, sizeof buf, "%.17g", *solve.ridge);
            s += std::string(";ridge=") + buf;
        }
        return s;
    }

    /// FNV-1a over canonical().
    std::uint64_t hash() const {
        std::uint64_t h = 14695981039346656037ull;
        for (unsigned char c : canonical()) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }
};

struct WorkerResult {
    std::uint32_t subset_id = 0;
    SubsetSolution solution;
    MatrixXd P;                ///< R_k W_k
    std::optional<MatrixXd> R; ///< dense R_k when requested
    Index subset_size = 0;
    Index skipped = 0;
    double seconds = 0.0;      ///< wall time of the map task
};

// ---------------------------------------------------------------------------
// Wire format
//
// Little-endian: "ADMLWR1", u32 subset_id, u32 d, u32 q, u8 flags
// (bit0: dense R present), P (d*q f64 row-major), W (same), [R (d*d f64)],
// q f64 eigenvalues.

inline constexpr std::string_view kWireMagic = "ADMLWR1";

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_f64(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

inline void put_matrix(std::string& out, const MatrixXd& m) {
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) put_f64(out, m(i, j));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::uint64_t take(int n) {
        if (pos_ + static_cast<std::size_t>(n) > bytes_.size())
            throw Error(ErrorCode::BadFormat, "worker result truncated");
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::string_view raw(std::size_t n) {
        if (pos_ + n > bytes_.size()) throw Error(ErrorCode::BadFormat, "worker result truncated");
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    double f64() { return std::bit_cast<double>(take(8)); }

    MatrixXd matrix(Index rows, Index cols) {
        MatrixXd m(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) m(i, j) = f64();
        return m;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline std::string serialize(const WorkerResult& r) {
    const auto d = static_cast<std::uint32_t>(r.P.rows());
    const auto q = static_cast<std::uint32_t>(r.P.cols());
    std::string out(kWireMagic);
    detail::put_u32(out, r.subset_id);
    detail::put_u32(out, d);
    detail::put_u32(out, q);
    out.push_back(static_cast<char>(r.R ? 1 : 0));
    detail::put_matrix(out, r.P);
    detail::put_matrix(out, r.solution.W);
    if (r.R) detail::put_matrix(out, *r.R);
    for (Index j = 0; j < r.solution.eigenvalues.size(); ++j) detail::put_f64(out, r.solution.eigenvalues(j));
    return out;
}

/// Restores the fields carried on the wire; timing and spectral diagnostics
/// are not transmitted.
inline WorkerResult deserialize(std::string_view bytes) {
    detail::Reader rd(bytes);
    if (rd.raw(kWireMagic.size()) != kWireMagic) throw Error(ErrorCode::BadFormat, "bad worker result magic");
    WorkerResult r;
    r.subset_id = static_cast<std::uint32_t>(rd.take(4));
    const auto d = static_cast<Index>(rd.take(4));
    const auto q = static_cast<Index>(rd.take(4));
    const auto flags = rd.take(1);
    if (flags & ~std::uint64_t{1}) throw Error(ErrorCode::BadFormat, "unknown worker result flags");
    r.P = rd.matrix(d, q);
    r.solution.W = rd.matrix(d, q);
    r.solution.subset_id = r.subset_id;
    if (flags & 1u) r.R = rd.matrix(d, d);
    r.solution.eigenvalues.resize(q);
    for (Index j = 0; j < q; ++j) r.solution.eigenvalues(j) = rd.f64();
    if (!rd.done()) throw Error(ErrorCode::BadFormat, "trailing bytes after worker result");
    return r;
}

// ---------------------------------------------------------------------------
// Map / reduce

/// Patches, scatter, subset eigensolve and R_k W_k for one subset. Pure in
/// (subset, cfg) apart from the recorded wall time.
inline WorkerResult map_task(const SubsetView& subset, const JobConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    const Index d = subset.dim();
    if (cfg.needs_dense() && d > cfg.dense_cap)
        throw Error(ErrorCode::MissingDense, "d=" + std::to_string(d) + " exceeds the dense cap " +
                                                 std::to_string(cfg.dense_cap));
    const SolveMode mode = resolve_mode(cfg.solve.mode, d, subset.size());
    const ScatterRep scatter = accumulate_scatter(subset, cfg.patch, scatter_mode_for(mode));

    SolveOptions opts = cfg.solve;
    opts.mode = mode;
    WorkerResult r;
    r.subset_id = subset.subset_id;
    r.subset_size = subset.size();
    r.skipped = scatter.skipped;
    r.solution = solve_subset(scatter, cfg.q, opts);
    r.solution.subset_id = subset.subset_id;
    r.P = compute_pk(scatter, r.solution.W);
    if (cfg.needs_dense()) r.R = scatter.dense();
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

struct ReduceOutput {
    MetricModel model;
    std::optional<SvdAggregate> svd; ///< set for adml2
};

/// Folds results in ascending subset-id order, whatever their arrival order.
inline ReduceOutput reduce_fold(std::vector<WorkerResult> results, const JobConfig& cfg) {
    if (results.empty()) throw Error(ErrorCode::SubsetDegenerate, "no valid subset results to aggregate");
    std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.subset_id < b.subset_id; });

    ReduceOutput out;
    out.model.algo = cfg.algo;
    out.model.meta.config_hash = cfg.hash();
    out.model.meta.K = static_cast<Index>(results.size());
    for (const auto& r : results) {
        out.model.meta.subset_sizes.push_back(r.subset_size);
        out.model.meta.skipped_samples += r.skipped;
    }

    if (cfg.algo == Algo::Ddml) {
        if (results.size() != 1) throw Error(ErrorCode::InvalidArgument, "ddml expects exactly one result");
        out.model.W = results.front().solution.W;
        return out;
    }

    AggregationInput input;
    input.reserve(results.size());
    for (auto& r : results) input.push_back({r.subset_id, r.P, r.solution.W, r.R});
    if (cfg.algo == Algo::Adml1) {
        out.model.W = aggregate_inverse(input);
    } else {
        out.svd = aggregate_svd(input);
        out.model.W = out.svd->W;
    }
    return out;
}

struct JobOutput {
    MetricModel model;
    std::vector<WorkerResult> results; ///< ascending subset id
    std::vector<std::uint32_t> degenerate;
    std::optional<SvdAggregate> svd;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

/// Split, concurrent map (bounded by cfg.workers), then the ordered reduce.
inline JobOutput run_job(const LabeledDataset& ds, const JobConfig& cfg) {
    cfg.validate();
    PhaseTimings timings;

    auto t0 = std::chrono::steady_clock::now();
    Split split;
    if (cfg.algo == Algo::Ddml) {
        split.subsets.push_back(full_view(ds));
        split.plan.K = 1;
    } else {
        split = cfg.K > 0 ? random_split(ds, cfg.K, cfg.seed) : random_split_by_size(ds, cfg.subset_size, cfg.seed);
    }
    timings.split_s = detail::seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const std::size_t n_tasks = split.subsets.size();
    std::vector<std::optional<WorkerResult>> slots(n_tasks);
    std::vector<char> degenerate(n_tasks, 0);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        while (true) {
            const std::size_t k = next.fetch_add(1);
            if (k >= n_tasks) return;
            try {
                slots[k] = map_task(split.subsets[k], cfg);
            } catch (const Error& e) {
                if (e.code() == ErrorCode::SubsetDegenerate) {
                    degenerate[k] = 1;
                } else {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::min<std::size_t>(cfg.workers, n_tasks);
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    timings.map_s = detail::seconds_since(t0);

    JobOutput out;
    for (std::size_t k = 0; k < n_tasks; ++k) {
        if (degenerate[k]) out.degenerate.push_back(split.subsets[k].subset_id);
        else out.results.push_back(std::move(*slots[k]));
    }

    t0 = std::chrono::steady_clock::now();
    auto reduced = reduce_fold(out.results, cfg);
    timings.reduce_s = detail::seconds_since(t0);

    out.model = std::move(reduced.model);
    out.svd = std::move(reduced.svd);
    out.model.meta.degenerate_subsets = out.degenerate;
    out.model.meta.timings = timings;
    return out;
}

inline MetricModel train(const LabeledDataset& ds, const JobConfig& cfg) { return run_job(ds, cfg).model; }

} // namespace adml
