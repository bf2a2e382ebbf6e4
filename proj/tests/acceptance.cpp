// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <adml/adml.hpp>

#include "test_support.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace adml;

namespace {

using Clock = std::chrono::steady_clock;

double seconds(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    std::string detail;
};

void fail(Outcome& o, const std::string& why) {
    if (o.pass) o.detail = why;
    o.pass = false;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double trace_form(const MatrixXd& r, const MatrixXd& w) { return (w.transpose() * r * w).trace(); }

LabeledDataset materialize(const SubsetView& v) {
    LabeledDataset out;
    out.features = v.matrix();
    out.mode = v.data->mode;
    for (Index i : v.indices) {
        out.labels.push_back(v.data->labels[static_cast<std::size_t>(i)]);
        out.sample_ids.push_back(v.data->sample_ids[static_cast<std::size_t>(i)]);
    }
    return out;
}

/// Random labelled subset with at least two classes.
LabeledDataset random_subset(Rng& rng, Index d, Index n) {
    const int classes = 2 + static_cast<int>(rng.below(2));
    return oracle::random_dataset(rng, d, std::max<Index>(n, classes), classes, rng.uniform(0.0, 2.0));
}

// 1 ------------------------------------------------------------------------

Outcome quadratic_form() {
    const auto t0 = Clock::now();
    Outcome o;
    Rng rng(101);
    double worst = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
        const Index d = 1 + static_cast<Index>(rng.below(10));
        const Index n = 2 + static_cast<Index>(rng.below(29));
        const auto ds = random_subset(rng, d, n);
        const auto view = full_view(ds);
        const Index kw = static_cast<Index>(rng.below(6));
        const Index kb = 1 + static_cast<Index>(rng.below(5));
        const double beta = rng.uniform(0.1, 2.0);
        const auto dense = accumulate_scatter(view, {kw, kb, beta}, ScatterMode::Dense).R;
        const auto factored = accumulate_scatter(view, {kw, kb, beta}, ScatterMode::Factored).dense();
        for (int t = 0; t < 10; ++t) {
            const MatrixXd w = oracle::gaussian(rng, d, 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(d))));
            const double direct = oracle::direct_patch_objective(view, kw, kb, beta, w);
            worst = std::max({worst, oracle::rel_err(trace_form(dense, w), direct), oracle::rel_err(trace_form(factored, w), direct)});
        }
    }
    const double s = seconds(t0);
    if (worst > 1e-10) fail(o, fmt("max relative error %.3g > 1e-10", worst));
    if (s >= 5.0) fail(o, fmt("runtime %.2fs >= 5s", s));
    if (o.pass) o.detail = fmt("100 subsets x 10 W, max rel err %.2g, %.2fs", worst, s);
    return o;
}

// 2 ------------------------------------------------------------------------

Outcome eigensolver_optimality() {
    const auto t0 = Clock::now();
    Outcome o;
    Rng rng(202);
    double worst = 0.0;
    int beaten = 0;
    for (int inst = 0; inst < 20; ++inst) {
        const Index d = 2 + static_cast<Index>(rng.below(29));
        const Index q = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(d)));
        const MatrixXd m = oracle::random_symmetric(rng, d);
        const auto sol = eigen_smallest(m, q);
        const double best = trace_form(m, sol.vectors);
        for (int c = 0; c < 1000; ++c) beaten += trace_form(m, oracle::random_orthonormal(rng, d, q)) < best;
        worst = std::max(worst, oracle::rel_err(best, oracle::jacobi_eigenvalues(m).head(q).sum()));
    }
    const double s = seconds(t0);
    if (beaten) fail(o, fmt("%d random competitors had a smaller trace", beaten));
    if (worst > 1e-8) fail(o, fmt("eigenvalue-sum relative error %.3g > 1e-8", worst));
    if (s >= 10.0) fail(o, fmt("runtime %.2fs >= 10s", s));
    if (o.pass) o.detail = fmt("20 matrices x 1000 competitors, max rel err %.2g, %.2fs", worst, s);
    return o;
}

// 3 ------------------------------------------------------------------------

Outcome gradient_check() {
    Outcome o;
    Rng rng(303);
    double worst = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        const Index d = 2 + static_cast<Index>(rng.below(9));
        const auto ds = random_subset(rng, d, 10 + static_cast<Index>(rng.below(20)));
        const MatrixXd r = accumulate_scatter(full_view(ds), {3, 3, rng.uniform(0.1, 2.0)}, ScatterMode::Dense).R;
        const Index q = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(d)));
        const MatrixXd w = oracle::gaussian(rng, d, q);
        const MatrixXd analytic = 2.0 * r * w;
        MatrixXd numeric(d, q);
        const double h = 1e-5;
        for (Index i = 0; i < d; ++i) {
            for (Index j = 0; j < q; ++j) {
                MatrixXd wp = w, wm = w;
                wp(i, j) += h;
                wm(i, j) -= h;
                numeric(i, j) = (trace_form(r, wp) - trace_form(r, wm)) / (2.0 * h);
            }
        }
        worst = std::max(worst, (numeric - analytic).norm() / analytic.norm());
    }
    if (worst > 1e-5) fail(o, fmt("max relative gradient error %.3g > 1e-5", worst));
    if (o.pass) o.detail = fmt("20 instances, max rel err %.2g", worst);
    return o;
}

// 4 ------------------------------------------------------------------------

// The q-dimensional answer is only unique when lambda_q < lambda_{q+1}, and
// when d > N_k the Gram path can only reach span(X_k); outside that span R_k
// is zero, so lambda_q must also be negative for the two paths to coincide.
ScatterRep well_posed_scatter(Rng& rng, Index d, Index n, Index q) {
    for (;;) {
        const auto ds = oracle::random_dataset(rng, d, n, 2, 0.5);
        auto rep = accumulate_scatter(full_view(ds), {2, 6, 1.5}, ScatterMode::Factored);
        const VectorXd ev = oracle::jacobi_eigenvalues(rep.dense());
        const double scale = ev.cwiseAbs().maxCoeff();
        const double gap = std::min(ev(q) - ev(q - 1), -ev(q - 1));
        if (gap > 1e-2 * scale) return rep;
    }
}

Outcome gram_direct() {
    Outcome o;
    Rng rng(404);
    double worst = 0.0;
    int wide = 0;
    for (int inst = 0; inst < 20; ++inst) {
        const bool d_large = inst % 2 == 1;
        const Index d = d_large ? 20 + static_cast<Index>(rng.below(21)) : 3 + static_cast<Index>(rng.below(8));
        const Index n = d_large ? 8 + static_cast<Index>(rng.below(8)) : d + 5 + static_cast<Index>(rng.below(25));
        const Index q = 1 + static_cast<Index>(rng.below(2));
        const auto rep = well_posed_scatter(rng, d, n, q);
        const auto direct = solve_subset(rep, q, {SolveMode::Direct, std::nullopt});
        const auto gram = solve_subset(rep, q, {SolveMode::Gram, std::nullopt});
        worst = std::max(worst, subspace_distance(direct.W, gram.W));
        wide += d > n;
    }
    if (worst > 1e-6) fail(o, fmt("max subspace distance %.3g > 1e-6", worst));
    if (wide != 10) fail(o, "instance mix is not 10/10");
    if (o.pass) o.detail = fmt("10 with d < N_k, 10 with d > N_k, max distance %.2g", worst);
    return o;
}

// 5 ------------------------------------------------------------------------

struct Instance {
    AggregationInput input;
    MatrixXd w_global;
};

Instance make_instance(Rng& rng, Index d, Index n, Index K, Index q, PatchSpec spec = {3, 5, 0.3}) {
    const auto ds = oracle::random_dataset(rng, d, n, 2, 1.0);
    Instance out;
    out.w_global = solve_subset(accumulate_scatter(full_view(ds), spec, ScatterMode::Dense), q).W;
    for (const auto& v : random_split(ds, K, rng.next_u64()).subsets) {
        const auto rep = accumulate_scatter(v, spec, ScatterMode::Dense);
        const auto sol = solve_subset(rep, q, {SolveMode::Direct, std::nullopt});
        out.input.push_back({static_cast<std::uint32_t>(v.subset_id), compute_pk(rep, sol.W), sol.W, rep.R});
    }
    return out;
}

Outcome aggregation_collapse() {
    Outcome o;
    Rng rng(505);
    double inv_err = 0.0, svd_err = 0.0, stat_err = 0.0;
    int collapsed = 0, skipped = 0;
    while (collapsed < 20) {
        const auto inst = make_instance(rng, 2 + static_cast<Index>(rng.below(4)), 60, 1, 1 + static_cast<Index>(rng.below(2)));
        const VectorXd sv = singular_values(*inst.input[0].R);
        // The collapse premise is an invertible R_1; a near-singular draw
        // measures LU conditioning, not the aggregation rule.
        if (sv.maxCoeff() > 1e3 * sv.minCoeff()) {
            ++skipped;
            continue;
        }
        inv_err = std::max(inv_err, (aggregate_inverse(inst.input) - inst.input[0].W).cwiseAbs().maxCoeff());
        svd_err = std::max(svd_err, subspace_distance(aggregate_svd(inst.input).W, inst.input[0].W));
        ++collapsed;
    }
    for (int t = 0; t < 20; ++t) {
        const Index K = 2 + static_cast<Index>(rng.below(7));
        const auto inst = make_instance(rng, 3 + static_cast<Index>(rng.below(3)), 30 * K, K, 2);
        const MatrixXd wa = aggregate_inverse(inst.input);
        MatrixXd resid = MatrixXd::Zero(wa.rows(), wa.cols()), rhs = resid;
        for (const auto& c : inst.input) {
            resid += *c.R * (c.W - wa);
            rhs += *c.R * c.W;
        }
        stat_err = std::max(stat_err, resid.norm() / rhs.norm());
    }
    if (inv_err > 1e-12) fail(o, fmt("K=1 ADML-I differs from W_1 by %.3g > 1e-12", inv_err));
    if (svd_err > 1e-10) fail(o, fmt("K=1 ADML-II subspace distance %.3g > 1e-10", svd_err));
    if (stat_err > 1e-8) fail(o, fmt("stationarity residual %.3g > 1e-8", stat_err));
    if (o.pass)
        o.detail = fmt("K=1: inverse %.2g, svd %.2g (%d ill-conditioned draws skipped); K in 2..8 residual %.2g", inv_err,
                       svd_err, skipped, stat_err);
    return o;
}

// 6 ------------------------------------------------------------------------

Outcome consistency_bounds() {
    const auto t0 = Clock::now();
    Outcome o;
    Rng rng(606);
    int b1 = 0, b2_checked = 0, b2 = 0, b3c = 0, b3 = 0;
    for (int t = 0; t < 20; ++t) {
        const Index d = 3 + static_cast<Index>(rng.below(4));
        const Index K = 2 + static_cast<Index>(rng.below(5));
        const Index per = d + 25 + static_cast<Index>(rng.below(30));
        const auto inst = make_instance(rng, d, per * K, K, 2);
        const auto r1 = bound_report(inst.input, aggregate_inverse(inst.input), inst.w_global);
        b1 += r1.bound1 == BoundStatus::Holds;
        if (r1.bound2 != BoundStatus::NotApplicable) {
            ++b2_checked;
            b2 += r1.bound2 == BoundStatus::Holds;
        }
        const auto agg = aggregate_svd(inst.input);
        const auto r2 = bound_report(inst.input, agg.W, inst.w_global, agg.D);
        b3c += r2.bound3_corrected == BoundStatus::Holds;
        b3 += r2.bound3 == BoundStatus::Holds;
    }
    const double s = seconds(t0);
    if (b1 != 20) fail(o, fmt("rhs1 bound held in %d/20", b1));
    if (b2 != b2_checked) fail(o, fmt("rhs2 bound held in %d/%d applicable", b2, b2_checked));
    if (b3c != 20) fail(o, fmt("rhs3_corrected bound held in %d/20", b3c));
    if (s >= 30.0) fail(o, fmt("runtime %.2fs >= 30s", s));
    if (o.pass)
        o.detail = fmt("rhs1 20/20, rhs2 %d/%d applicable, rhs3_corrected 20/20, uncorrected rhs3 %d/20 (recorded only), %.2fs", b2,
                       b2_checked, b3, s);
    return o;
}

// 7 ------------------------------------------------------------------------

struct EndToEnd {
    std::vector<Index> sizes;
    std::vector<int> separated, accurate;
    double seconds = 0.0;
};

EndToEnd end_to_end(const CoilSpec& coil) {
    const auto t0 = Clock::now();
    EndToEnd e;
    e.sizes = {200, 600, 1200};
    e.separated.assign(3, 0);
    e.accurate.assign(3, 0);
    for (int s = 0; s < 20; ++s) {
        const auto ds = gen_coiled_surfaces(coil, 7000 + static_cast<std::uint64_t>(s));
        const auto halves = random_split(ds, 2, 9000 + static_cast<std::uint64_t>(s));
        const auto train_set = materialize(halves.subsets[0]);
        const auto test_set = materialize(halves.subsets[1]);
        const double acc3 = accuracy(knn_classify_all(train_set, euclidean_model(3), test_set.features, 1), test_set);
        for (std::size_t z = 0; z < e.sizes.size(); ++z) {
            JobConfig cfg;
            cfg.patch = {10, 20, 0.1};
            cfg.q = 2;
            cfg.subset_size = e.sizes[z];
            cfg.seed = static_cast<std::uint64_t>(s);
            const auto model = train(train_set, cfg);
            const auto h = pair_histogram(test_set, model, 10000, 50, static_cast<std::uint64_t>(s));
            e.separated[z] += h.mean_between > h.mean_within;
            const double acc2 = accuracy(knn_classify_all(train_set, model, test_set.features, 1), test_set);
            e.accurate[z] += acc2 >= acc3 - 0.02;
        }
    }
    e.seconds = seconds(t0);
    return e;
}

Outcome synthetic_end_to_end() {
    Outcome o;
    const CoilSpec coil{2000, 0.05, CoilSpec{}.z_halfwidth, CoilSpec{}.turns};
    const auto e = end_to_end(coil);
    std::ostringstream d;
    for (std::size_t z = 0; z < e.sizes.size(); ++z) {
        d << "size " << e.sizes[z] << ": separated " << e.separated[z] << "/20, 1-NN " << e.accurate[z] << "/20; ";
        if (e.sizes[z] >= 400 && e.separated[z] < 18)
            fail(o, fmt("size %ld: between > within in %d/20 < 18", static_cast<long>(e.sizes[z]), e.separated[z]));
        if (e.accurate[z] < 16)
            fail(o, fmt("size %ld: 2-D 1-NN within 2pp of 3-D in %d/20 < 16", static_cast<long>(e.sizes[z]), e.accurate[z]));
    }
    if (e.seconds >= 300.0) fail(o, fmt("runtime %.1fs >= 300s", e.seconds));
    d << fmt("%.1fs", e.seconds);
    if (o.pass) o.detail = d.str();
    else o.detail += " [" + d.str() + "]";
    return o;
}

/// Not asserted: the same protocol on a sparser surface, where small subsets
/// no longer resolve the sheets.
void sparse_surface_info() {
    const auto e = end_to_end({2000, 0.05, 4.0, 2.0});
    std::printf("INFO criterion 7 on the sparser surface (z_halfwidth=4, turns=2):");
    for (std::size_t z = 0; z < e.sizes.size(); ++z)
        std::printf(" size %ld separated %d/20 1-NN %d/20;", static_cast<long>(e.sizes[z]), e.separated[z], e.accurate[z]);
    std::printf(" %.1fs\n", e.seconds);
}

// 8 ------------------------------------------------------------------------

Outcome determinism() {
    Outcome o;
    const auto base = gen_coiled_surfaces({1500, 0.05, 2.0, 1.0}, 81);
    const auto wide = pad_with_noise(base, 9, 0.3, 82);

    std::vector<std::pair<const LabeledDataset*, JobConfig>> configs(3);
    configs[0].first = &base;
    configs[0].second.subset_size = 300;
    configs[0].second.seed = 1;
    configs[1].first = &base;
    configs[1].second.algo = Algo::Adml1;
    configs[1].second.patch = {5, 10, 0.2};
    configs[1].second.subset_size = 250;
    configs[1].second.seed = 2;
    configs[2].first = &wide;
    configs[2].second.q = 3;
    configs[2].second.solve.mode = SolveMode::Gram;
    configs[2].second.subset_size = 200;
    configs[2].second.seed = 3;

    for (std::size_t c = 0; c < configs.size(); ++c) {
        auto cfg = configs[c].second;
        cfg.workers = 1;
        const auto reference = model_to_text(train(*configs[c].first, cfg));
        for (unsigned w : {2u, 4u, 8u}) {
            cfg.workers = w;
            if (model_to_text(train(*configs[c].first, cfg)) != reference)
                fail(o, fmt("config %zu: workers=%u model bytes differ from workers=1", c + 1, w));
        }
    }
    if (o.pass) o.detail = "3 configs x workers {1,2,4,8}: identical model bytes";
    return o;
}

// 9 ------------------------------------------------------------------------

Outcome scaling() {
    const auto t0 = Clock::now();
    Outcome o;
    JobConfig cfg;
    cfg.subset_size = 500;
    cfg.workers = 4;
    cfg.seed = 9;
    auto make = [](Index n) { return pad_with_noise(gen_coiled_surfaces({n / 2, 0.05, 2.0, 1.0}, 90), 7, 0.3, 91); };
    const auto half = make(50000);
    const auto full = make(100000);
    auto timed = [&](const LabeledDataset& ds) {
        const auto t = Clock::now();
        (void)run_job(ds, cfg);
        return seconds(t);
    };
    // Interleaved repeats, best of three, so a noisy neighbour or a cold
    // allocator does not land on one size only.
    double t50 = 1e300, t100 = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
        t50 = std::min(t50, timed(half));
        t100 = std::min(t100, timed(full));
    }
    const double ratio = t100 / t50;
    const double s = seconds(t0);
    if (ratio > 3.0) fail(o, fmt("t(100k)/t(50k) = %.2f > 3", ratio));
    if (s >= 180.0) fail(o, fmt("runtime %.1fs >= 180s", s));
    if (o.pass) o.detail = fmt("d=10: t(50k)=%.2fs t(100k)=%.2fs ratio %.2f, %.1fs", t50, t100, ratio, s);
    return o;
}

// 10 -----------------------------------------------------------------------

Outcome eval_examples() {
    Outcome o;
    auto check = [&](bool ok, const char* what) {
        if (!ok) fail(o, what);
    };

    MetricModel zero;
    zero.W = MatrixXd::Zero(2, 2);
    check(mdist(euclidean_model(2), Eigen::Vector2d(0, 0), Eigen::Vector2d(3, 4)) == 5.0, "mdist identity 3-4-5");
    check(mdist(zero, Eigen::Vector2d(1, -7), Eigen::Vector2d(3, 4)) == 0.0, "mdist with W=0");

    Eigen::MatrixXd two(2, 2);
    two << 1.0, 5.0, 0.0, 0.0;
    check(knn_classify(make_dataset(two, {0, 1}), euclidean_model(2), Eigen::Vector2d(0, 0), 1) == 0, "knn nearest of two");
    check(knn_classify(make_dataset(Eigen::RowVector2d(-1.0, 1.0), {7, 3}), euclidean_model(1), Eigen::VectorXd::Zero(1), 1) == 7,
          "knn equidistant tie to lower id");

    const auto ref = make_dataset(Eigen::MatrixXd::Zero(1, 4), {{1}, {1}, {1}, {2}}, LabelMode::MultiLabel);
    const TagStats half{{1, 2}, {0.5, 0.5}};
    std::vector<Neighbour> four{{0, 0}, {0, 1}, {0, 2}, {0, 3}};
    check(annotate_from_neighbours(ref, half, four) == LabelSet{1}, "annotate r1=0.75 > r0=0.5");
    std::vector<Neighbour> even{{0, 0}, {0, 1}, {0, 3}, {0, 3}};
    check(annotate_from_neighbours(ref, half, even).empty(), "annotate r1 = r0 is absent");
    const TagStats unseen{{9}, {0.0}};
    check(annotate_from_neighbours(ref, unseen, four).empty(), "annotate tag on no neighbour");

    const auto sym = score_counts(0, 1, 1, 1);
    check(sym.precision == 0.5 && sym.recall == 0.5 && sym.f1 == 0.5, "F1 with P=R=0.5");
    check(score_counts(0, 0, 0, 0).f1 == 0.0, "F1 0/0 is 0");
    const auto hand = score_counts(0, 3, 2, 1);
    check(hand.precision == 0.6 && hand.recall == 0.75 && std::abs(hand.f1 - 2.0 / 3.0) < 1e-15, "F1 tp=3 fp=2 fn=1");

    Rng rng(1010);
    const auto ds = oracle::random_dataset(rng, 3, 300, 2);
    const auto h = pair_histogram(ds, euclidean_model(3), 10000, 50, 1);
    const Index total = std::accumulate(h.counts_within.begin(), h.counts_within.end(), Index{0}) +
                        std::accumulate(h.counts_between.begin(), h.counts_between.end(), Index{0});
    check(total == 10000, "histogram counts sum to n_pairs");
    check(h.edges.front() == 0.0 && h.edges.back() == 1.0 && h.mean_within <= 1.0 && h.mean_between <= 1.0,
          "histogram normalised into [0,1]");
    Eigen::MatrixXd dup(2, 3);
    dup << 1.0, 1.0, 4.0, 2.0, 2.0, 6.0;
    const auto hd = pair_histogram(make_dataset(dup, {0, 0, 1}), euclidean_model(2), 500, 10, 2);
    const Index within = std::accumulate(hd.counts_within.begin(), hd.counts_within.end(), Index{0});
    check(within > 0 && hd.counts_within[0] == within, "duplicated pair lands in the lowest bin");

    const MatrixXd e1 = Eigen::Vector2d(1, 0), e2 = Eigen::Vector2d(0, 1);
    check(std::abs(subspace_distance(e1, e2) - std::sqrt(2.0)) < 1e-15, "subspace distance e1 vs e2");
    if (o.pass) o.detail = "16 examples exact";
    return o;
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"quadratic-form equivalence", quadratic_form},
        {"eigensolver optimality", eigensolver_optimality},
        {"gradient check", gradient_check},
        {"gram/direct agreement", gram_direct},
        {"aggregation collapse and stationarity", aggregation_collapse},
        {"consistency bounds", consistency_bounds},
        {"synthetic end-to-end", synthetic_end_to_end},
        {"determinism and worker invariance", determinism},
        {"scaling smoke", scaling},
        {"eval examples", eval_examples},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failed += !o.pass;
        std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
        if (i == 6) {
            sparse_surface_info();
            std::fflush(stdout);
        }
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
