#pragma once

#include <adml/adml.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace adml::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline LabelMode parse_mode(const std::string& s) { return s == "multilabel" ? LabelMode::MultiLabel : LabelMode::Categorical; }

inline LabeledDataset load_input(const std::string& path, const std::string& mode, const std::string& norm_path) {
    auto ds = load_csv(path, parse_mode(mode));
    if (!norm_path.empty()) ds = load_stats(norm_path).apply(ds);
    return ds;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path);
    return out;
}

inline std::string num(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

/// Flags shared by `train` and `bounds`.
struct TrainFlags {
    std::string algo = "adml2";
    Index subset_size = 600;
    Index subsets = 0;
    Index kw = 10;
    Index kb = 20;
    double beta = 0.1;
    Index q = 2;
    unsigned workers = 1;
    std::uint64_t seed = 0;
    std::string solver = "auto";
    std::optional<double> ridge;
    Index dense_cap = 2000;

    void attach(CLI::App* cmd) {
        cmd->add_option("--algo", algo, "ddml | adml1 | adml2")->check(CLI::IsMember({"ddml", "adml1", "adml2"}))->capture_default_str();
        cmd->add_option("--subset-size", subset_size, "samples per subset")->check(CLI::PositiveNumber)->capture_default_str();
        cmd->add_option("--subsets", subsets, "number of subsets K (overrides --subset-size)")->check(CLI::NonNegativeNumber);
        cmd->add_option("--kw", kw, "within-class neighbours")->check(CLI::NonNegativeNumber)->capture_default_str();
        cmd->add_option("--kb", kb, "between-class neighbours")->check(CLI::PositiveNumber)->capture_default_str();
        cmd->add_option("--beta", beta, "between-class weight")->check(CLI::PositiveNumber)->capture_default_str();
        cmd->add_option("--q", q, "subspace dimension")->check(CLI::PositiveNumber)->capture_default_str();
        cmd->add_option("--workers", workers, "concurrent map tasks")->check(CLI::PositiveNumber)->capture_default_str();
        cmd->add_option("--seed", seed, "split seed")->capture_default_str();
        cmd->add_option("--solver", solver, "auto | direct | gram")->check(CLI::IsMember({"auto", "direct", "gram"}))->capture_default_str();
        cmd->add_option("--ridge", ridge, "Gram-path ridge")->check(CLI::NonNegativeNumber);
        cmd->add_option("--dense-cap", dense_cap, "largest d with dense R_k")->check(CLI::PositiveNumber)->capture_default_str();
    }

    JobConfig config() const {
        JobConfig cfg;
        cfg.algo = *parse_algo(algo);
        cfg.subset_size = subset_size;
        cfg.K = subsets;
        cfg.patch = {kw, kb, beta};
        cfg.q = q;
        cfg.workers = workers;
        cfg.seed = seed;
        cfg.solve.mode = solver == "direct" ? SolveMode::Direct : solver == "gram" ? SolveMode::Gram : SolveMode::Auto;
        cfg.solve.ridge = ridge;
        cfg.dense_cap = dense_cap;
        return cfg;
    }
};

} // namespace detail

/// Parses and runs one verb. Returns 0 on success, 1 on a data or numeric
/// failure, 2 on a usage error. Every successful run ends with one
/// `RESULT key=value ...` line on `out`.
inline int run_command(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Discriminative metric learning with divide-and-conquer aggregation", "adml"};
    app.require_subcommand(1);

    std::string data, mode = "categorical", norm, output, model_path;

    // gen
    auto* gen = app.add_subcommand("gen", "generate two coiled surfaces as CSV");
    CoilSpec coil;
    std::uint64_t gen_seed = 0;
    Index extra_dims = 0;
    double extra_sigma = 1.0;
    gen->add_option("--out", output, "output CSV")->required();
    gen->add_option("--n-per-class", coil.n_per_class)->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_option("--noise", coil.noise_sigma)->check(CLI::NonNegativeNumber)->capture_default_str();
    gen->add_option("--z-halfwidth", coil.z_halfwidth)->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_option("--turns", coil.turns)->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_option("--extra-dims", extra_dims, "append Gaussian noise features")->check(CLI::NonNegativeNumber);
    gen->add_option("--extra-sigma", extra_sigma)->check(CLI::NonNegativeNumber)->capture_default_str();
    gen->add_option("--seed", gen_seed)->capture_default_str();

    // split
    auto* split_cmd = app.add_subcommand("split", "write a seeded subset assignment");
    Index split_k = 0, split_size = 0;
    std::uint64_t split_seed = 0;
    split_cmd->add_option("--data", data)->required();
    split_cmd->add_option("--mode", mode)->check(CLI::IsMember({"categorical", "multilabel"}));
    split_cmd->add_option("--subsets", split_k, "number of subsets K")->check(CLI::PositiveNumber);
    split_cmd->add_option("--subset-size", split_size)->check(CLI::PositiveNumber);
    split_cmd->add_option("--seed", split_seed)->capture_default_str();
    split_cmd->add_option("--out", output, "assignment CSV")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "learn a metric and write the model file");
    detail::TrainFlags tf;
    bool do_normalize = false;
    train_cmd->add_option("--data", data)->required();
    train_cmd->add_option("--mode", mode)->check(CLI::IsMember({"categorical", "multilabel"}));
    train_cmd->add_option("--out", output, "model file")->required();
    train_cmd->add_flag("--normalize", do_normalize, "z-score features; stats go to <out>.norm");
    tf.attach(train_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "kNN accuracy or tag-annotation F1 on held-out data");
    std::string task = "knn", ref_path;
    Index k = 1;
    eval_cmd->add_option("--task", task)->check(CLI::IsMember({"knn", "annotate"}))->capture_default_str();
    eval_cmd->add_option("--model", model_path, "model file (default: Euclidean)");
    eval_cmd->add_option("--ref", ref_path, "reference CSV")->required();
    eval_cmd->add_option("--data", data, "query CSV")->required();
    eval_cmd->add_option("--mode", mode)->check(CLI::IsMember({"categorical", "multilabel"}));
    eval_cmd->add_option("--norm", norm, "normalization stats file");
    eval_cmd->add_option("--k", k, "neighbours")->check(CLI::PositiveNumber)->capture_default_str();
    eval_cmd->add_option("--out", output, "per-sample (knn) or per-tag (annotate) CSV");

    // bounds
    auto* bounds_cmd = app.add_subcommand("bounds", "consistency bounds of an aggregate against a wholistic model");
    std::string wholistic_path, csv_path;
    bounds_cmd->add_option("--data", data)->required();
    bounds_cmd->add_option("--mode", mode)->check(CLI::IsMember({"categorical", "multilabel"}));
    bounds_cmd->add_option("--norm", norm);
    bounds_cmd->add_option("--model", model_path, "aggregate model to check against the recomputed one");
    bounds_cmd->add_option("--wholistic-model", wholistic_path, "target model")->required();
    bounds_cmd->add_option("--csv", csv_path, "append one CSV row to this file");
    detail::TrainFlags bf;
    bf.attach(bounds_cmd);

    // hist
    auto* hist_cmd = app.add_subcommand("hist", "normalised pair-distance histogram");
    Index pairs = 10000, bins = 50;
    std::uint64_t hist_seed = 0;
    hist_cmd->add_option("--model", model_path, "model file (default: Euclidean)");
    hist_cmd->add_option("--data", data)->required();
    hist_cmd->add_option("--mode", mode)->check(CLI::IsMember({"categorical", "multilabel"}));
    hist_cmd->add_option("--norm", norm);
    hist_cmd->add_option("--pairs", pairs)->check(CLI::PositiveNumber)->capture_default_str();
    hist_cmd->add_option("--bins", bins)->check(CLI::PositiveNumber)->capture_default_str();
    hist_cmd->add_option("--seed", hist_seed)->capture_default_str();
    hist_cmd->add_option("--out", output, "histogram CSV")->required();

    // project
    auto* project_cmd = app.add_subcommand("project", "project samples into the learned subspace");
    project_cmd->add_option("--model", model_path)->required();
    project_cmd->add_option("--data", data)->required();
    project_cmd->add_option("--mode", mode)->check(CLI::IsMember({"categorical", "multilabel"}));
    project_cmd->add_option("--norm", norm);
    project_cmd->add_option("--out", output, "projection CSV")->required();

    try {
        std::vector<std::string> args(argv.rbegin(), argv.rend());
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }
    if (split_cmd->parsed() && (split_k > 0) == (split_size > 0)) {
        err << "usage error: split needs exactly one of --subsets or --subset-size\n\n" << split_cmd->help();
        return kExitUsage;
    }

    try {
        if (gen->parsed()) {
            auto ds = gen_coiled_surfaces(coil, gen_seed);
            if (extra_dims > 0) ds = pad_with_noise(ds, extra_dims, extra_sigma, gen_seed ^ 0x9e3779b97f4a7c15ull);
            save_csv(output, ds);
            out << "RESULT verb=gen n=" << ds.size() << " d=" << ds.dim() << " out=" << output << '\n';
        } else if (split_cmd->parsed()) {
            const auto ds = load_csv(data, detail::parse_mode(mode));
            const auto s = split_k > 0 ? random_split(ds, split_k, split_seed) : random_split_by_size(ds, split_size, split_seed);
            auto f = detail::open_out(output);
            f << "sample_id,subset\n";
            for (std::size_t i = 0; i < s.plan.assignment.size(); ++i) f << i << ',' << s.plan.assignment[i] << '\n';
            out << "RESULT verb=split n=" << ds.size() << " K=" << s.plan.K << " out=" << output << '\n';
        } else if (train_cmd->parsed()) {
            auto ds = load_csv(data, detail::parse_mode(mode));
            if (do_normalize) {
                auto norm_res = normalize(ds);
                save_stats(output + ".norm", norm_res.stats);
                ds = std::move(norm_res.data);
            }
            const auto cfg = tf.config();
            const auto job = run_job(ds, cfg);
            for (auto id : job.degenerate) err << "warning: subset " << id << " is degenerate and was dropped\n";
            if (job.svd && job.svd->rank_deficient) err << "warning: aggregate is rank deficient (min(D) ~ 0)\n";
            save_model(output, job.model);
            const auto& t = job.model.meta.timings;
            out << "RESULT verb=train algo=" << to_string(cfg.algo) << " d=" << job.model.dim() << " q=" << job.model.q()
                << " K=" << job.model.meta.K << " degenerate=" << job.degenerate.size()
                << " skipped=" << job.model.meta.skipped_samples << " t_split=" << detail::num(t.split_s)
                << " t_map=" << detail::num(t.map_s) << " t_reduce=" << detail::num(t.reduce_s)
                << " config_hash=" << std::hex << cfg.hash() << std::dec << " out=" << output << '\n';
        } else if (eval_cmd->parsed()) {
            const std::string eff_mode = task == "annotate" ? "multilabel" : mode;
            const auto ref = detail::load_input(ref_path, eff_mode, norm);
            const auto queries = detail::load_input(data, eff_mode, norm);
            const auto model = model_path.empty() ? euclidean_model(ref.dim()) : load_model(model_path);
            if (task == "knn") {
                const auto pred = knn_classify_all(ref, model, queries.features, k);
                const double acc = accuracy(pred, queries);
                if (!output.empty()) {
                    auto f = detail::open_out(output);
                    f << "sample_id,predicted,truth\n";
                    for (Index i = 0; i < queries.size(); ++i)
                        f << i << ',' << pred[static_cast<std::size_t>(i)] << ',' << queries.label(i) << '\n';
                }
                out << "accuracy=" << detail::num(acc) << '\n';
                out << "RESULT verb=eval task=knn k=" << k << " n=" << queries.size() << " accuracy=" << detail::num(acc) << '\n';
            } else {
                const auto stats = compute_tag_stats(ref);
                const auto pred = annotate_all(ref, stats, model, queries.features, k);
                const auto rep = f1_scores(pred, queries.labels, stats.vocabulary);
                if (!output.empty()) {
                    auto f = detail::open_out(output);
                    f << "tag,precision,recall,f1\n";
                    f.precision(17);
                    for (const auto& s : rep.per_tag) f << s.tag << ',' << s.precision << ',' << s.recall << ',' << s.f1 << '\n';
                }
                out << "macro_f1=" << detail::num(rep.macro_f1) << '\n';
                out << "RESULT verb=eval task=annotate k=" << k << " n=" << queries.size()
                    << " tags=" << rep.per_tag.size() << " macro_f1=" << detail::num(rep.macro_f1) << '\n';
            }
        } else if (bounds_cmd->parsed()) {
            const auto ds = detail::load_input(data, mode, norm);
            auto cfg = bf.config();
            std::optional<MetricModel> given;
            if (!model_path.empty()) {
                given = load_model(model_path);
                cfg.algo = given->algo;
            }
            if (cfg.algo == Algo::Ddml) throw Error(ErrorCode::InvalidArgument, "bounds need an aggregate (adml1 or adml2)");
            if (ds.dim() > cfg.dense_cap)
                throw Error(ErrorCode::MissingDense, "d=" + std::to_string(ds.dim()) + " exceeds the dense cap " +
                                                         std::to_string(cfg.dense_cap) +
                                                         "; dense R_k is needed for bounds and the inverse rule is SingularAggregate-prone");
            cfg.collect_dense_R = true;
            const auto target = load_model(wholistic_path);
            const auto job = run_job(ds, cfg);
            if (target.dim() != job.model.dim() || target.q() != job.model.q())
                throw Error(ErrorCode::ShapeMismatch, "wholistic model shape differs from the aggregate");
            AggregationInput input;
            for (const auto& r : job.results) input.push_back({r.subset_id, r.P, r.solution.W, r.R});
            std::optional<VectorXd> D;
            if (job.svd) D = job.svd->D;
            const auto rep = bound_report(input, job.model.W, target.W, D);
            out << rep.to_key_value();
            if (given) out << "model_mismatch=" << detail::num((given->W - job.model.W).norm()) << '\n';
            if (!csv_path.empty()) {
                const bool fresh = !std::ifstream(csv_path).good();
                std::ofstream f(csv_path, std::ios::app);
                if (!f) throw Error(ErrorCode::InvalidArgument, "cannot write " + csv_path);
                if (fresh) f << BoundReport::csv_header() << '\n';
                f << rep.to_csv_row() << '\n';
            }
            out << "RESULT verb=bounds algo=" << to_string(cfg.algo) << " K=" << rep.K << " lhs=" << detail::num(rep.lhs)
                << " rhs1=" << detail::num(rep.rhs1) << " rhs3_corrected=" << detail::num(rep.rhs3_corrected)
                << " bound1=" << to_string(rep.bound1) << " bound2=" << to_string(rep.bound2)
                << " bound3=" << to_string(rep.bound3) << " bound3_corrected=" << to_string(rep.bound3_corrected) << '\n';
        } else if (hist_cmd->parsed()) {
            const auto ds = detail::load_input(data, mode, norm);
            const auto model = model_path.empty() ? euclidean_model(ds.dim()) : load_model(model_path);
            const auto h = pair_histogram(ds, model, pairs, bins, hist_seed);
            if (h.degenerate) err << "warning: DegenerateData: all sampled distances are zero\n";
            auto f = detail::open_out(output);
            h.write_csv(f);
            out << "RESULT verb=hist pairs=" << h.n_pairs << " bins=" << bins << " normalizer=" << detail::num(h.normalizer)
                << " mean_within=" << detail::num(h.mean_within) << " mean_between=" << detail::num(h.mean_between)
                << " out=" << output << '\n';
        } else if (project_cmd->parsed()) {
            const auto ds = detail::load_input(data, mode, norm);
            const auto model = load_model(model_path);
            auto f = detail::open_out(output);
            write_projection_csv(f, ds, model);
            out << "RESULT verb=project n=" << ds.size() << " q=" << model.q() << " out=" << output << '\n';
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

} // namespace adml::cli
