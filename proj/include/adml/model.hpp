#pragma once

#include <adml/error.hpp>
#include <adml/linalg.hpp>

#include <Eigen/Dense>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace adml {

enum class Algo { Ddml, Adml1, Adml2 };

constexpr std::string_view to_string(Algo a) noexcept {
    switch (a) {
    case Algo::Ddml: return "ddml";
    case Algo::Adml1: return "adml1";
    case Algo::Adml2: return "adml2";
    }
    return "ddml";
}

inline std::optional<Algo> parse_algo(std::string_view s) {
    if (s == "ddml") return Algo::Ddml;
    if (s == "adml1") return Algo::Adml1;
    if (s == "adml2") return Algo::Adml2;
    return std::nullopt;
}

struct PhaseTimings {
    double split_s = 0.0;
    double map_s = 0.0;
    double reduce_s = 0.0;
    double total() const { return split_s + map_s + reduce_s; }
};

/// Provenance kept in memory; the model file itself stores only W.
struct ModelMetadata {
    std::uint64_t config_hash = 0;
    Eigen::Index K = 0;
    std::vector<Eigen::Index> subset_sizes;
    std::vector<std::uint32_t> degenerate_subsets;
    Eigen::Index skipped_samples = 0;
    PhaseTimings timings;
};

/// Learned projection W (d x q); the metric is d(x, y) = ||W^T (x - y)||.
struct MetricModel {
    MatrixXd W;
    Algo algo = Algo::Adml2;
    ModelMetadata meta;

    Eigen::Index dim() const { return W.rows(); }
    Eigen::Index q() const { return W.cols(); }

    void validate() const {
        if (W.rows() < 1 || W.cols() < 1) throw Error(ErrorCode::BadDimension, "model needs d, q >= 1");
        if (!W.allFinite()) throw Error(ErrorCode::NonNumericFeature, "model contains NaN or Inf");
    }
};

/// `ADML-MODEL v1`, `d=<d> q=<q> algo=<algo>`, then d rows of q values with
/// 17 significant digits.
inline std::string model_to_text(const MetricModel& m) {
    m.validate();
    std::string out = "ADML-MODEL v1\n";
    out += "d=" + std::to_string(m.dim()) + " q=" + std::to_string(m.q()) + " algo=" + std::string(to_string(m.algo)) + "\n";
    char buf[40];
    for (Eigen::Index i = 0; i < m.dim(); ++i) {
        for (Eigen::Index j = 0; j < m.q(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m.W(i, j));
            if (j) out += ' ';
            out += buf;
        }
        out += '\n';
    }
    return out;
}

inline MetricModel model_from_text(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "ADML-MODEL v1")
        throw Error(ErrorCode::BadFormat, "missing 'ADML-MODEL v1' header");
    if (!std::getline(in, line)) throw Error(ErrorCode::BadFormat, "missing shape line");
    long long d = 0, q = 0;
    char algo_buf[16] = {0};
    if (std::sscanf(line.c_str(), "d=%lld q=%lld algo=%15s", &d, &q, algo_buf) != 3 || d < 1 || q < 1)
        throw Error(ErrorCode::BadFormat, "bad shape line '" + line + "'");
    const auto algo = parse_algo(algo_buf);
    if (!algo) throw Error(ErrorCode::BadFormat, std::string("unknown algo '") + algo_buf + "'");

    MetricModel m;
    m.algo = *algo;
    m.W.resize(d, q);
    for (long long i = 0; i < d; ++i) {
        if (!std::getline(in, line)) throw Error(ErrorCode::BadFormat, "model truncated at row " + std::to_string(i));
        std::istringstream row(line);
        for (long long j = 0; j < q; ++j) {
            std::string tok;
            double v = 0.0;
            if (!(row >> tok)) throw Error(ErrorCode::BadFormat, "row " + std::to_string(i) + " too short");
            auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc() || p != tok.data() + tok.size())
                throw Error(ErrorCode::BadFormat, "bad value '" + tok + "'");
            m.W(i, j) = v;
        }
    }
    m.validate();
    return m;
}

inline void save_model(const std::string& path, const MetricModel& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path);
    out << model_to_text(m);
}

inline MetricModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::BadFormat, "cannot open " + path);
    return model_from_text(in);
}

} // namespace adml
