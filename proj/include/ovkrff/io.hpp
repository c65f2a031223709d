#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ovkrff/errors.hpp"
#include "ovkrff/features.hpp"
#include "ovkrff/kernels.hpp"
#include "ovkrff/learn.hpp"
#include "ovkrff/spectral.hpp"

namespace ovkrff::io {

using nlohmann::json;

// --------------------------------------------------------------------------
// Number formatting: %.17g round-trips doubles exactly, which keeps CSV
// outputs byte-deterministic and model round-trips bit-exact.

inline std::string format_double(double v, const char* fmt = "%.17g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), fmt, v);
    return buf;
}

// --------------------------------------------------------------------------
// JSON <-> matrices and kernel / spectral specs

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (long i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (long j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const char* what) {
    if (!j.is_array() || j.empty())
        throw SchemaError(std::string(what) + ": expected a nonempty array of rows");
    const auto rows = static_cast<long>(j.size());
    const auto cols = static_cast<long>(j.at(0).size());
    Eigen::MatrixXd m(rows, cols);
    for (long i = 0; i < rows; ++i) {
        const auto& row = j.at(static_cast<std::size_t>(i));
        if (!row.is_array() || static_cast<long>(row.size()) != cols)
            throw SchemaError(std::string(what) + ": ragged matrix rows");
        for (long c = 0; c < cols; ++c)
            m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

inline json kernel_to_json(const KernelSpec& k) {
    json j;
    j["kind"] = to_string(k.kind());
    if (k.kind() == KernelKind::Sum) {
        json terms = json::array();
        for (const auto& t : k.terms()) terms.push_back(kernel_to_json(t));
        j["terms"] = std::move(terms);
        return j;
    }
    j["n"] = k.input_dim();
    j["sigma"] = k.sigma();
    if (k.kind() == KernelKind::Separable) {
        j["d"] = k.output_dim();
        j["A"] = matrix_to_json(k.coupling());
    }
    return j;
}

inline KernelSpec kernel_from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind"))
        throw SchemaError("kernel: expected an object with a \"kind\" field");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "sum") {
        if (!j.contains("terms")) throw SchemaError("sum kernel: missing \"terms\"");
        std::vector<KernelSpec> terms;
        for (const auto& t : j.at("terms")) terms.push_back(kernel_from_json(t));
        return KernelSpec::Sum(std::move(terms));
    }
    if (!j.contains("n") || !j.contains("sigma"))
        throw SchemaError("kernel: missing \"n\" or \"sigma\"");
    const int n = j.at("n").get<int>();
    const double sigma = j.at("sigma").get<double>();
    if (kind == "curl_free") return KernelSpec::CurlFree(n, sigma);
    if (kind == "div_free") return KernelSpec::DivFree(n, sigma);
    if (kind == "separable") {
        if (!j.contains("A")) throw SchemaError("separable kernel: missing \"A\"");
        Eigen::MatrixXd A = matrix_from_json(j.at("A"), "separable kernel A");
        if (j.contains("d") && j.at("d").get<int>() != A.rows())
            throw SchemaError("separable kernel: \"d\" does not match A");
        return KernelSpec::Separable(n, sigma, std::move(A));
    }
    throw SchemaError("kernel: unknown kind \"" + kind + "\"");
}

inline SpectralVariant variant_from_string(const std::string& s) {
    for (const auto v :
         {SpectralVariant::SeparableSqrt, SpectralVariant::SeparableCholesky,
          SpectralVariant::CurlUnbounded, SpectralVariant::CurlBounded,
          SpectralVariant::DivUnbounded, SpectralVariant::DivBounded,
          SpectralVariant::TraceNormalized, SpectralVariant::SumTrace,
          SpectralVariant::SumConcat})
        if (to_string(v) == s) return v;
    throw SchemaError("unknown spectral variant \"" + s + "\"");
}

inline json spectral_model_to_json(const SpectralModel& m) {
    json j;
    j["kernel"] = kernel_to_json(m.kernel());
    j["variant"] = to_string(m.variant());
    j["seed_policy"] = "counter";
    return j;
}

inline SpectralModel spectral_model_from_json(const json& j) {
    if (!j.contains("kernel") || !j.contains("variant"))
        throw SchemaError("spectral model: missing \"kernel\" or \"variant\"");
    if (j.contains("seed_policy") && j.at("seed_policy") != "counter")
        throw SchemaError("spectral model: unsupported seed_policy");
    return build_spectral_model(kernel_from_json(j.at("kernel")),
                                variant_from_string(j.at("variant").get<std::string>()));
}

inline json grid_to_json(const GridSpec& g) {
    json j;
    j["min"] = std::vector<double>(g.min.data(), g.min.data() + g.min.size());
    j["max"] = std::vector<double>(g.max.data(), g.max.data() + g.max.size());
    j["points"] = std::vector<int>(g.points.data(), g.points.data() + g.points.size());
    return j;
}

inline GridSpec grid_from_json(const json& j) {
    if (!j.contains("min") || !j.contains("max") || !j.contains("points"))
        throw SchemaError("grid: needs \"min\", \"max\" and \"points\"");
    GridSpec g;
    const auto mn = j.at("min").get<std::vector<double>>();
    const auto mx = j.at("max").get<std::vector<double>>();
    const auto pts = j.at("points").get<std::vector<int>>();
    if (mn.size() != mx.size() || mn.size() != pts.size())
        throw SchemaError("grid: min/max/points lengths differ");
    g.min = Eigen::Map<const Eigen::VectorXd>(mn.data(), static_cast<long>(mn.size()));
    g.max = Eigen::Map<const Eigen::VectorXd>(mx.data(), static_cast<long>(mx.size()));
    g.points = Eigen::Map<const Eigen::VectorXi>(pts.data(), static_cast<long>(pts.size()));
    return g;
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    return j;
}

// --------------------------------------------------------------------------
// CSV (comma separated, header row, '.' decimal, LF)

inline Eigen::MatrixXd read_csv_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path + ": missing header row");
    std::vector<std::vector<double>> rows;
    long cols = -1;
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (used != cell.size() && cell.find_first_not_of(" \t", used) !=
                                               std::string::npos)
                    throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw SchemaError(path + ":" + std::to_string(lineno) +
                                  ": not a number: \"" + cell + "\"");
            }
        }
        if (cols < 0) cols = static_cast<long>(row.size());
        else if (cols != static_cast<long>(row.size()))
            throw SchemaError(path + ":" + std::to_string(lineno) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw SchemaError(path + ": no data rows");
    Eigen::MatrixXd m(static_cast<long>(rows.size()), cols);
    for (long i = 0; i < m.rows(); ++i)
        for (long j = 0; j < cols; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return m;
}

inline std::string csv_from_matrix(const std::vector<std::string>& header,
                                   const Eigen::MatrixXd& m,
                                   const char* fmt = "%.17g") {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out += ',';
        out += header[i];
    }
    out += '\n';
    for (long i = 0; i < m.rows(); ++i) {
        for (long j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            out += format_double(m(i, j), fmt);
        }
        out += '\n';
    }
    return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary); // LF line endings everywhere
    if (!out) throw IoError("cannot write " + path);
    out << content;
    if (!out) throw IoError("write failed: " + path);
}

/// variant,D,runs,mean_rel,std_rel,max_rel,sup_abs_hs
inline std::string error_stats_csv_row(const std::string& variant, int D,
                                       const ErrorStats& st) {
    std::string out = variant;
    out += ',' + std::to_string(D) + ',' + std::to_string(st.runs);
    for (double v : {st.mean_rel, st.std_rel, st.max_rel, st.sup_abs_hs})
        out += ',' + format_double(v, "%.10g");
    return out;
}

// --------------------------------------------------------------------------
// Fitted model persistence: JSON descriptor + raw float64 binary sidecar.
// Frequencies are not stored; the counter-based sampler regenerates them
// bit-exactly from (kernel, variant, D, seed).

namespace detail {

inline void write_doubles(std::ofstream& out, const double* p, std::size_t count) {
    out.write(reinterpret_cast<const char*>(p),
              static_cast<std::streamsize>(count * sizeof(double)));
}

inline void read_doubles(std::ifstream& in, double* p, std::size_t count,
                         const std::string& path) {
    in.read(reinterpret_cast<char*>(p),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw SchemaError(path + ": binary sidecar truncated");
}

inline std::string basename_of(const std::string& path) {
    const auto pos = path.find_last_of('/');
    return pos == std::string::npos ? path : path.substr(pos + 1);
}

} // namespace detail

inline void save_model(const std::string& prefix, const PrimalModel& model) {
    json j;
    j["type"] = "primal";
    j["feature_map"] = spectral_model_to_json(model.feature_map().model());
    j["D"] = model.feature_map().num_frequencies();
    j["seed"] = model.feature_map().seed();
    j["sizes"] = {{"h", model.coefficients().size()}};
    j["binary"] = detail::basename_of(prefix) + ".bin";
    std::ofstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw IoError("cannot write " + prefix + ".bin");
    detail::write_doubles(bin, model.coefficients().data(),
                          static_cast<std::size_t>(model.coefficients().size()));
    write_text_file(prefix + ".json", j.dump(2) + "\n");
}

inline void save_model(const std::string& prefix, const DualModel& model) {
    json j;
    j["type"] = "dual";
    if (model.uses_feature_kernel()) {
        j["feature_map"] = spectral_model_to_json(model.feature_map().model());
        j["D"] = model.feature_map().num_frequencies();
        j["seed"] = model.feature_map().seed();
    } else {
        j["kernel"] = kernel_to_json(model.exact_kernel());
    }
    j["sizes"] = {{"a", model.coefficients().size()},
                  {"points", {model.points().rows(), model.points().cols()}}};
    j["binary"] = detail::basename_of(prefix) + ".bin";
    std::ofstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw IoError("cannot write " + prefix + ".bin");
    detail::write_doubles(bin, model.coefficients().data(),
                          static_cast<std::size_t>(model.coefficients().size()));
    // points row-major so the file layout matches the CSV schema
    for (long i = 0; i < model.points().rows(); ++i)
        for (long c = 0; c < model.points().cols(); ++c) {
            const double v = model.points()(i, c);
            detail::write_doubles(bin, &v, 1);
        }
    write_text_file(prefix + ".json", j.dump(2) + "\n");
}

using AnyModel = std::variant<DualModel, PrimalModel>;

inline AnyModel load_model(const std::string& prefix) {
    const json j = load_json_file(prefix + ".json");
    const std::string bin_path = prefix + ".bin";
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw IoError("cannot open " + bin_path);
    const std::string type = j.at("type").get<std::string>();
    if (type == "primal") {
        SpectralModel sm = spectral_model_from_json(j.at("feature_map"));
        FeatureMap fm(sm, j.at("D").get<int>(), j.at("seed").get<std::uint64_t>());
        Eigen::VectorXd h(j.at("sizes").at("h").get<long>());
        detail::read_doubles(bin, h.data(), static_cast<std::size_t>(h.size()), bin_path);
        return PrimalModel(std::move(fm), std::move(h));
    }
    if (type != "dual") throw SchemaError(prefix + ".json: unknown model type");
    Eigen::VectorXd a(j.at("sizes").at("a").get<long>());
    detail::read_doubles(bin, a.data(), static_cast<std::size_t>(a.size()), bin_path);
    const auto pshape = j.at("sizes").at("points").get<std::vector<long>>();
    if (pshape.size() != 2 || pshape[0] < 1 || pshape[1] < 1)
        throw SchemaError(prefix + ".json: bad points shape");
    Eigen::MatrixXd X(pshape[0], pshape[1]);
    for (long i = 0; i < X.rows(); ++i)
        for (long c = 0; c < X.cols(); ++c)
            detail::read_doubles(bin, &X(i, c), 1, bin_path);
    if (j.contains("feature_map")) {
        SpectralModel sm = spectral_model_from_json(j.at("feature_map"));
        FeatureMap fm(sm, j.at("D").get<int>(), j.at("seed").get<std::uint64_t>());
        return DualModel(std::move(fm), std::move(X), std::move(a));
    }
    return DualModel(kernel_from_json(j.at("kernel")), std::move(X), std::move(a));
}

inline Eigen::VectorXd predict_any(const AnyModel& m, const Eigen::VectorXd& x) {
    return std::visit([&](const auto& model) { return model.predict(x); }, m);
}

inline int model_input_dim(const AnyModel& m) {
    if (const auto* p = std::get_if<PrimalModel>(&m)) return p->feature_map().input_dim();
    const auto& d = std::get<DualModel>(m);
    return d.uses_feature_kernel() ? d.feature_map().input_dim()
                                   : d.exact_kernel().input_dim();
}

} // namespace ovkrff::io
