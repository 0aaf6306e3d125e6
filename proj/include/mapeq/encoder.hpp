#pragma once

#include "mapeq/autodiff.hpp"
#include "mapeq/flow.hpp"

#include <nlohmann/json.hpp>

namespace mapeq {

enum class Arch { linear, mlp, gcn, gin, sage };

inline const char* arch_name(Arch arch) {
    switch (arch) {
    case Arch::linear: return "linear";
    case Arch::mlp: return "mlp";
    case Arch::gcn: return "gcn";
    case Arch::gin: return "gin";
    case Arch::sage: return "sage";
    }
    return "?";
}

inline Arch arch_from_name(const std::string& name) {
    for (Arch a : {Arch::linear, Arch::mlp, Arch::gcn, Arch::gin, Arch::sage}) {
        if (name == arch_name(a))
            return a;
    }
    throw std::invalid_argument("unknown architecture '" + name + "'");
}

struct EncoderConfig {
    Arch arch = Arch::mlp;
    int hidden_dim = 0;    // 0 resolves to ceil(4 sqrt(n))
    int max_clusters = 0;  // 0 resolves to ceil(sqrt(n))
    double dropout_p = 0.5;
    bool use_batch_norm = true;
    double temperature_init = 1.0;

    int resolved_hidden(int n) const {
        if (hidden_dim > 0)
            return hidden_dim;
        return static_cast<int>(std::ceil(4.0 * std::sqrt(static_cast<double>(n))));
    }
    int resolved_clusters(int n) const {
        if (max_clusters > 0)
            return max_clusters;
        return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    }

    void validate() const {
        if (hidden_dim < 0 || max_clusters < 0)
            throw std::invalid_argument("hidden_dim and max_clusters must be nonnegative");
        if (dropout_p < 0.0 || dropout_p >= 1.0)
            throw std::invalid_argument("dropout probability must lie in [0, 1)");
        if (!(temperature_init > 0.0))
            throw std::invalid_argument("temperature_init must be positive");
    }
};

/// Named parameter tensors in a fixed order; the order defines the Adam
/// state layout and the checkpoint layout.
struct EncoderParams {
    Arch arch = Arch::mlp;
    int input_dim = 0;
    int hidden_dim = 0;
    int clusters = 0;
    bool use_batch_norm = true;
    std::vector<std::pair<std::string, Matrix>> tensors;

    Matrix& find(const std::string& name) {
        for (auto& [key, value] : tensors) {
            if (key == name)
                return value;
        }
        throw std::out_of_range("no parameter tensor named '" + name + "'");
    }
    const Matrix& find(const std::string& name) const {
        return const_cast<EncoderParams*>(this)->find(name);
    }
    double temperature() const { return std::exp(find("log_temperature")(0, 0)); }
};

inline constexpr double kGinSelfWeight = 0.0;  // epsilon in (1 + eps) * self

/// Message-passing operator for the architecture:
///   gcn:  D^{-1/2} (A + I) D^{-1/2} with weighted degrees of A + I
///   sage: row-normalised A (mean aggregation; zero row for sinks)
///   gin:  A + (1 + eps) I
///   linear/mlp: identity (no message passing)
inline SparseMatrix normalize_adjacency(const Graph& graph, Arch arch) {
    const int n = graph.node_count();
    SparseMatrix op(n, n);
    switch (arch) {
    case Arch::linear:
    case Arch::mlp: {
        op.setIdentity();
        return op;
    }
    case Arch::gcn: {
        Vector degree = Vector::Ones(n);  // self-loop contribution
        for (const Arc& a : graph.arcs())
            degree[a.src] += a.weight;
        Vector inv_sqrt = degree.cwiseSqrt().cwiseInverse();
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(graph.arcs().size() + n);
        for (const Arc& a : graph.arcs())
            trip.emplace_back(a.src, a.dst, a.weight * inv_sqrt[a.src] * inv_sqrt[a.dst]);
        for (int u = 0; u < n; ++u)
            trip.emplace_back(u, u, inv_sqrt[u] * inv_sqrt[u]);
        op.setFromTriplets(trip.begin(), trip.end());
        return op;
    }
    case Arch::sage: {
        const Vector& out = graph.out_strength();
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(graph.arcs().size());
        for (const Arc& a : graph.arcs()) {
            if (out[a.src] > 0.0)
                trip.emplace_back(a.src, a.dst, a.weight / out[a.src]);
        }
        op.setFromTriplets(trip.begin(), trip.end());
        return op;
    }
    case Arch::gin: {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(graph.arcs().size() + n);
        for (const Arc& a : graph.arcs())
            trip.emplace_back(a.src, a.dst, a.weight);
        for (int u = 0; u < n; ++u)
            trip.emplace_back(u, u, 1.0 + kGinSelfWeight);
        op.setFromTriplets(trip.begin(), trip.end());
        return op;
    }
    }
    throw std::logic_error("unreachable");
}

namespace detail {

inline Matrix glorot_uniform(int rows, int cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix w(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c)
            w(r, c) = dist(rng);
    }
    return w;
}

} // namespace detail

/// Seeded Glorot-uniform weights, zero biases, unit batch-norm scale,
/// temperature at its configured initial value.
inline EncoderParams init_params(const EncoderConfig& config, int n, int input_dim,
                                 std::uint64_t seed) {
    config.validate();
    EncoderParams params;
    params.arch = config.arch;
    params.input_dim = input_dim;
    params.hidden_dim = config.resolved_hidden(n);
    params.clusters = config.resolved_clusters(n);
    params.use_batch_norm = config.use_batch_norm;

    std::mt19937_64 rng(seed);
    const int d = input_dim;
    const int h = params.hidden_dim;
    const int s = params.clusters;
    auto weight = [&](const std::string& name, int rows, int cols) {
        params.tensors.emplace_back(name, detail::glorot_uniform(rows, cols, rng));
    };
    auto bias = [&](const std::string& name, int cols) {
        params.tensors.emplace_back(name, Matrix::Zero(1, cols));
    };
    auto norm_pair = [&](const std::string& prefix, int cols) {
        if (config.use_batch_norm) {
            params.tensors.emplace_back(prefix + ".scale", Matrix::Ones(1, cols));
            params.tensors.emplace_back(prefix + ".shift", Matrix::Zero(1, cols));
        }
    };

    switch (config.arch) {
    case Arch::linear:
        // the single affine map is also the normalised layer: without it no
        // batch norm would act at all, and one output column can win every
        // node within a few optimiser steps
        weight("out.weight", d, s);
        bias("out.bias", s);
        norm_pair("norm_out", s);
        break;
    case Arch::mlp:
    case Arch::gcn:
        weight("layer1.weight", d, h);
        bias("layer1.bias", h);
        norm_pair("norm1", h);
        weight("out.weight", h, s);
        bias("out.bias", s);
        break;
    case Arch::gin:
        weight("layer1.mlp1.weight", d, h);
        bias("layer1.mlp1.bias", h);
        weight("layer1.mlp2.weight", h, h);
        bias("layer1.mlp2.bias", h);
        norm_pair("norm1", h);
        weight("out.mlp1.weight", h, h);
        bias("out.mlp1.bias", h);
        weight("out.mlp2.weight", h, s);
        bias("out.mlp2.bias", s);
        break;
    case Arch::sage:
        weight("layer1.self.weight", d, h);
        weight("layer1.neighbor.weight", d, h);
        bias("layer1.bias", h);
        norm_pair("norm1", h);
        weight("out.self.weight", h, s);
        weight("out.neighbor.weight", h, s);
        bias("out.bias", s);
        break;
    }
    Matrix log_temp(1, 1);
    log_temp(0, 0) = std::log(config.temperature_init);
    params.tensors.emplace_back("log_temperature", log_temp);
    return params;
}

/// Recorded forward pass: parameter leaves in tensor order, the raw logits,
/// and the temperature-softmax assignments.
struct EncoderTrace {
    std::vector<Var> parameters;  // aligned with EncoderParams::tensors
    Var logits;
    Var assignments;
};

namespace detail {

inline Matrix sample_dropout_mask(Eigen::Index rows, Eigen::Index cols, double p,
                                  std::mt19937_64& rng) {
    std::bernoulli_distribution keep(1.0 - p);
    const double scale = 1.0 / (1.0 - p);
    Matrix mask(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c)
            mask(r, c) = keep(rng) ? scale : 0.0;
    }
    return mask;
}

} // namespace detail

/// Two-layer encoder stack. Hidden blocks run affine -> batch norm -> SELU
/// -> dropout; the output layer emits raw logits (the single-layer linear
/// encoder normalises its output instead, see init_params). Dropout masks
/// are sampled from mask_rng only in train mode.
inline EncoderTrace encoder_forward(Tape& tape, const EncoderParams& params,
                                    const SparseMatrix& message_op, const Matrix& features,
                                    double dropout_p, bool train_mode,
                                    std::mt19937_64* mask_rng) {
    if (features.cols() != params.input_dim)
        throw std::invalid_argument("feature dimension does not match encoder parameters");

    EncoderTrace trace;
    trace.parameters.reserve(params.tensors.size());
    std::unordered_map<std::string, Var> vars;
    for (const auto& [name, value] : params.tensors) {
        Var v = tape.leaf(value, /*requires_grad=*/true);
        trace.parameters.push_back(v);
        vars.emplace(name, v);
    }
    Var x = tape.leaf(features, /*requires_grad=*/false);

    const bool use_dropout = train_mode && dropout_p > 0.0 && mask_rng != nullptr;
    auto hidden_block = [&](Var h, const std::string& norm_prefix) {
        if (params.use_batch_norm)
            h = tape.batch_feature_norm(h, vars.at(norm_prefix + ".scale"),
                                        vars.at(norm_prefix + ".shift"));
        h = tape.selu(h);
        if (use_dropout) {
            const Matrix mask = detail::sample_dropout_mask(
                tape.value(h).rows(), tape.value(h).cols(), dropout_p, *mask_rng);
            h = tape.dropout_mask_apply(h, mask);
        }
        return h;
    };

    Var logits{};
    switch (params.arch) {
    case Arch::linear: {
        logits = tape.add_row_broadcast(tape.matmul(x, vars.at("out.weight")),
                                        vars.at("out.bias"));
        if (params.use_batch_norm)
            logits = tape.batch_feature_norm(logits, vars.at("norm_out.scale"),
                                             vars.at("norm_out.shift"));
        break;
    }
    case Arch::mlp: {
        Var h = tape.add_row_broadcast(tape.matmul(x, vars.at("layer1.weight")),
                                       vars.at("layer1.bias"));
        h = hidden_block(h, "norm1");
        logits = tape.add_row_broadcast(tape.matmul(h, vars.at("out.weight")),
                                        vars.at("out.bias"));
        break;
    }
    case Arch::gcn: {
        Var h = tape.add_row_broadcast(
            tape.matmul(tape.sparse_matmul(message_op, x), vars.at("layer1.weight")),
            vars.at("layer1.bias"));
        h = hidden_block(h, "norm1");
        logits = tape.add_row_broadcast(
            tape.matmul(tape.sparse_matmul(message_op, h), vars.at("out.weight")),
            vars.at("out.bias"));
        break;
    }
    case Arch::gin: {
        auto gin_layer = [&](Var input, const std::string& prefix) {
            Var msg = tape.sparse_matmul(message_op, input);
            Var inner = tape.selu(tape.add_row_broadcast(
                tape.matmul(msg, vars.at(prefix + ".mlp1.weight")),
                vars.at(prefix + ".mlp1.bias")));
            return tape.add_row_broadcast(tape.matmul(inner, vars.at(prefix + ".mlp2.weight")),
                                          vars.at(prefix + ".mlp2.bias"));
        };
        Var h = hidden_block(gin_layer(x, "layer1"), "norm1");
        logits = gin_layer(h, "out");
        break;
    }
    case Arch::sage: {
        auto sage_layer = [&](Var input, const std::string& prefix) {
            Var self_part = tape.matmul(input, vars.at(prefix + ".self.weight"));
            Var neighbor_part = tape.matmul(tape.sparse_matmul(message_op, input),
                                            vars.at(prefix + ".neighbor.weight"));
            return tape.add_row_broadcast(tape.add(self_part, neighbor_part),
                                          vars.at(prefix + ".bias"));
        };
        Var h = hidden_block(sage_layer(x, "layer1"), "norm1");
        logits = sage_layer(h, "out");
        break;
    }
    }
    trace.logits = logits;
    trace.assignments = tape.row_softmax_with_temperature(logits, vars.at("log_temperature"));
    return trace;
}

/// Row-wise softmax of logits / temperature without a tape, for inference.
inline Matrix soft_assignments(const Matrix& logits, double temperature) {
    if (!(temperature > 0.0))
        throw std::invalid_argument("temperature must be positive");
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        Eigen::RowVectorXd scaled = logits.row(r) / temperature;
        const double shift = scaled.maxCoeff();
        out.row(r) = (scaled.array() - shift).exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

// ---- checkpoint io ----

inline constexpr const char* kParamsFormat = "mapeq-params-v1";

inline nlohmann::ordered_json params_to_json(const EncoderParams& params) {
    nlohmann::ordered_json doc;
    doc["format"] = kParamsFormat;
    doc["arch"] = arch_name(params.arch);
    doc["input_dim"] = params.input_dim;
    doc["hidden_dim"] = params.hidden_dim;
    doc["clusters"] = params.clusters;
    doc["batch_norm"] = params.use_batch_norm;
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    for (const auto& [name, value] : params.tensors) {
        nlohmann::ordered_json entry;
        entry["name"] = name;
        entry["rows"] = value.rows();
        entry["cols"] = value.cols();
        std::vector<double> data(value.size());
        for (Eigen::Index r = 0; r < value.rows(); ++r) {
            for (Eigen::Index c = 0; c < value.cols(); ++c)
                data[r * value.cols() + c] = value(r, c);
        }
        entry["data"] = data;
        tensors.push_back(std::move(entry));
    }
    doc["tensors"] = std::move(tensors);
    return doc;
}

inline EncoderParams params_from_json(const nlohmann::json& doc) {
    if (!doc.contains("format") || doc["format"] != kParamsFormat)
        throw std::runtime_error("unsupported parameter checkpoint format");
    EncoderParams params;
    params.arch = arch_from_name(doc.at("arch").get<std::string>());
    params.input_dim = doc.at("input_dim").get<int>();
    params.hidden_dim = doc.at("hidden_dim").get<int>();
    params.clusters = doc.at("clusters").get<int>();
    params.use_batch_norm = doc.at("batch_norm").get<bool>();
    for (const auto& entry : doc.at("tensors")) {
        const int rows = entry.at("rows").get<int>();
        const int cols = entry.at("cols").get<int>();
        const auto data = entry.at("data").get<std::vector<double>>();
        if (static_cast<int>(data.size()) != rows * cols)
            throw std::runtime_error("tensor '" + entry.at("name").get<std::string>() +
                                     "' has inconsistent size");
        Matrix value(rows, cols);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c)
                value(r, c) = data[r * cols + c];
        }
        params.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(value));
    }
    return params;
}

} // namespace mapeq
