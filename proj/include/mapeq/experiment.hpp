#pragma once

#include "mapeq/metrics.hpp"
#include "mapeq/train.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <set>

namespace mapeq {

struct PlantedGraph {
    Graph graph;
    Partition truth;
    int attempts = 1;
};

/// Undirected planted-partition graph: unit-weight edges drawn with
/// probability p_in inside blocks and p_out between them. Resamples until
/// the graph is connected (every node reached by at least one edge), up to
/// max_retries attempts.
inline PlantedGraph generate_planted(int blocks, int block_size, double p_in, double p_out,
                                     std::uint64_t seed, int max_retries = 100) {
    if (blocks < 1 || block_size < 1)
        throw std::invalid_argument("blocks and block_size must be positive");
    if (p_in < 0.0 || p_in > 1.0 || p_out < 0.0 || p_out > 1.0)
        throw std::invalid_argument("edge probabilities must lie in [0, 1]");
    const int n = blocks * block_size;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    std::vector<int> truth_labels(n);
    for (int u = 0; u < n; ++u)
        truth_labels[u] = u / block_size;

    for (int attempt = 1; attempt <= max_retries; ++attempt) {
        std::vector<std::tuple<int, int, double>> edges;
        for (int u = 0; u < n; ++u) {
            for (int v = u + 1; v < n; ++v) {
                const double p = truth_labels[u] == truth_labels[v] ? p_in : p_out;
                if (coin(rng) < p)
                    edges.emplace_back(u, v, 1.0);
            }
        }
        if (edges.empty())
            continue;
        Graph graph = Graph::from_index_edges(edges, /*directed=*/false, n);
        if (connected_components(graph).count == 1) {
            PlantedGraph planted;
            planted.graph = std::move(graph);
            planted.truth = Partition::from_labels(truth_labels);
            planted.attempts = attempt;
            return planted;
        }
    }
    throw std::runtime_error("planted graph stayed disconnected after " +
                             std::to_string(max_retries) + " attempts");
}

/// Reads the 1-indexed LFR benchmark pair network.dat / community.dat.
/// Undirected network.dat files list every edge in both directions, so the
/// undirected load deduplicates (u, v)/(v, u) pairs before symmetrising.
inline std::pair<Graph, Partition> load_lfr(const std::string& network_path,
                                            const std::string& community_path, bool directed) {
    std::ifstream net(network_path);
    if (!net)
        throw std::runtime_error("cannot open '" + network_path + "'");
    std::vector<std::tuple<std::string, std::string, double>> edges;
    std::set<std::pair<std::string, std::string>> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(net, line)) {
        ++line_no;
        if (detail::is_comment_or_blank(line))
            continue;
        std::istringstream ls(line);
        std::string src, dst, wtok;
        if (!(ls >> src >> dst))
            throw std::runtime_error(network_path + ":" + std::to_string(line_no) +
                                     ": malformed line");
        double w = 1.0;
        if (ls >> wtok)
            w = detail::parse_weight(wtok, network_path, line_no);
        if (!directed) {
            auto key = src <= dst ? std::make_pair(src, dst) : std::make_pair(dst, src);
            if (!seen.insert(key).second)
                continue;  // reverse listing of an edge already taken
        }
        edges.emplace_back(src, dst, w);
    }
    Graph graph = Graph::from_edges(edges, directed);
    Partition truth = load_partition(community_path, graph);
    return {std::move(graph), std::move(truth)};
}

struct GraphSource {
    std::string edge_list;  // path; empty when using the generator
    bool directed = false;
    bool weighted = true;
    std::string truth_file;                // optional ground truth "id label"
    std::optional<std::array<double, 2>> planted_probabilities;  // p_in, p_out
    int planted_blocks = 2;
    int planted_block_size = 30;
    std::uint64_t planted_seed = 1;
};

struct ExperimentSpec {
    GraphSource source;
    EncoderConfig encoder;
    TrainConfig train_config;
    FlowOptions flow;
    std::string output_path;  // optional CSV destination
};

struct TrialRow {
    int trial = 0;
    std::uint64_t seed = 0;
    double loss_bits = 0.0;
    int modules = 0;
    int epochs = 0;
    double ami_score = std::numeric_limits<double>::quiet_NaN();  // NaN without ground truth
};

struct Summary {
    double mean = 0.0;
    double stddev = 0.0;
};

inline Summary summarize(const std::vector<double>& values) {
    Summary s;
    if (values.empty())
        return s;
    for (double v : values)
        s.mean += v;
    s.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values)
            ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

struct ExperimentResult {
    std::vector<TrialRow> rows;
    Summary ami_summary;
    Summary loss_summary;
    Summary modules_summary;
    bool has_truth = false;
};

/// Resolves the spec's graph source: either an edge list (plus optional
/// ground truth) or the built-in planted-partition generator.
inline std::pair<Graph, std::optional<Partition>> load_source(const GraphSource& source) {
    if (!source.edge_list.empty()) {
        Graph graph = load_edge_list(source.edge_list, source.directed, source.weighted);
        std::optional<Partition> truth;
        if (!source.truth_file.empty())
            truth = load_partition(source.truth_file, graph);
        return {std::move(graph), std::move(truth)};
    }
    if (!source.planted_probabilities)
        throw std::invalid_argument("experiment needs an edge list or planted probabilities");
    PlantedGraph planted =
        generate_planted(source.planted_blocks, source.planted_block_size,
                         (*source.planted_probabilities)[0], (*source.planted_probabilities)[1],
                         source.planted_seed);
    return {std::move(planted.graph), std::move(planted.truth)};
}

/// Runs `trials` independent trainings (seeds seed, seed+1, ...) and tabulates
/// per-trial AMI, module count, codelength, and epochs, with mean/stddev
/// summaries. Trials execute concurrently; the table order is by trial.
inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
    auto [graph, truth] = load_source(spec.source);
    const Matrix features = identity_features(graph);

    std::vector<TrainedResult> trials;
    TrainConfig config = spec.train_config;
    train_best_of(graph, features, spec.encoder, config, spec.flow, &trials);

    ExperimentResult result;
    result.has_truth = truth.has_value();
    std::vector<double> amis, losses, modules;
    for (int t = 0; t < static_cast<int>(trials.size()); ++t) {
        const TrainedResult& trained = trials[t];
        TrialRow row;
        row.trial = t;
        row.seed = trained.seed;
        row.loss_bits = trained.best_loss_bits;
        row.epochs = trained.epochs_run;
        const Partition extracted = hard_partition(trained.best_assignments);
        row.modules = count_modules(extracted);
        if (truth)
            row.ami_score = ami(extracted, *truth);
        result.rows.push_back(row);
        losses.push_back(row.loss_bits);
        modules.push_back(static_cast<double>(row.modules));
        if (truth)
            amis.push_back(row.ami_score);
    }
    result.loss_summary = summarize(losses);
    result.modules_summary = summarize(modules);
    if (truth)
        result.ami_summary = summarize(amis);
    return result;
}

inline void write_experiment_csv(const ExperimentResult& result, std::ostream& out) {
    out << "trial,seed,ami,modules,loss_bits,epochs\n";
    char buf[64];
    for (const TrialRow& row : result.rows) {
        out << row.trial << ',' << row.seed << ',';
        if (!std::isnan(row.ami_score)) {
            std::snprintf(buf, sizeof(buf), "%.17g", row.ami_score);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "%.17g", row.loss_bits);
        out << ',' << row.modules << ',' << buf << ',' << row.epochs << '\n';
    }
}

inline nlohmann::ordered_json experiment_to_json(const ExperimentResult& result) {
    nlohmann::ordered_json doc;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const TrialRow& row : result.rows) {
        nlohmann::ordered_json r;
        r["trial"] = row.trial;
        r["seed"] = row.seed;
        if (!std::isnan(row.ami_score))
            r["ami"] = row.ami_score;
        r["modules"] = row.modules;
        r["loss_bits"] = row.loss_bits;
        r["epochs"] = row.epochs;
        rows.push_back(std::move(r));
    }
    doc["trials"] = std::move(rows);
    nlohmann::ordered_json summary;
    if (result.has_truth) {
        summary["ami_mean"] = result.ami_summary.mean;
        summary["ami_std"] = result.ami_summary.stddev;
    }
    summary["loss_mean"] = result.loss_summary.mean;
    summary["loss_std"] = result.loss_summary.stddev;
    summary["modules_mean"] = result.modules_summary.mean;
    summary["modules_std"] = result.modules_summary.stddev;
    doc["summary"] = std::move(summary);
    return doc;
}

/// Parses an ExperimentSpec from JSON (see README for the schema).
inline ExperimentSpec experiment_spec_from_json(const nlohmann::json& doc) {
    ExperimentSpec spec;
    const auto& graph = doc.at("graph");
    if (graph.contains("edge_list")) {
        spec.source.edge_list = graph.at("edge_list").get<std::string>();
        spec.source.directed = graph.value("directed", false);
        spec.source.weighted = graph.value("weighted", true);
        if (graph.contains("truth"))
            spec.source.truth_file = graph.at("truth").get<std::string>();
    } else if (graph.contains("planted")) {
        const auto& planted = graph.at("planted");
        spec.source.planted_blocks = planted.at("blocks").get<int>();
        spec.source.planted_block_size = planted.at("block_size").get<int>();
        spec.source.planted_probabilities = {planted.at("p_in").get<double>(),
                                             planted.at("p_out").get<double>()};
        spec.source.planted_seed = planted.value("seed", 1ULL);
    } else {
        throw std::invalid_argument("experiment graph needs 'edge_list' or 'planted'");
    }
    if (doc.contains("encoder")) {
        const auto& enc = doc.at("encoder");
        if (enc.contains("arch"))
            spec.encoder.arch = arch_from_name(enc.at("arch").get<std::string>());
        spec.encoder.hidden_dim = enc.value("hidden_dim", 0);
        spec.encoder.max_clusters = enc.value("max_clusters", 0);
        spec.encoder.dropout_p = enc.value("dropout", 0.5);
        spec.encoder.use_batch_norm = enc.value("batch_norm", true);
        spec.encoder.temperature_init = enc.value("temperature_init", 1.0);
    }
    if (doc.contains("train")) {
        const auto& tr = doc.at("train");
        spec.train_config.learning_rate = tr.value("lr", 0.0);
        spec.train_config.max_epochs = tr.value("max_epochs", 10000);
        spec.train_config.patience = tr.value("patience", 100);
        spec.train_config.seed = tr.value("seed", 0ULL);
        spec.train_config.epsilon_loss = tr.value("epsilon_loss", 1e-6);
        spec.train_config.trials = tr.value("trials", 10);
    }
    if (doc.contains("flow")) {
        const auto& fl = doc.at("flow");
        spec.flow.alpha = fl.value("alpha", 0.15);
        spec.flow.tolerance = fl.value("tolerance", 1e-12);
        spec.flow.max_iterations = fl.value("max_iterations", 10000);
    }
    spec.output_path = doc.value("output", std::string());
    return spec;
}

} // namespace mapeq
