// Command-line front end for the map-equation clustering engine.
#include "mapeq/mapeq.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <iostream>

namespace {

using nlohmann::ordered_json;

struct GraphArgs {
    std::string path;
    bool directed = false;
    bool unweighted = false;
    bool strict_connectivity = false;
};

void add_graph_options(CLI::App* cmd, GraphArgs& args) {
    cmd->add_option("--graph", args.path, "edge list file: 'src dst [weight]' per line")
        ->required();
    cmd->add_flag("--directed", args.directed, "treat edges as directed arcs");
    cmd->add_flag("--unweighted", args.unweighted, "ignore weight columns");
    cmd->add_flag("--strict-connectivity", args.strict_connectivity,
                  "abort instead of warning when the graph is disconnected");
}

mapeq::Graph load_graph(const GraphArgs& args) {
    mapeq::Graph graph = mapeq::load_edge_list(args.path, args.directed, !args.unweighted);
    const auto components = mapeq::connected_components(graph);
    if (components.count != 1) {
        if (args.strict_connectivity)
            throw std::runtime_error("graph has " + std::to_string(components.count) +
                                     " weakly connected components");
        std::cerr << "warning: graph has " << components.count
                  << " weakly connected components; clustering assumes one\n";
    }
    return graph;
}

void emit(const ordered_json& doc, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << doc.dump(2) << '\n';
        return;
    }
    std::ofstream out(out_path);
    if (!out)
        throw std::runtime_error("cannot write '" + out_path + "'");
    out << doc.dump(2) << '\n';
}

ordered_json codelength_to_json(const mapeq::Codelength& bits) {
    ordered_json doc;
    doc["total"] = bits.total_bits;
    doc["index"] = bits.index_bits;
    doc["module"] = bits.module_bits;
    doc["q"] = bits.q;
    ordered_json per_module = ordered_json::array();
    for (Eigen::Index m = 0; m < bits.q_m.size(); ++m) {
        ordered_json entry;
        entry["module"] = m;
        entry["q_m"] = bits.q_m[m];
        entry["m_exit"] = bits.m_exit[m];
        entry["p_m"] = bits.p_m[m];
        per_module.push_back(std::move(entry));
    }
    doc["per_module"] = std::move(per_module);
    return doc;
}

ordered_json partition_to_json(const mapeq::Partition& part, const mapeq::Graph& graph) {
    ordered_json doc = ordered_json::object();
    for (int u = 0; u < graph.node_count(); ++u)
        doc[graph.node_id(u)] = part.labels[u];
    return doc;
}

int run_flow(const GraphArgs& graph_args, const mapeq::FlowOptions& options,
             const std::string& out_path) {
    const mapeq::Graph graph = load_graph(graph_args);
    const mapeq::FlowModel flow = mapeq::make_flow_model(graph, options);
    ordered_json doc;
    doc["n"] = graph.node_count();
    doc["directed"] = graph.directed();
    doc["w_tot"] = graph.total_weight();
    doc["alpha"] = flow.alpha;
    doc["converged"] = flow.converged;
    doc["iterations"] = flow.iterations;
    doc["sum_p"] = flow.p.sum();
    double sum_flow = 0.0;
    for (int row = 0; row < flow.flow.outerSize(); ++row) {
        for (mapeq::SparseMatrix::InnerIterator it(flow.flow, row); it; ++it)
            sum_flow += it.value();
    }
    doc["sum_F"] = sum_flow;
    ordered_json visit = ordered_json::object();
    for (int u = 0; u < graph.node_count(); ++u)
        visit[graph.node_id(u)] = flow.p[u];
    doc["p"] = std::move(visit);
    emit(doc, out_path);
    return 0;
}

int run_codelength(const GraphArgs& graph_args, const mapeq::FlowOptions& options,
                   const std::string& partition_path, const std::string& form,
                   const std::string& out_path) {
    const mapeq::Graph graph = load_graph(graph_args);
    const mapeq::FlowModel flow = mapeq::make_flow_model(graph, options);
    const mapeq::Partition part = mapeq::load_partition(partition_path, graph);
    mapeq::Codelength bits;
    if (form == "entropy")
        bits = mapeq::codelength_entropy_form(flow, part);
    else
        bits = mapeq::codelength_expanded_form(flow, part);
    ordered_json doc = codelength_to_json(bits);
    doc["form"] = form;
    doc["modules"] = part.module_count;
    emit(doc, out_path);
    return 0;
}

int run_optimum(const GraphArgs& graph_args, const mapeq::FlowOptions& options, int max_n,
                const std::string& out_path, const std::string& partition_out) {
    const mapeq::Graph graph = load_graph(graph_args);
    const mapeq::FlowModel flow = mapeq::make_flow_model(graph, options);
    const mapeq::BruteForceResult best = mapeq::brute_force_optimum(flow, max_n);
    ordered_json doc;
    doc["modules"] = best.partition.module_count;
    doc["codelength"] = codelength_to_json(best.codelength);
    doc["partition"] = partition_to_json(best.partition, graph);
    if (!partition_out.empty())
        mapeq::write_partition(best.partition, graph, partition_out);
    emit(doc, out_path);
    return 0;
}

// Universe for partition comparison without a graph: ids from the files.
mapeq::Partition partition_from_file_standalone(const std::string& path,
                                                std::vector<std::string>& ids_in_order) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open partition file '" + path + "'");
    std::map<std::string, int> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (mapeq::detail::is_comment_or_blank(line))
            continue;
        std::istringstream ls(line);
        std::string id;
        int label = 0;
        if (!(ls >> id >> label))
            throw std::runtime_error(path + ": malformed line '" + line + "'");
        labels[id] = label;
    }
    if (labels.empty())
        throw std::runtime_error(path + ": empty partition");
    if (ids_in_order.empty()) {
        for (const auto& [id, label] : labels)
            ids_in_order.push_back(id);
    }
    std::vector<int> raw;
    raw.reserve(ids_in_order.size());
    for (const std::string& id : ids_in_order) {
        auto it = labels.find(id);
        if (it == labels.end())
            throw std::runtime_error(path + ": missing label for node '" + id + "'");
        raw.push_back(it->second);
    }
    if (labels.size() != ids_in_order.size())
        throw std::runtime_error(path + ": partitions label different node sets");
    return mapeq::Partition::from_labels(raw);
}

int run_eval(const std::string& pred_path, const std::string& truth_path,
             const std::string& graph_path, bool directed, const std::string& out_path) {
    mapeq::Partition pred, truth;
    std::optional<mapeq::Graph> graph;
    if (!graph_path.empty()) {
        graph = mapeq::load_edge_list(graph_path, directed);
        pred = mapeq::load_partition(pred_path, *graph);
        truth = mapeq::load_partition(truth_path, *graph);
    } else {
        std::vector<std::string> ids;
        pred = partition_from_file_standalone(pred_path, ids);
        truth = partition_from_file_standalone(truth_path, ids);
    }
    ordered_json doc;
    doc["ami"] = mapeq::ami(pred, truth);
    doc["modules_pred"] = mapeq::count_modules(pred);
    doc["modules_true"] = mapeq::count_modules(truth);
    if (graph) {
        doc["mu_pred"] = mapeq::mixing(*graph, pred);
        doc["mu_true"] = mapeq::mixing(*graph, truth);
    } else {
        doc["mu_pred"] = nullptr;
        doc["mu_true"] = nullptr;
    }
    emit(doc, out_path);
    return 0;
}

struct ClusterArgs {
    GraphArgs graph;
    std::string features_path;
    std::string arch = "mlp";
    mapeq::EncoderConfig encoder;
    mapeq::TrainConfig train;
    mapeq::FlowOptions flow;
    bool no_batch_norm = false;
    bool emit_soft = false;
    std::string out_path;
    std::string partition_out;
    std::string params_out;
    std::string loss_history_path;
};

int run_cluster(ClusterArgs& args) {
    const mapeq::Graph graph = load_graph(args.graph);
    args.encoder.arch = mapeq::arch_from_name(args.arch);
    args.encoder.use_batch_norm = !args.no_batch_norm;

    mapeq::Matrix features;
    if (args.features_path.empty())
        features = mapeq::identity_features(graph);
    else
        features = mapeq::load_features(args.features_path, graph);

    std::vector<mapeq::TrainedResult> trials;
    const mapeq::TrainedResult best =
        mapeq::train_best_of(graph, features, args.encoder, args.train, args.flow, &trials);
    const mapeq::Partition extracted = mapeq::hard_partition(best.best_assignments);

    const mapeq::FlowModel flow = mapeq::make_flow_model(graph, args.flow);
    const mapeq::Codelength hard_bits = mapeq::codelength_expanded_form(flow, extracted);

    ordered_json doc;
    ordered_json config;
    config["arch"] = args.arch;
    config["hidden_dim"] = args.encoder.resolved_hidden(graph.node_count());
    config["max_clusters"] = args.encoder.resolved_clusters(graph.node_count());
    config["dropout"] = args.encoder.dropout_p;
    config["batch_norm"] = args.encoder.use_batch_norm;
    config["temperature_init"] = args.encoder.temperature_init;
    config["lr"] = mapeq::resolve_learning_rate(args.train, args.encoder.arch);
    config["max_epochs"] = args.train.max_epochs;
    config["patience"] = args.train.patience;
    config["epsilon_loss"] = args.train.epsilon_loss;
    config["seed"] = args.train.seed;
    config["trials"] = args.train.trials;
    config["alpha"] = args.flow.alpha;
    doc["config"] = std::move(config);
    doc["n"] = graph.node_count();
    doc["w_tot"] = graph.total_weight();
    doc["directed"] = graph.directed();
    doc["loss_bits"] = best.best_loss_bits;
    doc["hard_codelength"] = hard_bits.total_bits;
    doc["epochs"] = best.epochs_run;
    doc["best_epoch"] = best.best_epoch;
    doc["best_seed"] = best.seed;
    doc["modules"] = mapeq::count_modules(extracted);
    ordered_json trial_losses = ordered_json::array();
    for (const auto& trial : trials)
        trial_losses.push_back(trial.best_loss_bits);
    doc["trial_losses"] = std::move(trial_losses);
    doc["partition"] = partition_to_json(extracted, graph);
    if (args.emit_soft) {
        ordered_json soft = ordered_json::array();
        for (Eigen::Index r = 0; r < best.best_assignments.rows(); ++r) {
            ordered_json row = ordered_json::array();
            for (Eigen::Index c = 0; c < best.best_assignments.cols(); ++c)
                row.push_back(best.best_assignments(r, c));
            soft.push_back(std::move(row));
        }
        doc["soft_assignments"] = std::move(soft);
    }

    if (!args.partition_out.empty())
        mapeq::write_partition(extracted, graph, args.partition_out);
    if (!args.params_out.empty()) {
        std::ofstream out(args.params_out);
        if (!out)
            throw std::runtime_error("cannot write '" + args.params_out + "'");
        out << mapeq::params_to_json(best.best_params).dump(2) << '\n';
    }
    if (!args.loss_history_path.empty()) {
        std::ofstream out(args.loss_history_path);
        if (!out)
            throw std::runtime_error("cannot write '" + args.loss_history_path + "'");
        out << "trial,epoch,loss_bits\n";
        char buf[64];
        for (std::size_t t = 0; t < trials.size(); ++t) {
            for (std::size_t e = 0; e < trials[t].loss_history.size(); ++e) {
                std::snprintf(buf, sizeof(buf), "%.17g", trials[t].loss_history[e]);
                out << t << ',' << e << ',' << buf << '\n';
            }
        }
    }
    emit(doc, args.out_path);
    return 0;
}

int run_bench(const std::string& spec_path, const std::string& out_path) {
    std::ifstream in(spec_path);
    if (!in)
        throw std::runtime_error("cannot open spec '" + spec_path + "'");
    nlohmann::json doc = nlohmann::json::parse(in);
    mapeq::ExperimentSpec spec = mapeq::experiment_spec_from_json(doc);
    const mapeq::ExperimentResult result = mapeq::run_experiment(spec);
    const std::string csv_path = out_path.empty() ? spec.output_path : out_path;
    if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        if (!csv)
            throw std::runtime_error("cannot write '" + csv_path + "'");
        mapeq::write_experiment_csv(result, csv);
    }
    std::cout << mapeq::experiment_to_json(result).dump(2) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"map-equation graph clustering via differentiable codelength minimisation"};
    app.require_subcommand(1);

    // flow
    GraphArgs flow_graph;
    mapeq::FlowOptions flow_options;
    std::string flow_out;
    bool flow_force_power = false;
    CLI::App* flow_cmd = app.add_subcommand("flow", "visit rates and flow diagnostics");
    add_graph_options(flow_cmd, flow_graph);
    flow_cmd->add_option("--alpha", flow_options.alpha, "teleportation probability");
    flow_cmd->add_option("--tol", flow_options.tolerance, "power iteration L1 tolerance");
    flow_cmd->add_option("--max-iter", flow_options.max_iterations, "power iteration cap");
    flow_cmd->add_flag("--force-power", flow_force_power,
                       "use the power iteration even on undirected graphs");
    flow_cmd->add_option("--out", flow_out, "write JSON here instead of stdout");

    // codelength
    GraphArgs code_graph;
    mapeq::FlowOptions code_options;
    std::string code_partition, code_form = "expanded", code_out;
    CLI::App* code_cmd = app.add_subcommand("codelength", "exact codelength of a partition");
    add_graph_options(code_cmd, code_graph);
    code_cmd->add_option("--partition", code_partition, "partition file: 'id label' per line")
        ->required();
    code_cmd->add_option("--form", code_form, "evaluator: entropy or expanded")
        ->check(CLI::IsMember({"entropy", "expanded"}));
    code_cmd->add_option("--alpha", code_options.alpha, "teleportation probability");
    code_cmd->add_option("--out", code_out, "write JSON here instead of stdout");

    // eval
    std::string eval_pred, eval_truth, eval_graph, eval_out;
    bool eval_directed = false;
    CLI::App* eval_cmd = app.add_subcommand("eval", "compare two partitions");
    eval_cmd->add_option("--pred", eval_pred, "predicted partition file")->required();
    eval_cmd->add_option("--truth", eval_truth, "reference partition file")->required();
    eval_cmd->add_option("--graph", eval_graph, "edge list (enables mixing values)");
    eval_cmd->add_flag("--directed", eval_directed, "treat --graph as directed");
    eval_cmd->add_option("--out", eval_out, "write JSON here instead of stdout");

    // optimum
    GraphArgs opt_graph;
    mapeq::FlowOptions opt_options;
    int opt_max_n = 10;
    std::string opt_out, opt_partition_out;
    CLI::App* opt_cmd = app.add_subcommand("optimum", "exhaustive best partition (small graphs)");
    add_graph_options(opt_cmd, opt_graph);
    opt_cmd->add_option("--max-n", opt_max_n, "largest node count accepted");
    opt_cmd->add_option("--alpha", opt_options.alpha, "teleportation probability");
    opt_cmd->add_option("--out", opt_out, "write JSON here instead of stdout");
    opt_cmd->add_option("--partition-out", opt_partition_out, "also write 'id label' file");

    // cluster
    ClusterArgs cluster_args;
    CLI::App* cluster_cmd = app.add_subcommand("cluster", "learn a partition by gradient descent");
    add_graph_options(cluster_cmd, cluster_args.graph);
    cluster_cmd->add_option("--features", cluster_args.features_path,
                            "feature file (CSV or triplets); default: adjacency as features");
    cluster_cmd->add_option("--arch", cluster_args.arch, "linear, mlp, gcn, gin, or sage")
        ->check(CLI::IsMember({"linear", "mlp", "gcn", "gin", "sage"}));
    cluster_cmd->add_option("--s,--max-clusters", cluster_args.encoder.max_clusters,
                            "maximum cluster count (default ceil(sqrt(n)))");
    cluster_cmd->add_option("--hidden", cluster_args.encoder.hidden_dim,
                            "hidden width (default ceil(4 sqrt(n)))");
    cluster_cmd->add_option("--dropout", cluster_args.encoder.dropout_p, "dropout probability");
    cluster_cmd->add_flag("--no-batch-norm", cluster_args.no_batch_norm,
                          "disable batch normalisation");
    cluster_cmd->add_option("--temperature", cluster_args.encoder.temperature_init,
                            "initial softmax temperature");
    cluster_cmd->add_option("--lr", cluster_args.train.learning_rate,
                            "learning rate (default per architecture)");
    cluster_cmd->add_option("--epochs", cluster_args.train.max_epochs, "epoch cap");
    cluster_cmd->add_option("--patience", cluster_args.train.patience, "early stopping patience");
    cluster_cmd->add_option("--epsilon-loss", cluster_args.train.epsilon_loss,
                            "improvement threshold in bits");
    cluster_cmd->add_option("--seed", cluster_args.train.seed, "base random seed");
    cluster_cmd->add_option("--trials", cluster_args.train.trials, "independent runs");
    cluster_cmd->add_option("--alpha", cluster_args.flow.alpha, "teleportation probability");
    cluster_cmd->add_flag("--emit-soft", cluster_args.emit_soft,
                          "include the soft assignment matrix in the JSON");
    cluster_cmd->add_option("--out", cluster_args.out_path, "write JSON here instead of stdout");
    cluster_cmd->add_option("--partition-out", cluster_args.partition_out,
                            "also write 'id label' file");
    cluster_cmd->add_option("--params-out", cluster_args.params_out,
                            "write the best parameters as a JSON checkpoint");
    cluster_cmd->add_option("--loss-history", cluster_args.loss_history_path,
                            "write per-trial loss history CSV");

    // bench
    std::string bench_spec, bench_out;
    CLI::App* bench_cmd = app.add_subcommand("bench", "run an experiment spec (JSON)");
    bench_cmd->add_option("--spec", bench_spec, "experiment spec file")->required();
    bench_cmd->add_option("--out", bench_out, "CSV output path (overrides the spec)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (flow_cmd->parsed()) {
            flow_options.force_power_iteration = flow_force_power;
            return run_flow(flow_graph, flow_options, flow_out);
        }
        if (code_cmd->parsed())
            return run_codelength(code_graph, code_options, code_partition, code_form, code_out);
        if (eval_cmd->parsed())
            return run_eval(eval_pred, eval_truth, eval_graph, eval_directed, eval_out);
        if (opt_cmd->parsed())
            return run_optimum(opt_graph, opt_options, opt_max_n, opt_out, opt_partition_out);
        if (cluster_cmd->parsed())
            return run_cluster(cluster_args);
        if (bench_cmd->parsed())
            return run_bench(bench_spec, bench_out);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    }
    return 0;
}
