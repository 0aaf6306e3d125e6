// Acceptance suite: one binary, one pass/fail line per criterion.
#include "mapeq/mapeq.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>

#ifndef MAPEQ_CLI_PATH
#define MAPEQ_CLI_PATH ""
#endif

namespace {

using Clock = std::chrono::steady_clock;

struct Criterion {
    int id;
    std::string description;
    bool passed;
    double seconds;
    std::string detail;
};

std::vector<Criterion> results;

template <typename Check>
void run_criterion(int id, const std::string& description, double time_limit_s, Check&& check) {
    const auto start = Clock::now();
    std::string detail;
    bool ok = false;
    try {
        ok = check(detail);
    } catch (const std::exception& err) {
        detail = std::string("exception: ") + err.what();
    }
    const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    if (ok && time_limit_s > 0.0 && elapsed > time_limit_s) {
        ok = false;
        detail += (detail.empty() ? "" : "; ") + std::string("runtime ") +
                  std::to_string(elapsed) + "s exceeds " + std::to_string(time_limit_s) + "s";
    }
    results.push_back({id, description, ok, elapsed, detail});
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << id << ": " << description << " ("
              << std::fixed << std::setprecision(2) << elapsed << "s)";
    if (!detail.empty())
        std::cout << " -- " << detail;
    std::cout << std::endl;
}

double exact_five_term(const mapeq::Codelength& bits, const mapeq::Vector& p) {
    auto xlog = [](double x) { return x > 0.0 ? x * std::log2(x) : 0.0; };
    double total = xlog(bits.q);
    for (Eigen::Index m = 0; m < bits.q_m.size(); ++m) {
        total -= xlog(bits.q_m[m]);
        total -= xlog(bits.m_exit[m]);
        total += xlog(bits.p_m[m]);
    }
    for (Eigen::Index u = 0; u < p.size(); ++u)
        total -= xlog(p[u]);
    return total;
}

mapeq::Matrix one_hot(const mapeq::Partition& part, int columns) {
    mapeq::Matrix s = mapeq::Matrix::Zero(part.size(), columns);
    for (int u = 0; u < part.size(); ++u)
        s(u, part.labels[u]) = 1.0;
    return s;
}

// ---- criterion 1 ----
bool evaluator_equivalence(std::string& detail) {
    std::mt19937_64 rng(20240901);
    double worst = 0.0, worst_fast = 0.0;
    for (int round = 0; round < 200; ++round) {
        const bool directed = round % 2 == 0;
        const mapeq::Graph g = oracles::random_graph(rng, 2, 30, directed);
        const mapeq::FlowModel flow = mapeq::make_flow_model(g);
        const mapeq::Partition part =
            mapeq::Partition::from_labels(oracles::random_labels(rng, g.node_count(), 6));
        const mapeq::Codelength entropy = mapeq::codelength_entropy_form(flow, part);
        const mapeq::Codelength expanded = mapeq::codelength_expanded_form(flow, part);
        worst = std::max(worst, std::abs(entropy.total_bits - expanded.total_bits));
        if (!directed) {
            // the undirected shortcut must match the general five-term form
            const double general = exact_five_term(expanded, flow.p);
            worst_fast = std::max(worst_fast, std::abs(general - expanded.total_bits));
        }
    }
    detail = "max |entropy - expanded| = " + std::to_string(worst) +
             ", max fast-path gap = " + std::to_string(worst_fast);
    return worst < 1e-10 && worst_fast < 1e-10;
}

// ---- criterion 2 ----
bool soft_hard_consistency(std::string& detail) {
    std::mt19937_64 rng(20240902);
    double worst = 0.0;
    for (int round = 0; round < 50; ++round) {
        const mapeq::Graph g = oracles::random_graph(rng, 3, 20, round % 2 == 0);
        const mapeq::FlowModel flow = mapeq::make_flow_model(g);
        const mapeq::Partition part =
            mapeq::Partition::from_labels(oracles::random_labels(rng, g.node_count(), 5));
        const mapeq::Matrix s = one_hot(part, part.module_count);
        const double soft = mapeq::soft_codelength(flow.flow, flow.p, s).total_bits;
        const double hard = mapeq::codelength_expanded_form(flow, part).total_bits;
        worst = std::max(worst, std::abs(soft - hard));
    }
    detail = "max |soft - hard| = " + std::to_string(worst);
    return worst < 1e-6;
}

// ---- criterion 3 ----
bool gradient_correctness(std::string& detail) {
    std::mt19937_64 graph_rng(20240903);
    const mapeq::Graph g = oracles::random_graph(graph_rng, 10, 10, false);
    const mapeq::FlowModel flow = mapeq::make_flow_model(g);
    const mapeq::Matrix x = mapeq::identity_features(g);

    double worst = 0.0;
    for (mapeq::Arch arch : {mapeq::Arch::linear, mapeq::Arch::mlp, mapeq::Arch::gcn,
                             mapeq::Arch::gin, mapeq::Arch::sage}) {
        mapeq::EncoderConfig config;
        config.arch = arch;
        config.max_clusters = 3;
        config.hidden_dim = 8;
        config.dropout_p = 0.0;  // deterministic forward for finite differences
        const mapeq::SparseMatrix op = mapeq::normalize_adjacency(g, arch);

        int accepted = 0;
        std::uint64_t seed = 1;
        while (accepted < 20) {
            const mapeq::EncoderParams params = mapeq::init_params(config, 10, 10, seed++);

            // keep log arguments away from the smoothing boundary
            {
                mapeq::Tape probe;
                const mapeq::EncoderTrace trace =
                    mapeq::encoder_forward(probe, params, op, x, 0.0, false, nullptr);
                const mapeq::Codelength bits = mapeq::soft_codelength(
                    flow.flow, flow.p, probe.value(trace.assignments));
                double smallest = std::abs(bits.q);
                for (Eigen::Index m = 0; m < bits.q_m.size(); ++m)
                    smallest = std::min({smallest, std::abs(bits.q_m[m]),
                                         std::abs(bits.m_exit[m]), std::abs(bits.p_m[m])});
                if (smallest <= 1e-3)
                    continue;
            }
            ++accepted;

            mapeq::Tape tape;
            const mapeq::EncoderTrace trace =
                mapeq::encoder_forward(tape, params, op, x, 0.0, false, nullptr);
            const mapeq::Var loss =
                mapeq::soft_codelength_loss(tape, flow.flow, flow.p, trace.assignments);
            tape.backward(loss);

            // dL/dlogits via the softmax head alone
            const mapeq::Matrix logits0 = tape.value(trace.logits);
            const double log_temp = params.find("log_temperature")(0, 0);
            auto head_loss = [&](const mapeq::Matrix& logits) {
                mapeq::Tape t;
                mapeq::Var leaf = t.leaf(logits);
                mapeq::Matrix lt(1, 1);
                lt(0, 0) = log_temp;
                mapeq::Var soft = t.row_softmax_with_temperature(leaf, t.leaf(lt));
                return t.scalar(mapeq::soft_codelength_loss(t, flow.flow, flow.p, soft));
            };
            mapeq::FiniteDifferenceOptions fd;
            fd.sample_coordinates = 15;
            fd.seed = seed * 31;
            worst = std::max(worst, mapeq::finite_difference_check(
                                        head_loss, logits0, tape.grad(trace.logits), 1e-6, fd));

            // dL/dtheta through the full encoder
            for (std::size_t tensor = 0; tensor < params.tensors.size(); ++tensor) {
                auto theta_loss = [&](const mapeq::Matrix& probe) {
                    mapeq::EncoderParams perturbed = params;
                    perturbed.tensors[tensor].second = probe;
                    mapeq::Tape t;
                    const mapeq::EncoderTrace tr =
                        mapeq::encoder_forward(t, perturbed, op, x, 0.0, false, nullptr);
                    return t.scalar(
                        mapeq::soft_codelength_loss(t, flow.flow, flow.p, tr.assignments));
                };
                mapeq::FiniteDifferenceOptions fd_theta;
                fd_theta.sample_coordinates = 5;
                fd_theta.seed = seed * 131 + tensor;
                worst = std::max(
                    worst, mapeq::finite_difference_check(
                               theta_loss, params.tensors[tensor].second,
                               tape.grad(trace.parameters[tensor]), 1e-6, fd_theta));
            }
        }
    }
    detail = "max relative error = " + std::to_string(worst);
    return worst < 1e-4;
}

// ---- criterion 4 ----
bool oracle_optimality(std::string& detail) {
    // small-graph corpus: trained codelength may never beat the exact optimum
    struct Entry {
        const char* name;
        mapeq::Graph graph;
    };
    std::vector<Entry> corpus;
    corpus.push_back({"barbell", oracles::barbell()});
    corpus.push_back({"k4", oracles::complete_graph(4)});
    corpus.push_back({"k2", oracles::complete_graph(2)});
    corpus.push_back({"path4", oracles::path_graph(4)});
    corpus.push_back({"cycle5", oracles::cycle_graph(5)});
    corpus.push_back({"star4", oracles::star_graph(4)});
    corpus.push_back({"directed_cycle3", oracles::cycle_graph(3, true)});
    // dangling sink with positive visit rates everywhere
    corpus.push_back({"dangling_sink", mapeq::Graph::from_index_edges(
                                           {{0, 1, 1.0}, {1, 0, 1.0}, {0, 2, 1.0}, {1, 2, 1.0}},
                                           true)});
    corpus.push_back({"ring5_chord", oracles::ring5_with_chord()});

    for (const Entry& entry : corpus) {
        const mapeq::FlowModel flow = mapeq::make_flow_model(entry.graph);
        const mapeq::BruteForceResult best = mapeq::brute_force_optimum(flow);
        for (mapeq::Arch arch : {mapeq::Arch::linear, mapeq::Arch::mlp}) {
            mapeq::EncoderConfig encoder;
            encoder.arch = arch;
            encoder.max_clusters = std::min(6, entry.graph.node_count());
            encoder.hidden_dim = 8;
            mapeq::TrainConfig config;
            config.trials = 3;
            config.seed = 17;
            config.max_epochs = 1200;
            std::vector<mapeq::TrainedResult> trials;
            mapeq::train_best_of(entry.graph, mapeq::identity_features(entry.graph), encoder,
                                 config, {}, &trials);
            for (const mapeq::TrainedResult& trial : trials) {
                if (trial.best_loss_bits < best.codelength.total_bits - 1e-6) {
                    detail = std::string(entry.name) + ": trained " +
                             std::to_string(trial.best_loss_bits) + " beats oracle " +
                             std::to_string(best.codelength.total_bits);
                    return false;
                }
            }
        }
    }

    // barbell recovery: best-of-10-seeds equals the oracle optimum
    const mapeq::Graph barbell = oracles::barbell();
    const mapeq::FlowModel flow = mapeq::make_flow_model(barbell);
    const mapeq::Partition oracle_split = mapeq::brute_force_optimum(flow).partition;
    mapeq::EncoderConfig encoder;
    encoder.arch = mapeq::Arch::linear;
    encoder.max_clusters = 6;
    mapeq::TrainConfig config;
    config.trials = 10;
    config.seed = 1;
    std::vector<mapeq::TrainedResult> trials;
    mapeq::train_best_of(barbell, mapeq::identity_features(barbell), encoder, config, {},
                         &trials);
    int recovered = 0;
    for (const mapeq::TrainedResult& trial : trials) {
        const mapeq::Partition found = mapeq::hard_partition(trial.best_assignments);
        if (mapeq::ami(found, oracle_split) == 1.0)
            ++recovered;
    }
    detail = "barbell oracle split recovered in " + std::to_string(recovered) + "/10 seeds";
    return recovered >= 8;
}

// ---- criterion 5 ----
bool mdl_model_selection(std::string& detail) {
    const mapeq::PlantedGraph planted = mapeq::generate_planted(4, 25, 0.3, 0.01, 8);
    mapeq::EncoderConfig encoder;
    encoder.arch = mapeq::Arch::mlp;
    encoder.max_clusters = 100;  // s = n: the loss must prune on its own
    mapeq::TrainConfig config;
    config.trials = 10;
    config.seed = 1;
    std::vector<mapeq::TrainedResult> trials;
    mapeq::train_best_of(planted.graph, mapeq::identity_features(planted.graph), encoder, config,
                         {}, &trials);
    int exact = 0;
    for (const mapeq::TrainedResult& trial : trials) {
        if (mapeq::count_modules(mapeq::hard_partition(trial.best_assignments)) == 4)
            ++exact;
    }

    const mapeq::Graph k4 = oracles::complete_graph(4);
    mapeq::EncoderConfig k4_encoder;
    k4_encoder.arch = mapeq::Arch::mlp;
    k4_encoder.max_clusters = 4;
    k4_encoder.hidden_dim = 8;
    mapeq::TrainConfig k4_config;
    k4_config.trials = 10;
    k4_config.seed = 1;
    std::vector<mapeq::TrainedResult> k4_trials;
    mapeq::train_best_of(k4, mapeq::identity_features(k4), k4_encoder, k4_config, {}, &k4_trials);
    int merged = 0;
    for (const mapeq::TrainedResult& trial : k4_trials) {
        if (mapeq::count_modules(mapeq::hard_partition(trial.best_assignments)) == 1)
            ++merged;
    }
    detail = "4 blocks found in " + std::to_string(exact) + "/10 seeds; K4 merged in " +
             std::to_string(merged) + "/10";
    return exact >= 7 && merged == 10;
}

// ---- criterion 6 ----
bool recovery_quality(std::string& detail) {
    const mapeq::PlantedGraph planted = mapeq::generate_planted(2, 30, 0.3, 0.01, 12);
    const mapeq::Matrix x = mapeq::identity_features(planted.graph);
    int good_architectures = 0;
    std::string per_arch;
    for (mapeq::Arch arch :
         {mapeq::Arch::linear, mapeq::Arch::mlp, mapeq::Arch::gcn, mapeq::Arch::sage}) {
        mapeq::EncoderConfig encoder;
        encoder.arch = arch;
        mapeq::TrainConfig config;
        config.trials = 10;
        config.seed = 3;
        std::vector<mapeq::TrainedResult> trials;
        mapeq::train_best_of(planted.graph, x, encoder, config, {}, &trials);
        double mean_ami = 0.0;
        for (const mapeq::TrainedResult& trial : trials)
            mean_ami += mapeq::ami(mapeq::hard_partition(trial.best_assignments), planted.truth);
        mean_ami /= static_cast<double>(trials.size());
        per_arch += std::string(mapeq::arch_name(arch)) + "=" +
                    std::to_string(mean_ami).substr(0, 5) + " ";
        if (mean_ami >= 0.90)
            ++good_architectures;
    }
    detail = "mean AMI per arch: " + per_arch;
    return good_architectures >= 2;
}

// ---- criterion 7 ----
bool ami_correctness(std::string& detail) {
    std::mt19937_64 rng(20240907);
    double worst = 0.0;
    for (int round = 0; round < 50; ++round) {
        const int n = 10 + static_cast<int>(rng() % 191);
        const std::vector<int> u = oracles::random_labels(rng, n, 7);
        const std::vector<int> v = oracles::random_labels(rng, n, 7);
        const double fast =
            mapeq::ami(mapeq::Partition::from_labels(u), mapeq::Partition::from_labels(v));
        const double slow = oracles::slow_ami(u, v);
        worst = std::max(worst, std::abs(fast - slow));
    }
    const mapeq::Partition a = mapeq::Partition::from_labels({0, 1, 1, 2, 0, 3, 3});
    const mapeq::Partition b = mapeq::Partition::from_labels({7, 5, 5, 1, 7, 0, 0});
    const bool exact_one = mapeq::ami(a, a) == 1.0 && mapeq::ami(a, b) == 1.0;
    detail = "max |ami - oracle| = " + std::to_string(worst) +
             (exact_one ? "; identical pairs give exactly 1" : "; exact-1 check failed");
    return worst < 1e-9 && exact_one;
}

// ---- criterion 8 ----
bool node_flow_discrimination(std::string& detail) {
    const mapeq::Graph g = oracles::overlap7();
    const mapeq::FlowModel flow = mapeq::make_flow_model(g);
    double one_level = 0.0;
    for (int u = 0; u < g.node_count(); ++u)
        one_level -= flow.p[u] * std::log2(flow.p[u]);

    mapeq::Matrix s = mapeq::Matrix::Zero(7, 2);
    for (int u : {0, 1, 2})
        s(u, 0) = 1.0;
    for (int u : {4, 5, 6})
        s(u, 1) = 1.0;
    s(3, 0) = 0.5;
    s(3, 1) = 0.5;

    const double indivisible = mapeq::soft_codelength_with_node_mode(
        flow.flow, flow.p, s, mapeq::NodeFlowMode::indivisible);
    const double split =
        mapeq::soft_codelength_with_node_mode(flow.flow, flow.p, s, mapeq::NodeFlowMode::split);

    const bool frozen_match = std::abs(one_level - oracles::kOverlap7OneLevelBits) < 1e-9 &&
                              std::abs(indivisible - oracles::kOverlap7IndivisibleBits) < 1e-9 &&
                              std::abs(split - oracles::kOverlap7SplitBits) < 1e-9;
    detail = "one-level " + std::to_string(one_level) + ", indivisible " +
             std::to_string(indivisible) + ", split " + std::to_string(split);
    return frozen_match && indivisible < one_level && split >= one_level;
}

// ---- criterion 9 ----
bool cli_determinism(std::string& detail) {
    const std::string cli = MAPEQ_CLI_PATH;
    if (cli.empty()) {
        detail = "CLI path not configured";
        return false;
    }
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / ("mapeq_acc_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const std::string graph_path = (dir / "graph.txt").string();
    const mapeq::PlantedGraph planted = mapeq::generate_planted(2, 10, 0.7, 0.05, 21);
    mapeq::write_edge_list(planted.graph, graph_path);

    const std::string out_a = (dir / "a.json").string();
    const std::string out_b = (dir / "b.json").string();
    const std::string base = cli + " cluster --graph " + graph_path +
                             " --directed --arch mlp --s 5 --trials 2 --seed 11 --epochs 400"
                             " --emit-soft --out ";
    const int rc_a = std::system((base + out_a + " 2>/dev/null").c_str());
    const int rc_b = std::system((base + out_b + " 2>/dev/null").c_str());
    if (rc_a != 0 || rc_b != 0) {
        detail = "cluster invocation failed";
        fs::remove_all(dir);
        return false;
    }
    std::ifstream a(out_a), b(out_b);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    const bool identical = sa.str() == sb.str() && !sa.str().empty();
    detail = identical ? "byte-identical JSON across two runs" : "outputs differ";
    fs::remove_all(dir);
    return identical;
}

} // namespace

int main(int argc, char** argv) {
    int only = 0;
    if (argc > 1)
        only = std::atoi(argv[1]);
    auto wanted = [&](int id) { return only == 0 || only == id; };

    if (wanted(1))
        run_criterion(1, "hard evaluator equivalence on 200 random graphs", 10.0,
                      evaluator_equivalence);
    if (wanted(2))
        run_criterion(2, "soft/hard consistency for one-hot assignments", 5.0,
                      soft_hard_consistency);
    if (wanted(3))
        run_criterion(3, "end-to-end gradients match finite differences", 30.0,
                      gradient_correctness);
    if (wanted(4))
        run_criterion(4, "training never beats the exhaustive oracle; barbell recovery", 120.0,
                      oracle_optimality);
    if (wanted(5))
        run_criterion(5, "MDL selects the module count on planted blocks and K4", 300.0,
                      mdl_model_selection);
    if (wanted(6))
        run_criterion(6, "two-block recovery reaches mean AMI >= 0.90", 300.0, recovery_quality);
    if (wanted(7))
        run_criterion(7, "AMI agrees with the exact-rational oracle", 60.0, ami_correctness);
    if (wanted(8))
        run_criterion(8, "node-flow accounting separates the overlapping example", 10.0,
                      node_flow_discrimination);
    if (wanted(9))
        run_criterion(9, "clustering CLI output is bit-deterministic", 120.0, cli_determinism);

    int failed = 0;
    for (const Criterion& criterion : results)
        failed += criterion.passed ? 0 : 1;
    std::cout << results.size() - failed << "/" << results.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
