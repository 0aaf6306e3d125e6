#pragma once

#include "mapeq/flow.hpp"

#include <cstdint>
#include <functional>
#include <limits>

namespace mapeq {

/// Hard node -> module labelling with labels dense in [0, module_count).
struct Partition {
    std::vector<int> labels;
    int module_count = 0;

    /// Densifies arbitrary labels in first-seen order (canonical form).
    static Partition from_labels(const std::vector<int>& raw) {
        Partition part;
        part.labels.reserve(raw.size());
        std::unordered_map<int, int> remap;
        for (int label : raw) {
            auto [it, inserted] = remap.emplace(label, part.module_count);
            if (inserted)
                ++part.module_count;
            part.labels.push_back(it->second);
        }
        return part;
    }

    int size() const { return static_cast<int>(labels.size()); }
};

inline Partition load_partition(const std::string& path, const Graph& graph) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open partition file '" + path + "'");
    std::vector<int> raw(graph.node_count(), 0);
    std::vector<char> seen(graph.node_count(), 0);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::is_comment_or_blank(line))
            continue;
        std::istringstream ls(line);
        std::string id, label_tok;
        if (!(ls >> id >> label_tok))
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed line '" +
                                     line + "'");
        const auto idx = graph.find_index(id);
        if (!idx)
            throw std::runtime_error(path + ": partition entry for unknown node id '" + id + "'");
        try {
            raw[*idx] = std::stoi(label_tok);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed label '" +
                                     label_tok + "'");
        }
        seen[*idx] = 1;
    }
    for (int u = 0; u < graph.node_count(); ++u) {
        if (!seen[u])
            throw std::runtime_error(path + ": no label for node '" + graph.node_id(u) + "'");
    }
    return Partition::from_labels(raw);
}

inline void write_partition(const Partition& part, const Graph& graph, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write partition file '" + path + "'");
    for (int u = 0; u < graph.node_count(); ++u)
        out << graph.node_id(u) << ' ' << part.labels[u] << '\n';
}

/// Codelength in bits with its index/module split and the per-module
/// rates behind it.
struct Codelength {
    double total_bits = 0.0;
    double index_bits = 0.0;
    double module_bits = 0.0;
    double q = 0.0;       // total module switch rate
    Vector q_m;           // per-module entry rates
    Vector m_exit;        // per-module exit rates
    Vector p_m;           // per-module usage rates (exit + node visits)
};

namespace detail {

inline double xlog2(double x) {
    return x > 0.0 ? x * std::log2(x) : 0.0;
}

inline double xlog2_eps(double x, double eps) {
    return x != 0.0 ? x * std::log2(x + eps) : 0.0;
}

struct ModuleRates {
    double q = 0.0;
    Vector q_m;
    Vector m_exit;
    Vector p_node;  // per-module sum of node visit rates
};

inline ModuleRates module_rates(const FlowModel& flow, const Partition& part) {
    const int k = part.module_count;
    ModuleRates rates;
    rates.q_m = Vector::Zero(k);
    rates.m_exit = Vector::Zero(k);
    rates.p_node = Vector::Zero(k);
    for (int row = 0; row < flow.flow.outerSize(); ++row) {
        for (SparseMatrix::InnerIterator it(flow.flow, row); it; ++it) {
            const int mu = part.labels[it.row()];
            const int mv = part.labels[it.col()];
            if (mu != mv) {
                rates.m_exit[mu] += it.value();
                rates.q_m[mv] += it.value();
            }
        }
    }
    rates.q = rates.q_m.sum();
    for (int u = 0; u < part.size(); ++u)
        rates.p_node[part.labels[u]] += flow.p[u];
    return rates;
}

} // namespace detail

/// Two-level map equation in its entropy form: L = q H(Q) + sum_m p_m H(P_m),
/// with module entry and exit rates read off the flow matrix and 0 log 0 = 0
/// handled exactly.
inline Codelength codelength_entropy_form(const FlowModel& flow, const Partition& part) {
    if (part.size() != flow.node_count())
        throw std::invalid_argument("partition size does not match flow model");
    const detail::ModuleRates rates = detail::module_rates(flow, part);
    const int k = part.module_count;

    Codelength result;
    result.q = rates.q;
    result.q_m = rates.q_m;
    result.m_exit = rates.m_exit;
    result.p_m = rates.m_exit + rates.p_node;

    double index_entropy = 0.0;
    if (rates.q > 0.0) {
        for (int m = 0; m < k; ++m)
            index_entropy -= detail::xlog2(rates.q_m[m] / rates.q);
    }
    result.index_bits = rates.q * index_entropy;

    for (int m = 0; m < k; ++m) {
        const double pm = result.p_m[m];
        if (pm <= 0.0)
            continue;
        double module_entropy = -detail::xlog2(rates.m_exit[m] / pm);
        for (int u = 0; u < part.size(); ++u) {
            if (part.labels[u] == m)
                module_entropy -= detail::xlog2(flow.p[u] / pm);
        }
        result.module_bits += pm * module_entropy;
    }
    result.total_bits = result.index_bits + result.module_bits;
    return result;
}

/// Same codelength via the five-term expansion
///   L = q log q - sum q_m log q_m - sum exit log exit
///       - sum_u p_u log p_u + sum p_m log p_m,
/// collapsing the two middle sums to -2 sum q_m log q_m when entry and exit
/// rates coincide (undirected flow).
inline Codelength codelength_expanded_form(const FlowModel& flow, const Partition& part) {
    if (part.size() != flow.node_count())
        throw std::invalid_argument("partition size does not match flow model");
    const detail::ModuleRates rates = detail::module_rates(flow, part);
    const int k = part.module_count;

    Codelength result;
    result.q = rates.q;
    result.q_m = rates.q_m;
    result.m_exit = rates.m_exit;
    result.p_m = rates.m_exit + rates.p_node;

    double entry_exit_terms = 0.0;
    const bool balanced =
        k > 0 && (rates.q_m - rates.m_exit).cwiseAbs().maxCoeff() <= 1e-13 * std::max(1.0, rates.q);
    if (balanced) {
        for (int m = 0; m < k; ++m)
            entry_exit_terms -= 2.0 * detail::xlog2(rates.q_m[m]);
    } else {
        for (int m = 0; m < k; ++m)
            entry_exit_terms -= detail::xlog2(rates.q_m[m]) + detail::xlog2(rates.m_exit[m]);
    }
    result.index_bits = detail::xlog2(rates.q);
    for (int m = 0; m < k; ++m)
        result.index_bits -= detail::xlog2(rates.q_m[m]);

    double node_term = 0.0;
    for (int u = 0; u < part.size(); ++u)
        node_term -= detail::xlog2(flow.p[u]);
    double usage_term = 0.0;
    for (int m = 0; m < k; ++m)
        usage_term += detail::xlog2(result.p_m[m]);

    result.total_bits = detail::xlog2(rates.q) + entry_exit_terms + node_term + usage_term;
    result.module_bits = result.total_bits - result.index_bits;
    return result;
}

inline constexpr double kSoftLogEps = 1e-8;

/// Differentiable-form codelength evaluated on a soft assignment matrix S
/// (row-stochastic, n x s). Pools the flow to C = S^T F S and assembles the
/// expanded map equation with eps added inside every logarithm. The node
/// visit term is constant in S but included in the reported totals.
inline Codelength soft_codelength(const SparseMatrix& flow, const Vector& p, const Matrix& soft,
                                  double eps = kSoftLogEps) {
    const auto n = soft.rows();
    const auto s = soft.cols();
    if (flow.rows() != n || p.size() != n)
        throw std::invalid_argument("assignment matrix does not match flow dimensions");
    for (Eigen::Index u = 0; u < n; ++u) {
        if (std::abs(soft.row(u).sum() - 1.0) > 1e-9)
            throw std::invalid_argument("assignment row " + std::to_string(u) +
                                        " is not stochastic");
        if (soft.row(u).minCoeff() < -1e-12 || soft.row(u).maxCoeff() > 1.0 + 1e-12)
            throw std::invalid_argument("assignment row " + std::to_string(u) +
                                        " has entries outside [0, 1]");
    }

    const Matrix pooled = soft.transpose() * (flow * soft);  // C, s x s
    const Vector diag = pooled.diagonal();
    const Vector row_sum = pooled.rowwise().sum();
    const Vector col_sum = pooled.colwise().sum().transpose();

    // With flow oriented row -> column, row sums of C minus the diagonal are
    // the modules' outgoing (exit) flow and column sums minus the diagonal
    // the incoming (entry) flow; the total is symmetric in the two.
    Codelength result;
    result.q = 1.0 - diag.sum();
    result.q_m = row_sum - diag;
    result.m_exit = col_sum - diag;
    result.p_m = result.q_m + col_sum;

    const Vector& exit_rates = result.q_m;
    const Vector& entry_rates = result.m_exit;
    result.index_bits = detail::xlog2_eps(result.q, eps);
    for (Eigen::Index m = 0; m < s; ++m)
        result.index_bits -= detail::xlog2_eps(entry_rates[m], eps);

    result.module_bits = 0.0;
    for (Eigen::Index m = 0; m < s; ++m)
        result.module_bits -= detail::xlog2_eps(exit_rates[m], eps);
    for (Eigen::Index u = 0; u < n; ++u)
        result.module_bits -= detail::xlog2_eps(p[u], eps);
    for (Eigen::Index m = 0; m < s; ++m)
        result.module_bits += detail::xlog2_eps(result.p_m[m], eps);

    result.total_bits = result.index_bits + result.module_bits;
    return result;
}

/// Accounting choices for the node visit term under soft assignments.
/// split: partially assigned nodes are divided into smaller pieces, each
/// encoded with its own (longer) codeword. indivisible: nodes keep their
/// full visit rate inside every module they touch.
enum class NodeFlowMode { split, indivisible };

/// Node contribution to the codelength for a soft assignment, in bits.
/// Diagnostic companion to soft_codelength; not part of the training loss.
inline double soft_node_term(const Vector& p, const Matrix& soft, const Vector& p_m,
                             NodeFlowMode mode) {
    double bits = 0.0;
    for (Eigen::Index u = 0; u < soft.rows(); ++u) {
        for (Eigen::Index m = 0; m < soft.cols(); ++m) {
            const double share = soft(u, m);
            if (share <= 0.0 || p[u] <= 0.0 || p_m[m] <= 0.0)
                continue;
            const double numerator = mode == NodeFlowMode::split ? share * p[u] : p[u];
            bits -= share * p[u] * std::log2(numerator / p_m[m]);
        }
    }
    return bits;
}

/// Full two-level codelength for a soft assignment under the chosen node-flow
/// accounting, using exact 0 log 0 = 0 (no eps). The index level prices the
/// entry rates; each module's entropy prices its exit rate next to its node
/// visits. In indivisible mode this equals the expanded soft form up to the
/// eps smoothing.
inline double soft_codelength_with_node_mode(const SparseMatrix& flow, const Vector& p,
                                             const Matrix& soft, NodeFlowMode mode) {
    const Matrix pooled = soft.transpose() * (flow * soft);
    const Vector diag = pooled.diagonal();
    const Vector exit_rates = pooled.rowwise().sum() - diag;
    const Vector entry_rates = Vector(pooled.colwise().sum().transpose()) - diag;
    const Vector p_m = exit_rates + Vector(pooled.colwise().sum().transpose());
    const double q = 1.0 - diag.sum();

    double bits = detail::xlog2(q);
    for (Eigen::Index m = 0; m < pooled.rows(); ++m) {
        bits -= detail::xlog2(entry_rates[m]);
        bits -= detail::xlog2(exit_rates[m]);
        if (p_m[m] > 0.0)
            bits += exit_rates[m] * std::log2(p_m[m]);
    }
    return bits + soft_node_term(p, soft, p_m, mode);
}

struct BruteForceResult {
    Partition partition;
    Codelength codelength;
};

/// Exhaustive minimum-codelength search over all set partitions, enumerated
/// as restricted growth strings. Ties break towards fewer modules, then
/// lexicographically smaller labels.
inline BruteForceResult brute_force_optimum(const FlowModel& flow, int max_n = 10) {
    const int n = flow.node_count();
    if (n > max_n)
        throw std::invalid_argument("brute force limited to " + std::to_string(max_n) +
                                    " nodes, got " + std::to_string(n));
    if (n == 0)
        throw std::invalid_argument("empty flow model");

    std::vector<int> labels(n, 0);
    std::vector<int> prefix_max(n, 0);
    BruteForceResult best;
    best.codelength.total_bits = std::numeric_limits<double>::infinity();
    constexpr double kTie = 1e-12;

    const std::function<void(int)> enumerate = [&](int pos) {
        if (pos == n) {
            Partition candidate;
            candidate.labels = labels;
            candidate.module_count = prefix_max[n - 1] + 1;
            const Codelength bits = codelength_expanded_form(flow, candidate);
            const double delta = bits.total_bits - best.codelength.total_bits;
            bool take = delta < -kTie;
            if (!take && delta <= kTie) {
                take = candidate.module_count < best.partition.module_count ||
                       (candidate.module_count == best.partition.module_count &&
                        candidate.labels < best.partition.labels);
            }
            if (take)
                best = {std::move(candidate), bits};
            return;
        }
        const int limit = prefix_max[pos - 1] + 1;
        for (int label = 0; label <= limit; ++label) {
            labels[pos] = label;
            prefix_max[pos] = std::max(prefix_max[pos - 1], label);
            enumerate(pos + 1);
        }
    };
    if (n == 1) {
        Partition single;
        single.labels = {0};
        single.module_count = 1;
        return {single, codelength_expanded_form(flow, single)};
    }
    enumerate(1);
    return best;
}

} // namespace mapeq
