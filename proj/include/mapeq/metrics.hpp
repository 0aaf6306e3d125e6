#pragma once

#include "mapeq/codelength.hpp"

namespace mapeq {

/// Joint label counts for two partitions of the same node set.
struct ContingencyTable {
    std::vector<std::vector<long>> counts;  // k x l
    std::vector<long> row_marginals;
    std::vector<long> col_marginals;
    long n = 0;

    static ContingencyTable from_partitions(const Partition& a, const Partition& b) {
        if (a.size() != b.size())
            throw std::invalid_argument("partitions label different node counts");
        ContingencyTable table;
        table.n = a.size();
        table.counts.assign(a.module_count, std::vector<long>(b.module_count, 0));
        table.row_marginals.assign(a.module_count, 0);
        table.col_marginals.assign(b.module_count, 0);
        for (int u = 0; u < a.size(); ++u) {
            ++table.counts[a.labels[u]][b.labels[u]];
            ++table.row_marginals[a.labels[u]];
            ++table.col_marginals[b.labels[u]];
        }
        return table;
    }

    /// True when the two labellings are identical up to renaming modules.
    bool is_permutation() const {
        if (row_marginals.size() != col_marginals.size())
            return false;
        for (const auto& row : counts) {
            int nonzero = 0;
            for (long c : row)
                nonzero += c != 0;
            if (nonzero != 1)
                return false;
        }
        return true;
    }
};

namespace detail {

inline double entropy_nats(const std::vector<long>& marginals, long n) {
    double h = 0.0;
    for (long a : marginals) {
        if (a > 0) {
            const double ratio = static_cast<double>(a) / static_cast<double>(n);
            h -= ratio * std::log(ratio);
        }
    }
    return h;
}

inline double mutual_information_nats(const ContingencyTable& table) {
    double mi = 0.0;
    const double n = static_cast<double>(table.n);
    for (std::size_t i = 0; i < table.counts.size(); ++i) {
        for (std::size_t j = 0; j < table.counts[i].size(); ++j) {
            const long nij = table.counts[i][j];
            if (nij <= 0)
                continue;
            const double joint = static_cast<double>(nij) / n;
            mi += joint * std::log((n * static_cast<double>(nij)) /
                                   (static_cast<double>(table.row_marginals[i]) *
                                    static_cast<double>(table.col_marginals[j])));
        }
    }
    return mi;
}

/// Expected mutual information under the hypergeometric permutation model,
/// with the hypergeometric weights computed in log space from exact integer
/// marginals.
inline double expected_mutual_information_nats(const ContingencyTable& table) {
    const long n = table.n;
    const double log_n = std::lgamma(static_cast<double>(n) + 1.0);
    double emi = 0.0;
    for (long a : table.row_marginals) {
        for (long b : table.col_marginals) {
            const long lower = std::max(1L, a + b - n);
            const long upper = std::min(a, b);
            for (long nij = lower; nij <= upper; ++nij) {
                const double log_weight =
                    std::lgamma(static_cast<double>(a) + 1.0) +
                    std::lgamma(static_cast<double>(b) + 1.0) +
                    std::lgamma(static_cast<double>(n - a) + 1.0) +
                    std::lgamma(static_cast<double>(n - b) + 1.0) - log_n -
                    std::lgamma(static_cast<double>(nij) + 1.0) -
                    std::lgamma(static_cast<double>(a - nij) + 1.0) -
                    std::lgamma(static_cast<double>(b - nij) + 1.0) -
                    std::lgamma(static_cast<double>(n - a - b + nij) + 1.0);
                const double term = (static_cast<double>(nij) / static_cast<double>(n)) *
                                    std::log((static_cast<double>(n) * static_cast<double>(nij)) /
                                             (static_cast<double>(a) * static_cast<double>(b)));
                emi += std::exp(log_weight) * term;
            }
        }
    }
    return emi;
}

} // namespace detail

struct AmiOptions {
    enum class Normalizer { arithmetic, max };
    Normalizer normalizer = Normalizer::arithmetic;
};

/// Adjusted mutual information: (MI - E[MI]) / (norm - E[MI]) with the
/// chance correction from the hypergeometric permutation model. Identical
/// partitions (up to relabelling) score exactly 1.
inline double ami(const Partition& pred, const Partition& truth, const AmiOptions& options = {}) {
    const ContingencyTable table = ContingencyTable::from_partitions(pred, truth);
    if (table.is_permutation())
        return 1.0;
    const double mi = detail::mutual_information_nats(table);
    const double emi = detail::expected_mutual_information_nats(table);
    const double h_pred = detail::entropy_nats(table.row_marginals, table.n);
    const double h_truth = detail::entropy_nats(table.col_marginals, table.n);
    const double normalizer = options.normalizer == AmiOptions::Normalizer::arithmetic
                                  ? 0.5 * (h_pred + h_truth)
                                  : std::max(h_pred, h_truth);
    const double denominator = normalizer - emi;
    if (denominator == 0.0)
        return 0.0;
    return (mi - emi) / denominator;
}

inline int count_modules(const Partition& part) { return part.module_count; }

/// Number of clusters that are some node's strongest membership.
inline int count_modules_soft(const Matrix& assignments) {
    std::vector<char> used(assignments.cols(), 0);
    for (Eigen::Index r = 0; r < assignments.rows(); ++r) {
        int best = 0;
        for (Eigen::Index c = 1; c < assignments.cols(); ++c) {
            if (assignments(r, c) > assignments(r, best))
                best = static_cast<int>(c);
        }
        used[best] = 1;
    }
    int count = 0;
    for (char u : used)
        count += u;
    return count;
}

/// Number of clusters whose strongest membership reaches the threshold.
inline int count_modules_soft(const Matrix& assignments, double threshold) {
    int count = 0;
    for (Eigen::Index c = 0; c < assignments.cols(); ++c) {
        if (assignments.col(c).maxCoeff() >= threshold)
            ++count;
    }
    return count;
}

/// Mixing parameter: fraction of arc weight running between modules.
inline double mixing(const Graph& graph, const Partition& part) {
    if (part.size() != graph.node_count())
        throw std::invalid_argument("partition size does not match graph");
    double between = 0.0;
    for (const Arc& a : graph.arcs()) {
        if (part.labels[a.src] != part.labels[a.dst])
            between += a.weight;
    }
    return between / graph.total_weight();
}

} // namespace mapeq
