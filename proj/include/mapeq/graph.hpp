#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace mapeq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// One directed arc between dense node indices. Undirected edges are stored
/// as two arcs of equal weight (self-loops as a single arc).
struct Arc {
    int src = 0;
    int dst = 0;
    double weight = 0.0;
};

/// Weighted multigraph with dense node indices. Parallel arcs are merged
/// additively on construction; zero-weight arcs are dropped. Immutable after
/// construction and safe to share across threads.
class Graph {
public:
    Graph() = default;

    /// Builds a graph from (external id, external id, weight) triples.
    /// Dense indices are assigned in first-seen order.
    static Graph from_edges(const std::vector<std::tuple<std::string, std::string, double>>& edges,
                            bool directed) {
        Graph g;
        g.directed_ = directed;
        std::map<std::pair<int, int>, double> merged;
        for (const auto& [src_id, dst_id, w] : edges) {
            if (w < 0.0)
                throw std::invalid_argument("negative edge weight on " + src_id + " -> " + dst_id);
            const int u = g.intern(src_id);
            const int v = g.intern(dst_id);
            if (w == 0.0)
                continue;
            merged[{u, v}] += w;
            if (!directed && u != v)
                merged[{v, u}] += w;
        }
        if (merged.empty())
            throw std::invalid_argument("empty graph: no positive-weight edges");
        g.arcs_.reserve(merged.size());
        for (const auto& [key, w] : merged)
            g.arcs_.push_back({key.first, key.second, w});
        g.finalize();
        return g;
    }

    /// Convenience for tests and generators: integer node ids map to equal
    /// dense indices. Nodes without incident edges stay isolated.
    static Graph from_index_edges(const std::vector<std::tuple<int, int, double>>& edges,
                                  bool directed, int min_nodes = 0) {
        int max_id = min_nodes - 1;
        for (const auto& [u, v, w] : edges)
            max_id = std::max({max_id, u, v});
        std::vector<std::tuple<std::string, std::string, double>> named;
        named.reserve(edges.size() + max_id + 1);
        // zero-weight self-loops pin the id -> index mapping without adding arcs
        for (int i = 0; i <= max_id; ++i)
            named.emplace_back(std::to_string(i), std::to_string(i), 0.0);
        for (const auto& [u, v, w] : edges)
            named.emplace_back(std::to_string(u), std::to_string(v), w);
        return from_edges(named, directed);
    }

    int node_count() const { return static_cast<int>(node_ids_.size()); }
    bool directed() const { return directed_; }
    double total_weight() const { return total_weight_; }
    const std::vector<Arc>& arcs() const { return arcs_; }
    const std::vector<std::string>& node_ids() const { return node_ids_; }
    const std::string& node_id(int index) const { return node_ids_.at(index); }

    std::optional<int> find_index(const std::string& id) const {
        auto it = index_of_.find(id);
        if (it == index_of_.end())
            return std::nullopt;
        return it->second;
    }

    int index_of(const std::string& id) const {
        auto idx = find_index(id);
        if (!idx)
            throw std::out_of_range("unknown node id '" + id + "'");
        return *idx;
    }

    const Vector& out_strength() const { return out_strength_; }
    const Vector& in_strength() const { return in_strength_; }

    SparseMatrix adjacency() const {
        const int n = node_count();
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(arcs_.size());
        for (const Arc& a : arcs_)
            trip.emplace_back(a.src, a.dst, a.weight);
        SparseMatrix adj(n, n);
        adj.setFromTriplets(trip.begin(), trip.end());
        return adj;
    }

    Matrix dense_adjacency() const {
        Matrix adj = Matrix::Zero(node_count(), node_count());
        for (const Arc& a : arcs_)
            adj(a.src, a.dst) += a.weight;
        return adj;
    }

private:
    int intern(const std::string& id) {
        auto it = index_of_.find(id);
        if (it != index_of_.end())
            return it->second;
        const int idx = static_cast<int>(node_ids_.size());
        index_of_.emplace(id, idx);
        node_ids_.push_back(id);
        return idx;
    }

    void finalize() {
        std::sort(arcs_.begin(), arcs_.end(), [](const Arc& a, const Arc& b) {
            return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
        });
        const int n = node_count();
        out_strength_ = Vector::Zero(n);
        in_strength_ = Vector::Zero(n);
        total_weight_ = 0.0;
        for (const Arc& a : arcs_) {
            out_strength_[a.src] += a.weight;
            in_strength_[a.dst] += a.weight;
            total_weight_ += a.weight;
        }
    }

    bool directed_ = false;
    double total_weight_ = 0.0;
    std::vector<Arc> arcs_;
    std::vector<std::string> node_ids_;
    std::unordered_map<std::string, int> index_of_;
    Vector out_strength_;
    Vector in_strength_;
};

using FeatureMatrix = Matrix;

namespace detail {

inline bool is_comment_or_blank(const std::string& line) {
    for (char c : line) {
        if (c == '#')
            return true;
        if (!std::isspace(static_cast<unsigned char>(c)))
            return false;
    }
    return true;
}

inline double parse_weight(const std::string& token, const std::string& path, int line_no) {
    std::size_t pos = 0;
    double w = 0.0;
    try {
        w = std::stod(token, &pos);
    } catch (const std::exception&) {
        pos = std::string::npos;
    }
    if (pos != token.size() || !std::isfinite(w))
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed weight '" +
                                 token + "'");
    return w;
}

} // namespace detail

/// Reads a whitespace-separated "src dst [weight]" edge list. Lines containing
/// '#' are comments. Parallel edges merge by weight summation, zero-weight
/// edges are dropped, self-loops are kept.
inline Graph load_edge_list(const std::string& path, bool directed, bool weighted = true) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open edge list '" + path + "'");
    std::vector<std::tuple<std::string, std::string, double>> edges;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::is_comment_or_blank(line))
            continue;
        std::istringstream ls(line);
        std::string src, dst, wtok;
        if (!(ls >> src >> dst))
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed line '" +
                                     line + "'");
        double w = 1.0;
        if (ls >> wtok) {
            const double parsed = detail::parse_weight(wtok, path, line_no);
            if (weighted)
                w = parsed;
            std::string extra;
            if (ls >> extra)
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": trailing tokens in line '" + line + "'");
        }
        if (w < 0.0)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": negative weight");
        edges.emplace_back(std::move(src), std::move(dst), w);
    }
    if (edges.empty())
        throw std::runtime_error(path + ": empty graph");
    return Graph::from_edges(edges, directed);
}

/// Writes the merged arc list, one "src dst weight" line per arc, full
/// precision. Reloading the file as a directed graph reproduces the arcs.
inline void write_edge_list(const Graph& graph, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write edge list '" + path + "'");
    char buf[64];
    for (const Arc& a : graph.arcs()) {
        std::snprintf(buf, sizeof(buf), "%.17g", a.weight);
        out << graph.node_id(a.src) << ' ' << graph.node_id(a.dst) << ' ' << buf << '\n';
    }
}

/// Loads node features aligned to the graph's dense indices. Two formats:
/// CSV with header "id,f0,f1,..." or whitespace triplets "id col value".
/// Nodes absent from the file keep zero rows.
inline FeatureMatrix load_features(const std::string& path, const Graph& graph) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open feature file '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!detail::is_comment_or_blank(line))
            lines.push_back(line);
    }
    if (lines.empty())
        throw std::runtime_error(path + ": no features");

    const int n = graph.node_count();
    const bool csv = lines.front().find(',') != std::string::npos;
    if (csv) {
        std::vector<std::string> header;
        {
            std::istringstream hs(lines.front());
            std::string cell;
            while (std::getline(hs, cell, ','))
                header.push_back(cell);
        }
        if (header.size() < 2 || header.front() != "id")
            throw std::runtime_error(path + ": CSV feature file must start with header 'id,f0,...'");
        const int dim = static_cast<int>(header.size()) - 1;
        if (lines.size() == 1)
            throw std::runtime_error(path + ": no features");
        Matrix features = Matrix::Zero(n, dim);
        for (std::size_t i = 1; i < lines.size(); ++i) {
            std::istringstream ls(lines[i]);
            std::vector<std::string> cells;
            std::string cell;
            while (std::getline(ls, cell, ','))
                cells.push_back(cell);
            if (static_cast<int>(cells.size()) != dim + 1)
                throw std::runtime_error(path + ":" + std::to_string(i + 1) +
                                         ": expected " + std::to_string(dim + 1) + " columns, got " +
                                         std::to_string(cells.size()));
            const auto row = graph.find_index(cells[0]);
            if (!row)
                throw std::runtime_error(path + ": feature row for unknown node id '" + cells[0] +
                                         "'");
            for (int j = 0; j < dim; ++j) {
                const double v = detail::parse_weight(cells[j + 1], path, static_cast<int>(i + 1));
                features(*row, j) = v;
            }
        }
        return features;
    }

    // triplet format: id col value
    struct Entry {
        int row;
        int col;
        double value;
    };
    std::vector<Entry> entries;
    int dim = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::istringstream ls(lines[i]);
        std::string id, col_tok, val_tok;
        if (!(ls >> id >> col_tok >> val_tok))
            throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": malformed line '" +
                                     lines[i] + "'");
        const auto row = graph.find_index(id);
        if (!row)
            throw std::runtime_error(path + ": feature row for unknown node id '" + id + "'");
        int col = 0;
        try {
            col = std::stoi(col_tok);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": malformed column '" +
                                     col_tok + "'");
        }
        if (col < 0)
            throw std::runtime_error(path + ":" + std::to_string(i + 1) + ": negative column");
        const double v = detail::parse_weight(val_tok, path, static_cast<int>(i + 1));
        entries.push_back({*row, col, v});
        dim = std::max(dim, col + 1);
    }
    Matrix features = Matrix::Zero(n, dim);
    for (const Entry& e : entries)
        features(e.row, e.col) += e.value;
    return features;
}

/// Adjacency matrix as node features, for graphs without feature data.
inline FeatureMatrix identity_features(const Graph& graph) {
    return graph.dense_adjacency();
}

struct ComponentLabeling {
    std::vector<int> labels;
    int count = 0;
};

/// Weak connectivity labelling (arc directions ignored).
inline ComponentLabeling connected_components(const Graph& graph) {
    const int n = graph.node_count();
    std::vector<std::vector<int>> neighbors(n);
    for (const Arc& a : graph.arcs()) {
        neighbors[a.src].push_back(a.dst);
        neighbors[a.dst].push_back(a.src);
    }
    ComponentLabeling result;
    result.labels.assign(n, -1);
    std::vector<int> stack;
    for (int start = 0; start < n; ++start) {
        if (result.labels[start] >= 0)
            continue;
        const int label = result.count++;
        stack.push_back(start);
        result.labels[start] = label;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int v : neighbors[u]) {
                if (result.labels[v] < 0) {
                    result.labels[v] = label;
                    stack.push_back(v);
                }
            }
        }
    }
    return result;
}

} // namespace mapeq
