#pragma once

#include "mapeq/graph.hpp"

namespace mapeq {

struct FlowOptions {
    double alpha = 0.15;
    double tolerance = 1e-12;  // L1 change between sweeps
    int max_iterations = 10000;
    bool force_power_iteration = false;
};

/// Random-walk transition matrix: row u is w_uv / out-strength(u), or all
/// zero when u has no outgoing weight.
inline SparseMatrix transition_matrix(const Graph& graph) {
    const int n = graph.node_count();
    const Vector& out = graph.out_strength();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(graph.arcs().size());
    for (const Arc& a : graph.arcs()) {
        if (out[a.src] > 0.0)
            trip.emplace_back(a.src, a.dst, a.weight / out[a.src]);
    }
    SparseMatrix t(n, n);
    t.setFromTriplets(trip.begin(), trip.end());
    return t;
}

/// Strength-proportional visit rates, valid for undirected graphs only.
inline Vector visit_rates_closed_form(const Graph& graph) {
    if (graph.directed())
        throw std::invalid_argument("closed-form visit rates require an undirected graph");
    const double total = graph.out_strength().sum();
    if (total <= 0.0)
        throw std::invalid_argument("graph has no positive-weight arcs");
    return graph.out_strength() / total;
}

struct PowerIterationResult {
    Vector p;
    bool converged = false;
    int iterations = 0;
};

/// Smart-teleportation power iteration,
///   p <- alpha/w_tot * d_in + (1-alpha) * (p T + rho * d_in/w_tot),
/// starting from p = d_in (normalised). rho is the visit mass sitting on
/// nodes without out-links; routing it through the in-strength teleportation
/// target keeps the sweep stochastic and matches the flow-matrix dangling
/// handling, so column sums of F converge to p. For graphs without dangling
/// nodes this is the plain smart-teleportation update. Each sweep is
/// renormalised to guard against drift.
inline PowerIterationResult visit_rates_power_iteration(const Graph& graph, double alpha,
                                                        double tolerance = 1e-12,
                                                        int max_iterations = 10000) {
    if (!(alpha > 0.0) || alpha > 1.0)
        throw std::invalid_argument("teleportation alpha must lie in (0, 1]");
    if (!(tolerance > 0.0))
        throw std::invalid_argument("tolerance must be positive");
    const int n = graph.node_count();
    const double w_tot = graph.total_weight();
    const Vector teleport = graph.in_strength() / w_tot;

    std::vector<int> dangling;
    for (int u = 0; u < n; ++u) {
        if (graph.out_strength()[u] <= 0.0)
            dangling.push_back(u);
    }

    const SparseMatrix t = transition_matrix(graph);
    const SparseMatrix t_transposed = t.transpose();

    PowerIterationResult result;
    result.p = teleport;  // d_in up to normalisation
    for (int iter = 1; iter <= max_iterations; ++iter) {
        double rho = 0.0;
        for (int u : dangling)
            rho += result.p[u];
        Vector next = alpha * teleport + (1.0 - alpha) * (t_transposed * result.p + rho * teleport);
        next /= next.sum();
        const double change = (next - result.p).lpNorm<1>();
        result.p = std::move(next);
        result.iterations = iter;
        if (change < tolerance) {
            result.converged = true;
            break;
        }
    }
    return result;
}

/// Flow matrix F = alpha/w_tot * A + (1-alpha) * diag(p) T, with the
/// (1-alpha) p_u mass of dangling nodes u spent through the teleportation
/// distribution A/w_tot so that the entries sum to one.
inline SparseMatrix flow_matrix(const Graph& graph, const Vector& p, double alpha) {
    const int n = graph.node_count();
    const double w_tot = graph.total_weight();
    const Vector& out = graph.out_strength();
    double dangling_mass = 0.0;
    for (int u = 0; u < n; ++u) {
        if (out[u] <= 0.0)
            dangling_mass += p[u];
    }
    const double teleport_scale = (alpha + (1.0 - alpha) * dangling_mass) / w_tot;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(graph.arcs().size());
    for (const Arc& a : graph.arcs()) {
        double f = teleport_scale * a.weight;
        if (out[a.src] > 0.0)
            f += (1.0 - alpha) * p[a.src] * (a.weight / out[a.src]);
        trip.emplace_back(a.src, a.dst, f);
    }
    SparseMatrix flow(n, n);
    flow.setFromTriplets(trip.begin(), trip.end());
    return flow;
}

/// Stationary visit rates, transitions, and per-arc flow for one graph and
/// teleportation parameter. Immutable once built.
struct FlowModel {
    Vector p;
    SparseMatrix transition;
    SparseMatrix flow;
    double alpha = 0.15;
    bool converged = true;
    int iterations = 0;

    int node_count() const { return static_cast<int>(p.size()); }
};

/// Undirected graphs use the closed-form visit rates (the power iteration is
/// available behind force_power_iteration for cross-checks); directed graphs
/// always iterate.
inline FlowModel make_flow_model(const Graph& graph, const FlowOptions& options = {}) {
    FlowModel model;
    model.alpha = options.alpha;
    model.transition = transition_matrix(graph);
    if (!graph.directed() && !options.force_power_iteration) {
        model.p = visit_rates_closed_form(graph);
    } else {
        PowerIterationResult pi = visit_rates_power_iteration(
            graph, options.alpha, options.tolerance, options.max_iterations);
        model.p = std::move(pi.p);
        model.converged = pi.converged;
        model.iterations = pi.iterations;
    }
    // for undirected graphs with closed-form p, diag(p) T equals A/w_tot,
    // so F does not depend on alpha
    model.flow = flow_matrix(graph, model.p, options.alpha);
    return model;
}

} // namespace mapeq
