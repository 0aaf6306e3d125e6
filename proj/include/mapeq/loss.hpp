#pragma once

#include "mapeq/autodiff.hpp"
#include "mapeq/codelength.hpp"

namespace mapeq {

/// Records the soft map-equation codelength on the tape:
///   C = S^T F S,  q = 1 - tr(C),  q_m = C 1 - diag(C),
///   exit = (1^T C)^T - diag(C),  p_m = q_m + (1^T C)^T,
///   L = q log q - sum q_m log q_m - sum exit log exit
///       - sum_u p_u log p_u + sum p_m log p_m
/// with eps inside every logarithm. The node visit term depends only on p,
/// so it joins the loss as a constant and receives no gradient.
inline Var soft_codelength_loss(Tape& tape, const SparseMatrix& flow, const Vector& p,
                                Var assignments, double eps = kSoftLogEps) {
    Var pooled = tape.matmul(tape.transpose(assignments), tape.sparse_matmul(flow, assignments));
    Var diag = tape.diag_extract(pooled);
    Var col = tape.transpose(tape.col_sum(pooled));

    Var q = tape.sub(tape.constant(1.0), tape.trace(pooled));
    Var entry = tape.sub(tape.row_sum(pooled), diag);
    Var exit = tape.sub(col, diag);
    Var usage = tape.add(entry, col);

    Var bits = tape.xlogx_eps(q, eps);
    bits = tape.sub(bits, tape.sum_all(tape.xlogx_eps(entry, eps)));
    bits = tape.sub(bits, tape.sum_all(tape.xlogx_eps(exit, eps)));
    bits = tape.add(bits, tape.sum_all(tape.xlogx_eps(usage, eps)));

    double node_bits = 0.0;
    for (Eigen::Index u = 0; u < p.size(); ++u)
        node_bits -= detail::xlog2_eps(p[u], eps);
    return tape.add(bits, tape.constant(node_bits));
}

} // namespace mapeq
