#pragma once

#include "mapeq/graph.hpp"

#include <cstdint>
#include <functional>
#include <random>

namespace mapeq {

/// Handle to a node on a Tape.
struct Var {
    int id = -1;
};

inline constexpr double kSeluScale = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
inline constexpr double kLn2 = 0.6931471805599453094172321214582;

/// Reverse-mode tape over dense double matrices. Recording order is the
/// topological order; backward() runs the recorded pullbacks once, in
/// reverse, accumulating gradients additively. A tape is single-owner
/// between clear() calls; scalars are 1x1 matrices.
class Tape {
public:
    struct TapeNode {
        Matrix value;
        Matrix grad;  // allocated on first accumulation
        bool requires_grad = false;
        std::function<void(Tape&, const Matrix&)> pull;
        const char* op = "leaf";
    };

    Var leaf(Matrix value, bool requires_grad = false) {
        return push(std::move(value), requires_grad, "leaf", nullptr);
    }

    Var constant(double value) {
        Matrix m(1, 1);
        m(0, 0) = value;
        return push(std::move(m), false, "constant", nullptr);
    }

    const Matrix& value(Var v) const { return node(v).value; }
    double scalar(Var v) const {
        const Matrix& m = node(v).value;
        if (m.rows() != 1 || m.cols() != 1)
            throw std::invalid_argument("scalar: node is not 1x1");
        return m(0, 0);
    }

    /// Accumulated gradient of the last backward() target with respect to v;
    /// zero when the node never received a pullback.
    Matrix grad(Var v) const {
        const TapeNode& nd = node(v);
        if (nd.grad.size() == 0)
            return Matrix::Zero(nd.value.rows(), nd.value.cols());
        return nd.grad;
    }

    std::size_t size() const { return nodes_.size(); }

    void clear() {
        nodes_.clear();
        backward_done_ = false;
    }

    // ---- primitives ----

    Var matmul(Var a, Var b) {
        const Matrix& lhs = node(a).value;
        const Matrix& rhs = node(b).value;
        if (lhs.cols() != rhs.rows())
            shape_error("matmul", lhs, rhs);
        return push(lhs * rhs, needs_grad(a, b), "matmul", [a, b](Tape& t, const Matrix& up) {
            if (t.node(a).requires_grad)
                t.accumulate(a, up * t.node(b).value.transpose());
            if (t.node(b).requires_grad)
                t.accumulate(b, t.node(a).value.transpose() * up);
        });
    }

    /// Constant sparse left operand; gradients flow through the dense side.
    Var sparse_matmul(const SparseMatrix& lhs, Var b) {
        const Matrix& rhs = node(b).value;
        if (lhs.cols() != rhs.rows())
            throw std::invalid_argument("sparse_matmul: inner dimensions disagree");
        return push(lhs * rhs, node(b).requires_grad, "sparse_matmul",
                    [lhs, b](Tape& t, const Matrix& up) {
                        if (t.node(b).requires_grad)
                            t.accumulate(b, lhs.transpose() * up);
                    });
    }

    Var transpose(Var a) {
        return push(node(a).value.transpose(), node(a).requires_grad, "transpose",
                    [a](Tape& t, const Matrix& up) { t.accumulate(a, up.transpose()); });
    }

    Var add(Var a, Var b) {
        require_same_shape("add", a, b);
        return push(node(a).value + node(b).value, needs_grad(a, b), "add",
                    [a, b](Tape& t, const Matrix& up) {
                        if (t.node(a).requires_grad)
                            t.accumulate(a, up);
                        if (t.node(b).requires_grad)
                            t.accumulate(b, up);
                    });
    }

    Var sub(Var a, Var b) {
        require_same_shape("sub", a, b);
        return push(node(a).value - node(b).value, needs_grad(a, b), "sub",
                    [a, b](Tape& t, const Matrix& up) {
                        if (t.node(a).requires_grad)
                            t.accumulate(a, up);
                        if (t.node(b).requires_grad)
                            t.accumulate(b, -up);
                    });
    }

    Var elementwise_mul(Var a, Var b) {
        require_same_shape("elementwise_mul", a, b);
        return push(node(a).value.cwiseProduct(node(b).value), needs_grad(a, b), "elementwise_mul",
                    [a, b](Tape& t, const Matrix& up) {
                        if (t.node(a).requires_grad)
                            t.accumulate(a, up.cwiseProduct(t.node(b).value));
                        if (t.node(b).requires_grad)
                            t.accumulate(b, up.cwiseProduct(t.node(a).value));
                    });
    }

    Var scalar_mul(Var a, double c) {
        return push(node(a).value * c, node(a).requires_grad, "scalar_mul",
                    [a, c](Tape& t, const Matrix& up) { t.accumulate(a, up * c); });
    }

    /// n x k plus a 1 x k bias row, broadcast over rows.
    Var add_row_broadcast(Var a, Var bias) {
        const Matrix& lhs = node(a).value;
        const Matrix& row = node(bias).value;
        if (row.rows() != 1 || row.cols() != lhs.cols())
            shape_error("add_row_broadcast", lhs, row);
        Matrix out = lhs;
        out.rowwise() += row.row(0);
        return push(std::move(out), needs_grad(a, bias), "add_row_broadcast",
                    [a, bias](Tape& t, const Matrix& up) {
                        if (t.node(a).requires_grad)
                            t.accumulate(a, up);
                        if (t.node(bias).requires_grad)
                            t.accumulate(bias, up.colwise().sum());
                    });
    }

    /// Matrix times a 1x1 node, broadcast.
    Var mul_scalar_node(Var a, Var s) {
        const Matrix& factor = node(s).value;
        if (factor.rows() != 1 || factor.cols() != 1)
            throw std::invalid_argument("mul_scalar_node: scalar operand must be 1x1");
        return push(node(a).value * factor(0, 0), needs_grad(a, s), "mul_scalar_node",
                    [a, s](Tape& t, const Matrix& up) {
                        if (t.node(a).requires_grad)
                            t.accumulate(a, up * t.node(s).value(0, 0));
                        if (t.node(s).requires_grad) {
                            Matrix g(1, 1);
                            g(0, 0) = up.cwiseProduct(t.node(a).value).sum();
                            t.accumulate(s, g);
                        }
                    });
    }

    Var exp_elem(Var a) {
        Matrix out = node(a).value.array().exp().matrix();
        Var created = push(std::move(out), node(a).requires_grad, "exp_elem", nullptr);
        node(created).pull = [a, created](Tape& t, const Matrix& up) {
            t.accumulate(a, up.cwiseProduct(t.node(created).value));
        };
        return created;
    }

    /// Numerically stable per-row softmax (shift by the row maximum).
    Var row_softmax(Var logits) {
        const Matrix& z = node(logits).value;
        Matrix out(z.rows(), z.cols());
        for (Eigen::Index r = 0; r < z.rows(); ++r) {
            const double shift = z.row(r).maxCoeff();
            out.row(r) = (z.row(r).array() - shift).exp().matrix();
            out.row(r) /= out.row(r).sum();
        }
        Var created = push(std::move(out), node(logits).requires_grad, "row_softmax", nullptr);
        node(created).pull = [logits, created](Tape& t, const Matrix& up) {
            const Matrix& s = t.node(created).value;
            Matrix g(s.rows(), s.cols());
            for (Eigen::Index r = 0; r < s.rows(); ++r) {
                const double inner = up.row(r).dot(s.row(r));
                g.row(r) = (s.row(r).array() * (up.row(r).array() - inner)).matrix();
            }
            t.accumulate(logits, g);
        };
        return created;
    }

    /// softmax(logits / tau) with tau = exp(log_temperature); the log
    /// parameterisation keeps the temperature positive under gradient steps.
    Var row_softmax_with_temperature(Var logits, Var log_temperature) {
        Var inv_tau = exp_elem(scalar_mul(log_temperature, -1.0));
        return row_softmax(mul_scalar_node(logits, inv_tau));
    }

    Var selu(Var a) {
        Matrix out = node(a).value.unaryExpr([](double v) {
            return v > 0.0 ? kSeluScale * v : kSeluScale * kSeluAlpha * (std::exp(v) - 1.0);
        });
        Var created = push(std::move(out), node(a).requires_grad, "selu", nullptr);
        node(created).pull = [a, created](Tape& t, const Matrix& up) {
            const Matrix deriv = t.node(created).value.unaryExpr(
                [](double y) { return y > 0.0 ? kSeluScale : y + kSeluScale * kSeluAlpha; });
            t.accumulate(a, up.cwiseProduct(deriv));
        };
        return created;
    }

    /// Applies a pre-sampled (inverted) dropout mask; exact pullback for the
    /// sampled mask.
    Var dropout_mask_apply(Var a, const Matrix& mask) {
        const Matrix& x = node(a).value;
        if (mask.rows() != x.rows() || mask.cols() != x.cols())
            shape_error("dropout_mask_apply", x, mask);
        return push(x.cwiseProduct(mask), node(a).requires_grad, "dropout_mask_apply",
                    [a, mask](Tape& t, const Matrix& up) {
                        t.accumulate(a, up.cwiseProduct(mask));
                    });
    }

    /// Normalises every feature column over all rows (the whole graph is the
    /// batch), then applies a learnable scale and shift.
    Var batch_feature_norm(Var a, Var gamma, Var beta, double eps = 1e-5) {
        const Matrix& x = node(a).value;
        const Matrix& scale = node(gamma).value;
        const Matrix& shift = node(beta).value;
        if (scale.rows() != 1 || scale.cols() != x.cols() || shift.rows() != 1 ||
            shift.cols() != x.cols())
            throw std::invalid_argument("batch_feature_norm: scale/shift must be 1 x cols");
        const double n = static_cast<double>(x.rows());
        const Eigen::RowVectorXd mean = x.colwise().mean();
        Matrix centered = x;
        centered.rowwise() -= mean;
        const Eigen::RowVectorXd inv_std =
            (centered.array().square().colwise().sum() / n + eps).sqrt().inverse().matrix();
        Matrix normalized = centered;
        normalized.array().rowwise() *= inv_std.array();
        Matrix out = normalized;
        out.array().rowwise() *= scale.row(0).array();
        out.rowwise() += shift.row(0);
        const bool rg = needs_grad(a, gamma) || node(beta).requires_grad;
        return push(std::move(out), rg, "batch_feature_norm",
                    [a, gamma, beta, normalized, inv_std, n](Tape& t, const Matrix& up) {
                        if (t.node(beta).requires_grad)
                            t.accumulate(beta, up.colwise().sum());
                        if (t.node(gamma).requires_grad)
                            t.accumulate(gamma, up.cwiseProduct(normalized).colwise().sum());
                        if (t.node(a).requires_grad) {
                            const Eigen::RowVectorXd up_mean = up.colwise().mean();
                            const Eigen::RowVectorXd dot_mean =
                                up.cwiseProduct(normalized).colwise().mean();
                            Matrix g = up;
                            g.rowwise() -= up_mean;
                            g.array() -= normalized.array().rowwise() * dot_mean.array();
                            g.array().rowwise() *=
                                t.node(gamma).value.row(0).array() * inv_std.array();
                            t.accumulate(a, g);
                        }
                    });
    }

    Var log2_eps(Var a, double eps) {
        Matrix out = ((node(a).value.array() + eps).log() / kLn2).matrix();
        return push(std::move(out), node(a).requires_grad, "log2_eps",
                    [a, eps](Tape& t, const Matrix& up) {
                        const Matrix deriv =
                            ((t.node(a).value.array() + eps) * kLn2).inverse().matrix();
                        t.accumulate(a, up.cwiseProduct(deriv));
                    });
    }

    /// x log2(x + eps), elementwise; exact zero at x = 0.
    Var xlogx_eps(Var a, double eps) {
        const auto x = node(a).value.array();
        Matrix out = (x * ((x + eps).log() / kLn2)).matrix();
        return push(std::move(out), node(a).requires_grad, "xlogx_eps",
                    [a, eps](Tape& t, const Matrix& up) {
                        const auto v = t.node(a).value.array();
                        const Matrix deriv =
                            ((v + eps).log() / kLn2 + v / ((v + eps) * kLn2)).matrix();
                        t.accumulate(a, up.cwiseProduct(deriv));
                    });
    }

    Var trace(Var a) {
        const Matrix& x = node(a).value;
        if (x.rows() != x.cols())
            throw std::invalid_argument("trace: matrix must be square");
        Matrix out(1, 1);
        out(0, 0) = x.trace();
        return push(std::move(out), node(a).requires_grad, "trace",
                    [a](Tape& t, const Matrix& up) {
                        Matrix g = Matrix::Zero(t.node(a).value.rows(), t.node(a).value.cols());
                        g.diagonal().setConstant(up(0, 0));
                        t.accumulate(a, g);
                    });
    }

    Var row_sum(Var a) {
        return push(node(a).value.rowwise().sum(), node(a).requires_grad, "row_sum",
                    [a](Tape& t, const Matrix& up) {
                        t.accumulate(a, up * Matrix::Ones(1, t.node(a).value.cols()));
                    });
    }

    Var col_sum(Var a) {
        return push(node(a).value.colwise().sum(), node(a).requires_grad, "col_sum",
                    [a](Tape& t, const Matrix& up) {
                        t.accumulate(a, Matrix::Ones(t.node(a).value.rows(), 1) * up);
                    });
    }

    Var diag_extract(Var a) {
        const Matrix& x = node(a).value;
        if (x.rows() != x.cols())
            throw std::invalid_argument("diag_extract: matrix must be square");
        return push(x.diagonal(), node(a).requires_grad, "diag_extract",
                    [a](Tape& t, const Matrix& up) {
                        Matrix g = Matrix::Zero(t.node(a).value.rows(), t.node(a).value.cols());
                        g.diagonal() = up.col(0);
                        t.accumulate(a, g);
                    });
    }

    Var sum_all(Var a) {
        Matrix out(1, 1);
        out(0, 0) = node(a).value.sum();
        return push(std::move(out), node(a).requires_grad, "sum_all",
                    [a](Tape& t, const Matrix& up) {
                        t.accumulate(a, Matrix::Constant(t.node(a).value.rows(),
                                                         t.node(a).value.cols(), up(0, 0)));
                    });
    }

    /// Seeds the scalar loss with gradient one and runs every recorded
    /// pullback in reverse order. One pass per recording.
    void backward(Var loss) {
        if (loss.id < 0 || loss.id >= static_cast<int>(nodes_.size()))
            throw std::invalid_argument("backward: loss is not on this tape");
        if (backward_done_)
            throw std::logic_error("backward: tape already differentiated; clear() first");
        TapeNode& target = nodes_[loss.id];
        if (target.value.rows() != 1 || target.value.cols() != 1)
            throw std::invalid_argument("backward: loss must be scalar");
        backward_done_ = true;
        target.grad = Matrix::Ones(1, 1);
        for (int id = loss.id; id >= 0; --id) {
            TapeNode& nd = nodes_[id];
            if (!nd.requires_grad || nd.grad.size() == 0 || !nd.pull)
                continue;
            nd.pull(*this, nd.grad);
        }
    }

private:
    TapeNode& node(Var v) {
        if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
            throw std::invalid_argument("invalid tape node handle");
        return nodes_[v.id];
    }
    const TapeNode& node(Var v) const {
        if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
            throw std::invalid_argument("invalid tape node handle");
        return nodes_[v.id];
    }

    bool needs_grad(Var a, Var b) { return node(a).requires_grad || node(b).requires_grad; }

    void require_same_shape(const char* op, Var a, Var b) {
        const Matrix& lhs = node(a).value;
        const Matrix& rhs = node(b).value;
        if (lhs.rows() != rhs.rows() || lhs.cols() != rhs.cols())
            shape_error(op, lhs, rhs);
    }

    void accumulate(Var v, const Matrix& delta) {
        TapeNode& nd = node(v);
        if (nd.grad.size() == 0)
            nd.grad = delta;
        else
            nd.grad += delta;
    }

    Var push(Matrix value, bool requires_grad, const char* op,
             std::function<void(Tape&, const Matrix&)> pull) {
        if (!value.allFinite())
            throw std::runtime_error(std::string("non-finite value produced by op '") + op +
                                     "' at node " + std::to_string(nodes_.size()));
        nodes_.push_back({std::move(value), Matrix(), requires_grad, std::move(pull), op});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    [[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) const {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()));
    }

    std::vector<TapeNode> nodes_;
    bool backward_done_ = false;
};

struct FiniteDifferenceOptions {
    int sample_coordinates = -1;  // -1 checks every coordinate
    std::uint64_t seed = 0x5eedULL;
};

/// Central-difference check of an analytic gradient. Returns the maximum
/// relative error max |fd - g| / max(1, |fd|, |g|) over the checked
/// coordinates.
inline double finite_difference_check(const std::function<double(const Matrix&)>& f,
                                      const Matrix& x, const Matrix& analytic_gradient,
                                      double step,
                                      const FiniteDifferenceOptions& options = {}) {
    if (analytic_gradient.rows() != x.rows() || analytic_gradient.cols() != x.cols())
        throw std::invalid_argument("finite_difference_check: gradient shape mismatch");
    const Eigen::Index total = x.size();
    std::vector<Eigen::Index> coords;
    if (options.sample_coordinates < 0 || options.sample_coordinates >= total) {
        coords.resize(total);
        for (Eigen::Index i = 0; i < total; ++i)
            coords[i] = i;
    } else {
        std::mt19937_64 rng(options.seed);
        std::uniform_int_distribution<Eigen::Index> pick(0, total - 1);
        coords.reserve(options.sample_coordinates);
        for (int i = 0; i < options.sample_coordinates; ++i)
            coords.push_back(pick(rng));
    }
    Matrix probe = x;
    double worst = 0.0;
    for (Eigen::Index flat : coords) {
        const Eigen::Index r = flat % x.rows();
        const Eigen::Index c = flat / x.rows();
        const double original = probe(r, c);
        probe(r, c) = original + step;
        const double up = f(probe);
        probe(r, c) = original - step;
        const double down = f(probe);
        probe(r, c) = original;
        const double fd = (up - down) / (2.0 * step);
        const double g = analytic_gradient(r, c);
        const double scale = std::max({1.0, std::abs(fd), std::abs(g)});
        worst = std::max(worst, std::abs(fd - g) / scale);
    }
    return worst;
}

} // namespace mapeq
