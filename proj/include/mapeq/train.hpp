#pragma once

#include "mapeq/encoder.hpp"
#include "mapeq/loss.hpp"

#include <future>

namespace mapeq {

struct TrainConfig {
    double learning_rate = 0.0;  // 0 resolves to the architecture default
    int max_epochs = 10000;
    int patience = 100;
    std::uint64_t seed = 0;
    double epsilon_loss = 1e-6;  // minimum improvement that resets patience
    int trials = 10;
    double soft_eps = kSoftLogEps;

    void validate() const {
        if (learning_rate < 0.0)
            throw std::invalid_argument("learning rate must be positive");
        if (patience < 1)
            throw std::invalid_argument("patience must be at least 1");
        if (max_epochs < 0 || trials < 1)
            throw std::invalid_argument("max_epochs must be >= 0 and trials >= 1");
    }
};

/// Architecture defaults: linear 1e-1, MLP 1e-2, message passing 1e-3.
inline double default_learning_rate(Arch arch) {
    switch (arch) {
    case Arch::linear: return 1e-1;
    case Arch::mlp: return 1e-2;
    case Arch::gcn:
    case Arch::gin:
    case Arch::sage: return 1e-3;
    }
    return 1e-3;
}

inline double resolve_learning_rate(const TrainConfig& config, Arch arch) {
    return config.learning_rate > 0.0 ? config.learning_rate : default_learning_rate(arch);
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First/second moment estimates per parameter tensor plus the step counter.
struct AdamState {
    std::vector<Matrix> first_moment;
    std::vector<Matrix> second_moment;
    long step = 0;

    static AdamState for_params(const EncoderParams& params) {
        AdamState state;
        state.first_moment.reserve(params.tensors.size());
        state.second_moment.reserve(params.tensors.size());
        for (const auto& [name, value] : params.tensors) {
            state.first_moment.push_back(Matrix::Zero(value.rows(), value.cols()));
            state.second_moment.push_back(Matrix::Zero(value.rows(), value.cols()));
        }
        return state;
    }
};

/// Bias-corrected Adam update applied in place.
inline void adam_step(EncoderParams& params, const std::vector<Matrix>& grads, AdamState& state,
                      double learning_rate, const AdamConfig& adam = {}) {
    if (grads.size() != params.tensors.size() || state.first_moment.size() != grads.size())
        throw std::invalid_argument("adam_step: gradient/state layout mismatch");
    ++state.step;
    const double correction1 = 1.0 - std::pow(adam.beta1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(adam.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < grads.size(); ++i) {
        const Matrix& g = grads[i];
        if (!g.allFinite())
            throw std::runtime_error("adam_step: non-finite gradient for tensor '" +
                                     params.tensors[i].first + "'");
        Matrix& m = state.first_moment[i];
        Matrix& v = state.second_moment[i];
        m = adam.beta1 * m + (1.0 - adam.beta1) * g;
        v = adam.beta2 * v + (1.0 - adam.beta2) * g.cwiseProduct(g).eval();
        const Matrix m_hat = m / correction1;
        const Matrix v_hat = v / correction2;
        params.tensors[i].second.array() -=
            learning_rate * m_hat.array() / (v_hat.array().sqrt() + adam.epsilon);
    }
}

/// Strongest-membership extraction: row-wise argmax with ties to the lowest
/// column, labels densified.
inline Partition hard_partition(const Matrix& assignments) {
    std::vector<int> raw(assignments.rows());
    for (Eigen::Index r = 0; r < assignments.rows(); ++r) {
        int best = 0;
        for (Eigen::Index c = 1; c < assignments.cols(); ++c) {
            if (assignments(r, c) > assignments(r, best))
                best = static_cast<int>(c);
        }
        raw[r] = best;
    }
    return Partition::from_labels(raw);
}

struct TrainedResult {
    EncoderParams best_params;
    double best_loss_bits = 0.0;
    std::vector<double> loss_history;  // evaluation loss per epoch, entry 0 before any step
    Matrix best_assignments;
    int epochs_run = 0;
    int best_epoch = 0;
    bool flow_converged = true;
    std::uint64_t seed = 0;
};

/// Full-batch gradient descent on the soft codelength: forward with dropout,
/// backward, Adam step, then a dropout-free evaluation pass that drives best
/// tracking and early stopping. Stops after `patience` epochs without an
/// improvement larger than epsilon_loss. Deterministic for a fixed seed.
inline TrainedResult train(const Graph& graph, const Matrix& features,
                           const EncoderConfig& encoder, const TrainConfig& config,
                           const FlowOptions& flow_options = {}) {
    config.validate();
    encoder.validate();
    const FlowModel flow = make_flow_model(graph, flow_options);
    const SparseMatrix message_op = normalize_adjacency(graph, encoder.arch);
    const double lr = resolve_learning_rate(config, encoder.arch);

    EncoderParams params =
        init_params(encoder, graph.node_count(), static_cast<int>(features.cols()), config.seed);
    AdamState adam = AdamState::for_params(params);
    std::mt19937_64 mask_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

    const auto evaluate = [&](const EncoderParams& current, Matrix* assignments_out) {
        Tape tape;
        EncoderTrace trace = encoder_forward(tape, current, message_op, features,
                                             encoder.dropout_p, /*train_mode=*/false, nullptr);
        Var loss = soft_codelength_loss(tape, flow.flow, flow.p, trace.assignments,
                                        config.soft_eps);
        if (assignments_out)
            *assignments_out = tape.value(trace.assignments);
        return tape.scalar(loss);
    };

    TrainedResult result;
    result.flow_converged = flow.converged;
    result.seed = config.seed;
    Matrix assignments;
    result.best_loss_bits = evaluate(params, &assignments);
    result.best_assignments = assignments;
    result.best_params = params;
    result.best_epoch = 0;
    result.loss_history.push_back(result.best_loss_bits);

    int epochs_since_improvement = 0;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        Tape tape;
        EncoderTrace trace = encoder_forward(tape, params, message_op, features,
                                             encoder.dropout_p, /*train_mode=*/true, &mask_rng);
        Var loss = soft_codelength_loss(tape, flow.flow, flow.p, trace.assignments,
                                        config.soft_eps);
        tape.backward(loss);
        std::vector<Matrix> grads;
        grads.reserve(trace.parameters.size());
        for (Var parameter : trace.parameters)
            grads.push_back(tape.grad(parameter));
        adam_step(params, grads, adam, lr);
        result.epochs_run = epoch;

        const double eval_loss = evaluate(params, &assignments);
        result.loss_history.push_back(eval_loss);
        const bool significant = result.best_loss_bits - eval_loss > config.epsilon_loss;
        if (eval_loss < result.best_loss_bits) {
            result.best_loss_bits = eval_loss;
            result.best_assignments = assignments;
            result.best_params = params;
            result.best_epoch = epoch;
        }
        if (significant)
            epochs_since_improvement = 0;
        else if (++epochs_since_improvement >= config.patience)
            break;
    }
    return result;
}

/// Runs `config.trials` independent trainings with seeds seed, seed+1, ...
/// concurrently and keeps the lowest best loss; exact ties resolve to the
/// earliest seed.
inline TrainedResult train_best_of(const Graph& graph, const Matrix& features,
                                   const EncoderConfig& encoder, const TrainConfig& config,
                                   const FlowOptions& flow_options = {},
                                   std::vector<TrainedResult>* all_trials = nullptr) {
    config.validate();
    std::vector<std::future<TrainedResult>> futures;
    futures.reserve(config.trials);
    for (int trial = 0; trial < config.trials; ++trial) {
        TrainConfig trial_config = config;
        trial_config.seed = config.seed + static_cast<std::uint64_t>(trial);
        futures.push_back(std::async(std::launch::async, [=, &graph, &features] {
            return train(graph, features, encoder, trial_config, flow_options);
        }));
    }
    std::vector<TrainedResult> results;
    results.reserve(config.trials);
    for (auto& f : futures)
        results.push_back(f.get());
    int best = 0;
    for (int i = 1; i < static_cast<int>(results.size()); ++i) {
        if (results[i].best_loss_bits < results[best].best_loss_bits)
            best = i;
    }
    TrainedResult winner = results[best];
    if (all_trials)
        *all_trials = std::move(results);
    return winner;
}

} // namespace mapeq
