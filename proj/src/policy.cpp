#include "flowrl/policy.hpp"

#include <array>
#include <cmath>

#include "flowrl/errors.hpp"
#include "flowrl/mathutil.hpp"

namespace flowrl {

namespace {

void clip_to_box(std::span<double> a) {
    for (double& v : a) v = clamp(v, -1.0, 1.0);
}

}  // namespace

BcFlowPolicy BcFlowPolicy::init(std::size_t state_dim, std::size_t action_dim,
                                const std::vector<std::size_t>& hidden, int n_steps, Rng& rng) {
    BcFlowPolicy p;
    p.field = VectorFieldNet::init(state_dim, action_dim, hidden, rng);
    p.n_steps = n_steps;
    return p;
}

OneStepPolicy OneStepPolicy::init(std::size_t state_dim, std::size_t action_dim,
                                  const std::vector<std::size_t>& hidden, Rng& rng) {
    OneStepPolicy p;
    p.state_dim = state_dim;
    p.action_dim = action_dim;
    std::vector<std::size_t> dims;
    dims.push_back(state_dim + action_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(action_dim);
    p.net = MlpParams::init(dims, rng);
    return p;
}

Tape::Id bc_flow_loss_node(Tape& tape, BcFlowPolicy& policy, const Tensor& states,
                           const Tensor& actions, Rng& rng) {
    const std::size_t batch = states.rows(), d = policy.action_dim();
    if (actions.rows() != batch || actions.cols() != d)
        throw ShapeError("bc_flow_loss: action tensor shape");
    Tensor x0 = Tensor::zeros({batch, d});
    for (double& v : x0.data) v = rng.normal();
    Tensor t = Tensor::zeros({batch, 1});
    for (double& v : t.data) v = rng.uniform();
    return fm_loss_node(tape, policy.field, states, x0, actions, t, /*trainable=*/true);
}

std::vector<double> bc_flow_sample(const BcFlowPolicy& policy, std::span<const double> state,
                                   std::span<const double> epsilon) {
    std::vector<double> a = euler_sample(policy.field, state, epsilon, policy.n_steps);
    clip_to_box(a);
    return a;
}

Tensor bc_flow_sample_batch(const BcFlowPolicy& policy, const Tensor& states, const Tensor& eps) {
    Tensor a = euler_sample(policy.field, states, eps, policy.n_steps);
    clip_to_box(a.data);
    return a;
}

Tape::Id onestep_apply_node(Tape& tape, OneStepPolicy& policy, const Tensor& states,
                            const Tensor& eps, bool trainable) {
    if (states.cols() != policy.state_dim || eps.cols() != policy.action_dim ||
        states.rows() != eps.rows())
        throw ShapeError("onestep_apply: input shapes");
    const Tape::Id s = tape.constant(states);
    const Tape::Id e = tape.constant(eps);
    const std::array<Tape::Id, 2> parts = {s, e};
    const Tape::Id in = tape.concat_cols(parts);
    return mlp_apply(tape, policy.net, in, trainable);
}

std::vector<double> onestep_action(const OneStepPolicy& policy, std::span<const double> state,
                                   std::span<const double> eps) {
    if (state.size() != policy.state_dim || eps.size() != policy.action_dim)
        throw ShapeError("onestep_action: input dims");
    std::vector<double> input(state.begin(), state.end());
    input.insert(input.end(), eps.begin(), eps.end());
    std::vector<double> a(policy.action_dim);
    mlp_forward_rows(policy.net, input.data(), 1, a.data());
    clip_to_box(a);
    return a;
}

Tensor onestep_action_batch(const OneStepPolicy& policy, const Tensor& states, const Tensor& eps) {
    const std::size_t batch = states.rows();
    if (states.cols() != policy.state_dim || eps.cols() != policy.action_dim ||
        eps.rows() != batch)
        throw ShapeError("onestep_action_batch: input shapes");
    const std::size_t width = policy.state_dim + policy.action_dim;
    Tensor input = Tensor::zeros({batch, width});
    for (std::size_t i = 0; i < batch; ++i) {
        std::copy_n(states.data.data() + i * policy.state_dim, policy.state_dim,
                    input.data.data() + i * width);
        std::copy_n(eps.data.data() + i * policy.action_dim, policy.action_dim,
                    input.data.data() + i * width + policy.state_dim);
    }
    Tensor a = Tensor::zeros({batch, policy.action_dim});
    mlp_forward_rows(policy.net, input.data.data(), batch, a.data.data());
    clip_to_box(a.data);
    return a;
}

double distill_reg(const OneStepPolicy& onestep, const BcFlowPolicy& bc,
                   std::span<const double> state, std::span<const double> epsilon) {
    // Raw one-step output, matching the loss term; only emitted actions clip.
    std::vector<double> input(state.begin(), state.end());
    input.insert(input.end(), epsilon.begin(), epsilon.end());
    std::vector<double> pi(onestep.action_dim);
    mlp_forward_rows(onestep.net, input.data(), 1, pi.data());
    const std::vector<double> mu = bc_flow_sample(bc, state, epsilon);
    double s = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) {
        const double d = pi[i] - mu[i];
        s += d * d;
    }
    return s;
}

std::vector<double> explore_action(const OneStepPolicy& policy, std::span<const double> state,
                                   double delta, Rng& rng) {
    if (delta < 0.0) throw ContractError("explore_action: delta must be >= 0");
    std::vector<double> eps(policy.action_dim);
    for (double& v : eps) v = rng.normal();
    std::vector<double> a = onestep_action(policy, state, eps);
    for (double& v : a) v += delta * rng.normal();
    clip_to_box(a);
    return a;
}

ActorLoss actor_loss_node(Tape& tape, OneStepPolicy& policy, const Tensor& states,
                          const Tensor& eps, const Tensor& mu_targets, double alpha,
                          QMeanFn q_fn) {
    if (alpha < 0.0) throw ContractError("actor_loss: alpha must be >= 0");
    if (mu_targets.rows() != states.rows() || mu_targets.cols() != policy.action_dim)
        throw ShapeError("actor_loss: distillation target shape");
    ActorLoss out{-1, -1, -1};
    const Tape::Id raw = onestep_apply_node(tape, policy, states, eps, /*trainable=*/true);
    out.distill_term = tape.squared_error_rows(raw, mu_targets);
    if (q_fn) {
        out.q_mean = q_fn(tape, raw);
        out.total = tape.add_scaled(tape.scale(out.q_mean, -1.0), out.distill_term, alpha);
    } else {
        out.total = tape.scale(out.distill_term, alpha);
    }
    return out;
}

}  // namespace flowrl
