#pragma once

#include <functional>
#include <span>
#include <vector>

#include "flowrl/flow.hpp"
#include "flowrl/nn.hpp"
#include "flowrl/rng.hpp"
#include "flowrl/tape.hpp"

namespace flowrl {

// Actions live in the normalized box [-1, 1]^dim; every emitted action is
// clipped to it. Loss terms use raw network outputs so gradients stay alive
// at the box boundary.

// Behavior-cloned flow policy over the action space, conditioned on state.
struct BcFlowPolicy {
    VectorFieldNet field;
    int n_steps = 10;

    static BcFlowPolicy init(std::size_t state_dim, std::size_t action_dim,
                             const std::vector<std::size_t>& hidden, int n_steps, Rng& rng);
    std::size_t action_dim() const { return field.point_dim; }
};

// One-step policy: (state, noise) -> action in a single forward pass.
struct OneStepPolicy {
    MlpParams net;
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;

    static OneStepPolicy init(std::size_t state_dim, std::size_t action_dim,
                              const std::vector<std::size_t>& hidden, Rng& rng);
};

// Flow-matching behavior-cloning loss: x0 ~ N(0,I), x1 = dataset action,
// t ~ U(0,1) per row. Differentiable in the flow field.
Tape::Id bc_flow_loss_node(Tape& tape, BcFlowPolicy& policy, const Tensor& states,
                           const Tensor& actions, Rng& rng);

// Deterministic given (state, epsilon): Euler integration from epsilon,
// clipped to the action box.
std::vector<double> bc_flow_sample(const BcFlowPolicy& policy, std::span<const double> state,
                                   std::span<const double> epsilon);
Tensor bc_flow_sample_batch(const BcFlowPolicy& policy, const Tensor& states, const Tensor& eps);

// Raw (unclipped) one-step outputs on the tape.
Tape::Id onestep_apply_node(Tape& tape, OneStepPolicy& policy, const Tensor& states,
                            const Tensor& eps, bool trainable);

// Clipped action for acting.
std::vector<double> onestep_action(const OneStepPolicy& policy, std::span<const double> state,
                                   std::span<const double> eps);
Tensor onestep_action_batch(const OneStepPolicy& policy, const Tensor& states, const Tensor& eps);

// ||pi(s, eps) - mu(s, eps)||^2 with the same epsilon fed to both.
double distill_reg(const OneStepPolicy& onestep, const BcFlowPolicy& bc,
                   std::span<const double> state, std::span<const double> epsilon);

// clip(pi(s, eps) + delta * eta), eta ~ N(0, I). Online collection only.
std::vector<double> explore_action(const OneStepPolicy& policy, std::span<const double> state,
                                   double delta, Rng& rng);

// Actor objective: -E[Q] + alpha * E[||pi - mu||^2]. The Q term is supplied
// as a callback producing a scalar mean-Q node from the raw action node, so
// critics of any variant (and test stand-ins) plug in uniformly.
struct ActorLoss {
    Tape::Id total;
    Tape::Id q_mean;        // -1 if no Q term
    Tape::Id distill_term;  // unweighted distillation mean
};
using QMeanFn = std::function<Tape::Id(Tape&, Tape::Id raw_actions)>;

ActorLoss actor_loss_node(Tape& tape, OneStepPolicy& policy, const Tensor& states,
                          const Tensor& eps, const Tensor& mu_targets, double alpha, QMeanFn q_fn);

}  // namespace flowrl
