#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flowrl/flow.hpp"
#include "flowrl/nn.hpp"
#include "flowrl/rng.hpp"
#include "flowrl/tape.hpp"

namespace flowrl {

// Quantile midpoint levels (2i-1)/(2M), i = 1..M.
struct QuantileLevels {
    std::vector<double> levels;
    std::size_t count() const { return levels.size(); }
};
QuantileLevels quantile_levels(std::size_t m);

// |tau - 1(u<0)| * L_kappa(u) with the Huber branch at |u| = kappa.
double quantile_huber(double u, double tau_hat, double kappa);

// Multi-step flow model over scalar returns, conditioned on (state, action).
// The EMA copy generates bootstrap samples; the trained field receives
// gradients.
struct TargetFlowCritic {
    VectorFieldNet field;
    VectorFieldNet ema_field;
    int n_steps = 10;

    static TargetFlowCritic init(std::size_t state_dim, std::size_t action_dim,
                                 const std::vector<std::size_t>& hidden, int n_steps, Rng& rng);
};

// One-step critic: (state, action, noise) -> return sample, single forward
// pass per sample.
struct MainCritic {
    MlpParams net;
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;

    static MainCritic init(std::size_t state_dim, std::size_t action_dim,
                           const std::vector<std::size_t>& hidden, Rng& rng);
};

// Ordered collection of M scalar return samples for one (s, a) pair.
struct ReturnSampleSet {
    std::vector<double> values;
    bool sorted = false;
};

// Batched Bellman target block: z [B, M] and the base noise that generated
// each sample (reused as the flow-matching source points).
struct BellmanTargets {
    Tensor z;
    Tensor base_noise;
    std::vector<ReturnSampleSet> rows() const;
};

// z~_j = r + gamma * Z(s', a', xi_j) via Euler sampling on the EMA field;
// terminal rows get z~_j = r. No gradients are retained. `done` is 0/1.
BellmanTargets bellman_targets(const TargetFlowCritic& critic, const Tensor& next_states,
                               const Tensor& next_actions, std::span<const double> rewards,
                               std::span<const std::uint8_t> done, std::size_t m, double gamma,
                               Rng& rng);

// One-step bootstrap variant: z~_j = r + gamma * net(s', a', xi_j). Used when
// a quantile critic bootstraps from an EMA copy of itself.
BellmanTargets bellman_targets_onestep(const MainCritic& ema, const Tensor& next_states,
                                       const Tensor& next_actions, std::span<const double> rewards,
                                       std::span<const std::uint8_t> done, std::size_t m,
                                       double gamma, Rng& rng);

// Flow-matching loss of the trained field against the target block, one
// shared tau for the whole batch. Differentiable in the field only.
Tape::Id flow_critic_loss_node(Tape& tape, TargetFlowCritic& critic, const Tensor& states,
                               const Tensor& actions, const BellmanTargets& targets, double tau);

// Quantile-Huber distillation of the target samples into the main critic.
// Draws fresh noise per sample (or the deterministic grid Phi^-1(tau_i) when
// grid_noise is set, in which case outputs are not sorted). Targets are
// constants; differentiable in the main critic only.
Tape::Id distill_loss_node(Tape& tape, MainCritic& main, const Tensor& states,
                           const Tensor& actions, const Tensor& targets,
                           const QuantileLevels& levels, double kappa, Rng& rng, bool grid_noise);

// Pairing loss on explicit sample vectors (test and analysis hook; this is
// the same reduction distill_loss_node performs after the critic forward).
double quantile_pairing_loss(std::span<const double> z, std::span<const double> targets,
                             const QuantileLevels& levels, double kappa, bool sort_samples);

// Mean of M one-step samples with fresh noise. No gradients.
double q_estimate(const MainCritic& main, std::span<const double> state,
                  std::span<const double> action, std::size_t m, Rng& rng);

// Tape version used by the actor update: mean over batch rows and M fresh
// noise draws, differentiable through the action node. Critic parameters stay
// frozen.
Tape::Id q_mean_node(Tape& tape, MainCritic& main, const Tensor& states, Tape::Id actions,
                     std::size_t m, Rng& rng);

// One-step critic samples at explicit noise values. No gradients.
std::vector<double> main_critic_samples(const MainCritic& main, std::span<const double> state,
                                        std::span<const double> action,
                                        std::span<const double> noise);

// ema_field <- (1-coeff) ema_field + coeff field. coeff = 0 freezes the copy.
void update_target_ema(TargetFlowCritic& critic, double coeff);

}  // namespace flowrl
