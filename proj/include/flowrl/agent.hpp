#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flowrl/checkpoint.hpp"
#include "flowrl/config.hpp"
#include "flowrl/critic.hpp"
#include "flowrl/envs.hpp"
#include "flowrl/metrics.hpp"
#include "flowrl/policy.hpp"

namespace flowrl {

struct StepLosses {
    std::optional<double> flow_critic;
    std::optional<double> main_critic;
    std::optional<double> bc_flow;
    std::optional<double> actor;
    std::optional<double> distill;
};

struct Batch {
    Tensor states;
    Tensor actions;
    Tensor next_states;
    std::vector<double> rewards;
    std::vector<std::uint8_t> done;
    std::size_t size() const { return rewards.size(); }
};

// One agent variant wired per the config:
//   dfc: target flow critic + distilled quantile critic
//   fc:  flow critic only; the actor backprops through the Euler sampler
//   dc:  quantile critic bootstrapping from an EMA copy of itself
//   fql: scalar critic with an MSE Bellman loss
// All variants share the BC flow policy and the one-step actor.
class Agent {
public:
    Agent(const AgentConfig& cfg, std::size_t state_dim, std::size_t action_dim);

    Batch sample_batch(const ReplayBuffer& buffer, Rng& rng) const;

    // One gradient step: critic stage(s), BC flow, actor, EMA, in that order.
    void train_step(const Batch& batch, Rng& rng);

    // Acting. eval_action draws fresh policy noise and adds no exploration
    // noise; explore adds delta-scaled Gaussian noise on top.
    std::vector<double> eval_action(std::span<const double> state, Rng& rng) const;
    std::vector<double> explore(std::span<const double> state, Rng& rng) const;

    // Structure introspection.
    bool has_flow_critic() const { return flow_critic_.has_value(); }
    bool has_main_critic() const { return main_critic_.has_value(); }
    bool has_scalar_critic() const { return scalar_critic_.has_value(); }
    bool quantile_levels_allocated() const { return !levels_.levels.empty(); }

    const StepLosses& last_losses() const { return losses_; }
    double last_actor_grad_norm() const { return actor_grad_norm_; }

    const AgentConfig& config() const { return cfg_; }
    const OneStepPolicy& onestep() const { return pi_; }
    const BcFlowPolicy& bc_flow() const { return bc_; }
    const MainCritic* main_critic() const { return main_critic_ ? &*main_critic_ : nullptr; }
    const TargetFlowCritic* flow_critic() const {
        return flow_critic_ ? &*flow_critic_ : nullptr;
    }

    Checkpoint make_checkpoint() const;
    void restore(const Checkpoint& ck);

    // Max W1 between the critic's samples and the Monte-Carlo return oracle
    // under the current policy, over all (state, action-bin) probes. Only
    // meaningful on the chain env; nullopt elsewhere or for scalar critics.
    std::optional<double> chain_oracle_w1(const Env& env, std::size_t n_samples,
                                          std::uint64_t seed) const;

    // When set, update labels are appended per train_step (order test hook).
    std::vector<std::string>* trace = nullptr;

private:
    void update_flow_critic_stage(const Batch& batch, const BellmanTargets& targets, Rng& rng);
    void update_main_critic_stage(const Batch& batch, const Tensor& target_z, Rng& rng);
    void update_scalar_critic(const Batch& batch, const Tensor& next_actions, Rng& rng);
    void update_bc_flow(const Batch& batch, Rng& rng);
    void update_actor(const Batch& batch, Rng& rng);
    void update_emas();

    AgentConfig cfg_;
    std::size_t state_dim_ = 0;
    std::size_t action_dim_ = 0;

    BcFlowPolicy bc_;
    AdamState bc_opt_;
    OneStepPolicy pi_;
    AdamState pi_opt_;

    std::optional<TargetFlowCritic> flow_critic_;
    AdamState flow_opt_;
    std::optional<MainCritic> main_critic_;
    std::optional<MainCritic> main_critic_ema_;
    AdamState main_opt_;
    std::optional<MlpParams> scalar_critic_;
    std::optional<MlpParams> scalar_critic_ema_;
    AdamState scalar_opt_;

    QuantileLevels levels_;
    StepLosses losses_;
    double actor_grad_norm_ = 0.0;
};

struct EvalResult {
    double success_rate = 0.0;
    double mean_return = 0.0;
    std::vector<double> episode_returns;
    std::vector<std::uint8_t> episode_success;
};

// Seeded evaluation protocol: per-episode derived seeds, fresh policy noise
// per action, no exploration noise.
EvalResult evaluate(const Agent& agent, Env& env, std::size_t n_episodes, std::uint64_t seed);
EvalResult evaluate_policy(const OneStepPolicy& policy, Env& env, std::size_t n_episodes,
                           std::uint64_t seed);
EvalResult evaluate_actpolicy(ActPolicy& policy, Env& env, std::size_t n_episodes,
                              std::uint64_t seed);

struct TrainResult {
    std::filesystem::path metrics_path;
    std::filesystem::path checkpoint_path;
    std::vector<MetricsRow> rows;
    // Mean success rate over the last (up to) three evaluation epochs of each
    // phase; NaN when the phase produced no evaluations.
    double final_offline_score = 0.0;
    double final_online_score = 0.0;
};

// Full run: offline gradient steps on the preloaded dataset, then online
// steps collecting one environment transition per gradient step. Writes
// metrics.csv, checkpoint.ckpt and an archived config into out_dir. A NaN in
// any loss aborts after dumping the offending batch.
TrainResult train(const AgentConfig& cfg, const std::filesystem::path& out_dir);

// Fresh-noise acting adapter used by evaluation rollouts and oracles.
class OneStepActPolicy final : public ActPolicy {
public:
    explicit OneStepActPolicy(const OneStepPolicy& policy) : policy_(&policy) {}
    std::vector<double> act(std::span<const double> state, Rng& rng) override {
        std::vector<double> eps(policy_->action_dim);
        for (double& v : eps) v = rng.normal();
        return onestep_action(*policy_, state, eps);
    }

private:
    const OneStepPolicy* policy_;
};

}  // namespace flowrl
