#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "flowrl/rng.hpp"

namespace flowrl {

// One environment step in normalized form: actions live in [-1,1]^dim.
struct Transition {
    std::vector<double> state;
    std::vector<double> action;
    double reward = 0.0;
    std::vector<double> next_state;
    bool done = false;
};

struct StepResult {
    std::vector<double> next_state;
    double reward = 0.0;
    bool done = false;
};

// Single-owner environment. step() takes raw actions (normalized * action_scale);
// actions outside the raw box are a contract error. The caller's rng drives
// any declared stochasticity (reward laws, start jitter), keeping rollouts
// reproducible from explicit seeds.
class Env {
public:
    virtual ~Env() = default;
    virtual std::size_t state_dim() const = 0;
    virtual std::size_t action_dim() const = 0;
    virtual double action_scale() const = 0;
    virtual std::size_t horizon() const = 0;
    virtual std::vector<double> reset(Rng& rng) = 0;
    virtual void reset_to(std::span<const double> state) = 0;
    virtual StepResult step(std::span<const double> raw_action, Rng& rng) = 0;
    virtual std::vector<double> state() const = 0;
    virtual std::unique_ptr<Env> clone() const = 0;
};

// Acting interface used by dataset generation, oracles and evaluation.
// Emits normalized actions.
class ActPolicy {
public:
    virtual ~ActPolicy() = default;
    virtual std::vector<double> act(std::span<const double> state, Rng& rng) = 0;
};

// ---- Chain MDP ----------------------------------------------------------
//
// States 0..n-1 advance deterministically; the episode ends after the last
// state. Observations are one-hot. The scalar action is binned by sign into
// two discrete actions; each (state, bin) has its own discrete reward law.

struct DiscreteLaw {
    std::vector<std::pair<double, double>> atoms;  // (value, probability)
    void validate() const;
    double sample(Rng& rng) const;
};

struct ChainSpec {
    std::size_t n_states = 3;
    // reward_law[state][bin]
    std::vector<std::vector<DiscreteLaw>> reward_law;
    static ChainSpec default_spec();
};

class ChainMdp final : public Env {
public:
    explicit ChainMdp(ChainSpec spec);

    std::size_t state_dim() const override { return spec_.n_states; }
    std::size_t action_dim() const override { return 1; }
    double action_scale() const override { return 1.0; }
    std::size_t horizon() const override { return spec_.n_states; }
    std::vector<double> reset(Rng& rng) override;
    void reset_to(std::span<const double> state) override;
    StepResult step(std::span<const double> raw_action, Rng& rng) override;
    std::vector<double> state() const override;
    std::unique_ptr<Env> clone() const override;

    static std::size_t action_bin(double raw) { return raw < 0.0 ? 0 : 1; }
    std::vector<double> encode(std::size_t s) const;
    const ChainSpec& spec() const { return spec_; }

private:
    ChainSpec spec_;
    std::size_t pos_ = 0;
    bool terminal_ = false;
};

// Fixed stochastic policy over the two chain actions: bin 0 with probability
// p_low, emitted as -0.5 / +0.5.
class ChainScriptedPolicy final : public ActPolicy {
public:
    explicit ChainScriptedPolicy(double p_low = 0.6) : p_low_(p_low) {}
    std::vector<double> act(std::span<const double>, Rng& rng) override {
        return {rng.uniform() < p_low_ ? -0.5 : 0.5};
    }

private:
    double p_low_;
};

// ---- Two-goal maze ------------------------------------------------------
//
// Arena [-1,1]^2 with two symmetric goal circles behind a rectangular
// obstacle. Raw actions are displacements in [-0.2, 0.2]^2; motion into the
// obstacle is cancelled, arena walls clip. Reward 0 on success, -1 otherwise;
// done on success or at the horizon.

struct MazeLayout {
    double start_x = 0.0, start_y = -0.6;
    double start_jitter = 0.05;
    double goal_left_x = -0.6, goal_right_x = 0.6, goal_y = 0.6;
    double goal_radius = 0.15;
    double obstacle_x0 = -0.2, obstacle_x1 = 0.2;
    double obstacle_y0 = -0.2, obstacle_y1 = 0.5;
    std::size_t max_steps = 100;
};

class TwoGoalMaze final : public Env {
public:
    explicit TwoGoalMaze(MazeLayout layout = {});

    std::size_t state_dim() const override { return 2; }
    std::size_t action_dim() const override { return 2; }
    double action_scale() const override { return 0.2; }
    std::size_t horizon() const override { return layout_.max_steps; }
    std::vector<double> reset(Rng& rng) override;
    void reset_to(std::span<const double> state) override;
    StepResult step(std::span<const double> raw_action, Rng& rng) override;
    std::vector<double> state() const override;
    std::unique_ptr<Env> clone() const override;

    bool in_goal(double x, double y) const;
    bool in_obstacle(double x, double y) const;
    const MazeLayout& layout() const { return layout_; }

private:
    MazeLayout layout_;
    double x_ = 0.0, y_ = 0.0;
    std::size_t steps_ = 0;
    bool done_ = false;
};

// Heads for a waypoint then the goal on its side of the obstacle.
class MazeWaypointPolicy final : public ActPolicy {
public:
    MazeWaypointPolicy(const MazeLayout& layout, bool left, double noise = 0.0);
    std::vector<double> act(std::span<const double> state, Rng& rng) override;

private:
    MazeLayout layout_;
    bool left_;
    double noise_;
};

class UniformPolicy final : public ActPolicy {
public:
    explicit UniformPolicy(std::size_t dim) : dim_(dim) {}
    std::vector<double> act(std::span<const double>, Rng& rng) override {
        std::vector<double> a(dim_);
        for (double& v : a) v = rng.uniform(-1.0, 1.0);
        return a;
    }

private:
    std::size_t dim_;
};

// ---- Datasets -----------------------------------------------------------

struct BehaviorMix {
    std::vector<std::pair<ActPolicy*, double>> entries;  // (policy, weight)
};

// Episode-level mixture rollout; actions recorded in normalized form.
// Deterministic given (env, mix, n, seed).
std::vector<Transition> generate_dataset(Env& env, const BehaviorMix& mix,
                                         std::size_t n_transitions, std::uint64_t seed);

// Flat float64 records with a plain-text header plus a ".meta" sidecar
// (env, mix, seed).
void save_dataset(const std::filesystem::path& path, const std::vector<Transition>& data,
                  const std::string& env_name, const std::string& mix_desc, std::uint64_t seed);
std::vector<Transition> load_dataset(const std::filesystem::path& path);

// ---- Replay buffer ------------------------------------------------------

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void preload_offline(const std::vector<Transition>& data);
    void append(Transition t);  // FIFO eviction at capacity
    std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const;
    const Transition& operator[](std::size_t i) const { return storage_[i]; }

    std::size_t size() const { return storage_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::size_t offline_count() const { return offline_count_; }

private:
    std::vector<Transition> storage_;
    std::size_t capacity_;
    std::size_t next_ = 0;  // ring cursor once full
    std::size_t offline_count_ = 0;
};

// Environment registry used by the harness.
std::unique_ptr<Env> make_env(const std::string& name);

}  // namespace flowrl
