#pragma once

#include <filesystem>
#include <vector>

#include "flowrl/config.hpp"
#include "flowrl/envs.hpp"

namespace flowrl {

// Critic-only fixed-point study on the chain MDP: Bellman targets from a
// frozen scripted policy, critic updates, and periodic W1 measurement against
// the Monte-Carlo return oracle at every (state, action-bin) probe.
//
// variant DFC runs the two-stage pipeline (flow critic + distillation);
// variant DC bootstraps the quantile critic from an EMA copy of itself.
struct PipelineConfig {
    Variant variant = Variant::DFC;
    std::uint64_t seed = 0;

    std::size_t steps = 6000;
    std::size_t epochs = 6;               // measurement epochs
    std::size_t snapshots_per_epoch = 4;  // W1 probes averaged per epoch

    std::size_t m = 16;
    double kappa = 0.05;
    double gamma = 0.9;
    std::size_t batch = 32;
    std::vector<std::size_t> hidden = {64, 64};
    int flow_steps = 10;
    double lr_flow = 3e-4;
    double lr_main = 3e-4;
    double ema_coeff = 0.01;
    bool grid_noise = false;

    double policy_p_low = 0.6;  // frozen scripted policy
    std::size_t dataset_size = 20000;
    std::size_t oracle_rollouts = 10000;
};

struct PipelineResult {
    // epoch x probe W1 (snapshot-averaged); probes ordered (s0,a-),(s0,a+),...
    std::vector<std::vector<double>> epoch_probe_w1;
    std::vector<double> epoch_max_w1;
    std::vector<std::string> probe_names;
    double final_max_w1 = 0.0;
};

PipelineResult run_critic_pipeline(const PipelineConfig& cfg,
                                   const std::filesystem::path& out_dir);

}  // namespace flowrl
