#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace flowrl {

enum class Variant { DFC, FC, DC, FQL };

Variant parse_variant(const std::string& s);
std::string variant_name(Variant v);

// Full run configuration; defaults are the desk-scale settings with the
// published hyperparameters where they exist.
struct AgentConfig {
    Variant variant = Variant::DFC;
    std::string env = "twogoal";
    std::uint64_t seed = 0;

    std::size_t m_samples = 51;
    double kappa = 1.0;
    double gamma = 0.99;
    double alpha = 10.0;
    double delta = 0.3;

    double lr_flow_critic = 1e-4;
    double lr_main_critic = 3e-4;
    double lr_actor = 3e-4;
    double lr_bc_flow = 3e-4;
    double ema_coeff = 0.005;

    std::size_t batch_size = 256;
    int flow_steps = 10;
    std::size_t offline_steps = 50000;
    std::size_t online_steps = 50000;
    std::size_t eval_interval = 5000;
    std::size_t eval_episodes = 50;
    std::vector<std::size_t> hidden = {64, 64};
    bool critic_noise_grid = false;  // deterministic Phi^-1(tau_i) noise, no sort
    std::size_t buffer_capacity = 1000000;

    std::string dataset;  // path to the offline dataset (required by train)

    void validate() const;  // throws ConfigError

    // Flat "key = value" text format.
    static AgentConfig from_file(const std::filesystem::path& path);
    void apply_line(const std::string& key, const std::string& value);
    void save(const std::filesystem::path& path) const;
};

}  // namespace flowrl
