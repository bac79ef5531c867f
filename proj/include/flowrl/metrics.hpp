#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace flowrl {

// One row per evaluation epoch. Optional cells serialize as empty fields.
struct MetricsRow {
    std::size_t step = 0;
    std::string phase;  // "offline" | "online"
    double eval_success_rate = 0.0;
    double eval_mean_return = 0.0;
    std::optional<double> loss_flow_critic;
    std::optional<double> loss_main_critic;
    std::optional<double> loss_bc_flow;
    std::optional<double> loss_actor;
    std::optional<double> loss_distill;
    std::optional<double> actor_grad_norm;
    std::optional<double> w1_to_oracle;
};

extern const char* kMetricsHeader;

// Full-precision (round-trip exact) CSV. The writer appends row by row so a
// crashed run keeps its partial metrics.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::filesystem::path& path);
    void write(const MetricsRow& row);

private:
    std::filesystem::path path_;
};

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

}  // namespace flowrl
