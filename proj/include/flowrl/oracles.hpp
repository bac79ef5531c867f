#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flowrl/envs.hpp"

namespace flowrl {

// Scalar sample set kept sorted ascending.
struct EmpiricalDistribution {
    std::vector<double> samples;

    static EmpiricalDistribution from(std::vector<double> xs);
    std::size_t size() const { return samples.size(); }
};

// Monte-Carlo return distribution for (state, action) then following the
// policy, discounted and truncated at `horizon` steps. Rollout k is driven by
// a seed derived from (seed, k), so results are order-independent. `action`
// is in normalized units.
EmpiricalDistribution mc_return_distribution(const Env& env, ActPolicy& policy,
                                             std::span<const double> state,
                                             std::span<const double> action,
                                             std::size_t n_rollouts, double gamma,
                                             std::size_t horizon, std::uint64_t seed);

// Lower empirical quantile: the ceil(tau * N)-th order statistic.
std::vector<double> empirical_quantiles(const EmpiricalDistribution& dist,
                                        std::span<const double> levels);

// Sorted-sample Wasserstein-1 estimate: mean |x_(i) - y_(i)|. Sizes must
// match; use resample() to align first.
double w1_distance(const EmpiricalDistribution& a, const EmpiricalDistribution& b);

// Quantile-based resampling to m points (levels (2i-1)/(2m)).
EmpiricalDistribution resample(const EmpiricalDistribution& dist, std::size_t m);

}  // namespace flowrl
