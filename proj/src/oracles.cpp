#include "flowrl/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "flowrl/errors.hpp"
#include "flowrl/mathutil.hpp"

namespace flowrl {

EmpiricalDistribution EmpiricalDistribution::from(std::vector<double> xs) {
    if (xs.empty()) throw ContractError("empirical distribution: no samples");
    if (!all_finite(xs)) throw NumericError("empirical distribution: non-finite sample");
    std::sort(xs.begin(), xs.end());
    return {std::move(xs)};
}

EmpiricalDistribution mc_return_distribution(const Env& env, ActPolicy& policy,
                                             std::span<const double> state,
                                             std::span<const double> action,
                                             std::size_t n_rollouts, double gamma,
                                             std::size_t horizon, std::uint64_t seed) {
    if (n_rollouts == 0) throw ContractError("mc_return_distribution: n_rollouts must be >= 1");
    std::vector<double> returns(n_rollouts);
    for (std::size_t k = 0; k < n_rollouts; ++k) {
        Rng rng(Rng::derive(seed, 0x0AC1E, k));
        std::unique_ptr<Env> e = env.clone();
        e->reset_to(state);
        double g = 0.0, disc = 1.0;
        std::vector<double> a(action.begin(), action.end());
        std::vector<double> s(state.begin(), state.end());
        for (std::size_t t = 0; t < horizon; ++t) {
            std::vector<double> raw(a.size());
            for (std::size_t i = 0; i < a.size(); ++i)
                raw[i] = clamp(a[i], -1.0, 1.0) * e->action_scale();
            const StepResult r = e->step(raw, rng);
            g += disc * r.reward;
            disc *= gamma;
            if (r.done) break;
            s = r.next_state;
            a = policy.act(s, rng);
        }
        returns[k] = g;
    }
    return EmpiricalDistribution::from(std::move(returns));
}

std::vector<double> empirical_quantiles(const EmpiricalDistribution& dist,
                                        std::span<const double> levels) {
    if (dist.samples.empty()) throw ContractError("empirical_quantiles: empty distribution");
    const double n = static_cast<double>(dist.size());
    std::vector<double> out(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (levels[i] < 0.0 || levels[i] > 1.0)
            throw ContractError("empirical_quantiles: level outside [0,1]");
        const std::size_t idx =
            std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(levels[i] * n)));
        out[i] = dist.samples[std::min<std::size_t>(idx, dist.size()) - 1];
    }
    return out;
}

double w1_distance(const EmpiricalDistribution& a, const EmpiricalDistribution& b) {
    if (a.size() != b.size()) throw ContractError("w1_distance: sample counts differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.samples[i] - b.samples[i]);
    return s / static_cast<double>(a.size());
}

EmpiricalDistribution resample(const EmpiricalDistribution& dist, std::size_t m) {
    if (m == 0) throw ContractError("resample: m must be >= 1");
    std::vector<double> levels(m);
    for (std::size_t i = 1; i <= m; ++i)
        levels[i - 1] = (2.0 * static_cast<double>(i) - 1.0) / (2.0 * static_cast<double>(m));
    return EmpiricalDistribution::from(empirical_quantiles(dist, levels));
}

}  // namespace flowrl
