#include "flowrl/critic.hpp"

#include <algorithm>
#include <cmath>

#include "flowrl/errors.hpp"
#include "flowrl/mathutil.hpp"

namespace flowrl {

QuantileLevels quantile_levels(std::size_t m) {
    if (m == 0) throw ContractError("quantile_levels: M must be >= 1");
    QuantileLevels q;
    q.levels.resize(m);
    for (std::size_t i = 1; i <= m; ++i)
        q.levels[i - 1] = (2.0 * static_cast<double>(i) - 1.0) / (2.0 * static_cast<double>(m));
    return q;
}

double quantile_huber(double u, double tau_hat, double kappa) {
    if (tau_hat <= 0.0 || tau_hat >= 1.0) throw ContractError("quantile_huber: tau outside (0,1)");
    if (kappa <= 0.0) throw ContractError("quantile_huber: kappa must be positive");
    const double w = std::abs(tau_hat - (u < 0.0 ? 1.0 : 0.0));
    const double au = std::abs(u);
    const double lk = au <= kappa ? 0.5 * u * u : kappa * (au - 0.5 * kappa);
    return w * lk;
}

TargetFlowCritic TargetFlowCritic::init(std::size_t state_dim, std::size_t action_dim,
                                        const std::vector<std::size_t>& hidden, int n_steps,
                                        Rng& rng) {
    TargetFlowCritic c;
    c.field = VectorFieldNet::init(state_dim + action_dim, 1, hidden, rng);
    c.ema_field = c.field;
    c.n_steps = n_steps;
    return c;
}

MainCritic MainCritic::init(std::size_t state_dim, std::size_t action_dim,
                            const std::vector<std::size_t>& hidden, Rng& rng) {
    MainCritic c;
    c.state_dim = state_dim;
    c.action_dim = action_dim;
    std::vector<std::size_t> dims;
    dims.push_back(state_dim + action_dim + 1);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(1);
    c.net = MlpParams::init(dims, rng);
    return c;
}

std::vector<ReturnSampleSet> BellmanTargets::rows() const {
    std::vector<ReturnSampleSet> out(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        out[i].values.assign(z.data.begin() + i * z.cols(), z.data.begin() + (i + 1) * z.cols());
        out[i].sorted = false;
    }
    return out;
}

namespace {

void check_bellman_args(std::size_t batch, const Tensor& next_actions,
                        std::span<const double> rewards, std::span<const std::uint8_t> done,
                        std::size_t m, double gamma) {
    if (gamma < 0.0 || gamma >= 1.0) throw ContractError("bellman_targets: gamma outside [0,1)");
    if (m == 0) throw ContractError("bellman_targets: M must be >= 1");
    if (next_actions.rows() != batch || rewards.size() != batch || done.size() != batch)
        throw ShapeError("bellman_targets: batch sizes differ");
}

void finish_targets(BellmanTargets& t, const Tensor& boot, std::span<const double> rewards,
                    std::span<const std::uint8_t> done, std::size_t m, double gamma) {
    const std::size_t batch = rewards.size();
    for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double z =
                done[i] ? rewards[i] : rewards[i] + gamma * boot.data[i * m + j];
            if (!std::isfinite(z)) throw NumericError("bellman_targets: non-finite return sample");
            t.z.data[i * m + j] = z;
        }
    }
}

// [B,s] + [B,a] -> [B*m, s+a] with each row repeated m times.
Tensor repeat_condition(const Tensor& states, const Tensor& actions, std::size_t m) {
    const std::size_t batch = states.rows(), s = states.cols(), a = actions.cols();
    Tensor cond = Tensor::zeros({batch * m, s + a});
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double* row = cond.data.data() + (i * m + j) * (s + a);
            std::copy_n(states.data.data() + i * s, s, row);
            std::copy_n(actions.data.data() + i * a, a, row + s);
        }
    return cond;
}

}  // namespace

BellmanTargets bellman_targets(const TargetFlowCritic& critic, const Tensor& next_states,
                               const Tensor& next_actions, std::span<const double> rewards,
                               std::span<const std::uint8_t> done, std::size_t m, double gamma,
                               Rng& rng) {
    const std::size_t batch = next_states.rows();
    check_bellman_args(batch, next_actions, rewards, done, m, gamma);

    BellmanTargets t;
    t.z = Tensor::zeros({batch, m});
    t.base_noise = Tensor::zeros({batch, m});
    for (double& v : t.base_noise.data) v = rng.normal();

    const Tensor cond = repeat_condition(next_states, next_actions, m);
    Tensor x0 = Tensor::zeros({batch * m, 1});
    x0.data = t.base_noise.data;
    const Tensor boot_flat = euler_sample(critic.ema_field, cond, x0, critic.n_steps);
    Tensor boot = Tensor::zeros({batch, m});
    boot.data = boot_flat.data;
    finish_targets(t, boot, rewards, done, m, gamma);
    return t;
}

BellmanTargets bellman_targets_onestep(const MainCritic& ema, const Tensor& next_states,
                                       const Tensor& next_actions, std::span<const double> rewards,
                                       std::span<const std::uint8_t> done, std::size_t m,
                                       double gamma, Rng& rng) {
    const std::size_t batch = next_states.rows();
    check_bellman_args(batch, next_actions, rewards, done, m, gamma);

    BellmanTargets t;
    t.z = Tensor::zeros({batch, m});
    t.base_noise = Tensor::zeros({batch, m});
    for (double& v : t.base_noise.data) v = rng.normal();

    const std::size_t s = next_states.cols(), a = next_actions.cols();
    Tensor input = Tensor::zeros({batch * m, s + a + 1});
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double* row = input.data.data() + (i * m + j) * (s + a + 1);
            std::copy_n(next_states.data.data() + i * s, s, row);
            std::copy_n(next_actions.data.data() + i * a, a, row + s);
            row[s + a] = t.base_noise.data[i * m + j];
        }
    Tensor boot = Tensor::zeros({batch, m});
    mlp_forward_rows(ema.net, input.data.data(), batch * m, boot.data.data());
    finish_targets(t, boot, rewards, done, m, gamma);
    return t;
}

Tape::Id flow_critic_loss_node(Tape& tape, TargetFlowCritic& critic, const Tensor& states,
                               const Tensor& actions, const BellmanTargets& targets, double tau) {
    if (tau < 0.0 || tau > 1.0) throw ContractError("flow_critic_loss: tau outside [0,1]");
    const std::size_t batch = states.rows(), m = targets.z.cols();
    if (targets.z.rows() != batch) throw ShapeError("flow_critic_loss: target batch differs");

    const Tensor cond = repeat_condition(states, actions, m);
    Tensor x0 = Tensor::zeros({batch * m, 1});
    x0.data = targets.base_noise.data;
    Tensor x1 = Tensor::zeros({batch * m, 1});
    x1.data = targets.z.data;
    Tensor tcol = Tensor::zeros({batch * m, 1});
    std::fill(tcol.data.begin(), tcol.data.end(), tau);
    return fm_loss_node(tape, critic.field, cond, x0, x1, tcol, /*trainable=*/true);
}

Tape::Id distill_loss_node(Tape& tape, MainCritic& main, const Tensor& states,
                           const Tensor& actions, const Tensor& targets,
                           const QuantileLevels& levels, double kappa, Rng& rng, bool grid_noise) {
    const std::size_t batch = states.rows(), m = levels.count();
    if (targets.rows() != batch || targets.cols() != m)
        throw ShapeError("distill_loss: target shape must be [batch, M]");

    const std::size_t s = main.state_dim, a = main.action_dim;
    Tensor input = Tensor::zeros({batch * m, s + a + 1});
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double* row = input.data.data() + (i * m + j) * (s + a + 1);
            std::copy_n(states.data.data() + i * s, s, row);
            std::copy_n(actions.data.data() + i * a, a, row + s);
            row[s + a] = grid_noise ? normal_cdf_inv(levels.levels[j]) : rng.normal();
        }
    const Tape::Id in = tape.constant_owned(std::move(input));
    const Tape::Id z_flat = mlp_apply(tape, main.net, in, /*trainable=*/true);
    Tape::Id z = tape.reshape(z_flat, batch, m);
    if (!grid_noise) z = tape.sort_rows(z);
    return tape.quantile_huber_pairing(z, targets, levels.levels, kappa);
}

double quantile_pairing_loss(std::span<const double> z, std::span<const double> targets,
                             const QuantileLevels& levels, double kappa, bool sort_samples) {
    const std::size_t m = levels.count();
    if (z.size() != m || targets.size() != m)
        throw ShapeError("quantile_pairing_loss: sample counts must equal M");
    std::vector<double> zs(z.begin(), z.end());
    if (sort_samples) std::sort(zs.begin(), zs.end());
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            total += quantile_huber(targets[j] - zs[i], levels.levels[i], kappa);
    return total / static_cast<double>(m * m);
}

double q_estimate(const MainCritic& main, std::span<const double> state,
                  std::span<const double> action, std::size_t m, Rng& rng) {
    if (m == 0) throw ContractError("q_estimate: M must be >= 1");
    std::vector<double> noise(m);
    for (double& v : noise) v = rng.normal();
    const std::vector<double> zs = main_critic_samples(main, state, action, noise);
    double s = 0.0;
    for (double v : zs) s += v;
    return s / static_cast<double>(m);
}

Tape::Id q_mean_node(Tape& tape, MainCritic& main, const Tensor& states, Tape::Id actions,
                     std::size_t m, Rng& rng) {
    const std::size_t batch = states.rows();
    if (tape.rows(actions) != batch) throw ShapeError("q_mean: action rows != state rows");
    Tensor state_rep = Tensor::zeros({batch * m, main.state_dim});
    Tensor noise = Tensor::zeros({batch * m, 1});
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            std::copy_n(states.data.data() + i * main.state_dim, main.state_dim,
                        state_rep.data.data() + (i * m + j) * main.state_dim);
            noise.data[i * m + j] = rng.normal();
        }
    const Tape::Id s_node = tape.constant_owned(std::move(state_rep));
    const Tape::Id a_rep = tape.repeat_rows(actions, m);
    const Tape::Id n_node = tape.constant_owned(std::move(noise));
    const std::array<Tape::Id, 3> parts = {s_node, a_rep, n_node};
    const Tape::Id in = tape.concat_cols(parts);
    const Tape::Id z = mlp_apply(tape, main.net, in, /*trainable=*/false);
    return tape.mean_all(z);
}

std::vector<double> main_critic_samples(const MainCritic& main, std::span<const double> state,
                                        std::span<const double> action,
                                        std::span<const double> noise) {
    if (state.size() != main.state_dim || action.size() != main.action_dim)
        throw ShapeError("main_critic_samples: state/action dims");
    const std::size_t n = noise.size();
    const std::size_t width = main.state_dim + main.action_dim + 1;
    Tensor input = Tensor::zeros({n, width});
    for (std::size_t i = 0; i < n; ++i) {
        double* row = input.data.data() + i * width;
        std::copy(state.begin(), state.end(), row);
        std::copy(action.begin(), action.end(), row + main.state_dim);
        row[width - 1] = noise[i];
    }
    std::vector<double> out(n);
    mlp_forward_rows(main.net, input.data.data(), n, out.data());
    return out;
}

void update_target_ema(TargetFlowCritic& critic, double coeff) {
    if (coeff < 0.0 || coeff > 1.0) throw ContractError("update_target_ema: coeff outside [0,1]");
    if (coeff == 0.0) return;
    ema_update(critic.ema_field.net, critic.field.net, coeff);
}

}  // namespace flowrl
