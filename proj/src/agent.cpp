#include "flowrl/agent.hpp"

#include <array>
#include <cmath>
#include <fstream>

#include "flowrl/errors.hpp"
#include "flowrl/mathutil.hpp"
#include "flowrl/oracles.hpp"

namespace flowrl {

namespace {

double grad_norm(const MlpParams& p) {
    double s = 0.0;
    for (const MlpParams::Layer& l : p.layers) {
        for (double g : l.w.grad) s += g * g;
        for (double g : l.b.grad) s += g * g;
    }
    return std::sqrt(s);
}

Tensor normal_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor t = Tensor::zeros({rows, cols});
    for (double& v : t.data) v = rng.normal();
    return t;
}

Tensor concat_sa(const Tensor& states, const Tensor& actions) {
    const std::size_t batch = states.rows(), s = states.cols(), a = actions.cols();
    Tensor out = Tensor::zeros({batch, s + a});
    for (std::size_t i = 0; i < batch; ++i) {
        std::copy_n(states.data.data() + i * s, s, out.data.data() + i * (s + a));
        std::copy_n(actions.data.data() + i * a, a, out.data.data() + i * (s + a) + s);
    }
    return out;
}

void dump_batch(const std::filesystem::path& path, const Batch& batch) {
    std::ofstream f(path);
    const std::size_t sd = batch.states.cols(), ad = batch.actions.cols();
    for (std::size_t j = 0; j < sd; ++j) f << "s" << j << ",";
    for (std::size_t j = 0; j < ad; ++j) f << "a" << j << ",";
    f << "reward,";
    for (std::size_t j = 0; j < sd; ++j) f << "ns" << j << ",";
    f << "done\n";
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t j = 0; j < sd; ++j) f << batch.states.at(i, j) << ",";
        for (std::size_t j = 0; j < ad; ++j) f << batch.actions.at(i, j) << ",";
        f << batch.rewards[i] << ",";
        for (std::size_t j = 0; j < sd; ++j) f << batch.next_states.at(i, j) << ",";
        f << int(batch.done[i]) << "\n";
    }
}

}  // namespace

Agent::Agent(const AgentConfig& cfg, std::size_t state_dim, std::size_t action_dim)
    : cfg_(cfg), state_dim_(state_dim), action_dim_(action_dim) {
    cfg_.validate();
    Rng rng(Rng::derive(cfg.seed, 0 /*init*/));
    bc_ = BcFlowPolicy::init(state_dim, action_dim, cfg.hidden, cfg.flow_steps, rng);
    bc_opt_ = AdamState::init(bc_.field.net, cfg.lr_bc_flow);
    pi_ = OneStepPolicy::init(state_dim, action_dim, cfg.hidden, rng);
    pi_opt_ = AdamState::init(pi_.net, cfg.lr_actor);

    switch (cfg.variant) {
        case Variant::DFC:
            flow_critic_ =
                TargetFlowCritic::init(state_dim, action_dim, cfg.hidden, cfg.flow_steps, rng);
            flow_opt_ = AdamState::init(flow_critic_->field.net, cfg.lr_flow_critic);
            main_critic_ = MainCritic::init(state_dim, action_dim, cfg.hidden, rng);
            main_opt_ = AdamState::init(main_critic_->net, cfg.lr_main_critic);
            levels_ = quantile_levels(cfg.m_samples);
            break;
        case Variant::FC:
            flow_critic_ =
                TargetFlowCritic::init(state_dim, action_dim, cfg.hidden, cfg.flow_steps, rng);
            flow_opt_ = AdamState::init(flow_critic_->field.net, cfg.lr_flow_critic);
            break;
        case Variant::DC:
            main_critic_ = MainCritic::init(state_dim, action_dim, cfg.hidden, rng);
            main_critic_ema_ = *main_critic_;
            main_opt_ = AdamState::init(main_critic_->net, cfg.lr_main_critic);
            levels_ = quantile_levels(cfg.m_samples);
            break;
        case Variant::FQL: {
            std::vector<std::size_t> dims;
            dims.push_back(state_dim + action_dim);
            dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
            dims.push_back(1);
            scalar_critic_ = MlpParams::init(dims, rng);
            scalar_critic_ema_ = *scalar_critic_;
            scalar_opt_ = AdamState::init(*scalar_critic_, cfg.lr_main_critic);
            break;
        }
    }
}

Batch Agent::sample_batch(const ReplayBuffer& buffer, Rng& rng) const {
    const std::vector<std::size_t> idx = buffer.sample_indices(cfg_.batch_size, rng);
    Batch b;
    b.states = Tensor::zeros({idx.size(), state_dim_});
    b.actions = Tensor::zeros({idx.size(), action_dim_});
    b.next_states = Tensor::zeros({idx.size(), state_dim_});
    b.rewards.resize(idx.size());
    b.done.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Transition& t = buffer[idx[i]];
        std::copy(t.state.begin(), t.state.end(), b.states.data.begin() + i * state_dim_);
        std::copy(t.action.begin(), t.action.end(), b.actions.data.begin() + i * action_dim_);
        std::copy(t.next_state.begin(), t.next_state.end(),
                  b.next_states.data.begin() + i * state_dim_);
        b.rewards[i] = t.reward;
        b.done[i] = t.done ? 1 : 0;
    }
    return b;
}

void Agent::train_step(const Batch& batch, Rng& rng) {
    losses_ = {};
    const Tensor eps = normal_tensor(batch.size(), action_dim_, rng);
    const Tensor next_actions = onestep_action_batch(pi_, batch.next_states, eps);

    switch (cfg_.variant) {
        case Variant::DFC: {
            const BellmanTargets targets =
                bellman_targets(*flow_critic_, batch.next_states, next_actions, batch.rewards,
                                batch.done, cfg_.m_samples, cfg_.gamma, rng);
            update_flow_critic_stage(batch, targets, rng);
            update_main_critic_stage(batch, targets.z, rng);
            break;
        }
        case Variant::FC: {
            const BellmanTargets targets =
                bellman_targets(*flow_critic_, batch.next_states, next_actions, batch.rewards,
                                batch.done, cfg_.m_samples, cfg_.gamma, rng);
            update_flow_critic_stage(batch, targets, rng);
            break;
        }
        case Variant::DC: {
            const BellmanTargets targets =
                bellman_targets_onestep(*main_critic_ema_, batch.next_states, next_actions,
                                        batch.rewards, batch.done, cfg_.m_samples, cfg_.gamma, rng);
            update_main_critic_stage(batch, targets.z, rng);
            break;
        }
        case Variant::FQL:
            update_scalar_critic(batch, next_actions, rng);
            break;
    }
    update_bc_flow(batch, rng);
    update_actor(batch, rng);
    update_emas();
}

void Agent::update_flow_critic_stage(const Batch& batch, const BellmanTargets& targets, Rng& rng) {
    const double tau = rng.uniform();
    Tape tape;
    flow_critic_->field.net.zero_grad();
    const Tape::Id loss =
        flow_critic_loss_node(tape, *flow_critic_, batch.states, batch.actions, targets, tau);
    tape.backward(loss);
    adam_step(flow_opt_, flow_critic_->field.net);
    losses_.flow_critic = tape.scalar(loss);
    if (trace) trace->push_back("flow_critic");
}

void Agent::update_main_critic_stage(const Batch& batch, const Tensor& target_z, Rng& rng) {
    Tape tape;
    main_critic_->net.zero_grad();
    const Tape::Id loss = distill_loss_node(tape, *main_critic_, batch.states, batch.actions,
                                            target_z, levels_, cfg_.kappa, rng,
                                            cfg_.critic_noise_grid);
    tape.backward(loss);
    adam_step(main_opt_, main_critic_->net);
    losses_.main_critic = tape.scalar(loss);
    if (trace) trace->push_back("main_critic");
}

void Agent::update_scalar_critic(const Batch& batch, const Tensor& next_actions, Rng& rng) {
    (void)rng;
    const std::size_t batch_n = batch.size();
    const Tensor next_in = concat_sa(batch.next_states, next_actions);
    Tensor next_q = Tensor::zeros({batch_n, 1});
    mlp_forward_rows(*scalar_critic_ema_, next_in.data.data(), batch_n, next_q.data.data());
    Tensor y = Tensor::zeros({batch_n, 1});
    for (std::size_t i = 0; i < batch_n; ++i)
        y.data[i] = batch.done[i] ? batch.rewards[i]
                                  : batch.rewards[i] + cfg_.gamma * next_q.data[i];

    Tape tape;
    scalar_critic_->zero_grad();
    const Tape::Id in = tape.constant_owned(concat_sa(batch.states, batch.actions));
    const Tape::Id q = mlp_apply(tape, *scalar_critic_, in, /*trainable=*/true);
    const Tape::Id loss = tape.squared_error_rows(q, y);
    tape.backward(loss);
    adam_step(scalar_opt_, *scalar_critic_);
    losses_.main_critic = tape.scalar(loss);
    if (trace) trace->push_back("scalar_critic");
}

void Agent::update_bc_flow(const Batch& batch, Rng& rng) {
    Tape tape;
    bc_.field.net.zero_grad();
    const Tape::Id loss = bc_flow_loss_node(tape, bc_, batch.states, batch.actions, rng);
    tape.backward(loss);
    adam_step(bc_opt_, bc_.field.net);
    losses_.bc_flow = tape.scalar(loss);
    if (trace) trace->push_back("bc_flow");
}

void Agent::update_actor(const Batch& batch, Rng& rng) {
    const std::size_t batch_n = batch.size();
    const Tensor eps = normal_tensor(batch_n, action_dim_, rng);
    const Tensor mu = bc_flow_sample_batch(bc_, batch.states, eps);

    QMeanFn qfn;
    switch (cfg_.variant) {
        case Variant::DFC:
        case Variant::DC:
            qfn = [&](Tape& tape, Tape::Id raw) {
                return q_mean_node(tape, *main_critic_, batch.states, raw, cfg_.m_samples, rng);
            };
            break;
        case Variant::FC:
            qfn = [&](Tape& tape, Tape::Id raw) {
                const std::size_t m = cfg_.m_samples;
                Tensor state_rep = Tensor::zeros({batch_n * m, state_dim_});
                for (std::size_t i = 0; i < batch_n; ++i)
                    for (std::size_t j = 0; j < m; ++j)
                        std::copy_n(batch.states.data.data() + i * state_dim_, state_dim_,
                                    state_rep.data.data() + (i * m + j) * state_dim_);
                const Tape::Id s_node = tape.constant_owned(std::move(state_rep));
                const Tape::Id a_rep = tape.repeat_rows(raw, m);
                const std::array<Tape::Id, 2> parts = {s_node, a_rep};
                const Tape::Id cond = tape.concat_cols(parts);
                const Tape::Id x0 = tape.constant_owned(normal_tensor(batch_n * m, 1, rng));
                const Tape::Id xT = euler_sample_node(tape, flow_critic_->field, cond, x0,
                                                      cfg_.flow_steps, /*trainable=*/false);
                return tape.mean_all(xT);
            };
            break;
        case Variant::FQL:
            qfn = [&](Tape& tape, Tape::Id raw) {
                const Tape::Id s_node = tape.constant(batch.states);
                const std::array<Tape::Id, 2> parts = {s_node, raw};
                const Tape::Id in = tape.concat_cols(parts);
                const Tape::Id q = mlp_apply(tape, *scalar_critic_, in, /*trainable=*/false);
                return tape.mean_all(q);
            };
            break;
    }

    Tape tape;
    pi_.net.zero_grad();
    const ActorLoss al = actor_loss_node(tape, pi_, batch.states, eps, mu, cfg_.alpha, qfn);
    tape.backward(al.total);
    actor_grad_norm_ = grad_norm(pi_.net);
    adam_step(pi_opt_, pi_.net);
    losses_.actor = tape.scalar(al.total);
    losses_.distill = tape.scalar(al.distill_term);
    if (trace) trace->push_back("actor");
}

void Agent::update_emas() {
    switch (cfg_.variant) {
        case Variant::DFC:
        case Variant::FC:
            update_target_ema(*flow_critic_, cfg_.ema_coeff);
            break;
        case Variant::DC:
            ema_update(main_critic_ema_->net, main_critic_->net, cfg_.ema_coeff);
            break;
        case Variant::FQL:
            ema_update(*scalar_critic_ema_, *scalar_critic_, cfg_.ema_coeff);
            break;
    }
    if (trace) trace->push_back("ema");
}

std::vector<double> Agent::eval_action(std::span<const double> state, Rng& rng) const {
    std::vector<double> eps(action_dim_);
    for (double& v : eps) v = rng.normal();
    return onestep_action(pi_, state, eps);
}

std::vector<double> Agent::explore(std::span<const double> state, Rng& rng) const {
    return explore_action(pi_, state, cfg_.delta, rng);
}

Checkpoint Agent::make_checkpoint() const {
    Checkpoint ck;
    ck.add("bc_flow", bc_.field.net);
    ck.add("onestep", pi_.net);
    if (flow_critic_) {
        ck.add("flow_critic", flow_critic_->field.net);
        ck.add("flow_critic_ema", flow_critic_->ema_field.net);
    }
    if (main_critic_) ck.add("main_critic", main_critic_->net);
    if (main_critic_ema_) ck.add("main_critic_ema", main_critic_ema_->net);
    if (scalar_critic_) {
        ck.add("scalar_critic", *scalar_critic_);
        ck.add("scalar_critic_ema", *scalar_critic_ema_);
    }
    return ck;
}

void Agent::restore(const Checkpoint& ck) {
    auto take = [&](const std::string& name, MlpParams& dst) {
        const MlpParams* p = ck.find(name);
        if (!p) throw StateError("checkpoint restore: missing net " + name);
        if (p->dims() != dst.dims()) throw ShapeError("checkpoint restore: dims differ for " + name);
        dst = *p;
    };
    take("bc_flow", bc_.field.net);
    take("onestep", pi_.net);
    if (flow_critic_) {
        take("flow_critic", flow_critic_->field.net);
        take("flow_critic_ema", flow_critic_->ema_field.net);
    }
    if (main_critic_) take("main_critic", main_critic_->net);
    if (main_critic_ema_) take("main_critic_ema", main_critic_ema_->net);
    if (scalar_critic_) {
        take("scalar_critic", *scalar_critic_);
        take("scalar_critic_ema", *scalar_critic_ema_);
    }
}

// ---- Evaluation -----------------------------------------------------------

namespace {

template <typename ActFn>
EvalResult run_episodes(Env& env, std::size_t n_episodes, std::uint64_t seed, ActFn act) {
    EvalResult out;
    out.episode_returns.resize(n_episodes);
    out.episode_success.resize(n_episodes);
    for (std::size_t e = 0; e < n_episodes; ++e) {
        Rng rng(Rng::derive(seed, 4 /*episode*/, e));
        std::vector<double> s = env.reset(rng);
        double ret = 0.0;
        double last_reward = -1.0;
        for (std::size_t t = 0; t < env.horizon(); ++t) {
            const std::vector<double> a = act(s, rng);
            std::vector<double> raw(a.size());
            for (std::size_t i = 0; i < a.size(); ++i)
                raw[i] = clamp(a[i], -1.0, 1.0) * env.action_scale();
            const StepResult r = env.step(raw, rng);
            ret += r.reward;
            last_reward = r.reward;
            s = r.next_state;
            if (r.done) break;
        }
        out.episode_returns[e] = ret;
        out.episode_success[e] = last_reward == 0.0 ? 1 : 0;
    }
    double sr = 0.0, mr = 0.0;
    for (std::size_t e = 0; e < n_episodes; ++e) {
        sr += out.episode_success[e];
        mr += out.episode_returns[e];
    }
    out.success_rate = sr / static_cast<double>(n_episodes);
    out.mean_return = mr / static_cast<double>(n_episodes);
    return out;
}

}  // namespace

EvalResult evaluate(const Agent& agent, Env& env, std::size_t n_episodes, std::uint64_t seed) {
    if (n_episodes == 0) throw ContractError("evaluate: n_episodes must be >= 1");
    return run_episodes(env, n_episodes, seed,
                        [&](std::span<const double> s, Rng& rng) { return agent.eval_action(s, rng); });
}

EvalResult evaluate_policy(const OneStepPolicy& policy, Env& env, std::size_t n_episodes,
                           std::uint64_t seed) {
    if (n_episodes == 0) throw ContractError("evaluate: n_episodes must be >= 1");
    OneStepActPolicy act(policy);
    return run_episodes(env, n_episodes, seed,
                        [&](std::span<const double> s, Rng& rng) { return act.act(s, rng); });
}

EvalResult evaluate_actpolicy(ActPolicy& policy, Env& env, std::size_t n_episodes,
                              std::uint64_t seed) {
    if (n_episodes == 0) throw ContractError("evaluate: n_episodes must be >= 1");
    return run_episodes(env, n_episodes, seed,
                        [&](std::span<const double> s, Rng& rng) { return policy.act(s, rng); });
}

std::optional<double> Agent::chain_oracle_w1(const Env& env, std::size_t n_samples,
                                             std::uint64_t seed) const {
    const auto* chain = dynamic_cast<const ChainMdp*>(&env);
    if (!chain) return std::nullopt;
    if (!main_critic_ && !flow_critic_) return std::nullopt;

    OneStepActPolicy rollout_policy(pi_);
    double worst = 0.0;
    std::size_t probe_idx = 0;
    for (std::size_t s = 0; s < chain->spec().n_states; ++s) {
        for (double a : {-0.5, 0.5}) {
            const std::vector<double> obs = chain->encode(s);
            const std::vector<double> act = {a};
            const EmpiricalDistribution oracle =
                mc_return_distribution(env, rollout_policy, obs, act, n_samples, cfg_.gamma,
                                       chain->spec().n_states, Rng::derive(seed, 5, probe_idx));
            Rng noise_rng(Rng::derive(seed, 6, probe_idx));
            std::vector<double> noise(n_samples);
            for (double& v : noise) v = noise_rng.normal();
            std::vector<double> zs;
            if (main_critic_) {
                zs = main_critic_samples(*main_critic_, obs, act, noise);
            } else {
                Tensor cond = Tensor::zeros({n_samples, state_dim_ + action_dim_});
                Tensor x0 = Tensor::zeros({n_samples, 1});
                for (std::size_t i = 0; i < n_samples; ++i) {
                    std::copy(obs.begin(), obs.end(),
                              cond.data.begin() + i * (state_dim_ + action_dim_));
                    cond.data[i * (state_dim_ + action_dim_) + state_dim_] = a;
                    x0.data[i] = noise[i];
                }
                zs = euler_sample(flow_critic_->field, cond, x0, cfg_.flow_steps).data;
            }
            worst = std::max(worst,
                             w1_distance(EmpiricalDistribution::from(std::move(zs)), oracle));
            probe_idx += 1;
        }
    }
    return worst;
}

// ---- Training loop ----------------------------------------------------------

namespace {

struct Accumulator {
    double sum = 0.0;
    std::size_t n = 0;
    void add(const std::optional<double>& v) {
        if (v) {
            sum += *v;
            n += 1;
        }
    }
    std::optional<double> mean() const {
        return n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt;
    }
};

double phase_score(const std::vector<MetricsRow>& rows, const std::string& phase) {
    std::vector<double> scores;
    for (const MetricsRow& r : rows)
        if (r.phase == phase) scores.push_back(r.eval_success_rate);
    if (scores.empty()) return std::nan("");
    const std::size_t k = std::min<std::size_t>(3, scores.size());
    double s = 0.0;
    for (std::size_t i = scores.size() - k; i < scores.size(); ++i) s += scores[i];
    return s / static_cast<double>(k);
}

}  // namespace

TrainResult train(const AgentConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);

    std::unique_ptr<Env> env = make_env(cfg.env);
    std::unique_ptr<Env> eval_env = make_env(cfg.env);

    ReplayBuffer buffer(cfg.buffer_capacity);
    if (!cfg.dataset.empty()) buffer.preload_offline(load_dataset(cfg.dataset));
    if (cfg.offline_steps > 0 && buffer.size() == 0)
        throw ConfigError("train: offline phase requires a dataset");

    Agent agent(cfg, env->state_dim(), env->action_dim());

    TrainResult result;
    result.metrics_path = out_dir / "metrics.csv";
    result.checkpoint_path = out_dir / "checkpoint.ckpt";
    MetricsWriter writer(result.metrics_path);
    cfg.save(out_dir / "config.txt");

    Rng train_rng(Rng::derive(cfg.seed, 1 /*train*/));
    Rng collect_rng(Rng::derive(cfg.seed, 2 /*collect*/));

    Accumulator acc_flow, acc_main, acc_bc, acc_actor, acc_distill, acc_gnorm;
    std::vector<double> cur_state;
    bool need_reset = true;
    std::size_t eval_epoch = 0;

    const std::size_t total = cfg.offline_steps + cfg.online_steps;
    for (std::size_t step = 1; step <= total; ++step) {
        const bool online = step > cfg.offline_steps;
        if (online) {
            if (need_reset) {
                cur_state = env->reset(collect_rng);
                need_reset = false;
            }
            const std::vector<double> a = agent.explore(cur_state, collect_rng);
            std::vector<double> raw(a.size());
            for (std::size_t i = 0; i < a.size(); ++i) raw[i] = a[i] * env->action_scale();
            const StepResult r = env->step(raw, collect_rng);
            buffer.append({cur_state, a, r.reward, r.next_state, r.done});
            cur_state = r.next_state;
            if (r.done) need_reset = true;
        }

        const Batch batch = agent.sample_batch(buffer, train_rng);
        try {
            agent.train_step(batch, train_rng);
        } catch (const NumericError& e) {
            dump_batch(out_dir / "nan_batch_dump.csv", batch);
            throw NumericError(std::string(e.what()) + " at step " + std::to_string(step) +
                               "; offending batch dumped to nan_batch_dump.csv");
        }
        const StepLosses& l = agent.last_losses();
        acc_flow.add(l.flow_critic);
        acc_main.add(l.main_critic);
        acc_bc.add(l.bc_flow);
        acc_actor.add(l.actor);
        acc_distill.add(l.distill);
        acc_gnorm.add(agent.last_actor_grad_norm());

        const bool eval_now =
            (step % cfg.eval_interval == 0) || step == cfg.offline_steps || step == total;
        if (eval_now) {
            const EvalResult er =
                evaluate(agent, *eval_env, cfg.eval_episodes, Rng::derive(cfg.seed, 3, eval_epoch));
            MetricsRow row;
            row.step = step;
            row.phase = online ? "online" : "offline";
            row.eval_success_rate = er.success_rate;
            row.eval_mean_return = er.mean_return;
            row.loss_flow_critic = acc_flow.mean();
            row.loss_main_critic = acc_main.mean();
            row.loss_bc_flow = acc_bc.mean();
            row.loss_actor = acc_actor.mean();
            row.loss_distill = acc_distill.mean();
            row.actor_grad_norm = acc_gnorm.mean();
            if (cfg.env == "chain")
                row.w1_to_oracle =
                    agent.chain_oracle_w1(*eval_env, 4000, Rng::derive(cfg.seed, 7, eval_epoch));
            writer.write(row);
            result.rows.push_back(row);
            acc_flow = {};
            acc_main = {};
            acc_bc = {};
            acc_actor = {};
            acc_distill = {};
            acc_gnorm = {};
            eval_epoch += 1;
        }
    }

    agent.make_checkpoint().save(result.checkpoint_path);
    result.final_offline_score = phase_score(result.rows, "offline");
    result.final_online_score = phase_score(result.rows, "online");
    return result;
}

}  // namespace flowrl
