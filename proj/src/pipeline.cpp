#include "flowrl/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include "flowrl/agent.hpp"
#include "flowrl/critic.hpp"
#include "flowrl/errors.hpp"
#include "flowrl/oracles.hpp"

namespace flowrl {

namespace {

struct Probe {
    std::vector<double> state;
    std::vector<double> action;
    std::string name;
};

Tensor sampled_next_actions(const Tensor& next_states, ChainScriptedPolicy& policy, Rng& rng) {
    Tensor a = Tensor::zeros({next_states.rows(), 1});
    for (std::size_t i = 0; i < next_states.rows(); ++i) {
        std::vector<double> s(next_states.data.begin() + i * next_states.cols(),
                              next_states.data.begin() + (i + 1) * next_states.cols());
        a.data[i] = policy.act(s, rng)[0];
    }
    return a;
}

}  // namespace

PipelineResult run_critic_pipeline(const PipelineConfig& cfg,
                                   const std::filesystem::path& out_dir) {
    if (cfg.variant != Variant::DFC && cfg.variant != Variant::DC)
        throw ConfigError("critic pipeline supports the dfc and dc variants");
    std::filesystem::create_directories(out_dir);

    ChainMdp env{ChainSpec::default_spec()};
    ChainScriptedPolicy behavior(cfg.policy_p_low);

    // Offline chain dataset from the frozen policy.
    BehaviorMix mix;
    mix.entries = {{&behavior, 1.0}};
    const std::vector<Transition> data =
        generate_dataset(env, mix, cfg.dataset_size, Rng::derive(cfg.seed, 10));
    ReplayBuffer buffer(data.size());
    buffer.preload_offline(data);

    // Probes and their Monte-Carlo oracles (fixed once).
    std::vector<Probe> probes;
    std::vector<EmpiricalDistribution> oracles;
    std::size_t pi = 0;
    for (std::size_t s = 0; s < env.spec().n_states; ++s)
        for (double a : {-0.5, 0.5}) {
            Probe p{env.encode(s), {a}, "s" + std::to_string(s) + (a < 0 ? "a-" : "a+")};
            oracles.push_back(mc_return_distribution(env, behavior, p.state, p.action,
                                                     cfg.oracle_rollouts, cfg.gamma,
                                                     env.spec().n_states,
                                                     Rng::derive(cfg.seed, 11, pi)));
            probes.push_back(std::move(p));
            pi += 1;
        }

    // Fixed probe noise shared by every measurement (so only the parameters
    // move between epochs).
    Rng probe_rng(Rng::derive(cfg.seed, 12));
    std::vector<double> probe_noise(cfg.oracle_rollouts);
    for (double& v : probe_noise) v = probe_rng.normal();

    Rng init_rng(Rng::derive(cfg.seed, 13));
    const std::size_t sd = env.state_dim(), ad = env.action_dim();
    std::optional<TargetFlowCritic> flow;
    AdamState flow_opt;
    MainCritic main = MainCritic::init(sd, ad, cfg.hidden, init_rng);
    std::optional<MainCritic> main_ema;
    AdamState main_opt = AdamState::init(main.net, cfg.lr_main);
    if (cfg.variant == Variant::DFC) {
        flow = TargetFlowCritic::init(sd, ad, cfg.hidden, cfg.flow_steps, init_rng);
        flow_opt = AdamState::init(flow->field.net, cfg.lr_flow);
    } else {
        main_ema = main;
    }
    const QuantileLevels levels = quantile_levels(cfg.m);

    Rng train_rng(Rng::derive(cfg.seed, 14));

    auto measure_probe = [&](std::size_t k) {
        std::vector<double> zs =
            main_critic_samples(main, probes[k].state, probes[k].action, probe_noise);
        return w1_distance(EmpiricalDistribution::from(std::move(zs)), oracles[k]);
    };

    std::ofstream epoch_csv(out_dir / "pipeline_w1.csv");
    epoch_csv << "epoch,step";
    for (const Probe& p : probes) epoch_csv << ",w1_" << p.name;
    epoch_csv << ",w1_max\n";

    PipelineResult result;
    for (const Probe& p : probes) result.probe_names.push_back(p.name);

    const std::size_t epoch_len = cfg.steps / cfg.epochs;
    const std::size_t snap_gap = std::max<std::size_t>(1, epoch_len / cfg.snapshots_per_epoch);
    std::vector<double> snap_acc(probes.size(), 0.0);
    std::size_t snap_count = 0;
    std::size_t epoch = 0;

    auto make_agent_batch = [&](Rng& rng) {
        const std::vector<std::size_t> idx = buffer.sample_indices(cfg.batch, rng);
        Batch b;
        b.states = Tensor::zeros({idx.size(), sd});
        b.actions = Tensor::zeros({idx.size(), ad});
        b.next_states = Tensor::zeros({idx.size(), sd});
        b.rewards.resize(idx.size());
        b.done.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const Transition& t = buffer[idx[i]];
            std::copy(t.state.begin(), t.state.end(), b.states.data.begin() + i * sd);
            std::copy(t.action.begin(), t.action.end(), b.actions.data.begin() + i * ad);
            std::copy(t.next_state.begin(), t.next_state.end(),
                      b.next_states.data.begin() + i * sd);
            b.rewards[i] = t.reward;
            b.done[i] = t.done ? 1 : 0;
        }
        return b;
    };

    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        const Batch batch = make_agent_batch(train_rng);
        const Tensor next_actions = sampled_next_actions(batch.next_states, behavior, train_rng);

        if (cfg.variant == Variant::DFC) {
            const BellmanTargets targets =
                bellman_targets(*flow, batch.next_states, next_actions, batch.rewards, batch.done,
                                cfg.m, cfg.gamma, train_rng);
            {
                Tape tape;
                flow->field.net.zero_grad();
                const Tape::Id loss = flow_critic_loss_node(tape, *flow, batch.states,
                                                            batch.actions, targets,
                                                            train_rng.uniform());
                tape.backward(loss);
                adam_step(flow_opt, flow->field.net);
            }
            {
                Tape tape;
                main.net.zero_grad();
                const Tape::Id loss =
                    distill_loss_node(tape, main, batch.states, batch.actions, targets.z, levels,
                                      cfg.kappa, train_rng, cfg.grid_noise);
                tape.backward(loss);
                adam_step(main_opt, main.net);
            }
            update_target_ema(*flow, cfg.ema_coeff);
        } else {
            const BellmanTargets targets =
                bellman_targets_onestep(*main_ema, batch.next_states, next_actions, batch.rewards,
                                        batch.done, cfg.m, cfg.gamma, train_rng);
            Tape tape;
            main.net.zero_grad();
            const Tape::Id loss =
                distill_loss_node(tape, main, batch.states, batch.actions, targets.z, levels,
                                  cfg.kappa, train_rng, cfg.grid_noise);
            tape.backward(loss);
            adam_step(main_opt, main.net);
            ema_update(main_ema->net, main.net, cfg.ema_coeff);
        }

        // Snapshot W1 within the epoch; epochs report the snapshot mean.
        if (step % snap_gap == 0 || step == (epoch + 1) * epoch_len) {
            for (std::size_t k = 0; k < probes.size(); ++k) snap_acc[k] += measure_probe(k);
            snap_count += 1;
        }
        if (step == (epoch + 1) * epoch_len) {
            std::vector<double> per_probe(probes.size());
            double mx = 0.0;
            for (std::size_t k = 0; k < probes.size(); ++k) {
                per_probe[k] = snap_acc[k] / static_cast<double>(snap_count);
                mx = std::max(mx, per_probe[k]);
            }
            epoch_csv << epoch << ',' << step;
            for (double v : per_probe) epoch_csv << ',' << v;
            epoch_csv << ',' << mx << "\n";

            // Diagnostic dump: M sorted main-critic samples per probe.
            std::ofstream dump(out_dir / ("return_samples_epoch" + std::to_string(epoch) + ".csv"));
            dump << "state_id,action_id";
            for (std::size_t j = 0; j < cfg.m; ++j) dump << ",z" << j;
            dump << "\n";
            Rng dump_rng(Rng::derive(cfg.seed, 15, epoch));
            for (std::size_t s = 0; s < env.spec().n_states; ++s)
                for (int abin = 0; abin < 2; ++abin) {
                    std::vector<double> xs(cfg.m);
                    for (double& v : xs) v = dump_rng.normal();
                    const std::vector<double> act = {abin == 0 ? -0.5 : 0.5};
                    std::vector<double> zs =
                        main_critic_samples(main, env.encode(s), act, xs);
                    std::sort(zs.begin(), zs.end());
                    dump << s << ',' << abin;
                    for (double v : zs) dump << ',' << v;
                    dump << "\n";
                }

            result.epoch_probe_w1.push_back(per_probe);
            result.epoch_max_w1.push_back(mx);
            std::fill(snap_acc.begin(), snap_acc.end(), 0.0);
            snap_count = 0;
            epoch += 1;
        }
    }

    result.final_max_w1 = result.epoch_max_w1.empty() ? 0.0 : result.epoch_max_w1.back();
    return result;
}

}  // namespace flowrl
