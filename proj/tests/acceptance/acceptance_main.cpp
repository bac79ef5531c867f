// Acceptance suite: each criterion prints one [PASS]/[FAIL] line with its
// measured numbers. Run with a criterion index (1..9) or no argument for all.
// Exit code is the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "flowrl/agent.hpp"
#include "flowrl/mathutil.hpp"
#include "flowrl/oracles.hpp"
#include "flowrl/pipeline.hpp"
#include "support/oracles.hpp"

using namespace flowrl;
namespace fs = std::filesystem;

namespace {

fs::path work_root() {
    const fs::path p = fs::temp_directory_path() / "flowrl_acceptance";
    fs::create_directories(p);
    return p;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int k, bool pass, const std::string& what, const std::string& detail, double secs) {
    std::printf("[%s] criterion %d: %s (%s; %.1fs)\n", pass ? "PASS" : "FAIL", k, what.c_str(),
                detail.c_str(), secs);
    std::fflush(stdout);
}

// ---- shared fixtures ------------------------------------------------------

const fs::path& maze_dataset_path() {
    static fs::path path = [] {
        const fs::path p = work_root() / "maze_20k.ds";
        TwoGoalMaze env;
        MazeWaypointPolicy left(env.layout(), true, 0.05);
        MazeWaypointPolicy right(env.layout(), false, 0.05);
        UniformPolicy noise(2);
        BehaviorMix mix;
        mix.entries = {{&left, 0.45}, {&right, 0.45}, {&noise, 0.10}};
        save_dataset(p, generate_dataset(env, mix, 20000, 1234), "twogoal",
                     "left:0.45 right:0.45 uniform:0.10", 1234);
        return p;
    }();
    return path;
}

const fs::path& chain_dataset_path() {
    static fs::path path = [] {
        const fs::path p = work_root() / "chain_20k.ds";
        ChainMdp env{ChainSpec::default_spec()};
        ChainScriptedPolicy behavior(0.6);
        BehaviorMix mix;
        mix.entries = {{&behavior, 1.0}};
        save_dataset(p, generate_dataset(env, mix, 20000, 4321), "chain",
                     "chain-scripted p_low:0.6", 4321);
        return p;
    }();
    return path;
}

// Desk-scale end-to-end config. The criterion pins env, widths, step counts,
// seeds and thresholds; batch size and M are sized so a 50k-step run fits the
// runtime budget on one core.
AgentConfig endtoend_config(Variant v, std::uint64_t seed, std::size_t online_steps) {
    AgentConfig cfg;
    cfg.variant = v;
    cfg.env = "twogoal";
    cfg.seed = seed;
    cfg.m_samples = 8;
    cfg.batch_size = 32;
    cfg.hidden = {64, 64};
    cfg.offline_steps = 50000;
    cfg.online_steps = online_steps;
    cfg.eval_interval = 5000;
    cfg.eval_episodes = 50;
    cfg.alpha = 10.0;
    cfg.dataset = maze_dataset_path().string();
    return cfg;
}

// Runs are deterministic, so a full (offline+online) run's offline rows are
// byte-identical to an offline-only run; criteria 6 and 7 share them.
const TrainResult& cached_run(Variant v, std::uint64_t seed, bool with_online) {
    static std::map<std::string, TrainResult> cache;
    const std::string full_key = variant_name(v) + "_" + std::to_string(seed) + "_full";
    const std::string off_key = variant_name(v) + "_" + std::to_string(seed) + "_off";
    if (auto it = cache.find(full_key); it != cache.end()) return it->second;
    if (!with_online) {
        if (auto it = cache.find(off_key); it != cache.end()) return it->second;
    }
    const AgentConfig cfg = endtoend_config(v, seed, with_online ? 50000 : 0);
    const fs::path out =
        work_root() / ("run_" + (with_online ? full_key : off_key));
    TrainResult r = train(cfg, out);
    return cache.emplace(with_online ? full_key : off_key, std::move(r)).first->second;
}

const std::vector<std::uint64_t> kSeeds = {11, 12, 13, 14};

// ---- criteria -------------------------------------------------------------

bool criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t total = 0, bad = 0;
    double max_rel = 0.0;
    Rng meta(1001);

    for (int net_idx = 0; net_idx < 20; ++net_idx) {
        const std::size_t depth = 1 + meta.uniform_index(3);  // 1..3 layers
        std::vector<std::size_t> hidden;
        for (std::size_t l = 0; l + 1 < depth; ++l) hidden.push_back(4 + meta.uniform_index(13));
        Rng init(2000 + net_idx);
        const int kind = net_idx % 3;

        auto accumulate = [&](MlpParams& params, const std::function<double()>& loss,
                              const std::function<void()>& backward) {
            params.zero_grad();
            backward();
            const double h = 1e-5;
            for (MlpParams::Layer& layer : params.layers)
                for (Tensor* t : {&layer.w, &layer.b})
                    for (std::size_t i = 0; i < t->size(); ++i) {
                        const double saved = t->data[i];
                        t->data[i] = saved + h;
                        const double fp = loss();
                        t->data[i] = saved - h;
                        const double fm = loss();
                        t->data[i] = saved;
                        const double fd = (fp - fm) / (2.0 * h);
                        const double an = t->grad[i];
                        const double rel =
                            std::abs(an - fd) / std::max(1e-4, std::abs(an) + std::abs(fd));
                        total += 1;
                        if (rel > 1e-4) bad += 1;
                        max_rel = std::max(max_rel, rel);
                    }
        };

        if (kind == 0) {  // plain MSE
            std::vector<std::size_t> dims = {3};
            dims.insert(dims.end(), hidden.begin(), hidden.end());
            dims.push_back(2);
            MlpParams net = MlpParams::init(dims, init);
            Tensor input = Tensor::zeros({4, 3});
            Tensor target = Tensor::zeros({4, 2});
            for (double& v : input.data) v = init.normal();
            for (double& v : target.data) v = init.normal();
            auto value = [&]() {
                Tape tape;
                return tape.scalar(
                    tape.squared_error_rows(mlp_apply(tape, net, tape.constant(input), true), target));
            };
            accumulate(net, value, [&]() {
                Tape tape;
                tape.backward(
                    tape.squared_error_rows(mlp_apply(tape, net, tape.constant(input), true), target));
            });
        } else if (kind == 1) {  // flow-matching loss
            VectorFieldNet field = VectorFieldNet::init(2, 2, hidden, init);
            Tensor cond = Tensor::zeros({4, 2});
            Tensor x0 = Tensor::zeros({4, 2});
            Tensor x1 = Tensor::zeros({4, 2});
            Tensor t = Tensor::zeros({4, 1});
            for (double& v : cond.data) v = init.normal();
            for (double& v : x0.data) v = init.normal();
            for (double& v : x1.data) v = init.normal();
            for (double& v : t.data) v = init.uniform();
            auto value = [&]() {
                Tape tape;
                return tape.scalar(fm_loss_node(tape, field, cond, x0, x1, t));
            };
            accumulate(field.net, value, [&]() {
                Tape tape;
                tape.backward(fm_loss_node(tape, field, cond, x0, x1, t));
            });
        } else {  // quantile distillation loss
            MainCritic critic = MainCritic::init(2, 1, hidden, init);
            const std::size_t m = 8;
            const QuantileLevels q = quantile_levels(m);
            Tensor s = Tensor::zeros({3, 2});
            Tensor a = Tensor::zeros({3, 1});
            Tensor targets = Tensor::zeros({3, m});
            for (double& v : s.data) v = init.normal();
            for (double& v : a.data) v = init.normal();
            for (double& v : targets.data) v = init.normal();
            const std::uint64_t noise_seed = 3000 + net_idx;
            auto value = [&]() {
                Tape tape;
                Rng noise(noise_seed);
                return tape.scalar(
                    distill_loss_node(tape, critic, s, a, targets, q, 1.0, noise, false));
            };
            accumulate(critic.net, value, [&]() {
                Tape tape;
                Rng noise(noise_seed);
                tape.backward(distill_loss_node(tape, critic, s, a, targets, q, 1.0, noise, false));
            });
        }
    }
    const double frac = 1.0 - double(bad) / double(total);
    char detail[160];
    std::snprintf(detail, sizeof(detail), "%zu coords, %.4f%% within 1e-4, max rel err %.2e",
                  total, 100.0 * frac, max_rel);
    const bool pass = frac >= 0.99 && max_rel <= 1e-3;
    report(1, pass, "analytic gradients match finite differences", detail, elapsed_s(t0));
    return pass;
}

bool criterion2() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng init(77);
    VectorFieldNet field = VectorFieldNet::init(1, 1, {64, 64}, init);
    AdamState opt = AdamState::init(field.net, 1e-3);
    auto draw_target = [](Rng& r) { return (r.uniform() < 0.5 ? -2.0 : 2.0) + 0.5 * r.normal(); };

    Rng trng(78);
    const std::size_t batch = 128;
    Tensor cond = Tensor::zeros({batch, 1});
    for (int step = 0; step < 12000; ++step) {
        Tensor x0 = Tensor::zeros({batch, 1});
        Tensor x1 = Tensor::zeros({batch, 1});
        Tensor t = Tensor::zeros({batch, 1});
        for (std::size_t i = 0; i < batch; ++i) {
            x0.data[i] = trng.normal();
            x1.data[i] = draw_target(trng);
            t.data[i] = trng.uniform();
        }
        Tape tape;
        field.net.zero_grad();
        tape.backward(fm_loss_node(tape, field, cond, x0, x1, t));
        adam_step(opt, field.net);
    }

    const std::size_t n = 10000;
    Tensor gen_cond = Tensor::zeros({n, 1});
    Tensor x0 = Tensor::zeros({n, 1});
    Rng srng(79);
    for (double& v : x0.data) v = srng.normal();
    const Tensor xs = euler_sample(field, gen_cond, x0, 10);
    std::vector<double> fresh(n);
    Rng frng(80);
    for (double& v : fresh) v = draw_target(frng);

    const double w1 =
        w1_distance(EmpiricalDistribution::from(xs.data), EmpiricalDistribution::from(fresh));
    char detail[120];
    std::snprintf(detail, sizeof(detail), "W1 = %.4f vs tolerance 0.15", w1);
    const bool pass = w1 <= 0.15;
    report(2, pass, "conditional flow recovers the bimodal return law", detail, elapsed_s(t0));
    return pass;
}

bool criterion3() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng pool_rng(91);
    std::vector<double> pool(10000);
    for (double& v : pool) v = pool_rng.normal();

    const std::size_t m = 51;
    // kappa pinned small here: the quantile-Huber minimizer at kappa=1 is
    // biased by ~0.29 at the 0.1 level on a unit normal, outside the 0.1
    // tolerance by itself. The agent default stays kappa=1.
    const double kappa = 0.05;
    Rng init(92);
    MainCritic critic = MainCritic::init(1, 1, {64, 64}, init);
    AdamState opt = AdamState::init(critic.net, 1e-3);
    const QuantileLevels q = quantile_levels(m);
    Tensor s = Tensor::zeros({1, 1});
    Tensor a = Tensor::zeros({1, 1});
    Rng trng(93);
    for (int step = 0; step < 25000; ++step) {
        Tensor targets = Tensor::zeros({1, m});
        for (double& v : targets.data) v = pool[trng.uniform_index(pool.size())];
        Tape tape;
        critic.net.zero_grad();
        tape.backward(distill_loss_node(tape, critic, s, a, targets, q, kappa, trng, false));
        adam_step(opt, critic.net);
    }

    Rng erng(94);
    std::vector<double> mean_sorted(m, 0.0);
    const int reps = 400;
    const std::vector<double> zero = {0.0};
    for (int rep = 0; rep < reps; ++rep) {
        std::vector<double> xs(m);
        for (double& v : xs) v = erng.normal();
        std::vector<double> zs = main_critic_samples(critic, zero, zero, xs);
        std::sort(zs.begin(), zs.end());
        for (std::size_t i = 0; i < m; ++i) mean_sorted[i] += zs[i] / reps;
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (q.levels[i] < 0.1 || q.levels[i] > 0.9) continue;
        worst = std::max(worst, std::abs(mean_sorted[i] - normal_cdf_inv(q.levels[i])));
    }
    char detail[120];
    std::snprintf(detail, sizeof(detail), "max |z_i - Phi^-1(tau_i)| = %.4f vs 0.1, kappa = %.2f",
                  worst, kappa);
    const bool pass = worst <= 0.1;
    report(3, pass, "quantile distillation matches the normal quantile function", detail,
           elapsed_s(t0));
    return pass;
}

bool criterion4() {
    const auto t0 = std::chrono::steady_clock::now();
    PipelineConfig pc;
    pc.variant = Variant::DFC;
    pc.seed = 2024;
    const PipelineResult r = run_critic_pipeline(pc, work_root() / "pipeline_dfc");

    double final_worst = 0.0;
    for (double v : r.epoch_probe_w1.back()) final_worst = std::max(final_worst, v);
    const std::size_t e = r.epoch_max_w1.size();
    const bool non_increasing = e >= 3 && r.epoch_max_w1[e - 2] <= r.epoch_max_w1[e - 3] &&
                                r.epoch_max_w1[e - 1] <= r.epoch_max_w1[e - 2];
    char detail[200];
    std::snprintf(detail, sizeof(detail),
                  "final max W1 = %.4f vs 0.1; last 3 epochs max W1 = %.4f, %.4f, %.4f", final_worst,
                  r.epoch_max_w1[e - 3], r.epoch_max_w1[e - 2], r.epoch_max_w1[e - 1]);
    const bool pass = final_worst <= 0.1 && non_increasing;
    report(4, pass, "two-stage critic reaches the distributional Bellman fixed point", detail,
           elapsed_s(t0));
    return pass;
}

bool criterion5() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto data = load_dataset(maze_dataset_path());
    Rng init(55);
    BcFlowPolicy bc = BcFlowPolicy::init(2, 2, {64, 64}, 10, init);
    AdamState opt = AdamState::init(bc.field.net, 1e-3);
    Rng trng(56);
    const std::size_t batch = 64;
    for (int step = 0; step < 12000; ++step) {
        Tensor states = Tensor::zeros({batch, 2});
        Tensor actions = Tensor::zeros({batch, 2});
        for (std::size_t i = 0; i < batch; ++i) {
            const Transition& tr = data[trng.uniform_index(data.size())];
            states.at(i, 0) = tr.state[0];
            states.at(i, 1) = tr.state[1];
            actions.at(i, 0) = tr.action[0];
            actions.at(i, 1) = tr.action[1];
        }
        Tape tape;
        bc.field.net.zero_grad();
        tape.backward(bc_flow_loss_node(tape, bc, states, actions, trng));
        adam_step(opt, bc.field.net);
    }

    // Scripted mode means at the canonical start state.
    TwoGoalMaze env;
    const std::vector<double> start = {0.0, -0.6};
    MazeWaypointPolicy left(env.layout(), true, 0.05);
    MazeWaypointPolicy right(env.layout(), false, 0.05);
    Rng prng(57);
    std::vector<double> mean_l(2, 0.0), mean_r(2, 0.0);
    for (int i = 0; i < 2000; ++i) {
        const auto al = left.act(start, prng);
        const auto ar = right.act(start, prng);
        for (int j = 0; j < 2; ++j) {
            mean_l[j] += al[j] / 2000.0;
            mean_r[j] += ar[j] / 2000.0;
        }
    }

    Rng srng(58);
    std::vector<std::vector<double>> samples;
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> eps = {srng.normal(), srng.normal()};
        samples.push_back(bc_flow_sample(bc, start, eps));
    }
    auto cl = testsupport::two_means(samples, mean_l, mean_r);
    const double frac_a = double(cl.count_a) / 1000.0;
    const double frac_b = double(cl.count_b) / 1000.0;
    double dl = 0.0, dr = 0.0;
    for (int j = 0; j < 2; ++j) {
        dl += (cl.center_a[j] - mean_l[j]) * (cl.center_a[j] - mean_l[j]);
        dr += (cl.center_b[j] - mean_r[j]) * (cl.center_b[j] - mean_r[j]);
    }
    dl = std::sqrt(dl);
    dr = std::sqrt(dr);
    char detail[200];
    std::snprintf(detail, sizeof(detail),
                  "mode shares %.2f / %.2f (need >= 0.30); center offsets %.3f / %.3f (need <= 0.1)",
                  frac_a, frac_b, dl, dr);
    const bool pass = frac_a >= 0.30 && frac_b >= 0.30 && dl <= 0.1 && dr <= 0.1;
    report(5, pass, "BC flow keeps both action modes at the maze start", detail, elapsed_s(t0));
    return pass;
}

bool criterion6(bool share_online_runs) {
    const auto t0 = std::chrono::steady_clock::now();
    double dfc_mean = 0.0, fql_mean = 0.0;
    bool ran_clean = true;
    std::string per_seed;
    for (std::uint64_t seed : kSeeds) {
        try {
            const TrainResult& d = cached_run(Variant::DFC, seed, share_online_runs);
            const TrainResult& f = cached_run(Variant::FQL, seed, share_online_runs);
            dfc_mean += d.final_offline_score / kSeeds.size();
            fql_mean += f.final_offline_score / kSeeds.size();
            per_seed += " " + std::to_string(d.final_offline_score);
        } catch (const std::exception& e) {
            ran_clean = false;
            std::printf("  run aborted: %s\n", e.what());
            break;
        }
    }
    char detail[200];
    std::snprintf(detail, sizeof(detail),
                  "DFC mean %.3f (per seed:%s) vs threshold 0.8; FQL mean %.3f, margin -0.05",
                  dfc_mean, per_seed.c_str(), fql_mean);
    const bool pass = ran_clean && dfc_mean >= 0.8 && dfc_mean >= fql_mean - 0.05;
    report(6, pass, "offline DFC solves the maze and is non-inferior to FQL", detail,
           elapsed_s(t0));
    return pass;
}

bool criterion7() {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    std::string detail = "per-seed offline->online:";
    for (Variant v : {Variant::DFC, Variant::FQL}) {
        for (std::uint64_t seed : kSeeds) {
            const TrainResult& r = cached_run(v, seed, /*with_online=*/true);
            char buf[80];
            std::snprintf(buf, sizeof(buf), " %s/%llu %.2f->%.2f", variant_name(v).c_str(),
                          static_cast<unsigned long long>(seed), r.final_offline_score,
                          r.final_online_score);
            detail += buf;
            if (!(r.final_online_score >= r.final_offline_score - 0.05)) pass = false;
        }
    }
    report(7, pass, "online fine-tuning never drops the offline score by more than 0.05", detail,
           elapsed_s(t0));
    return pass;
}

bool criterion8() {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = true;
    std::string detail;

    // DC variant on the criterion-4 setup, looser threshold.
    try {
        PipelineConfig pc;
        pc.variant = Variant::DC;
        pc.seed = 2025;
        const PipelineResult r = run_critic_pipeline(pc, work_root() / "pipeline_dc");
        char buf[80];
        std::snprintf(buf, sizeof(buf), "DC final max W1 %.4f vs 0.15;", r.final_max_w1);
        detail += buf;
        if (r.final_max_w1 > 0.15) pass = false;
    } catch (const std::exception& e) {
        detail += std::string("DC aborted: ") + e.what() + ";";
        pass = false;
    }

    // FC variant completes 5k steps on the chain; gradient-norm variance is
    // logged across seeds, not asserted.
    std::vector<double> fc_norms, dfc_norms;
    for (std::uint64_t seed : {501, 502, 503}) {
        for (Variant v : {Variant::FC, Variant::DFC}) {
            AgentConfig cfg;
            cfg.variant = v;
            cfg.env = "chain";
            cfg.seed = seed;
            cfg.m_samples = 8;
            cfg.batch_size = 32;
            cfg.hidden = {64, 64};
            cfg.gamma = 0.9;
            cfg.offline_steps = 5000;
            cfg.online_steps = 0;
            cfg.eval_interval = 2500;
            cfg.eval_episodes = 10;
            cfg.dataset = chain_dataset_path().string();
            try {
                const TrainResult r =
                    train(cfg, work_root() / ("fc_chain_" + variant_name(v) + std::to_string(seed)));
                double mean_norm = 0.0;
                for (const MetricsRow& row : r.rows)
                    if (row.actor_grad_norm) mean_norm += *row.actor_grad_norm / r.rows.size();
                (v == Variant::FC ? fc_norms : dfc_norms).push_back(mean_norm);
            } catch (const std::exception& e) {
                detail += std::string(" ") + variant_name(v) + " aborted: " + e.what() + ";";
                if (v == Variant::FC) pass = false;
            }
        }
    }
    auto variance = [](const std::vector<double>& xs) {
        double m = 0.0, v = 0.0;
        for (double x : xs) m += x / xs.size();
        for (double x : xs) v += (x - m) * (x - m) / xs.size();
        return v;
    };
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  " FC actor-grad-norm seed variance %.3e (DFC %.3e; logged, not asserted)",
                  variance(fc_norms), variance(dfc_norms));
    detail += buf;
    report(8, pass, "ablations: DC reaches the fixed point, FC runs with variance logged", detail,
           elapsed_s(t0));
    return pass;
}

bool criterion9() {
    const auto t0 = std::chrono::steady_clock::now();
    AgentConfig cfg = endtoend_config(Variant::DFC, 999, 1000);
    cfg.offline_steps = 2000;
    cfg.eval_interval = 500;
    cfg.eval_episodes = 10;
    const TrainResult r1 = train(cfg, work_root() / "det_a");
    const TrainResult r2 = train(cfg, work_root() / "det_b");
    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    };
    const std::string m1 = slurp(r1.metrics_path), m2 = slurp(r2.metrics_path);
    const bool metrics_equal = !m1.empty() && m1 == m2;
    const bool ckpt_equal = slurp(r1.checkpoint_path) == slurp(r2.checkpoint_path);
    char detail[120];
    std::snprintf(detail, sizeof(detail), "metrics bytes equal: %s; checkpoint bytes equal: %s",
                  metrics_equal ? "yes" : "no", ckpt_equal ? "yes" : "no");
    const bool pass = metrics_equal && ckpt_equal;
    report(9, pass, "same seed reproduces the metrics file bit for bit", detail, elapsed_s(t0));
    return pass;
}

}  // namespace

int main(int argc, char** argv) {
    const int which = argc > 1 ? std::atoi(argv[1]) : 0;
    int failures = 0;
    auto run = [&](int k, auto fn) {
        if (which == 0 || which == k)
            if (!fn()) failures += 1;
    };
    run(1, criterion1);
    run(2, criterion2);
    run(3, criterion3);
    run(4, criterion4);
    run(5, criterion5);
    run(6, [&] { return criterion6(/*share_online_runs=*/which == 0); });
    run(7, criterion7);
    run(8, criterion8);
    run(9, criterion9);
    return failures;
}
