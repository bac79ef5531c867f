#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "flowrl/agent.hpp"
#include "flowrl/config.hpp"
#include "flowrl/envs.hpp"
#include "flowrl/pipeline.hpp"
#include "flowrl/plot.hpp"

namespace fs = std::filesystem;
using namespace flowrl;

namespace {

fs::path output_root() {
    if (const char* env = std::getenv("FLOWRL_OUT")) return fs::path(env);
    return fs::path("runs");
}

int cmd_gen_data(const std::string& env_name, std::size_t n, std::uint64_t seed,
                 std::string out_file) {
    std::unique_ptr<Env> env = make_env(env_name);
    std::vector<Transition> data;
    std::string mix_desc;
    if (env_name == "twogoal") {
        const auto& maze = dynamic_cast<const TwoGoalMaze&>(*env);
        MazeWaypointPolicy left(maze.layout(), true, 0.05);
        MazeWaypointPolicy right(maze.layout(), false, 0.05);
        UniformPolicy noise(env->action_dim());
        BehaviorMix mix;
        mix.entries = {{&left, 0.45}, {&right, 0.45}, {&noise, 0.10}};
        data = generate_dataset(*env, mix, n, seed);
        mix_desc = "left:0.45 right:0.45 uniform:0.10";
    } else {
        ChainScriptedPolicy behavior(0.6);
        BehaviorMix mix;
        mix.entries = {{&behavior, 1.0}};
        data = generate_dataset(*env, mix, n, seed);
        mix_desc = "chain-scripted p_low:0.6";
    }
    if (out_file.empty()) {
        fs::create_directories(output_root());
        out_file = (output_root() / (env_name + "_" + std::to_string(seed) + ".ds")).string();
    }
    save_dataset(out_file, data, env_name, mix_desc, seed);
    std::cout << "wrote " << data.size() << " transitions to " << out_file << "\n";
    return 0;
}

int cmd_train(const AgentConfig& cfg, fs::path out_dir) {
    if (out_dir.empty())
        out_dir = output_root() /
                  (variant_name(cfg.variant) + "_" + cfg.env + "_" + std::to_string(cfg.seed));
    const TrainResult r = train(cfg, out_dir);
    std::cout << "metrics:    " << r.metrics_path << "\n";
    std::cout << "checkpoint: " << r.checkpoint_path << "\n";
    if (!std::isnan(r.final_offline_score))
        std::cout << "final offline score (mean of last 3 evals): " << r.final_offline_score
                  << "\n";
    if (!std::isnan(r.final_online_score))
        std::cout << "final online score  (mean of last 3 evals): " << r.final_online_score
                  << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& env_name, std::size_t episodes,
             std::uint64_t seed, bool verbose) {
    std::unique_ptr<Env> env = make_env(env_name);
    const Checkpoint ck = Checkpoint::load(checkpoint);
    const MlpParams* net = ck.find("onestep");
    if (!net) {
        std::cerr << "checkpoint has no one-step policy\n";
        return 1;
    }
    OneStepPolicy pi;
    pi.net = *net;
    pi.state_dim = env->state_dim();
    pi.action_dim = env->action_dim();
    if (pi.net.in_dim() != pi.state_dim + pi.action_dim || pi.net.out_dim() != pi.action_dim) {
        std::cerr << "checkpoint policy dims do not match env " << env_name << "\n";
        return 1;
    }
    const EvalResult r = evaluate_policy(pi, *env, episodes, seed);
    std::cout << "success_rate " << r.success_rate << "\n";
    std::cout << "mean_return  " << r.mean_return << "\n";
    if (verbose)
        for (std::size_t e = 0; e < r.episode_returns.size(); ++e)
            std::cout << "episode " << e << ": return " << r.episode_returns[e] << " success "
                      << int(r.episode_success[e]) << "\n";
    return 0;
}

int cmd_plot(const std::string& metrics, fs::path out_dir) {
    if (out_dir.empty()) out_dir = fs::path(metrics).parent_path();
    const auto files = emit_plots(metrics, out_dir);
    for (const auto& f : files) std::cout << "wrote " << f << "\n";
    return 0;
}

int cmd_oracle_check(const std::string& variant, std::size_t steps, std::uint64_t seed,
                     double kappa, std::size_t m, fs::path out_dir, double threshold) {
    PipelineConfig pc;
    pc.variant = parse_variant(variant);
    pc.steps = steps;
    pc.seed = seed;
    pc.kappa = kappa;
    pc.m = m;
    if (out_dir.empty()) out_dir = output_root() / ("oracle_check_" + variant);
    const PipelineResult r = run_critic_pipeline(pc, out_dir);
    std::cout << "epoch max-W1:";
    for (double v : r.epoch_max_w1) std::cout << " " << v;
    std::cout << "\nfinal per-probe W1:\n";
    for (std::size_t k = 0; k < r.probe_names.size(); ++k)
        std::cout << "  " << r.probe_names[k] << ": " << r.epoch_probe_w1.back()[k] << "\n";
    const bool pass = r.final_max_w1 <= threshold;
    std::cout << (pass ? "PASS" : "FAIL") << " (max W1 " << r.final_max_w1 << " vs threshold "
              << threshold << ")\n";
    return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowrl: distributional flow critics and flow policies on desk-scale RL tasks"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate an offline dataset");
    std::string gen_env = "twogoal";
    std::size_t gen_n = 20000;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    gen->add_option("--env", gen_env, "twogoal | chain");
    gen->add_option("--n", gen_n, "number of transitions");
    gen->add_option("--seed", gen_seed, "dataset seed");
    gen->add_option("--out", gen_out, "output file (default <out-root>/<env>_<seed>.ds)");

    // train
    auto* tr = app.add_subcommand("train", "run offline (+ online) training");
    std::string tr_config, tr_variant, tr_dataset, tr_env;
    std::int64_t tr_seed = -1;
    std::string tr_out;
    tr->add_option("--config", tr_config, "config file (key = value lines)");
    tr->add_option("--variant", tr_variant, "dfc | fc | dc | fql (overrides config)");
    tr->add_option("--seed", tr_seed, "seed (overrides config)");
    tr->add_option("--env", tr_env, "env (overrides config)");
    tr->add_option("--dataset", tr_dataset, "dataset path (overrides config)");
    tr->add_option("--out-dir", tr_out, "output directory");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpointed one-step policy");
    std::string ev_ckpt, ev_env = "twogoal";
    std::size_t ev_episodes = 50;
    std::uint64_t ev_seed = 0;
    bool ev_verbose = false;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--env", ev_env, "twogoal | chain");
    ev->add_option("--episodes", ev_episodes, "evaluation episodes");
    ev->add_option("--seed", ev_seed, "evaluation seed");
    ev->add_flag("--verbose", ev_verbose, "per-episode results");

    // plot
    auto* pl = app.add_subcommand("plot", "render SVG learning curves from a metrics file");
    std::string pl_metrics, pl_out;
    pl->add_option("--metrics", pl_metrics, "metrics CSV")->required();
    pl->add_option("--out-dir", pl_out, "output directory (default: next to the CSV)");

    // oracle-check
    auto* oc = app.add_subcommand("oracle-check",
                                  "chain critic pipeline vs the Monte-Carlo return oracle");
    std::string oc_variant = "dfc";
    std::size_t oc_steps = 6000, oc_m = 16;
    std::uint64_t oc_seed = 0;
    double oc_kappa = 0.05, oc_threshold = 0.1;
    std::string oc_out;
    oc->add_option("--variant", oc_variant, "dfc | dc");
    oc->add_option("--steps", oc_steps, "gradient steps");
    oc->add_option("--seed", oc_seed, "seed");
    oc->add_option("--kappa", oc_kappa, "quantile Huber kappa");
    oc->add_option("--m", oc_m, "samples per target set");
    oc->add_option("--threshold", oc_threshold, "max-W1 pass threshold");
    oc->add_option("--out-dir", oc_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_env, gen_n, gen_seed, gen_out);
        if (tr->parsed()) {
            AgentConfig cfg =
                tr_config.empty() ? AgentConfig{} : AgentConfig::from_file(tr_config);
            if (!tr_variant.empty()) cfg.variant = parse_variant(tr_variant);
            if (tr_seed >= 0) cfg.seed = static_cast<std::uint64_t>(tr_seed);
            if (!tr_env.empty()) cfg.env = tr_env;
            if (!tr_dataset.empty()) cfg.dataset = tr_dataset;
            cfg.validate();
            return cmd_train(cfg, tr_out);
        }
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_env, ev_episodes, ev_seed, ev_verbose);
        if (pl->parsed()) return cmd_plot(pl_metrics, pl_out);
        if (oc->parsed())
            return cmd_oracle_check(oc_variant, oc_steps, oc_seed, oc_kappa, oc_m, oc_out,
                                    oc_threshold);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
