#include "flowrl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "flowrl/errors.hpp"
#include "flowrl/mathutil.hpp"

namespace flowrl {

// ---- Chain MDP ----------------------------------------------------------

void DiscreteLaw::validate() const {
    if (atoms.empty()) throw ContractError("discrete law: no atoms");
    double total = 0.0;
    for (const auto& [v, p] : atoms) {
        if (p < 0.0 || !std::isfinite(v)) throw ContractError("discrete law: bad atom");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ContractError("discrete law: probabilities must sum to 1");
}

double DiscreteLaw::sample(Rng& rng) const {
    double u = rng.uniform();
    for (const auto& [v, p] : atoms) {
        if (u < p) return v;
        u -= p;
    }
    return atoms.back().first;
}

ChainSpec ChainSpec::default_spec() {
    ChainSpec s;
    s.n_states = 3;
    s.reward_law = {
        {{{{0.0, 0.5}, {1.0, 0.5}}}, {{{0.5, 1.0}}}},
        {{{{1.0, 1.0}}}, {{{0.0, 0.5}, {1.0, 0.5}}}},
        {{{{0.0, 0.7}, {1.0, 0.3}}}, {{{1.0, 1.0}}}},
    };
    return s;
}

ChainMdp::ChainMdp(ChainSpec spec) : spec_(std::move(spec)) {
    if (spec_.n_states == 0) throw ContractError("chain: need at least one state");
    if (spec_.reward_law.size() != spec_.n_states)
        throw ContractError("chain: reward law must cover every state");
    for (const auto& per_state : spec_.reward_law) {
        if (per_state.size() != 2) throw ContractError("chain: two action bins per state");
        for (const DiscreteLaw& law : per_state) law.validate();
    }
}

std::vector<double> ChainMdp::encode(std::size_t s) const {
    std::vector<double> obs(spec_.n_states, 0.0);
    if (s < spec_.n_states) obs[s] = 1.0;
    return obs;  // all-zero for the terminal pseudo-state
}

std::vector<double> ChainMdp::reset(Rng&) {
    pos_ = 0;
    terminal_ = false;
    return encode(pos_);
}

void ChainMdp::reset_to(std::span<const double> state) {
    if (state.size() != spec_.n_states) throw ShapeError("chain reset_to: state dim");
    pos_ = spec_.n_states;  // terminal unless a one-hot bit is found
    for (std::size_t i = 0; i < state.size(); ++i)
        if (state[i] > 0.5) {
            pos_ = i;
            break;
        }
    terminal_ = pos_ >= spec_.n_states;
}

StepResult ChainMdp::step(std::span<const double> raw_action, Rng& rng) {
    if (raw_action.size() != 1) throw ShapeError("chain step: action dim");
    if (raw_action[0] < -1.0 || raw_action[0] > 1.0)
        throw ContractError("chain step: action outside box");
    if (terminal_) throw StateError("chain step: episode already terminal");
    const std::size_t bin = action_bin(raw_action[0]);
    StepResult r;
    r.reward = spec_.reward_law[pos_][bin].sample(rng);
    pos_ += 1;
    r.done = pos_ >= spec_.n_states;
    terminal_ = r.done;
    r.next_state = encode(pos_);
    return r;
}

std::vector<double> ChainMdp::state() const { return encode(pos_); }

std::unique_ptr<Env> ChainMdp::clone() const { return std::make_unique<ChainMdp>(*this); }

// ---- Two-goal maze ------------------------------------------------------

TwoGoalMaze::TwoGoalMaze(MazeLayout layout) : layout_(layout) {
    x_ = layout_.start_x;
    y_ = layout_.start_y;
}

bool TwoGoalMaze::in_goal(double x, double y) const {
    const double r2 = layout_.goal_radius * layout_.goal_radius;
    const double dl = (x - layout_.goal_left_x) * (x - layout_.goal_left_x) +
                      (y - layout_.goal_y) * (y - layout_.goal_y);
    const double dr = (x - layout_.goal_right_x) * (x - layout_.goal_right_x) +
                      (y - layout_.goal_y) * (y - layout_.goal_y);
    return dl <= r2 || dr <= r2;
}

bool TwoGoalMaze::in_obstacle(double x, double y) const {
    return x >= layout_.obstacle_x0 && x <= layout_.obstacle_x1 && y >= layout_.obstacle_y0 &&
           y <= layout_.obstacle_y1;
}

std::vector<double> TwoGoalMaze::reset(Rng& rng) {
    x_ = layout_.start_x + rng.uniform(-layout_.start_jitter, layout_.start_jitter);
    y_ = layout_.start_y + rng.uniform(-layout_.start_jitter, layout_.start_jitter);
    steps_ = 0;
    done_ = false;
    return state();
}

void TwoGoalMaze::reset_to(std::span<const double> state) {
    if (state.size() != 2) throw ShapeError("maze reset_to: state dim");
    x_ = clamp(state[0], -1.0, 1.0);
    y_ = clamp(state[1], -1.0, 1.0);
    steps_ = 0;
    done_ = false;
}

StepResult TwoGoalMaze::step(std::span<const double> raw_action, Rng&) {
    if (raw_action.size() != 2) throw ShapeError("maze step: action dim");
    const double s = action_scale();
    if (std::abs(raw_action[0]) > s + 1e-12 || std::abs(raw_action[1]) > s + 1e-12)
        throw ContractError("maze step: action outside box");
    if (done_) throw StateError("maze step: episode already done");

    const double nx = clamp(x_ + raw_action[0], -1.0, 1.0);
    const double ny = clamp(y_ + raw_action[1], -1.0, 1.0);
    if (!in_obstacle(nx, ny)) {
        x_ = nx;
        y_ = ny;
    }
    steps_ += 1;

    StepResult r;
    const bool success = in_goal(x_, y_);
    r.reward = success ? 0.0 : -1.0;
    r.done = success || steps_ >= layout_.max_steps;
    r.next_state = state();
    done_ = r.done;
    return r;
}

std::vector<double> TwoGoalMaze::state() const { return {x_, y_}; }

std::unique_ptr<Env> TwoGoalMaze::clone() const { return std::make_unique<TwoGoalMaze>(*this); }

MazeWaypointPolicy::MazeWaypointPolicy(const MazeLayout& layout, bool left, double noise)
    : layout_(layout), left_(left), noise_(noise) {}

std::vector<double> MazeWaypointPolicy::act(std::span<const double> state, Rng& rng) {
    const double gx = left_ ? layout_.goal_left_x : layout_.goal_right_x;
    // Corridor x beside the obstacle on this side.
    const double cx = left_ ? layout_.obstacle_x0 - 0.25 : layout_.obstacle_x1 + 0.25;
    double tx, ty;
    if (state[1] < layout_.obstacle_y1 + 0.1 && std::abs(state[0] - cx) > 0.12 &&
        !(left_ ? state[0] < layout_.obstacle_x0 - 0.05 : state[0] > layout_.obstacle_x1 + 0.05)) {
        tx = cx;  // reach the corridor first
        ty = state[1] < layout_.obstacle_y0 ? state[1] : layout_.obstacle_y0 - 0.1;
    } else if (state[1] < layout_.goal_y - 0.05) {
        tx = cx;  // climb the corridor
        ty = layout_.goal_y;
    } else {
        tx = gx;  // head for the goal center
        ty = layout_.goal_y;
    }
    const double scale = 0.2;
    std::vector<double> a = {(tx - state[0]) / scale, (ty - state[1]) / scale};
    for (double& v : a) {
        v += noise_ * rng.normal();
        v = clamp(v, -1.0, 1.0);
    }
    return a;
}

// ---- Datasets -----------------------------------------------------------

std::vector<Transition> generate_dataset(Env& env, const BehaviorMix& mix,
                                         std::size_t n_transitions, std::uint64_t seed) {
    if (mix.entries.empty()) throw ContractError("generate_dataset: empty behavior mix");
    double total_w = 0.0;
    for (const auto& [p, w] : mix.entries) total_w += w;
    if (total_w <= 0.0) throw ContractError("generate_dataset: weights must be positive");

    std::vector<Transition> out;
    out.reserve(n_transitions);
    std::size_t episode = 0;
    while (out.size() < n_transitions) {
        Rng rng(Rng::derive(seed, 0xDA7A, episode));
        double u = rng.uniform() * total_w;
        ActPolicy* policy = mix.entries.back().first;
        for (const auto& [p, w] : mix.entries) {
            if (u < w) {
                policy = p;
                break;
            }
            u -= w;
        }
        std::vector<double> s = env.reset(rng);
        bool done = false;
        while (!done && out.size() < n_transitions) {
            std::vector<double> a = policy->act(s, rng);
            for (double& v : a) v = clamp(v, -1.0, 1.0);
            std::vector<double> raw(a.size());
            for (std::size_t i = 0; i < a.size(); ++i) raw[i] = a[i] * env.action_scale();
            const StepResult r = env.step(raw, rng);
            out.push_back({s, a, r.reward, r.next_state, r.done});
            s = r.next_state;
            done = r.done;
        }
        episode += 1;
    }
    return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<Transition>& data,
                  const std::string& env_name, const std::string& mix_desc, std::uint64_t seed) {
    if (data.empty()) throw ContractError("save_dataset: empty dataset");
    const std::size_t sd = data[0].state.size(), ad = data[0].action.size();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw StateError("save_dataset: cannot open " + path.string());
    f << "flowrl-dataset v1\n"
      << "state_dim " << sd << "\n"
      << "action_dim " << ad << "\n"
      << "count " << data.size() << "\n"
      << "fields state action reward next_state done\n"
      << "data\n";
    auto put = [&](const double* p, std::size_t n) {
        f.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    };
    for (const Transition& t : data) {
        put(t.state.data(), sd);
        put(t.action.data(), ad);
        put(&t.reward, 1);
        put(t.next_state.data(), sd);
        const double d = t.done ? 1.0 : 0.0;
        put(&d, 1);
    }
    std::ofstream meta(path.string() + ".meta");
    meta << "env = " << env_name << "\nmix = " << mix_desc << "\nseed = " << seed
         << "\ncount = " << data.size() << "\n";
}

std::vector<Transition> load_dataset(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw StateError("load_dataset: cannot open " + path.string());
    std::string line;
    std::getline(f, line);
    if (line != "flowrl-dataset v1") throw ParseError("load_dataset: bad magic line");
    std::size_t sd = 0, ad = 0, count = 0;
    while (std::getline(f, line) && line != "data") {
        const auto sp = line.find(' ');
        if (sp == std::string::npos) throw ParseError("load_dataset: malformed header: " + line);
        const std::string key = line.substr(0, sp), val = line.substr(sp + 1);
        if (key == "state_dim") sd = std::stoul(val);
        else if (key == "action_dim") ad = std::stoul(val);
        else if (key == "count") count = std::stoul(val);
        else if (key == "fields") {
            if (val != "state action reward next_state done")
                throw ParseError("load_dataset: unexpected field order");
        } else throw ParseError("load_dataset: unknown header key: " + key);
    }
    if (sd == 0 || count == 0) throw ParseError("load_dataset: incomplete header");
    std::vector<Transition> out(count);
    std::vector<double> rec(sd + ad + 1 + sd + 1);
    for (Transition& t : out) {
        f.read(reinterpret_cast<char*>(rec.data()),
               static_cast<std::streamsize>(rec.size() * sizeof(double)));
        if (!f) throw ParseError("load_dataset: truncated records");
        t.state.assign(rec.begin(), rec.begin() + sd);
        t.action.assign(rec.begin() + sd, rec.begin() + sd + ad);
        t.reward = rec[sd + ad];
        t.next_state.assign(rec.begin() + sd + ad + 1, rec.begin() + sd + ad + 1 + sd);
        t.done = rec[sd + ad + 1 + sd] != 0.0;
    }
    return out;
}

// ---- Replay buffer ------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ContractError("replay buffer: capacity must be >= 1");
}

void ReplayBuffer::preload_offline(const std::vector<Transition>& data) {
    for (const Transition& t : data) {
        append(t);
        offline_count_ = std::min(storage_.size(), offline_count_ + 1);
    }
}

void ReplayBuffer::append(Transition t) {
    if (storage_.size() < capacity_) {
        storage_.push_back(std::move(t));
    } else {
        storage_[next_] = std::move(t);
        next_ = (next_ + 1) % capacity_;
    }
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch_size, Rng& rng) const {
    if (storage_.empty()) throw StateError("replay buffer: sampling from empty buffer");
    std::vector<std::size_t> idx(batch_size);
    for (std::size_t& i : idx) i = rng.uniform_index(storage_.size());
    return idx;
}

std::unique_ptr<Env> make_env(const std::string& name) {
    if (name == "twogoal") return std::make_unique<TwoGoalMaze>();
    if (name == "chain") return std::make_unique<ChainMdp>(ChainSpec::default_spec());
    throw ConfigError("unknown env: " + name);
}

}  // namespace flowrl
