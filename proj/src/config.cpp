#include "flowrl/config.hpp"

#include <fstream>
#include <sstream>

#include "flowrl/errors.hpp"

namespace flowrl {

Variant parse_variant(const std::string& s) {
    if (s == "dfc" || s == "DFC") return Variant::DFC;
    if (s == "fc" || s == "FC") return Variant::FC;
    if (s == "dc" || s == "DC") return Variant::DC;
    if (s == "fql" || s == "FQL") return Variant::FQL;
    throw ConfigError("unknown variant: " + s);
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::DFC: return "dfc";
        case Variant::FC: return "fc";
        case Variant::DC: return "dc";
        case Variant::FQL: return "fql";
    }
    return "?";
}

void AgentConfig::validate() const {
    if (env != "twogoal" && env != "chain") throw ConfigError("env must be twogoal or chain");
    if (m_samples == 0) throw ConfigError("m_samples must be >= 1");
    if (kappa <= 0.0) throw ConfigError("kappa must be > 0");
    if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("gamma must be in [0,1)");
    if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
    if (delta < 0.0) throw ConfigError("delta must be >= 0");
    for (double lr : {lr_flow_critic, lr_main_critic, lr_actor, lr_bc_flow})
        if (lr <= 0.0) throw ConfigError("learning rates must be > 0");
    if (ema_coeff <= 0.0 || ema_coeff > 1.0) throw ConfigError("ema_coeff must be in (0,1]");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (flow_steps < 1) throw ConfigError("flow_steps must be >= 1");
    if (eval_interval == 0) throw ConfigError("eval_interval must be >= 1");
    if (eval_episodes == 0) throw ConfigError("eval_episodes must be >= 1");
    if (hidden.empty()) throw ConfigError("hidden layer list must not be empty");
    if (buffer_capacity == 0) throw ConfigError("buffer_capacity must be >= 1");
}

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::string item;
    std::istringstream ss(s);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(std::stoul(item));
    }
    return out;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("expected boolean, got: " + s);
}

}  // namespace

void AgentConfig::apply_line(const std::string& key, const std::string& value) {
    try {
        if (key == "variant") variant = parse_variant(value);
        else if (key == "env") env = value;
        else if (key == "seed") seed = std::stoull(value);
        else if (key == "m_samples") m_samples = std::stoul(value);
        else if (key == "kappa") kappa = std::stod(value);
        else if (key == "gamma") gamma = std::stod(value);
        else if (key == "alpha") alpha = std::stod(value);
        else if (key == "delta") delta = std::stod(value);
        else if (key == "lr_flow_critic") lr_flow_critic = std::stod(value);
        else if (key == "lr_main_critic") lr_main_critic = std::stod(value);
        else if (key == "lr_actor") lr_actor = std::stod(value);
        else if (key == "lr_bc_flow") lr_bc_flow = std::stod(value);
        else if (key == "ema_coeff") ema_coeff = std::stod(value);
        else if (key == "batch_size") batch_size = std::stoul(value);
        else if (key == "flow_steps") flow_steps = std::stoi(value);
        else if (key == "offline_steps") offline_steps = std::stoul(value);
        else if (key == "online_steps") online_steps = std::stoul(value);
        else if (key == "eval_interval") eval_interval = std::stoul(value);
        else if (key == "eval_episodes") eval_episodes = std::stoul(value);
        else if (key == "hidden") hidden = parse_size_list(value);
        else if (key == "critic_noise_grid") critic_noise_grid = parse_bool(value);
        else if (key == "buffer_capacity") buffer_capacity = std::stoul(value);
        else if (key == "dataset") dataset = value;
        else throw ConfigError("unknown config key: " + key);
    } catch (const std::invalid_argument&) {
        throw ConfigError("bad value for " + key + ": " + value);
    } catch (const std::out_of_range&) {
        throw ConfigError("value out of range for " + key + ": " + value);
    }
}

AgentConfig AgentConfig::from_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path.string());
    AgentConfig c;
    std::string line;
    while (std::getline(f, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value': " + t);
        c.apply_line(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    c.validate();
    return c;
}

void AgentConfig::save(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw StateError("cannot write config file: " + path.string());
    f << "variant = " << variant_name(variant) << "\n";
    f << "env = " << env << "\n";
    f << "seed = " << seed << "\n";
    f << "m_samples = " << m_samples << "\n";
    f << "kappa = " << kappa << "\n";
    f << "gamma = " << gamma << "\n";
    f << "alpha = " << alpha << "\n";
    f << "delta = " << delta << "\n";
    f << "lr_flow_critic = " << lr_flow_critic << "\n";
    f << "lr_main_critic = " << lr_main_critic << "\n";
    f << "lr_actor = " << lr_actor << "\n";
    f << "lr_bc_flow = " << lr_bc_flow << "\n";
    f << "ema_coeff = " << ema_coeff << "\n";
    f << "batch_size = " << batch_size << "\n";
    f << "flow_steps = " << flow_steps << "\n";
    f << "offline_steps = " << offline_steps << "\n";
    f << "online_steps = " << online_steps << "\n";
    f << "eval_interval = " << eval_interval << "\n";
    f << "eval_episodes = " << eval_episodes << "\n";
    f << "hidden = ";
    for (std::size_t i = 0; i < hidden.size(); ++i) f << (i ? "," : "") << hidden[i];
    f << "\n";
    f << "critic_noise_grid = " << (critic_noise_grid ? "true" : "false") << "\n";
    f << "buffer_capacity = " << buffer_capacity << "\n";
    if (!dataset.empty()) f << "dataset = " << dataset << "\n";
}

}  // namespace flowrl
