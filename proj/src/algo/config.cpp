#include "dhmbpo/algo/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>

#include "dhmbpo/core/error.hpp"

namespace dhmbpo::algo {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    require(ec == std::errc() && ptr == t.data() + t.size() && !t.empty(),
            "config: '" + key + "' expects a non-negative integer, got '" + text + "'");
    return v;
}

double parse_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    try {
        std::size_t used = 0;
        const double v = std::stod(t, &used);
        if (used == t.size()) return v;
    } catch (const std::exception&) {
    }
    throw ContractViolation("config: '" + key + "' expects a number, got '" + text + "'");
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& text) {
    std::vector<std::size_t> out;
    for (const auto& part : split(text, ',')) out.push_back(parse_size(key, part));
    return out;
}

std::vector<double> parse_doubles(const std::string& key, const std::string& text) {
    std::vector<double> out;
    for (const auto& part : split(text, ',')) out.push_back(parse_double(key, part));
    return out;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        if constexpr (std::is_floating_point_v<T>)
            out += fmt(v[i]);
        else
            out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace

std::string Variant::name() const { return std::to_string(dr_horizon) + "," + std::to_string(tr_horizon); }

Variant parse_variant(const std::string& text) {
    const auto parts = split(text, ',');
    require(parts.size() == 2, "variant must be 'D,T', got '" + text + "'");
    return {parse_size("variant D", parts[0]), parse_size("variant T", parts[1])};
}

void AlgoConfig::set(const std::string& raw_key, const std::string& value) {
    const std::string key = trim(raw_key);
    const std::map<std::string, std::function<void()>> setters{
        {"algo.variant", [&] { variant = parse_variant(value); }},
        {"algo.gamma", [&] { gamma = parse_double(key, value); }},
        {"algo.seed_steps", [&] { seed_steps = parse_size(key, value); }},
        {"algo.batch_size", [&] { batch_size = parse_size(key, value); }},
        {"algo.utd", [&] { utd = parse_size(key, value); }},
        {"algo.iterations_per_dr", [&] { iterations_per_dr = parse_size(key, value); }},
        {"algo.dr_starts", [&] { dr_starts = parse_size(key, value); }},
        {"algo.target_momentum", [&] { target_momentum = parse_double(key, value); }},
        {"algo.actor_lr", [&] { actor_lr = parse_double(key, value); }},
        {"algo.critic_lr", [&] { critic_lr = parse_double(key, value); }},
        {"algo.alpha_lr", [&] { alpha_lr = parse_double(key, value); }},
        {"algo.alpha_init", [&] { alpha_init = parse_double(key, value); }},
        {"algo.replay_capacity", [&] { replay_capacity = parse_size(key, value); }},
        {"algo.q_bound_eta", [&] { q_bound_eta = parse_double(key, value); }},
        {"algo.grad_ceiling", [&] { grad_ceiling = parse_double(key, value); }},
        {"algo.total_steps", [&] { total_steps = parse_size(key, value); }},
        {"algo.eval_interval", [&] { eval_interval = parse_size(key, value); }},
        {"algo.eval_episodes", [&] { eval_episodes = parse_size(key, value); }},
        {"actor.hidden", [&] { actor_hidden = parse_sizes(key, value); }},
        {"critic.hidden", [&] { critic_hidden = parse_sizes(key, value); }},
        {"critic.members", [&] { critic_members = parse_size(key, value); }},
        {"critic.dropout", [&] { critic_dropout = parse_double(key, value); }},
        {"model.members", [&] { model.members = parse_size(key, value); }},
        {"model.hidden", [&] { model.hidden = parse_sizes(key, value); }},
        {"model.dropout", [&] { model.dropout = parse_doubles(key, value); }},
        {"model.decay", [&] { model.decay = parse_doubles(key, value); }},
        {"model.learning_rate", [&] { model.learning_rate = parse_double(key, value); }},
        {"model.batch_size", [&] { model.batch_size = parse_size(key, value); }},
        {"model.holdout_ratio", [&] { model.holdout_ratio = parse_double(key, value); }},
        {"model.max_holdout", [&] { model.max_holdout = parse_size(key, value); }},
        {"model.patience_base", [&] { model.patience_base = parse_double(key, value); }},
        {"model.significance", [&] { model.significance = parse_double(key, value); }},
        {"model.max_epochs", [&] { model.max_epochs = parse_size(key, value); }},
        {"model.max_batches_per_epoch", [&] { model.max_batches_per_epoch = parse_size(key, value); }},
    };
    if (key.rfind("task.", 0) == 0) {
        task_overrides[key.substr(5)] = parse_double(key, value);
        return;
    }
    const auto it = setters.find(key);
    require(it != setters.end(), "config: unknown key '" + key + "'");
    it->second();
}

std::map<std::string, std::string> AlgoConfig::entries() const {
    std::map<std::string, std::string> e{
        {"algo.variant", variant.name()},
        {"algo.gamma", fmt(gamma)},
        {"algo.seed_steps", std::to_string(seed_steps)},
        {"algo.batch_size", std::to_string(batch_size)},
        {"algo.utd", std::to_string(utd)},
        {"algo.iterations_per_dr", std::to_string(iterations_per_dr)},
        {"algo.dr_starts", std::to_string(dr_starts)},
        {"algo.target_momentum", fmt(target_momentum)},
        {"algo.actor_lr", fmt(actor_lr)},
        {"algo.critic_lr", fmt(critic_lr)},
        {"algo.alpha_lr", fmt(alpha_lr)},
        {"algo.alpha_init", fmt(alpha_init)},
        {"algo.replay_capacity", std::to_string(replay_capacity)},
        {"algo.q_bound_eta", fmt(q_bound_eta)},
        {"algo.grad_ceiling", fmt(grad_ceiling)},
        {"algo.total_steps", std::to_string(total_steps)},
        {"algo.eval_interval", std::to_string(eval_interval)},
        {"algo.eval_episodes", std::to_string(eval_episodes)},
        {"actor.hidden", join(actor_hidden)},
        {"critic.hidden", join(critic_hidden)},
        {"critic.members", std::to_string(critic_members)},
        {"critic.dropout", fmt(critic_dropout)},
        {"model.members", std::to_string(model.members)},
        {"model.hidden", join(model.hidden)},
        {"model.dropout", join(model.dropout)},
        {"model.decay", join(model.decay)},
        {"model.learning_rate", fmt(model.learning_rate)},
        {"model.batch_size", std::to_string(model.batch_size)},
        {"model.holdout_ratio", fmt(model.holdout_ratio)},
        {"model.max_holdout", std::to_string(model.max_holdout)},
        {"model.patience_base", fmt(model.patience_base)},
        {"model.significance", fmt(model.significance)},
        {"model.max_epochs", std::to_string(model.max_epochs)},
        {"model.max_batches_per_epoch", std::to_string(model.max_batches_per_epoch)},
    };
    for (const auto& [k, v] : task_overrides) e["task." + k] = fmt(v);
    return e;
}

void AlgoConfig::validate() const {
    require(gamma >= 0 && gamma < 1, "config: gamma must lie in [0,1)");
    require(utd >= 1, "config: utd must be a positive integer");
    require(batch_size > 0, "config: batch_size must be positive");
    require(iterations_per_dr > 0, "config: iterations_per_dr must be positive");
    require(!variant.dr_horizon || dr_starts > 0, "config: dr_starts must be positive when D > 0");
    require(target_momentum >= 0 && target_momentum <= 1, "config: target_momentum outside [0,1]");
    require(alpha_init > 0, "config: alpha_init must be positive");
    require(q_bound_eta >= 0 && q_bound_eta <= 1, "config: q_bound_eta outside [0,1]");
    require(grad_ceiling > 0, "config: grad_ceiling must be positive");
    require(eval_interval > 0 && eval_episodes > 0, "config: evaluation cadence must be positive");
    require(critic_members >= 2, "config: the randomized target min needs at least 2 critics");
    require(!actor_hidden.empty() && !critic_hidden.empty() && !model.hidden.empty(), "config: empty hidden layers");
    require(model.dropout.empty() || model.dropout.size() == model.hidden.size(),
            "config: model.dropout needs one entry per hidden layer");
    require(model.decay.empty() || model.decay.size() == model.hidden.size() + 1,
            "config: model.decay needs one entry per linear layer");
    require(replay_capacity > 0, "config: replay capacity must be positive");
}

AlgoConfig default_config() { return AlgoConfig{}; }

AlgoConfig desk_config() {
    AlgoConfig c;
    c.actor_hidden = {64, 64};
    c.critic_hidden = {64, 64};
    c.model.hidden = {64, 64};
    c.model.dropout = {0.0075, 0.005};
    c.model.decay = {0.00025, 0.0005, 0.001};
    c.model.max_epochs = 8;
    c.model.max_batches_per_epoch = 16;
    c.model.max_holdout = 1000;
    c.dr_starts = 256;
    c.batch_size = 128;
    return c;
}

AlgoConfig preset(const std::string& name) {
    if (name == "default") return default_config();
    if (name == "desk") return desk_config();
    throw ContractViolation("unknown preset '" + name + "' (expected default or desk)");
}

}  // namespace dhmbpo::algo
