#include <cmath>
#include <mutex>
#include <numbers>

#include "dhmbpo/core/error.hpp"
#include "dhmbpo/envs/task.hpp"

namespace dhmbpo::envs {

void EnvSpec::validate() const {
    require(state_dim > 0 && observation_dim > 0 && action_dim > 0, "EnvSpec '" + id + "': empty dimension");
    require(action_low.size() == action_dim && action_high.size() == action_dim,
            "EnvSpec '" + id + "': action bounds length");
    for (std::size_t i = 0; i < action_dim; ++i)
        require(action_low[i] < action_high[i], "EnvSpec '" + id + "': action low must be below high");
    require(dt > 0, "EnvSpec '" + id + "': dt must be positive");
    require(action_repeat > 0 && episode_length % action_repeat == 0,
            "EnvSpec '" + id + "': episode length must be divisible by action repeat");
    require(reward_low <= reward_high, "EnvSpec '" + id + "': reward range");
}

std::vector<double> Task::observe(std::span<const double> state) const { return {state.begin(), state.end()}; }

std::vector<double> Task::state_from_observation(std::span<const double> observation) const {
    return {observation.begin(), observation.end()};
}

void apply_overrides(std::map<std::string, double>& constants, const std::map<std::string, double>& overrides,
                     const std::string& task_id) {
    for (const auto& [key, value] : overrides) {
        auto it = constants.find(key);
        require(it != constants.end(), "task '" + task_id + "' has no constant '" + key + "'");
        require(std::isfinite(value), "task '" + task_id + "': constant '" + key + "' must be finite");
        it->second = value;
    }
}

namespace {

constexpr double pi = std::numbers::pi;

// theta = 0 is upright; angle grows counter-clockwise.
class PendulumSwingup final : public Task {
public:
    explicit PendulumSwingup(const std::map<std::string, double>& overrides) {
        c_ = {{"mass", 1.0},         {"length", 1.0},           {"gravity", 9.81},   {"damping", 0.05},
              {"max_torque", 2.0},   {"control_cost", 0.01},    {"dt", 0.025},       {"episode_length", 400},
              {"action_repeat", 2},  {"init_velocity", 1.0}};
        apply_overrides(c_, overrides, "pendulum-swingup");
        m_ = c_["mass"];
        l_ = c_["length"];
        g_ = c_["gravity"];
        b_ = c_["damping"];
        umax_ = c_["max_torque"];
        cost_ = c_["control_cost"];
        require(m_ > 0 && l_ > 0 && umax_ > 0 && cost_ >= 0, "pendulum-swingup: invalid constants");
        spec_.id = "pendulum-swingup";
        spec_.state_dim = 2;
        spec_.observation_dim = 3;
        spec_.action_dim = 1;
        spec_.action_low = {-umax_};
        spec_.action_high = {umax_};
        spec_.dt = c_["dt"];
        spec_.episode_length = static_cast<std::size_t>(c_["episode_length"]);
        spec_.action_repeat = static_cast<std::size_t>(c_["action_repeat"]);
        spec_.reward_low = -cost_;
        spec_.reward_high = 1;
        spec_.initial_distribution = "theta ~ U[-pi, pi], omega ~ U[-w0, w0]";
        spec_.validate();
    }

    const EnvSpec& spec() const override { return spec_; }

    std::vector<double> sample_initial_state(Rng& rng) const override {
        const double w0 = c_.at("init_velocity");
        const double theta = rng.uniform(-pi, pi);
        return {theta, rng.uniform(-w0, w0)};
    }

    void derivative(std::span<const double> s, std::span<const double> a, std::span<double> out) const override {
        const double inertia = m_ * l_ * l_;
        out[0] = s[1];
        out[1] = (g_ / l_) * std::sin(s[0]) + (a[0] - b_ * s[1]) / inertia;
    }

    double reward(std::span<const double> s, std::span<const double> a) const override {
        const double u = a[0] / umax_;
        return 0.5 * (1 + std::cos(s[0])) - cost_ * u * u;
    }

    std::vector<double> observe(std::span<const double> s) const override {
        return {std::cos(s[0]), std::sin(s[0]), s[1]};
    }

    std::vector<double> state_from_observation(std::span<const double> o) const override {
        return {std::atan2(o[1], o[0]), o[2]};
    }

    std::map<std::string, double> constants() const override { return c_; }

private:
    std::map<std::string, double> c_;
    EnvSpec spec_;
    double m_, l_, g_, b_, umax_, cost_;
};

// Cart-pole with the pole hanging down at the start; theta = 0 is upright.
// State (x, theta, x_dot, theta_dot).
class CartpoleSwingup final : public Task {
public:
    explicit CartpoleSwingup(const std::map<std::string, double>& overrides) {
        c_ = {{"cart_mass", 1.0},   {"pole_mass", 0.1},     {"half_length", 0.5},  {"gravity", 9.81},
              {"force_scale", 10},  {"dt", 0.01},           {"episode_length", 1000}, {"action_repeat", 2},
              {"init_noise", 0.01}};
        apply_overrides(c_, overrides, "cartpole-swingup");
        mc_ = c_["cart_mass"];
        mp_ = c_["pole_mass"];
        l_ = c_["half_length"];
        g_ = c_["gravity"];
        force_ = c_["force_scale"];
        require(mc_ > 0 && mp_ > 0 && l_ > 0 && force_ > 0, "cartpole-swingup: invalid constants");
        spec_.id = "cartpole-swingup";
        spec_.state_dim = 4;
        spec_.observation_dim = 5;
        spec_.action_dim = 1;
        spec_.action_low = {-1};
        spec_.action_high = {1};
        spec_.dt = c_["dt"];
        spec_.episode_length = static_cast<std::size_t>(c_["episode_length"]);
        spec_.action_repeat = static_cast<std::size_t>(c_["action_repeat"]);
        spec_.reward_low = 0;
        spec_.reward_high = 1;
        spec_.initial_distribution = "x, theta - pi, velocities ~ U[-e, e]";
        spec_.validate();
    }

    const EnvSpec& spec() const override { return spec_; }

    std::vector<double> sample_initial_state(Rng& rng) const override {
        const double e = c_.at("init_noise");
        return {rng.uniform(-e, e), pi + rng.uniform(-e, e), rng.uniform(-e, e), rng.uniform(-e, e)};
    }

    void derivative(std::span<const double> s, std::span<const double> a, std::span<double> out) const override {
        const double total = mc_ + mp_;
        const double sin_t = std::sin(s[1]), cos_t = std::cos(s[1]);
        const double temp = (force_ * a[0] + mp_ * l_ * s[3] * s[3] * sin_t) / total;
        const double theta_acc = (g_ * sin_t - cos_t * temp) / (l_ * (4.0 / 3.0 - mp_ * cos_t * cos_t / total));
        out[0] = s[2];
        out[1] = s[3];
        out[2] = temp - mp_ * l_ * theta_acc * cos_t / total;
        out[3] = theta_acc;
    }

    double reward(std::span<const double> s, std::span<const double> a) const override {
        const double upright = 0.5 * (1 + std::cos(s[1]));
        const double centered = 0.5 * (1 + std::exp(-0.5 * s[0] * s[0]));
        const double small_control = (4 + (1 - a[0] * a[0])) / 5;
        const double small_velocity = 0.5 * (1 + std::exp(-s[3] * s[3] / 50));
        return upright * centered * small_control * small_velocity;
    }

    std::vector<double> observe(std::span<const double> s) const override {
        return {s[0], std::cos(s[1]), std::sin(s[1]), s[2], s[3]};
    }

    std::vector<double> state_from_observation(std::span<const double> o) const override {
        return {o[0], std::atan2(o[2], o[1]), o[3], o[4]};
    }

    std::map<std::string, double> constants() const override { return c_; }

private:
    std::map<std::string, double> c_;
    EnvSpec spec_;
    double mc_, mp_, l_, g_, force_;
};

// Continuous-time mountain car on the landscape h(x) = sin(3x) / 3.
// State (x, v).
class MountainCar final : public Task {
public:
    explicit MountainCar(const std::map<std::string, double>& overrides) {
        c_ = {{"power", 0.0015}, {"gravity", 0.0025}, {"goal", 0.45},          {"control_cost", 0.01},
              {"dt", 1.0},       {"episode_length", 400}, {"action_repeat", 2}};
        apply_overrides(c_, overrides, "mountain-car");
        spec_.id = "mountain-car";
        spec_.state_dim = 2;
        spec_.observation_dim = 2;
        spec_.action_dim = 1;
        spec_.action_low = {-1};
        spec_.action_high = {1};
        spec_.dt = c_["dt"];
        spec_.episode_length = static_cast<std::size_t>(c_["episode_length"]);
        spec_.action_repeat = static_cast<std::size_t>(c_["action_repeat"]);
        spec_.reward_low = -c_["control_cost"];
        spec_.reward_high = 1;
        spec_.initial_distribution = "x ~ U[-0.6, -0.4], v = 0";
        spec_.validate();
    }

    const EnvSpec& spec() const override { return spec_; }

    std::vector<double> sample_initial_state(Rng& rng) const override { return {rng.uniform(-0.6, -0.4), 0.0}; }

    void derivative(std::span<const double> s, std::span<const double> a, std::span<double> out) const override {
        out[0] = s[1];
        out[1] = c_.at("power") * a[0] - c_.at("gravity") * std::cos(3 * s[0]);
    }

    double reward(std::span<const double> s, std::span<const double> a) const override {
        return (s[0] >= c_.at("goal") ? 1.0 : 0.0) - c_.at("control_cost") * a[0] * a[0];
    }

    std::map<std::string, double> constants() const override { return c_; }

private:
    std::map<std::string, double> c_;
    EnvSpec spec_;
};

std::mutex registry_mutex;

std::map<std::string, TaskFactory>& registry() {
    static std::map<std::string, TaskFactory> tasks = {
        {"pendulum-swingup", [](const auto& o) { return std::make_shared<PendulumSwingup>(o); }},
        {"cartpole-swingup", [](const auto& o) { return std::make_shared<CartpoleSwingup>(o); }},
        {"mountain-car", [](const auto& o) { return std::make_shared<MountainCar>(o); }},
    };
    return tasks;
}

}  // namespace

std::shared_ptr<Task> make_task(const std::string& id, const std::map<std::string, double>& overrides) {
    TaskFactory factory;
    {
        std::lock_guard lock(registry_mutex);
        auto it = registry().find(id);
        if (it == registry().end()) throw ContractViolation("unknown task '" + id + "'");
        factory = it->second;
    }
    return factory(overrides);
}

std::vector<std::string> task_ids() {
    std::lock_guard lock(registry_mutex);
    std::vector<std::string> ids;
    for (const auto& [id, f] : registry()) ids.push_back(id);
    return ids;
}

void register_task(const std::string& id, TaskFactory factory) {
    std::lock_guard lock(registry_mutex);
    registry()[id] = std::move(factory);
}

}  // namespace dhmbpo::envs
