#include "dhmbpo/algo/trainer.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "dhmbpo/autodiff/checkpoint.hpp"
#include "dhmbpo/autodiff/ops.hpp"
#include "dhmbpo/autodiff/tape.hpp"
#include "dhmbpo/core/error.hpp"
#include "json.hpp"

namespace dhmbpo::algo {

namespace {

using ad::Tensor;
using json = nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum Stream : std::uint64_t { kEnv = 1, kAct, kModel, kDr, kUpdate, kInit, kEval };

// Refuses to run; stands in for the model when T = 0 or the model is off.
class NullDynamics : public rollouts::Dynamics {
public:
    explicit NullDynamics(std::size_t state_dim) : state_dim_(state_dim) {}
    std::size_t state_dim() const override { return state_dim_; }
    rollouts::ModelStep step(const Tensor&, const Tensor&, Rng&) const override {
        throw ContractViolation("model dynamics requested by a model-free variant");
    }

private:
    std::size_t state_dim_;
};

class CountingDynamics : public rollouts::Dynamics {
public:
    CountingDynamics(const model::EnsembleGaussianModel& model, std::size_t* counter)
        : inner_(model), counter_(counter) {}
    std::size_t state_dim() const override { return inner_.state_dim(); }
    rollouts::ModelStep step(const Tensor& s, const Tensor& a, Rng& rng) const override {
        ++*counter_;
        return inner_.step(s, a, rng);
    }

private:
    rollouts::ModelDynamics inner_;
    std::size_t* counter_;
};

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

double to_double(const std::string& s) { return std::strtod(s.c_str(), nullptr); }
std::size_t to_size(const std::string& s) { return static_cast<std::size_t>(std::stoull(s)); }

buffers::Provenance to_provenance(const std::string& s) {
    return s == "model" ? buffers::Provenance::model : buffers::Provenance::environment;
}

Tensor rows_tensor(const std::vector<double>& values, std::size_t n, std::size_t d) {
    return Tensor::from_values({n, d}, std::vector<ad::Scalar>(values.begin(), values.end()));
}

void write_lines(const std::filesystem::path& path, const std::string& header, const std::vector<std::string>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << header << '\n';
    for (const auto& r : rows) out << r << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<std::string> read_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::vector<std::string> rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(line);
    return rows;
}

}  // namespace

std::string metrics_header() {
    return "env_step,episode,test_return_mean,test_return_std,critic_loss,actor_objective,alpha,grad_norm,Q_l,Q_u,"
           "model_stop_epoch,updates,clipped_targets,clipped_gradients,masked_rows,dropped_episodes";
}

std::string format_metrics(const MetricsRow& r) {
    return std::to_string(r.env_step) + "," + std::to_string(r.episode) + "," + num(r.test_return_mean) + "," +
           num(r.test_return_std) + "," + num(r.critic_loss) + "," + num(r.actor_objective) + "," + num(r.alpha) +
           "," + num(r.grad_norm) + "," + num(r.q_low) + "," + num(r.q_high) + "," +
           std::to_string(r.model_stop_epoch) + "," + std::to_string(r.updates) + "," +
           std::to_string(r.clipped_targets) + "," + std::to_string(r.clipped_gradients) + "," +
           std::to_string(r.masked_rows) + "," + std::to_string(r.dropped_episodes);
}

MetricsRow parse_metrics(const std::string& line) {
    const auto f = split_csv(line);
    require(f.size() == 16, "metrics row has " + std::to_string(f.size()) + " fields, expected 16");
    MetricsRow r;
    r.env_step = to_size(f[0]);
    r.episode = to_size(f[1]);
    r.test_return_mean = to_double(f[2]);
    r.test_return_std = to_double(f[3]);
    r.critic_loss = to_double(f[4]);
    r.actor_objective = to_double(f[5]);
    r.alpha = to_double(f[6]);
    r.grad_norm = to_double(f[7]);
    r.q_low = to_double(f[8]);
    r.q_high = to_double(f[9]);
    r.model_stop_epoch = to_size(f[10]);
    r.updates = to_size(f[11]);
    r.clipped_targets = to_size(f[12]);
    r.clipped_gradients = to_size(f[13]);
    r.masked_rows = to_size(f[14]);
    r.dropped_episodes = to_size(f[15]);
    return r;
}

std::string updates_header() {
    return "update,episode,env_step,critic_loss,actor_objective,alpha,grad_norm,grad_clipped,clipped_targets,Q_l,Q_u,"
           "critic_source,actor_source";
}

std::string format_update(const UpdateRow& r) {
    return std::to_string(r.update) + "," + std::to_string(r.episode) + "," + std::to_string(r.env_step) + "," +
           num(r.critic_loss) + "," + num(r.actor_objective) + "," + num(r.alpha) + "," + num(r.grad_norm) + "," +
           (r.grad_clipped ? "1" : "0") + "," + std::to_string(r.clipped_targets) + "," + num(r.q_low) + "," +
           num(r.q_high) + "," + buffers::provenance_name(r.critic_source) + "," +
           buffers::provenance_name(r.actor_source);
}

namespace {

UpdateRow parse_update(const std::string& line) {
    const auto f = split_csv(line);
    require(f.size() == 13, "update row has " + std::to_string(f.size()) + " fields, expected 13");
    UpdateRow r;
    r.update = to_size(f[0]);
    r.episode = to_size(f[1]);
    r.env_step = to_size(f[2]);
    r.critic_loss = to_double(f[3]);
    r.actor_objective = to_double(f[4]);
    r.alpha = to_double(f[5]);
    r.grad_norm = to_double(f[6]);
    r.grad_clipped = f[7] == "1";
    r.clipped_targets = to_size(f[8]);
    r.q_low = to_double(f[9]);
    r.q_high = to_double(f[10]);
    r.critic_source = to_provenance(f[11]);
    r.actor_source = to_provenance(f[12]);
    return r;
}

}  // namespace

Trainer::Trainer(AlgoConfig config, std::string task_id, std::uint64_t seed)
    : config_(std::move(config)), task_id_(std::move(task_id)), seed_(seed) {
    config_.validate();
    task_ = envs::make_task(task_id_, config_.task_overrides);
    const auto& sp = task_->spec();
    const std::size_t S = sp.observation_dim, A = sp.action_dim;

    env_rng_ = Rng(mix_seed(seed_, kEnv));
    act_rng_ = Rng(mix_seed(seed_, kAct));
    model_rng_ = Rng(mix_seed(seed_, kModel));
    dr_rng_ = Rng(mix_seed(seed_, kDr));
    update_rng_ = Rng(mix_seed(seed_, kUpdate));
    Rng init(mix_seed(seed_, kInit));

    agent::PolicyConfig pc;
    pc.state_dim = S;
    pc.action_dim = A;
    pc.hidden = config_.actor_hidden;
    policy_ = std::make_unique<agent::SquashedGaussianPolicy>(pc, sp.action_low, sp.action_high, init);

    critics_ = std::make_unique<agent::CriticEnsemble>(critic_config(), init);

    if (config_.variant.uses_model()) {
        model_ = std::make_unique<model::EnsembleGaussianModel>(S, A, config_.model, init);
        dynamics_ = std::make_unique<CountingDynamics>(*model_, &activity_.model_steps);
    } else {
        dynamics_ = std::make_unique<NullDynamics>(S);
    }

    temperature_ = std::make_unique<agent::EntropyTemperature>(config_.alpha_init, config_.alpha_lr,
                                                               -static_cast<double>(A));
    ad::AdamConfig actor_cfg, critic_cfg;
    actor_cfg.learning_rate = config_.actor_lr;
    critic_cfg.learning_rate = config_.critic_lr;
    actor_opt_ = ad::AdamW(&policy_->parameters(), actor_cfg);
    critic_opt_ = ad::AdamW(&critics_->parameters(), critic_cfg);

    replay_ = buffers::make_replay_buffer(S, A, config_.replay_capacity);
    const std::size_t model_capacity =
        config_.variant.dr_horizon > 0 ? config_.dr_starts * config_.variant.dr_horizon : 1;
    model_buffer_ = buffers::make_model_buffer(S, A, model_capacity);
    stats_ = buffers::NormStats(S);
}

const rollouts::Dynamics& Trainer::dynamics() const { return *dynamics_; }

agent::CriticConfig Trainer::critic_config() const {
    agent::CriticConfig cc;
    cc.state_dim = task_->spec().observation_dim;
    cc.action_dim = task_->spec().action_dim;
    cc.members = config_.critic_members;
    cc.hidden = config_.critic_hidden;
    cc.dropout = config_.critic_dropout;
    return cc;
}

void Trainer::reset_critics(std::uint64_t seed) {
    Rng init(mix_seed(seed, kInit));
    critics_ = std::make_unique<agent::CriticEnsemble>(critic_config(), init);
    ad::AdamConfig critic_cfg;
    critic_cfg.learning_rate = config_.critic_lr;
    critic_opt_ = ad::AdamW(&critics_->parameters(), critic_cfg);
    update_rng_ = Rng(mix_seed(seed, kUpdate));
    dr_rng_ = Rng(mix_seed(seed, kDr));
}

rollouts::MveTarget Trainer::mve_estimate(const buffers::Batch& pairs, Rng& rng) const {
    require(config_.variant.tr_horizon > 0, "mve_estimate: needs a training-rollout horizon T > 0");
    ad::NoGradScope no_grad;
    const rollouts::CriticValue value(*critics_, bounds_);
    const Tensor s = rows_tensor(pairs.states, pairs.size, pairs.state_dim);
    const Tensor a = rows_tensor(pairs.actions, pairs.size, pairs.action_dim);
    const auto traj = rollouts::training_rollout(dynamics(), *policy_, s, config_.variant.tr_horizon, rng, &a);
    return rollouts::mve_q(traj, value, temperature_->alpha(), config_.gamma, rng);
}

envs::TestReturn Trainer::evaluate(std::size_t episodes, std::uint64_t seed) const {
    const auto& policy = *policy_;
    const envs::Policy act = [&policy](std::span<const double> obs, Rng& rng) {
        return policy.act(obs, 1, rng, true);
    };
    return envs::evaluate(task_, act, episodes, seed);
}

bool Trainer::collect_episode() {
    const auto& sp = task_->spec();
    envs::Environment env(task_);
    const std::uint64_t episode_seed = env_rng_.engine()();
    std::vector<double> obs = env.reset(episode_seed);
    std::vector<Transition> episode;
    episode.reserve(sp.agent_steps());
    try {
        while (!env.done()) {
            std::vector<double> action(sp.action_dim);
            if (env_steps_ + env.step_count() < config_.seed_steps) {
                for (std::size_t j = 0; j < sp.action_dim; ++j)
                    action[j] = act_rng_.uniform(sp.action_low[j], sp.action_high[j]);
            } else {
                action = policy_->act(obs, 1, act_rng_, false);
            }
            auto res = env.step(action);
            episode.push_back({obs, action, res.reward, res.next_state, res.terminated, res.truncated});
            obs = std::move(res.next_state);
        }
    } catch (const EnvironmentFault& fault) {
        ++dropped_;
        spdlog::warn("episode dropped after {} physics steps: {}", env.step_count(), fault.what());
        return false;
    }

    for (const auto& t : episode) {
        replay_.push(t);
        stats_.update(t);
    }
    const std::size_t before = env_steps_;
    env_steps_ += env.step_count();
    ++episodes_;

    const std::size_t k = config_.eval_interval;
    for (std::size_t tick = (before / k + 1) * k; tick <= env_steps_ && tick <= config_.total_steps; tick += k)
        evaluate_tick(tick);
    return true;
}

void Trainer::evaluate_tick(std::size_t env_step) {
    envs::TestReturn ret;
    try {
        ret = evaluate(config_.eval_episodes, mix_seed(mix_seed(seed_, kEval), env_step));
    } catch (const EnvironmentFault& fault) {
        spdlog::warn("evaluation at step {} faulted: {}", env_step, fault.what());
        ret.mean = ret.std = kNaN;
    }
    MetricsRow row;
    row.env_step = env_step;
    row.episode = episodes_;
    row.test_return_mean = ret.mean;
    row.test_return_std = ret.std;
    const double n = static_cast<double>(window_.updates);
    row.critic_loss = window_.updates ? window_.critic_loss / n : kNaN;
    row.actor_objective = window_.updates ? window_.actor_objective / n : kNaN;
    row.grad_norm = window_.updates ? window_.grad_norm / n : kNaN;
    row.alpha = temperature_->alpha();
    row.q_low = bounds_.initialized() ? bounds_.q_low() : kNaN;
    row.q_high = bounds_.initialized() ? bounds_.q_high() : kNaN;
    row.model_stop_epoch = last_stop_epoch_;
    row.updates = window_.updates;
    row.clipped_targets = window_.clipped_targets;
    row.clipped_gradients = window_.clipped_gradients;
    row.masked_rows = window_.masked;
    row.dropped_episodes = dropped_;
    window_ = {};
    metrics_.push_back(row);
    spdlog::info("step {:>7} episode {:>4} return {:.2f} +- {:.2f} alpha {:.4f}", env_step, episodes_, ret.mean,
                 ret.std, row.alpha);
    if (hooks_.on_metrics) hooks_.on_metrics(row);
}

void Trainer::refresh_model_buffer() {
    require(model_ != nullptr, "refresh_model_buffer: the model is disabled");
    model_buffer_.clear();
    const auto rep = rollouts::distribution_rollout(dynamics(), *policy_, replay_, model_buffer_, config_.dr_starts,
                                                    config_.variant.dr_horizon, dr_rng_);
    ++activity_.dr_refreshes;
    if (rep.truncated_branches > 0)
        spdlog::debug("distribution rollout: {} of {} branches stopped on non-finite predictions",
                      rep.truncated_branches, rep.starts);
}

buffers::Batch Trainer::sample_batch(buffers::Provenance source, std::size_t size) {
    if (source == buffers::Provenance::model) return model_buffer_.sample_uniform(size, update_rng_);
    return replay_.sample_uniform(size, update_rng_);
}

buffers::Batch Trainer::sample_training_batch() {
    if (config_.variant.dr_horizon > 0) {
        if (!model_buffer_.empty()) return model_buffer_.sample_uniform(config_.batch_size, update_rng_);
        spdlog::warn("model buffer empty at update {}; sampling from the replay buffer", updates_);
    }
    return replay_.sample_uniform(config_.batch_size, update_rng_);
}

double Trainer::critic_update(const buffers::Batch& batch) {
    const std::size_t B = batch.size, S = batch.state_dim, A = batch.action_dim;
    const Tensor s = rows_tensor(batch.states, B, S);
    const Tensor a = rows_tensor(batch.actions, B, A);
    const double alpha = temperature_->alpha();
    const rollouts::CriticValue value(*critics_, bounds_);

    CriticTrace trace;
    if (hooks_.on_critic) trace.rng_before_target = update_rng_;

    rollouts::MveTarget target;
    rollouts::Trajectory traj;
    {
        ad::NoGradScope no_grad;
        if (config_.variant.tr_horizon > 0) {
            traj = rollouts::training_rollout(dynamics(), *policy_, s, config_.variant.tr_horizon, update_rng_, &a);
            std::vector<double> rewards;
            rewards.reserve(B * traj.horizon());
            for (const auto& r : traj.rewards)
                for (std::size_t b = 0; b < B; ++b)
                    if (traj.valid[b]) rewards.push_back(r[b]);
            bounds_.update(rewards, config_.gamma, config_.q_bound_eta);
            target = rollouts::mve_q(traj, value, alpha, config_.gamma, update_rng_);
        } else {
            bounds_.update(batch.rewards, config_.gamma, config_.q_bound_eta);
            target = rollouts::one_step_target(batch, *policy_, value, alpha, config_.gamma, update_rng_);
        }
    }

    std::size_t n_valid = 0;
    for (auto v : target.valid) n_valid += v;
    window_.clipped_targets += value.clipped();
    window_.masked += B - n_valid;

    // Before the step, so observers see the parameters the target came from.
    if (hooks_.on_critic) {
        trace.batch = &batch;
        trace.target = &target;
        trace.trajectory = config_.variant.tr_horizon > 0 ? &traj : nullptr;
        trace.report = value.last_report();
        trace.bounds = bounds_;
        trace.alpha = alpha;
        trace.env_step = env_steps_;
        hooks_.on_critic(trace);
    }
    return regress_critics(batch, target);
}

double Trainer::regress_critics(const buffers::Batch& batch, const rollouts::MveTarget& target) {
    const std::size_t B = batch.size, K = critics_->members();
    require(target.values.size() == B && target.valid.size() == B, "regress_critics: target size mismatch");
    std::size_t n_valid = 0;
    for (auto v : target.valid) n_valid += v;
    if (n_valid == 0) {
        spdlog::warn("critic update {} skipped: no valid target rows", updates_);
        return 0.0;
    }
    std::vector<ad::Scalar> y(K * B, 0), w(K * B, 0);
    const double weight = 1.0 / static_cast<double>(K * n_valid);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t b = 0; b < B; ++b)
            if (target.valid[b]) {
                y[k * B + b] = target.values[b];
                w[k * B + b] = weight;
            }
    const Tensor s = rows_tensor(batch.states, B, batch.state_dim);
    const Tensor a = rows_tensor(batch.actions, B, batch.action_dim);
    const Tensor yt = Tensor::from_values({K, B}, std::move(y));
    const Tensor wt = Tensor::from_values({K, B}, std::move(w));
    critics_->parameters().zero_grad();
    ad::Tape tape;
    Tensor loss;
    {
        ad::TapeScope scope(tape);
        const Tensor q = critics_->q_values(s, a, true, &update_rng_);
        loss = ad::sum(ad::mul(ad::square(ad::sub(q, yt)), wt));
    }
    tape.backward(loss);
    critic_opt_.step();
    critics_->update_target(config_.target_momentum);
    return loss.item();
}

double Trainer::actor_update(const buffers::Batch& starts) {
    const std::size_t B = starts.size, S = starts.state_dim;
    const Tensor s = rows_tensor(starts.states, B, S);
    const rollouts::CriticValue value(*critics_, bounds_);
    const double alpha = temperature_->alpha();

    auto& params = policy_->parameters();
    params.zero_grad();
    ad::FrozenScope freeze(critics_->parameters());
    ad::Tape tape;
    rollouts::Trajectory traj;
    rollouts::MveValue mv;
    {
        ad::TapeScope scope(tape);
        traj = rollouts::training_rollout(dynamics(), *policy_, s, config_.variant.tr_horizon, update_rng_);
        mv = rollouts::mve_value(traj, value, alpha, config_.gamma);
    }
    const auto grad = rollouts::value_gradient(tape, mv.objective, params, config_.grad_ceiling);
    bool has_grad = grad.finite && mv.valid > 0;
    for (const auto& e : params.entries()) has_grad = has_grad && e.tensor.has_grad();
    if (has_grad) {
        params.scale_grad(-1);
        actor_opt_.step();
    } else {
        params.zero_grad();
        spdlog::warn("actor update {} skipped: {}", updates_, grad.finite ? "no gradient" : "non-finite gradient");
    }

    std::vector<double> lps;
    lps.reserve(B);
    const auto lp0 = traj.log_probs[0].values();
    for (std::size_t b = 0; b < B; ++b)
        if (traj.valid[b]) lps.push_back(lp0[b]);
    if (!lps.empty()) temperature_->update(lps);

    const double objective = mv.valid > 0 ? mv.objective.item() : kNaN;
    window_.grad_norm += grad.norm;
    window_.clipped_gradients += grad.clipped;
    window_.masked += traj.masked();
    if (hooks_.on_actor) hooks_.on_actor({starts.provenance, objective, grad});
    last_grad_ = grad;
    return objective;
}

void Trainer::iterate() {
    const std::size_t before = replay_.pushed();
    if (!collect_episode()) return;
    const std::size_t agent_steps = replay_.pushed() - before;

    if (model_) {
        const auto fit = model_->fit(replay_, stats_, model_rng_);
        last_stop_epoch_ = fit.stop_epoch;
        ++activity_.fits;
    }

    if (env_steps_ >= config_.seed_steps) {
        const std::size_t n = agent_steps * config_.utd;
        for (std::size_t i = 0; i < n; ++i) {
            if (config_.variant.dr_horizon > 0 && i % config_.iterations_per_dr == 0) refresh_model_buffer();
            const buffers::Batch batch = sample_training_batch();
            const std::size_t clipped_before = window_.clipped_targets;
            const double loss = critic_update(batch);
            const double objective = actor_update(batch);

            UpdateRow row;
            row.update = updates_;
            row.episode = episodes_;
            row.env_step = env_steps_;
            row.critic_loss = loss;
            row.actor_objective = objective;
            row.alpha = temperature_->alpha();
            row.grad_norm = last_grad_.norm;
            row.grad_clipped = last_grad_.clipped;
            row.clipped_targets = window_.clipped_targets - clipped_before;
            row.q_low = bounds_.q_low();
            row.q_high = bounds_.q_high();
            row.critic_source = batch.provenance.empty() ? buffers::Provenance::environment : batch.provenance[0];
            row.actor_source = row.critic_source;
            update_log_.push_back(row);

            window_.critic_loss += loss;
            window_.actor_objective += std::isfinite(objective) ? objective : 0.0;
            ++window_.updates;
            ++updates_;
        }
    }
    model_buffer_.clear();
}

void Trainer::train() {
    spdlog::info("training {} variant {} seed {} for {} environment steps", task_id_, config_.variant.name(), seed_,
                 config_.total_steps);
    while (!finished()) iterate();
}

void Trainer::write_metrics(const std::filesystem::path& path) const {
    std::vector<std::string> rows;
    for (const auto& r : metrics_) rows.push_back(format_metrics(r));
    write_lines(path, metrics_header(), rows);
}

void Trainer::write_updates(const std::filesystem::path& path) const {
    std::vector<std::string> rows;
    for (const auto& r : update_log_) rows.push_back(format_update(r));
    write_lines(path, updates_header(), rows);
}

void Trainer::save_checkpoint(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    ad::TensorArchive ar;
    policy_->parameters().save(ar, "policy/");
    actor_opt_.save(ar, "actor_opt/");
    critics_->parameters().save(ar, "critic/");
    critics_->target_parameters().save(ar, "critic_target/");
    critic_opt_.save(ar, "critic_opt/");
    temperature_->save(ar, "alpha/");
    bounds_.save(ar, "bounds/");
    stats_.save(ar, "stats/");
    if (model_) model_->save(ar, "model/");
    ar.write(dir / "state.tensors");
    replay_.dump(dir / "replay.bin");
    write_metrics(dir / "metrics.csv");
    write_updates(dir / "updates.csv");

    json j;
    j["task"] = task_id_;
    j["seed"] = seed_;
    j["config"] = config_.entries();
    j["env_steps"] = env_steps_;
    j["episodes"] = episodes_;
    j["updates"] = updates_;
    j["dropped_episodes"] = dropped_;
    j["last_stop_epoch"] = last_stop_epoch_;
    j["activity"] = {{"fits", activity_.fits},
                     {"dr_refreshes", activity_.dr_refreshes},
                     {"model_steps", activity_.model_steps}};
    j["window"] = {{"updates", window_.updates},
                   {"clipped_targets", window_.clipped_targets},
                   {"clipped_gradients", window_.clipped_gradients},
                   {"masked", window_.masked},
                   {"critic_loss", num(window_.critic_loss)},
                   {"actor_objective", num(window_.actor_objective)},
                   {"grad_norm", num(window_.grad_norm)}};
    j["rng"] = {{"env", env_rng_.serialize()},
                {"act", act_rng_.serialize()},
                {"model", model_rng_.serialize()},
                {"dr", dr_rng_.serialize()},
                {"update", update_rng_.serialize()}};
    std::ofstream out(dir / "state.json");
    if (!out) throw IoError("cannot write checkpoint in '" + dir.string() + "'");
    out << j.dump(2) << '\n';
}

void Trainer::load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "state.json");
    if (!in) throw IoError("no checkpoint in '" + dir.string() + "'");
    const json j = json::parse(in);
    require(j.at("task").get<std::string>() == task_id_ && j.at("seed").get<std::uint64_t>() == seed_,
            "load_checkpoint: checkpoint belongs to another task or seed");
    require(j.at("config").get<std::map<std::string, std::string>>() == config_.entries(),
            "load_checkpoint: configuration differs from the checkpoint");

    const auto ar = ad::TensorArchive::read(dir / "state.tensors");
    policy_->parameters().load(ar, "policy/");
    actor_opt_.load(ar, "actor_opt/");
    critics_->parameters().load(ar, "critic/");
    critics_->target_parameters().load(ar, "critic_target/");
    critic_opt_.load(ar, "critic_opt/");
    temperature_->load(ar, "alpha/");
    bounds_.load(ar, "bounds/");
    stats_.load(ar, "stats/");
    if (model_) model_->load(ar, "model/");
    replay_ = buffers::TransitionBuffer::restore(dir / "replay.bin");
    model_buffer_.clear();

    metrics_.clear();
    for (const auto& line : read_rows(dir / "metrics.csv")) metrics_.push_back(parse_metrics(line));
    update_log_.clear();
    for (const auto& line : read_rows(dir / "updates.csv")) update_log_.push_back(parse_update(line));

    env_steps_ = j.at("env_steps");
    episodes_ = j.at("episodes");
    updates_ = j.at("updates");
    dropped_ = j.at("dropped_episodes");
    last_stop_epoch_ = j.at("last_stop_epoch");
    const auto& act = j.at("activity");
    activity_ = {act.at("fits"), act.at("dr_refreshes"), act.at("model_steps")};
    const auto& w = j.at("window");
    window_.updates = w.at("updates");
    window_.clipped_targets = w.at("clipped_targets");
    window_.clipped_gradients = w.at("clipped_gradients");
    window_.masked = w.at("masked");
    window_.critic_loss = to_double(w.at("critic_loss"));
    window_.actor_objective = to_double(w.at("actor_objective"));
    window_.grad_norm = to_double(w.at("grad_norm"));
    const auto& r = j.at("rng");
    env_rng_ = Rng::deserialize(r.at("env"));
    act_rng_ = Rng::deserialize(r.at("act"));
    model_rng_ = Rng::deserialize(r.at("model"));
    dr_rng_ = Rng::deserialize(r.at("dr"));
    update_rng_ = Rng::deserialize(r.at("update"));
}

void Trainer::set_total_steps(std::size_t steps) {
    require(steps >= env_steps_, "set_total_steps: budget below the steps already taken");
    config_.total_steps = steps;
}

std::unique_ptr<Trainer> Trainer::resume(const std::filesystem::path& dir) {
    std::ifstream in(dir / "state.json");
    if (!in) throw IoError("no checkpoint in '" + dir.string() + "'");
    const json j = json::parse(in);
    AlgoConfig cfg;
    for (const auto& [k, v] : j.at("config").get<std::map<std::string, std::string>>()) cfg.set(k, v);
    auto trainer = std::make_unique<Trainer>(cfg, j.at("task").get<std::string>(), j.at("seed").get<std::uint64_t>());
    trainer->load_checkpoint(dir);
    return trainer;
}

}  // namespace dhmbpo::algo
