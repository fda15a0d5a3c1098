#include "dhmbpo/model/ensemble_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dhmbpo/autodiff/checkpoint.hpp"
#include "dhmbpo/autodiff/tape.hpp"
#include "dhmbpo/core/error.hpp"

namespace dhmbpo::model {

using ad::Shape;

Tensor gaussian_nll(const Tensor& mu, const Tensor& log_sigma, std::span<const Scalar> target,
                    std::span<const Scalar> weights) {
    require(mu.rank() == 3, "gaussian_nll: mu must be [M,N,D]");
    const std::size_t M = mu.dim(0), N = mu.dim(1), D = mu.dim(2);
    require(log_sigma.shape() == Shape{M, D}, "gaussian_nll: log_sigma must be [M,D]");
    require(target.size() == N * D && weights.size() == M * N, "gaussian_nll: target/weight size");
    const auto m = mu.values();
    const auto ls = log_sigma.values();
    const double c = 1.0 / static_cast<double>(M * N * D);
    double total = 0;
    for (std::size_t k = 0; k < M; ++k)
        for (std::size_t n = 0; n < N; ++n) {
            double row = 0;
            for (std::size_t d = 0; d < D; ++d) {
                const double z = (target[n * D + d] - m[(k * N + n) * D + d]) * std::exp(-ls[k * D + d]);
                row += ls[k * D + d] + 0.5 * z * z;
            }
            total += weights[k * N + n] * row;
        }
    std::vector<Scalar> t(target.begin(), target.end()), w(weights.begin(), weights.end());
    return ad::make_result({}, {static_cast<Scalar>(c * total)}, std::vector<Tensor>{mu, log_sigma},
                           [mu, log_sigma, t = std::move(t), w = std::move(w), M, N, D, c](const ad::Node& out) {
                               const double g = out.grad[0] * c;
                               const auto& m = mu.node()->value;
                               const auto& ls = log_sigma.node()->value;
                               std::span<Scalar> gm, gl;
                               if (mu.requires_grad()) gm = mu.node()->grad_buffer();
                               if (log_sigma.requires_grad()) gl = log_sigma.node()->grad_buffer();
                               for (std::size_t k = 0; k < M; ++k)
                                   for (std::size_t n = 0; n < N; ++n) {
                                       const double wn = g * w[k * N + n];
                                       for (std::size_t d = 0; d < D; ++d) {
                                           const double inv_var = std::exp(-2 * ls[k * D + d]);
                                           const double r = m[(k * N + n) * D + d] - t[n * D + d];
                                           if (!gm.empty()) gm[(k * N + n) * D + d] += wn * r * inv_var;
                                           if (!gl.empty()) gl[k * D + d] += wn * (1 - r * r * inv_var);
                                       }
                                   }
                           });
}

std::vector<double> validation_scores(std::span<const double> means, std::span<const double> variances,
                                      std::span<const double> targets, std::size_t M, std::size_t N,
                                      std::size_t D) {
    require(M > 0, "validation_scores: need at least one member");
    require(means.size() == M * N * D && variances.size() == M * D && targets.size() == N * D,
            "validation_scores: size mismatch");
    std::vector<double> mean_var(D, 0.0);
    for (std::size_t k = 0; k < M; ++k)
        for (std::size_t d = 0; d < D; ++d) mean_var[d] += variances[k * D + d] / M;
    std::vector<double> scores(N, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        double s = 0;
        for (std::size_t d = 0; d < D; ++d) {
            double mu = 0;
            for (std::size_t k = 0; k < M; ++k) mu += means[(k * N + n) * D + d];
            mu /= M;
            double spread = 0;
            if (M > 1) {
                for (std::size_t k = 0; k < M; ++k) {
                    const double e = means[(k * N + n) * D + d] - mu;
                    spread += e * e;
                }
                spread /= M - 1;
            }
            const double var = spread + mean_var[d];
            const double r = mu - targets[n * D + d];
            s += r * r / var + std::log(var);
        }
        scores[n] = 0.5 * s;
    }
    return scores;
}

void FitReport::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "epoch,train_loss,val_mean,val_var,val_count,improved\n";
    out.precision(17);
    for (const auto& e : epochs)
        out << e.epoch << ',' << e.train_loss << ',' << e.val_mean << ',' << e.val_var << ',' << e.val_count << ','
            << (e.improved ? 1 : 0) << '\n';
}

EnsembleGaussianModel::EnsembleGaussianModel(std::size_t state_dim, std::size_t action_dim, ModelConfig config,
                                             Rng& rng)
    : state_dim_(state_dim), action_dim_(action_dim), config_(std::move(config)), stats_(state_dim) {
    require(state_dim > 0 && action_dim > 0, "EnsembleGaussianModel: dimensions must be positive");
    require(config_.members > 0, "EnsembleGaussianModel: need at least one member");
    require(config_.log_sigma_min < config_.log_sigma_max, "EnsembleGaussianModel: log-sigma bounds");
    require(config_.holdout_ratio > 0 && config_.holdout_ratio < 1, "EnsembleGaussianModel: holdout ratio");
    require(config_.batch_size > 0, "EnsembleGaussianModel: batch size");
    ad::MlpConfig mlp;
    mlp.input_dim = state_dim + action_dim;
    mlp.output_dim = state_dim + 1;
    mlp.hidden = config_.hidden;
    mlp.layer_norm = true;
    mlp.dropout = config_.dropout;
    mlp.decay = config_.decay;
    net_ = ad::EnsembleMlp(config_.members, mlp, rng);
    log_sigma_ = Tensor::parameter({config_.members, output_dim()},
                                   std::vector<Scalar>(config_.members * output_dim(),
                                                       static_cast<Scalar>(config_.log_sigma_init)));
    params_.extend(net_.parameters(), "net.");
    params_.add("log_sigma", log_sigma_);
    // Trainable only inside fit; rollouts treat the model as a constant.
    params_.set_requires_grad(false);
    optimizer_ = ad::AdamW(&params_, {.learning_rate = config_.learning_rate});
}

void EnsembleGaussianModel::project_log_sigma() {
    for (Scalar& v : log_sigma_.mutable_values())
        v = std::clamp(v, static_cast<Scalar>(config_.log_sigma_min), static_cast<Scalar>(config_.log_sigma_max));
}

std::vector<double> EnsembleGaussianModel::variances() const {
    std::vector<double> v;
    v.reserve(log_sigma_.numel());
    for (Scalar ls : log_sigma_.values()) v.push_back(std::exp(2.0 * ls));
    return v;
}

Tensor EnsembleGaussianModel::forward_normalized(const Tensor& inputs, bool training, Rng* rng) const {
    return net_.forward(inputs, training, rng);
}

void EnsembleGaussianModel::make_inputs(std::span<const double> states, std::span<const double> actions,
                                        std::size_t n, std::vector<Scalar>& out) const {
    const std::size_t S = state_dim_, A = action_dim_;
    out.resize(n * (S + A));
    std::vector<double> s(S);
    for (std::size_t i = 0; i < n; ++i) {
        stats_.normalize_state(states.subspan(i * S, S), s);
        for (std::size_t j = 0; j < S; ++j) out[i * (S + A) + j] = static_cast<Scalar>(s[j]);
        for (std::size_t j = 0; j < A; ++j) out[i * (S + A) + S + j] = static_cast<Scalar>(actions[i * A + j]);
    }
}

void EnsembleGaussianModel::make_targets(const buffers::Batch& batch, std::vector<Scalar>& out) const {
    const std::size_t S = state_dim_, D = S + 1;
    out.resize(batch.size * D);
    std::vector<double> delta(S), dbar(S);
    for (std::size_t i = 0; i < batch.size; ++i) {
        for (std::size_t j = 0; j < S; ++j) delta[j] = batch.next_states[i * S + j] - batch.states[i * S + j];
        stats_.normalize_delta(delta, dbar);
        for (std::size_t j = 0; j < S; ++j) out[i * D + j] = static_cast<Scalar>(dbar[j]);
        out[i * D + S] = static_cast<Scalar>(stats_.normalize_reward(batch.rewards[i]));
    }
}

namespace {

// Rows [begin, end) of a row-major matrix, keyed by an index list.
std::vector<Scalar> gather(const std::vector<Scalar>& m, std::size_t width, std::span<const std::size_t> idx) {
    std::vector<Scalar> out(idx.size() * width);
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(m.begin() + idx[i] * width, width, out.begin() + i * width);
    return out;
}

}  // namespace

FitReport EnsembleGaussianModel::fit(const buffers::TransitionBuffer& data, const buffers::NormStats& stats,
                                     Rng& rng, const ScoreHook& hook) {
    require(data.state_dim() == state_dim_ && data.action_dim() == action_dim_, "fit: buffer layout");
    require(stats.state_dim() == state_dim_, "fit: normalization dimension");
    stats_ = stats;
    const std::size_t M = config_.members, D = output_dim(), in = state_dim_ + action_dim_;

    const buffers::Batch all = data.all();
    const std::size_t N = all.size;
    std::size_t n_val = std::min(static_cast<std::size_t>(config_.holdout_ratio * N), config_.max_holdout);
    require(n_val > 0 && N > n_val, "fit: not enough data for a non-empty validation split");
    const std::size_t n_train = N - n_val;

    std::vector<Scalar> inputs, targets;
    make_inputs(all.states, all.actions, N, inputs);
    make_targets(all, targets);

    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    std::span<const std::size_t> train_idx(order.data(), n_train), val_idx(order.data() + n_train, n_val);

    const auto val_x = gather(inputs, in, val_idx);
    const auto val_t_s = gather(targets, D, val_idx);
    const std::vector<double> val_t(val_t_s.begin(), val_t_s.end());

    // Bootstrap weights, fixed for this fit.
    std::vector<Scalar> boot(M * n_train);
    for (auto& w : boot) w = static_cast<Scalar>(rng.exponential(1.0));

    auto score = [&](std::size_t epoch) {
        ad::NoGradScope no_grad;
        Tensor mu = forward_normalized(Tensor::from_values({n_val, in}, val_x));
        std::vector<double> means(mu.values().begin(), mu.values().end());
        auto s = validation_scores(means, variances(), val_t, M, n_val, D);
        if (hook) hook(epoch, s);
        return s;
    };

    FitReport report;
    report.train_count = n_train;
    report.val_count = n_val;
    report.patience = patience_epochs(config_.patience_base, state_dim_);
    EarlyStopping stopper(report.patience, config_.significance);
    {
        const auto s0 = score(0);
        auto summary = summarize_scores(s0);
        stopper.start(summary);
        report.epochs.push_back({0, 0, summary.mean, summary.variance, summary.count, false});
    }

    std::vector<std::vector<Scalar>> best_values;
    for (const auto& e : params_.entries()) best_values.emplace_back(e.tensor.values().begin(), e.tensor.values().end());

    params_.set_requires_grad(true);
    std::vector<std::size_t> perm(n_train);
    std::iota(perm.begin(), perm.end(), 0);
    const std::size_t B = config_.batch_size;
    std::size_t epoch = 0;
    while (!stopper.should_stop() && (config_.max_epochs == 0 || epoch < config_.max_epochs)) {
        ++epoch;
        std::shuffle(perm.begin(), perm.end(), rng.engine());
        std::size_t batches = (n_train + B - 1) / B;
        if (config_.max_batches_per_epoch > 0) batches = std::min(batches, config_.max_batches_per_epoch);
        double loss_sum = 0;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t begin = b * B, end = std::min(n_train, begin + B), nb = end - begin;
            std::vector<std::size_t> rows(nb);
            for (std::size_t i = 0; i < nb; ++i) rows[i] = train_idx[perm[begin + i]];
            const auto x = gather(inputs, in, rows);
            const auto t = gather(targets, D, rows);
            std::vector<Scalar> w(M * nb);
            for (std::size_t k = 0; k < M; ++k)
                for (std::size_t i = 0; i < nb; ++i) w[k * nb + i] = boot[k * n_train + perm[begin + i]];

            params_.zero_grad();
            ad::Tape tape;
            Tensor loss;
            {
                ad::TapeScope scope(tape);
                Tensor mu = forward_normalized(Tensor::from_values({nb, in}, x), true, &rng);
                loss = gaussian_nll(mu, log_sigma_, t, w);
            }
            tape.backward(loss);
            optimizer_.step();
            project_log_sigma();
            loss_sum += loss.item();
        }
        const auto s = score(epoch);
        const auto summary = summarize_scores(s);
        const bool improved = stopper.observe(summary);
        if (improved) {
            report.best_epoch = epoch;
            for (std::size_t i = 0; i < params_.size(); ++i) {
                const auto v = params_.entries()[i].tensor.values();
                best_values[i].assign(v.begin(), v.end());
            }
        }
        report.epochs.push_back({epoch, loss_sum / batches, summary.mean, summary.variance, summary.count, improved});
    }
    params_.set_requires_grad(false);
    params_.zero_grad();

    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto dst = params_.entries()[i].tensor.mutable_values();
        std::copy(best_values[i].begin(), best_values[i].end(), dst.begin());
    }
    report.stop_epoch = epoch;
    report.best_val_mean = stopper.best().mean;
    ++fits_;
    return report;
}

DifferentiableStep EnsembleGaussianModel::ts1_step(const Tensor& states, const Tensor& actions, Rng& rng,
                                              double noise_scale, std::vector<std::uint8_t>* finite) const {
    const std::size_t S = state_dim_, D = output_dim(), M = config_.members;
    require(states.rank() == 2 && states.dim(1) == S, "ts1_step: states must be [B,S]");
    const std::size_t B = states.dim(0);
    require(actions.rank() == 2 && actions.dim(0) == B && actions.dim(1) == action_dim_,
            "ts1_step: actions must be [B,A]");

    auto vec = [S](const std::vector<double>& v, auto f) {
        std::vector<Scalar> out(S);
        for (std::size_t j = 0; j < S; ++j) out[j] = static_cast<Scalar>(f(v, j));
        return Tensor::from_values({S}, std::move(out));
    };
    const auto& sm = stats_.state_mean();
    const auto& ss = stats_.state_std();
    const auto& dm = stats_.delta_mean();
    const auto& ds = stats_.delta_std();
    const Tensor neg_mean = vec(sm, [](const auto& v, std::size_t j) { return -v[j]; });
    const Tensor inv_std = vec(ss, [](const auto& v, std::size_t j) { return 1.0 / v[j]; });

    std::vector<std::uint32_t> members(B);
    for (auto& m : members) m = static_cast<std::uint32_t>(rng.uniform_index(M));
    std::vector<Scalar> noise(B * D);
    const auto ls = log_sigma_.values();
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t d = 0; d < D; ++d)
            noise[i * D + d] = static_cast<Scalar>(noise_scale * std::exp(ls[members[i] * D + d]) * rng.normal());

    const Tensor s_bar = (states + neg_mean) * inv_std;
    const Tensor mu = net_.forward_routed(ad::concat_last(s_bar, actions), members, false, nullptr);
    const Tensor sample = mu + Tensor::from_values({B, D}, std::move(noise));
    const Tensor delta_bar = ad::slice_last(sample, 0, S);
    const Tensor reward_bar = ad::reshape(ad::slice_last(sample, S, D), {B});

    // s_bar' = s_bar + (mu_d + sigma_d * delta_bar) / sigma_s, then back to raw coordinates.
    const Tensor ratio = vec(ds, [&](const auto& v, std::size_t j) { return v[j] / ss[j]; });
    const Tensor shift = vec(dm, [&](const auto& v, std::size_t j) { return v[j] / ss[j]; });
    const Tensor next_bar = s_bar + delta_bar * ratio + shift;
    const Tensor std_s = vec(ss, [](const auto& v, std::size_t j) { return v[j]; });
    const Tensor mean_s = vec(sm, [](const auto& v, std::size_t j) { return v[j]; });
    DifferentiableStep out;
    out.next_states = next_bar * std_s + mean_s;
    out.rewards = ad::add_scalar(ad::scale(reward_bar, static_cast<Scalar>(stats_.reward_std())),
                                 static_cast<Scalar>(stats_.reward_mean()));

    if (finite) {
        finite->assign(B, 1);
        const auto ns = out.next_states.values();
        const auto r = out.rewards.values();
        for (std::size_t i = 0; i < B; ++i) {
            bool ok = std::isfinite(r[i]);
            for (std::size_t j = 0; j < S; ++j) ok = ok && std::isfinite(ns[i * S + j]);
            (*finite)[i] = ok;
        }
    }
    return out;
}

Prediction EnsembleGaussianModel::ts1_predict(std::span<const double> states, std::span<const double> actions,
                                              std::size_t n, Rng& rng, double noise_scale) const {
    require(states.size() == n * state_dim_ && actions.size() == n * action_dim_, "ts1_predict: input size");
    ad::NoGradScope no_grad;
    // Member draws are replayed from a copy of the stream so they can be reported.
    Rng replay = rng;
    Prediction p;
    p.members.resize(n);
    for (auto& m : p.members) m = static_cast<std::uint32_t>(replay.uniform_index(config_.members));
    DifferentiableStep step = ts1_step(Tensor::from_values({n, state_dim_}, {states.begin(), states.end()}),
                                       Tensor::from_values({n, action_dim_}, {actions.begin(), actions.end()}),
                                       rng, noise_scale, &p.finite);
    p.next_states.assign(step.next_states.values().begin(), step.next_states.values().end());
    p.rewards.assign(step.rewards.values().begin(), step.rewards.values().end());
    return p;
}

void EnsembleGaussianModel::mean_prediction(std::span<const double> states, std::span<const double> actions,
                                            std::size_t n, std::vector<double>& next_states,
                                            std::vector<double>& rewards) const {
    const std::size_t S = state_dim_, D = output_dim(), M = config_.members;
    ad::NoGradScope no_grad;
    std::vector<Scalar> x;
    make_inputs(states, actions, n, x);
    const Tensor mu = forward_normalized(Tensor::from_values({n, S + action_dim_}, std::move(x)));
    const auto m = mu.values();
    next_states.resize(n * S);
    rewards.resize(n);
    std::vector<double> dbar(S), delta(S);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < D; ++d) {
            double avg = 0;
            for (std::size_t k = 0; k < M; ++k) avg += m[(k * n + i) * D + d];
            avg /= M;
            if (d < S)
                dbar[d] = avg;
            else
                rewards[i] = stats_.denormalize_reward(avg);
        }
        stats_.denormalize_delta(dbar, delta);
        for (std::size_t j = 0; j < S; ++j) next_states[i * S + j] = states[i * S + j] + delta[j];
    }
}

void EnsembleGaussianModel::save(ad::TensorArchive& archive, const std::string& prefix) const {
    params_.save(archive, prefix + "param/");
    optimizer_.save(archive, prefix + "adam/");
    stats_.save(archive, prefix + "stats/");
    archive.put_scalar(prefix + "fits", static_cast<double>(fits_));
}

void EnsembleGaussianModel::load(const ad::TensorArchive& archive, const std::string& prefix) {
    params_.load(archive, prefix + "param/");
    optimizer_.load(archive, prefix + "adam/");
    stats_ = buffers::NormStats(state_dim_);
    stats_.load(archive, prefix + "stats/");
    fits_ = static_cast<std::size_t>(archive.get_scalar(prefix + "fits"));
}

double rmse(std::span<const double> prediction, std::span<const double> target) {
    require(prediction.size() == target.size() && !target.empty(), "rmse: size mismatch");
    double s = 0;
    for (std::size_t i = 0; i < target.size(); ++i) s += (prediction[i] - target[i]) * (prediction[i] - target[i]);
    return std::sqrt(s / target.size());
}

RmseReport offline_rmse(const EnsembleGaussianModel& model, const buffers::Batch& data, const std::string& split) {
    RmseReport r;
    r.split = split;
    r.count = data.size;
    if (data.size == 0) return r;
    std::vector<double> next, rewards;
    model.mean_prediction(data.states, data.actions, data.size, next, rewards);
    r.state_rmse = rmse(next, data.next_states);
    r.reward_rmse = rmse(rewards, data.rewards);
    return r;
}

}  // namespace dhmbpo::model
