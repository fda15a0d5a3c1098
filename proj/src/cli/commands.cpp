#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dhmbpo/algo/trainer.hpp"
#include "dhmbpo/analysis/bias_sem.hpp"
#include "dhmbpo/analysis/config_file.hpp"
#include "dhmbpo/analysis/histogram.hpp"
#include "dhmbpo/analysis/rmedse.hpp"
#include "dhmbpo/analysis/stats.hpp"
#include "dhmbpo/cli/cli.hpp"
#include "dhmbpo/core/error.hpp"
#include "json.hpp"

#ifndef DHMBPO_VERSION
#define DHMBPO_VERSION "unknown"
#endif

namespace dhmbpo::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

fs::path output_root() {
    const char* env = std::getenv("DHMBPO_OUTPUT_ROOT");
    return env && *env ? fs::path(env) : fs::path("runs");
}

namespace {

// Thrown for bad arguments detected after parsing.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
    const auto probe = dir / ".write_test";
    std::ofstream out(probe);
    if (!out) throw IoError("output directory '" + dir.string() + "' is not writable");
    out.close();
    fs::remove(probe, ec);
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(item, &used);
            if (used != item.size() || v < 0) throw std::invalid_argument(item);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw UsageError("expected a comma-separated list of non-negative integers, got '" + text + "'");
        }
    }
    if (out.empty()) throw UsageError("empty list");
    return out;
}

const CLI::Validator kVariant(
    [](std::string& text) {
        try {
            algo::parse_variant(text);
            return std::string();
        } catch (const ContractViolation& e) {
            return std::string(e.what());
        }
    },
    "D,T");

const CLI::Validator kTask(
    [](std::string& text) {
        for (const auto& id : envs::task_ids())
            if (id == text) return std::string();
        std::string known;
        for (const auto& id : envs::task_ids()) known += (known.empty() ? "" : ", ") + id;
        return "unknown task '" + text + "' (known: " + known + ")";
    },
    "TASK");

struct TrainArgs {
    std::string task = "pendulum-swingup";
    std::string variant;
    std::uint64_t seed = 0;
    std::size_t steps = 0;
    std::string preset = "default";
    std::string config_file;
    std::vector<std::string> sets;
    std::string out;
    std::string resume;
    std::size_t checkpoint_every = 0;
    bool no_checkpoint = false;
    // Options that would change a checkpointed configuration.
    std::vector<CLI::Option*> config_options;
};

void add_train_options(CLI::App* cmd, TrainArgs& a) {
    a.config_options.push_back(
        cmd->add_option("--task", a.task, "Task id")->check(kTask)->capture_default_str());
    a.config_options.push_back(
        cmd->add_option("--variant", a.variant, "Horizons D,T: 20,5 DHMBPO, 0,5 SVG-style, 20,0 MBPO-style, 0,0 SAC")
            ->check(kVariant));
    cmd->add_option("--seed", a.seed, "Run seed")->required();
    cmd->add_option("--steps", a.steps, "Environment-step budget");
    a.config_options.push_back(cmd->add_option("--preset", a.preset, "Base settings: default or desk")
                                   ->check(CLI::IsMember({"default", "desk"}))
                                   ->capture_default_str());
    a.config_options.push_back(
        cmd->add_option("--config", a.config_file, "key = value settings file")->check(CLI::ExistingFile));
    a.config_options.push_back(cmd->add_option("--set", a.sets, "Extra KEY=VALUE setting (repeatable)"));
    cmd->add_option("--out", a.out, "Run directory (default: <output root>/train/<task>/<D_T>/seed<seed>)");
    cmd->add_option("--resume", a.resume, "Continue from a checkpoint directory; only --steps may change")
        ->check(CLI::ExistingDirectory);
    cmd->add_option("--checkpoint-every", a.checkpoint_every, "Also checkpoint every N episodes (0: only at the end)");
    cmd->add_flag("--no-checkpoint", a.no_checkpoint, "Skip the final checkpoint");
}

algo::AlgoConfig build_config(const TrainArgs& a) {
    algo::AlgoConfig cfg = algo::preset(a.preset);
    if (!a.config_file.empty()) analysis::apply_entries(cfg, analysis::read_config_file(a.config_file));
    for (const auto& s : a.sets) {
        const auto [k, v] = analysis::split_assignment(s);
        cfg.set(k, v);
    }
    if (!a.variant.empty()) cfg.variant = algo::parse_variant(a.variant);
    if (a.steps > 0) cfg.total_steps = a.steps;
    cfg.validate();
    return cfg;
}

fs::path run_dir(const TrainArgs& a, const algo::AlgoConfig& cfg, const std::string& kind) {
    if (!a.out.empty()) return a.out;
    return output_root() / kind / a.task /
           (std::to_string(cfg.variant.dr_horizon) + "_" + std::to_string(cfg.variant.tr_horizon)) /
           ("seed" + std::to_string(a.seed));
}

void write_manifest(const fs::path& dir, const algo::Trainer& t, const std::string& preset) {
    json j;
    j["task"] = t.task_id();
    j["seed"] = t.seed();
    j["variant"] = t.config().variant.name();
    j["model"] = t.config().variant.uses_model() ? "enabled" : "disabled";
    j["preset"] = preset;
    j["config"] = t.config().entries();
    j["code_version"] = DHMBPO_VERSION;
    j["start_time"] = utc_now();
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write manifest in '" + dir.string() + "'");
    out << j.dump(2) << '\n';
}

std::unique_ptr<algo::Trainer> make_trainer(const TrainArgs& a, fs::path& dir) {
    std::unique_ptr<algo::Trainer> t;
    if (!a.resume.empty()) {
        for (const auto* opt : a.config_options)
            if (opt->count() > 0)
                throw UsageError(opt->get_name() + " cannot be combined with --resume; the checkpoint fixes the configuration");
        t = algo::Trainer::resume(a.resume);
        if (t->seed() != a.seed) throw UsageError("--seed does not match the checkpoint");
        if (a.steps > 0) t->set_total_steps(a.steps);
    } else {
        t = std::make_unique<algo::Trainer>(build_config(a), a.task, a.seed);
    }
    dir = run_dir(a, t->config(), "train");
    ensure_dir(dir);
    write_manifest(dir, *t, a.preset);
    return t;
}

void finish_run(const algo::Trainer& t, const fs::path& dir, const TrainArgs& a) {
    t.write_metrics(dir / "metrics.csv");
    t.write_updates(dir / "updates.csv");
    if (!a.no_checkpoint) t.save_checkpoint(dir / "checkpoint");
    if (!t.metrics().empty()) {
        const auto& last = t.metrics().back();
        std::cout << "final test return " << last.test_return_mean << " +- " << last.test_return_std << " at step "
                  << last.env_step << "\n";
    }
    std::cout << "wrote " << (dir / "metrics.csv").string() << "\n";
}

void train_loop(algo::Trainer& t, const fs::path& dir, const TrainArgs& a) {
    std::size_t since = 0;
    while (!t.finished()) {
        t.iterate();
        if (a.checkpoint_every > 0 && ++since >= a.checkpoint_every) {
            t.save_checkpoint(dir / "checkpoint");
            since = 0;
        }
    }
}

int cmd_train(const TrainArgs& a) {
    fs::path dir;
    auto t = make_trainer(a, dir);
    train_loop(*t, dir, a);
    finish_run(*t, dir, a);
    return kOk;
}

int cmd_histograms(const TrainArgs& a, std::size_t cadence, std::size_t bins) {
    if (cadence == 0) throw UsageError("--cadence must be positive");
    fs::path dir;
    auto t = make_trainer(a, dir);
    analysis::RunningHistogram rewards("reward", bins), targets("target", bins);
    std::vector<analysis::HistogramSnapshot> snaps;
    std::size_t next = cadence;
    algo::TrainerHooks hooks;
    hooks.on_critic = [&](const algo::CriticTrace& tr) {
        if (tr.env_step < next) return;
        next = (tr.env_step / cadence + 1) * cadence;
        snaps.push_back(rewards.observe(tr.batch->rewards, tr.env_step));
        std::vector<double> y;
        for (std::size_t i = 0; i < tr.target->values.size(); ++i)
            if (tr.target->valid[i]) y.push_back(tr.target->values[i]);
        snaps.push_back(targets.observe(y, tr.env_step));
    };
    t->set_hooks(hooks);
    train_loop(*t, dir, a);
    finish_run(*t, dir, a);
    analysis::write_histograms_csv(dir / "histograms.csv", snaps);
    std::cout << "wrote " << (dir / "histograms.csv").string() << " (" << snaps.size() << " snapshots)\n";
    return kOk;
}

int cmd_eval(const std::string& checkpoint, std::size_t episodes, std::uint64_t seed, const std::string& out) {
    auto t = algo::Trainer::resume(checkpoint);
    const auto ret = t->evaluate(episodes, seed);
    const fs::path path = out.empty() ? fs::path(checkpoint) / "eval.csv" : fs::path(out);
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    std::ofstream f(path);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << "episode,return\n";
    char buf[64];
    for (std::size_t i = 0; i < ret.returns.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, ret.returns[i]);
        f << buf;
    }
    std::cout << "test return " << ret.mean << " +- " << ret.std << " over " << episodes << " episodes\n";
    return kOk;
}

struct RmedseArgs {
    std::string checkpoint, out, mode = "both";
    std::size_t seeds = 8, probes = 256, mc_rollouts = 256, mc_horizon = 1000, iterations = 2000, every = 100;
    std::uint64_t probe_seed = 0;
};

int cmd_rmedse(const RmedseArgs& a) {
    auto t = algo::Trainer::resume(a.checkpoint);
    const fs::path dir = a.out.empty() ? output_root() / "rmedse" / t->task_id() : fs::path(a.out);
    ensure_dir(dir);
    spdlog::info("Monte-Carlo ground truth: {} probes x {} rollouts x {} steps", a.probes, a.mc_rollouts,
                 a.mc_horizon);
    const auto probes = analysis::make_probes(*t, a.probes, a.mc_rollouts, a.mc_horizon, a.probe_seed);
    {
        std::ofstream f(dir / "probes.csv");
        if (!f) throw IoError("cannot write probes.csv");
        f << "probe,truth\n";
        char buf[64];
        for (std::size_t i = 0; i < probes.truth.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, probes.truth[i]);
            f << buf;
        }
    }
    analysis::CriticLearningConfig cc;
    cc.iterations = a.iterations;
    cc.eval_every = a.every;
    std::vector<analysis::RmedseRecord> all;
    for (const bool with_dr : {true, false}) {
        if ((with_dr && a.mode == "without-dr") || (!with_dr && a.mode == "with-dr")) continue;
        for (std::uint64_t s = 0; s < a.seeds; ++s) {
            auto rec = analysis::critic_learning_curve(*t, probes, with_dr, s, cc);
            spdlog::info("{} seed {}: E(0) {:.4f} -> E({}) {:.4f}", with_dr ? "with DR" : "without DR", s,
                         rec.front().error, rec.back().iteration, rec.back().error);
            all.insert(all.end(), rec.begin(), rec.end());
        }
    }
    analysis::write_rmedse_csv(dir / "rmedse.csv", all);

    // Seed means per (variant, iteration).
    std::map<std::pair<int, std::size_t>, std::vector<double>> groups;
    for (const auto& r : all) groups[{r.with_dr ? 1 : 0, r.iteration}].push_back(r.error);
    std::ofstream f(dir / "rmedse_summary.csv");
    if (!f) throw IoError("cannot write rmedse_summary.csv");
    f << "with_dr,iteration,mean_error,seeds\n";
    char buf[96];
    for (const auto& [key, v] : groups) {
        std::snprintf(buf, sizeof buf, "%d,%zu,%.17g,%zu\n", key.first, key.second, analysis::mean(v), v.size());
        f << buf;
    }
    std::cout << "wrote " << (dir / "rmedse.csv").string() << "\n";
    return kOk;
}

struct GradArgs {
    bool lq = false;
    std::string checkpoint, out, horizons = "1,3,5,7,9";
    std::size_t states = 256, rollouts = 256, truth = 9;
    double critic_scale = 0.5;
    std::uint64_t seed = 0;
};

int cmd_grad_bias(const GradArgs& a) {
    if (a.lq == !a.checkpoint.empty()) throw UsageError("give exactly one of --lq or --checkpoint");
    if (a.rollouts < 2) throw UsageError("--rollouts must be at least 2 (SEM is undefined otherwise)");
    const auto horizons = parse_sizes(a.horizons);
    std::vector<analysis::BiasSemRecord> rec;
    fs::path path;
    if (a.lq) {
        analysis::LqBiasSemConfig c;
        c.horizons = horizons;
        c.states = a.states;
        c.rollouts = a.rollouts;
        c.critic_scale = a.critic_scale;
        c.seed = a.seed;
        rec = analysis::lq_bias_sem(c);
        path = a.out.empty() ? output_root() / "grad_bias" / "lq.csv" : fs::path(a.out);
    } else {
        auto t = algo::Trainer::resume(a.checkpoint);
        analysis::ModelBiasSemConfig c;
        c.horizons = horizons;
        c.states = a.states;
        c.rollouts = a.rollouts;
        c.truth_horizon = a.truth;
        c.seed = a.seed;
        rec = analysis::model_bias_sem(*t, c);
        path = a.out.empty() ? output_root() / "grad_bias" / (t->task_id() + ".csv") : fs::path(a.out);
    }
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    analysis::write_bias_sem_csv(path, rec);
    for (const auto& r : rec) std::cout << "t=" << r.horizon << " bias " << r.bias << " sem " << r.sem << "\n";
    std::cout << "wrote " << path.string() << "\n";
    return kOk;
}

analysis::Curve read_run(const fs::path& dir) {
    std::ifstream m(dir / "manifest.json");
    if (!m) throw IoError("no manifest.json in '" + dir.string() + "'");
    const json j = json::parse(m);
    analysis::Curve c;
    c.task = j.at("task").get<std::string>();
    c.label = dir.string();
    std::ifstream in(dir / "metrics.csv");
    if (!in) throw IoError("no metrics.csv in '" + dir.string() + "'");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto row = algo::parse_metrics(line);
        c.steps.push_back(static_cast<double>(row.env_step));
        c.returns.push_back(row.test_return_mean);
    }
    return c;
}

std::map<std::string, double> read_baselines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read baselines '" + path.string() + "'");
    std::map<std::string, double> out;
    std::string line;
    std::getline(in, line);  // task,return
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw UsageError("baselines line without a comma: '" + line + "'");
        out[line.substr(0, comma)] = std::strtod(line.c_str() + comma + 1, nullptr);
    }
    return out;
}

int cmd_aggregate(const std::vector<std::string>& runs, const std::string& baselines, std::size_t grid,
                  const std::string& out) {
    std::vector<analysis::Curve> curves;
    for (const auto& r : runs) curves.push_back(read_run(r));
    const auto res = analysis::aggregate(curves, read_baselines(baselines), grid);
    const fs::path path = out.empty() ? output_root() / "aggregate.csv" : fs::path(out);
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    std::ofstream f(path);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << "step_fraction,mean,median,iqm,runs\n";
    char buf[160];
    for (const auto& r : res.rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%zu\n", r.step_fraction, r.mean, r.median, r.iqm,
                      r.runs);
        f << buf;
    }
    for (const auto& t : res.excluded_tasks) std::cerr << "excluded task without baseline: " << t << "\n";
    std::cout << "wrote " << path.string() << "\n";
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"Double-horizon model-based policy optimization lab"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train one agent and write manifest, metrics and a checkpoint");
    add_train_options(train, train_args);

    TrainArgs hist_args;
    std::size_t cadence = 10000, bins = 64;
    auto* hist = app.add_subcommand("histograms", "Train while recording batch reward and target histograms");
    add_train_options(hist, hist_args);
    hist->add_option("--cadence", cadence, "Environment steps between snapshots")->capture_default_str();
    hist->add_option("--bins", bins, "Regular bins per snapshot")->check(CLI::PositiveNumber)->capture_default_str();

    std::string eval_ckpt, eval_out;
    std::size_t eval_episodes = 10;
    std::uint64_t eval_seed = 0;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint with deterministic actions");
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--episodes", eval_episodes)->check(CLI::PositiveNumber)->capture_default_str();
    eval->add_option("--seed", eval_seed)->capture_default_str();
    eval->add_option("--out", eval_out, "CSV path (default: <checkpoint>/eval.csv)");

    RmedseArgs rm;
    auto* rmedse = app.add_subcommand("rmedse", "Critic re-learning with and without distribution rollouts");
    rmedse->add_option("--checkpoint", rm.checkpoint)->required()->check(CLI::ExistingDirectory);
    rmedse->add_option("--seeds", rm.seeds, "Critic re-initialization seeds 0..n-1")->capture_default_str();
    rmedse->add_option("--probes", rm.probes)->check(CLI::PositiveNumber)->capture_default_str();
    rmedse->add_option("--mc-rollouts", rm.mc_rollouts)->check(CLI::PositiveNumber)->capture_default_str();
    rmedse->add_option("--mc-horizon", rm.mc_horizon, "Agent steps per Monte-Carlo rollout")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    rmedse->add_option("--iterations", rm.iterations)->capture_default_str();
    rmedse->add_option("--eval-every", rm.every)->check(CLI::PositiveNumber)->capture_default_str();
    rmedse->add_option("--mode", rm.mode)->check(CLI::IsMember({"both", "with-dr", "without-dr"}))->capture_default_str();
    rmedse->add_option("--probe-seed", rm.probe_seed)->capture_default_str();
    rmedse->add_option("--out", rm.out, "Output directory");

    GradArgs ga;
    auto* grad = app.add_subcommand("grad-bias", "Bias and standard error of value gradients across TR horizons");
    grad->add_flag("--lq", ga.lq, "Closed-form linear-quadratic system instead of a checkpoint");
    grad->add_option("--checkpoint", ga.checkpoint)->check(CLI::ExistingDirectory);
    grad->add_option("--horizons", ga.horizons)->capture_default_str();
    grad->add_option("--states", ga.states)->check(CLI::Range(2, 1 << 20))->capture_default_str();
    grad->add_option("--rollouts", ga.rollouts)->capture_default_str();
    grad->add_option("--truth", ga.truth, "Reference horizon for checkpoints")->capture_default_str();
    grad->add_option("--critic-scale", ga.critic_scale, "LQ terminal critic scale")->capture_default_str();
    grad->add_option("--seed", ga.seed)->capture_default_str();
    grad->add_option("--out", ga.out, "CSV path");

    std::vector<std::string> agg_runs;
    std::string agg_baselines, agg_out;
    std::size_t agg_grid = 20;
    auto* agg = app.add_subcommand("aggregate", "Baseline-normalized mean, median and IQM curves");
    agg->add_option("--run", agg_runs, "Run directory with manifest.json and metrics.csv (repeatable)")
        ->required()
        ->check(CLI::ExistingDirectory);
    agg->add_option("--baselines", agg_baselines, "CSV task,return with baseline final returns")
        ->required()
        ->check(CLI::ExistingFile);
    agg->add_option("--grid", agg_grid)->check(CLI::PositiveNumber)->capture_default_str();
    agg->add_option("--out", agg_out, "CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << "\n" << app.help();
        return kUsage;
    }

    spdlog::set_level(spdlog::level::from_str(log_level));
    try {
        if (*train) return cmd_train(train_args);
        if (*hist) return cmd_histograms(hist_args, cadence, bins);
        if (*eval) return cmd_eval(eval_ckpt, eval_episodes, eval_seed, eval_out);
        if (*rmedse) return cmd_rmedse(rm);
        if (*grad) return cmd_grad_bias(ga);
        if (*agg) return cmd_aggregate(agg_runs, agg_baselines, agg_grid, agg_out);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ContractViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "failed: " << e.what() << "\n";
        return kFailure;
    }
    return kUsage;
}

}  // namespace dhmbpo::cli
