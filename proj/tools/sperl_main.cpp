// Experiment runner and verification harness. Suites:
//   mv-train     portfolio training run; emits the three learning-curve CSVs
//   bpi-verify   random-instance equilibrium checks for the exact solver
//   q-learn      tabular learner on the benchmark chain (or a random instance)
//   oracle-fuzz  recursion-vs-enumeration maximum gap
// Exit status is 0 when every property check passes, 1 on check failure,
// 2 on usage or configuration errors.

#include "sperl/bpi.hpp"
#include "sperl/csv.hpp"
#include "sperl/exact_dp.hpp"
#include "sperl/instances.hpp"
#include "sperl/mv_app.hpp"
#include "sperl/sperl_q.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace {

using nlohmann::json;
using namespace sperl;

constexpr const char* kVersion = "sperl 0.1.0";

void reject_unknown_fields(const json& cfg, std::initializer_list<const char*> allowed,
                           const std::string& suite) {
    for (const auto& [key, value] : cfg.items()) {
        (void)value;
        bool ok = false;
        for (const char* name : allowed)
            if (key == name) ok = true;
        if (!ok)
            throw std::invalid_argument("unknown config field '" + key + "' for suite " + suite);
    }
}

void write_config_echo(const json& cfg, const std::filesystem::path& out_dir) {
    std::ofstream out(out_dir / "config.json");
    out << cfg.dump(2) << '\n';
}

void write_json(const json& doc, const std::filesystem::path& path) {
    std::ofstream out(path);
    out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------- mv-train

int run_mv_train(json cfg, const std::filesystem::path& out_dir) {
    reject_unknown_fields(cfg,
                          {"preset", "mu", "sigma", "rate_ann", "dt", "periods", "gamma",
                           "iterations", "batch_episodes", "exploration_radius",
                           "resample_kappa", "actor_rate", "model_free_tail", "seed"},
                          "mv-train");
    const std::string preset = cfg.value("preset", "desk");
    MarketParams params = mv_market_preset(preset, cfg.value("mu", 0.20));
    MvHyper hyper = mv_hyper_preset(preset);
    if (cfg.contains("sigma")) params.sigma = cfg["sigma"].get<double>();
    if (cfg.contains("rate_ann")) params.rate_ann = cfg["rate_ann"].get<double>();
    if (cfg.contains("dt")) params.dt = cfg["dt"].get<double>();
    if (cfg.contains("periods")) params.periods = cfg["periods"].get<int>();
    if (cfg.contains("gamma")) params.risk_aversion = cfg["gamma"].get<double>();
    if (cfg.contains("iterations")) hyper.iterations = cfg["iterations"].get<int>();
    if (cfg.contains("batch_episodes")) hyper.batch_episodes = cfg["batch_episodes"].get<int>();
    if (cfg.contains("exploration_radius"))
        hyper.exploration_radius = cfg["exploration_radius"].get<double>();
    if (cfg.contains("resample_kappa")) hyper.resample_kappa = cfg["resample_kappa"].get<int>();
    if (cfg.contains("actor_rate")) hyper.actor_rate = cfg["actor_rate"].get<double>();
    if (cfg.contains("model_free_tail")) hyper.model_free_tail = cfg["model_free_tail"].get<bool>();
    const std::uint64_t seed = cfg.value("seed", std::uint64_t{1});

    const MvTrainResult result = mv_train(params, hyper, seed);

    {
        CsvWriter wealth(out_dir / "curves_wealth.csv", {"window", "mean_xT", "stdev_xT"});
        for (const MvWealthRow& row : result.wealth_curve)
            wealth.row({static_cast<double>(row.window), row.mean, row.stdev});
    }
    {
        CsvWriter critic(out_dir / "curves_critic.csv",
                         {"iteration", "t", "w_u_g", "w_u_q", "w_uu_q", "true_w_u_g",
                          "true_w_u_q", "true_w_uu_q"});
        for (const MvCriticRow& row : result.critic_curve)
            critic.row({static_cast<double>(row.iteration), static_cast<double>(row.t),
                        row.g_w_u, row.q_w_u, row.q_w_uu, row.true_g_w_u, row.true_q_w_u,
                        row.true_q_w_uu});
    }
    {
        CsvWriter actor(out_dir / "curves_actor.csv", {"iteration", "t", "theta", "true_action"});
        for (const MvActorRow& row : result.actor_curve)
            actor.row({static_cast<double>(row.iteration), static_cast<double>(row.t),
                       row.allocation, row.true_action});
    }
    std::cout << "mv-train: " << hyper.iterations << " iterations, " << result.fit_skips
              << " skipped fits\n";
    return 0;
}

// -------------------------------------------------------------- bpi-verify

struct InstanceReport {
    bool converged = false;
    bool spe_ok = false;
    bool local_ok = false;
    int sweeps = 0;
    int local_sweeps = 0;
    int bad_verdicts = 0;  // lex comparisons that are not Greater/Equal
    json trace_dump;
};

RandomInstanceSpec spec_for(int index, std::uint64_t seed, RewardFamily family) {
    RandomInstanceSpec spec;
    spec.family = family;
    RngStream derive(seed);
    spec.seed = derive.substream("instance-" + std::to_string(index)).next_u64();
    return spec;
}

RewardFamily family_cycle(int index) {
    switch (index % 4) {
        case 0: return RewardFamily::time_consistent;
        case 1: return RewardFamily::hyperbolic;
        case 2: return RewardFamily::state_dependent;
        default: return RewardFamily::quadratic_mean;
    }
}

InstanceReport verify_one(const GeneratedInstance& inst, double local_radius, int max_iters,
                          bool want_trace) {
    InstanceReport report;
    const TabularPolicy initial = anti_greedy_terminal_policy(inst.problem);
    const BpiResult full = bpi_run(inst.problem, initial, ActionSpec::full_sweep(), max_iters);
    report.converged = full.trace.converged;
    report.sweeps = full.trace.sweep_count();
    report.spe_ok = spe_check(inst.problem, full.policy).ok;
    for (const BpiIterationRecord& rec : full.trace.sweeps)
        if (rec.vs_previous != LexVerdict::greater && rec.vs_previous != LexVerdict::equal)
            ++report.bad_verdicts;

    const BpiResult local =
        bpi_run(inst.problem, initial, ActionSpec::local_sweep(local_radius), max_iters);
    report.local_sweeps = local.trace.sweep_count();
    report.local_ok = local.trace.converged &&
                      local_spe_check(inst.problem, local.policy, local_radius).ok;

    if (want_trace) {
        json sweeps = json::array();
        for (const BpiIterationRecord& rec : full.trace.sweeps) {
            json entry;
            entry["lex_index"] = rec.lex_index;
            entry["verdict"] = rec.vs_previous == LexVerdict::greater ? "greater"
                               : rec.vs_previous == LexVerdict::equal ? "equal"
                               : rec.vs_previous == LexVerdict::less  ? "less"
                                                                      : "incomparable";
            entry["basis"] = rec.basis.slices;
            sweeps.push_back(std::move(entry));
        }
        report.trace_dump["sweeps"] = std::move(sweeps);
        report.trace_dump["initial_basis"] = full.trace.initial.basis.slices;
    }
    return report;
}

int run_bpi_verify(json cfg, const std::filesystem::path& out_dir, bool want_trace, int jobs) {
    reject_unknown_fields(cfg, {"instances", "seed", "local_radius", "max_iters"}, "bpi-verify");
    const int n = cfg.value("instances", 100);
    const std::uint64_t seed = cfg.value("seed", std::uint64_t{7});
    const double local_radius = cfg.value("local_radius", 0.6);
    const int max_iters = cfg.value("max_iters", 64);

    std::vector<InstanceReport> reports(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            const GeneratedInstance inst =
                generate_instance(spec_for(i, seed, family_cycle(i)));
            reports[static_cast<std::size_t>(i)] =
                verify_one(inst, local_radius, max_iters, want_trace);
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    int failures = 0;
    json histogram = json::object();
    json local_histogram = json::object();
    for (int i = 0; i < n; ++i) {
        const InstanceReport& rep = reports[static_cast<std::size_t>(i)];
        const bool ok = rep.converged && rep.spe_ok && rep.local_ok && rep.bad_verdicts == 0 &&
                        rep.sweeps == 2;
        if (!ok) ++failures;
        histogram[std::to_string(rep.sweeps)] =
            histogram.value(std::to_string(rep.sweeps), 0) + 1;
        local_histogram[std::to_string(rep.local_sweeps)] =
            local_histogram.value(std::to_string(rep.local_sweeps), 0) + 1;
        if (want_trace)
            write_json(rep.trace_dump,
                       out_dir / ("trace_" + std::to_string(i) + ".json"));
    }

    json summary;
    summary["instances"] = n;
    summary["failures"] = failures;
    summary["sweep_histogram"] = histogram;
    summary["local_sweep_histogram"] = local_histogram;
    write_json(summary, out_dir / "summary.json");
    std::cout << "bpi-verify: " << n - failures << "/" << n << " instances passed\n";
    return failures == 0 ? 0 : 1;
}

// ----------------------------------------------------------------- q-learn

int run_q_learn(json cfg, const std::filesystem::path& out_dir) {
    reject_unknown_fields(cfg,
                          {"episodes", "step_size", "exploration", "seed", "spe_check_every",
                           "stability_checks", "tolerance"},
                          "q-learn");
    QLearnConfig qcfg;
    qcfg.episode_cap = cfg.value("episodes", 20000);
    qcfg.step_size = cfg.value("step_size", 0.05);
    qcfg.exploration = cfg.value("exploration", 0.1);
    qcfg.seed = cfg.value("seed", std::uint64_t{1});
    qcfg.spe_check_every = cfg.value("spe_check_every", 0);
    qcfg.stability_checks = cfg.value("stability_checks", 0);
    const double tolerance = cfg.value("tolerance", 0.05);

    const TicProblem problem = hyperbolic_chain_problem();
    const QLearnResult result = q_learning_run(problem, qcfg);

    {
        CsvWriter curve(out_dir / "learning_curve.csv",
                        {"episode", "policy_changes", "max_td_error", "spe_violations"});
        for (const EpisodeLogRow& row : result.log)
            curve.row({static_cast<double>(row.episode), static_cast<double>(row.policy_changes),
                       row.max_td_error, static_cast<double>(row.spe_violations)});
    }

    // Exact reference from the solver side.
    const BpiResult exact =
        bpi_run(problem, anti_greedy_terminal_policy(problem), ActionSpec::full_sweep(), 16);
    const ValueTables exact_tables = evaluate_policy_tables(problem, exact.policy);
    const TabularPolicy greedy = greedy_policy(result.estimates, problem);
    const bool policy_match = greedy == exact.policy;

    double max_gap = 0.0;
    for (int t = 0; t < problem.horizon(); ++t)
        for (int x = 0; x < problem.state_space(t).size(); ++x)
            for (int u = 0; u < problem.action_space(t).size(); ++u) {
                if (result.visits[static_cast<std::size_t>(t)][static_cast<std::size_t>(x)]
                                 [static_cast<std::size_t>(u)] == 0)
                    continue;
                max_gap = std::max(max_gap,
                                   std::abs(result.estimates.action_value(t, x, u) -
                                            exact_tables.action_value(t, x, u)));
            }

    json summary;
    summary["episodes"] = result.episodes_run;
    summary["converged_flag"] = result.converged;
    summary["policy_matches_exact"] = policy_match;
    summary["max_abs_q_gap_visited"] = max_gap;
    summary["tolerance"] = tolerance;
    write_json(summary, out_dir / "summary.json");
    const bool ok = policy_match && max_gap < tolerance;
    std::cout << "q-learn: policy match " << (policy_match ? "yes" : "no") << ", max gap "
              << max_gap << "\n";
    return ok ? 0 : 1;
}

// ------------------------------------------------------------- oracle-fuzz

int run_oracle_fuzz(json cfg, const std::filesystem::path& out_dir, int jobs) {
    reject_unknown_fields(cfg, {"instances", "seed", "max_leaves"}, "oracle-fuzz");
    const int n = cfg.value("instances", 100);
    const std::uint64_t seed = cfg.value("seed", std::uint64_t{3});
    const std::int64_t max_leaves = cfg.value("max_leaves", std::int64_t{100000});

    std::vector<double> gaps(static_cast<std::size_t>(n), 0.0);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            const RandomInstanceSpec spec = spec_for(i, seed, family_cycle(i));
            const GeneratedInstance inst = generate_instance(spec);
            RngStream pol = RngStream(spec.seed).substream("policy");
            // Random comparison policy.
            TabularPolicy policy = TabularPolicy::constant(inst.problem, 0);
            for (int t = 0; t < inst.problem.horizon(); ++t)
                for (int x = 0; x < inst.problem.state_space(t).size(); ++x)
                    policy.set_action(t, x,
                                      static_cast<int>(pol.uniform_int(static_cast<std::uint64_t>(
                                          inst.problem.action_space(t).size()))));
            const ValueTables tables = evaluate_policy_tables(inst.problem, policy);
            double gap = 0.0;
            for (int t = 0; t < inst.problem.horizon(); ++t) {
                const PolicyTail tail = t + 1 < inst.problem.horizon()
                                            ? truncate(policy, t + 1)
                                            : PolicyTail::empty_from(t + 1);
                for (int x = 0; x < inst.problem.state_space(t).size(); ++x)
                    for (int u = 0; u < inst.problem.action_space(t).size(); ++u) {
                        const double oracle = oracle_value(inst.problem, concat(u, t, tail), t, x,
                                                           max_leaves);
                        gap = std::max(gap,
                                       std::abs(oracle - tables.action_value(t, x, u)));
                    }
            }
            gaps[static_cast<std::size_t>(i)] = gap;
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    double max_gap = 0.0;
    for (double g : gaps) max_gap = std::max(max_gap, g);
    json summary;
    summary["instances"] = n;
    summary["max_abs_gap"] = max_gap;
    summary["threshold"] = 1e-10;
    write_json(summary, out_dir / "summary.json");
    std::cout << "oracle-fuzz: max gap " << max_gap << " over " << n << " instances\n";
    return max_gap < 1e-10 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Equilibrium policy training and verification suites"};
    app.set_version_flag("--version", kVersion);

    std::string suite;
    std::string config_path;
    std::string out_dir = ".";
    bool trace = false;
    int jobs = 1;
    CLI::Option* seed_opt;
    CLI::Option* preset_opt;
    CLI::Option* instances_opt;
    CLI::Option* mu_opt;
    CLI::Option* max_leaves_opt;
    std::uint64_t seed = 0;
    std::string preset;
    int instances = 0;
    double mu = 0.0;
    std::int64_t max_leaves = 0;

    app.add_option("--suite", suite, "mv-train | bpi-verify | q-learn | oracle-fuzz")
        ->required();
    app.add_option("--config", config_path, "JSON config file; flags override its fields");
    seed_opt = app.add_option("--seed", seed, "root seed");
    preset_opt = app.add_option("--preset", preset, "desk | paper (mv-train)");
    app.add_option("--out", out_dir, "output directory");
    app.add_flag("--trace", trace, "dump per-iteration traces where supported");
    app.add_option("--jobs", jobs, "parallel instance workers");
    instances_opt = app.add_option("--instances", instances, "instance count");
    mu_opt = app.add_option("--mu", mu, "annualized mean return (mv-train)");
    max_leaves_opt = app.add_option("--max-leaves", max_leaves, "oracle enumeration cap");

    CLI11_PARSE(app, argc, argv);

    try {
        json cfg = json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw std::invalid_argument("cannot open config file: " + config_path);
            try {
                in >> cfg;
            } catch (const json::parse_error& err) {
                throw std::invalid_argument(std::string("config parse error: ") + err.what());
            }
        }
        if (seed_opt->count()) cfg["seed"] = seed;
        if (preset_opt->count()) cfg["preset"] = preset;
        if (instances_opt->count()) cfg["instances"] = instances;
        if (mu_opt->count()) cfg["mu"] = mu;
        if (max_leaves_opt->count()) cfg["max_leaves"] = max_leaves;

        const std::filesystem::path out(out_dir);
        std::filesystem::create_directories(out);
        write_config_echo(cfg, out);

        if (suite == "mv-train") return run_mv_train(cfg, out);
        if (suite == "bpi-verify") return run_bpi_verify(cfg, out, trace, jobs);
        if (suite == "q-learn") return run_q_learn(cfg, out);
        if (suite == "oracle-fuzz") return run_oracle_fuzz(cfg, out, jobs);
        std::cerr << "unknown suite: " << suite << "\n";
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    }
}
