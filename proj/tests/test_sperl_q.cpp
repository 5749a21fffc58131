#include "sperl/instances.hpp"
#include "sperl/sperl_q.hpp"
#include "support/classic_vi.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace sperl;

namespace {

// Small stationary TC instance with a deterministic kernel.
TicProblem small_tc_problem() {
    RandomInstanceSpec spec;
    spec.family = RewardFamily::time_consistent;
    spec.horizon_min = spec.horizon_max = 2;
    spec.states_min = spec.states_max = 2;
    spec.actions_min = spec.actions_max = 2;
    spec.kernel_sparsity = 0.0;
    spec.seed = 1234;
    return generate_instance(spec).problem;
}

} // namespace

TEST_CASE("a unit step size overwrites entries with their targets") {
    const TicProblem chain = hyperbolic_chain_problem();
    const TabularPolicy policy = TabularPolicy::constant(chain, 0);
    TabularEstimates est(chain, 0.0);
    QLearnConfig cfg;
    cfg.step_size = 1.0;
    RngStream env(1);
    const Trajectory traj = rollout(chain, policy, 0, env);
    const int T = chain.horizon();
    for (int t = T - 1; t >= 0; --t) td_update(est, chain, traj, t, policy, cfg);

    const int t = T - 1;
    const int x = traj.state_index[static_cast<std::size_t>(t)];
    const int u = traj.action_index[static_cast<std::size_t>(t)];
    CHECK(est.mean_adj(t, x, u) ==
          doctest::Approx(traj.state[static_cast<std::size_t>(T)]).epsilon(1e-15));
    // boundary action-value target assembled from the just-written entries
    const double expected_q =
        est.reward_adj(t, x, u, t, t, x) + est.terminal_adj(t, x, u, t, x) +
        chain.rewards().mean_term(t, traj.state[static_cast<std::size_t>(t)],
                                  est.mean_adj(t, x, u));
    CHECK(est.action_value(t, x, u) == doctest::Approx(expected_q).epsilon(1e-15));
}

TEST_CASE("one episode moves a fresh entry toward the exact value by alpha") {
    // single-epoch problem with deterministic kernel
    RandomInstanceSpec spec;
    spec.family = RewardFamily::hyperbolic;
    spec.horizon_min = spec.horizon_max = 1;
    spec.states_min = spec.states_max = 3;
    spec.actions_min = spec.actions_max = 2;
    spec.kernel_sparsity = 0.85;  // sparse rows collapse toward determinism
    spec.seed = 77;
    const TicProblem problem = generate_instance(spec).problem;

    // force a deterministic row by rebuilding with sparsity handled: find an
    // (x, u) whose row is degenerate
    int x0 = -1, u0 = -1;
    for (int x = 0; x < problem.state_space(0).size() && x0 < 0; ++x)
        for (int u = 0; u < problem.action_space(0).size() && x0 < 0; ++u) {
            const auto& row = problem.kernel_row(0, x, u);
            for (double p : row)
                if (p == 1.0) {
                    x0 = x;
                    u0 = u;
                }
        }
    if (x0 < 0) return;  // seed produced no degenerate row; other tests cover this

    const TabularPolicy policy = TabularPolicy::constant(problem, u0);
    ValueTables exact = eval_adjustments(problem, policy);
    eval_q(exact, problem, policy);

    TabularEstimates est(problem, 0.0);
    QLearnConfig cfg;
    cfg.step_size = 0.25;
    RngStream env(5);
    Trajectory traj = rollout(problem, policy, x0, env);
    td_update(est, problem, traj, 0, policy, cfg);
    // the action-value target reads the adjustment entries written lines
    // earlier in the same step, each already scaled by alpha
    const double alpha = cfg.step_size;
    CHECK(est.action_value(0, x0, u0) ==
          doctest::Approx(alpha * alpha * exact.action_value(0, x0, u0)).epsilon(1e-12));
}

TEST_CASE("exact tables are a fixed point of the sampled update") {
    const TicProblem chain = hyperbolic_chain_problem();
    const BpiResult spe = bpi_run(chain, anti_greedy_terminal_policy(chain),
                                  ActionSpec::full_sweep(), 16);
    TabularEstimates est = evaluate_policy_tables(chain, spe.policy);
    QLearnConfig cfg;
    cfg.step_size = 0.7;
    RngStream env(2), expl(3);
    double worst = 0.0;
    for (int x0 = 0; x0 < 4; ++x0)
        for (int rep = 0; rep < 5; ++rep) {
            const Trajectory traj = rollout(chain, spe.policy, x0, env, &expl,
                                            Exploration::eps_greedy(0.5));
            for (int t = chain.horizon() - 1; t >= 0; --t)
                worst = std::max(worst, td_update(est, chain, traj, t, spe.policy, cfg));
        }
    CHECK(worst < 1e-12);
}

TEST_CASE("the sampled update touches only the visited scope") {
    const TicProblem chain = hyperbolic_chain_problem();
    const TabularPolicy policy = TabularPolicy::constant(chain, 1);
    // varied initial entries so every bootstrap target differs from its entry
    TabularEstimates est(chain, 0.0);
    RngStream fill(404);
    for (int t = 0; t < chain.horizon(); ++t)
        for (int x = 0; x < 4; ++x)
            for (int u = 0; u < 2; ++u) {
                est.action_value(t, x, u) = fill.uniform(-1, 1);
                est.mean_adj(t, x, u) = fill.uniform(-1, 1);
                for (int tau = 0; tau <= t; ++tau)
                    for (int y = 0; y < 4; ++y) {
                        est.terminal_adj(t, x, u, tau, y) = fill.uniform(-1, 1);
                        for (int m = t; m < chain.horizon(); ++m)
                            est.reward_adj(t, x, u, tau, m, y) = fill.uniform(-1, 1);
                    }
            }
    const TabularEstimates before = est;
    QLearnConfig cfg;
    cfg.step_size = 0.5;
    RngStream env(7);
    const Trajectory traj = rollout(chain, policy, 2, env);
    const int t = 1;
    td_update(est, chain, traj, t, policy, cfg);

    const int xt = traj.state_index[static_cast<std::size_t>(t)];
    const int ut = traj.action_index[static_cast<std::size_t>(t)];
    for (int x = 0; x < 4; ++x)
        for (int u = 0; u < 2; ++u) {
            const bool visited = (x == xt && u == ut);
            CHECK((est.action_value(t, x, u) != before.action_value(t, x, u)) == visited);
            CHECK((est.mean_adj(t, x, u) != before.mean_adj(t, x, u)) == visited);
            for (int tau = 0; tau <= t; ++tau)
                for (int y = 0; y < 4; ++y) {
                    const bool y_on_prefix =
                        chain.state_space(tau).value(y) == traj.state[0] ||
                        chain.state_space(tau).value(y) == traj.state[1];
                    const bool in_scope = visited && y_on_prefix;
                    CHECK((est.terminal_adj(t, x, u, tau, y) !=
                           before.terminal_adj(t, x, u, tau, y)) == in_scope);
                    for (int m = t; m < chain.horizon(); ++m)
                        CHECK((est.reward_adj(t, x, u, tau, m, y) !=
                               before.reward_adj(t, x, u, tau, m, y)) == in_scope);
                }
        }
    // other epochs untouched
    for (int other : {0, 2})
        for (int x = 0; x < 4; ++x)
            for (int u = 0; u < 2; ++u)
                CHECK(est.action_value(other, x, u) == before.action_value(other, x, u));
}

TEST_CASE("runs are reproducible from the seed") {
    const TicProblem chain = hyperbolic_chain_problem();
    QLearnConfig cfg;
    cfg.episode_cap = 400;
    cfg.seed = 9;
    cfg.stability_checks = 0;
    const QLearnResult a = q_learning_run(chain, cfg);
    const QLearnResult b = q_learning_run(chain, cfg);
    CHECK(a.policy == b.policy);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].policy_changes == b.log[i].policy_changes);
        CHECK(a.log[i].max_td_error == b.log[i].max_td_error);
    }
    for (int t = 0; t < 3; ++t)
        for (int x = 0; x < 4; ++x)
            for (int u = 0; u < 2; ++u)
                CHECK(a.estimates.action_value(t, x, u) == b.estimates.action_value(t, x, u));
}

TEST_CASE("time-consistent learning agrees with a plain finite-horizon learner") {
    const TicProblem problem = small_tc_problem();
    QLearnConfig cfg;
    cfg.episode_cap = 4000;
    cfg.step_size = 0.1;
    cfg.exploration = 0.25;
    cfg.seed = 31;
    cfg.stability_checks = 0;
    const QLearnResult learned = q_learning_run(problem, cfg);
    const TabularPolicy greedy = greedy_policy(learned.estimates, problem);

    // plain finite-horizon q-learner, written here, its own streams
    const int T = problem.horizon();
    std::vector<std::vector<std::vector<double>>> table(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t)
        table[static_cast<std::size_t>(t)].assign(
            static_cast<std::size_t>(problem.state_space(t).size()),
            std::vector<double>(static_cast<std::size_t>(problem.action_space(t).size()), 0.0));
    RngStream env(100), expl(101), start(102);
    const TicRewards& rw = problem.rewards();
    for (int ep = 0; ep < 4000; ++ep) {
        int x = static_cast<int>(start.uniform_int(
            static_cast<std::uint64_t>(problem.state_space(0).size())));
        std::vector<int> xs{x}, us;
        for (int t = 0; t < T; ++t) {
            auto& row = table[static_cast<std::size_t>(t)][static_cast<std::size_t>(x)];
            int act = 0;
            for (std::size_t u = 1; u < row.size(); ++u)
                if (row[u] > row[static_cast<std::size_t>(act)]) act = static_cast<int>(u);
            if (expl.bernoulli(0.25))
                act = static_cast<int>(expl.uniform_int(static_cast<std::uint64_t>(row.size())));
            us.push_back(act);
            x = problem.sample_next_index(t, x, act, env);
            xs.push_back(x);
        }
        for (int t = T - 1; t >= 0; --t) {
            const double next_val = problem.state_space(t + 1).value(
                xs[static_cast<std::size_t>(t) + 1]);
            double target;
            if (t == T - 1) {
                target = rw.intermediate(t, t, 0.0, next_val,
                                         problem.action_space(t).value(
                                             us[static_cast<std::size_t>(t)])) +
                         rw.terminal(t, 0.0, next_val);
            } else {
                const auto& next_row =
                    table[static_cast<std::size_t>(t) + 1]
                         [static_cast<std::size_t>(xs[static_cast<std::size_t>(t) + 1])];
                double best = next_row[0];
                for (double q : next_row) best = std::max(best, q);
                target = rw.intermediate(t, t, 0.0,
                                         problem.state_space(t).value(
                                             xs[static_cast<std::size_t>(t)]),
                                         problem.action_space(t).value(
                                             us[static_cast<std::size_t>(t)])) +
                         best;
            }
            double& entry = table[static_cast<std::size_t>(t)]
                                 [static_cast<std::size_t>(xs[static_cast<std::size_t>(t)])]
                                 [static_cast<std::size_t>(us[static_cast<std::size_t>(t)])];
            entry += 0.1 * (target - entry);
        }
    }
    for (int t = 0; t < T; ++t)
        for (int xx = 0; xx < problem.state_space(t).size(); ++xx) {
            auto& row = table[static_cast<std::size_t>(t)][static_cast<std::size_t>(xx)];
            int act = 0;
            for (std::size_t u = 1; u < row.size(); ++u)
                if (row[u] > row[static_cast<std::size_t>(act)]) act = static_cast<int>(u);
            CHECK(greedy.action(t, xx) == act);
        }
    // and both agree with exact backward induction
    const testing::ClassicViResult vi = testing::classic_value_iteration(problem);
    for (int t = 0; t < T; ++t)
        for (int xx = 0; xx < problem.state_space(t).size(); ++xx)
            CHECK(greedy.action(t, xx) == vi.policy.action(t, xx));
}

TEST_CASE("the visitation-count schedule also recovers the equilibrium") {
    const TicProblem chain = hyperbolic_chain_problem();
    QLearnConfig cfg;
    cfg.episode_cap = 6000;
    cfg.seed = 17;
    cfg.visit_count_schedule = true;
    cfg.stability_checks = 0;
    const QLearnResult result = q_learning_run(chain, cfg);
    const BpiResult exact = bpi_run(chain, anti_greedy_terminal_policy(chain),
                                    ActionSpec::full_sweep(), 16);
    CHECK(greedy_policy(result.estimates, chain) == exact.policy);
}

TEST_CASE("stability detection stops stationary runs early") {
    const TicProblem chain = hyperbolic_chain_problem();
    QLearnConfig cfg;
    cfg.episode_cap = 20000;
    cfg.seed = 3;
    cfg.stability_period = 100;
    cfg.stability_checks = 3;
    const QLearnResult result = q_learning_run(chain, cfg);
    CHECK(result.converged);
    CHECK(result.episodes_run < 20000);
}

TEST_CASE("configuration bounds are enforced") {
    const TicProblem chain = hyperbolic_chain_problem();
    QLearnConfig bad;
    bad.step_size = 0.0;
    CHECK_THROWS_AS(q_learning_run(chain, bad), std::invalid_argument);
    bad = QLearnConfig{};
    bad.exploration = 1.5;
    CHECK_THROWS_AS(q_learning_run(chain, bad), std::invalid_argument);
    bad = QLearnConfig{};
    bad.episode_cap = 0;
    CHECK_THROWS_AS(q_learning_run(chain, bad), std::invalid_argument);
}
