#include "sperl/sperl_q.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sperl {

namespace {

// Distinct state values on the trajectory prefix X_t, X_{t-1}, ..., X_0,
// in first-occurrence order.
std::vector<double> prefix_state_values(const Trajectory& traj, int t) {
    std::vector<double> out;
    for (int j = t; j >= 0; --j) {
        const double v = traj.state[static_cast<std::size_t>(j)];
        if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
    return out;
}

double nudge(double& entry, double target, double alpha) {
    const double err = target - entry;
    entry += alpha * err;
    return err;
}

} // namespace

double td_update(TabularEstimates& est, const TicProblem& problem, const Trajectory& traj, int t,
                 const TabularPolicy& policy_new, const QLearnConfig& cfg,
                 std::vector<std::vector<std::vector<int>>>* visit_counts) {
    const int T = problem.horizon();
    const TicRewards& rw = problem.rewards();
    const int x = traj.state_index[static_cast<std::size_t>(t)];
    const int u = traj.action_index[static_cast<std::size_t>(t)];
    const int xn = traj.state_index[static_cast<std::size_t>(t) + 1];
    const double x_val = traj.state[static_cast<std::size_t>(t)];
    const double u_val = traj.action[static_cast<std::size_t>(t)];
    const double next_val = traj.state[static_cast<std::size_t>(t) + 1];
    const bool boundary = (t == T - 1);
    const int un = boundary ? -1 : policy_new.action(t + 1, xn);

    double alpha = cfg.step_size;
    if (visit_counts) {
        int& n = (*visit_counts)[static_cast<std::size_t>(t)][static_cast<std::size_t>(x)]
                                [static_cast<std::size_t>(u)];
        ++n;
        alpha = 1.0 / static_cast<double>(n);
    }

    const std::vector<double> prefix = prefix_state_values(traj, t);
    for (int tau = t; tau >= 0; --tau) {
        const Space& ys = problem.state_space(tau);
        for (double y_val : prefix) {
            // Evaluation states must belong to the tau-time space.
            const int y = ys.index_of(y_val);
            if (y < 0) continue;

            for (int m = t; m < T; ++m) {
                double target;
                if (m == t) {
                    if (rw.has_raw_channel())
                        target = rw.transform(tau, y_val,
                                              traj.raw_reward[static_cast<std::size_t>(t)]);
                    else if (boundary)
                        target = rw.intermediate(tau, t, y_val, next_val, u_val);
                    else
                        target = rw.intermediate(tau, t, y_val, x_val, u_val);
                } else {
                    target = est.reward_adj(t + 1, xn, un, tau, m, y);
                }
                nudge(est.reward_adj(t, x, u, tau, m, y), target, alpha);
            }

            const double f_target = boundary ? rw.terminal(tau, y_val, next_val)
                                             : est.terminal_adj(t + 1, xn, un, tau, y);
            nudge(est.terminal_adj(t, x, u, tau, y), f_target, alpha);
        }
    }

    const double g_target = boundary ? next_val : est.mean_adj(t + 1, xn, un);
    nudge(est.mean_adj(t, x, u), g_target, alpha);

    double q_target;
    if (boundary) {
        q_target = est.reward_adj(t, x, u, t, t, x) + est.terminal_adj(t, x, u, t, x) +
                   rw.mean_term(t, x_val, est.mean_adj(t, x, u));
    } else {
        double reward_gap = 0.0;
        for (int m = t + 1; m < T; ++m)
            reward_gap += est.reward_adj(t + 1, xn, un, t + 1, m, xn) -
                          est.reward_adj(t, x, u, t, m, x);
        const double terminal_gap =
            est.terminal_adj(t + 1, xn, un, t + 1, xn) - est.terminal_adj(t, x, u, t, x);
        const double mean_gap = rw.mean_term(t + 1, next_val, est.mean_adj(t + 1, xn, un)) -
                                rw.mean_term(t, x_val, est.mean_adj(t, x, u));
        q_target = est.reward_adj(t, x, u, t, t, x) + est.action_value(t + 1, xn, un) -
                   (reward_gap + terminal_gap + mean_gap);
    }
    return std::abs(nudge(est.action_value(t, x, u), q_target, alpha));
}

TabularPolicy greedy_policy(const TabularEstimates& est, const TicProblem& problem) {
    std::vector<std::vector<int>> rows(static_cast<std::size_t>(problem.horizon()));
    for (int t = 0; t < problem.horizon(); ++t) {
        auto& row = rows[static_cast<std::size_t>(t)];
        row.resize(static_cast<std::size_t>(problem.state_space(t).size()));
        for (int x = 0; x < problem.state_space(t).size(); ++x) {
            int best = 0;
            for (int u = 1; u < problem.action_space(t).size(); ++u)
                if (est.action_value(t, x, u) > est.action_value(t, x, best)) best = u;
            row[static_cast<std::size_t>(x)] = best;
        }
    }
    return TabularPolicy(std::move(rows));
}

QLearnResult q_learning_run(const TicProblem& problem, const QLearnConfig& cfg) {
    if (!problem.finite())
        throw std::logic_error("tabular learning requires finite spaces");
    if (cfg.step_size <= 0.0 || cfg.step_size > 1.0)
        throw std::invalid_argument("step size must lie in (0,1]");
    if (cfg.exploration < 0.0 || cfg.exploration > 1.0)
        throw std::invalid_argument("exploration must lie in [0,1]");
    if (cfg.episode_cap < 1) throw std::invalid_argument("episode cap must be >= 1");

    const int T = problem.horizon();
    QLearnResult result{TabularEstimates(problem, cfg.init_value), TabularPolicy{}, false, 0, {},
                        {}};
    result.policy = greedy_policy(result.estimates, problem);
    result.visits.resize(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t)
        result.visits[static_cast<std::size_t>(t)].assign(
            static_cast<std::size_t>(problem.state_space(t).size()),
            std::vector<int>(static_cast<std::size_t>(problem.action_space(t).size()), 0));

    std::vector<std::vector<std::vector<int>>> counts;
    if (cfg.visit_count_schedule) {
        counts.resize(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t)
            counts[static_cast<std::size_t>(t)].assign(
                static_cast<std::size_t>(problem.state_space(t).size()),
                std::vector<int>(static_cast<std::size_t>(problem.action_space(t).size()), 0));
    }

    RngStream root(cfg.seed);
    RngStream env = root.substream("env");
    RngStream expl = root.substream("exploration");
    RngStream start = root.substream("start");

    TabularPolicy pi_new = result.policy;
    TabularPolicy stable_snapshot = greedy_policy(result.estimates, problem);
    int stable_streak = 0;

    for (int ep = 1; ep <= cfg.episode_cap; ++ep) {
        const TabularPolicy pi_old = pi_new;
        const int x0 = static_cast<int>(
            start.uniform_int(static_cast<std::uint64_t>(problem.state_space(0).size())));
        const Trajectory traj = rollout(problem, pi_old, x0, env, &expl,
                                        Exploration::eps_greedy(cfg.exploration));

        EpisodeLogRow row;
        row.episode = ep;
        for (int t = T - 1; t >= 0; --t) {
            ++result.visits[static_cast<std::size_t>(t)]
                           [static_cast<std::size_t>(traj.state_index[static_cast<std::size_t>(t)])]
                           [static_cast<std::size_t>(
                               traj.action_index[static_cast<std::size_t>(t)])];
            const double err = td_update(result.estimates, problem, traj, t, pi_new, cfg,
                                         cfg.visit_count_schedule ? &counts : nullptr);
            row.max_td_error = std::max(row.max_td_error, err);

            const int xt = traj.state_index[static_cast<std::size_t>(t)];
            std::vector<double> q_row(static_cast<std::size_t>(problem.action_space(t).size()));
            for (std::size_t a = 0; a < q_row.size(); ++a)
                q_row[a] = result.estimates.action_value(t, xt, static_cast<int>(a));
            std::vector<int> all(q_row.size());
            for (std::size_t a = 0; a < all.size(); ++a) all[a] = static_cast<int>(a);
            const int chosen = improve_action(q_row, pi_old.action(t, xt), all, cfg.tie_eps);
            pi_new.set_action(t, xt, chosen);
            if (chosen != pi_old.action(t, xt)) ++row.policy_changes;
        }

        if (cfg.spe_check_every > 0 && ep % cfg.spe_check_every == 0) {
            const TabularPolicy greedy = greedy_policy(result.estimates, problem);
            const ValueTables exact = evaluate_policy_tables(problem, greedy);
            int violations = 0;
            for (int t = 0; t < T; ++t)
                for (int xx = 0; xx < problem.state_space(t).size(); ++xx) {
                    const double on_pol = exact.action_value(t, xx, greedy.action(t, xx));
                    for (int uu = 0; uu < problem.action_space(t).size(); ++uu)
                        if (exact.action_value(t, xx, uu) > on_pol + cfg.tie_eps) {
                            ++violations;
                            break;
                        }
                }
            row.spe_violations = violations;
        }
        result.log.push_back(row);
        result.episodes_run = ep;

        if (cfg.stability_checks > 0 && ep % cfg.stability_period == 0) {
            const TabularPolicy snapshot = greedy_policy(result.estimates, problem);
            if (snapshot == stable_snapshot) {
                if (++stable_streak >= cfg.stability_checks) {
                    result.converged = true;
                    break;
                }
            } else {
                stable_streak = 0;
                stable_snapshot = snapshot;
            }
        }
    }

    result.policy = pi_new;
    return result;
}

} // namespace sperl
