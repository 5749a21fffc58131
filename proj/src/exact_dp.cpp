#include "sperl/exact_dp.hpp"

#include <cmath>
#include <stdexcept>

namespace sperl {

namespace {

std::size_t idx_(int n) { return static_cast<std::size_t>(n); }

void require_finite_problem(const TicProblem& problem) {
    if (!problem.finite())
        throw std::logic_error("exact evaluation requires finite spaces and an explicit kernel");
}

void check_table_value(double v) {
    if (!std::isfinite(v)) throw std::runtime_error("non-finite value in evaluation tables");
}

} // namespace

ValueTables::ValueTables(const TicProblem& problem, double init_value) {
    require_finite_problem(problem);
    horizon_ = problem.horizon();
    const int T = horizon_;
    nx_.resize(idx(T));
    nu_.resize(idx(T));
    ny_.resize(idx(T));
    f_offsets_.resize(idx(T));
    f_block_.resize(idx(T));
    q_.resize(idx(T));
    g_.resize(idx(T));
    f_.resize(idx(T));
    r_.resize(idx(T));
    for (int t = 0; t < T; ++t) ny_[idx(t)] = problem.state_space(t).size();
    for (int t = 0; t < T; ++t) {
        nx_[idx(t)] = problem.state_space(t).size();
        nu_[idx(t)] = problem.action_space(t).size();
        auto& offs = f_offsets_[idx(t)];
        offs.resize(idx(t) + 1);
        int total = 0;
        for (int tau = 0; tau <= t; ++tau) {
            offs[idx(tau)] = total;
            total += ny_[idx(tau)];
        }
        f_block_[idx(t)] = total;
        const std::size_t pairs = static_cast<std::size_t>(nx_[idx(t)]) *
                                  static_cast<std::size_t>(nu_[idx(t)]);
        q_[idx(t)].assign(pairs, init_value);
        g_[idx(t)].assign(pairs, init_value);
        f_[idx(t)].assign(pairs * static_cast<std::size_t>(total), init_value);
        r_[idx(t)].assign(pairs * static_cast<std::size_t>(total) *
                              static_cast<std::size_t>(T - t),
                          init_value);
    }
}

std::size_t ValueTables::qg_index(int t, int x, int u) const {
    if (t < 0 || t >= horizon_) throw std::out_of_range("epoch outside table range");
    if (x < 0 || x >= nx_[idx(t)] || u < 0 || u >= nu_[idx(t)])
        throw std::out_of_range("state/action outside table range");
    return static_cast<std::size_t>(x) * static_cast<std::size_t>(nu_[idx(t)]) +
           static_cast<std::size_t>(u);
}

std::size_t ValueTables::f_index(int t, int x, int u, int tau, int y) const {
    const std::size_t base = qg_index(t, x, u);
    if (tau < 0 || tau > t) throw std::out_of_range("evaluation time must satisfy tau <= t");
    if (y < 0 || y >= ny_[idx(tau)]) throw std::out_of_range("evaluation state outside its space");
    return base * static_cast<std::size_t>(f_block_[idx(t)]) +
           static_cast<std::size_t>(f_offsets_[idx(t)][idx(tau)]) + static_cast<std::size_t>(y);
}

std::size_t ValueTables::r_index(int t, int x, int u, int tau, int m, int y) const {
    const std::size_t base = qg_index(t, x, u);
    if (tau < 0 || tau > t) throw std::out_of_range("evaluation time must satisfy tau <= t");
    if (m < t || m >= horizon_) throw std::out_of_range("reward epoch must satisfy t <= m <= T-1");
    if (y < 0 || y >= ny_[idx(tau)]) throw std::out_of_range("evaluation state outside its space");
    const std::size_t span = static_cast<std::size_t>(horizon_ - t);
    const std::size_t tau_off = static_cast<std::size_t>(f_offsets_[idx(t)][idx(tau)]) * span;
    return base * static_cast<std::size_t>(f_block_[idx(t)]) * span + tau_off +
           static_cast<std::size_t>(m - t) * static_cast<std::size_t>(ny_[idx(tau)]) +
           static_cast<std::size_t>(y);
}

void fill_adjustment_slice(ValueTables& tables, const TicProblem& problem,
                           const TabularPolicy& policy, int t) {
    require_finite_problem(problem);
    const int T = problem.horizon();
    const TicRewards& rw = problem.rewards();
    const Space& xs = problem.state_space(t);
    const Space& us = problem.action_space(t);
    const Space& nxt = problem.state_space(t + 1);
    const bool boundary = (t == T - 1);

    for (int x = 0; x < xs.size(); ++x) {
        const double x_val = xs.value(x);
        for (int u = 0; u < us.size(); ++u) {
            const double u_val = us.value(u);
            const auto& p = problem.kernel_row(t, x, u);

            double mean = 0.0;
            if (boundary) {
                for (int n = 0; n < nxt.size(); ++n) mean += p[idx_(n)] * nxt.value(n);
            } else {
                for (int n = 0; n < nxt.size(); ++n)
                    mean += p[idx_(n)] * tables.mean_adj(t + 1, n, policy.action(t + 1, n));
            }
            check_table_value(mean);
            tables.mean_adj(t, x, u) = mean;

            for (int tau = 0; tau <= t; ++tau) {
                const Space& ys = problem.state_space(tau);
                for (int y = 0; y < ys.size(); ++y) {
                    const double y_val = ys.value(y);

                    double fterm = 0.0;
                    if (boundary) {
                        for (int n = 0; n < nxt.size(); ++n)
                            fterm += p[idx_(n)] * rw.terminal(tau, y_val, nxt.value(n));
                    } else {
                        for (int n = 0; n < nxt.size(); ++n)
                            fterm += p[idx_(n)] *
                                     tables.terminal_adj(t + 1, n, policy.action(t + 1, n), tau, y);
                    }
                    check_table_value(fterm);
                    tables.terminal_adj(t, x, u, tau, y) = fterm;

                    for (int m = t; m < T; ++m) {
                        double val = 0.0;
                        if (m == t) {
                            if (boundary) {
                                // Final-epoch reward reads the post-transition state.
                                for (int n = 0; n < nxt.size(); ++n)
                                    val += p[idx_(n)] *
                                           rw.intermediate(tau, t, y_val, nxt.value(n), u_val);
                            } else {
                                val = rw.intermediate(tau, t, y_val, x_val, u_val);
                            }
                        } else {
                            for (int n = 0; n < nxt.size(); ++n)
                                val += p[idx_(n)] * tables.reward_adj(
                                                        t + 1, n, policy.action(t + 1, n), tau, m, y);
                        }
                        check_table_value(val);
                        tables.reward_adj(t, x, u, tau, m, y) = val;
                    }
                }
            }
        }
    }
}

void fill_action_value_slice(ValueTables& tables, const TicProblem& problem,
                             const TabularPolicy& policy, int t) {
    require_finite_problem(problem);
    const int T = problem.horizon();
    const TicRewards& rw = problem.rewards();
    const Space& xs = problem.state_space(t);
    const Space& us = problem.action_space(t);
    const Space& nxt = problem.state_space(t + 1);

    for (int x = 0; x < xs.size(); ++x) {
        const double x_val = xs.value(x);
        for (int u = 0; u < us.size(); ++u) {
            double q = 0.0;
            if (t == T - 1) {
                q = tables.reward_adj(t, x, u, t, t, x) + tables.terminal_adj(t, x, u, t, x) +
                    rw.mean_term(t, x_val, tables.mean_adj(t, x, u));
            } else {
                const auto& p = problem.kernel_row(t, x, u);
                double next_q = 0.0, reward_gap = 0.0, terminal_gap = 0.0, mean_gap = 0.0;
                for (int n = 0; n < nxt.size(); ++n) {
                    const double pn = p[idx_(n)];
                    if (pn == 0.0) continue;
                    const int un = policy.action(t + 1, n);
                    next_q += pn * tables.action_value(t + 1, n, un);
                    for (int m = t + 1; m < T; ++m)
                        reward_gap += pn * tables.reward_adj(t + 1, n, un, t + 1, m, n);
                    terminal_gap += pn * tables.terminal_adj(t + 1, n, un, t + 1, n);
                    mean_gap += pn * rw.mean_term(t + 1, nxt.value(n),
                                                  tables.mean_adj(t + 1, n, un));
                }
                for (int m = t + 1; m < T; ++m) reward_gap -= tables.reward_adj(t, x, u, t, m, x);
                terminal_gap -= tables.terminal_adj(t, x, u, t, x);
                mean_gap -= rw.mean_term(t, x_val, tables.mean_adj(t, x, u));

                q = tables.reward_adj(t, x, u, t, t, x) + next_q - reward_gap - terminal_gap -
                    mean_gap;
            }
            check_table_value(q);
            tables.action_value(t, x, u) = q;
        }
    }
}

ValueTables eval_adjustments(const TicProblem& problem, const TabularPolicy& policy) {
    require_finite_problem(problem);
    ValueTables tables(problem);
    for (int t = problem.horizon() - 1; t >= 0; --t)
        fill_adjustment_slice(tables, problem, policy, t);
    tables.mark_adjustments_ready();
    return tables;
}

void eval_q(ValueTables& tables, const TicProblem& problem, const TabularPolicy& policy) {
    if (!tables.adjustments_ready())
        throw std::logic_error("action-value recursion needs filled adjustment tables");
    for (int t = problem.horizon() - 1; t >= 0; --t)
        fill_action_value_slice(tables, problem, policy, t);
    tables.mark_action_values_ready();
}

ValueTables evaluate_policy_tables(const TicProblem& problem, const TabularPolicy& policy) {
    ValueTables tables = eval_adjustments(problem, policy);
    eval_q(tables, problem, policy);
    return tables;
}

TdTargets dp_targets_sampled(const ValueTables& tables, const TicProblem& problem,
                             const TabularPolicy& policy, int t, int x, int u, int tau, int m,
                             int y, int x_next) {
    const int T = problem.horizon();
    if (tau < 0 || tau > t) throw std::out_of_range("targets need tau <= t");
    if (m < t || m >= T) throw std::out_of_range("targets need t <= m <= T-1");
    const TicRewards& rw = problem.rewards();
    const Space& nxt = problem.state_space(t + 1);
    if (x_next < 0 || x_next >= nxt.size())
        throw std::out_of_range("sampled next state outside its space");

    const double x_val = problem.state_space(t).value(x);
    const double u_val = problem.action_space(t).value(u);
    const double y_val = problem.state_space(tau).value(y);
    const double next_val = nxt.value(x_next);

    TdTargets out;
    if (t == T - 1) {
        out.reward_adj = (m == t) ? rw.intermediate(tau, t, y_val, next_val, u_val) : 0.0;
        out.terminal_adj = rw.terminal(tau, y_val, next_val);
        out.mean_adj = next_val;
        out.action_value = tables.reward_adj(t, x, u, t, t, x) +
                           tables.terminal_adj(t, x, u, t, x) +
                           rw.mean_term(t, x_val, tables.mean_adj(t, x, u));
        return out;
    }

    const int un = policy.action(t + 1, x_next);
    out.reward_adj = (m == t) ? rw.intermediate(tau, t, y_val, x_val, u_val)
                              : tables.reward_adj(t + 1, x_next, un, tau, m, y);
    out.terminal_adj = tables.terminal_adj(t + 1, x_next, un, tau, y);
    out.mean_adj = tables.mean_adj(t + 1, x_next, un);

    double reward_gap = 0.0;
    for (int mm = t + 1; mm < T; ++mm)
        reward_gap += tables.reward_adj(t + 1, x_next, un, t + 1, mm, x_next) -
                      tables.reward_adj(t, x, u, t, mm, x);
    const double terminal_gap = tables.terminal_adj(t + 1, x_next, un, t + 1, x_next) -
                                tables.terminal_adj(t, x, u, t, x);
    const double mean_gap =
        rw.mean_term(t + 1, next_val, tables.mean_adj(t + 1, x_next, un)) -
        rw.mean_term(t, x_val, tables.mean_adj(t, x, u));
    out.action_value = tables.reward_adj(t, x, u, t, t, x) +
                       tables.action_value(t + 1, x_next, un) -
                       (reward_gap + terminal_gap + mean_gap);
    return out;
}

TdTargets dp_targets_exact(const ValueTables& tables, const TicProblem& problem,
                           const TabularPolicy& policy, int t, int x, int u, int tau, int m,
                           int y) {
    const auto& p = problem.kernel_row(t, x, u);
    TdTargets out;
    for (std::size_t n = 0; n < p.size(); ++n) {
        if (p[n] == 0.0) continue;
        const TdTargets s = dp_targets_sampled(tables, problem, policy, t, x, u, tau, m, y,
                                               static_cast<int>(n));
        out.reward_adj += p[n] * s.reward_adj;
        out.terminal_adj += p[n] * s.terminal_adj;
        out.mean_adj += p[n] * s.mean_adj;
        out.action_value += p[n] * s.action_value;
    }
    return out;
}

namespace {

struct OracleAccumulator {
    double reward_sum = 0.0;
    double terminal_sum = 0.0;
    double terminal_mean = 0.0;
    std::int64_t leaves = 0;
    std::int64_t leaf_cap = 0;
};

void oracle_walk(const TicProblem& problem, const PolicyTail& tail, int eval_time,
                 double eval_state, int t, int x, double prob, OracleAccumulator& acc) {
    const int T = problem.horizon();
    const TicRewards& rw = problem.rewards();
    if (t == T) {
        const double x_val = problem.state_space(T).value(x);
        acc.terminal_sum += prob * rw.terminal(eval_time, eval_state, x_val);
        acc.terminal_mean += prob * x_val;
        if (++acc.leaves > acc.leaf_cap)
            throw std::length_error("oracle trajectory tree exceeds the leaf cap");
        return;
    }
    const int u = tail.action(t, x);
    const double x_val = problem.state_space(t).value(x);
    const double u_val = problem.action_space(t).value(u);
    if (t < T - 1)
        acc.reward_sum += prob * rw.intermediate(eval_time, t, eval_state, x_val, u_val);
    const auto& p = problem.kernel_row(t, x, u);
    for (std::size_t n = 0; n < p.size(); ++n) {
        if (p[n] == 0.0) continue;
        const double branch = prob * p[n];
        if (t == T - 1) {
            // Final-epoch reward reads the post-transition state.
            const double next_val = problem.state_space(T).value(static_cast<int>(n));
            acc.reward_sum += branch * rw.intermediate(eval_time, t, eval_state, next_val, u_val);
        }
        oracle_walk(problem, tail, eval_time, eval_state, t + 1, static_cast<int>(n), branch, acc);
    }
}

} // namespace

double oracle_value(const TicProblem& problem, const PolicyTail& tail, int t, int x,
                    std::int64_t leaf_cap) {
    require_finite_problem(problem);
    const int T = problem.horizon();
    if (t < 0 || t >= T) throw std::out_of_range("evaluation epoch outside decision epochs");
    if (tail.start() > t || tail.end() < T)
        throw std::invalid_argument("policy tail does not cover epochs t..T-1");
    const double eval_state = problem.state_space(t).value(x);
    OracleAccumulator acc;
    acc.leaf_cap = leaf_cap;
    oracle_walk(problem, tail, t, eval_state, t, x, 1.0, acc);
    return acc.reward_sum + acc.terminal_sum +
           problem.rewards().mean_term(t, eval_state, acc.terminal_mean);
}

} // namespace sperl
