#pragma once

#include "sperl/problem.hpp"

#include <cstdint>
#include <vector>

namespace sperl {

// Backward-evaluation tables for a fixed policy. Per decision epoch t they
// hold, for every (x, u):
//
//   action_value(t,x,u)                 the action value
//   mean_adj(t,x,u)                     expected terminal state
//   terminal_adj(t,x,u | tau, y)        expected terminal reward under the
//                                       evaluation context (tau, y)
//   reward_adj(t,x,u | tau, m, y)       expected epoch-m reward under (tau, y)
//
// Storage covers exactly the triangular index region the backward pass
// consumes: tau in {0..t}, m in {t..T-1}, y ranging over the state space at
// time tau. Anything outside that region is an indexing bug, not data.
class ValueTables {
public:
    explicit ValueTables(const TicProblem& problem, double init_value = 0.0);

    int horizon() const { return horizon_; }
    bool adjustments_ready() const { return adjustments_ready_; }
    bool action_values_ready() const { return action_values_ready_; }

    double action_value(int t, int x, int u) const { return q_[idx(t)][qg_index(t, x, u)]; }
    double mean_adj(int t, int x, int u) const { return g_[idx(t)][qg_index(t, x, u)]; }
    double terminal_adj(int t, int x, int u, int tau, int y) const {
        return f_[idx(t)][f_index(t, x, u, tau, y)];
    }
    double reward_adj(int t, int x, int u, int tau, int m, int y) const {
        return r_[idx(t)][r_index(t, x, u, tau, m, y)];
    }

    double& action_value(int t, int x, int u) { return q_[idx(t)][qg_index(t, x, u)]; }
    double& mean_adj(int t, int x, int u) { return g_[idx(t)][qg_index(t, x, u)]; }
    double& terminal_adj(int t, int x, int u, int tau, int y) {
        return f_[idx(t)][f_index(t, x, u, tau, y)];
    }
    double& reward_adj(int t, int x, int u, int tau, int m, int y) {
        return r_[idx(t)][r_index(t, x, u, tau, m, y)];
    }

    int state_count(int t) const { return nx_[idx(t)]; }
    int action_count(int t) const { return nu_[idx(t)]; }

    void mark_adjustments_ready() { adjustments_ready_ = true; }
    void mark_action_values_ready() { action_values_ready_ = true; }

private:
    static std::size_t idx(int t) { return static_cast<std::size_t>(t); }
    std::size_t qg_index(int t, int x, int u) const;
    std::size_t f_index(int t, int x, int u, int tau, int y) const;
    std::size_t r_index(int t, int x, int u, int tau, int m, int y) const;

    int horizon_ = 0;
    std::vector<int> nx_, nu_;                  // per epoch
    std::vector<int> ny_;                       // |X_tau| per time
    std::vector<std::vector<int>> f_offsets_;   // [t][tau]: offset of tau block within one (x,u)
    std::vector<int> f_block_;                  // [t]: total (tau, y) entries per (x, u)
    std::vector<std::vector<double>> q_, g_, f_, r_;
    bool adjustments_ready_ = false;
    bool action_values_ready_ = false;
};

// Fills the adjustment slice at epoch t from the t+1 slice. Reads the policy
// only at epochs >= t+1.
void fill_adjustment_slice(ValueTables& tables, const TicProblem& problem,
                           const TabularPolicy& policy, int t);

// Fills the action-value slice at epoch t; adjustment slices at t and t+1
// and the action-value slice at t+1 must already be filled.
void fill_action_value_slice(ValueTables& tables, const TicProblem& problem,
                             const TabularPolicy& policy, int t);

// Backward recursion for the three adjustment tables over all epochs.
ValueTables eval_adjustments(const TicProblem& problem, const TabularPolicy& policy);

// Backward action-value recursion on top of filled adjustment tables.
void eval_q(ValueTables& tables, const TicProblem& problem, const TabularPolicy& policy);

// Convenience: adjustments + action values in one pass.
ValueTables evaluate_policy_tables(const TicProblem& problem, const TabularPolicy& policy);

// One-step targets for the four tables. The sampled form plugs in a single
// next state; the exact form averages the sampled form over the kernel.
struct TdTargets {
    double reward_adj = 0.0;
    double terminal_adj = 0.0;
    double mean_adj = 0.0;
    double action_value = 0.0;
};

TdTargets dp_targets_sampled(const ValueTables& tables, const TicProblem& problem,
                             const TabularPolicy& policy, int t, int x, int u, int tau, int m,
                             int y, int x_next);
TdTargets dp_targets_exact(const ValueTables& tables, const TicProblem& problem,
                           const TabularPolicy& policy, int t, int x, int u, int tau, int m,
                           int y);

inline constexpr std::int64_t kDefaultOracleLeafCap = 10'000'000;

// Definitional evaluation of the criterion at (t, x) under a policy tail, by
// full trajectory enumeration over the explicit kernel. Independent of the
// recursion path above; the backbone of the equivalence tests.
double oracle_value(const TicProblem& problem, const PolicyTail& tail, int t, int x,
                    std::int64_t leaf_cap = kDefaultOracleLeafCap);

} // namespace sperl
