#pragma once

#include "sperl/bpi.hpp"
#include "sperl/exact_dp.hpp"
#include "sperl/problem.hpp"

#include <cstdint>
#include <vector>

namespace sperl {

// Mutable learned estimates share the exact-table index structure.
using TabularEstimates = ValueTables;

struct QLearnConfig {
    double step_size = 0.1;      // constant learning rate
    double exploration = 0.1;    // eps-greedy probability
    int episode_cap = 10000;
    double tie_eps = kDefaultTieEps;
    std::uint64_t seed = 0;
    double init_value = 0.0;
    // 1/N(t,x,u) schedule instead of the constant step size
    bool visit_count_schedule = false;
    // greedy-policy snapshots are compared over all (t,x) every
    // `stability_period` episodes; `stability_checks` consecutive equal
    // snapshots stop the run. 0 checks = always run to the cap.
    int stability_period = 100;
    int stability_checks = 3;
    // every k logged episodes, count equilibrium violations of the greedy
    // policy with the exact checker (0 = off; it is expensive)
    int spe_check_every = 0;
};

struct EpisodeLogRow {
    int episode = 0;
    int policy_changes = 0;
    double max_td_error = 0.0;
    int spe_violations = -1;  // -1 when not computed this episode
};

struct QLearnResult {
    TabularEstimates estimates;
    TabularPolicy policy;
    bool converged = false;
    int episodes_run = 0;
    std::vector<EpisodeLogRow> log;
    std::vector<std::vector<std::vector<int>>> visits;  // [t][x][u]
};

// One backward-slice update from a realized trajectory: nudges the reward,
// terminal, mean and action-value entries indexed by the visited (t, x, u)
// and the evaluation contexts on the trajectory prefix. The action-value
// target reads the adjustment entries updated lines earlier, so ordering
// inside this call is semantic. Returns the step's largest action-value
// TD error magnitude.
double td_update(TabularEstimates& estimates, const TicProblem& problem, const Trajectory& traj,
                 int t, const TabularPolicy& policy_new, const QLearnConfig& cfg,
                 std::vector<std::vector<std::vector<int>>>* visit_counts = nullptr);

// Episodic on-trajectory learning with backward per-episode improvement.
QLearnResult q_learning_run(const TicProblem& problem, const QLearnConfig& cfg);

// Pure argmax over the learned action values (first index wins ties).
TabularPolicy greedy_policy(const TabularEstimates& estimates, const TicProblem& problem);

} // namespace sperl
