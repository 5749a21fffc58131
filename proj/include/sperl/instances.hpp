#pragma once

#include "sperl/exact_dp.hpp"
#include "sperl/problem.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace sperl {

enum class RewardFamily {
    time_consistent,   // no evaluation-context dependence, no mean term
    hyperbolic,        // raw rewards scaled by 1 / (1 + h (T - tau))
    state_dependent,   // raw rewards scaled by gamma / y (states kept positive)
    quadratic_mean,    // time-consistent rewards plus a quadratic mean term
};

std::string to_string(RewardFamily family);
RewardFamily reward_family_from_string(const std::string& name);

struct RandomInstanceSpec {
    int horizon_min = 2, horizon_max = 4;
    int states_min = 2, states_max = 4;
    int actions_min = 2, actions_max = 3;
    RewardFamily family = RewardFamily::time_consistent;
    double kernel_sparsity = 0.3;  // chance of zeroing a kernel entry before renormalizing
    std::uint64_t seed = 0;
};

struct GeneratedInstance {
    TicProblem problem;
    nlohmann::json descriptor;
};

// Deterministic given the seed; the descriptor reconstructs the problem.
GeneratedInstance generate_instance(const RandomInstanceSpec& spec);

// Structured fixture format: horizon, enumerated spaces, kernel as nested
// arrays, reward family selector with its parameters and tables.
TicProblem problem_from_json(const nlohmann::json& descriptor);

nlohmann::json tables_to_json(const ValueTables& tables, const TicProblem& problem);

// Seed verification policy: lowest action index everywhere except the final
// epoch, where the boundary-worst action is chosen so the first improving
// sweep provably changes the policy.
TabularPolicy anti_greedy_terminal_policy(const TicProblem& problem);

// Fixed 3-epoch, 4-state, 2-action chain with hyperbolically transformed raw
// rewards; the standing benchmark for the tabular learner.
TicProblem hyperbolic_chain_problem();

} // namespace sperl
