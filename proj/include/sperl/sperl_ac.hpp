#pragma once

#include "sperl/linreg.hpp"
#include "sperl/problem.hpp"
#include "sperl/replay.hpp"
#include "sperl/rng.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sperl {

// A linear-in-weights approximator family. `features` maps the inputs of one
// table kind to the regression row; `du_features` is the derivative of that
// row in the action (needed for the action-value family driving the actor).
// The context argument carries the evaluation state for the reward/terminal
// families and is ignored by the others.
struct CriticFamily {
    int dim = 0;
    std::function<std::vector<double>(double x, double u, double context)> features;
    std::function<std::vector<double>(double x, double u, double context)> du_features;

    double eval(const std::vector<double>& w, double x, double u, double context = 0.0) const;
    double du(const std::vector<double>& w, double x, double u, double context = 0.0) const;
};

// Weight tables for the four estimate kinds. The reward/terminal tables are
// indexed by evaluation epoch (and reward epoch); when the problem's rewards
// carry no evaluation-context dependence those critics can be skipped
// entirely and their effect folds into the action-value targets.
struct CriticWeights {
    CriticFamily q_family, g_family, f_family, r_family;
    std::vector<std::vector<double>> q;                            // [t]
    std::vector<std::vector<std::vector<double>>> f;               // [t][tau]
    std::vector<std::vector<double>> g;                            // [t]
    std::vector<std::vector<std::vector<std::vector<double>>>> r;  // [t][tau][m-t]
    bool use_adjustment_critics = true;

    static CriticWeights make(int horizon, CriticFamily q_family, CriticFamily g_family,
                              CriticFamily f_family = {}, CriticFamily r_family = {});
};

struct ActorFamily {
    int dim = 0;
    std::function<double(double x, const std::vector<double>& theta)> eval;
    std::function<std::vector<double>(double x, const std::vector<double>& theta)> grad;

    // One scalar parameter per epoch that is itself the action.
    static ActorFamily state_invariant_scalar();
};

struct ActorWeights {
    ActorFamily family;
    std::vector<std::vector<double>> theta;  // [t]

    static ActorWeights make(int horizon, ActorFamily family, double init = 0.0);
    double act(int t, double x) const {
        return family.eval(x, theta[static_cast<std::size_t>(t)]);
    }
};

struct AcHyper {
    int iterations = 1;      // outer loop length
    int batch_episodes = 1;  // trajectories generated per iteration
    double critic_rate = 1.0;
    bool critic_rate_ema = false;  // use min(1, 2/(l+1)) instead of critic_rate
    double actor_rate = 0.01;
    Exploration exploration = Exploration::none();
    int resample_kappa = 0;
    std::uint64_t seed = 0;
};

// Instrumentation record: which update ran, in execution order.
struct UpdateEvent {
    enum class Kind { reward, terminal, mean, action_value, actor };
    Kind kind;
    int iteration, t, tau, m;
};

struct AcIterationSnapshot {
    int iteration = 0;
    std::vector<std::vector<double>> q, g;
    std::vector<std::vector<double>> theta;
};

struct AcResult {
    ActorWeights actor;
    CriticWeights critics;
    std::vector<AcIterationSnapshot> snapshots;
    int skipped_updates = 0;  // empty-minibatch updates skipped with a warning
};

// Mini-batch for one update: all current matching experiences plus the
// kappa-proportional past resample.
std::vector<Experience> replay_sample(const ReplayBuffer& buffer, ReplayBuffer::Filter filter,
                                      int kappa, RngStream& rng);

// Per-table least-squares updates. Each samples its own mini-batch, solves
// the projection, and returns the relaxed weights; the buffer is untouched.
// An empty mini-batch returns the old weights unchanged.
std::vector<double> update_reward_critic(const CriticWeights& critics, double critic_rate,
                                         const ActorWeights& actor, const TicProblem& problem,
                                         int t, int tau, int m, const ReplayBuffer& buffer,
                                         int kappa, RngStream& rng, bool* skipped = nullptr);
std::vector<double> update_terminal_critic(const CriticWeights& critics, double critic_rate,
                                           const ActorWeights& actor, const TicProblem& problem,
                                           int t, int tau, const ReplayBuffer& buffer, int kappa,
                                           RngStream& rng, bool* skipped = nullptr);
std::vector<double> update_mean_critic(const CriticWeights& critics, double critic_rate,
                                       const ActorWeights& actor, const TicProblem& problem,
                                       int t, const ReplayBuffer& buffer, int kappa,
                                       RngStream& rng, bool* skipped = nullptr);
std::vector<double> update_action_value_critic(const CriticWeights& critics, double critic_rate,
                                               const ActorWeights& actor,
                                               const TicProblem& problem, int t,
                                               const ReplayBuffer& buffer, int kappa,
                                               RngStream& rng, bool* skipped = nullptr);

// Outer training loop: batch generation, backward critic updates, and the
// deterministic gradient-ascent actor step per epoch.
AcResult ac_run(const TicProblem& problem, CriticWeights critics, ActorWeights actor,
                const AcHyper& hyper, std::vector<UpdateEvent>* call_log = nullptr);

// Writes <prefix>_critics.csv (iteration, t, kind, flattened weights) and
// <prefix>_actor.csv (iteration, t, flattened parameters).
void write_ac_logs(const AcResult& result, const std::string& prefix);

} // namespace sperl
