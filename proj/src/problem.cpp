#include "sperl/problem.hpp"

#include <cmath>

namespace sperl {

TransitionModel TransitionModel::explicit_kernel(KernelData probs, bool stationary) {
    for (const auto& per_x : probs)
        for (const auto& per_u : per_x)
            for (const auto& row : per_u) {
                double sum = 0.0;
                for (double p : row) {
                    if (p < 0.0 || !std::isfinite(p))
                        throw std::invalid_argument("kernel probabilities must be finite and nonnegative");
                    sum += p;
                }
                if (std::abs(sum - 1.0) > kKernelNormTol)
                    throw std::invalid_argument("kernel row does not sum to 1");
            }
    TransitionModel m;
    m.kernel_ = std::move(probs);
    m.stationary_ = stationary;
    return m;
}

TransitionModel TransitionModel::from_sampler(Sampler fn, bool stationary) {
    if (!fn) throw std::invalid_argument("null transition sampler");
    TransitionModel m;
    m.sampler_ = std::move(fn);
    m.stationary_ = stationary;
    return m;
}

const std::vector<double>& TransitionModel::row(int t, int x, int u) const {
    if (!has_kernel()) throw std::logic_error("transition model has no explicit kernel");
    return kernel_.at(static_cast<std::size_t>(t))
        .at(static_cast<std::size_t>(x))
        .at(static_cast<std::size_t>(u));
}

double TransitionModel::sample_value(int t, double x, double u, RngStream& rng) const {
    if (!sampler_) throw std::logic_error("transition model has no sampler");
    return sampler_(t, x, u, rng);
}

int TransitionModel::sample_index(int t, int x, int u, RngStream& rng) const {
    const auto& p = row(t, x, u);
    const double draw = rng.uniform01();
    double cum = 0.0;
    int last_support = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) last_support = static_cast<int>(i);
        cum += p[i];
        if (draw < cum) return static_cast<int>(i);
    }
    return last_support;  // draw landed in the rounding slack past the final mass
}

TicRewards TicRewards::time_consistent(std::function<double(int, double, double)> step_reward,
                                       std::function<double(double)> final_reward) {
    TicRewards rw;
    rw.intermediate = [fn = std::move(step_reward)](int, int t, double, double x, double u) {
        return fn(t, x, u);
    };
    rw.terminal = [fn = std::move(final_reward)](int, double, double xT) { return fn(xT); };
    rw.mean_term = [](int, double, double) { return 0.0; };
    return rw;
}

TicRewards TicRewards::from_raw(RawFn raw_step, std::function<double(double)> raw_final,
                                TransformFn transform) {
    TicRewards rw;
    rw.raw = raw_step;
    rw.transform = transform;
    rw.intermediate = [raw_step, transform](int tau, int t, double y, double x, double u) {
        return transform(tau, y, raw_step(t, x, u));
    };
    rw.terminal = [raw_final = std::move(raw_final), transform](int tau, double y, double xT) {
        return transform(tau, y, raw_final(xT));
    };
    rw.mean_term = [](int, double, double) { return 0.0; };
    return rw;
}

TicProblem::TicProblem(TimeSet time, std::vector<Space> state_spaces,
                       std::vector<Space> action_spaces, TransitionModel transitions,
                       TicRewards rewards, InitialSampler initial_sampler)
    : time_(time),
      state_spaces_(std::move(state_spaces)),
      action_spaces_(std::move(action_spaces)),
      transitions_(std::move(transitions)),
      rewards_(std::move(rewards)),
      initial_sampler_(std::move(initial_sampler)) {
    const int T = time_.horizon;
    if (static_cast<int>(state_spaces_.size()) != T + 1)
        throw std::invalid_argument("need a state space for each time 0..T");
    if (static_cast<int>(action_spaces_.size()) != T)
        throw std::invalid_argument("need an action space for each epoch 0..T-1");
    if (!rewards_.intermediate || !rewards_.terminal || !rewards_.mean_term)
        throw std::invalid_argument("reward functionals must all be set");

    finite_ = transitions_.has_kernel();
    for (const auto& s : state_spaces_) finite_ = finite_ && s.is_finite();
    for (const auto& a : action_spaces_) finite_ = finite_ && a.is_finite();

    if (transitions_.has_kernel()) {
        for (int t = 0; t < T; ++t) {
            const Space& xs = state_spaces_[static_cast<std::size_t>(t)];
            const Space& us = action_spaces_[static_cast<std::size_t>(t)];
            const Space& nxt = state_spaces_[static_cast<std::size_t>(t) + 1];
            if (!xs.is_finite() || !us.is_finite() || !nxt.is_finite())
                throw std::invalid_argument("explicit kernels require finite spaces");
            for (int x = 0; x < xs.size(); ++x)
                for (int u = 0; u < us.size(); ++u)
                    if (static_cast<int>(transitions_.row(t, x, u).size()) != nxt.size())
                        throw std::invalid_argument("kernel row does not match next state space");
        }
    }
}

double TicProblem::sample_next_value(int t, double x, double u, RngStream& rng) const {
    if (transitions_.has_kernel()) {
        const int xi = state_space(t).index_of(x);
        const int ui = action_space(t).index_of(u);
        if (xi < 0 || ui < 0) throw std::invalid_argument("state/action not in declared space");
        return state_space(t + 1).value(transitions_.sample_index(t, xi, ui, rng));
    }
    return transitions_.sample_value(t, x, u, rng);
}

double TicProblem::sample_initial(RngStream& rng) const {
    if (initial_sampler_) return initial_sampler_(rng);
    const Space& s0 = state_space(0);
    if (!s0.is_finite())
        throw std::logic_error("continuous initial state space needs an initial sampler");
    return s0.value(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(s0.size()))));
}

TabularPolicy TabularPolicy::constant(const TicProblem& problem, int action_index) {
    std::vector<std::vector<int>> rows;
    rows.reserve(static_cast<std::size_t>(problem.horizon()));
    for (int t = 0; t < problem.horizon(); ++t) {
        if (action_index >= problem.action_space(t).size())
            throw std::out_of_range("constant action index outside action space");
        rows.emplace_back(static_cast<std::size_t>(problem.state_space(t).size()), action_index);
    }
    return TabularPolicy(std::move(rows));
}

int PolicyTail::action(int t, int x) const {
    if (t < start_ || t >= end()) throw std::out_of_range("policy tail does not cover this epoch");
    if (forced_action_) {
        if (t == start_) return *forced_action_;
        return rows_.at(static_cast<std::size_t>(t - start_ - 1)).at(static_cast<std::size_t>(x));
    }
    return rows_.at(static_cast<std::size_t>(t - start_)).at(static_cast<std::size_t>(x));
}

PolicyTail truncate(const TabularPolicy& policy, int k) {
    if (k < 0 || k >= policy.horizon())
        throw std::out_of_range("truncation index outside decision epochs");
    PolicyTail tail;
    tail.start_ = k;
    tail.rows_.assign(policy.rows().begin() + k, policy.rows().end());
    return tail;
}

PolicyTail concat(int action_index, int t, const PolicyTail& tail) {
    if (!tail.empty()) {
        if (tail.forced_action_)
            throw std::invalid_argument("cannot concatenate onto a tail with a forced first epoch");
        if (tail.start_ != t + 1)
            throw std::invalid_argument("tail must start exactly at the next epoch");
    }
    PolicyTail out;
    out.start_ = t;
    out.forced_action_ = action_index;
    out.rows_ = tail.rows_;
    return out;
}

Exploration Exploration::eps_greedy(double eps) {
    if (eps < 0.0 || eps > 1.0) throw std::invalid_argument("eps must be in [0,1]");
    return {Kind::eps_greedy, eps};
}

Exploration Exploration::lambda_uniform(double radius) {
    if (radius <= 0.0) throw std::invalid_argument("exploration radius must be positive");
    return {Kind::lambda_uniform, radius};
}

namespace {

void emit_raw_rewards(const TicProblem& problem, Trajectory& traj) {
    if (!problem.rewards().has_raw_channel()) return;
    const int T = problem.horizon();
    traj.raw_reward.resize(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        // Final-epoch raw reward reads the post-transition state.
        const double state_arg = (t == T - 1) ? traj.state[static_cast<std::size_t>(T)]
                                              : traj.state[static_cast<std::size_t>(t)];
        traj.raw_reward[static_cast<std::size_t>(t)] =
            problem.rewards().raw(t, state_arg, traj.action[static_cast<std::size_t>(t)]);
    }
}

} // namespace

Trajectory rollout(const TicProblem& problem, const TabularPolicy& policy, int x0_index,
                   RngStream& env_rng, RngStream* exploration_rng, Exploration exploration) {
    if (!problem.finite())
        throw std::logic_error("tabular rollout requires a finite problem");
    if (exploration.kind == Exploration::Kind::lambda_uniform)
        throw std::invalid_argument("lambda-uniform exploration needs real-valued actions");
    if (exploration.kind != Exploration::Kind::none && exploration_rng == nullptr)
        throw std::invalid_argument("exploration requires its own rng stream");
    if (x0_index < 0 || x0_index >= problem.state_space(0).size())
        throw std::invalid_argument("initial state outside the declared space");

    const int T = problem.horizon();
    Trajectory traj;
    traj.state_index.resize(static_cast<std::size_t>(T) + 1);
    traj.state.resize(static_cast<std::size_t>(T) + 1);
    traj.action_index.resize(static_cast<std::size_t>(T));
    traj.action.resize(static_cast<std::size_t>(T));

    int x = x0_index;
    traj.state_index[0] = x;
    traj.state[0] = problem.state_space(0).value(x);
    for (int t = 0; t < T; ++t) {
        int u = policy.action(t, x);
        if (exploration.kind == Exploration::Kind::eps_greedy &&
            exploration_rng->bernoulli(exploration.param)) {
            u = static_cast<int>(exploration_rng->uniform_int(
                static_cast<std::uint64_t>(problem.action_space(t).size())));
        }
        traj.action_index[static_cast<std::size_t>(t)] = u;
        traj.action[static_cast<std::size_t>(t)] = problem.action_space(t).value(u);
        x = problem.sample_next_index(t, traj.state_index[static_cast<std::size_t>(t)], u, env_rng);
        traj.state_index[static_cast<std::size_t>(t) + 1] = x;
        traj.state[static_cast<std::size_t>(t) + 1] = problem.state_space(t + 1).value(x);
    }
    emit_raw_rewards(problem, traj);
    return traj;
}

Trajectory rollout(const TicProblem& problem,
                   const std::function<double(int t, double x)>& policy_value, double x0,
                   RngStream& env_rng, RngStream* exploration_rng, Exploration exploration) {
    if (exploration.kind == Exploration::Kind::eps_greedy)
        throw std::invalid_argument("eps-greedy exploration needs enumerated actions");
    if (exploration.kind != Exploration::Kind::none && exploration_rng == nullptr)
        throw std::invalid_argument("exploration requires its own rng stream");
    if (!problem.state_space(0).contains(x0))
        throw std::invalid_argument("initial state outside the declared space");

    const int T = problem.horizon();
    Trajectory traj;
    traj.state.resize(static_cast<std::size_t>(T) + 1);
    traj.action.resize(static_cast<std::size_t>(T));

    double x = x0;
    traj.state[0] = x;
    for (int t = 0; t < T; ++t) {
        double u = policy_value(t, x);
        if (exploration.kind == Exploration::Kind::lambda_uniform)
            u = exploration_rng->uniform(u - exploration.param, u + exploration.param);
        traj.action[static_cast<std::size_t>(t)] = u;
        x = problem.sample_next_value(t, x, u, env_rng);
        traj.state[static_cast<std::size_t>(t) + 1] = x;
    }
    emit_raw_rewards(problem, traj);
    return traj;
}

} // namespace sperl
