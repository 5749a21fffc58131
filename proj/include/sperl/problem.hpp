#pragma once

#include "sperl/rng.hpp"

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sperl {

inline constexpr double kKernelNormTol = 1e-12;

// Decision epochs are {0, ..., horizon-1}; states exist at times 0..horizon.
struct TimeSet {
    int horizon = 1;

    explicit TimeSet(int T) : horizon(T) {
        if (T < 1) throw std::invalid_argument("horizon must be >= 1");
    }
};

// A per-time state or action space: either a finite enumerated set with a
// fixed total order, or a real interval / line with no enumeration.
class Space {
public:
    static Space finite(std::vector<double> values) {
        if (values.empty()) throw std::invalid_argument("finite space needs at least one element");
        Space s;
        s.finite_ = true;
        s.values_ = std::move(values);
        return s;
    }

    static Space real_line() { return interval(-1e300, 1e300); }

    static Space interval(double lo, double hi) {
        if (!(lo < hi)) throw std::invalid_argument("interval requires lo < hi");
        Space s;
        s.finite_ = false;
        s.lo_ = lo;
        s.hi_ = hi;
        return s;
    }

    bool is_finite() const { return finite_; }

    int size() const {
        require_finite();
        return static_cast<int>(values_.size());
    }

    double value(int idx) const {
        require_finite();
        return values_.at(static_cast<std::size_t>(idx));
    }

    // Exact-match lookup; -1 when absent. Values flowing through the library
    // originate from the space itself, so bitwise comparison is sufficient.
    int index_of(double v) const {
        require_finite();
        for (std::size_t i = 0; i < values_.size(); ++i)
            if (values_[i] == v) return static_cast<int>(i);
        return -1;
    }

    bool contains(double v) const {
        if (finite_) return index_of(v) >= 0;
        return v >= lo_ && v <= hi_;
    }

    std::span<const double> values() const {
        require_finite();
        return values_;
    }

private:
    void require_finite() const {
        if (!finite_) throw std::logic_error("operation requires a finite enumerated space");
    }

    bool finite_ = false;
    std::vector<double> values_;
    double lo_ = 0.0, hi_ = 0.0;
};

// Transition dynamics: an explicit per-(t,x,u) distribution over next-state
// indices, or a black-box sampler for general spaces.
class TransitionModel {
public:
    using Sampler = std::function<double(int t, double x, double u, RngStream&)>;
    // probs[t][x][u][x_next]
    using KernelData = std::vector<std::vector<std::vector<std::vector<double>>>>;

    static TransitionModel explicit_kernel(KernelData probs, bool stationary);
    static TransitionModel from_sampler(Sampler fn, bool stationary);

    bool has_kernel() const { return !kernel_.empty(); }
    bool stationary() const { return stationary_; }

    const std::vector<double>& row(int t, int x, int u) const;
    double sample_value(int t, double x, double u, RngStream& rng) const;
    int sample_index(int t, int x, int u, RngStream& rng) const;

private:
    KernelData kernel_;
    Sampler sampler_;
    bool stationary_ = false;
};

// Reward functionals of the evaluation context (tau, y).
//
// Convention carried through every consumer in this library: at the final
// decision epoch the intermediate reward functional receives the
// post-transition state as its state argument; at earlier epochs it receives
// the current state. Raw-reward environments emit their last raw reward
// accordingly.
struct TicRewards {
    using IntermediateFn = std::function<double(int tau, int t, double y, double x, double u)>;
    using TerminalFn = std::function<double(int tau, double y, double terminal_state)>;
    using MeanFn = std::function<double(int tau, double y, double z)>;
    using RawFn = std::function<double(int t, double state_arg, double u)>;
    using TransformFn = std::function<double(int tau, double y, double raw)>;

    IntermediateFn intermediate;  // per-epoch reward
    TerminalFn terminal;          // terminal reward
    MeanFn mean_term;             // nonlinear function of the expected terminal state
    RawFn raw;                    // optional: raw-reward channel emitted by the environment
    TransformFn transform;        // optional: deterministic transform applied to raw rewards

    bool has_raw_channel() const { return static_cast<bool>(raw) && static_cast<bool>(transform); }

    // Time-consistent rewards: no (tau, y) dependence and no mean term.
    static TicRewards time_consistent(std::function<double(int t, double x, double u)> step_reward,
                                      std::function<double(double terminal_state)> final_reward);

    // Rewards defined by a raw channel plus a deterministic transform.
    static TicRewards from_raw(RawFn raw_step, std::function<double(double)> raw_final,
                               TransformFn transform);
};

class TicProblem {
public:
    using InitialSampler = std::function<double(RngStream&)>;

    TicProblem(TimeSet time, std::vector<Space> state_spaces, std::vector<Space> action_spaces,
               TransitionModel transitions, TicRewards rewards,
               InitialSampler initial_sampler = nullptr);

    int horizon() const { return time_.horizon; }
    const Space& state_space(int t) const { return state_spaces_.at(static_cast<std::size_t>(t)); }
    const Space& action_space(int t) const { return action_spaces_.at(static_cast<std::size_t>(t)); }
    const TicRewards& rewards() const { return rewards_; }
    const TransitionModel& transitions() const { return transitions_; }

    // True when every space is finite and the kernel is explicit; exact
    // sweeps demand this and reject anything else at the call site.
    bool finite() const { return finite_; }

    const std::vector<double>& kernel_row(int t, int x, int u) const {
        return transitions_.row(t, x, u);
    }
    int sample_next_index(int t, int x, int u, RngStream& rng) const {
        return transitions_.sample_index(t, x, u, rng);
    }
    double sample_next_value(int t, double x, double u, RngStream& rng) const;
    double sample_initial(RngStream& rng) const;

private:
    TimeSet time_;
    std::vector<Space> state_spaces_;   // size horizon+1
    std::vector<Space> action_spaces_;  // size horizon
    TransitionModel transitions_;
    TicRewards rewards_;
    InitialSampler initial_sampler_;
    bool finite_ = false;
};

// Deterministic Markov policy over finite spaces: an action index per (t, x).
class TabularPolicy {
public:
    TabularPolicy() = default;
    explicit TabularPolicy(std::vector<std::vector<int>> actions) : actions_(std::move(actions)) {}

    static TabularPolicy constant(const TicProblem& problem, int action_index);

    int horizon() const { return static_cast<int>(actions_.size()); }
    int action(int t, int x) const {
        return actions_.at(static_cast<std::size_t>(t)).at(static_cast<std::size_t>(x));
    }
    void set_action(int t, int x, int u) {
        actions_.at(static_cast<std::size_t>(t)).at(static_cast<std::size_t>(x)) = u;
    }
    const std::vector<std::vector<int>>& rows() const { return actions_; }

    friend bool operator==(const TabularPolicy& a, const TabularPolicy& b) {
        return a.actions_ == b.actions_;
    }

private:
    std::vector<std::vector<int>> actions_;
};

// Tail of a policy covering epochs {start, ..., horizon-1}. The first epoch
// may play one forced action in every state (the result of concatenation).
class PolicyTail {
public:
    PolicyTail() = default;  // empty tail

    static PolicyTail empty_from(int start) {
        PolicyTail tail;
        tail.start_ = start;
        return tail;
    }

    int start() const { return start_; }
    bool empty() const { return !forced_action_ && rows_.empty(); }
    // one past the last epoch covered
    int end() const {
        return start_ + (forced_action_ ? 1 : 0) + static_cast<int>(rows_.size());
    }

    int action(int t, int x) const;

    friend PolicyTail truncate(const TabularPolicy& policy, int k);
    friend PolicyTail concat(int action_index, int t, const PolicyTail& tail);

private:
    int start_ = 0;
    std::optional<int> forced_action_;
    std::vector<std::vector<int>> rows_;  // per-state actions from epoch start_+(forced?1:0)
};

// Restriction of `policy` to epochs {k, ..., horizon-1}; the input is untouched.
PolicyTail truncate(const TabularPolicy& policy, int k);

// Tail playing `action_index` at epoch t (in every state), then following
// `tail` from t+1 on. An empty tail is only meaningful at the last epoch.
PolicyTail concat(int action_index, int t, const PolicyTail& tail);

struct Exploration {
    enum class Kind { none, eps_greedy, lambda_uniform };
    Kind kind = Kind::none;
    double param = 0.0;

    static Exploration none() { return {}; }
    static Exploration eps_greedy(double eps);
    static Exploration lambda_uniform(double radius);
};

struct Trajectory {
    std::vector<int> state_index;   // finite problems only
    std::vector<double> state;      // horizon+1 values
    std::vector<int> action_index;  // finite problems only
    std::vector<double> action;     // horizon values
    std::vector<double> raw_reward; // present iff the problem has a raw channel
};

// Episode generation for finite problems; exploration limited to eps-greedy.
Trajectory rollout(const TicProblem& problem, const TabularPolicy& policy, int x0_index,
                   RngStream& env_rng, RngStream* exploration_rng = nullptr,
                   Exploration exploration = Exploration::none());

// Episode generation through a sampler; the policy is any (t, x) -> action
// value map, exploration limited to lambda-uniform.
Trajectory rollout(const TicProblem& problem,
                   const std::function<double(int t, double x)>& policy_value, double x0,
                   RngStream& env_rng, RngStream* exploration_rng = nullptr,
                   Exploration exploration = Exploration::none());

} // namespace sperl
