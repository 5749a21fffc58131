#pragma once

#include "sperl/rng.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace sperl {

// Replay tuple: at epoch t the agent saw state `state`, acted `action`,
// landed in `next_state`; `tau_state` is the state that was observed at the
// earlier epoch `tau` of the same episode.
struct Experience {
    int t = 0;
    int tau = 0;
    double state = 0.0;
    double action = 0.0;
    double tau_state = 0.0;
    double next_state = 0.0;
};

// Append-only store of episodes, logically exposing every (t, tau) pair with
// 0 <= tau <= t <= T-1 as one Experience. Episodes appended since the last
// begin_batch() form the current partition; everything older is past.
// Storing episodes rather than materialized tuples keeps the quadratic
// (t, tau) fan-out implicit, which matters at long horizons.
class ReplayBuffer {
public:
    explicit ReplayBuffer(int horizon);

    // Marks the current/past boundary for the next training iteration.
    void begin_batch();

    void append_episode(std::vector<double> states, std::vector<double> actions);

    struct Filter {
        std::optional<int> t;
        std::optional<int> tau;
        // keep only tau == t; pooled sampling then uses each step once
        bool diagonal_only = false;
    };

    std::int64_t episode_count() const { return static_cast<std::int64_t>(episodes_.size()); }
    std::int64_t current_size(const Filter& filter) const;
    std::int64_t past_size(const Filter& filter) const;

    // All matching current experiences, plus min(kappa * |current match|,
    // |past match|) past experiences sampled without replacement.
    // Deterministic given the stream.
    std::vector<Experience> sample(const Filter& filter, int resample_kappa,
                                   RngStream& rng) const;

private:
    struct Episode {
        std::vector<double> states;   // horizon + 1
        std::vector<double> actions;  // horizon
    };

    std::int64_t per_episode_matches(const Filter& filter) const;
    Experience materialize(std::int64_t episode, std::int64_t within, const Filter& filter) const;

    int horizon_ = 0;
    std::vector<Episode> episodes_;
    std::size_t current_start_ = 0;
};

} // namespace sperl
