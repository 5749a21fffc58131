#include "sperl/replay.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace sperl {

ReplayBuffer::ReplayBuffer(int horizon) : horizon_(horizon) {
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
}

void ReplayBuffer::begin_batch() { current_start_ = episodes_.size(); }

void ReplayBuffer::append_episode(std::vector<double> states, std::vector<double> actions) {
    if (static_cast<int>(states.size()) != horizon_ + 1 ||
        static_cast<int>(actions.size()) != horizon_)
        throw std::invalid_argument("episode length does not match the horizon");
    episodes_.push_back(Episode{std::move(states), std::move(actions)});
}

std::int64_t ReplayBuffer::per_episode_matches(const Filter& filter) const {
    if (filter.t) {
        const int t = *filter.t;
        if (t < 0 || t >= horizon_) throw std::out_of_range("filter epoch outside horizon");
        if (filter.tau) {
            if (*filter.tau < 0 || *filter.tau > t)
                throw std::out_of_range("filter needs 0 <= tau <= t");
            return 1;
        }
        return filter.diagonal_only ? 1 : t + 1;
    }
    if (filter.tau) {
        const int tau = *filter.tau;
        if (tau < 0 || tau >= horizon_) throw std::out_of_range("filter tau outside horizon");
        return filter.diagonal_only ? 1 : horizon_ - tau;
    }
    if (filter.diagonal_only) return horizon_;
    return static_cast<std::int64_t>(horizon_) * (horizon_ + 1) / 2;
}

Experience ReplayBuffer::materialize(std::int64_t episode, std::int64_t within,
                                     const Filter& filter) const {
    int t, tau;
    if (filter.t) {
        t = *filter.t;
        if (filter.tau)
            tau = *filter.tau;
        else if (filter.diagonal_only)
            tau = t;
        else
            tau = static_cast<int>(within);
    } else if (filter.tau) {
        tau = *filter.tau;
        t = filter.diagonal_only ? tau : tau + static_cast<int>(within);
    } else if (filter.diagonal_only) {
        t = static_cast<int>(within);
        tau = t;
    } else {
        // triangular unranking over (t, tau) with tau <= t
        std::int64_t j = within;
        t = 0;
        while (j > t) {
            j -= t + 1;
            ++t;
        }
        tau = static_cast<int>(j);
    }
    const Episode& ep = episodes_[static_cast<std::size_t>(episode)];
    return Experience{t,
                      tau,
                      ep.states[static_cast<std::size_t>(t)],
                      ep.actions[static_cast<std::size_t>(t)],
                      ep.states[static_cast<std::size_t>(tau)],
                      ep.states[static_cast<std::size_t>(t) + 1]};
}

std::int64_t ReplayBuffer::current_size(const Filter& filter) const {
    return static_cast<std::int64_t>(episodes_.size() - current_start_) *
           per_episode_matches(filter);
}

std::int64_t ReplayBuffer::past_size(const Filter& filter) const {
    return static_cast<std::int64_t>(current_start_) * per_episode_matches(filter);
}

std::vector<Experience> ReplayBuffer::sample(const Filter& filter, int resample_kappa,
                                             RngStream& rng) const {
    if (resample_kappa < 0) throw std::invalid_argument("resample constant must be >= 0");
    const std::int64_t per_ep = per_episode_matches(filter);
    const std::int64_t n_current = current_size(filter);
    const std::int64_t n_past = past_size(filter);
    const std::int64_t want_past = std::min<std::int64_t>(
        static_cast<std::int64_t>(resample_kappa) * n_current, n_past);

    std::vector<Experience> out;
    out.reserve(static_cast<std::size_t>(n_current + want_past));
    for (std::size_t ep = current_start_; ep < episodes_.size(); ++ep)
        for (std::int64_t j = 0; j < per_ep; ++j)
            out.push_back(materialize(static_cast<std::int64_t>(ep), j, filter));

    if (want_past > 0) {
        // Floyd's sampling without replacement over the logical past indices.
        std::unordered_set<std::int64_t> picked;
        picked.reserve(static_cast<std::size_t>(want_past) * 2);
        for (std::int64_t i = n_past - want_past; i < n_past; ++i) {
            const std::int64_t j = static_cast<std::int64_t>(
                rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
            if (!picked.insert(j).second) picked.insert(i);
        }
        std::vector<std::int64_t> indices(picked.begin(), picked.end());
        std::sort(indices.begin(), indices.end());
        for (std::int64_t gi : indices)
            out.push_back(materialize(gi / per_ep, gi % per_ep, filter));
    }
    return out;
}

} // namespace sperl
