#include "sperl/instances.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace sperl {

namespace {

using nlohmann::json;

std::vector<double> sorted_distinct_values(RngStream& rng, int n, double lo, double hi) {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (double& v : out) v = rng.uniform(lo, hi);
    std::sort(out.begin(), out.end());
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i] <= out[i - 1]) out[i] = out[i - 1] + 1e-3;
    return out;
}

int draw_in(RngStream& rng, int lo, int hi) {
    return lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(hi - lo + 1)));
}

// Immutable per-instance data shared by the reward closures.
struct RewardTables {
    std::vector<std::vector<std::vector<double>>> step;  // [t][state][action]
    std::vector<double> final_reward;                    // [state]
    std::vector<double> states;                          // uniform state values
    int horizon = 0;
    RewardFamily family = RewardFamily::time_consistent;
    double hyperbolic_h = 0.0;
    double state_gamma = 0.0;
    double mean_coef = 0.0;

    int state_index(double v) const {
        for (std::size_t i = 0; i < states.size(); ++i)
            if (states[i] == v) return static_cast<int>(i);
        throw std::invalid_argument("state value not in the declared space");
    }
};

TicRewards build_rewards(std::shared_ptr<const RewardTables> data,
                         const std::vector<double>& action_values) {
    // Actions are looked up by value as well; the tables are indexed.
    auto actions = std::make_shared<const std::vector<double>>(action_values);
    auto action_index = [actions](double v) {
        for (std::size_t i = 0; i < actions->size(); ++i)
            if ((*actions)[i] == v) return static_cast<int>(i);
        throw std::invalid_argument("action value not in the declared space");
    };

    auto raw_step = [data, action_index](int t, double state_arg, double u) {
        return data->step[static_cast<std::size_t>(t)]
                         [static_cast<std::size_t>(data->state_index(state_arg))]
                         [static_cast<std::size_t>(action_index(u))];
    };
    auto raw_final = [data](double xT) {
        return data->final_reward[static_cast<std::size_t>(data->state_index(xT))];
    };

    switch (data->family) {
        case RewardFamily::time_consistent: {
            TicRewards rw = TicRewards::time_consistent(raw_step, raw_final);
            return rw;
        }
        case RewardFamily::hyperbolic: {
            const double h = data->hyperbolic_h;
            const int T = data->horizon;
            return TicRewards::from_raw(
                raw_step, raw_final,
                [h, T](int tau, double, double raw) { return raw / (1.0 + h * (T - tau)); });
        }
        case RewardFamily::state_dependent: {
            const double gamma = data->state_gamma;
            return TicRewards::from_raw(
                raw_step, raw_final,
                [gamma](int, double y, double raw) { return gamma / y * raw; });
        }
        case RewardFamily::quadratic_mean: {
            TicRewards rw = TicRewards::time_consistent(raw_step, raw_final);
            const double c = data->mean_coef;
            rw.mean_term = [c](int, double, double z) { return 0.5 * c * z * z; };
            return rw;
        }
    }
    throw std::logic_error("unreachable reward family");
}

} // namespace

std::string to_string(RewardFamily family) {
    switch (family) {
        case RewardFamily::time_consistent: return "time_consistent";
        case RewardFamily::hyperbolic: return "hyperbolic";
        case RewardFamily::state_dependent: return "state_dependent";
        case RewardFamily::quadratic_mean: return "quadratic_mean";
    }
    throw std::logic_error("unreachable reward family");
}

RewardFamily reward_family_from_string(const std::string& name) {
    if (name == "time_consistent") return RewardFamily::time_consistent;
    if (name == "hyperbolic") return RewardFamily::hyperbolic;
    if (name == "state_dependent") return RewardFamily::state_dependent;
    if (name == "quadratic_mean") return RewardFamily::quadratic_mean;
    throw std::invalid_argument("unknown reward family: " + name);
}

GeneratedInstance generate_instance(const RandomInstanceSpec& spec) {
    if (spec.horizon_min < 1 || spec.horizon_max < spec.horizon_min ||
        spec.states_min < 1 || spec.states_max < spec.states_min || spec.actions_min < 1 ||
        spec.actions_max < spec.actions_min)
        throw std::invalid_argument("malformed instance spec ranges");
    if (spec.kernel_sparsity < 0.0 || spec.kernel_sparsity >= 1.0)
        throw std::invalid_argument("kernel sparsity must lie in [0,1)");

    RngStream rng(spec.seed);
    const int T = draw_in(rng, spec.horizon_min, spec.horizon_max);
    const int nx = draw_in(rng, spec.states_min, spec.states_max);
    const int nu = draw_in(rng, spec.actions_min, spec.actions_max);

    // The state-dependent family divides by the evaluation state, so its
    // state support stays strictly positive.
    const bool positive_states = spec.family == RewardFamily::state_dependent;
    const std::vector<double> states =
        sorted_distinct_values(rng, nx, positive_states ? 0.5 : -1.0, positive_states ? 3.0 : 2.0);
    const std::vector<double> actions = sorted_distinct_values(rng, nu, -1.0, 1.0);

    // One stationary kernel shared by all epochs.
    std::vector<std::vector<std::vector<double>>> kernel_slice(
        static_cast<std::size_t>(nx),
        std::vector<std::vector<double>>(static_cast<std::size_t>(nu),
                                         std::vector<double>(static_cast<std::size_t>(nx), 0.0)));
    for (int x = 0; x < nx; ++x)
        for (int u = 0; u < nu; ++u) {
            auto& row = kernel_slice[static_cast<std::size_t>(x)][static_cast<std::size_t>(u)];
            double sum = 0.0;
            for (double& p : row) {
                p = rng.bernoulli(spec.kernel_sparsity) ? 0.0 : rng.uniform(0.05, 1.0);
                sum += p;
            }
            if (sum == 0.0) {
                row[static_cast<std::size_t>(draw_in(rng, 0, nx - 1))] = 1.0;
                sum = 1.0;
            }
            // Renormalize, pinning the last positive entry so the row sums
            // to 1 exactly.
            int last = -1;
            double partial = 0.0;
            for (int n = 0; n < nx; ++n)
                if (row[static_cast<std::size_t>(n)] > 0.0) last = n;
            for (int n = 0; n < nx; ++n) {
                if (n == last) continue;
                row[static_cast<std::size_t>(n)] /= sum;
                partial += row[static_cast<std::size_t>(n)];
            }
            row[static_cast<std::size_t>(last)] = 1.0 - partial;
        }

    json descriptor;
    descriptor["horizon"] = T;
    descriptor["states"] = states;
    descriptor["actions"] = actions;
    descriptor["stationary"] = true;
    descriptor["kernel"] = kernel_slice;

    json rewards;
    rewards["family"] = to_string(spec.family);
    std::vector<std::vector<std::vector<double>>> step(
        static_cast<std::size_t>(T),
        std::vector<std::vector<double>>(static_cast<std::size_t>(nx),
                                         std::vector<double>(static_cast<std::size_t>(nu), 0.0)));
    for (auto& per_x : step)
        for (auto& per_u : per_x)
            for (double& v : per_u) v = rng.uniform(-1.0, 1.0);
    std::vector<double> final_reward(static_cast<std::size_t>(nx));
    for (double& v : final_reward) v = rng.uniform(-1.0, 1.0);
    rewards["step"] = step;
    rewards["final"] = final_reward;
    if (spec.family == RewardFamily::hyperbolic) rewards["h"] = rng.uniform(0.5, 1.5);
    if (spec.family == RewardFamily::state_dependent) rewards["gamma"] = rng.uniform(0.5, 1.5);
    if (spec.family == RewardFamily::quadratic_mean) rewards["mean_coef"] = rng.uniform(0.4, 1.6);
    descriptor["rewards"] = std::move(rewards);

    return GeneratedInstance{problem_from_json(descriptor), std::move(descriptor)};
}

TicProblem problem_from_json(const nlohmann::json& descriptor) {
    const int T = descriptor.at("horizon").get<int>();
    const std::vector<double> states = descriptor.at("states").get<std::vector<double>>();
    const std::vector<double> actions = descriptor.at("actions").get<std::vector<double>>();
    const bool stationary = descriptor.value("stationary", true);

    auto kernel_slice =
        descriptor.at("kernel").get<std::vector<std::vector<std::vector<double>>>>();
    TransitionModel::KernelData kernel(static_cast<std::size_t>(T), kernel_slice);

    const json& rw_json = descriptor.at("rewards");
    auto data = std::make_shared<RewardTables>();
    data->family = reward_family_from_string(rw_json.at("family").get<std::string>());
    data->step = rw_json.at("step").get<std::vector<std::vector<std::vector<double>>>>();
    data->final_reward = rw_json.at("final").get<std::vector<double>>();
    data->states = states;
    data->horizon = T;
    data->hyperbolic_h = rw_json.value("h", 1.0);
    data->state_gamma = rw_json.value("gamma", 1.0);
    data->mean_coef = rw_json.value("mean_coef", 1.0);

    std::vector<Space> state_spaces(static_cast<std::size_t>(T) + 1, Space::finite(states));
    std::vector<Space> action_spaces(static_cast<std::size_t>(T), Space::finite(actions));
    return TicProblem(TimeSet(T), std::move(state_spaces), std::move(action_spaces),
                      TransitionModel::explicit_kernel(std::move(kernel), stationary),
                      build_rewards(data, actions));
}

nlohmann::json tables_to_json(const ValueTables& tables, const TicProblem& problem) {
    json out;
    const int T = problem.horizon();
    for (int t = 0; t < T; ++t) {
        json slice;
        for (int x = 0; x < problem.state_space(t).size(); ++x)
            for (int u = 0; u < problem.action_space(t).size(); ++u) {
                json cell;
                cell["x"] = x;
                cell["u"] = u;
                cell["action_value"] = tables.action_value(t, x, u);
                cell["mean_adj"] = tables.mean_adj(t, x, u);
                json fj = json::array();
                json rj = json::array();
                for (int tau = 0; tau <= t; ++tau)
                    for (int y = 0; y < problem.state_space(tau).size(); ++y) {
                        fj.push_back({{"tau", tau},
                                      {"y", y},
                                      {"value", tables.terminal_adj(t, x, u, tau, y)}});
                        for (int m = t; m < T; ++m)
                            rj.push_back({{"tau", tau},
                                          {"m", m},
                                          {"y", y},
                                          {"value", tables.reward_adj(t, x, u, tau, m, y)}});
                    }
                cell["terminal_adj"] = std::move(fj);
                cell["reward_adj"] = std::move(rj);
                slice.push_back(std::move(cell));
            }
        out.push_back(std::move(slice));
    }
    return out;
}

TicProblem hyperbolic_chain_problem() {
    const int T = 3;
    const std::vector<double> states{1.0, 2.0, 3.0, 4.0};
    const std::vector<double> actions{-1.0, 1.0};
    const int nx = 4;

    // Deterministic rotation: the actions advance the state by 1 or 3 mod 4.
    // The reward tables below make the equilibrium rows injective state maps,
    // so greedy play from a uniform start keeps state visitation uniform.
    std::vector<std::vector<std::vector<double>>> slice(
        static_cast<std::size_t>(nx),
        std::vector<std::vector<double>>(2, std::vector<double>(static_cast<std::size_t>(nx),
                                                                0.0)));
    for (int x = 0; x < nx; ++x)
        for (int u = 0; u < 2; ++u) {
            const int next = (x + (u == 1 ? 3 : 1)) % nx;
            slice[static_cast<std::size_t>(x)][static_cast<std::size_t>(u)]
                 [static_cast<std::size_t>(next)] = 1.0;
        }

    nlohmann::json descriptor;
    descriptor["horizon"] = T;
    descriptor["states"] = states;
    descriptor["actions"] = actions;
    descriptor["stationary"] = true;
    descriptor["kernel"] = slice;
    nlohmann::json rewards;
    rewards["family"] = "hyperbolic";
    rewards["h"] = 1.0;
    rewards["step"] = std::vector<std::vector<std::vector<double>>>{
        {{0.8, -0.4}, {-0.6, 0.7}, {0.9, 0.1}, {-0.2, 0.8}},
        {{-0.5, 0.6}, {0.9, 0.0}, {-0.7, 0.6}, {0.5, -0.3}},
        // final epoch: indexed by the post-transition state
        {{-0.5, 0.6}, {0.7, -0.2}, {0.2, 0.9}, {0.8, -0.6}},
    };
    rewards["final"] = std::vector<double>{0.2, 0.9, 0.4, 1.1};
    descriptor["rewards"] = std::move(rewards);
    return problem_from_json(descriptor);
}

TabularPolicy anti_greedy_terminal_policy(const TicProblem& problem) {
    if (!problem.finite())
        throw std::logic_error("verification policies need finite problems");
    const int T = problem.horizon();
    TabularPolicy policy = TabularPolicy::constant(problem, 0);
    const int t = T - 1;
    const Space& xs = problem.state_space(t);
    const Space& us = problem.action_space(t);
    const Space& xt = problem.state_space(T);
    const TicRewards& rw = problem.rewards();
    for (int x = 0; x < xs.size(); ++x) {
        const double x_val = xs.value(x);
        int worst = 0;
        double worst_q = 0.0;
        for (int u = 0; u < us.size(); ++u) {
            const auto& p = problem.kernel_row(t, x, u);
            double reward = 0.0, terminal = 0.0, mean = 0.0;
            for (int n = 0; n < xt.size(); ++n) {
                const double pn = p[static_cast<std::size_t>(n)];
                if (pn == 0.0) continue;
                const double next_val = xt.value(n);
                reward += pn * rw.intermediate(t, t, x_val, next_val, us.value(u));
                terminal += pn * rw.terminal(t, x_val, next_val);
                mean += pn * next_val;
            }
            const double q = reward + terminal + rw.mean_term(t, x_val, mean);
            if (u == 0 || q < worst_q) {
                worst = u;
                worst_q = q;
            }
        }
        policy.set_action(t, x, worst);
    }
    return policy;
}

} // namespace sperl
