#include "sperl/mv_app.hpp"

#include <cmath>
#include <stdexcept>

namespace sperl {

void MarketParams::validate() const {
    if (sigma <= 0.0) throw std::invalid_argument("volatility must be positive");
    if (dt <= 0.0) throw std::invalid_argument("timestep must be positive");
    if (periods < 1) throw std::invalid_argument("need at least one period");
    if (risk_aversion <= 0.0) throw std::invalid_argument("risk aversion must be positive");
}

double market_step(const MarketParams& params, double wealth, double allocation,
                   RngStream& rng) {
    const double excess = rng.normal(params.mean_return(), std::sqrt(params.return_variance()));
    return (1.0 + params.period_rate()) * wealth + allocation * (excess - params.period_rate());
}

UnitExperience transform_to_unit_state(double period_rate, double x, double u, double x_next) {
    return UnitExperience{u, x_next - (1.0 + period_rate) * (x - 1.0)};
}

namespace {

// Fits targets already stripped of the pinned wealth part on the given
// action features, with the published residual-variance shapes.
AlsResult fit_action_coeffs(const std::vector<UnitExperience>& batch,
                            const std::vector<double>& targets, int order) {
    RegressionProblem reg;
    reg.targets = targets;
    reg.features.reserve(batch.size());
    std::vector<std::vector<double>> resid;
    resid.reserve(batch.size());
    for (const UnitExperience& e : batch) {
        const double u = e.action;
        if (order == 1) {
            reg.features.push_back({u});
            resid.push_back({u * u});
        } else {
            reg.features.push_back({u, u * u});
            resid.push_back({u * u, u * u * u * u});
        }
    }
    return als_fit(reg, resid);
}

} // namespace

BoundaryFitReport boundary_critic_fit(const std::vector<UnitExperience>& batch,
                                      MvCriticWeights& weights, long iteration,
                                      double risk_aversion, double period_rate) {
    if (weights.q.empty() || weights.g.empty() || weights.q.size() != weights.g.size())
        throw std::invalid_argument("malformed critic weight tables");
    const std::size_t last = weights.q.size() - 1;
    CriticG& g = weights.g[last];
    CriticQ& q = weights.q[last];
    const double gross = 1.0 + period_rate;

    BoundaryFitReport report;
    if (batch.empty()) {
        report.g_skipped = report.q_skipped = true;
        return report;
    }

    // Terminal-mean critic first; the action-value targets consume it.
    std::vector<double> g_targets;
    g_targets.reserve(batch.size());
    for (const UnitExperience& e : batch) g_targets.push_back(e.next_state - gross);
    try {
        const AlsResult fit = fit_action_coeffs(batch, g_targets, 1);
        report.g_diag = fit.diag;
        g.w_u = ema_step({g.w_u}, {fit.weights[0]}, iteration)[0];
    } catch (const std::exception&) {
        report.g_skipped = true;
    }
    g.w_x = gross;
    g.w_0 = 0.0;

    std::vector<double> q_targets;
    q_targets.reserve(batch.size());
    const double half_gamma = 0.5 * risk_aversion;
    for (const UnitExperience& e : batch) {
        const double xn = e.next_state;
        const double g_hat = g.eval(1.0, e.action);
        q_targets.push_back(xn - half_gamma * xn * xn + half_gamma * g_hat * g_hat - gross);
    }
    try {
        const AlsResult fit = fit_action_coeffs(batch, q_targets, 2);
        report.q_diag = fit.diag;
        const std::vector<double> relaxed =
            ema_step({q.w_u, q.w_uu}, {fit.weights[0], fit.weights[1]}, iteration);
        q.w_u = relaxed[0];
        q.w_uu = relaxed[1];
    } catch (const std::exception&) {
        report.q_skipped = true;
    }
    q.w_x = gross;
    q.w_0 = 0.0;

    report.slope_gap = std::abs(q.w_u - g.w_u);
    return report;
}

void parametric_recursion(MvCriticWeights& weights, int t) {
    const int T = static_cast<int>(weights.q.size());
    if (t < 0 || t > T - 2)
        throw std::out_of_range("recursion propagates epochs T-2 down to 0 only");
    const CriticQ& q_next = weights.q[static_cast<std::size_t>(t) + 1];
    const CriticG& g_next = weights.g[static_cast<std::size_t>(t) + 1];
    const CriticQ& q_last = weights.q[static_cast<std::size_t>(T) - 1];
    const CriticG& g_last = weights.g[static_cast<std::size_t>(T) - 1];
    const double gx2 = g_next.w_x * g_next.w_x;

    CriticQ& q = weights.q[static_cast<std::size_t>(t)];
    CriticG& g = weights.g[static_cast<std::size_t>(t)];
    q.w_x = (q_next.w_x - gx2) * g_last.w_x + gx2 * q_last.w_x;
    q.w_u = q_next.w_x * g_last.w_u + gx2 * (q_last.w_u - g_last.w_u);
    q.w_uu = gx2 * q_last.w_uu;
    q.w_0 = 0.0;
    g.w_x = g_next.w_x * g_last.w_x;
    g.w_u = g_next.w_x * g_last.w_u;
    g.w_0 = 0.0;
}

double actor_step(const CriticQ& critic, double allocation, double actor_rate) {
    return allocation + actor_rate * critic.du(allocation);
}

MvGroundTruth ground_truth(const MarketParams& params) {
    params.validate();
    const int T = params.periods;
    const double gross = 1.0 + params.period_rate();
    const double excess = params.mean_return() - params.period_rate();
    const double curvature = -0.5 * params.risk_aversion * params.return_variance();

    MvGroundTruth out;
    out.weights.q.resize(static_cast<std::size_t>(T));
    out.weights.g.resize(static_cast<std::size_t>(T));
    out.weights.g[static_cast<std::size_t>(T) - 1] = CriticG{excess, gross, 0.0};
    out.weights.q[static_cast<std::size_t>(T) - 1] = CriticQ{curvature, excess, gross, 0.0};
    for (int t = T - 2; t >= 0; --t) parametric_recursion(out.weights, t);

    out.equilibrium_action.resize(static_cast<std::size_t>(T));
    out.printed_closed_form.resize(static_cast<std::size_t>(T));
    const double printed_base =
        excess * excess / (params.risk_aversion * params.return_variance());
    for (int t = 0; t < T; ++t) {
        const CriticQ& q = out.weights.q[static_cast<std::size_t>(t)];
        out.equilibrium_action[static_cast<std::size_t>(t)] = -q.w_u / (2.0 * q.w_uu);
        out.printed_closed_form[static_cast<std::size_t>(t)] =
            printed_base * std::pow(gross, T - (t + 1));
    }
    return out;
}

namespace {

// Model-free tail fit for one epoch t < T-1: plain relaxed regressions of
// the bootstrap targets on the full (u, x) feature sets.
void model_free_tail_fit(MvCriticWeights& weights, const MvActor& actor,
                         const std::vector<Experience>& batch, int t, long iteration,
                         double risk_aversion) {
    if (batch.empty()) return;
    const CriticQ& q_next = weights.q[static_cast<std::size_t>(t) + 1];
    const CriticG& g_next = weights.g[static_cast<std::size_t>(t) + 1];
    const double half_gamma = 0.5 * risk_aversion;

    RegressionProblem g_reg;
    for (const Experience& e : batch) {
        const double next_action = actor.allocation[static_cast<std::size_t>(t) + 1];
        g_reg.targets.push_back(g_next.eval(e.next_state, next_action));
        g_reg.features.push_back({e.action, e.state, 1.0});
    }
    const OlsResult g_fit = ols_fit(g_reg);
    CriticG& g = weights.g[static_cast<std::size_t>(t)];
    const std::vector<double> g_new =
        ema_step({g.w_u, g.w_x, g.w_0}, g_fit.weights, iteration);
    g.w_u = g_new[0];
    g.w_x = g_new[1];
    g.w_0 = g_new[2];

    RegressionProblem q_reg;
    for (const Experience& e : batch) {
        const double next_action = actor.allocation[static_cast<std::size_t>(t) + 1];
        const double g_next_val = g_next.eval(e.next_state, next_action);
        const double g_here = g.eval(e.state, e.action);
        const double mean_gap =
            half_gamma * g_next_val * g_next_val - half_gamma * g_here * g_here;
        q_reg.targets.push_back(q_next.eval(e.next_state, next_action) - mean_gap);
        q_reg.features.push_back({e.action * e.action, e.action, e.state, 1.0});
    }
    const OlsResult q_fit = ols_fit(q_reg);
    CriticQ& q = weights.q[static_cast<std::size_t>(t)];
    const std::vector<double> q_new =
        ema_step({q.w_uu, q.w_u, q.w_x, q.w_0}, q_fit.weights, iteration);
    q.w_uu = q_new[0];
    q.w_u = q_new[1];
    q.w_x = q_new[2];
    q.w_0 = q_new[3];
}

} // namespace

MvTrainResult mv_train(const MarketParams& params, const MvHyper& hyper, std::uint64_t seed) {
    params.validate();
    if (hyper.iterations < 1 || hyper.batch_episodes < 1)
        throw std::invalid_argument("bad training configuration");
    const int T = params.periods;
    const double gross = 1.0 + params.period_rate();

    std::vector<int> log_epochs = hyper.log_epochs;
    if (log_epochs.empty()) log_epochs = {0, (T - 1) / 2, T - 1};

    RngStream root(seed);
    RngStream env = root.substream("env");
    RngStream expl = root.substream("exploration");
    RngStream replay_rng = root.substream("replay");
    RngStream eval_env = root.substream("eval");

    MvTrainResult result;
    result.actor.allocation.assign(static_cast<std::size_t>(T), 0.0);
    result.critics.q.assign(static_cast<std::size_t>(T), CriticQ{0.0, 0.0, gross, 0.0});
    result.critics.g.assign(static_cast<std::size_t>(T), CriticG{0.0, gross, 0.0});
    const MvGroundTruth truth = ground_truth(params);

    ReplayBuffer buffer(T);
    result.terminal_wealth.reserve(static_cast<std::size_t>(hyper.iterations));

    for (int l = 0; l < hyper.iterations; ++l) {
        buffer.begin_batch();
        for (int b = 0; b < hyper.batch_episodes; ++b) {
            std::vector<double> states(static_cast<std::size_t>(T) + 1);
            std::vector<double> actions(static_cast<std::size_t>(T));
            states[0] = params.initial_wealth;
            for (int t = 0; t < T; ++t) {
                const double center = result.actor.act(t, states[static_cast<std::size_t>(t)]);
                const double u = expl.uniform(center - hyper.exploration_radius,
                                              center + hyper.exploration_radius);
                actions[static_cast<std::size_t>(t)] = u;
                states[static_cast<std::size_t>(t) + 1] =
                    market_step(params, states[static_cast<std::size_t>(t)], u, env);
            }
            buffer.append_episode(std::move(states), std::move(actions));
        }

        // Samples from every period pool into one mini-batch; each step of
        // each episode contributes once.
        const std::vector<Experience> minibatch = buffer.sample(
            ReplayBuffer::Filter{std::nullopt, std::nullopt, true}, hyper.resample_kappa,
            replay_rng);
        std::vector<UnitExperience> transformed;
        transformed.reserve(minibatch.size());
        for (const Experience& e : minibatch)
            transformed.push_back(
                transform_to_unit_state(params.period_rate(), e.state, e.action, e.next_state));

        for (int t = T - 1; t >= 0; --t) {
            if (t == T - 1) {
                const BoundaryFitReport report = boundary_critic_fit(
                    transformed, result.critics, l, params.risk_aversion, params.period_rate());
                if (report.g_skipped || report.q_skipped) ++result.fit_skips;
            } else if (hyper.model_free_tail) {
                const std::vector<Experience> batch = buffer.sample(
                    ReplayBuffer::Filter{t, std::nullopt, true}, hyper.resample_kappa,
                    replay_rng);
                model_free_tail_fit(result.critics, result.actor, batch, t, l,
                                    params.risk_aversion);
            } else {
                parametric_recursion(result.critics, t);
            }
            result.actor.allocation[static_cast<std::size_t>(t)] =
                actor_step(result.critics.q[static_cast<std::size_t>(t)],
                           result.actor.allocation[static_cast<std::size_t>(t)],
                           hyper.actor_rate);
        }

        // One exploration-free evaluation episode per iteration.
        double wealth = params.initial_wealth;
        for (int t = 0; t < T; ++t)
            wealth = market_step(params, wealth, result.actor.act(t, wealth), eval_env);
        result.terminal_wealth.push_back(wealth);

        for (int t : log_epochs) {
            const std::size_t ti = static_cast<std::size_t>(t);
            result.critic_curve.push_back(MvCriticRow{
                l, t, result.critics.g[ti].w_u, result.critics.q[ti].w_u,
                result.critics.q[ti].w_uu, truth.weights.g[ti].w_u, truth.weights.q[ti].w_u,
                truth.weights.q[ti].w_uu});
            result.actor_curve.push_back(MvActorRow{l, t, result.actor.allocation[ti],
                                                    truth.equilibrium_action[ti]});
        }
    }

    const int windows = hyper.iterations / hyper.eval_window;
    for (int w = 0; w < windows; ++w) {
        double sum = 0.0;
        for (int i = 0; i < hyper.eval_window; ++i)
            sum += result.terminal_wealth[static_cast<std::size_t>(w * hyper.eval_window + i)];
        const double mean = sum / hyper.eval_window;
        double ss = 0.0;
        for (int i = 0; i < hyper.eval_window; ++i) {
            const double d =
                result.terminal_wealth[static_cast<std::size_t>(w * hyper.eval_window + i)] -
                mean;
            ss += d * d;
        }
        const double stdev =
            hyper.eval_window > 1 ? std::sqrt(ss / (hyper.eval_window - 1)) : 0.0;
        result.wealth_curve.push_back(MvWealthRow{w, mean, stdev});
    }
    return result;
}

EvalStats evaluate_policy(const MarketParams& params, const MvActor& actor, int episodes,
                          std::uint64_t seed) {
    params.validate();
    if (episodes < 1) throw std::invalid_argument("need at least one evaluation episode");
    if (static_cast<int>(actor.allocation.size()) != params.periods)
        throw std::invalid_argument("actor horizon mismatch");
    RngStream rng = RngStream(seed).substream("eval");
    std::vector<double> finals(static_cast<std::size_t>(episodes));
    for (int e = 0; e < episodes; ++e) {
        double wealth = params.initial_wealth;
        for (int t = 0; t < params.periods; ++t)
            wealth = market_step(params, wealth, actor.act(t, wealth), rng);
        finals[static_cast<std::size_t>(e)] = wealth;
    }
    double sum = 0.0;
    for (double v : finals) sum += v;
    const double mean = sum / episodes;
    double ss = 0.0;
    for (double v : finals) ss += (v - mean) * (v - mean);
    return EvalStats{mean, episodes > 1 ? std::sqrt(ss / (episodes - 1)) : 0.0};
}

MarketParams mv_market_preset(const std::string& name, double mu) {
    MarketParams p;
    p.mu = mu;
    if (name == "paper") {
        p.dt = 0.01;
        p.periods = 100;
    } else if (name == "desk") {
        p.dt = 0.05;
        p.periods = 20;
    } else {
        throw std::invalid_argument("unknown market preset: " + name);
    }
    return p;
}

MvHyper mv_hyper_preset(const std::string& name) {
    MvHyper h;
    if (name == "paper") {
        h.iterations = 5000;
    } else if (name == "desk") {
        h.iterations = 500;
    } else {
        throw std::invalid_argument("unknown hyper preset: " + name);
    }
    return h;
}

} // namespace sperl
