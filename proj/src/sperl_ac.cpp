#include "sperl/sperl_ac.hpp"

#include "sperl/csv.hpp"

#include <fstream>
#include <stdexcept>

namespace sperl {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

// Least-squares projection of targets onto the family's features, relaxed
// toward the old weights.
std::vector<double> relaxed_fit(const CriticFamily& family, const std::vector<double>& old_w,
                                const std::vector<Experience>& batch,
                                const std::vector<double>& targets,
                                const std::vector<double>& contexts, double rate) {
    RegressionProblem reg;
    reg.targets = targets;
    reg.features.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
        reg.features.push_back(family.features(batch[i].state, batch[i].action, contexts[i]));
    const OlsResult fit = ols_fit(reg);
    std::vector<double> out(old_w.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = old_w[i] + rate * (fit.weights[i] - old_w[i]);
    return out;
}

} // namespace

double CriticFamily::eval(const std::vector<double>& w, double x, double u,
                          double context) const {
    return dot(features(x, u, context), w);
}

double CriticFamily::du(const std::vector<double>& w, double x, double u, double context) const {
    if (!du_features) throw std::logic_error("critic family has no action derivative");
    return dot(du_features(x, u, context), w);
}

CriticWeights CriticWeights::make(int horizon, CriticFamily q_family, CriticFamily g_family,
                                  CriticFamily f_family, CriticFamily r_family) {
    CriticWeights out;
    out.q_family = std::move(q_family);
    out.g_family = std::move(g_family);
    out.f_family = std::move(f_family);
    out.r_family = std::move(r_family);
    out.use_adjustment_critics = out.f_family.dim > 0 && out.r_family.dim > 0;
    const std::size_t T = static_cast<std::size_t>(horizon);
    out.q.assign(T, std::vector<double>(static_cast<std::size_t>(out.q_family.dim), 0.0));
    out.g.assign(T, std::vector<double>(static_cast<std::size_t>(out.g_family.dim), 0.0));
    if (out.use_adjustment_critics) {
        out.f.resize(T);
        out.r.resize(T);
        for (std::size_t t = 0; t < T; ++t) {
            out.f[t].assign(t + 1,
                            std::vector<double>(static_cast<std::size_t>(out.f_family.dim), 0.0));
            out.r[t].assign(t + 1, std::vector<std::vector<double>>(
                                       T - t, std::vector<double>(
                                                  static_cast<std::size_t>(out.r_family.dim),
                                                  0.0)));
        }
    }
    return out;
}

ActorFamily ActorFamily::state_invariant_scalar() {
    ActorFamily fam;
    fam.dim = 1;
    fam.eval = [](double, const std::vector<double>& theta) { return theta[0]; };
    fam.grad = [](double, const std::vector<double>&) { return std::vector<double>{1.0}; };
    return fam;
}

ActorWeights ActorWeights::make(int horizon, ActorFamily family, double init) {
    ActorWeights out;
    out.family = std::move(family);
    out.theta.assign(static_cast<std::size_t>(horizon),
                     std::vector<double>(static_cast<std::size_t>(out.family.dim), init));
    return out;
}

std::vector<Experience> replay_sample(const ReplayBuffer& buffer, ReplayBuffer::Filter filter,
                                      int kappa, RngStream& rng) {
    return buffer.sample(filter, kappa, rng);
}

std::vector<double> update_reward_critic(const CriticWeights& critics, double critic_rate,
                                         const ActorWeights& actor, const TicProblem& problem,
                                         int t, int tau, int m, const ReplayBuffer& buffer,
                                         int kappa, RngStream& rng, bool* skipped) {
    const int T = problem.horizon();
    if (m < t || m >= T || tau < 0 || tau > t) throw std::out_of_range("bad (t, tau, m) triple");
    const auto& old_w =
        critics.r[static_cast<std::size_t>(t)][static_cast<std::size_t>(tau)]
                 [static_cast<std::size_t>(m - t)];
    const std::vector<Experience> batch =
        replay_sample(buffer, {t, tau, false}, kappa, rng);
    if (batch.empty()) {
        if (skipped) *skipped = true;
        return old_w;
    }
    const TicRewards& rw = problem.rewards();
    std::vector<double> targets, contexts;
    targets.reserve(batch.size());
    contexts.reserve(batch.size());
    for (const Experience& e : batch) {
        double xi;
        if (m == t) {
            // Final-epoch reward reads the post-transition state.
            const double state_arg = (t == T - 1) ? e.next_state : e.state;
            xi = rw.intermediate(tau, t, e.tau_state, state_arg, e.action);
        } else {
            const double next_action = actor.act(t + 1, e.next_state);
            xi = critics.r_family.eval(
                critics.r[static_cast<std::size_t>(t) + 1][static_cast<std::size_t>(tau)]
                         [static_cast<std::size_t>(m - t - 1)],
                e.next_state, next_action, e.tau_state);
        }
        targets.push_back(xi);
        contexts.push_back(e.tau_state);
    }
    return relaxed_fit(critics.r_family, old_w, batch, targets, contexts, critic_rate);
}

std::vector<double> update_terminal_critic(const CriticWeights& critics, double critic_rate,
                                           const ActorWeights& actor, const TicProblem& problem,
                                           int t, int tau, const ReplayBuffer& buffer, int kappa,
                                           RngStream& rng, bool* skipped) {
    const int T = problem.horizon();
    if (tau < 0 || tau > t) throw std::out_of_range("bad (t, tau) pair");
    const auto& old_w = critics.f[static_cast<std::size_t>(t)][static_cast<std::size_t>(tau)];
    const std::vector<Experience> batch =
        replay_sample(buffer, {t, tau, false}, kappa, rng);
    if (batch.empty()) {
        if (skipped) *skipped = true;
        return old_w;
    }
    const TicRewards& rw = problem.rewards();
    std::vector<double> targets, contexts;
    for (const Experience& e : batch) {
        double xi;
        if (t == T - 1) {
            xi = rw.terminal(tau, e.tau_state, e.next_state);
        } else {
            const double next_action = actor.act(t + 1, e.next_state);
            xi = critics.f_family.eval(
                critics.f[static_cast<std::size_t>(t) + 1][static_cast<std::size_t>(tau)],
                e.next_state, next_action, e.tau_state);
        }
        targets.push_back(xi);
        contexts.push_back(e.tau_state);
    }
    return relaxed_fit(critics.f_family, old_w, batch, targets, contexts, critic_rate);
}

std::vector<double> update_mean_critic(const CriticWeights& critics, double critic_rate,
                                       const ActorWeights& actor, const TicProblem& problem,
                                       int t, const ReplayBuffer& buffer, int kappa,
                                       RngStream& rng, bool* skipped) {
    const int T = problem.horizon();
    const auto& old_w = critics.g[static_cast<std::size_t>(t)];
    const std::vector<Experience> batch =
        replay_sample(buffer, {t, std::nullopt, true}, kappa, rng);
    if (batch.empty()) {
        if (skipped) *skipped = true;
        return old_w;
    }
    std::vector<double> targets, contexts;
    for (const Experience& e : batch) {
        double xi;
        if (t == T - 1) {
            xi = e.next_state;
        } else {
            const double next_action = actor.act(t + 1, e.next_state);
            xi = critics.g_family.eval(critics.g[static_cast<std::size_t>(t) + 1], e.next_state,
                                       next_action);
        }
        targets.push_back(xi);
        contexts.push_back(0.0);
    }
    return relaxed_fit(critics.g_family, old_w, batch, targets, contexts, critic_rate);
}

std::vector<double> update_action_value_critic(const CriticWeights& critics, double critic_rate,
                                               const ActorWeights& actor,
                                               const TicProblem& problem, int t,
                                               const ReplayBuffer& buffer, int kappa,
                                               RngStream& rng, bool* skipped) {
    const int T = problem.horizon();
    const TicRewards& rw = problem.rewards();
    const auto& old_w = critics.q[static_cast<std::size_t>(t)];
    const std::vector<Experience> batch =
        replay_sample(buffer, {t, std::nullopt, true}, kappa, rng);
    if (batch.empty()) {
        if (skipped) *skipped = true;
        return old_w;
    }

    std::vector<double> targets, contexts;
    for (const Experience& e : batch) {
        const double g_here =
            critics.g_family.eval(critics.g[static_cast<std::size_t>(t)], e.state, e.action);
        double xi;
        if (critics.use_adjustment_critics) {
            const auto r_here = [&](int m) {
                return critics.r_family.eval(
                    critics.r[static_cast<std::size_t>(t)][static_cast<std::size_t>(t)]
                             [static_cast<std::size_t>(m - t)],
                    e.state, e.action, e.state);
            };
            const double f_here = critics.f_family.eval(
                critics.f[static_cast<std::size_t>(t)][static_cast<std::size_t>(t)], e.state,
                e.action, e.state);
            if (t == T - 1) {
                xi = r_here(t) + f_here + rw.mean_term(t, e.state, g_here);
            } else {
                const double next_action = actor.act(t + 1, e.next_state);
                const double g_next = critics.g_family.eval(
                    critics.g[static_cast<std::size_t>(t) + 1], e.next_state, next_action);
                double reward_gap = 0.0;
                for (int m = t + 1; m < T; ++m)
                    reward_gap += critics.r_family.eval(
                                      critics.r[static_cast<std::size_t>(t) + 1]
                                               [static_cast<std::size_t>(t) + 1]
                                               [static_cast<std::size_t>(m - t - 1)],
                                      e.next_state, next_action, e.next_state) -
                                  r_here(m);
                const double terminal_gap =
                    critics.f_family.eval(critics.f[static_cast<std::size_t>(t) + 1]
                                                   [static_cast<std::size_t>(t) + 1],
                                          e.next_state, next_action, e.next_state) -
                    f_here;
                const double mean_gap = rw.mean_term(t + 1, e.next_state, g_next) -
                                        rw.mean_term(t, e.state, g_here);
                xi = r_here(t) +
                     critics.q_family.eval(critics.q[static_cast<std::size_t>(t) + 1],
                                           e.next_state, next_action) -
                     (reward_gap + terminal_gap + mean_gap);
            }
        } else {
            // Reward/terminal critics folded away; only valid when the reward
            // functionals carry no evaluation-context dependence.
            if (t == T - 1) {
                xi = rw.intermediate(t, t, e.state, e.next_state, e.action) +
                     rw.terminal(t, e.state, e.next_state) + rw.mean_term(t, e.state, g_here);
            } else {
                const double next_action = actor.act(t + 1, e.next_state);
                const double g_next = critics.g_family.eval(
                    critics.g[static_cast<std::size_t>(t) + 1], e.next_state, next_action);
                const double mean_gap = rw.mean_term(t + 1, e.next_state, g_next) -
                                        rw.mean_term(t, e.state, g_here);
                xi = rw.intermediate(t, t, e.state, e.state, e.action) +
                     critics.q_family.eval(critics.q[static_cast<std::size_t>(t) + 1],
                                           e.next_state, next_action) -
                     mean_gap;
            }
        }
        targets.push_back(xi);
        contexts.push_back(0.0);
    }
    return relaxed_fit(critics.q_family, old_w, batch, targets, contexts, critic_rate);
}

AcResult ac_run(const TicProblem& problem, CriticWeights critics, ActorWeights actor,
                const AcHyper& hyper, std::vector<UpdateEvent>* call_log) {
    const int T = problem.horizon();
    if (static_cast<int>(actor.theta.size()) != T)
        throw std::invalid_argument("actor horizon mismatch");
    if (hyper.iterations < 0 || hyper.batch_episodes < 1)
        throw std::invalid_argument("bad iteration/batch configuration");

    RngStream root(hyper.seed);
    RngStream env = root.substream("env");
    RngStream expl = root.substream("exploration");
    RngStream replay_rng = root.substream("replay");
    RngStream start = root.substream("start");

    ReplayBuffer buffer(T);
    AcResult result{std::move(actor), std::move(critics), {}, 0};

    for (int l = 0; l < hyper.iterations; ++l) {
        buffer.begin_batch();
        for (int b = 0; b < hyper.batch_episodes; ++b) {
            const double x0 = problem.sample_initial(start);
            const Trajectory traj = rollout(
                problem,
                [&](int t, double x) { return result.actor.act(t, x); }, x0, env, &expl,
                hyper.exploration);
            buffer.append_episode(traj.state, traj.action);
        }

        const double rate = hyper.critic_rate_ema ? ema_rate(l) : hyper.critic_rate;
        for (int t = T - 1; t >= 0; --t) try {
            bool skipped = false;
            if (result.critics.use_adjustment_critics) {
                for (int tau = t; tau >= 0; --tau) {
                    for (int m = t; m < T; ++m) {
                        result.critics.r[static_cast<std::size_t>(t)][static_cast<std::size_t>(
                            tau)][static_cast<std::size_t>(m - t)] =
                            update_reward_critic(result.critics, rate, result.actor, problem, t,
                                                 tau, m, buffer, hyper.resample_kappa, replay_rng,
                                                 &skipped);
                        if (call_log)
                            call_log->push_back({UpdateEvent::Kind::reward, l, t, tau, m});
                    }
                    result.critics.f[static_cast<std::size_t>(t)][static_cast<std::size_t>(tau)] =
                        update_terminal_critic(result.critics, rate, result.actor, problem, t,
                                               tau, buffer, hyper.resample_kappa, replay_rng,
                                               &skipped);
                    if (call_log)
                        call_log->push_back({UpdateEvent::Kind::terminal, l, t, tau, -1});
                }
            }
            result.critics.g[static_cast<std::size_t>(t)] =
                update_mean_critic(result.critics, rate, result.actor, problem, t, buffer,
                                   hyper.resample_kappa, replay_rng, &skipped);
            if (call_log) call_log->push_back({UpdateEvent::Kind::mean, l, t, -1, -1});
            result.critics.q[static_cast<std::size_t>(t)] =
                update_action_value_critic(result.critics, rate, result.actor, problem, t, buffer,
                                           hyper.resample_kappa, replay_rng, &skipped);
            if (call_log) call_log->push_back({UpdateEvent::Kind::action_value, l, t, -1, -1});
            if (skipped) ++result.skipped_updates;

            // Deterministic gradient-ascent step on this epoch's parameters.
            const std::vector<Experience> batch =
                replay_sample(buffer, {t, std::nullopt, true}, hyper.resample_kappa, replay_rng);
            auto& theta = result.actor.theta[static_cast<std::size_t>(t)];
            std::vector<double> step(theta.size(), 0.0);
            for (const Experience& e : batch) {
                const double u_at = result.actor.family.eval(e.state, theta);
                const double dq = result.critics.q_family.du(
                    result.critics.q[static_cast<std::size_t>(t)], e.state, u_at);
                const std::vector<double> dtheta = result.actor.family.grad(e.state, theta);
                for (std::size_t i = 0; i < step.size(); ++i) step[i] += dtheta[i] * dq;
            }
            for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += hyper.actor_rate * step[i];
            if (call_log) call_log->push_back({UpdateEvent::Kind::actor, l, t, -1, -1});
        } catch (const std::exception& err) {
            throw std::runtime_error("iteration " + std::to_string(l) + ", epoch " +
                                     std::to_string(t) + ": " + err.what());
        }

        AcIterationSnapshot snap;
        snap.iteration = l;
        snap.q = result.critics.q;
        snap.g = result.critics.g;
        snap.theta = result.actor.theta;
        result.snapshots.push_back(std::move(snap));
    }
    return result;
}

void write_ac_logs(const AcResult& result, const std::string& prefix) {
    std::ofstream critics(prefix + "_critics.csv");
    std::ofstream actor(prefix + "_actor.csv");
    if (!critics || !actor) throw std::runtime_error("cannot open log files at " + prefix);
    critics << "iteration,t,kind,weights\n";
    actor << "iteration,t,theta\n";
    auto join = [](const std::vector<double>& v) {
        std::string out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) out += ';';
            out += format_double(v[i]);
        }
        return out;
    };
    for (const AcIterationSnapshot& snap : result.snapshots) {
        for (std::size_t t = 0; t < snap.q.size(); ++t) {
            critics << snap.iteration << ',' << t << ",q," << join(snap.q[t]) << '\n';
            critics << snap.iteration << ',' << t << ",g," << join(snap.g[t]) << '\n';
            actor << snap.iteration << ',' << t << ',' << join(snap.theta[t]) << '\n';
        }
    }
}

} // namespace sperl
