#include "sperl/mv_app.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace sperl;

TEST_CASE("a zero allocation rolls wealth over at the riskless rate") {
    const MarketParams params = mv_market_preset("paper", 0.20);
    RngStream rng(1);
    for (int i = 0; i < 50; ++i)
        CHECK(market_step(params, 1.3, 0.0, rng) ==
              doctest::Approx((1.0 + params.period_rate()) * 1.3).epsilon(1e-15));
}

TEST_CASE("simulated wealth moments match the dynamics") {
    const MarketParams params = mv_market_preset("paper", 0.20);
    RngStream rng(7);
    const double x = 1.1, u = 1.4;
    const int n = 1000000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double next = market_step(params, x, u, rng);
        sum += next;
        sum_sq += next * next;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    const double expected_mean =
        (1.0 + params.period_rate()) * x + u * (params.mean_return() - params.period_rate());
    const double expected_var = u * u * params.return_variance();
    const double mean_se = std::sqrt(expected_var / n);
    const double var_se = expected_var * std::sqrt(2.0 / n);
    CHECK(std::abs(mean - expected_mean) < 3.0 * mean_se);
    CHECK(std::abs(var - expected_var) < 3.0 * var_se);
}

TEST_CASE("the unit-state transform matches the published arithmetic") {
    const UnitExperience e = transform_to_unit_state(0.0002, 1.2, 0.8, 1.25);
    CHECK(e.action == 0.8);
    CHECK(e.next_state == doctest::Approx(1.25 - 1.0002 * 0.2).epsilon(1e-15));
    CHECK(e.next_state == doctest::Approx(1.04996).epsilon(1e-12));

    // identity on the slice
    const UnitExperience id = transform_to_unit_state(0.0002, 1.0, 0.8, 1.03);
    CHECK(id.next_state == 1.03);

    // consistency with the dynamics for the same realized shock
    const double r = 0.0002, x = 1.4, u = 2.0, y = 0.007;
    const double xn = (1.0 + r) * x + u * (y - r);
    const UnitExperience tr = transform_to_unit_state(r, x, u, xn);
    CHECK(tr.next_state == doctest::Approx((1.0 + r) * 1.0 + u * (y - r)).epsilon(1e-13));
}

TEST_CASE("noiseless boundary fits recover the market parameters exactly") {
    const MarketParams params = mv_market_preset("paper", 0.20);
    const double r = params.period_rate();
    std::vector<UnitExperience> batch;
    RngStream gen(3);
    for (int i = 0; i < 30; ++i) {
        const double u = gen.uniform(-2.0, 3.0);
        // exact conditional-mean outcomes; the quadratic fit then sees the
        // exact conditional second moment through its own targets
        batch.push_back(UnitExperience{u, (1.0 + r) + u * (params.mean_return() - r)});
    }
    MvCriticWeights weights;
    weights.q.assign(100, CriticQ{});
    weights.g.assign(100, CriticG{});
    const BoundaryFitReport report =
        boundary_critic_fit(batch, weights, 0, params.risk_aversion, r);
    CHECK_FALSE(report.g_skipped);
    CHECK(weights.g[99].w_u == doctest::Approx(params.mean_return() - r).epsilon(1e-8));
    CHECK(weights.g[99].w_u == doctest::Approx(0.0018).epsilon(1e-8));
    CHECK(weights.g[99].w_x == 1.0 + r);
    CHECK(weights.g[99].w_0 == 0.0);

    // with noiseless data the action-value slope matches the mean slope and
    // the curvature collapses to zero (no realized variance in the batch)
    CHECK(report.slope_gap < 1e-8);

    // curvature identification needs realized spread: feed exact targets
    // built from the true second moment instead
    std::vector<UnitExperience> spread;
    for (int i = 0; i < 40; ++i) {
        const double u = gen.uniform(-2.0, 3.0);
        const double sd = std::abs(u) * std::sqrt(params.return_variance());
        spread.push_back(UnitExperience{u, (1.0 + r) + u * (params.mean_return() - r) + sd});
        spread.push_back(UnitExperience{u, (1.0 + r) + u * (params.mean_return() - r) - sd});
    }
    MvCriticWeights w2;
    w2.q.assign(100, CriticQ{});
    w2.g.assign(100, CriticG{});
    boundary_critic_fit(spread, w2, 0, params.risk_aversion, r);
    CHECK(w2.q[99].w_uu ==
          doctest::Approx(-0.5 * params.risk_aversion * params.return_variance()).epsilon(1e-6));
    CHECK(w2.q[99].w_uu == doctest::Approx(-0.00054).epsilon(1e-6));
}

TEST_CASE("an empty batch skips the boundary fit") {
    MvCriticWeights weights;
    weights.q.assign(3, CriticQ{});
    weights.g.assign(3, CriticG{});
    const BoundaryFitReport report = boundary_critic_fit({}, weights, 4, 1.2, 0.0002);
    CHECK(report.g_skipped);
    CHECK(report.q_skipped);
}

TEST_CASE("the coefficient recursion unrolls to the closed forms") {
    const MarketParams params = mv_market_preset("paper", 0.20);
    const double r = params.period_rate();
    const int T = params.periods;
    const MvGroundTruth truth = ground_truth(params);
    for (int t = 0; t < T; ++t) {
        CHECK(truth.weights.g[static_cast<std::size_t>(t)].w_x ==
              doctest::Approx(std::pow(1.0 + r, T - t)).epsilon(1e-12));
        CHECK(truth.weights.q[static_cast<std::size_t>(t)].w_uu ==
              doctest::Approx(std::pow(1.0 + r, 2 * (T - 1 - t)) *
                              (-0.5 * params.risk_aversion * params.return_variance()))
                  .epsilon(1e-12));
    }
    MvCriticWeights copy = truth.weights;
    for (int t = T - 2; t >= 0; --t) parametric_recursion(copy, t);
    for (int t = 0; t < T; ++t) {
        CHECK(copy.q[static_cast<std::size_t>(t)].w_u ==
              doctest::Approx(truth.weights.q[static_cast<std::size_t>(t)].w_u).epsilon(1e-14));
        CHECK(copy.q[static_cast<std::size_t>(t)].w_uu ==
              doctest::Approx(truth.weights.q[static_cast<std::size_t>(t)].w_uu).epsilon(1e-14));
        CHECK(copy.g[static_cast<std::size_t>(t)].w_x ==
              doctest::Approx(truth.weights.g[static_cast<std::size_t>(t)].w_x).epsilon(1e-14));
    }
    CHECK_THROWS_AS(parametric_recursion(copy, T - 1), std::out_of_range);
}

TEST_CASE("curvature stays negative along the recursion") {
    const MarketParams params = mv_market_preset("paper", -0.20);
    const MvGroundTruth truth = ground_truth(params);
    for (int t = 0; t < params.periods; ++t)
        CHECK(truth.weights.q[static_cast<std::size_t>(t)].w_uu < 0.0);
}

TEST_CASE("the actor step is stationary at the vertex and contracts toward it") {
    const CriticQ critic{-0.00054, 0.0018, 1.0002, 0.0};
    const double vertex = -critic.w_u / (2.0 * critic.w_uu);
    CHECK(vertex == doctest::Approx(0.0018 / 0.00108).epsilon(1e-12));
    CHECK(vertex == doctest::Approx(1.0 + 2.0 / 3.0).epsilon(1e-10));
    CHECK(actor_step(critic, vertex, 2.0) == doctest::Approx(vertex).epsilon(1e-12));

    double theta = 0.0;
    double prev_gap = vertex;
    for (int l = 0; l < 4000; ++l) {
        theta = actor_step(critic, theta, 2.0);
        const double gap = std::abs(theta - vertex);
        CHECK(gap <= prev_gap);
        prev_gap = gap;
    }
    CHECK(prev_gap < 1e-3);
}

TEST_CASE("the derived equilibrium action follows the rate scaling") {
    const MarketParams params = mv_market_preset("paper", 0.20);
    const MvGroundTruth truth = ground_truth(params);
    const double r = params.period_rate();
    CHECK(truth.equilibrium_action.back() == doctest::Approx(1.6667).epsilon(1e-3));
    for (int t = 0; t + 1 < params.periods; ++t)
        CHECK(truth.equilibrium_action[static_cast<std::size_t>(t)] /
                  truth.equilibrium_action[static_cast<std::size_t>(t) + 1] ==
              doctest::Approx(1.0 / (1.0 + r)).epsilon(1e-12));
    // the published closed form is reported alongside, not asserted equal
    CHECK(truth.printed_closed_form.size() == truth.equilibrium_action.size());

    MarketParams extreme = params;
    extreme.risk_aversion = 1e9;
    const MvGroundTruth cautious = ground_truth(extreme);
    for (double u : cautious.equilibrium_action) CHECK(std::abs(u) < 1e-5);
}

TEST_CASE("pinned-coefficient critics restate off-slice evaluations exactly") {
    RngStream rng(9);
    for (int i = 0; i < 50; ++i) {
        const CriticQ q{rng.uniform(-1, 0), rng.uniform(-1, 1), rng.uniform(0.9, 1.1),
                        rng.uniform(-0.1, 0.1)};
        const double x = rng.uniform(0.5, 1.5), u = rng.uniform(-2, 2);
        CHECK(q.eval(1.0, u) == doctest::Approx(q.eval(x, u) - q.w_x * (x - 1.0)).epsilon(1e-12));
    }
}

TEST_CASE("a zero actor earns exactly the riskless growth") {
    MarketParams params = mv_market_preset("desk", 0.20);
    MvActor actor;
    actor.allocation.assign(static_cast<std::size_t>(params.periods), 0.0);
    const EvalStats stats = evaluate_policy(params, actor, 50, 5);
    CHECK(stats.mean ==
          doctest::Approx(std::pow(1.0 + params.period_rate(), params.periods)).epsilon(1e-12));
    CHECK(stats.stdev < 1e-12);
}

TEST_CASE("evaluation is deterministic given the seed") {
    MarketParams params = mv_market_preset("desk", 0.20);
    MvActor actor;
    actor.allocation.assign(static_cast<std::size_t>(params.periods), 1.2);
    const EvalStats a = evaluate_policy(params, actor, 50, 77);
    const EvalStats b = evaluate_policy(params, actor, 50, 77);
    CHECK(a.mean == b.mean);
    CHECK(a.stdev == b.stdev);
}

TEST_CASE("training runs are reproducible and identify the boundary critics") {
    MarketParams params = mv_market_preset("desk", 0.20);
    MvHyper hyper = mv_hyper_preset("desk");
    const MvTrainResult a = mv_train(params, hyper, 42);
    const MvTrainResult b = mv_train(params, hyper, 42);
    REQUIRE(a.critic_curve.size() == b.critic_curve.size());
    for (std::size_t i = 0; i < a.critic_curve.size(); i += 37) {
        CHECK(a.critic_curve[i].g_w_u == b.critic_curve[i].g_w_u);
        CHECK(a.critic_curve[i].q_w_uu == b.critic_curve[i].q_w_uu);
    }
    REQUIRE(!a.wealth_curve.empty());
    for (std::size_t i = 0; i < a.wealth_curve.size(); ++i)
        CHECK(a.wealth_curve[i].mean == b.wealth_curve[i].mean);

    const MvGroundTruth truth = ground_truth(params);
    const std::size_t last = static_cast<std::size_t>(params.periods) - 1;
    CHECK(std::abs(a.critics.g[last].w_u / truth.weights.g[last].w_u - 1.0) < 0.25);
    CHECK(std::abs(a.critics.q[last].w_uu / truth.weights.q[last].w_uu - 1.0) < 0.25);
    CHECK(a.critics.q[last].w_uu < 0.0);
}

TEST_CASE("the model-free tail stays near the recursion-propagated actor") {
    // Per-epoch regressions instead of the coefficient recursion: noisier by
    // construction, so the bar is a neighborhood of the equilibrium.
    MarketParams params = mv_market_preset("desk", 0.20);
    params.periods = 4;
    params.dt = 0.25;
    MvHyper hyper = mv_hyper_preset("desk");
    hyper.iterations = 2000;
    hyper.batch_episodes = 20;
    hyper.actor_rate = 0.5;
    hyper.model_free_tail = true;
    const MvTrainResult result = mv_train(params, hyper, 21);
    const MvGroundTruth truth = ground_truth(params);
    for (int t = 0; t < params.periods; ++t) {
        const double learned = result.actor.allocation[static_cast<std::size_t>(t)];
        const double target = truth.equilibrium_action[static_cast<std::size_t>(t)];
        CHECK(std::abs(learned - target) / std::abs(target) < 0.2);
    }
}
