#pragma once

#include "sperl/linreg.hpp"
#include "sperl/replay.hpp"
#include "sperl/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sperl {

// Single risky + riskless asset market over `periods` steps of length `dt`
// years. Wealth follows x' = (1+r) x + u (Y - r) with the per-period excess
// return Y drawn Gaussian.
struct MarketParams {
    double mu = 0.20;         // annualized mean return
    double sigma = 0.30;      // annualized volatility
    double rate_ann = 0.02;   // annualized risk-free rate
    double dt = 0.01;         // years per period
    int periods = 100;
    double risk_aversion = 1.2;
    double initial_wealth = 1.0;

    double period_rate() const { return rate_ann * dt; }
    double mean_return() const { return mu * dt; }
    double return_variance() const { return sigma * sigma * dt; }
    void validate() const;
};

double market_step(const MarketParams& params, double wealth, double allocation, RngStream& rng);

// Quadratic action-value ansatz w_uu u^2 + w_u u + w_x x + w_0 and the linear
// terminal-mean ansatz w_u u + w_x x + w_0, one of each per epoch.
struct CriticQ {
    double w_uu = 0.0, w_u = 0.0, w_x = 0.0, w_0 = 0.0;
    double eval(double x, double u) const { return w_uu * u * u + w_u * u + w_x * x + w_0; }
    double du(double u) const { return 2.0 * w_uu * u + w_u; }
};

struct CriticG {
    double w_u = 0.0, w_x = 0.0, w_0 = 0.0;
    double eval(double x, double u) const { return w_u * u + w_x * x + w_0; }
};

struct MvCriticWeights {
    std::vector<CriticQ> q;  // per epoch
    std::vector<CriticG> g;
};

// State-invariant deterministic policy: one risky allocation per epoch.
struct MvActor {
    std::vector<double> allocation;
    double act(int t, double /*wealth*/) const {
        return allocation[static_cast<std::size_t>(t)];
    }
};

// Maps an experience onto the unit-wealth slice via the linearity of the
// wealth dynamics; the wealth component of the result is identically 1.
struct UnitExperience {
    double action = 0.0;
    double next_state = 0.0;
};
UnitExperience transform_to_unit_state(double period_rate, double x, double u, double x_next);

struct BoundaryFitReport {
    AlsDiagnostics g_diag, q_diag;
    bool g_skipped = false;  // fit failure: relaxation step skipped this iteration
    bool q_skipped = false;
    double slope_gap = 0.0;  // |w_u(Q) - w_u(g)|: both estimate the same quantity
};

// Fits the last-epoch critics on unit-slice experiences. Only the
// coefficients the market parameters do not pin are regressed: the wealth
// coefficient is (1+r) and the offset 0 by construction, so the fit solves
// for the action coefficients with the pinned part moved into the target.
BoundaryFitReport boundary_critic_fit(const std::vector<UnitExperience>& batch,
                                      MvCriticWeights& weights, long iteration,
                                      double risk_aversion, double period_rate);

// Closed-form propagation of the epoch-(t+1) and boundary coefficients down
// to epoch t; applies for t <= periods-2 only.
void parametric_recursion(MvCriticWeights& weights, int t);

// One gradient-ascent step on the epoch-t allocation under the quadratic
// critic; returns the new allocation.
double actor_step(const CriticQ& critic, double allocation, double actor_rate);

struct MvGroundTruth {
    MvCriticWeights weights;
    std::vector<double> equilibrium_action;  // vertex of the propagated quadratic
    std::vector<double> printed_closed_form; // the published closed form, for comparison
};
MvGroundTruth ground_truth(const MarketParams& params);

struct MvHyper {
    int iterations = 5000;        // L
    int batch_episodes = 5;       // B
    double exploration_radius = 1.5;
    int resample_kappa = 1;
    double actor_rate = 2.0;
    bool model_free_tail = false; // regress every epoch instead of the recursion
    int eval_window = 50;         // aggregation window for the wealth curve
    std::vector<int> log_epochs;  // epochs logged into the critic/actor curves
};

struct MvWealthRow { int window = 0; double mean = 0.0, stdev = 0.0; };
struct MvCriticRow {
    int iteration = 0, t = 0;
    double g_w_u = 0.0, q_w_u = 0.0, q_w_uu = 0.0;
    double true_g_w_u = 0.0, true_q_w_u = 0.0, true_q_w_uu = 0.0;
};
struct MvActorRow {
    int iteration = 0, t = 0;
    double allocation = 0.0, true_action = 0.0;
};

struct MvTrainResult {
    MvActor actor;
    MvCriticWeights critics;
    std::vector<MvWealthRow> wealth_curve;
    std::vector<MvCriticRow> critic_curve;
    std::vector<MvActorRow> actor_curve;
    std::vector<double> terminal_wealth;  // one evaluation episode per iteration
    int fit_skips = 0;
};

MvTrainResult mv_train(const MarketParams& params, const MvHyper& hyper, std::uint64_t seed);

// Exploration-free evaluation episodes; returns sample mean and stdev of
// terminal wealth.
struct EvalStats { double mean = 0.0, stdev = 0.0; };
EvalStats evaluate_policy(const MarketParams& params, const MvActor& actor, int episodes,
                          std::uint64_t seed);

// Desk-scale and published-scale experiment presets.
MarketParams mv_market_preset(const std::string& name, double mu);
MvHyper mv_hyper_preset(const std::string& name);

} // namespace sperl
