#pragma once

#include <vector>

namespace sperl {

struct RegressionProblem {
    std::vector<double> targets;                 // n
    std::vector<std::vector<double>> features;   // n rows, d columns
    bool fit_intercept = false;
};

struct OlsResult {
    // d weights, then the intercept last when fit_intercept is set
    std::vector<double> weights;
    std::vector<double> fitted;
    bool ridge_fallback = false;
};

// Minimizes the squared residual via the normal equations (feature
// dimensions stay tiny throughout this library). Rank-deficient systems fall
// back to a small ridge shift and are flagged.
OlsResult ols_fit(const RegressionProblem& problem);

struct AlsDiagnostics {
    int dropped_samples = 0;
    bool variance_floored = false;
    bool ridge_fallback = false;
};

struct AlsResult {
    std::vector<double> weights;  // same layout as ols_fit
    AlsDiagnostics diag;
};

inline constexpr double kAlsVarianceFloor = 1e-12;

// Heteroscedasticity-corrected least squares:
//   1. plain fit,
//   2. regress squared residuals on `residual_features` without intercept,
//   3. keep samples with positive fitted variance,
//   4. reweight targets and features by the reciprocal root variances,
//   5. refit without adding an intercept column.
// Samples with nonpositive fitted variance are dropped unless dropping would
// starve the final fit, in which case they are floored instead.
AlsResult als_fit(const RegressionProblem& problem,
                  const std::vector<std::vector<double>>& residual_features);

// Relaxation schedule w + alpha (w_new - w) with alpha = min(1, 2/(l+1)).
std::vector<double> ema_step(const std::vector<double>& old_weights,
                             const std::vector<double>& new_solution, long iteration);
double ema_rate(long iteration);

} // namespace sperl
