#include "sperl/linreg.hpp"

#include <cmath>
#include <stdexcept>

namespace sperl {

namespace {

void validate(const RegressionProblem& p) {
    if (p.targets.size() != p.features.size())
        throw std::invalid_argument("target and feature row counts differ");
    if (p.features.empty()) throw std::invalid_argument("empty regression problem");
    const std::size_t d = p.features.front().size();
    for (const auto& row : p.features)
        if (row.size() != d) throw std::invalid_argument("ragged feature rows");
    for (double v : p.targets)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite regression target");
    for (const auto& row : p.features)
        for (double v : row)
            if (!std::isfinite(v)) throw std::invalid_argument("non-finite regression feature");
}

// Solves the symmetric system G w = b in place via Gaussian elimination with
// partial pivoting. Returns false when a pivot collapses.
bool solve_dense(std::vector<std::vector<double>> G, std::vector<double> b,
                 std::vector<double>& out) {
    const std::size_t d = b.size();
    double scale = 0.0;
    for (std::size_t i = 0; i < d; ++i) scale = std::max(scale, std::abs(G[i][i]));
    const double tiny = (scale > 0.0 ? scale : 1.0) * 1e-13;

    std::vector<std::size_t> perm(d);
    for (std::size_t i = 0; i < d; ++i) perm[i] = i;
    for (std::size_t col = 0; col < d; ++col) {
        std::size_t pivot = col;
        for (std::size_t rowi = col + 1; rowi < d; ++rowi)
            if (std::abs(G[rowi][col]) > std::abs(G[pivot][col])) pivot = rowi;
        if (std::abs(G[pivot][col]) < tiny) return false;
        std::swap(G[col], G[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t rowi = col + 1; rowi < d; ++rowi) {
            const double factor = G[rowi][col] / G[col][col];
            if (factor == 0.0) continue;
            for (std::size_t j = col; j < d; ++j) G[rowi][j] -= factor * G[col][j];
            b[rowi] -= factor * b[col];
        }
    }
    out.assign(d, 0.0);
    for (std::size_t i = d; i-- > 0;) {
        double acc = b[i];
        for (std::size_t j = i + 1; j < d; ++j) acc -= G[i][j] * out[j];
        out[i] = acc / G[i][i];
    }
    return true;
}

struct NormalEq {
    std::vector<std::vector<double>> gram;
    std::vector<double> moment;
};

NormalEq build_normal_equations(const std::vector<std::vector<double>>& rows,
                                const std::vector<double>& targets) {
    const std::size_t d = rows.front().size();
    NormalEq eq{std::vector<std::vector<double>>(d, std::vector<double>(d, 0.0)),
                std::vector<double>(d, 0.0)};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t a = 0; a < d; ++a) {
            eq.moment[a] += rows[i][a] * targets[i];
            for (std::size_t b = 0; b < d; ++b) eq.gram[a][b] += rows[i][a] * rows[i][b];
        }
    }
    return eq;
}

// Solves the normal equations, applying the flagged ridge fallback when the
// plain system is rank-deficient.
std::vector<double> solve_least_squares(const std::vector<std::vector<double>>& rows,
                                        const std::vector<double>& targets,
                                        bool& ridge_fallback) {
    const std::size_t d = rows.front().size();
    if (rows.size() < d)
        throw std::invalid_argument("need at least as many samples as feature dimensions");
    NormalEq eq = build_normal_equations(rows, targets);
    std::vector<double> w;
    if (solve_dense(eq.gram, eq.moment, w)) return w;

    ridge_fallback = true;
    double trace = 0.0;
    for (std::size_t i = 0; i < d; ++i) trace += eq.gram[i][i];
    const double ridge = 1e-8 * (trace > 0.0 ? trace : 1.0) / static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) eq.gram[i][i] += ridge;
    if (!solve_dense(eq.gram, eq.moment, w))
        throw std::runtime_error("least-squares system is singular even with ridge shift");
    return w;
}

std::vector<std::vector<double>> augment_intercept(const std::vector<std::vector<double>>& rows) {
    std::vector<std::vector<double>> out = rows;
    for (auto& row : out) row.push_back(1.0);
    return out;
}

} // namespace

OlsResult ols_fit(const RegressionProblem& problem) {
    validate(problem);
    const std::vector<std::vector<double>> rows =
        problem.fit_intercept ? augment_intercept(problem.features) : problem.features;
    OlsResult out;
    out.weights = solve_least_squares(rows, problem.targets, out.ridge_fallback);
    out.fitted.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < rows[i].size(); ++j) acc += rows[i][j] * out.weights[j];
        out.fitted[i] = acc;
    }
    return out;
}

AlsResult als_fit(const RegressionProblem& problem,
                  const std::vector<std::vector<double>>& residual_features) {
    validate(problem);
    if (residual_features.size() != problem.targets.size())
        throw std::invalid_argument("residual feature rows must align with samples");

    if (!residual_features.empty()) {
        const std::size_t rd = residual_features.front().size();
        if (rd == 0) throw std::invalid_argument("residual features need at least one column");
        for (const auto& row : residual_features)
            if (row.size() != rd) throw std::invalid_argument("ragged residual feature rows");
    }

    const OlsResult base = ols_fit(problem);
    const std::size_t n = problem.targets.size();

    std::vector<double> squared_residuals(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double e = problem.targets[i] - base.fitted[i];
        squared_residuals[i] = e * e;
    }

    AlsResult out;
    out.diag.ridge_fallback = base.ridge_fallback;

    bool variance_ridge = false;
    const std::vector<double> shape =
        solve_least_squares(residual_features, squared_residuals, variance_ridge);
    out.diag.ridge_fallback = out.diag.ridge_fallback || variance_ridge;

    std::vector<double> variances(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = 0.0;
        for (std::size_t j = 0; j < residual_features[i].size(); ++j)
            v += residual_features[i][j] * shape[j];
        variances[i] = v;
    }

    const std::vector<std::vector<double>> rows =
        problem.fit_intercept ? augment_intercept(problem.features) : problem.features;
    const std::size_t d = rows.front().size();

    std::vector<std::size_t> kept;
    kept.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (variances[i] > 0.0) kept.push_back(i);
    if (kept.size() < d) {
        // Dropping would starve the final fit: floor instead of dropping.
        kept.resize(n);
        for (std::size_t i = 0; i < n; ++i) kept[i] = i;
        out.diag.variance_floored = true;
        out.diag.dropped_samples = 0;
    } else {
        out.diag.dropped_samples = static_cast<int>(n - kept.size());
    }
    if (kept.empty()) throw std::runtime_error("every sample was dropped by the variance filter");

    std::vector<std::vector<double>> wrows;
    std::vector<double> wtargets;
    wrows.reserve(kept.size());
    wtargets.reserve(kept.size());
    for (std::size_t i : kept) {
        double v = variances[i];
        if (v < kAlsVarianceFloor) {
            v = kAlsVarianceFloor;
            out.diag.variance_floored = true;
        }
        const double w = 1.0 / std::sqrt(v);
        std::vector<double> row = rows[i];
        for (double& c : row) c *= w;
        wrows.push_back(std::move(row));
        wtargets.push_back(problem.targets[i] * w);
    }

    bool final_ridge = false;
    out.weights = solve_least_squares(wrows, wtargets, final_ridge);
    out.diag.ridge_fallback = out.diag.ridge_fallback || final_ridge;
    return out;
}

double ema_rate(long iteration) {
    if (iteration < 0) throw std::invalid_argument("iteration index must be >= 0");
    const double rate = 2.0 / static_cast<double>(iteration + 1);
    return rate > 1.0 ? 1.0 : rate;
}

std::vector<double> ema_step(const std::vector<double>& old_weights,
                             const std::vector<double>& new_solution, long iteration) {
    if (old_weights.size() != new_solution.size())
        throw std::invalid_argument("weight vector sizes differ");
    const double alpha = ema_rate(iteration);
    std::vector<double> out(old_weights.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = old_weights[i] + alpha * (new_solution[i] - old_weights[i]);
    return out;
}

} // namespace sperl
