#include "sperl/bpi.hpp"

#include <cmath>
#include <stdexcept>

namespace sperl {

PolicyBasis policy_basis(const TicProblem& problem, const TabularPolicy& policy) {
    const ValueTables tables = evaluate_policy_tables(problem, policy);
    PolicyBasis basis;
    basis.slices.resize(static_cast<std::size_t>(problem.horizon()));
    for (int t = 0; t < problem.horizon(); ++t) {
        auto& slice = basis.slices[static_cast<std::size_t>(t)];
        slice.resize(static_cast<std::size_t>(problem.state_space(t).size()));
        for (int x = 0; x < problem.state_space(t).size(); ++x)
            slice[static_cast<std::size_t>(x)] = tables.action_value(t, x, policy.action(t, x));
    }
    return basis;
}

LexComparison lex_compare_detail(const PolicyBasis& a, const PolicyBasis& b, double tie_eps) {
    if (!same_shape(a, b)) throw std::invalid_argument("basis shapes differ");
    LexComparison out;
    for (int k = static_cast<int>(a.slices.size()) - 1; k >= 0; --k) {
        const auto& sa = a.slices[static_cast<std::size_t>(k)];
        const auto& sb = b.slices[static_cast<std::size_t>(k)];
        bool a_strict = false, b_strict = false;
        for (std::size_t j = 0; j < sa.size(); ++j) {
            if (sa[j] > sb[j] + tie_eps) a_strict = true;
            if (sb[j] > sa[j] + tie_eps) b_strict = true;
        }
        if (!a_strict && !b_strict) continue;  // slices equal within tolerance
        out.lex_index = k;
        if (a_strict && b_strict)
            out.verdict = LexVerdict::incomparable;
        else
            out.verdict = a_strict ? LexVerdict::greater : LexVerdict::less;
        return out;
    }
    out.verdict = LexVerdict::equal;
    return out;
}

ActionSpec ActionSpec::local_sweep(double radius, NeighborhoodFn neighborhood) {
    if (radius <= 0.0) throw std::invalid_argument("local sweep needs a positive radius");
    ActionSpec spec;
    spec.kind = Kind::local_sweep;
    spec.radius = radius;
    spec.neighborhood = std::move(neighborhood);
    return spec;
}

ActionSpec ActionSpec::custom(decltype(ActionSpec::propose) fn) {
    if (!fn) throw std::invalid_argument("custom action spec needs a proposer");
    ActionSpec spec;
    spec.kind = Kind::custom;
    spec.propose = std::move(fn);
    return spec;
}

int improve_action(const std::vector<double>& q_row, int incumbent,
                   const std::vector<int>& allowed, double tie_eps) {
    double best = q_row.at(static_cast<std::size_t>(incumbent));
    for (int u : allowed) best = std::max(best, q_row.at(static_cast<std::size_t>(u)));
    if (q_row[static_cast<std::size_t>(incumbent)] >= best - tie_eps) return incumbent;
    for (int u : allowed)
        if (q_row[static_cast<std::size_t>(u)] >= best - tie_eps) return u;
    return incumbent;  // unreachable: some allowed entry attains the max
}

namespace {

std::vector<int> actions_within_radius(const TicProblem& problem, int t, int u_center,
                                       double radius) {
    const Space& us = problem.action_space(t);
    const double center = us.value(u_center);
    std::vector<int> out;
    for (int u = 0; u < us.size(); ++u)
        if (std::abs(us.value(u) - center) < radius) out.push_back(u);
    return out;
}

std::vector<int> allowed_actions(const TicProblem& problem, const ActionSpec& spec, int t, int x,
                                 int incumbent) {
    if (spec.kind == ActionSpec::Kind::full_sweep || spec.kind == ActionSpec::Kind::custom) {
        std::vector<int> all(static_cast<std::size_t>(problem.action_space(t).size()));
        for (std::size_t u = 0; u < all.size(); ++u) all[u] = static_cast<int>(u);
        return all;
    }
    std::vector<int> set = spec.neighborhood ? spec.neighborhood(t, x, incumbent)
                                             : actions_within_radius(problem, t, incumbent,
                                                                     spec.radius);
    if (set.empty()) throw std::invalid_argument("empty action neighborhood");
    return set;
}

} // namespace

BpiResult bpi_run(const TicProblem& problem, const TabularPolicy& initial, const ActionSpec& spec,
                  int max_iters, double tie_eps) {
    if (!problem.finite())
        throw std::logic_error("policy iteration requires finite spaces and an explicit kernel");
    if (initial.horizon() != problem.horizon())
        throw std::invalid_argument("initial policy horizon mismatch");
    if (max_iters < 1) throw std::invalid_argument("need at least one iteration");

    const int T = problem.horizon();
    BpiResult result;
    result.trace.initial.policy = initial;
    result.trace.initial.basis = policy_basis(problem, initial);

    TabularPolicy pi_new = initial;
    PolicyBasis prev_basis = result.trace.initial.basis;

    for (int iter = 0; iter < max_iters; ++iter) {
        const TabularPolicy pi_old = pi_new;
        ValueTables tables(problem);
        BpiIterationRecord record;
        record.improved.resize(static_cast<std::size_t>(T));
        record.basis.slices.resize(static_cast<std::size_t>(T));

        for (int k = T - 1; k >= 0; --k) {
            // Evaluation at this epoch only reads the policy at epochs > k,
            // which the sweep has already updated.
            fill_adjustment_slice(tables, problem, pi_new, k);
            fill_action_value_slice(tables, problem, pi_new, k);

            const int nx = problem.state_space(k).size();
            record.improved[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(nx),
                                                                false);
            record.basis.slices[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(nx));
            for (int x = 0; x < nx; ++x) {
                const int incumbent = pi_old.action(k, x);
                std::vector<double> q_row(static_cast<std::size_t>(problem.action_space(k).size()));
                for (std::size_t u = 0; u < q_row.size(); ++u)
                    q_row[u] = tables.action_value(k, x, static_cast<int>(u));

                int chosen = incumbent;
                if (spec.kind == ActionSpec::Kind::custom) {
                    const auto proposal = spec.propose(k, x, incumbent, q_row);
                    // Keep the incumbent unless the proposal is strictly better.
                    if (proposal &&
                        q_row.at(static_cast<std::size_t>(*proposal)) >
                            q_row.at(static_cast<std::size_t>(incumbent)) + tie_eps)
                        chosen = *proposal;
                } else {
                    chosen = improve_action(q_row, incumbent,
                                            allowed_actions(problem, spec, k, x, incumbent),
                                            tie_eps);
                }
                pi_new.set_action(k, x, chosen);
                record.improved[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)] =
                    (chosen != incumbent);
                record.basis.slices[static_cast<std::size_t>(k)][static_cast<std::size_t>(x)] =
                    q_row[static_cast<std::size_t>(chosen)];
            }
        }

        record.policy = pi_new;
        const LexComparison cmp = lex_compare_detail(record.basis, prev_basis, tie_eps);
        record.vs_previous = cmp.verdict;
        record.lex_index = cmp.lex_index;
        prev_basis = record.basis;
        result.trace.sweeps.push_back(std::move(record));

        if (pi_new == pi_old) {
            result.trace.converged = true;
            break;
        }
    }

    result.policy = pi_new;
    return result;
}

SpeCheckResult spe_check(const TicProblem& problem, const TabularPolicy& policy, double tie_eps) {
    const ValueTables tables = evaluate_policy_tables(problem, policy);
    SpeCheckResult out;
    out.ok = true;
    for (int t = 0; t < problem.horizon(); ++t)
        for (int x = 0; x < problem.state_space(t).size(); ++x) {
            const double on_policy = tables.action_value(t, x, policy.action(t, x));
            for (int u = 0; u < problem.action_space(t).size(); ++u) {
                const double gap = tables.action_value(t, x, u) - on_policy;
                if (gap > tie_eps) {
                    out.ok = false;
                    out.witness = SpeWitness{t, x, u, gap};
                    return out;
                }
            }
        }
    return out;
}

SpeCheckResult local_spe_check(const TicProblem& problem, const TabularPolicy& policy,
                               double radius, NeighborhoodFn neighborhood, double tie_eps) {
    if (radius <= 0.0) throw std::invalid_argument("local check needs a positive radius");
    const ValueTables tables = evaluate_policy_tables(problem, policy);
    SpeCheckResult out;
    out.ok = true;
    for (int t = 0; t < problem.horizon(); ++t)
        for (int x = 0; x < problem.state_space(t).size(); ++x) {
            const int center = policy.action(t, x);
            const std::vector<int> hood = neighborhood
                                              ? neighborhood(t, x, center)
                                              : actions_within_radius(problem, t, center, radius);
            if (hood.empty()) throw std::invalid_argument("empty action neighborhood");
            const double on_policy = tables.action_value(t, x, center);
            for (int u : hood) {
                const double gap = tables.action_value(t, x, u) - on_policy;
                if (gap > tie_eps) {
                    out.ok = false;
                    out.witness = SpeWitness{t, x, u, gap};
                    return out;
                }
            }
        }
    return out;
}

} // namespace sperl
