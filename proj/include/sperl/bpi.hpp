#pragma once

#include "sperl/exact_dp.hpp"
#include "sperl/problem.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace sperl {

// Floating-point tolerance under which two action values count as tied.
// Tie-breaking and termination both hinge on it.
inline constexpr double kDefaultTieEps = 1e-9;

// Per-epoch vectors of on-policy action values in the fixed state order.
struct PolicyBasis {
    std::vector<std::vector<double>> slices;  // [epoch][state]

    std::size_t total_length() const {
        std::size_t n = 0;
        for (const auto& s : slices) n += s.size();
        return n;
    }
    friend bool same_shape(const PolicyBasis& a, const PolicyBasis& b) {
        if (a.slices.size() != b.slices.size()) return false;
        for (std::size_t k = 0; k < a.slices.size(); ++k)
            if (a.slices[k].size() != b.slices[k].size()) return false;
        return true;
    }
};

PolicyBasis policy_basis(const TicProblem& problem, const TabularPolicy& policy);

enum class LexVerdict { greater, less, equal, incomparable };

struct LexComparison {
    LexVerdict verdict = LexVerdict::equal;
    int lex_index = -1;  // largest epoch whose slices differ; -1 when equal
};

// Compares from the largest differing epoch, element-wise within that slice.
LexComparison lex_compare_detail(const PolicyBasis& a, const PolicyBasis& b,
                                 double tie_eps = kDefaultTieEps);
inline LexVerdict lex_compare(const PolicyBasis& a, const PolicyBasis& b,
                              double tie_eps = kDefaultTieEps) {
    return lex_compare_detail(a, b, tie_eps).verdict;
}

// Enumerates candidate action indices around a center action; used by the
// local sweep and the local SPE check.
using NeighborhoodFn = std::function<std::vector<int>(int t, int x, int u_center)>;

// How the improvement step proposes a new action at each (t, x). Whatever the
// proposal, the incumbent is kept unless the candidate is strictly better
// than it by more than the tie tolerance.
struct ActionSpec {
    enum class Kind { full_sweep, local_sweep, custom };

    Kind kind = Kind::full_sweep;
    double radius = 0.0;           // local sweep
    NeighborhoodFn neighborhood;   // optional override for the local sweep
    // custom: return a candidate index or nullopt to keep the incumbent
    std::function<std::optional<int>(int t, int x, int incumbent,
                                     const std::vector<double>& q_row)>
        propose;

    static ActionSpec full_sweep() { return {}; }
    static ActionSpec local_sweep(double radius, NeighborhoodFn neighborhood = nullptr);
    static ActionSpec custom(decltype(propose) fn);
};

struct BpiIterationRecord {
    TabularPolicy policy;
    PolicyBasis basis;
    LexVerdict vs_previous = LexVerdict::equal;
    int lex_index = -1;
    std::vector<std::vector<bool>> improved;  // [t][x]
};

struct BpiTrace {
    BpiIterationRecord initial;               // snapshot before the first sweep
    std::vector<BpiIterationRecord> sweeps;   // one record per executed sweep
    bool converged = false;

    int sweep_count() const { return static_cast<int>(sweeps.size()); }
};

struct BpiResult {
    TabularPolicy policy;
    BpiTrace trace;
};

// Interleaved backward evaluation/improvement until the policy is stable or
// the iteration cap is hit (flagged via trace.converged, never silent).
BpiResult bpi_run(const TicProblem& problem, const TabularPolicy& initial,
                  const ActionSpec& spec, int max_iters, double tie_eps = kDefaultTieEps);

struct SpeWitness {
    int t = 0, x = 0, u = 0;
    double gap = 0.0;  // amount by which the deviation beats the policy action
};

struct SpeCheckResult {
    bool ok = false;
    std::optional<SpeWitness> witness;
};

// Verifies the equilibrium inequality at every (t, x, u) via exact evaluation.
SpeCheckResult spe_check(const TicProblem& problem, const TabularPolicy& policy,
                         double tie_eps = kDefaultTieEps);

// Same check restricted to actions within `radius` of the policy action.
SpeCheckResult local_spe_check(const TicProblem& problem, const TabularPolicy& policy,
                               double radius, NeighborhoodFn neighborhood = nullptr,
                               double tie_eps = kDefaultTieEps);

// Shared improvement primitive: the candidate (within `allowed`, which must
// contain the incumbent) that wins the argmax under the consistent tie-break;
// returns the incumbent when nothing is strictly better.
int improve_action(const std::vector<double>& q_row, int incumbent,
                   const std::vector<int>& allowed, double tie_eps);

} // namespace sperl
