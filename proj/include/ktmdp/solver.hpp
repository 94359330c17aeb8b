#pragma once

#include "ktmdp/kernel.hpp"
#include "ktmdp/mdp_core.hpp"

#include <Eigen/Core>

#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ktmdp {

/// Raised when the policy-evaluation linear system cannot be solved.
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SolveOptions {
    int max_iterations = 100;
    std::optional<Policy> initial_policy;  // default: action 0 everywhere
};

/// Per-solve diagnostics.
struct SolveReport {
    int iterations = 0;
    bool converged = false;
    bool cycle_detected = false;
    std::vector<int> policy_changes;        // per iteration
    std::vector<double> iteration_seconds;  // per iteration
    std::vector<double> mean_values;        // per-iteration mean supporting value
    double bellman_residual = 0.0;          // for the returned iterate
};

struct SolveResult {
    Policy policy;
    ValueRepresentation values;
    SolveReport report;
};

/// Generator matrix of the drift-diffusion operator under a fixed policy:
/// M[i][j] = gamma * kernel_diffusion(s_i, s_j, mu_i, sigma_i) with the
/// policy's moments at state i. Rows of Goal/Obstacle states are zero.
Eigen::MatrixXd build_generator(const SupportingSet& supp, const MomentModel& model,
                                const Policy& policy, double gamma);

/// Solves the Taylored evaluation system
///   (M (lambda I + K)^{-1} - (1-gamma) I) V = -R
/// on Free rows, with Goal rows pinned to goal_reward/(1-gamma) and
/// Obstacle rows pinned to obstacle_reward. The fixed rows are substituted
/// out, so they hold exactly in the result.
ValueRepresentation policy_evaluation(const SupportingSet& supp,
                                      const MomentModel& model,
                                      const ProblemDefinition& problem,
                                      const Policy& policy);

/// Kernel value estimate at an arbitrary state: k(s, supports)^T alpha.
double value_at(const ValueRepresentation& vr, const StateVector& s);

/// gamma * (mu^T grad + 1/2 grad . sigma grad) applied to the kernel value
/// function at s.
double value_local_operator(const ValueRepresentation& vr, const StateVector& s,
                            const StateVector& mu, const StateMatrix& sigma,
                            double gamma);

/// Greedy policy against the given values: at every supporting state the
/// argmax over actions of expected_reward + value_local_operator, ties
/// broken by lowest action index. Goal/Obstacle states are forced to
/// action 0 after the sweep. Returns the new policy and how many entries
/// differ from `current`.
std::pair<Policy, int> policy_improvement(const SupportingSet& supp,
                                          const MomentModel& model,
                                          const ProblemDefinition& problem,
                                          const ValueRepresentation& vr,
                                          const Policy& current);

/// Mean absolute residual of the Taylored optimality relation
///   -R(s, pi(s)) = gamma * L v(s) - (1-gamma) v(s)
/// over Free supporting states, with v the kernel value function.
double bellman_residual(const SupportingSet& supp, const MomentModel& model,
                        const ProblemDefinition& problem, const Policy& policy,
                        const ValueRepresentation& vr);

/// Alternates policy evaluation and improvement until the supporting-state
/// actions stop changing. The Gram factorization is reused from `supp` and
/// never recomputed. If the action table revisits an earlier iterate, the
/// loop stops and returns the iterate with the smallest Bellman residual,
/// flagged cycle_detected. Exceeding max_iterations is reported in the
/// SolveReport, not thrown.
SolveResult policy_iteration(const SupportingSet& supp, const MomentModel& model,
                             const ProblemDefinition& problem,
                             const SolveOptions& options = {});

}  // namespace ktmdp
