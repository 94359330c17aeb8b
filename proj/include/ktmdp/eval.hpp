#pragma once

#include "ktmdp/mdp_core.hpp"
#include "ktmdp/rng.hpp"
#include "ktmdp/solver.hpp"
#include "ktmdp/state.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ktmdp {

/// Rollout-evaluation sizes. The discount comes from the problem, never
/// from here.
struct RolloutConfig {
    int n_start_states = 10000;
    int trials_per_state = 5;
    int max_steps = 200;
    std::uint64_t base_seed = 0;

    void validate() const;
};

enum class Outcome { Goal, Obstacle, Timeout };

const char* outcome_name(Outcome o);

struct RolloutResult {
    double discounted_return = 0.0;
    Outcome outcome = Outcome::Timeout;
    int steps = 0;
    std::vector<StateVector> trajectory;  // empty unless recording was requested
};

/// Greedy action at an arbitrary state: argmax over actions of
/// expected_reward + gamma * (mu^T grad + 1/2 grad . sigma grad) applied to
/// the kernel value function, ties broken by lowest index. Identical to the
/// solver's improvement objective, so at a supporting state it reproduces
/// the converged policy's action.
int greedy_action(const ValueRepresentation& vr, const MomentModel& model,
                  const ProblemDefinition& problem, const StateVector& s);

/// Packages greedy_action as a reusable chooser. The value weights are
/// copied in; `model` and `problem` must outlive the chooser.
ActionChooser kernel_greedy_policy(const ValueRepresentation& vr, const MomentModel& model,
                                   const ProblemDefinition& problem);

/// Simulates one episode: repeatedly choose an action, draw the next state,
/// and realize goal_reward / obstacle_reward on entering a Goal / Obstacle
/// (or out-of-bounds) state, discounted by gamma^t with t the arrival step.
/// Free states carry no reward. A terminal start absorbs immediately with
/// its undiscounted region reward. The trajectory (start plus every arrival)
/// is recorded only when requested.
RolloutResult rollout(const ActionChooser& act, const SimulationModel& sim,
                      const ProblemDefinition& problem, const StateVector& start, int max_steps,
                      RandomStream& rng, bool record_trajectory = true);

/// n start states drawn uniformly from the workspace box, rejecting
/// terminal states (redrawn until Free). Deterministic in the seed.
std::vector<StateVector> uniform_free_starts(const ProblemDefinition& problem, int n,
                                             std::uint64_t seed);

struct EvalStats {
    double average_return = 0.0;  // mean over starts of the per-start mean return
    double goal_fraction = 0.0;
    double obstacle_fraction = 0.0;
    double timeout_fraction = 0.0;
    double mean_steps = 0.0;
    int n_starts = 0;
    int trials_per_state = 0;
};

/// Per-rollout breakdown of an evaluation, for exporters.
struct EvalDetail {
    std::vector<StateVector> starts;
    Eigen::MatrixXd returns;        // n_starts x trials_per_state
    std::vector<Outcome> outcomes;  // row-major (start, trial)
    std::vector<int> steps;         // row-major (start, trial)
};

/// Runs trials_per_state rollouts from each of n_start_states uniform free
/// starts. The stream for (start i, trial j) is seeded by
/// seed_mix(base_seed, i, j, 2) and the start states by
/// seed_mix(base_seed, 0, 0, 1), so results are byte-identical for every
/// thread count. When `detail` is given it receives the per-rollout data.
EvalStats evaluate_policy(const ActionChooser& act, const SimulationModel& sim,
                          const ProblemDefinition& problem, const RolloutConfig& cfg,
                          int n_threads = 1, EvalDetail* detail = nullptr);

/// The average-return criterion for a kernel solution.
double average_return(const ValueRepresentation& vr, const MomentModel& model,
                      const SimulationModel& sim, const ProblemDefinition& problem,
                      const RolloutConfig& cfg, int n_threads = 1);

struct SweepCell {
    double lengthscale = 0.0;
    double lambda = 0.0;
    bool solved = false;     // evaluation system stayed well-conditioned
    bool converged = false;  // policy iteration reached a fixed point
    int iterations = 0;
    double solve_seconds = 0.0;
    double average_return = 0.0;  // NaN when not solved
    double goal_fraction = 0.0;
    std::string error;  // nonempty when not solved
};

struct PerformanceMatrix {
    std::vector<double> lengthscales;
    std::vector<double> lambdas;
    std::vector<SweepCell> cells;  // row-major: lengthscale index slowest

    const SweepCell& cell(int i_lengthscale, int i_lambda) const {
        return cells[static_cast<std::size_t>(i_lengthscale) * lambdas.size() +
                     static_cast<std::size_t>(i_lambda)];
    }

    /// Index of the solved cell with the highest average return; -1 when
    /// every cell failed.
    int best_index() const;
};

struct SweepOptions {
    int max_iterations = 100;
    int n_threads = 1;
    double kernel_amplitude = 1.0;
    std::vector<bool> wrap_mask;  // forwarded to the kernel
};

/// Solves and evaluates one policy per (lengthscale, lambda) pair on the
/// given supporting states. Ill-conditioned cells are flagged and skipped,
/// never fatal; nonconverged cells are still evaluated with their
/// best-residual iterate.
PerformanceMatrix hyperparameter_sweep(const MomentModel& model, const SimulationModel& sim,
                                       const ProblemDefinition& problem,
                                       const std::vector<StateVector>& states,
                                       const std::vector<double>& lengthscales,
                                       const std::vector<double>& lambdas,
                                       const RolloutConfig& eval_cfg,
                                       const SweepOptions& options = {});

/// Runs fn(0..n-1) across up to n_threads workers (striped assignment).
/// Callers own any synchronization; disjoint output slots need none.
void parallel_for(int n, int n_threads, const std::function<void(int)>& fn);

}  // namespace ktmdp
