#pragma once

#include "ktmdp/envs.hpp"
#include "ktmdp/kernel.hpp"
#include "ktmdp/mdp_core.hpp"
#include "ktmdp/solver.hpp"
#include "ktmdp/state.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace ktmdp {

/// Tabular MDP obtained by snapping a continuous world onto a cell lattice.
/// Cell c of the lattice (dimension 0 slowest, matching evenly_spaced) has
/// its center in `centers`; one extra absorbing pseudo-cell at index
/// n_cells() stands for everything outside the workspace box.
struct GridMDP {
    std::vector<StateVector> centers;
    std::vector<Region> labels;
    std::vector<int> counts;
    Box bounds;
    double gamma = 0.9;
    double goal_value = 10.0;      // pinned value of Goal cells
    double obstacle_value = -1.0;  // pinned value of Obstacle cells and the pseudo-cell

    /// One row-stochastic (n_cells x n_cells+1) matrix per action; the last
    /// column is the out-of-bounds pseudo-cell.
    std::vector<Eigen::MatrixXd> transitions;

    /// rewards(i, a) = sum_j P[a](i, j) * rho(j) with rho = +goal_reward on
    /// entering a Goal cell, obstacle_reward on entering an Obstacle cell or
    /// leaving the workspace, 0 otherwise. Determined by the rows, so the
    /// tabular model is internally consistent.
    Eigen::MatrixXd rewards;

    int n_cells() const { return static_cast<int>(centers.size()); }
    int n_actions() const { return static_cast<int>(transitions.size()); }

    /// Index of the cell containing s; n_cells() when s leaves the bounds.
    /// States exactly on the upper boundary map to the last cell.
    int cell_index(const StateVector& s) const;
};

/// Builds the tabular approximation: for every Free cell center and action,
/// `mc_samples` draws of sample_next are binned into cells (stream seeded by
/// seed_mix(seed, cell, action), so rows are independent of evaluation
/// order). Goal/Obstacle cells are absorbing with self-probability 1.
GridMDP discretize(const SimulationModel& sim, const ProblemDefinition& problem,
                   const std::vector<int>& counts, int mc_samples = 1000,
                   std::uint64_t seed = 0);

struct GridSolveResult {
    std::vector<int> policy;  // per cell; 0 at absorbing cells
    Eigen::VectorXd values;   // per cell (pseudo-cell excluded)
    int iterations = 0;
    bool converged = false;
};

/// Exact tabular policy iteration: dense linear-solve evaluation with Goal
/// and Obstacle cells pinned to their fixed values (the same convention the
/// kernel solver uses), greedy improvement with lowest-index tie-breaking.
GridSolveResult grid_policy_iteration(const GridMDP& mdp, int max_iterations = 500);

/// E_{x ~ N(mean, cov)}[k(x, s_j)] for the anisotropic Gaussian kernel with
/// diagonal Sigma = diag(lengthscales^2):
///   amplitude * det(I + Sigma^{-1} cov)^{-1/2}
///             * exp(-1/2 (mean - s_j)^T (Sigma + cov)^{-1} (mean - s_j)).
/// cov must be symmetric PSD; wrapped kernel dimensions are rejected, since
/// the identity only holds on flat space.
double gaussian_expected_kernel(const KernelSpec& spec, const StateVector& mean,
                                const StateMatrix& cov, const StateVector& s_j);

/// Exact Gaussian transition of a world: (mean, covariance) of the next
/// state under action a at state s.
using GaussianTransition =
    std::function<std::pair<StateVector, StateMatrix>(const StateVector&, int)>;

/// The plane world's transition is exactly Gaussian: mean at the selected
/// waypoint, isotropic covariance noise_std^2 I.
GaussianTransition plane_gaussian_transition(const PlaneConfig& cfg);

/// Policy iteration with the exact Bellman expectation instead of the
/// Taylor expansion: evaluation solves
///   (I - gamma P (lambda I + K)^{-1}) V = R
/// on Free rows, where P[i][j] = gaussian_expected_kernel at the policy's
/// transition from state i, with the same pinned Goal/Obstacle rows as the
/// main solver; improvement maximizes expected_reward + gamma E[v(next)].
/// Only valid when the world's transitions are exactly Gaussian.
SolveResult direct_kernel_policy_iteration(const SupportingSet& supp,
                                           const GaussianTransition& transition,
                                           const MomentModel& rewards,
                                           const ProblemDefinition& problem,
                                           const SolveOptions& options = {});

/// Rollout chooser for a tabular solution: looks up the containing cell's
/// action (out-of-box states clamp to the nearest cell). The actions are
/// copied; `mdp` must outlive the chooser.
ActionChooser grid_cell_policy(const GridMDP& mdp, std::vector<int> actions);

/// Rollout chooser for a direct-kernel solution: argmax over actions of
/// expected_reward + gamma * E[v(next)] under the exact Gaussian transition,
/// ties to the lowest index. Mirrors the improvement sweep of
/// direct_kernel_policy_iteration at arbitrary states. The value weights are
/// copied; `transition`, `rewards`, and `problem` must outlive the chooser.
ActionChooser gaussian_greedy_policy(const ValueRepresentation& vr,
                                     const GaussianTransition& transition,
                                     const MomentModel& rewards,
                                     const ProblemDefinition& problem);

}  // namespace ktmdp
