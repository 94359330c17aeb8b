#pragma once

#include "ktmdp/kernel.hpp"
#include "ktmdp/rng.hpp"
#include "ktmdp/state.hpp"

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ktmdp {

/// First moment (expected displacement) and non-central second moment of a
/// one-step transition. sigma = Cov[displacement] + mu*mu^T, so the
/// centered matrix sigma - mu*mu^T must stay positive semidefinite.
struct TransitionMoments {
    StateVector mu;
    StateMatrix sigma;

    /// Throws std::invalid_argument when sigma is asymmetric (tolerance
    /// 1e-9) or the centered covariance has an eigenvalue below -1e-9.
    void validate() const;

    static TransitionMoments validated(StateVector mu, StateMatrix sigma);
};

/// Finite action catalogue. `generator` maps (state, action index) to the
/// intended next waypoint or control tuple; `labels` carry per-action
/// metadata such as the waypoint angle or the (v, omega) pair.
struct ActionSet {
    int count = 0;
    std::function<StateVector(const StateVector&, int)> generator;
    std::vector<std::string> labels;
};

/// Discounted continuous-state problem: workspace bounds, action set,
/// region labeling, and the terminal rewards.
struct ProblemDefinition {
    double gamma = 0.9;
    Box bounds;
    ActionSet action_set;
    std::function<Region(const StateVector&)> region_classifier;
    double goal_reward = 1.0;
    double obstacle_reward = -1.0;

    /// Goal value implied by absorbing goal semantics with repeated reward.
    double goal_value() const { return goal_reward / (1.0 - gamma); }
};

/// Region of a state: Goal / Obstacle inside bounds come from the problem's
/// classifier; anything outside the workspace box counts as Obstacle.
Region classify(const ProblemDefinition& problem, const StateVector& s);

/// Policy as a function: maps an occupied state to the action taken there.
/// Converged solutions, baseline lookups, and hand-written test policies all
/// drive rollouts through this shape.
using ActionChooser = std::function<int(const StateVector&)>;

/// Supporting states with their region labels and the shared factorized
/// Gram matrix.
struct SupportingSet {
    std::vector<StateVector> states;
    std::vector<Region> labels;
    std::shared_ptr<const GramFactor> gram;

    int size() const { return static_cast<int>(states.size()); }
};

/// Labels every state via `classify` and factorizes the Gram matrix.
SupportingSet make_supporting_set(const KernelSpec& spec,
                                  std::vector<StateVector> states, double lambda,
                                  const ProblemDefinition& problem);

/// Enforces the coverage rules for solver-facing supporting sets: at least
/// two states and at least one Goal-labeled state.
void check_coverage(const SupportingSet& supp);

/// Deterministic policy restricted to the supporting states.
struct Policy {
    std::vector<int> actions;

    int size() const { return static_cast<int>(actions.size()); }
    bool operator==(const Policy&) const = default;
};

/// Supporting-state values V and the kernel weights
/// alpha = (lambda*I + K)^{-1} V that extend them to the whole space.
struct ValueRepresentation {
    Eigen::VectorXd values;
    Eigen::VectorXd alpha;
    std::shared_ptr<const GramFactor> gram;
};

/// Moment-side view of an environment: everything the solver is allowed to
/// see. Implementations must be deterministic for fixed (s, a) and fixed
/// internal seed, and callable concurrently.
class MomentModel {
public:
    virtual ~MomentModel() = default;

    virtual TransitionMoments moments(const StateVector& s, int action) const = 0;
    virtual double expected_reward(const StateVector& s, int action) const = 0;

    /// Expected reward for every action at once. Must agree exactly with
    /// per-action expected_reward calls; environments override this when
    /// they can share work across actions.
    virtual Eigen::VectorXd expected_reward_all(const StateVector& s,
                                                int action_count) const;
};

/// Sampling-side view of an environment, used only by rollout evaluation.
class SimulationModel {
public:
    virtual ~SimulationModel() = default;

    virtual StateVector sample_next(const StateVector& s, int action,
                                    RandomStream& rng) const = 0;
};

}  // namespace ktmdp
