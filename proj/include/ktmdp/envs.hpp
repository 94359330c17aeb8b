#pragma once

#include "ktmdp/heightmap.hpp"
#include "ktmdp/mdp_core.hpp"
#include "ktmdp/rng.hpp"
#include "ktmdp/state.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <numbers>
#include <utility>
#include <vector>

namespace ktmdp {

inline StateVector state2(double x, double y) {
    StateVector s(2);
    s << x, y;
    return s;
}

inline StateVector state3(double x, double y, double theta) {
    StateVector s(3);
    s << x, y, theta;
    return s;
}

/// Goal footprint in the position plane: an axis-aligned rectangle or a
/// disc. Worlds with heading ignore the heading when testing membership.
struct GoalRegion {
    enum class Shape { Rectangle, Disc };

    Shape shape = Shape::Rectangle;
    Rect rect{0.0, 0.0, 0.0, 0.0};
    Eigen::Vector2d center{0.0, 0.0};
    double radius = 0.0;

    static GoalRegion rectangle(Rect r) {
        GoalRegion g;
        g.shape = Shape::Rectangle;
        g.rect = r;
        return g;
    }

    static GoalRegion disc(double cx, double cy, double radius) {
        GoalRegion g;
        g.shape = Shape::Disc;
        g.center = {cx, cy};
        g.radius = radius;
        return g;
    }

    bool contains(double x, double y) const {
        if (shape == Shape::Rectangle) return rect.contains(x, y);
        const double dx = x - center.x();
        const double dy = y - center.y();
        return dx * dx + dy * dy <= radius * radius;
    }

    Eigen::Vector2d centroid() const {
        if (shape == Shape::Disc) return center;
        return {0.5 * (rect.x0 + rect.x1), 0.5 * (rect.y0 + rect.y1)};
    }
};

/// Planar waypoint-navigation world. Actions steer toward Q waypoints
/// placed on a circle of radius waypoint_radius around the current state;
/// the realized next state is the waypoint plus isotropic Gaussian noise.
struct PlaneConfig {
    Box bounds;
    GoalRegion goal;
    std::vector<Rect> obstacles;
    double waypoint_radius = 0.5;
    int action_count = 12;
    double noise_std = 0.2;
    double gamma = 0.9;
    double goal_reward = 1.0;
    double obstacle_reward = -1.0;
    int reward_samples = 100;
    std::uint64_t reward_seed = 0x706c616e65ULL;
};

/// Shipped default layout: a 10 m x 10 m workspace with two staggered
/// rectangular obstacle blocks that break the straight line from the left
/// half to the square goal region in the upper-right quadrant.
PlaneConfig plane_default_config();

class PlaneWorld : public MomentModel, public SimulationModel {
public:
    explicit PlaneWorld(PlaneConfig cfg);

    const PlaneConfig& config() const { return cfg_; }

    /// Waypoint i sits at s + r*(cos(2*pi*i/Q), sin(2*pi*i/Q)).
    StateVector waypoint(const StateVector& s, int action) const;

    Region classify(const StateVector& s) const;

    /// Problem view for the solver. Self-contained: the returned object
    /// does not reference this world.
    ProblemDefinition problem() const;

    TransitionMoments moments(const StateVector& s, int action) const override;
    double expected_reward(const StateVector& s, int action) const override;
    Eigen::VectorXd expected_reward_all(const StateVector& s, int action_count) const override;
    StateVector sample_next(const StateVector& s, int action, RandomStream& rng) const override;

private:
    double region_reward(double x, double y) const;

    PlaneConfig cfg_;
};

/// Terrain world over a heightmap: the same waypoint actions as the plane
/// world, but each step is trapped in place (with small residual noise)
/// with probability min(1, slope/theta_crit). There are no obstacle
/// regions; leaving the workspace ends a rollout with obstacle_reward.
struct TerrainConfig {
    std::shared_ptr<const Heightmap> heightmap;
    GoalRegion goal;
    Box bounds;  // defaults to the heightmap extent when empty
    double theta_crit = std::numbers::pi / 6.0;
    double waypoint_radius = 0.5;
    int action_count = 12;
    double noise_std = 0.2;
    double trap_noise_std = 0.01;
    double gamma = 0.9;
    double goal_reward = 1.0;
    double obstacle_reward = 0.0;
    int reward_samples = 100;
    std::uint64_t reward_seed = 0x7465727261696eULL;
};

class TerrainWorld : public MomentModel, public SimulationModel {
public:
    explicit TerrainWorld(TerrainConfig cfg);

    const TerrainConfig& config() const { return cfg_; }

    StateVector waypoint(const StateVector& s, int action) const;

    /// min(1, slope_at(s)/theta_crit); monotone in the local slope.
    double trap_probability(const StateVector& s) const;

    Region classify(const StateVector& s) const;
    ProblemDefinition problem() const;

    TransitionMoments moments(const StateVector& s, int action) const override;
    double expected_reward(const StateVector& s, int action) const override;
    Eigen::VectorXd expected_reward_all(const StateVector& s, int action_count) const override;
    StateVector sample_next(const StateVector& s, int action, RandomStream& rng) const override;

private:
    double region_reward(double x, double y) const;

    TerrainConfig cfg_;
};

/// Slope-aware unicycle with state (x, y, heading). Actions are a lattice
/// of (speed v, turn rate omega) pairs; the position advance is scaled by
/// 1 - 2*slope/pi so steeper ground slows the vehicle, freezing it
/// entirely at vertical slope. Without a heightmap the slope is zero and
/// the dynamics reduce to the standard unicycle step.
struct UnicycleConfig {
    Box bounds;  // 3D; heading component should span [-pi, pi]
    GoalRegion goal;
    std::shared_ptr<const Heightmap> heightmap;  // optional
    int v_levels = 8;
    int omega_levels = 8;
    double v_min = 0.0;
    double v_max = 1.0;
    double omega_min = -1.0;
    double omega_max = 1.0;
    double dt = 1.0;
    StateVector noise_mean;  // E[eps]; zeros when empty
    StateMatrix noise_cov;   // V[eps]; zero matrix when empty
    double gamma = 0.9;
    double goal_reward = 1.0;
    double obstacle_reward = -1.0;
    int reward_samples = 100;
    std::uint64_t reward_seed = 0x756e696379636cULL;
};

class UnicycleWorld : public MomentModel, public SimulationModel {
public:
    explicit UnicycleWorld(UnicycleConfig cfg);

    const UnicycleConfig& config() const { return cfg_; }

    int action_count() const { return cfg_.v_levels * cfg_.omega_levels; }

    /// (v, omega) for a lattice action index (v varies slowest).
    std::pair<double, double> action_levels(int action) const;

    /// Slope angle under the vehicle; 0 without a heightmap.
    double slope(const StateVector& s) const;

    /// Deterministic step f(s, a): position advances by
    /// (1 - 2*slope/pi) * v * dt along the heading, heading advances by
    /// omega * dt and wraps to (-pi, pi].
    StateVector step(const StateVector& s, int action) const;

    Region classify(const StateVector& s) const;
    ProblemDefinition problem() const;

    TransitionMoments moments(const StateVector& s, int action) const override;
    double expected_reward(const StateVector& s, int action) const override;
    Eigen::VectorXd expected_reward_all(const StateVector& s, int action_count) const override;
    StateVector sample_next(const StateVector& s, int action, RandomStream& rng) const override;

private:
    double region_reward(const StateVector& s) const;

    UnicycleConfig cfg_;
    Eigen::Matrix3d noise_transform_;  // maps standard normals to eps - E[eps]
};

}  // namespace ktmdp
