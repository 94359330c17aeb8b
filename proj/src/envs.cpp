#include "ktmdp/envs.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ktmdp {

namespace {

void check_action(int action, int count) {
    if (action < 0 || action >= count) {
        throw std::invalid_argument("action index " + std::to_string(action) +
                                    " outside [0, " + std::to_string(count) + ")");
    }
}

/// Displacement to waypoint i: r*(cos(2*pi*i/Q), sin(2*pi*i/Q)). Computed
/// from the angle rather than as waypoint - s so it is exact per action.
Eigen::Vector2d waypoint_offset(double radius, int action, int count) {
    const double angle = 2.0 * std::numbers::pi * action / count;
    return {radius * std::cos(angle), radius * std::sin(angle)};
}

/// Per-state seed for the shared reward-sampling draws. Keyed on the state
/// only, never the action, so every action at a state sees the same noise
/// realizations (common random numbers).
std::uint64_t reward_stream_seed(std::uint64_t base, const StateVector& s) {
    return seed_mix(base, hash_doubles({s.data(), static_cast<std::size_t>(s.size())}));
}

std::vector<std::string> waypoint_labels(int count) {
    std::vector<std::string> labels;
    labels.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) labels.push_back("waypoint_" + std::to_string(i));
    return labels;
}

Box default_plane_bounds() {
    Box box;
    box.lo = state2(0.0, 0.0);
    box.hi = state2(10.0, 10.0);
    return box;
}

}  // namespace

// ---------------------------------------------------------------------------
// PlaneWorld

PlaneConfig plane_default_config() {
    PlaneConfig cfg;
    cfg.bounds = default_plane_bounds();
    cfg.goal = GoalRegion::rectangle({7.4, 9.4, 7.4, 9.4});
    cfg.obstacles = {{3.0, 4.0, 2.0, 6.5}, {6.0, 7.0, 3.5, 8.0}};
    return cfg;
}

PlaneWorld::PlaneWorld(PlaneConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.bounds.dim() == 0) cfg_.bounds = default_plane_bounds();
    if (cfg_.bounds.dim() != 2) throw std::invalid_argument("plane world bounds must be 2D");
    if (cfg_.action_count < 1) throw std::invalid_argument("action_count must be >= 1");
    if (cfg_.waypoint_radius <= 0.0) throw std::invalid_argument("waypoint_radius must be positive");
    if (cfg_.noise_std < 0.0) throw std::invalid_argument("noise_std must be >= 0");
    if (cfg_.reward_samples < 1) throw std::invalid_argument("reward_samples must be >= 1");
}

StateVector PlaneWorld::waypoint(const StateVector& s, int action) const {
    check_action(action, cfg_.action_count);
    const Eigen::Vector2d off = waypoint_offset(cfg_.waypoint_radius, action, cfg_.action_count);
    return state2(s[0] + off.x(), s[1] + off.y());
}

Region PlaneWorld::classify(const StateVector& s) const {
    if (!cfg_.bounds.contains(s)) return Region::Obstacle;
    for (const Rect& r : cfg_.obstacles) {
        if (r.contains(s[0], s[1])) return Region::Obstacle;
    }
    if (cfg_.goal.contains(s[0], s[1])) return Region::Goal;
    return Region::Free;
}

ProblemDefinition PlaneWorld::problem() const {
    ProblemDefinition prob;
    prob.gamma = cfg_.gamma;
    prob.bounds = cfg_.bounds;
    prob.goal_reward = cfg_.goal_reward;
    prob.obstacle_reward = cfg_.obstacle_reward;
    prob.action_set.count = cfg_.action_count;
    prob.action_set.labels = waypoint_labels(cfg_.action_count);
    prob.action_set.generator = [radius = cfg_.waypoint_radius, count = cfg_.action_count](
                                    const StateVector& s, int action) {
        check_action(action, count);
        const Eigen::Vector2d off = waypoint_offset(radius, action, count);
        return state2(s[0] + off.x(), s[1] + off.y());
    };
    prob.region_classifier = [obstacles = cfg_.obstacles, goal = cfg_.goal](const StateVector& s) {
        for (const Rect& r : obstacles) {
            if (r.contains(s[0], s[1])) return Region::Obstacle;
        }
        if (goal.contains(s[0], s[1])) return Region::Goal;
        return Region::Free;
    };
    return prob;
}

TransitionMoments PlaneWorld::moments(const StateVector& s, int action) const {
    check_action(action, cfg_.action_count);
    (void)s;
    const Eigen::Vector2d off = waypoint_offset(cfg_.waypoint_radius, action, cfg_.action_count);
    TransitionMoments tm;
    tm.mu = StateVector(2);
    tm.mu << off.x(), off.y();
    const double var = cfg_.noise_std * cfg_.noise_std;
    tm.sigma = var * StateMatrix::Identity(2, 2) + tm.mu * tm.mu.transpose();
    return tm;
}

double PlaneWorld::region_reward(double x, double y) const {
    switch (classify(state2(x, y))) {
        case Region::Goal: return cfg_.goal_reward;
        case Region::Obstacle: return cfg_.obstacle_reward;
        case Region::Free: return 0.0;
    }
    return 0.0;
}

double PlaneWorld::expected_reward(const StateVector& s, int action) const {
    check_action(action, cfg_.action_count);
    RandomStream rng(reward_stream_seed(cfg_.reward_seed, s));
    const StateVector wp = waypoint(s, action);
    double sum = 0.0;
    for (int k = 0; k < cfg_.reward_samples; ++k) {
        const double zx = rng.normal();
        const double zy = rng.normal();
        sum += region_reward(wp[0] + cfg_.noise_std * zx, wp[1] + cfg_.noise_std * zy);
    }
    return sum / cfg_.reward_samples;
}

Eigen::VectorXd PlaneWorld::expected_reward_all(const StateVector& s, int action_count) const {
    check_action(action_count - 1, cfg_.action_count);
    RandomStream rng(reward_stream_seed(cfg_.reward_seed, s));
    std::vector<Eigen::Vector2d> offsets(static_cast<std::size_t>(cfg_.reward_samples));
    for (auto& z : offsets) {
        z.x() = cfg_.noise_std * rng.normal();
        z.y() = cfg_.noise_std * rng.normal();
    }
    Eigen::VectorXd out(action_count);
    for (int a = 0; a < action_count; ++a) {
        const StateVector wp = waypoint(s, a);
        double sum = 0.0;
        for (const auto& z : offsets) sum += region_reward(wp[0] + z.x(), wp[1] + z.y());
        out[a] = sum / cfg_.reward_samples;
    }
    return out;
}

StateVector PlaneWorld::sample_next(const StateVector& s, int action, RandomStream& rng) const {
    const StateVector wp = waypoint(s, action);
    const double zx = rng.normal();
    const double zy = rng.normal();
    return state2(wp[0] + cfg_.noise_std * zx, wp[1] + cfg_.noise_std * zy);
}

// ---------------------------------------------------------------------------
// TerrainWorld

TerrainWorld::TerrainWorld(TerrainConfig cfg) : cfg_(std::move(cfg)) {
    if (!cfg_.heightmap) throw std::invalid_argument("terrain world requires a heightmap");
    if (cfg_.bounds.dim() == 0) cfg_.bounds = cfg_.heightmap->extent_box();
    if (cfg_.bounds.dim() != 2) throw std::invalid_argument("terrain world bounds must be 2D");
    if (!cfg_.heightmap->in_extent(cfg_.bounds.lo[0], cfg_.bounds.lo[1]) ||
        !cfg_.heightmap->in_extent(cfg_.bounds.hi[0], cfg_.bounds.hi[1])) {
        throw std::invalid_argument("terrain bounds leave the heightmap extent");
    }
    if (cfg_.theta_crit <= 0.0) throw std::invalid_argument("theta_crit must be positive");
    if (cfg_.action_count < 1) throw std::invalid_argument("action_count must be >= 1");
    if (cfg_.waypoint_radius <= 0.0) throw std::invalid_argument("waypoint_radius must be positive");
    if (cfg_.noise_std < 0.0 || cfg_.trap_noise_std < 0.0) {
        throw std::invalid_argument("noise stds must be >= 0");
    }
    if (cfg_.reward_samples < 1) throw std::invalid_argument("reward_samples must be >= 1");
}

StateVector TerrainWorld::waypoint(const StateVector& s, int action) const {
    check_action(action, cfg_.action_count);
    const Eigen::Vector2d off = waypoint_offset(cfg_.waypoint_radius, action, cfg_.action_count);
    return state2(s[0] + off.x(), s[1] + off.y());
}

double TerrainWorld::trap_probability(const StateVector& s) const {
    const double slope = slope_at(*cfg_.heightmap, s[0], s[1]);
    return std::min(1.0, slope / cfg_.theta_crit);
}

Region TerrainWorld::classify(const StateVector& s) const {
    if (!cfg_.bounds.contains(s)) return Region::Obstacle;
    if (cfg_.goal.contains(s[0], s[1])) return Region::Goal;
    return Region::Free;
}

ProblemDefinition TerrainWorld::problem() const {
    ProblemDefinition prob;
    prob.gamma = cfg_.gamma;
    prob.bounds = cfg_.bounds;
    prob.goal_reward = cfg_.goal_reward;
    prob.obstacle_reward = cfg_.obstacle_reward;
    prob.action_set.count = cfg_.action_count;
    prob.action_set.labels = waypoint_labels(cfg_.action_count);
    prob.action_set.generator = [radius = cfg_.waypoint_radius, count = cfg_.action_count](
                                    const StateVector& s, int action) {
        check_action(action, count);
        const Eigen::Vector2d off = waypoint_offset(radius, action, count);
        return state2(s[0] + off.x(), s[1] + off.y());
    };
    prob.region_classifier = [goal = cfg_.goal](const StateVector& s) {
        if (goal.contains(s[0], s[1])) return Region::Goal;
        return Region::Free;
    };
    return prob;
}

TransitionMoments TerrainWorld::moments(const StateVector& s, int action) const {
    check_action(action, cfg_.action_count);
    const double p = trap_probability(s);
    const Eigen::Vector2d m = waypoint_offset(cfg_.waypoint_radius, action, cfg_.action_count);
    const double move_var = cfg_.noise_std * cfg_.noise_std;
    const double trap_var = cfg_.trap_noise_std * cfg_.trap_noise_std;

    TransitionMoments tm;
    tm.mu = StateVector(2);
    tm.mu << (1.0 - p) * m.x(), (1.0 - p) * m.y();
    StateMatrix cov = ((1.0 - p) * move_var + p * trap_var) * StateMatrix::Identity(2, 2);
    cov += p * (1.0 - p) * (m * m.transpose());
    tm.sigma = cov + tm.mu * tm.mu.transpose();
    return tm;
}

double TerrainWorld::region_reward(double x, double y) const {
    switch (classify(state2(x, y))) {
        case Region::Goal: return cfg_.goal_reward;
        case Region::Obstacle: return cfg_.obstacle_reward;
        case Region::Free: return 0.0;
    }
    return 0.0;
}

double TerrainWorld::expected_reward(const StateVector& s, int action) const {
    check_action(action, cfg_.action_count);
    const double p = trap_probability(s);
    RandomStream rng(reward_stream_seed(cfg_.reward_seed, s));
    const StateVector wp = waypoint(s, action);
    double sum = 0.0;
    for (int k = 0; k < cfg_.reward_samples; ++k) {
        const double u = rng.uniform01();
        const double zx = rng.normal();
        const double zy = rng.normal();
        if (u <= p) {
            sum += region_reward(s[0] + cfg_.trap_noise_std * zx, s[1] + cfg_.trap_noise_std * zy);
        } else {
            sum += region_reward(wp[0] + cfg_.noise_std * zx, wp[1] + cfg_.noise_std * zy);
        }
    }
    return sum / cfg_.reward_samples;
}

Eigen::VectorXd TerrainWorld::expected_reward_all(const StateVector& s, int action_count) const {
    check_action(action_count - 1, cfg_.action_count);
    const double p = trap_probability(s);
    RandomStream rng(reward_stream_seed(cfg_.reward_seed, s));
    struct Draw {
        double u, zx, zy;
    };
    std::vector<Draw> draws(static_cast<std::size_t>(cfg_.reward_samples));
    for (auto& d : draws) {
        d.u = rng.uniform01();
        d.zx = rng.normal();
        d.zy = rng.normal();
    }
    Eigen::VectorXd out(action_count);
    for (int a = 0; a < action_count; ++a) {
        const StateVector wp = waypoint(s, a);
        double sum = 0.0;
        for (const auto& d : draws) {
            if (d.u <= p) {
                sum += region_reward(s[0] + cfg_.trap_noise_std * d.zx,
                                     s[1] + cfg_.trap_noise_std * d.zy);
            } else {
                sum += region_reward(wp[0] + cfg_.noise_std * d.zx, wp[1] + cfg_.noise_std * d.zy);
            }
        }
        out[a] = sum / cfg_.reward_samples;
    }
    return out;
}

StateVector TerrainWorld::sample_next(const StateVector& s, int action, RandomStream& rng) const {
    const double p = trap_probability(s);
    const StateVector wp = waypoint(s, action);
    const double u = rng.uniform01();
    const double zx = rng.normal();
    const double zy = rng.normal();
    if (u <= p) {
        return state2(s[0] + cfg_.trap_noise_std * zx, s[1] + cfg_.trap_noise_std * zy);
    }
    return state2(wp[0] + cfg_.noise_std * zx, wp[1] + cfg_.noise_std * zy);
}

// ---------------------------------------------------------------------------
// UnicycleWorld

namespace {

StateVector unicycle_step_impl(const UnicycleConfig& cfg, const StateVector& s, int action) {
    const int count = cfg.v_levels * cfg.omega_levels;
    check_action(action, count);
    const int iv = action / cfg.omega_levels;
    const int iw = action % cfg.omega_levels;
    const double v = cfg.v_min + iv * (cfg.v_max - cfg.v_min) / (cfg.v_levels - 1);
    const double omega = cfg.omega_min + iw * (cfg.omega_max - cfg.omega_min) / (cfg.omega_levels - 1);
    const double h = cfg.heightmap ? slope_at(*cfg.heightmap, s[0], s[1]) : 0.0;
    const double w = std::clamp(2.0 * h / std::numbers::pi, 0.0, 1.0);
    return state3(s[0] + (1.0 - w) * v * cfg.dt * std::cos(s[2]),
                  s[1] + (1.0 - w) * v * cfg.dt * std::sin(s[2]),
                  wrap_angle(s[2] + omega * cfg.dt));
}

}  // namespace

UnicycleWorld::UnicycleWorld(UnicycleConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.v_levels < 2 || cfg_.omega_levels < 2) {
        throw std::invalid_argument("v and omega lattices need at least 2 levels each");
    }
    if (cfg_.dt <= 0.0) throw std::invalid_argument("dt must be positive");
    if (cfg_.bounds.dim() == 0) {
        Box pos = cfg_.heightmap ? cfg_.heightmap->extent_box() : default_plane_bounds();
        cfg_.bounds.lo = state3(pos.lo[0], pos.lo[1], -std::numbers::pi);
        cfg_.bounds.hi = state3(pos.hi[0], pos.hi[1], std::numbers::pi);
    }
    if (cfg_.bounds.dim() != 3) throw std::invalid_argument("unicycle bounds must be 3D");
    if (cfg_.heightmap &&
        (!cfg_.heightmap->in_extent(cfg_.bounds.lo[0], cfg_.bounds.lo[1]) ||
         !cfg_.heightmap->in_extent(cfg_.bounds.hi[0], cfg_.bounds.hi[1]))) {
        throw std::invalid_argument("unicycle bounds leave the heightmap extent");
    }
    if (cfg_.noise_mean.size() == 0) cfg_.noise_mean = StateVector::Zero(3);
    if (cfg_.noise_cov.size() == 0) cfg_.noise_cov = StateMatrix::Zero(3, 3);
    if (cfg_.noise_mean.size() != 3 || cfg_.noise_cov.rows() != 3 || cfg_.noise_cov.cols() != 3) {
        throw std::invalid_argument("unicycle noise moments must be 3-dimensional");
    }
    if ((cfg_.noise_cov - cfg_.noise_cov.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
        throw std::invalid_argument("noise covariance must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(Eigen::Matrix3d(cfg_.noise_cov));
    if (es.eigenvalues().minCoeff() < -1e-9) {
        throw std::invalid_argument("noise covariance must be positive semidefinite");
    }
    noise_transform_ = es.eigenvectors() *
                       es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                       es.eigenvectors().transpose();
    if (cfg_.reward_samples < 1) throw std::invalid_argument("reward_samples must be >= 1");
}

std::pair<double, double> UnicycleWorld::action_levels(int action) const {
    check_action(action, action_count());
    const int iv = action / cfg_.omega_levels;
    const int iw = action % cfg_.omega_levels;
    return {cfg_.v_min + iv * (cfg_.v_max - cfg_.v_min) / (cfg_.v_levels - 1),
            cfg_.omega_min + iw * (cfg_.omega_max - cfg_.omega_min) / (cfg_.omega_levels - 1)};
}

double UnicycleWorld::slope(const StateVector& s) const {
    return cfg_.heightmap ? slope_at(*cfg_.heightmap, s[0], s[1]) : 0.0;
}

StateVector UnicycleWorld::step(const StateVector& s, int action) const {
    return unicycle_step_impl(cfg_, s, action);
}

Region UnicycleWorld::classify(const StateVector& s) const {
    if (!cfg_.bounds.contains(s)) return Region::Obstacle;
    if (cfg_.goal.contains(s[0], s[1])) return Region::Goal;
    return Region::Free;
}

ProblemDefinition UnicycleWorld::problem() const {
    ProblemDefinition prob;
    prob.gamma = cfg_.gamma;
    prob.bounds = cfg_.bounds;
    prob.goal_reward = cfg_.goal_reward;
    prob.obstacle_reward = cfg_.obstacle_reward;
    prob.action_set.count = action_count();
    prob.action_set.labels.reserve(static_cast<std::size_t>(action_count()));
    for (int a = 0; a < action_count(); ++a) {
        const auto [v, omega] = action_levels(a);
        prob.action_set.labels.push_back("v=" + std::to_string(v) + ",omega=" + std::to_string(omega));
    }
    prob.action_set.generator = [cfg = cfg_](const StateVector& s, int action) {
        return unicycle_step_impl(cfg, s, action);
    };
    prob.region_classifier = [goal = cfg_.goal](const StateVector& s) {
        if (goal.contains(s[0], s[1])) return Region::Goal;
        return Region::Free;
    };
    return prob;
}

TransitionMoments UnicycleWorld::moments(const StateVector& s, int action) const {
    const auto [v, omega] = action_levels(action);
    const double h = slope(s);
    const double w = std::clamp(2.0 * h / std::numbers::pi, 0.0, 1.0);

    // Heading displacement is kept unwrapped: the local expansion needs the
    // actual increment, while wrapping is the kernel's job.
    TransitionMoments tm;
    tm.mu = StateVector(3);
    tm.mu << (1.0 - w) * v * cfg_.dt * std::cos(s[2]), (1.0 - w) * v * cfg_.dt * std::sin(s[2]),
        omega * cfg_.dt;
    tm.mu += cfg_.noise_mean;
    tm.sigma = cfg_.noise_cov + tm.mu * tm.mu.transpose();
    return tm;
}

double UnicycleWorld::region_reward(const StateVector& s) const {
    switch (classify(s)) {
        case Region::Goal: return cfg_.goal_reward;
        case Region::Obstacle: return cfg_.obstacle_reward;
        case Region::Free: return 0.0;
    }
    return 0.0;
}

double UnicycleWorld::expected_reward(const StateVector& s, int action) const {
    check_action(action, action_count());
    RandomStream rng(reward_stream_seed(cfg_.reward_seed, s));
    const StateVector base = step(s, action);
    double sum = 0.0;
    for (int k = 0; k < cfg_.reward_samples; ++k) {
        Eigen::Vector3d z(rng.normal(), rng.normal(), rng.normal());
        const Eigen::Vector3d eps = Eigen::Vector3d(cfg_.noise_mean) + noise_transform_ * z;
        sum += region_reward(
            state3(base[0] + eps[0], base[1] + eps[1], wrap_angle(base[2] + eps[2])));
    }
    return sum / cfg_.reward_samples;
}

Eigen::VectorXd UnicycleWorld::expected_reward_all(const StateVector& s, int action_count_) const {
    check_action(action_count_ - 1, action_count());
    RandomStream rng(reward_stream_seed(cfg_.reward_seed, s));
    std::vector<Eigen::Vector3d> eps(static_cast<std::size_t>(cfg_.reward_samples));
    for (auto& e : eps) {
        Eigen::Vector3d z(rng.normal(), rng.normal(), rng.normal());
        e = Eigen::Vector3d(cfg_.noise_mean) + noise_transform_ * z;
    }
    Eigen::VectorXd out(action_count_);
    for (int a = 0; a < action_count_; ++a) {
        const StateVector base = step(s, a);
        double sum = 0.0;
        for (const auto& e : eps) {
            sum += region_reward(state3(base[0] + e[0], base[1] + e[1], wrap_angle(base[2] + e[2])));
        }
        out[a] = sum / cfg_.reward_samples;
    }
    return out;
}

StateVector UnicycleWorld::sample_next(const StateVector& s, int action, RandomStream& rng) const {
    const StateVector base = step(s, action);
    Eigen::Vector3d z(rng.normal(), rng.normal(), rng.normal());
    const Eigen::Vector3d eps = Eigen::Vector3d(cfg_.noise_mean) + noise_transform_ * z;
    return state3(base[0] + eps[0], base[1] + eps[1], wrap_angle(base[2] + eps[2]));
}

}  // namespace ktmdp
