#pragma once

#include <Eigen/Core>

#include <cmath>
#include <numbers>

namespace ktmdp {

/// Point in the continuous state space. Dimension is 2 (planar position)
/// or 3 (position plus heading); heading, when present, lives in (-pi, pi].
/// Bounded at compile time so small states never touch the heap.
using StateVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;

/// d-by-d matrix sized like a state (second moments, covariances).
using StateMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

/// Shortest signed angular difference, result in (-pi, pi].
inline double wrap_angle(double a) {
    const double two_pi = 2.0 * std::numbers::pi;
    a = std::remainder(a, two_pi);
    if (a <= -std::numbers::pi) a += two_pi;
    return a;
}

/// Axis-aligned box; `lo` and `hi` are inclusive corners.
struct Box {
    StateVector lo;
    StateVector hi;

    int dim() const { return static_cast<int>(lo.size()); }

    bool contains(const StateVector& s) const {
        for (int i = 0; i < lo.size(); ++i) {
            if (s[i] < lo[i] || s[i] > hi[i]) return false;
        }
        return true;
    }
};

/// Axis-aligned rectangle in the position plane.
struct Rect {
    double x0, x1, y0, y1;

    bool contains(double x, double y) const {
        return x >= x0 && x <= x1 && y >= y0 && y <= y1;
    }
};

enum class Region { Free, Goal, Obstacle };

inline const char* region_name(Region r) {
    switch (r) {
        case Region::Free: return "free";
        case Region::Goal: return "goal";
        case Region::Obstacle: return "obstacle";
    }
    return "?";
}

}  // namespace ktmdp
