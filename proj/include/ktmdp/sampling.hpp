#pragma once

#include "ktmdp/rng.hpp"
#include "ktmdp/state.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <vector>

namespace ktmdp {

enum class SamplerStrategy { EvenlySpaced, UniformRandom, Importance, TrajectoryBand };

struct SamplerConfig {
    SamplerStrategy strategy = SamplerStrategy::EvenlySpaced;
    std::vector<int> counts;        // lattice counts per dimension
    int total = 0;                  // N for the random strategies
    std::uint64_t seed = 0;
    int candidate_pool_size = 0;    // importance; 0 means 20*N
    double band_width = 1.0;        // trajectory band, meters
    double band_length = 6.0;       // trajectory band, meters
    double weight_exponent = 1.0;   // importance

    void validate() const;
};

/// Lattice of states inset half a cell from every face, so all states lie
/// strictly inside the box. Iteration order: dimension 0 slowest.
std::vector<StateVector> evenly_spaced(const Box& bounds,
                                       const std::vector<int>& counts);

/// n states uniform over the box; candidates failing `accept` are redrawn.
std::vector<StateVector> uniform_random(
    const Box& bounds, int n, std::uint64_t seed,
    const std::function<bool(const StateVector&)>& accept = {});

struct ImportanceResult {
    std::vector<StateVector> states;  // goal center is state 0
    bool uniform_fallback = false;    // all weights were zero
};

/// Weighted sampling without replacement, probability proportional to
/// weight^exponent. The goal center is force-included as state 0 and
/// candidates within 1e-6 of an already selected state are skipped and
/// redrawn. All-zero weights fall back to uniform with a flag.
ImportanceResult importance_resample(const std::vector<StateVector>& candidates,
                                     const std::vector<double>& weights, int n,
                                     std::uint64_t seed,
                                     const StateVector& goal_center,
                                     double weight_exponent = 1.0);

struct TrajectoryBandResult {
    std::vector<StateVector> states;
    StateVector goal;        // segment endpoint, the temporary goal
    bool truncated = false;  // band reached past the end of the path
};

/// States uniform over a band of the given width around the path segment
/// [start_arclength, start_arclength + band_length]. With `with_heading`
/// a third state dimension is drawn uniform over (-pi, pi]. The segment
/// endpoint becomes the temporary goal; its heading, when present, is the
/// path direction there.
TrajectoryBandResult trajectory_band(const std::vector<Eigen::Vector2d>& path,
                                     double start_arclength, double band_length,
                                     double band_width, int n, std::uint64_t seed,
                                     bool with_heading = false);

}  // namespace ktmdp
