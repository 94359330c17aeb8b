#include "ktmdp/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ktmdp {

namespace {

struct Polyline {
    std::vector<Eigen::Vector2d> pts;
    std::vector<double> cum;  // cumulative arclength, cum[0] = 0

    explicit Polyline(const std::vector<Eigen::Vector2d>& path) : pts(path) {
        if (pts.size() < 2) {
            throw std::invalid_argument("path needs at least two points");
        }
        cum.resize(pts.size(), 0.0);
        for (size_t i = 1; i < pts.size(); ++i) {
            cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
        }
        if (cum.back() <= 0.0) {
            throw std::invalid_argument("path has zero length");
        }
    }

    double length() const { return cum.back(); }

    /// Point and unit tangent at arclength t (clamped to the path).
    void at(double t, Eigen::Vector2d& point, Eigen::Vector2d& tangent) const {
        t = std::clamp(t, 0.0, length());
        size_t i = 1;
        while (i + 1 < pts.size() && cum[i] < t) ++i;
        const double seg_len = cum[i] - cum[i - 1];
        const Eigen::Vector2d dir =
            seg_len > 0.0 ? ((pts[i] - pts[i - 1]) / seg_len).eval()
                          : Eigen::Vector2d(1.0, 0.0);
        point = pts[i - 1] + (t - cum[i - 1]) * dir;
        tangent = dir;
    }
};

}  // namespace

void SamplerConfig::validate() const {
    const bool lattice = strategy == SamplerStrategy::EvenlySpaced;
    if (lattice) {
        if (counts.size() < 2) {
            throw std::invalid_argument("lattice sampler needs per-dimension counts");
        }
        long n = 1;
        for (int c : counts) {
            if (c < 2) {
                throw std::invalid_argument("lattice counts must be at least 2");
            }
            n *= c;
        }
        if (n < 2) throw std::invalid_argument("sampler must produce at least 2 states");
    } else {
        if (total < 2) {
            throw std::invalid_argument("sampler must produce at least 2 states");
        }
    }
    if (band_width <= 0.0) throw std::invalid_argument("band width must be positive");
    if (weight_exponent < 0.0) {
        throw std::invalid_argument("weight exponent must be nonnegative");
    }
}

std::vector<StateVector> evenly_spaced(const Box& bounds,
                                       const std::vector<int>& counts) {
    const int d = bounds.dim();
    if (static_cast<int>(counts.size()) != d) {
        throw std::invalid_argument("lattice counts do not match box dimension");
    }
    long n = 1;
    for (int c : counts) {
        if (c < 2) throw std::invalid_argument("lattice counts must be at least 2");
        n *= c;
    }
    std::vector<StateVector> out;
    out.reserve(static_cast<size_t>(n));
    std::vector<int> idx(static_cast<size_t>(d), 0);
    while (true) {
        StateVector s(d);
        for (int i = 0; i < d; ++i) {
            const double cell =
                (bounds.hi[i] - bounds.lo[i]) / counts[static_cast<size_t>(i)];
            s[i] = bounds.lo[i] + cell * (idx[static_cast<size_t>(i)] + 0.5);
        }
        out.push_back(s);
        int k = d - 1;
        while (k >= 0 && ++idx[static_cast<size_t>(k)] == counts[static_cast<size_t>(k)]) {
            idx[static_cast<size_t>(k)] = 0;
            --k;
        }
        if (k < 0) break;
    }
    return out;
}

std::vector<StateVector> uniform_random(
    const Box& bounds, int n, std::uint64_t seed,
    const std::function<bool(const StateVector&)>& accept) {
    if (n < 1) throw std::invalid_argument("sample count must be positive");
    RandomStream rng(seed);
    std::vector<StateVector> out;
    out.reserve(static_cast<size_t>(n));
    const long max_attempts = 1000L * n;
    long attempts = 0;
    while (static_cast<int>(out.size()) < n) {
        if (++attempts > max_attempts) {
            throw std::runtime_error(
                "uniform sampler rejected too many candidates; acceptance region "
                "looks empty");
        }
        StateVector s(bounds.dim());
        for (int i = 0; i < bounds.dim(); ++i) {
            s[i] = rng.uniform(bounds.lo[i], bounds.hi[i]);
        }
        if (accept && !accept(s)) continue;
        out.push_back(s);
    }
    return out;
}

ImportanceResult importance_resample(const std::vector<StateVector>& candidates,
                                     const std::vector<double>& weights, int n,
                                     std::uint64_t seed,
                                     const StateVector& goal_center,
                                     double weight_exponent) {
    if (candidates.size() != weights.size()) {
        throw std::invalid_argument("candidate and weight counts differ");
    }
    if (n < 1) throw std::invalid_argument("sample count must be positive");
    for (double w : weights) {
        if (!(w >= 0.0)) {
            throw std::invalid_argument("importance weights must be nonnegative");
        }
    }

    ImportanceResult result;
    std::vector<double> w(weights.size());
    double total = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
        w[i] = std::pow(weights[i], weight_exponent);
        total += w[i];
    }
    if (total <= 0.0) {
        result.uniform_fallback = true;
        std::fill(w.begin(), w.end(), 1.0);
        total = static_cast<double>(w.size());
    }

    result.states.push_back(goal_center);
    RandomStream rng(seed);
    const auto too_close = [&](const StateVector& s) {
        for (const StateVector& chosen : result.states) {
            if ((chosen - s).norm() < 1e-6) return true;
        }
        return false;
    };

    while (static_cast<int>(result.states.size()) < n) {
        if (total <= 0.0) {
            std::ostringstream msg;
            msg << "importance resampling ran out of distinct candidates after "
                << result.states.size() << " of " << n << " states";
            throw std::invalid_argument(msg.str());
        }
        const double target = rng.uniform01() * total;
        double acc = 0.0;
        size_t pick = w.size();
        size_t last_positive = w.size();
        for (size_t i = 0; i < w.size(); ++i) {
            if (w[i] <= 0.0) continue;
            last_positive = i;
            acc += w[i];
            if (target <= acc) {
                pick = i;
                break;
            }
        }
        if (pick == w.size()) pick = last_positive;  // rounding at the top end
        // Remove the candidate from the pool whether kept or rejected.
        total -= w[pick];
        w[pick] = 0.0;
        if (too_close(candidates[pick])) continue;
        result.states.push_back(candidates[pick]);
    }
    return result;
}

TrajectoryBandResult trajectory_band(const std::vector<Eigen::Vector2d>& path,
                                     double start_arclength, double band_length,
                                     double band_width, int n, std::uint64_t seed,
                                     bool with_heading) {
    if (band_length <= 0.0 || band_width <= 0.0) {
        throw std::invalid_argument("band length and width must be positive");
    }
    if (n < 1) throw std::invalid_argument("sample count must be positive");
    const Polyline line(path);
    const double t0 = std::clamp(start_arclength, 0.0, line.length());
    double t1 = t0 + band_length;
    TrajectoryBandResult result;
    if (t1 > line.length()) {
        t1 = line.length();
        result.truncated = true;
    }
    if (t1 <= t0) {
        throw std::invalid_argument("band segment is empty; start is at the path end");
    }

    RandomStream rng(seed);
    const int d = with_heading ? 3 : 2;
    result.states.reserve(static_cast<size_t>(n));
    Eigen::Vector2d point, tangent;
    for (int i = 0; i < n; ++i) {
        const double t = rng.uniform(t0, t1);
        const double u = rng.uniform(-0.5 * band_width, 0.5 * band_width);
        line.at(t, point, tangent);
        const Eigen::Vector2d normal(-tangent.y(), tangent.x());
        StateVector s(d);
        s[0] = point.x() + u * normal.x();
        s[1] = point.y() + u * normal.y();
        if (with_heading) {
            s[2] = wrap_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));
        }
        result.states.push_back(s);
    }

    line.at(t1, point, tangent);
    result.goal.resize(d);
    result.goal[0] = point.x();
    result.goal[1] = point.y();
    if (with_heading) result.goal[2] = std::atan2(tangent.y(), tangent.x());
    return result;
}

}  // namespace ktmdp
