#include "ktmdp/cli.hpp"

#include "ktmdp/format.hpp"
#include "ktmdp/heightmap.hpp"
#include "ktmdp/sampling.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <utility>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ktmdp::cli {

namespace {

constexpr const char* kLibraryVersion = "0.1.0";

[[noreturn]] void fail(const std::string& path, const std::string& message) {
    throw ConfigError("config error at " + (path.empty() ? std::string("top level") : path) +
                      ": " + message);
}

std::string join_path(const std::string& base, const std::string& key) {
    return base.empty() ? key : base + "." + key;
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) fail(join_path(path, it.key()), "unknown key");
    }
}

const json* find(const json& j, const char* key) {
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

double as_double(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

int as_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<int>();
}

std::uint64_t as_u64(const json& j, const std::string& path) {
    if (!j.is_number_unsigned() && !j.is_number_integer()) fail(path, "expected an integer");
    if (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0) {
        fail(path, "expected a nonnegative integer");
    }
    return j.get<std::uint64_t>();
}

std::string as_string(const json& j, const std::string& path) {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
}

std::vector<double> as_double_array(const json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "expected an array of numbers");
    std::vector<double> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        out.push_back(as_double(j[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
}

std::vector<int> as_int_array(const json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "expected an array of integers");
    std::vector<int> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        out.push_back(as_int(j[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
}

Box parse_bounds(const json& j, const std::string& path, int expected_dim) {
    if (!j.is_array() || j.empty()) fail(path, "expected an array of [lo, hi] pairs");
    if (expected_dim > 0 && static_cast<int>(j.size()) != expected_dim) {
        fail(path, "expected " + std::to_string(expected_dim) + " dimensions");
    }
    const int dim = static_cast<int>(j.size());
    Box box;
    box.lo.resize(dim);
    box.hi.resize(dim);
    for (int d = 0; d < dim; ++d) {
        const std::string p = path + "[" + std::to_string(d) + "]";
        const std::vector<double> pair = as_double_array(j[static_cast<std::size_t>(d)], p);
        if (pair.size() != 2) fail(p, "expected [lo, hi]");
        if (!(pair[0] < pair[1])) fail(p, "lo must be strictly below hi");
        box.lo[d] = pair[0];
        box.hi[d] = pair[1];
    }
    return box;
}

GoalRegion parse_goal(const json& j, const std::string& path) {
    if (!j.is_object()) fail(path, "expected an object with \"rect\" or \"disc\"");
    check_keys(j, path, {"rect", "disc"});
    const json* rect = find(j, "rect");
    const json* disc = find(j, "disc");
    if ((rect != nullptr) == (disc != nullptr)) {
        fail(path, "expected exactly one of \"rect\" or \"disc\"");
    }
    if (rect != nullptr) {
        const std::vector<double> v = as_double_array(*rect, path + ".rect");
        if (v.size() != 4) fail(path + ".rect", "expected [x0, x1, y0, y1]");
        if (!(v[0] < v[1]) || !(v[2] < v[3])) fail(path + ".rect", "degenerate rectangle");
        return GoalRegion::rectangle({v[0], v[1], v[2], v[3]});
    }
    const std::vector<double> v = as_double_array(*disc, path + ".disc");
    if (v.size() != 3) fail(path + ".disc", "expected [cx, cy, radius]");
    if (!(v[2] > 0.0)) fail(path + ".disc", "radius must be positive");
    return GoalRegion::disc(v[0], v[1], v[2]);
}

void parse_world(const json& j, ExperimentConfig& cfg) {
    if (!j.is_object()) fail("world", "expected an object");
    const json* type = find(j, "type");
    if (type == nullptr) fail("world.type", "missing");
    const std::string kind = as_string(*type, "world.type");

    if (kind == "plane") {
        cfg.world = WorldKind::Plane;
        check_keys(j, "world",
                   {"type", "bounds", "goal", "obstacles", "waypoint_radius", "action_count",
                    "noise_std", "goal_reward", "obstacle_reward", "reward_samples",
                    "reward_seed"});
        PlaneConfig& w = cfg.plane;
        if (const json* b = find(j, "bounds")) w.bounds = parse_bounds(*b, "world.bounds", 2);
        if (const json* g = find(j, "goal")) w.goal = parse_goal(*g, "world.goal");
        if (const json* obs = find(j, "obstacles")) {
            if (!obs->is_array()) fail("world.obstacles", "expected an array");
            w.obstacles.clear();
            for (std::size_t i = 0; i < obs->size(); ++i) {
                const std::string p = "world.obstacles[" + std::to_string(i) + "]";
                const std::vector<double> v = as_double_array((*obs)[i], p);
                if (v.size() != 4) fail(p, "expected [x0, x1, y0, y1]");
                w.obstacles.push_back({v[0], v[1], v[2], v[3]});
            }
        }
        if (const json* v = find(j, "waypoint_radius"))
            w.waypoint_radius = as_double(*v, "world.waypoint_radius");
        if (const json* v = find(j, "action_count"))
            w.action_count = as_int(*v, "world.action_count");
        if (const json* v = find(j, "noise_std")) w.noise_std = as_double(*v, "world.noise_std");
        if (const json* v = find(j, "goal_reward"))
            w.goal_reward = as_double(*v, "world.goal_reward");
        if (const json* v = find(j, "obstacle_reward"))
            w.obstacle_reward = as_double(*v, "world.obstacle_reward");
        if (const json* v = find(j, "reward_samples"))
            w.reward_samples = as_int(*v, "world.reward_samples");
        if (const json* v = find(j, "reward_seed")) w.reward_seed = as_u64(*v, "world.reward_seed");
        return;
    }

    if (kind == "terrain") {
        cfg.world = WorldKind::Terrain;
        check_keys(j, "world",
                   {"type", "heightmap", "bounds", "goal", "theta_crit", "waypoint_radius",
                    "action_count", "noise_std", "trap_noise_std", "goal_reward",
                    "obstacle_reward", "reward_samples", "reward_seed"});
        TerrainConfig& w = cfg.terrain;
        const json* hm = find(j, "heightmap");
        if (hm == nullptr) fail("world.heightmap", "missing (terrain worlds need a heightmap)");
        cfg.terrain_heightmap_path = as_string(*hm, "world.heightmap");
        if (const json* b = find(j, "bounds")) w.bounds = parse_bounds(*b, "world.bounds", 2);
        const json* goal = find(j, "goal");
        if (goal == nullptr) fail("world.goal", "missing (terrain worlds need a goal region)");
        w.goal = parse_goal(*goal, "world.goal");
        if (const json* v = find(j, "theta_crit")) w.theta_crit = as_double(*v, "world.theta_crit");
        if (const json* v = find(j, "waypoint_radius"))
            w.waypoint_radius = as_double(*v, "world.waypoint_radius");
        if (const json* v = find(j, "action_count"))
            w.action_count = as_int(*v, "world.action_count");
        if (const json* v = find(j, "noise_std")) w.noise_std = as_double(*v, "world.noise_std");
        if (const json* v = find(j, "trap_noise_std"))
            w.trap_noise_std = as_double(*v, "world.trap_noise_std");
        if (const json* v = find(j, "goal_reward"))
            w.goal_reward = as_double(*v, "world.goal_reward");
        if (const json* v = find(j, "obstacle_reward"))
            w.obstacle_reward = as_double(*v, "world.obstacle_reward");
        if (const json* v = find(j, "reward_samples"))
            w.reward_samples = as_int(*v, "world.reward_samples");
        if (const json* v = find(j, "reward_seed")) w.reward_seed = as_u64(*v, "world.reward_seed");
        return;
    }

    if (kind == "unicycle") {
        cfg.world = WorldKind::Unicycle;
        check_keys(j, "world",
                   {"type", "heightmap", "bounds", "goal", "v_levels", "omega_levels", "v_min",
                    "v_max", "omega_min", "omega_max", "dt", "noise_mean", "noise_cov_diag",
                    "goal_reward", "obstacle_reward", "reward_samples", "reward_seed"});
        UnicycleConfig& w = cfg.unicycle;
        if (const json* hm = find(j, "heightmap")) {
            cfg.unicycle_heightmap_path = as_string(*hm, "world.heightmap");
        }
        const json* bounds = find(j, "bounds");
        if (bounds == nullptr) fail("world.bounds", "missing (unicycle worlds need 3D bounds)");
        w.bounds = parse_bounds(*bounds, "world.bounds", 3);
        const json* goal = find(j, "goal");
        if (goal == nullptr) fail("world.goal", "missing (unicycle worlds need a goal region)");
        w.goal = parse_goal(*goal, "world.goal");
        if (const json* v = find(j, "v_levels")) w.v_levels = as_int(*v, "world.v_levels");
        if (const json* v = find(j, "omega_levels"))
            w.omega_levels = as_int(*v, "world.omega_levels");
        if (const json* v = find(j, "v_min")) w.v_min = as_double(*v, "world.v_min");
        if (const json* v = find(j, "v_max")) w.v_max = as_double(*v, "world.v_max");
        if (const json* v = find(j, "omega_min")) w.omega_min = as_double(*v, "world.omega_min");
        if (const json* v = find(j, "omega_max")) w.omega_max = as_double(*v, "world.omega_max");
        if (const json* v = find(j, "dt")) w.dt = as_double(*v, "world.dt");
        if (const json* v = find(j, "noise_mean")) {
            const std::vector<double> m = as_double_array(*v, "world.noise_mean");
            if (m.size() != 3) fail("world.noise_mean", "expected 3 entries");
            w.noise_mean.resize(3);
            for (int d = 0; d < 3; ++d) w.noise_mean[d] = m[static_cast<std::size_t>(d)];
        }
        if (const json* v = find(j, "noise_cov_diag")) {
            const std::vector<double> m = as_double_array(*v, "world.noise_cov_diag");
            if (m.size() != 3) fail("world.noise_cov_diag", "expected 3 entries");
            w.noise_cov = StateMatrix::Zero(3, 3);
            for (int d = 0; d < 3; ++d) w.noise_cov(d, d) = m[static_cast<std::size_t>(d)];
        }
        if (const json* v = find(j, "goal_reward"))
            w.goal_reward = as_double(*v, "world.goal_reward");
        if (const json* v = find(j, "obstacle_reward"))
            w.obstacle_reward = as_double(*v, "world.obstacle_reward");
        if (const json* v = find(j, "reward_samples"))
            w.reward_samples = as_int(*v, "world.reward_samples");
        if (const json* v = find(j, "reward_seed")) w.reward_seed = as_u64(*v, "world.reward_seed");
        return;
    }

    fail("world.type", "expected \"plane\", \"terrain\", or \"unicycle\"");
}

void parse_sampler(const json& j, ExperimentConfig& cfg) {
    if (!j.is_object()) fail("sampler", "expected an object");
    check_keys(j, "sampler",
               {"strategy", "counts", "n", "seed", "candidate_pool_size", "weight_exponent",
                "path", "start_arclength", "band_length", "band_width", "states"});
    SamplerSection& s = cfg.sampler;
    const json* strategy = find(j, "strategy");
    if (strategy == nullptr) fail("sampler.strategy", "missing");
    const std::string name = as_string(*strategy, "sampler.strategy");
    if (name == "evenly_spaced") {
        s.strategy = SamplerKind::EvenlySpaced;
    } else if (name == "uniform_random") {
        s.strategy = SamplerKind::UniformRandom;
    } else if (name == "importance") {
        s.strategy = SamplerKind::Importance;
    } else if (name == "trajectory_band") {
        s.strategy = SamplerKind::TrajectoryBand;
    } else if (name == "explicit") {
        s.strategy = SamplerKind::Explicit;
    } else {
        fail("sampler.strategy",
             "expected \"evenly_spaced\", \"uniform_random\", \"importance\", "
             "\"trajectory_band\", or \"explicit\"");
    }
    if (const json* v = find(j, "counts")) s.counts = as_int_array(*v, "sampler.counts");
    if (const json* v = find(j, "n")) s.n = as_int(*v, "sampler.n");
    if (const json* v = find(j, "seed")) s.seed = as_u64(*v, "sampler.seed");
    if (const json* v = find(j, "candidate_pool_size"))
        s.candidate_pool_size = as_int(*v, "sampler.candidate_pool_size");
    if (const json* v = find(j, "weight_exponent"))
        s.weight_exponent = as_double(*v, "sampler.weight_exponent");
    if (const json* v = find(j, "path")) {
        if (!v->is_array()) fail("sampler.path", "expected an array of [x, y] points");
        for (std::size_t i = 0; i < v->size(); ++i) {
            const std::string p = "sampler.path[" + std::to_string(i) + "]";
            const std::vector<double> pt = as_double_array((*v)[i], p);
            if (pt.size() != 2) fail(p, "expected [x, y]");
            s.path.emplace_back(pt[0], pt[1]);
        }
    }
    if (const json* v = find(j, "start_arclength"))
        s.start_arclength = as_double(*v, "sampler.start_arclength");
    if (const json* v = find(j, "band_length")) s.band_length = as_double(*v, "sampler.band_length");
    if (const json* v = find(j, "band_width")) s.band_width = as_double(*v, "sampler.band_width");
    if (const json* v = find(j, "states")) {
        if (!v->is_array()) fail("sampler.states", "expected an array of state arrays");
        for (std::size_t i = 0; i < v->size(); ++i) {
            const std::string p = "sampler.states[" + std::to_string(i) + "]";
            const std::vector<double> coords = as_double_array((*v)[i], p);
            if (coords.empty() || coords.size() > 3) fail(p, "expected 1 to 3 coordinates");
            StateVector state(static_cast<int>(coords.size()));
            for (std::size_t d = 0; d < coords.size(); ++d) {
                state[static_cast<int>(d)] = coords[d];
            }
            s.states.push_back(std::move(state));
        }
    }
}

void parse_solver(const json& j, ExperimentConfig& cfg) {
    if (!j.is_object()) fail("solver", "expected an object");
    check_keys(j, "solver",
               {"amplitude", "lengthscale", "lengthscales", "lambda", "gamma", "max_iterations"});
    SolverSection& s = cfg.solver;
    const json* single = find(j, "lengthscale");
    const json* many = find(j, "lengthscales");
    if (single != nullptr && many != nullptr) {
        fail("solver.lengthscales", "give either \"lengthscale\" or \"lengthscales\", not both");
    }
    if (single != nullptr) s.lengthscales = {as_double(*single, "solver.lengthscale")};
    if (many != nullptr) s.lengthscales = as_double_array(*many, "solver.lengthscales");
    if (const json* v = find(j, "amplitude")) s.amplitude = as_double(*v, "solver.amplitude");
    if (const json* v = find(j, "lambda")) s.lambda = as_double(*v, "solver.lambda");
    if (const json* v = find(j, "gamma")) s.gamma = as_double(*v, "solver.gamma");
    if (const json* v = find(j, "max_iterations"))
        s.max_iterations = as_int(*v, "solver.max_iterations");
    if (!(s.gamma > 0.0 && s.gamma < 1.0)) fail("solver.gamma", "expected a value in (0, 1)");
    if (s.lambda < 0.0) fail("solver.lambda", "expected a nonnegative value");
    if (s.max_iterations < 1) fail("solver.max_iterations", "expected a positive integer");
}

void parse_eval(const json& j, ExperimentConfig& cfg) {
    if (!j.is_object()) fail("eval", "expected an object");
    check_keys(j, "eval",
               {"n_start_states", "trials_per_state", "max_steps", "base_seed", "n_trajectories"});
    EvalSection& e = cfg.eval;
    if (const json* v = find(j, "n_start_states"))
        e.rollout.n_start_states = as_int(*v, "eval.n_start_states");
    if (const json* v = find(j, "trials_per_state"))
        e.rollout.trials_per_state = as_int(*v, "eval.trials_per_state");
    if (const json* v = find(j, "max_steps")) e.rollout.max_steps = as_int(*v, "eval.max_steps");
    if (const json* v = find(j, "base_seed")) {
        e.rollout.base_seed = as_u64(*v, "eval.base_seed");
        e.base_seed_set = true;
    }
    if (const json* v = find(j, "n_trajectories"))
        e.n_trajectories = as_int(*v, "eval.n_trajectories");
    if (e.n_trajectories < 0) fail("eval.n_trajectories", "expected a nonnegative integer");
    try {
        e.rollout.validate();
    } catch (const std::invalid_argument& ex) {
        fail("eval", ex.what());
    }
}

void parse_sweep(const json& j, ExperimentConfig& cfg) {
    if (!j.is_object()) fail("sweep", "expected an object");
    check_keys(j, "sweep", {"lengthscales", "lambdas"});
    if (const json* v = find(j, "lengthscales"))
        cfg.sweep.lengthscales = as_double_array(*v, "sweep.lengthscales");
    if (const json* v = find(j, "lambdas")) cfg.sweep.lambdas = as_double_array(*v, "sweep.lambdas");
    if (cfg.sweep.lengthscales.empty()) fail("sweep.lengthscales", "expected a nonempty array");
    if (cfg.sweep.lambdas.empty()) fail("sweep.lambdas", "expected a nonempty array");
}

void parse_baseline(const json& j, ExperimentConfig& cfg) {
    if (!j.is_object()) fail("baseline", "expected an object");
    check_keys(j, "baseline", {"method", "counts", "mc_samples", "seed"});
    const json* method = find(j, "method");
    if (method == nullptr) fail("baseline.method", "missing");
    const std::string name = as_string(*method, "baseline.method");
    if (name == "grid") {
        cfg.baseline.method = BaselineMethod::Grid;
    } else if (name == "direct") {
        cfg.baseline.method = BaselineMethod::Direct;
    } else {
        fail("baseline.method", "expected \"grid\" or \"direct\"");
    }
    if (const json* v = find(j, "counts")) cfg.baseline.counts = as_int_array(*v, "baseline.counts");
    if (const json* v = find(j, "mc_samples"))
        cfg.baseline.mc_samples = as_int(*v, "baseline.mc_samples");
    if (const json* v = find(j, "seed")) cfg.baseline.seed = as_u64(*v, "baseline.seed");
}

void parse_compare(const json& j, ExperimentConfig& cfg) {
    if (!j.is_object()) fail("compare", "expected an object");
    check_keys(j, "compare", {"runs"});
    const json* runs = find(j, "runs");
    if (runs == nullptr || !runs->is_array() || runs->empty()) {
        fail("compare.runs", "expected a nonempty array of {name, dir}");
    }
    for (std::size_t i = 0; i < runs->size(); ++i) {
        const std::string p = "compare.runs[" + std::to_string(i) + "]";
        const json& r = (*runs)[i];
        if (!r.is_object()) fail(p, "expected an object");
        check_keys(r, p, {"name", "dir"});
        const json* name = find(r, "name");
        const json* dir = find(r, "dir");
        if (name == nullptr) fail(p + ".name", "missing");
        if (dir == nullptr) fail(p + ".dir", "missing");
        cfg.compare_runs.push_back({as_string(*name, p + ".name"), as_string(*dir, p + ".dir")});
    }
}

void parse_output(const json& j, ExperimentConfig& cfg) {
    if (!j.is_object()) fail("output", "expected an object");
    check_keys(j, "output", {"value_grid", "policy_field"});
    if (const json* v = find(j, "value_grid"))
        cfg.output.value_grid = as_int_array(*v, "output.value_grid");
    if (const json* v = find(j, "policy_field"))
        cfg.output.policy_field = as_int_array(*v, "output.policy_field");
}

// --- seeds derived from the run seed unless given explicitly -------------

std::uint64_t effective_sampler_seed(const ExperimentConfig& cfg) {
    return cfg.sampler.seed ? *cfg.sampler.seed : seed_mix(cfg.seed, 1);
}

std::uint64_t effective_baseline_seed(const ExperimentConfig& cfg) {
    return cfg.baseline.seed ? *cfg.baseline.seed : seed_mix(cfg.seed, 3);
}

RolloutConfig effective_rollout(const ExperimentConfig& cfg) {
    RolloutConfig rc = cfg.eval.rollout;
    if (!cfg.eval.base_seed_set) rc.base_seed = seed_mix(cfg.seed, 2);
    return rc;
}

// --- artifact plumbing ----------------------------------------------------

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string());
    }
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << content;
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string());
}

void write_json(const fs::path& path, const json& j) {
    write_file_atomic(path, j.dump(2) + "\n");
}

json read_json(const fs::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(std::string("cannot open ") + what + " at " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw IoError(std::string("cannot parse ") + what + " at " + path.string() + ": " +
                      e.what());
    }
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const ExperimentConfig& cfg) {
    json versions;
    versions["ktmdp"] = kLibraryVersion;
    versions["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
                        std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION);
    versions["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH);
    json manifest;
    manifest["command"] = command;
    manifest["config_hash"] = fnv1a_hex(cfg.raw_text);
    manifest["seed"] = cfg.seed;
    manifest["versions"] = versions;
    write_json(out_dir / "manifest.json", manifest);
}

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    }
    return out;
}

std::vector<int> value_grid_counts(const ExperimentConfig& cfg, int dim) {
    std::vector<int> counts = cfg.output.value_grid;
    if (counts.empty()) counts = dim == 3 ? std::vector<int>{41, 41, 9} : std::vector<int>{101, 101};
    if (static_cast<int>(counts.size()) != dim) {
        fail("output.value_grid", "expected " + std::to_string(dim) + " entries");
    }
    for (const int c : counts) {
        if (c < 2) fail("output.value_grid", "every count must be at least 2");
    }
    return counts;
}

std::vector<int> policy_field_counts(const ExperimentConfig& cfg) {
    std::vector<int> counts = cfg.output.policy_field;
    if (counts.empty()) counts = {21, 21};
    if (counts.size() != 2) fail("output.policy_field", "expected 2 entries");
    for (const int c : counts) {
        if (c < 2) fail("output.policy_field", "every count must be at least 2");
    }
    return counts;
}

/// Dense kernel-value (or cell-value) grid over the workspace box.
void write_value_grid(const fs::path& out_dir, const ExperimentConfig& cfg,
                      const ProblemDefinition& problem,
                      const std::function<double(const StateVector&)>& value) {
    const int dim = problem.bounds.dim();
    const std::vector<int> counts = value_grid_counts(cfg, dim);
    std::vector<std::vector<double>> axes;
    for (int d = 0; d < dim; ++d) {
        axes.push_back(linspace(problem.bounds.lo[d], problem.bounds.hi[d],
                                counts[static_cast<std::size_t>(d)]));
    }
    std::string csv = dim == 3 ? "x,y,theta,value\n" : "x,y,value\n";
    StateVector s(dim);
    std::vector<int> idx(static_cast<std::size_t>(dim), 0);
    bool done = false;
    while (!done) {
        for (int d = 0; d < dim; ++d) {
            s[d] = axes[static_cast<std::size_t>(d)][static_cast<std::size_t>(
                idx[static_cast<std::size_t>(d)])];
        }
        for (int d = 0; d < dim; ++d) {
            csv += format_g17(s[d]);
            csv += ',';
        }
        csv += format_g17(value(s));
        csv += '\n';
        // Odometer increment, last dimension fastest.
        int d = dim - 1;
        while (d >= 0) {
            if (++idx[static_cast<std::size_t>(d)] <
                static_cast<int>(axes[static_cast<std::size_t>(d)].size())) {
                break;
            }
            idx[static_cast<std::size_t>(d)] = 0;
            --d;
        }
        done = d < 0;
    }
    write_file_atomic(out_dir / "value_grid.csv", csv);
}

/// Greedy mean-displacement arrows on a position grid (heading fixed to 0
/// for the unicycle).
void write_policy_field(const fs::path& out_dir, const ExperimentConfig& cfg,
                        const ProblemDefinition& problem, const MomentModel& model,
                        const ActionChooser& act, int dim) {
    const std::vector<int> counts = policy_field_counts(cfg);
    const std::vector<double> xs =
        linspace(problem.bounds.lo[0], problem.bounds.hi[0], counts[0]);
    const std::vector<double> ys =
        linspace(problem.bounds.lo[1], problem.bounds.hi[1], counts[1]);
    std::string csv = "x,y,dx,dy\n";
    for (const double x : xs) {
        for (const double y : ys) {
            const StateVector s = dim == 3 ? state3(x, y, 0.0) : state2(x, y);
            const int a = act(s);
            const TransitionMoments tm = model.moments(s, a);
            csv += format_g17(x);
            csv += ',';
            csv += format_g17(y);
            csv += ',';
            csv += format_g17(tm.mu[0]);
            csv += ',';
            csv += format_g17(tm.mu[1]);
            csv += '\n';
        }
    }
    write_file_atomic(out_dir / "policy_field.csv", csv);
}

void write_support_states(const fs::path& out_dir, const std::vector<StateVector>& states,
                          const std::vector<Region>& labels, const std::vector<int>& actions,
                          const Eigen::VectorXd& values, int dim) {
    std::string csv = dim == 3 ? "index,x,y,theta,label,action,value\n"
                               : "index,x,y,label,action,value\n";
    for (std::size_t i = 0; i < states.size(); ++i) {
        csv += std::to_string(i);
        csv += ',';
        for (int d = 0; d < dim; ++d) {
            csv += format_g17(states[i][d]);
            csv += ',';
        }
        csv += region_name(labels[i]);
        csv += ',';
        csv += std::to_string(actions[i]);
        csv += ',';
        csv += format_g17(values[static_cast<Eigen::Index>(i)]);
        csv += '\n';
    }
    write_file_atomic(out_dir / "support_states.csv", csv);
}

json report_from_solve(const SolveReport& report) {
    json j;
    j["converged"] = report.converged;
    j["cycle_detected"] = report.cycle_detected;
    j["iterations"] = report.iterations;
    j["bellman_residual"] = report.bellman_residual;
    j["policy_changes"] = report.policy_changes;
    j["mean_values"] = report.mean_values;
    j["iteration_seconds"] = report.iteration_seconds;
    return j;
}

json solution_to_json(const std::string& method, const KernelSpec& spec, double lambda,
                      double gamma, const SupportingSet& supp, const SolveResult& result) {
    json kernel;
    kernel["amplitude"] = spec.amplitude;
    kernel["lengthscales"] = std::vector<double>(spec.lengthscales.data(),
                                                 spec.lengthscales.data() + spec.dim());
    kernel["wrap"] = spec.wrap_mask.empty() ? std::vector<bool>(static_cast<std::size_t>(spec.dim()), false)
                                            : spec.wrap_mask;
    json j;
    j["method"] = method;
    j["kernel"] = kernel;
    j["lambda"] = lambda;
    j["gamma"] = gamma;
    json states = json::array();
    json labels = json::array();
    for (int i = 0; i < supp.size(); ++i) {
        const StateVector& s = supp.states[static_cast<std::size_t>(i)];
        states.push_back(std::vector<double>(s.data(), s.data() + s.size()));
        labels.push_back(region_name(supp.labels[static_cast<std::size_t>(i)]));
    }
    j["states"] = states;
    j["labels"] = labels;
    j["values"] = std::vector<double>(result.values.values.data(),
                                      result.values.values.data() + result.values.values.size());
    j["alpha"] = std::vector<double>(result.values.alpha.data(),
                                     result.values.alpha.data() + result.values.alpha.size());
    j["policy"] = result.policy.actions;
    return j;
}

struct LoadedSolution {
    std::string method;
    KernelSpec spec;          // kernel / direct methods
    double lambda = 0.0;      // kernel / direct methods
    ValueRepresentation vr;   // kernel / direct methods
    std::vector<int> counts;  // grid method
    Eigen::VectorXd grid_values;
    std::vector<int> policy;
};

LoadedSolution load_solution(const fs::path& out_dir) {
    const json j = read_json(out_dir / "solution.json", "solution");
    LoadedSolution sol;
    sol.method = j.value("method", std::string());
    sol.policy = j.value("policy", std::vector<int>());
    if (sol.method == "grid") {
        sol.counts = j.value("counts", std::vector<int>());
        const std::vector<double> values = j.value("values", std::vector<double>());
        sol.grid_values = Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                            static_cast<Eigen::Index>(values.size()));
        if (sol.counts.empty() || sol.policy.empty()) {
            throw IoError("solution at " + out_dir.string() + " is incomplete");
        }
        return sol;
    }
    if (sol.method != "kernel" && sol.method != "direct") {
        throw IoError("solution at " + out_dir.string() + " has unknown method \"" + sol.method +
                      "\"");
    }
    const json& kernel = j.at("kernel");
    const std::vector<double> lens = kernel.value("lengthscales", std::vector<double>());
    sol.spec.amplitude = kernel.value("amplitude", 1.0);
    sol.spec.lengthscales = Eigen::Map<const StateVector>(lens.data(),
                                                          static_cast<Eigen::Index>(lens.size()));
    sol.spec.wrap_mask = kernel.value("wrap", std::vector<bool>());
    sol.lambda = j.value("lambda", 0.0);
    std::vector<StateVector> states;
    for (const json& row : j.at("states")) {
        const std::vector<double> coords = row.get<std::vector<double>>();
        StateVector s(static_cast<int>(coords.size()));
        for (std::size_t d = 0; d < coords.size(); ++d) s[static_cast<int>(d)] = coords[d];
        states.push_back(std::move(s));
    }
    const std::vector<double> values = j.value("values", std::vector<double>());
    const std::vector<double> alpha = j.value("alpha", std::vector<double>());
    if (states.empty() || values.size() != states.size() || alpha.size() != states.size()) {
        throw IoError("solution at " + out_dir.string() + " is incomplete");
    }
    sol.vr.values = Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                      static_cast<Eigen::Index>(values.size()));
    sol.vr.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(),
                                                     static_cast<Eigen::Index>(alpha.size()));
    sol.vr.gram = std::make_shared<GramFactor>(build_gram(sol.spec, states, sol.lambda));
    return sol;
}

void write_eval_artifacts(const fs::path& out_dir, const ExperimentConfig& cfg,
                          const WorldBundle& world, const ActionChooser& act, int n_threads) {
    const RolloutConfig rc = effective_rollout(cfg);
    EvalDetail detail;
    const EvalStats stats =
        evaluate_policy(act, world.sim(), world.problem, rc, n_threads, &detail);

    const int dim = world.dim();
    std::string csv = dim == 3 ? "start,x,y,theta,mean_return,goal,obstacle,timeout\n"
                               : "start,x,y,mean_return,goal,obstacle,timeout\n";
    const int m = rc.trials_per_state;
    for (int i = 0; i < rc.n_start_states; ++i) {
        int c_goal = 0;
        int c_obstacle = 0;
        int c_timeout = 0;
        for (int j = 0; j < m; ++j) {
            switch (detail.outcomes[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) +
                                    static_cast<std::size_t>(j)]) {
                case Outcome::Goal: ++c_goal; break;
                case Outcome::Obstacle: ++c_obstacle; break;
                case Outcome::Timeout: ++c_timeout; break;
            }
        }
        csv += std::to_string(i);
        csv += ',';
        for (int d = 0; d < dim; ++d) {
            csv += format_g17(detail.starts[static_cast<std::size_t>(i)][d]);
            csv += ',';
        }
        csv += format_g17(detail.returns.row(i).mean());
        csv += ',';
        csv += std::to_string(c_goal);
        csv += ',';
        csv += std::to_string(c_obstacle);
        csv += ',';
        csv += std::to_string(c_timeout);
        csv += '\n';
    }
    write_file_atomic(out_dir / "eval.csv", csv);

    // Replays of trial 0 for the first starts: same stream seed as the
    // evaluated rollout, so each trajectory is the evaluated one.
    const int n_traj = std::min(cfg.eval.n_trajectories, rc.n_start_states);
    std::string traj = dim == 3 ? "trajectory,step,x,y,theta\n" : "trajectory,step,x,y\n";
    for (int i = 0; i < n_traj; ++i) {
        RandomStream rng(seed_mix(rc.base_seed, static_cast<std::uint64_t>(i), 0, 2));
        const RolloutResult rr = rollout(act, world.sim(), world.problem,
                                         detail.starts[static_cast<std::size_t>(i)], rc.max_steps,
                                         rng, true);
        for (std::size_t t = 0; t < rr.trajectory.size(); ++t) {
            traj += std::to_string(i);
            traj += ',';
            traj += std::to_string(t);
            for (int d = 0; d < dim; ++d) {
                traj += ',';
                traj += format_g17(rr.trajectory[t][d]);
            }
            traj += '\n';
        }
    }
    write_file_atomic(out_dir / "trajectories.csv", traj);

    json summary;
    summary["average_return"] = stats.average_return;
    summary["goal_fraction"] = stats.goal_fraction;
    summary["obstacle_fraction"] = stats.obstacle_fraction;
    summary["timeout_fraction"] = stats.timeout_fraction;
    summary["mean_steps"] = stats.mean_steps;
    summary["n_start_states"] = stats.n_starts;
    summary["trials_per_state"] = stats.trials_per_state;
    summary["max_steps"] = rc.max_steps;
    summary["base_seed"] = rc.base_seed;
    write_json(out_dir / "eval_summary.json", summary);
}

}  // namespace

// --- config loading -------------------------------------------------------

ExperimentConfig parse_config(const std::string& text, const std::string& base_dir) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) fail("", "expected a JSON object");
    check_keys(root, "",
               {"seed", "world", "sampler", "solver", "eval", "sweep", "baseline", "compare",
                "output"});

    ExperimentConfig cfg;
    cfg.raw_text = text;
    cfg.base_dir = base_dir;
    cfg.plane = plane_default_config();
    if (const json* v = find(root, "seed")) cfg.seed = as_u64(*v, "seed");
    if (const json* v = find(root, "solver")) parse_solver(*v, cfg);
    if (const json* v = find(root, "world")) parse_world(*v, cfg);
    if (const json* v = find(root, "sampler")) parse_sampler(*v, cfg);
    if (const json* v = find(root, "eval")) parse_eval(*v, cfg);
    if (const json* v = find(root, "sweep")) parse_sweep(*v, cfg);
    if (const json* v = find(root, "baseline")) parse_baseline(*v, cfg);
    if (const json* v = find(root, "compare")) parse_compare(*v, cfg);
    if (const json* v = find(root, "output")) parse_output(*v, cfg);

    // The discount is owned by the solver section; worlds inherit it.
    cfg.plane.gamma = cfg.solver.gamma;
    cfg.terrain.gamma = cfg.solver.gamma;
    cfg.unicycle.gamma = cfg.solver.gamma;
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const fs::path dir = fs::path(path).parent_path();
    return parse_config(buf.str(), dir.empty() ? std::string(".") : dir.string());
}

// --- world / sampler / kernel construction --------------------------------

const MomentModel& WorldBundle::model() const {
    switch (kind) {
        case WorldKind::Plane: return *plane;
        case WorldKind::Terrain: return *terrain;
        case WorldKind::Unicycle: return *unicycle;
    }
    throw std::logic_error("invalid world kind");
}

const SimulationModel& WorldBundle::sim() const {
    switch (kind) {
        case WorldKind::Plane: return *plane;
        case WorldKind::Terrain: return *terrain;
        case WorldKind::Unicycle: return *unicycle;
    }
    throw std::logic_error("invalid world kind");
}

int WorldBundle::dim() const { return problem.bounds.dim(); }

namespace {

std::shared_ptr<const Heightmap> load_heightmap_checked(const std::string& rel_path,
                                                        const std::string& base_dir) {
    const fs::path path = fs::path(rel_path).is_absolute()
                              ? fs::path(rel_path)
                              : fs::path(base_dir) / rel_path;
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open heightmap file " + path.string());
    probe.close();
    try {
        return std::make_shared<Heightmap>(load_heightmap_file(path.string()));
    } catch (const HeightmapParseError& e) {
        throw ConfigError("heightmap " + path.string() + ": " + e.what());
    }
}

}  // namespace

WorldBundle build_world(const ExperimentConfig& cfg) {
    WorldBundle bundle;
    bundle.kind = cfg.world;
    try {
        switch (cfg.world) {
            case WorldKind::Plane: {
                bundle.plane = std::make_shared<PlaneWorld>(cfg.plane);
                bundle.problem = bundle.plane->problem();
                break;
            }
            case WorldKind::Terrain: {
                TerrainConfig tc = cfg.terrain;
                tc.heightmap = load_heightmap_checked(cfg.terrain_heightmap_path, cfg.base_dir);
                bundle.terrain = std::make_shared<TerrainWorld>(std::move(tc));
                bundle.problem = bundle.terrain->problem();
                break;
            }
            case WorldKind::Unicycle: {
                UnicycleConfig uc = cfg.unicycle;
                if (!cfg.unicycle_heightmap_path.empty()) {
                    uc.heightmap =
                        load_heightmap_checked(cfg.unicycle_heightmap_path, cfg.base_dir);
                }
                bundle.unicycle = std::make_shared<UnicycleWorld>(std::move(uc));
                bundle.problem = bundle.unicycle->problem();
                break;
            }
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config error at world: ") + e.what());
    }
    return bundle;
}

std::vector<StateVector> build_supporting_states(const ExperimentConfig& cfg,
                                                 const WorldBundle& world) {
    const SamplerSection& s = cfg.sampler;
    const std::uint64_t seed = effective_sampler_seed(cfg);
    const int dim = world.dim();
    switch (s.strategy) {
        case SamplerKind::EvenlySpaced: {
            if (s.counts.empty()) fail("sampler.counts", "missing for evenly_spaced");
            if (static_cast<int>(s.counts.size()) != dim) {
                fail("sampler.counts", "expected " + std::to_string(dim) + " entries");
            }
            return evenly_spaced(world.problem.bounds, s.counts);
        }
        case SamplerKind::UniformRandom: {
            if (s.n < 2) fail("sampler.n", "expected at least 2");
            const ProblemDefinition& problem = world.problem;
            return uniform_random(problem.bounds, s.n, seed, [&problem](const StateVector& q) {
                return classify(problem, q) != Region::Obstacle;
            });
        }
        case SamplerKind::Importance: {
            if (world.kind != WorldKind::Terrain) {
                fail("sampler.strategy",
                     "importance sampling weights are slope angles and need a terrain world");
            }
            if (s.n < 2) fail("sampler.n", "expected at least 2");
            const int pool = s.candidate_pool_size > 0 ? s.candidate_pool_size : 20 * s.n;
            if (pool < s.n) fail("sampler.candidate_pool_size", "smaller than sampler.n");
            if (s.weight_exponent < 0.0) fail("sampler.weight_exponent", "expected >= 0");
            const std::vector<StateVector> candidates =
                uniform_random(world.problem.bounds, pool, seed_mix(seed, 11));
            const Heightmap& hm = *world.terrain->config().heightmap;
            std::vector<double> weights;
            weights.reserve(candidates.size());
            for (const StateVector& c : candidates) {
                weights.push_back(slope_at(hm, c[0], c[1]));
            }
            const Eigen::Vector2d g = world.terrain->config().goal.centroid();
            return importance_resample(candidates, weights, s.n, seed_mix(seed, 12),
                                       state2(g.x(), g.y()), s.weight_exponent)
                .states;
        }
        case SamplerKind::TrajectoryBand: {
            if (s.path.size() < 2) fail("sampler.path", "expected at least two points");
            if (s.n < 2) fail("sampler.n", "expected at least 2");
            return trajectory_band(s.path, s.start_arclength, s.band_length, s.band_width, s.n,
                                   seed, dim == 3)
                .states;
        }
        case SamplerKind::Explicit: {
            if (s.states.empty()) fail("sampler.states", "missing for explicit strategy");
            for (const StateVector& q : s.states) {
                if (q.size() != dim) {
                    fail("sampler.states", "state dimension does not match the world");
                }
            }
            return s.states;
        }
    }
    throw std::logic_error("invalid sampler strategy");
}

KernelSpec build_kernel_spec(const ExperimentConfig& cfg, const WorldBundle& world) {
    const int dim = world.dim();
    if (cfg.solver.lengthscales.empty()) fail("solver.lengthscale", "missing");
    KernelSpec spec;
    spec.amplitude = cfg.solver.amplitude;
    if (cfg.solver.lengthscales.size() == 1) {
        spec.lengthscales = StateVector::Constant(dim, cfg.solver.lengthscales[0]);
    } else if (static_cast<int>(cfg.solver.lengthscales.size()) == dim) {
        spec.lengthscales.resize(dim);
        for (int d = 0; d < dim; ++d) {
            spec.lengthscales[d] = cfg.solver.lengthscales[static_cast<std::size_t>(d)];
        }
    } else {
        fail("solver.lengthscales",
             "expected one value or " + std::to_string(dim) + " values");
    }
    if (world.kind == WorldKind::Unicycle) spec.wrap_mask = {false, false, true};
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        fail("solver", e.what());
    }
    return spec;
}

// --- commands ---------------------------------------------------------------

void cmd_solve(const ExperimentConfig& cfg, const std::string& out_dir, int n_threads) {
    (void)n_threads;  // the solve itself is sequential; numerics never depend on it
    const fs::path out(out_dir);
    const WorldBundle world = build_world(cfg);
    const std::vector<StateVector> states = build_supporting_states(cfg, world);
    const KernelSpec spec = build_kernel_spec(cfg, world);
    write_manifest(out, "solve", cfg);

    SolveResult result;
    SupportingSet supp;
    try {
        supp = make_supporting_set(spec, states, cfg.solver.lambda, world.problem);
        SolveOptions options;
        options.max_iterations = cfg.solver.max_iterations;
        result = policy_iteration(supp, world.model(), world.problem, options);
    } catch (const std::exception& e) {
        json report;
        report["converged"] = false;
        report["error"] = e.what();
        write_json(out / "report.json", report);
        throw;
    }

    json report = report_from_solve(result.report);
    report["method"] = "kernel";
    report["n_states"] = supp.size();
    report["lambda"] = cfg.solver.lambda;
    report["gamma"] = cfg.solver.gamma;
    report["lengthscales"] = std::vector<double>(spec.lengthscales.data(),
                                                 spec.lengthscales.data() + spec.dim());
    write_json(out / "report.json", report);
    write_json(out / "solution.json",
               solution_to_json("kernel", spec, cfg.solver.lambda, cfg.solver.gamma, supp, result));

    write_support_states(out, supp.states, supp.labels, result.policy.actions,
                         result.values.values, world.dim());
    const ValueRepresentation& vr = result.values;
    write_value_grid(out, cfg, world.problem,
                     [&vr](const StateVector& s) { return value_at(vr, s); });
    write_policy_field(out, cfg, world.problem, world.model(),
                       kernel_greedy_policy(vr, world.model(), world.problem), world.dim());

    std::cout << "solve: " << (result.report.converged ? "converged" : "did not converge")
              << " in " << result.report.iterations << " iterations, residual "
              << result.report.bellman_residual << ", artifacts in " << out_dir << "\n";
}

void cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir, int n_threads) {
    const fs::path out(out_dir);
    const WorldBundle world = build_world(cfg);
    const std::vector<StateVector> states = build_supporting_states(cfg, world);
    write_manifest(out, "sweep", cfg);

    SweepOptions options;
    options.max_iterations = cfg.solver.max_iterations;
    options.n_threads = n_threads;
    options.kernel_amplitude = cfg.solver.amplitude;
    if (cfg.world == WorldKind::Unicycle) options.wrap_mask = {false, false, true};

    const PerformanceMatrix pm =
        hyperparameter_sweep(world.model(), world.sim(), world.problem, states,
                             cfg.sweep.lengthscales, cfg.sweep.lambdas, effective_rollout(cfg),
                             options);

    std::string csv = "lengthscale,lambda,avg_return,converged,iterations,solve_seconds\n";
    for (const SweepCell& c : pm.cells) {
        csv += format_g17(c.lengthscale);
        csv += ',';
        csv += format_g17(c.lambda);
        csv += ',';
        csv += format_g17(c.average_return);
        csv += ',';
        csv += c.converged ? "1" : "0";
        csv += ',';
        csv += std::to_string(c.iterations);
        csv += ',';
        csv += format_g17(c.solve_seconds);
        csv += '\n';
    }
    write_file_atomic(out / "perf_matrix.csv", csv);

    const int best = pm.best_index();
    json summary;
    summary["cells"] = static_cast<int>(pm.cells.size());
    summary["failed_cells"] = [&pm] {
        int n = 0;
        for (const SweepCell& c : pm.cells) {
            if (!c.solved) ++n;
        }
        return n;
    }();
    if (best >= 0) {
        const SweepCell& c = pm.cells[static_cast<std::size_t>(best)];
        summary["best"] = {{"lengthscale", c.lengthscale},
                           {"lambda", c.lambda},
                           {"avg_return", c.average_return},
                           {"goal_fraction", c.goal_fraction},
                           {"converged", c.converged},
                           {"iterations", c.iterations}};
    }
    write_json(out / "sweep_summary.json", summary);

    std::cout << "sweep: " << pm.cells.size() << " cells, artifacts in " << out_dir << "\n";
}

void cmd_eval(const ExperimentConfig& cfg, const std::string& out_dir, int n_threads) {
    const fs::path out(out_dir);
    const WorldBundle world = build_world(cfg);
    const LoadedSolution sol = load_solution(out);

    ActionChooser act;
    if (sol.method == "kernel") {
        if (sol.spec.dim() != world.dim()) {
            throw ConfigError("solution dimension does not match the configured world");
        }
        act = kernel_greedy_policy(sol.vr, world.model(), world.problem);
        write_eval_artifacts(out, cfg, world, act, n_threads);
    } else if (sol.method == "direct") {
        if (world.kind != WorldKind::Plane) {
            throw ConfigError("direct-kernel solutions need a plane world");
        }
        const GaussianTransition transition = plane_gaussian_transition(world.plane->config());
        act = gaussian_greedy_policy(sol.vr, transition, world.model(), world.problem);
        write_eval_artifacts(out, cfg, world, act, n_threads);
    } else {
        GridMDP mdp;
        mdp.counts = sol.counts;
        mdp.bounds = world.problem.bounds;
        mdp.gamma = world.problem.gamma;
        mdp.centers = evenly_spaced(world.problem.bounds, sol.counts);
        for (const StateVector& c : mdp.centers) mdp.labels.push_back(classify(world.problem, c));
        if (static_cast<int>(sol.policy.size()) != mdp.n_cells()) {
            throw IoError("grid solution policy size does not match its cell count");
        }
        act = grid_cell_policy(mdp, sol.policy);
        write_eval_artifacts(out, cfg, world, act, n_threads);
    }
    std::cout << "eval: artifacts in " << out_dir << "\n";
}

namespace {

void baseline_grid(const ExperimentConfig& cfg, const fs::path& out, const WorldBundle& world,
                   int n_threads) {
    if (cfg.baseline.counts.empty()) fail("baseline.counts", "missing for the grid method");
    if (static_cast<int>(cfg.baseline.counts.size()) != world.dim()) {
        fail("baseline.counts", "expected " + std::to_string(world.dim()) + " entries");
    }
    if (cfg.baseline.mc_samples < 1) fail("baseline.mc_samples", "expected a positive integer");

    const auto t0 = std::chrono::steady_clock::now();
    const GridMDP mdp = discretize(world.sim(), world.problem, cfg.baseline.counts,
                                   cfg.baseline.mc_samples, effective_baseline_seed(cfg));
    const GridSolveResult result = grid_policy_iteration(mdp, cfg.solver.max_iterations);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json report;
    report["method"] = "grid";
    report["converged"] = result.converged;
    report["iterations"] = result.iterations;
    report["n_states"] = mdp.n_cells();
    report["mc_samples"] = cfg.baseline.mc_samples;
    report["solve_seconds"] = seconds;
    write_json(out / "report.json", report);

    json solution;
    solution["method"] = "grid";
    solution["counts"] = mdp.counts;
    solution["values"] = std::vector<double>(result.values.data(),
                                             result.values.data() + result.values.size());
    solution["policy"] = result.policy;
    write_json(out / "solution.json", solution);

    write_support_states(out, mdp.centers, mdp.labels, result.policy, result.values, world.dim());
    write_value_grid(out, cfg, world.problem, [&mdp, &result](const StateVector& s) {
        int cell = mdp.cell_index(s);
        if (cell >= mdp.n_cells()) cell = mdp.n_cells() - 1;
        return result.values[cell];
    });
    const ActionChooser act = grid_cell_policy(mdp, result.policy);
    write_policy_field(out, cfg, world.problem, world.model(), act, world.dim());
    write_eval_artifacts(out, cfg, world, act, n_threads);
}

void baseline_direct(const ExperimentConfig& cfg, const fs::path& out, const WorldBundle& world,
                     int n_threads) {
    if (world.kind != WorldKind::Plane) {
        fail("baseline.method", "the direct method needs a plane world (Gaussian transitions)");
    }
    const std::vector<StateVector> states = build_supporting_states(cfg, world);
    const KernelSpec spec = build_kernel_spec(cfg, world);
    const GaussianTransition transition = plane_gaussian_transition(world.plane->config());

    SolveResult result;
    SupportingSet supp;
    try {
        supp = make_supporting_set(spec, states, cfg.solver.lambda, world.problem);
        SolveOptions options;
        options.max_iterations = cfg.solver.max_iterations;
        result = direct_kernel_policy_iteration(supp, transition, world.model(), world.problem,
                                                options);
    } catch (const std::exception& e) {
        json report;
        report["converged"] = false;
        report["error"] = e.what();
        write_json(out / "report.json", report);
        throw;
    }

    json report = report_from_solve(result.report);
    report["method"] = "direct";
    report["n_states"] = supp.size();
    report["lambda"] = cfg.solver.lambda;
    report["gamma"] = cfg.solver.gamma;
    write_json(out / "report.json", report);
    write_json(out / "solution.json",
               solution_to_json("direct", spec, cfg.solver.lambda, cfg.solver.gamma, supp, result));

    write_support_states(out, supp.states, supp.labels, result.policy.actions,
                         result.values.values, world.dim());
    const ValueRepresentation& vr = result.values;
    write_value_grid(out, cfg, world.problem,
                     [&vr](const StateVector& s) { return value_at(vr, s); });
    const ActionChooser act = gaussian_greedy_policy(vr, transition, world.model(), world.problem);
    write_policy_field(out, cfg, world.problem, world.model(), act, world.dim());
    write_eval_artifacts(out, cfg, world, act, n_threads);
}

}  // namespace

void cmd_baseline(const ExperimentConfig& cfg, const std::string& out_dir, int n_threads) {
    const fs::path out(out_dir);
    const WorldBundle world = build_world(cfg);
    write_manifest(out, "baseline", cfg);
    if (cfg.baseline.method == BaselineMethod::Grid) {
        baseline_grid(cfg, out, world, n_threads);
    } else {
        baseline_direct(cfg, out, world, n_threads);
    }
    std::cout << "baseline: artifacts in " << out_dir << "\n";
}

void cmd_compare(const ExperimentConfig& cfg, const std::string& out_dir, int n_threads) {
    (void)n_threads;
    if (cfg.compare_runs.empty()) fail("compare.runs", "missing");
    const fs::path out(out_dir);
    write_manifest(out, "compare", cfg);

    std::string csv = "name,average_return,iterations,converged,seconds_per_iteration\n";
    for (const CompareRun& run : cfg.compare_runs) {
        const fs::path dir = fs::path(run.dir).is_absolute()
                                 ? fs::path(run.dir)
                                 : fs::path(cfg.base_dir) / run.dir;
        const json report = read_json(dir / "report.json", "report");
        const json summary = read_json(dir / "eval_summary.json", "evaluation summary");

        const int iterations = report.value("iterations", 0);
        double per_iter = 0.0;
        if (report.contains("iteration_seconds")) {
            const std::vector<double> secs =
                report["iteration_seconds"].get<std::vector<double>>();
            double total = 0.0;
            for (const double v : secs) total += v;
            if (!secs.empty()) per_iter = total / static_cast<double>(secs.size());
        } else if (iterations > 0) {
            per_iter = report.value("solve_seconds", 0.0) / iterations;
        }

        csv += run.name;
        csv += ',';
        csv += format_g17(summary.value("average_return",
                                        std::numeric_limits<double>::quiet_NaN()));
        csv += ',';
        csv += std::to_string(iterations);
        csv += ',';
        csv += report.value("converged", false) ? "1" : "0";
        csv += ',';
        csv += format_g17(per_iter);
        csv += '\n';
    }
    write_file_atomic(out / "comparison.csv", csv);
    std::cout << "compare: " << cfg.compare_runs.size() << " runs, artifacts in " << out_dir
              << "\n";
}

int run_command(const std::string& command, const std::string& config_path,
                const std::string& out_dir, std::optional<std::uint64_t> seed_override,
                int n_threads) {
    try {
        ExperimentConfig cfg = load_config(config_path);
        if (seed_override) cfg.seed = *seed_override;
        if (n_threads < 1) n_threads = 1;
        if (command == "solve") {
            cmd_solve(cfg, out_dir, n_threads);
        } else if (command == "sweep") {
            cmd_sweep(cfg, out_dir, n_threads);
        } else if (command == "eval") {
            cmd_eval(cfg, out_dir, n_threads);
        } else if (command == "baseline") {
            cmd_baseline(cfg, out_dir, n_threads);
        } else if (command == "compare") {
            cmd_compare(cfg, out_dir, n_threads);
        } else {
            throw ConfigError("unknown command \"" + command + "\"");
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const SolverError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const IllConditionedError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const HeightmapParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolver;
    }
}

}  // namespace ktmdp::cli
