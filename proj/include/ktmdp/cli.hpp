#pragma once

#include "ktmdp/baselines.hpp"
#include "ktmdp/envs.hpp"
#include "ktmdp/eval.hpp"
#include "ktmdp/kernel.hpp"
#include "ktmdp/mdp_core.hpp"
#include "ktmdp/solver.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

/// Experiment driver: config parsing, world/sampler construction, and the
/// five commands (solve, sweep, eval, baseline, compare) that emit
/// deterministic CSV/JSON artifacts into an output directory.
namespace ktmdp::cli {

/// Invalid configuration content (schema violations, unknown keys, bad
/// values). Messages carry the offending config path such as
/// "world.noise_std".
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Filesystem failures: unreadable inputs, unwritable outputs.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Process exit codes for the command-line harness.
enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitSolver = 3,
    kExitIo = 4,
};

enum class WorldKind { Plane, Terrain, Unicycle };

enum class SamplerKind { EvenlySpaced, UniformRandom, Importance, TrajectoryBand, Explicit };

struct SamplerSection {
    SamplerKind strategy = SamplerKind::EvenlySpaced;
    std::vector<int> counts;                   // lattice strategy
    int n = 100;                               // random strategies
    std::optional<std::uint64_t> seed;         // default: derived from the run seed
    int candidate_pool_size = 0;               // importance; 0 means 20*n
    double weight_exponent = 1.0;              // importance
    std::vector<Eigen::Vector2d> path;         // trajectory band
    double start_arclength = 0.0;              // trajectory band
    double band_length = 6.0;                  // trajectory band
    double band_width = 2.0;                   // trajectory band
    std::vector<StateVector> states;           // explicit strategy
};

struct SolverSection {
    double amplitude = 1.0;
    std::vector<double> lengthscales;  // one value is applied isotropically
    double lambda = 1.0;
    double gamma = 0.9;
    int max_iterations = 100;
};

struct SweepSection {
    std::vector<double> lengthscales = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
    std::vector<double> lambdas = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
};

enum class BaselineMethod { Grid, Direct };

struct BaselineSection {
    BaselineMethod method = BaselineMethod::Grid;
    std::vector<int> counts;                // grid discretization
    int mc_samples = 1000;                  // grid transition estimation
    std::optional<std::uint64_t> seed;      // default: derived from the run seed
};

struct CompareRun {
    std::string name;
    std::string dir;
};

struct EvalSection {
    RolloutConfig rollout;
    bool base_seed_set = false;  // false: derived from the run seed
    int n_trajectories = 20;     // exported to trajectories.csv
};

struct OutputSection {
    std::vector<int> value_grid;    // defaults by world dimension
    std::vector<int> policy_field;  // defaults by world dimension
};

struct ExperimentConfig {
    std::uint64_t seed = 0;

    WorldKind world = WorldKind::Plane;
    PlaneConfig plane;
    TerrainConfig terrain;
    UnicycleConfig unicycle;
    std::string terrain_heightmap_path;    // resolved against base_dir when built
    std::string unicycle_heightmap_path;   // optional

    SamplerSection sampler;
    SolverSection solver;
    EvalSection eval;
    SweepSection sweep;
    BaselineSection baseline;
    std::vector<CompareRun> compare_runs;
    OutputSection output;

    std::string raw_text;  // exact config bytes, hashed into the manifest
    std::string base_dir;  // directory of the config file, for relative paths
};

/// Parses and schema-validates config text. Unknown keys anywhere are
/// rejected with their path. `base_dir` resolves relative file references
/// (heightmaps, comparison run directories).
ExperimentConfig parse_config(const std::string& text, const std::string& base_dir);

/// parse_config on a file's contents; the file's directory becomes base_dir.
ExperimentConfig load_config(const std::string& path);

/// A constructed world behind the two model interfaces the solver and the
/// rollout harness need.
struct WorldBundle {
    WorldKind kind = WorldKind::Plane;
    std::shared_ptr<PlaneWorld> plane;
    std::shared_ptr<TerrainWorld> terrain;
    std::shared_ptr<UnicycleWorld> unicycle;
    ProblemDefinition problem;

    const MomentModel& model() const;
    const SimulationModel& sim() const;
    int dim() const;
};

WorldBundle build_world(const ExperimentConfig& cfg);

/// Supporting states per the sampler section. For the importance strategy
/// the weights are the terrain slope angles at the candidates.
std::vector<StateVector> build_supporting_states(const ExperimentConfig& cfg,
                                                 const WorldBundle& world);

/// Kernel from the solver section: per-dimension lengthscales (or one value
/// broadcast) with the heading dimension wrapped for the unicycle world.
KernelSpec build_kernel_spec(const ExperimentConfig& cfg, const WorldBundle& world);

/// Commands. Each writes its artifact set into out_dir (created if absent)
/// and throws ConfigError / IoError / SolverError on failure; cmd_solve and
/// cmd_baseline additionally record solver failures in report.json before
/// rethrowing. All numeric artifact content is byte-identical across reruns
/// and thread counts; wall-clock fields (iteration_seconds, solve_seconds)
/// are the only exception.
void cmd_solve(const ExperimentConfig& cfg, const std::string& out_dir, int n_threads);
void cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir, int n_threads);
void cmd_eval(const ExperimentConfig& cfg, const std::string& out_dir, int n_threads);
void cmd_baseline(const ExperimentConfig& cfg, const std::string& out_dir, int n_threads);
void cmd_compare(const ExperimentConfig& cfg, const std::string& out_dir, int n_threads);

/// Dispatches one command by name, mapping all failures to an ExitCode and
/// printing the diagnostic to stderr. This is the whole CLI behind flag
/// parsing.
int run_command(const std::string& command, const std::string& config_path,
                const std::string& out_dir, std::optional<std::uint64_t> seed_override,
                int n_threads);

}  // namespace ktmdp::cli
