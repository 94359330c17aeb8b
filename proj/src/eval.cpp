#include "ktmdp/eval.hpp"

#include "ktmdp/kernel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <utility>

namespace ktmdp {

namespace {

double region_reward(const ProblemDefinition& problem, Region region) {
    switch (region) {
        case Region::Goal:
            return problem.goal_reward;
        case Region::Obstacle:
            return problem.obstacle_reward;
        case Region::Free:
            return 0.0;
    }
    return 0.0;
}

Outcome region_outcome(Region region) {
    return region == Region::Goal ? Outcome::Goal : Outcome::Obstacle;
}

}  // namespace

void RolloutConfig::validate() const {
    if (n_start_states <= 0) {
        throw std::invalid_argument("rollout config: n_start_states must be positive");
    }
    if (trials_per_state <= 0) {
        throw std::invalid_argument("rollout config: trials_per_state must be positive");
    }
    if (max_steps <= 0) {
        throw std::invalid_argument("rollout config: max_steps must be positive");
    }
}

const char* outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Goal:
            return "goal";
        case Outcome::Obstacle:
            return "obstacle";
        case Outcome::Timeout:
            return "timeout";
    }
    return "timeout";
}

int greedy_action(const ValueRepresentation& vr, const MomentModel& model,
                  const ProblemDefinition& problem, const StateVector& s) {
    if (!vr.gram) {
        throw std::invalid_argument("greedy_action: value representation has no supporting set");
    }
    const KernelSpec& spec = vr.gram->spec();
    if (s.size() != spec.dim()) {
        throw std::invalid_argument("greedy_action: state dimension does not match the kernel");
    }
    const int q = problem.action_set.count;
    if (q <= 0) {
        throw std::invalid_argument("greedy_action: problem has no actions");
    }

    // Mirrors the improvement sweep of policy iteration term for term, so a
    // supporting state reproduces its converged policy action exactly.
    const KernelBatch batch(spec, s, vr.gram->states_matrix());
    const Eigen::VectorXd rewards = model.expected_reward_all(s, q);
    int best_a = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < q; ++a) {
        const TransitionMoments tm = model.moments(s, a);
        tm.validate();
        const double score =
            rewards[a] + problem.gamma * batch.diffusion_dot(tm.mu, tm.sigma, vr.alpha);
        if (score > best_score) {
            best_score = score;
            best_a = a;
        }
    }
    return best_a;
}

ActionChooser kernel_greedy_policy(const ValueRepresentation& vr, const MomentModel& model,
                                   const ProblemDefinition& problem) {
    return [vr, &model, &problem](const StateVector& s) {
        return greedy_action(vr, model, problem, s);
    };
}

RolloutResult rollout(const ActionChooser& act, const SimulationModel& sim,
                      const ProblemDefinition& problem, const StateVector& start, int max_steps,
                      RandomStream& rng, bool record_trajectory) {
    if (max_steps <= 0) {
        throw std::invalid_argument("rollout: max_steps must be positive");
    }
    RolloutResult out;
    if (record_trajectory) {
        out.trajectory.push_back(start);
    }
    const Region start_region = classify(problem, start);
    if (start_region != Region::Free) {
        out.discounted_return = region_reward(problem, start_region);
        out.outcome = region_outcome(start_region);
        out.steps = 0;
        return out;
    }

    StateVector s = start;
    double discount = 1.0;
    for (int t = 1; t <= max_steps; ++t) {
        const int a = act(s);
        StateVector next = sim.sample_next(s, a, rng);
        discount *= problem.gamma;
        if (record_trajectory) {
            out.trajectory.push_back(next);
        }
        const Region region = classify(problem, next);
        if (region != Region::Free) {
            out.discounted_return = discount * region_reward(problem, region);
            out.outcome = region_outcome(region);
            out.steps = t;
            return out;
        }
        s = std::move(next);
    }
    out.discounted_return = 0.0;
    out.outcome = Outcome::Timeout;
    out.steps = max_steps;
    return out;
}

std::vector<StateVector> uniform_free_starts(const ProblemDefinition& problem, int n,
                                             std::uint64_t seed) {
    if (n <= 0) {
        throw std::invalid_argument("uniform_free_starts: n must be positive");
    }
    const int dim = problem.bounds.dim();
    if (dim <= 0) {
        throw std::invalid_argument("uniform_free_starts: problem has no workspace bounds");
    }
    RandomStream stream(seed);
    std::vector<StateVector> starts;
    starts.reserve(static_cast<std::size_t>(n));
    const long long guard = 1000LL * n;
    long long attempts = 0;
    while (static_cast<int>(starts.size()) < n) {
        if (++attempts > guard) {
            throw std::runtime_error(
                "uniform_free_starts: workspace is almost entirely terminal, could not draw "
                "enough free start states");
        }
        StateVector s(dim);
        for (int d = 0; d < dim; ++d) {
            s[d] = stream.uniform(problem.bounds.lo[d], problem.bounds.hi[d]);
        }
        if (classify(problem, s) == Region::Free) {
            starts.push_back(std::move(s));
        }
    }
    return starts;
}

EvalStats evaluate_policy(const ActionChooser& act, const SimulationModel& sim,
                          const ProblemDefinition& problem, const RolloutConfig& cfg,
                          int n_threads, EvalDetail* detail) {
    cfg.validate();
    const long long total_ll =
        static_cast<long long>(cfg.n_start_states) * cfg.trials_per_state;
    if (total_ll > std::numeric_limits<int>::max()) {
        throw std::invalid_argument("evaluate_policy: n_start_states * trials_per_state overflows");
    }
    const int n = cfg.n_start_states;
    const int m = cfg.trials_per_state;
    const int total = static_cast<int>(total_ll);

    const std::vector<StateVector> starts =
        uniform_free_starts(problem, n, seed_mix(cfg.base_seed, 0, 0, 1));

    std::vector<double> returns(static_cast<std::size_t>(total), 0.0);
    std::vector<Outcome> outcomes(static_cast<std::size_t>(total), Outcome::Timeout);
    std::vector<int> steps(static_cast<std::size_t>(total), 0);

    // Each (start, trial) owns a seed derived from its indices alone, and the
    // reductions below run in a fixed order, so the statistics do not depend
    // on the worker count.
    parallel_for(total, n_threads, [&](int k) {
        const int i = k / m;
        const int j = k % m;
        RandomStream rng(seed_mix(cfg.base_seed, static_cast<std::uint64_t>(i),
                                  static_cast<std::uint64_t>(j), 2));
        const RolloutResult rr = rollout(act, sim, problem, starts[static_cast<std::size_t>(i)],
                                         cfg.max_steps, rng, false);
        returns[static_cast<std::size_t>(k)] = rr.discounted_return;
        outcomes[static_cast<std::size_t>(k)] = rr.outcome;
        steps[static_cast<std::size_t>(k)] = rr.steps;
    });

    EvalStats stats;
    stats.n_starts = n;
    stats.trials_per_state = m;
    double sum_of_means = 0.0;
    for (int i = 0; i < n; ++i) {
        double run = 0.0;
        for (int j = 0; j < m; ++j) {
            run += returns[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) +
                           static_cast<std::size_t>(j)];
        }
        sum_of_means += run / m;
    }
    stats.average_return = sum_of_means / n;

    long long n_goal = 0;
    long long n_obstacle = 0;
    long long step_sum = 0;
    for (int k = 0; k < total; ++k) {
        if (outcomes[static_cast<std::size_t>(k)] == Outcome::Goal) ++n_goal;
        if (outcomes[static_cast<std::size_t>(k)] == Outcome::Obstacle) ++n_obstacle;
        step_sum += steps[static_cast<std::size_t>(k)];
    }
    stats.goal_fraction = static_cast<double>(n_goal) / total;
    stats.obstacle_fraction = static_cast<double>(n_obstacle) / total;
    stats.timeout_fraction =
        static_cast<double>(total - n_goal - n_obstacle) / total;
    stats.mean_steps = static_cast<double>(step_sum) / total;

    if (detail != nullptr) {
        detail->starts = starts;
        detail->returns.resize(n, m);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < m; ++j) {
                detail->returns(i, j) = returns[static_cast<std::size_t>(i) *
                                                    static_cast<std::size_t>(m) +
                                                static_cast<std::size_t>(j)];
            }
        }
        detail->outcomes = std::move(outcomes);
        detail->steps = std::move(steps);
    }
    return stats;
}

double average_return(const ValueRepresentation& vr, const MomentModel& model,
                      const SimulationModel& sim, const ProblemDefinition& problem,
                      const RolloutConfig& cfg, int n_threads) {
    const ActionChooser act = kernel_greedy_policy(vr, model, problem);
    return evaluate_policy(act, sim, problem, cfg, n_threads).average_return;
}

int PerformanceMatrix::best_index() const {
    int best = -1;
    double best_return = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const SweepCell& c = cells[i];
        if (!c.solved || !std::isfinite(c.average_return)) continue;
        if (c.average_return > best_return) {
            best_return = c.average_return;
            best = static_cast<int>(i);
        }
    }
    return best;
}

PerformanceMatrix hyperparameter_sweep(const MomentModel& model, const SimulationModel& sim,
                                       const ProblemDefinition& problem,
                                       const std::vector<StateVector>& states,
                                       const std::vector<double>& lengthscales,
                                       const std::vector<double>& lambdas,
                                       const RolloutConfig& eval_cfg,
                                       const SweepOptions& options) {
    if (states.empty()) {
        throw std::invalid_argument("hyperparameter_sweep: no supporting states");
    }
    if (lengthscales.empty() || lambdas.empty()) {
        throw std::invalid_argument("hyperparameter_sweep: empty hyperparameter axis");
    }
    if (options.max_iterations <= 0) {
        throw std::invalid_argument("hyperparameter_sweep: max_iterations must be positive");
    }
    eval_cfg.validate();
    const int dim = static_cast<int>(states.front().size());

    PerformanceMatrix pm;
    pm.lengthscales = lengthscales;
    pm.lambdas = lambdas;
    pm.cells.resize(lengthscales.size() * lambdas.size());

    for (std::size_t il = 0; il < lengthscales.size(); ++il) {
        for (std::size_t im = 0; im < lambdas.size(); ++im) {
            SweepCell& cell = pm.cells[il * lambdas.size() + im];
            cell.lengthscale = lengthscales[il];
            cell.lambda = lambdas[im];
            cell.average_return = std::numeric_limits<double>::quiet_NaN();
            try {
                const KernelSpec spec = KernelSpec::isotropic(
                    options.kernel_amplitude, cell.lengthscale, dim, options.wrap_mask);
                const SupportingSet supp =
                    make_supporting_set(spec, states, cell.lambda, problem);

                SolveOptions sopt;
                sopt.max_iterations = options.max_iterations;
                const auto t0 = std::chrono::steady_clock::now();
                const SolveResult res = policy_iteration(supp, model, problem, sopt);
                cell.solve_seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                cell.converged = res.report.converged;
                cell.iterations = res.report.iterations;

                const ActionChooser act = kernel_greedy_policy(res.values, model, problem);
                const EvalStats stats =
                    evaluate_policy(act, sim, problem, eval_cfg, options.n_threads);
                cell.average_return = stats.average_return;
                cell.goal_fraction = stats.goal_fraction;
                cell.solved = true;
            } catch (const std::exception& e) {
                cell.solved = false;
                cell.converged = false;
                cell.error = e.what();
            }
        }
    }
    return pm;
}

void parallel_for(int n, int n_threads, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    const int workers = std::max(1, std::min(n_threads, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::mutex error_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (int i = w; i < n; i += workers) fn(i);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace ktmdp
