#include "ktmdp/baselines.hpp"

#include "ktmdp/sampling.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ktmdp {

namespace {

double fixed_cell_value(const GridMDP& mdp, int cell) {
    if (cell == mdp.n_cells()) return mdp.obstacle_value;  // pseudo-cell
    switch (mdp.labels[static_cast<std::size_t>(cell)]) {
        case Region::Goal: return mdp.goal_value;
        case Region::Obstacle: return mdp.obstacle_value;
        case Region::Free: break;
    }
    throw std::logic_error("fixed_cell_value called on a free cell");
}

}  // namespace

int GridMDP::cell_index(const StateVector& s) const {
    if (!bounds.contains(s)) return n_cells();
    int flat = 0;
    for (int d = 0; d < bounds.dim(); ++d) {
        const int n = counts[static_cast<std::size_t>(d)];
        const double width = (bounds.hi[d] - bounds.lo[d]) / n;
        int idx = static_cast<int>((s[d] - bounds.lo[d]) / width);
        idx = std::clamp(idx, 0, n - 1);
        flat = flat * n + idx;
    }
    return flat;
}

GridMDP discretize(const SimulationModel& sim, const ProblemDefinition& problem,
                   const std::vector<int>& counts, int mc_samples, std::uint64_t seed) {
    if (mc_samples < 1) throw std::invalid_argument("mc_samples must be >= 1");
    GridMDP mdp;
    mdp.counts = counts;
    mdp.bounds = problem.bounds;
    mdp.gamma = problem.gamma;
    mdp.goal_value = problem.goal_value();
    mdp.obstacle_value = problem.obstacle_reward;
    mdp.centers = evenly_spaced(problem.bounds, counts);

    const int c_total = mdp.n_cells();
    const int q = problem.action_set.count;
    mdp.labels.reserve(static_cast<std::size_t>(c_total));
    for (const StateVector& s : mdp.centers) mdp.labels.push_back(classify(problem, s));

    // Reward of entering each column (cells plus the pseudo-cell).
    Eigen::VectorXd rho(c_total + 1);
    for (int j = 0; j < c_total; ++j) {
        switch (mdp.labels[static_cast<std::size_t>(j)]) {
            case Region::Goal: rho[j] = problem.goal_reward; break;
            case Region::Obstacle: rho[j] = problem.obstacle_reward; break;
            case Region::Free: rho[j] = 0.0; break;
        }
    }
    rho[c_total] = problem.obstacle_reward;

    mdp.transitions.assign(static_cast<std::size_t>(q),
                           Eigen::MatrixXd::Zero(c_total, c_total + 1));
    mdp.rewards = Eigen::MatrixXd::Zero(c_total, q);

    for (int i = 0; i < c_total; ++i) {
        if (mdp.labels[static_cast<std::size_t>(i)] != Region::Free) {
            for (int a = 0; a < q; ++a) {
                mdp.transitions[static_cast<std::size_t>(a)](i, i) = 1.0;
                mdp.rewards(i, a) = rho[i];
            }
            continue;
        }
        for (int a = 0; a < q; ++a) {
            RandomStream rng(seed_mix(seed, static_cast<std::uint64_t>(i),
                                      static_cast<std::uint64_t>(a)));
            Eigen::VectorXd row = Eigen::VectorXd::Zero(c_total + 1);
            for (int k = 0; k < mc_samples; ++k) {
                const StateVector next =
                    sim.sample_next(mdp.centers[static_cast<std::size_t>(i)], a, rng);
                row[mdp.cell_index(next)] += 1.0;
            }
            row /= static_cast<double>(mc_samples);
            mdp.transitions[static_cast<std::size_t>(a)].row(i) = row.transpose();
            mdp.rewards(i, a) = row.dot(rho);
        }
    }
    return mdp;
}

GridSolveResult grid_policy_iteration(const GridMDP& mdp, int max_iterations) {
    const int c_total = mdp.n_cells();
    const int q = mdp.n_actions();
    if (c_total == 0 || q == 0) throw std::invalid_argument("empty grid MDP");

    std::vector<int> free_cells;
    for (int i = 0; i < c_total; ++i) {
        if (mdp.labels[static_cast<std::size_t>(i)] == Region::Free) free_cells.push_back(i);
    }
    const int n_free = static_cast<int>(free_cells.size());

    GridSolveResult result;
    result.policy.assign(static_cast<std::size_t>(c_total), 0);
    result.values = Eigen::VectorXd::Zero(c_total);
    for (int i = 0; i < c_total; ++i) {
        if (mdp.labels[static_cast<std::size_t>(i)] != Region::Free) {
            result.values[i] = fixed_cell_value(mdp, i);
        }
    }

    // Expected continuation of one row: gamma * (P V + P_oob * V_oob).
    auto continuation = [&](int cell, int action, const Eigen::VectorXd& values) {
        const auto& p = mdp.transitions[static_cast<std::size_t>(action)];
        return mdp.gamma * (p.row(cell).head(c_total).dot(values) +
                            p(cell, c_total) * mdp.obstacle_value);
    };

    for (int it = 1; it <= max_iterations; ++it) {
        result.iterations = it;

        // Evaluation: dense solve over free cells with fixed cells pinned.
        if (n_free > 0) {
            Eigen::MatrixXd a_ff = Eigen::MatrixXd::Identity(n_free, n_free);
            Eigen::VectorXd rhs(n_free);
            for (int fi = 0; fi < n_free; ++fi) {
                const int i = free_cells[static_cast<std::size_t>(fi)];
                const int act = result.policy[static_cast<std::size_t>(i)];
                const auto& p = mdp.transitions[static_cast<std::size_t>(act)];
                double fixed_part = p(i, c_total) * mdp.obstacle_value;
                for (int j = 0; j < c_total; ++j) {
                    if (mdp.labels[static_cast<std::size_t>(j)] == Region::Free) continue;
                    fixed_part += p(i, j) * fixed_cell_value(mdp, j);
                }
                for (int fj = 0; fj < n_free; ++fj) {
                    a_ff(fi, fj) -= mdp.gamma * p(i, free_cells[static_cast<std::size_t>(fj)]);
                }
                rhs[fi] = mdp.rewards(i, act) + mdp.gamma * fixed_part;
            }
            const Eigen::VectorXd v_free = Eigen::PartialPivLU<Eigen::MatrixXd>(a_ff).solve(rhs);
            for (int fi = 0; fi < n_free; ++fi) {
                result.values[free_cells[static_cast<std::size_t>(fi)]] = v_free[fi];
            }
        }

        // Improvement: greedy with lowest-index tie-break.
        int changed = 0;
        for (int i : free_cells) {
            int best = 0;
            double best_q = mdp.rewards(i, 0) + continuation(i, 0, result.values);
            for (int a = 1; a < q; ++a) {
                const double qa = mdp.rewards(i, a) + continuation(i, a, result.values);
                if (qa > best_q) {
                    best_q = qa;
                    best = a;
                }
            }
            if (best != result.policy[static_cast<std::size_t>(i)]) {
                result.policy[static_cast<std::size_t>(i)] = best;
                ++changed;
            }
        }
        if (changed == 0) {
            result.converged = true;
            return result;
        }
    }
    return result;
}

double gaussian_expected_kernel(const KernelSpec& spec, const StateVector& mean,
                                const StateMatrix& cov, const StateVector& s_j) {
    spec.validate();
    const int d = spec.dim();
    if (mean.size() != d || s_j.size() != d || cov.rows() != d || cov.cols() != d) {
        throw std::invalid_argument("gaussian_expected_kernel: dimension mismatch");
    }
    for (bool wrapped : spec.wrap_mask) {
        if (wrapped) {
            throw std::invalid_argument(
                "gaussian_expected_kernel requires flat dimensions; wrapped kernels have no "
                "closed-form Gaussian expectation");
        }
    }
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
        throw std::invalid_argument("covariance must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(cov)};
    if (es.eigenvalues().minCoeff() < -1e-9) {
        throw std::invalid_argument("covariance must be positive semidefinite");
    }

    const Eigen::VectorXd diff = mean - s_j;
    double lengthscale_det = 1.0;
    for (int i = 0; i < d; ++i) lengthscale_det *= spec.lengthscales[i] * spec.lengthscales[i];

    Eigen::MatrixXd total = cov;
    for (int i = 0; i < d; ++i) total(i, i) += spec.lengthscales[i] * spec.lengthscales[i];
    Eigen::LLT<Eigen::MatrixXd> llt(total);
    if (llt.info() != Eigen::Success) {
        throw std::runtime_error("gaussian_expected_kernel: Sigma + cov is not positive definite");
    }
    double total_det = 1.0;
    const Eigen::MatrixXd l_factor = llt.matrixL();
    for (int i = 0; i < d; ++i) total_det *= l_factor(i, i) * l_factor(i, i);

    const double q = diff.dot(llt.solve(diff));
    return spec.amplitude * std::sqrt(lengthscale_det / total_det) * std::exp(-0.5 * q);
}

GaussianTransition plane_gaussian_transition(const PlaneConfig& cfg) {
    return [radius = cfg.waypoint_radius, count = cfg.action_count,
            var = cfg.noise_std * cfg.noise_std](const StateVector& s, int action) {
        if (action < 0 || action >= count) {
            throw std::invalid_argument("action index outside the plane world's action set");
        }
        const double angle = 2.0 * std::numbers::pi * action / count;
        StateVector mean = state2(s[0] + radius * std::cos(angle), s[1] + radius * std::sin(angle));
        StateMatrix cov = var * StateMatrix::Identity(2, 2);
        return std::pair<StateVector, StateMatrix>(std::move(mean), std::move(cov));
    };
}

namespace {

/// Evaluation step of the direct method: exact Gaussian Bellman expectation
/// through the kernel representation, fixed rows substituted out.
ValueRepresentation direct_evaluation(const SupportingSet& supp,
                                      const GaussianTransition& transition,
                                      const MomentModel& rewards,
                                      const ProblemDefinition& problem, const Policy& policy) {
    const GramFactor& gf = *supp.gram;
    const int n = supp.size();
    const double gamma = problem.gamma;

    std::vector<int> free_idx;
    Eigen::VectorXd values = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        switch (supp.labels[static_cast<std::size_t>(i)]) {
            case Region::Free: free_idx.push_back(i); break;
            case Region::Goal: values[i] = problem.goal_value(); break;
            case Region::Obstacle: values[i] = problem.obstacle_reward; break;
        }
    }
    const int n_free = static_cast<int>(free_idx.size());

    if (n_free > 0) {
        Eigen::MatrixXd expect(n_free, n);
        Eigen::VectorXd reward(n_free);
        for (int fi = 0; fi < n_free; ++fi) {
            const int i = free_idx[static_cast<std::size_t>(fi)];
            const StateVector& s = supp.states[static_cast<std::size_t>(i)];
            const int act = policy.actions[static_cast<std::size_t>(i)];
            const auto [mean, cov] = transition(s, act);
            for (int j = 0; j < n; ++j) {
                expect(fi, j) = gaussian_expected_kernel(
                    gf.spec(), mean, cov, supp.states[static_cast<std::size_t>(j)]);
            }
            reward[fi] = rewards.expected_reward(s, act);
        }

        // coef = P (lambda I + K)^{-1}; the Gram factor solve is symmetric.
        const Eigen::MatrixXd expect_t = expect.transpose();
        const Eigen::MatrixXd coef = gf.solve(expect_t).transpose();

        Eigen::MatrixXd a_ff = Eigen::MatrixXd::Identity(n_free, n_free);
        Eigen::VectorXd rhs = reward;
        for (int fi = 0; fi < n_free; ++fi) {
            double fixed_part = 0.0;
            int fj = 0;
            for (int j = 0; j < n; ++j) {
                if (fj < n_free && free_idx[static_cast<std::size_t>(fj)] == j) {
                    a_ff(fi, fj) -= gamma * coef(fi, j);
                    ++fj;
                } else {
                    fixed_part += coef(fi, j) * values[j];
                }
            }
            rhs[fi] += gamma * fixed_part;
        }

        Eigen::PartialPivLU<Eigen::MatrixXd> lu(a_ff);
        const double rcond = lu.rcond();
        const Eigen::VectorXd v_free = lu.solve(rhs);
        if (!v_free.allFinite() || rcond < 1e-14) {
            std::ostringstream msg;
            msg << "direct kernel policy evaluation is ill-conditioned: rcond=" << rcond
                << ", lambda=" << gf.lambda() << ", gamma=" << gamma
                << "; increase the regularizer or space the supporting states";
            throw SolverError(msg.str());
        }
        for (int fi = 0; fi < n_free; ++fi) values[free_idx[static_cast<std::size_t>(fi)]] = v_free[fi];
    }

    ValueRepresentation vr;
    vr.values = values;
    vr.alpha = gf.solve(values);
    vr.gram = supp.gram;
    return vr;
}

/// Expected next value under an exact Gaussian transition.
double direct_expected_value(const SupportingSet& supp, const ValueRepresentation& vr,
                             const StateVector& mean, const StateMatrix& cov) {
    const KernelSpec& spec = supp.gram->spec();
    double acc = 0.0;
    for (int j = 0; j < supp.size(); ++j) {
        acc += gaussian_expected_kernel(spec, mean, cov, supp.states[static_cast<std::size_t>(j)]) *
               vr.alpha[j];
    }
    return acc;
}

std::pair<Policy, int> direct_improvement(const SupportingSet& supp,
                                          const GaussianTransition& transition,
                                          const MomentModel& rewards,
                                          const ProblemDefinition& problem,
                                          const ValueRepresentation& vr, const Policy& current) {
    const int n = supp.size();
    const int q = problem.action_set.count;
    Policy next;
    next.actions.assign(static_cast<std::size_t>(n), 0);
    int changed = 0;
    for (int i = 0; i < n; ++i) {
        if (supp.labels[static_cast<std::size_t>(i)] != Region::Free) continue;
        const StateVector& s = supp.states[static_cast<std::size_t>(i)];
        const Eigen::VectorXd reward = rewards.expected_reward_all(s, q);
        int best = 0;
        double best_obj = 0.0;
        for (int a = 0; a < q; ++a) {
            const auto [mean, cov] = transition(s, a);
            const double obj =
                reward[a] + problem.gamma * direct_expected_value(supp, vr, mean, cov);
            if (a == 0 || obj > best_obj) {
                best_obj = obj;
                best = a;
            }
        }
        next.actions[static_cast<std::size_t>(i)] = best;
    }
    for (int i = 0; i < n; ++i) {
        if (next.actions[static_cast<std::size_t>(i)] != current.actions[static_cast<std::size_t>(i)]) {
            ++changed;
        }
    }
    return {std::move(next), changed};
}

double direct_residual(const SupportingSet& supp, const GaussianTransition& transition,
                       const MomentModel& rewards, const ProblemDefinition& problem,
                       const Policy& policy, const ValueRepresentation& vr) {
    double acc = 0.0;
    int n_free = 0;
    for (int i = 0; i < supp.size(); ++i) {
        if (supp.labels[static_cast<std::size_t>(i)] != Region::Free) continue;
        const StateVector& s = supp.states[static_cast<std::size_t>(i)];
        const int act = policy.actions[static_cast<std::size_t>(i)];
        const auto [mean, cov] = transition(s, act);
        const double lhs = vr.values[i];
        const double rhs = rewards.expected_reward(s, act) +
                           problem.gamma * direct_expected_value(supp, vr, mean, cov);
        acc += std::abs(lhs - rhs);
        ++n_free;
    }
    return n_free ? acc / n_free : 0.0;
}

}  // namespace

SolveResult direct_kernel_policy_iteration(const SupportingSet& supp,
                                           const GaussianTransition& transition,
                                           const MomentModel& rewards,
                                           const ProblemDefinition& problem,
                                           const SolveOptions& options) {
    if (!supp.gram) throw std::invalid_argument("supporting set has no Gram factorization");
    if (supp.size() == 0) throw std::invalid_argument("empty supporting set");
    if (problem.action_set.count < 1) throw std::invalid_argument("problem has no actions");

    const int n = supp.size();
    Policy policy;
    if (options.initial_policy) {
        policy = *options.initial_policy;
        if (policy.size() != n) throw std::invalid_argument("initial policy size mismatch");
        for (int a : policy.actions) {
            if (a < 0 || a >= problem.action_set.count) {
                throw std::invalid_argument("initial policy has an out-of-range action");
            }
        }
    } else {
        policy.actions.assign(static_cast<std::size_t>(n), 0);
    }

    SolveResult best;
    double best_residual = std::numeric_limits<double>::infinity();
    std::vector<Policy> history{policy};
    SolveReport report;

    for (int it = 1; it <= options.max_iterations; ++it) {
        const auto t0 = std::chrono::steady_clock::now();
        ValueRepresentation vr = direct_evaluation(supp, transition, rewards, problem, policy);
        auto [next, changed] = direct_improvement(supp, transition, rewards, problem, vr, policy);
        const double residual = direct_residual(supp, transition, rewards, problem, next, vr);
        const auto t1 = std::chrono::steady_clock::now();

        report.iterations = it;
        report.policy_changes.push_back(changed);
        report.iteration_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
        report.mean_values.push_back(vr.values.mean());

        if (residual < best_residual) {
            best_residual = residual;
            best.policy = policy;
            best.values = vr;
        }

        if (changed == 0) {
            report.converged = true;
            report.bellman_residual = residual;
            return {std::move(policy), std::move(vr), std::move(report)};
        }
        if (std::find(history.begin(), history.end(), next) != history.end()) {
            report.cycle_detected = true;
            report.bellman_residual = best_residual;
            best.report = std::move(report);
            return best;
        }
        history.push_back(next);
        policy = std::move(next);
    }

    report.bellman_residual = best_residual;
    best.report = std::move(report);
    return best;
}

ActionChooser grid_cell_policy(const GridMDP& mdp, std::vector<int> actions) {
    if (static_cast<int>(actions.size()) != mdp.n_cells()) {
        throw std::invalid_argument("grid policy size does not match the cell count");
    }
    return [&mdp, actions = std::move(actions)](const StateVector& s) {
        int cell = mdp.cell_index(s);
        if (cell >= mdp.n_cells()) cell = mdp.n_cells() - 1;
        return actions[static_cast<std::size_t>(cell)];
    };
}

ActionChooser gaussian_greedy_policy(const ValueRepresentation& vr,
                                     const GaussianTransition& transition,
                                     const MomentModel& rewards,
                                     const ProblemDefinition& problem) {
    if (!vr.gram) throw std::invalid_argument("value representation has no supporting set");
    return [vr, &transition, &rewards, &problem](const StateVector& s) {
        const int q = problem.action_set.count;
        const Eigen::VectorXd reward = rewards.expected_reward_all(s, q);
        const KernelSpec& spec = vr.gram->spec();
        const std::vector<StateVector>& states = vr.gram->states();
        int best = 0;
        double best_obj = 0.0;
        for (int a = 0; a < q; ++a) {
            const auto [mean, cov] = transition(s, a);
            double ev = 0.0;
            for (std::size_t j = 0; j < states.size(); ++j) {
                ev += gaussian_expected_kernel(spec, mean, cov, states[j]) *
                      vr.alpha[static_cast<Eigen::Index>(j)];
            }
            const double obj = reward[a] + problem.gamma * ev;
            if (a == 0 || obj > best_obj) {
                best_obj = obj;
                best = a;
            }
        }
        return best;
    };
}

}  // namespace ktmdp
