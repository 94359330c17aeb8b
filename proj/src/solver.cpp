#include "ktmdp/solver.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace ktmdp {

namespace {

double fixed_value(const ProblemDefinition& problem, Region label) {
    return label == Region::Goal ? problem.goal_value() : problem.obstacle_reward;
}

void check_policy(const SupportingSet& supp, const ProblemDefinition& problem,
                  const Policy& policy) {
    if (policy.size() != supp.size()) {
        throw std::invalid_argument("policy length does not match supporting set");
    }
    for (int a : policy.actions) {
        if (a < 0 || a >= problem.action_set.count) {
            throw std::invalid_argument("policy action index out of range");
        }
    }
}

/// Per-state kernel batches, built once per solve and shared by the
/// evaluation and improvement sweeps.
std::vector<KernelBatch> make_batches(const SupportingSet& supp) {
    std::vector<KernelBatch> batches;
    batches.reserve(static_cast<size_t>(supp.size()));
    const GramFactor& gf = *supp.gram;
    for (int i = 0; i < supp.size(); ++i) {
        batches.emplace_back(gf.spec(), supp.states[static_cast<size_t>(i)],
                             gf.states_matrix());
    }
    return batches;
}

Eigen::MatrixXd generator_with_batches(const SupportingSet& supp,
                                       const std::vector<KernelBatch>& batches,
                                       const MomentModel& model, const Policy& policy,
                                       double gamma) {
    const int n = supp.size();
    Eigen::MatrixXd gen = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        if (supp.labels[static_cast<size_t>(i)] != Region::Free) continue;
        const TransitionMoments tm = model.moments(
            supp.states[static_cast<size_t>(i)], policy.actions[static_cast<size_t>(i)]);
        tm.validate();
        gen.row(i) =
            gamma * batches[static_cast<size_t>(i)].diffusion(tm.mu, tm.sigma).transpose();
    }
    return gen;
}

ValueRepresentation evaluate_with_batches(const SupportingSet& supp,
                                          const std::vector<KernelBatch>& batches,
                                          const MomentModel& model,
                                          const ProblemDefinition& problem,
                                          const Policy& policy) {
    check_policy(supp, problem, policy);
    const int n = supp.size();
    const GramFactor& gf = *supp.gram;

    std::vector<int> free_idx;
    std::vector<int> fixed_idx;
    for (int i = 0; i < n; ++i) {
        if (supp.labels[static_cast<size_t>(i)] == Region::Free) {
            free_idx.push_back(i);
        } else {
            fixed_idx.push_back(i);
        }
    }
    const int nf = static_cast<int>(free_idx.size());

    Eigen::VectorXd values(n);
    for (int i : fixed_idx) {
        values[i] = fixed_value(problem, supp.labels[static_cast<size_t>(i)]);
    }

    if (nf > 0) {
        const Eigen::MatrixXd gen =
            generator_with_batches(supp, batches, model, policy, problem.gamma);
        // A = M (lambda I + K)^{-1} - (1-gamma) I, assembled via a
        // right-hand solve against the factorized Gram matrix.
        Eigen::MatrixXd coef = gf.solve(Eigen::MatrixXd(gen.transpose())).transpose();
        coef.diagonal().array() -= (1.0 - problem.gamma);

        Eigen::MatrixXd coef_ff(nf, nf);
        for (int r = 0; r < nf; ++r) {
            for (int c = 0; c < nf; ++c) coef_ff(r, c) = coef(free_idx[r], free_idx[c]);
        }
        Eigen::VectorXd rhs(nf);
        for (int r = 0; r < nf; ++r) {
            const int i = free_idx[r];
            double acc = -model.expected_reward(supp.states[static_cast<size_t>(i)],
                                                policy.actions[static_cast<size_t>(i)]);
            for (int j : fixed_idx) acc -= coef(i, j) * values[j];
            rhs[r] = acc;
        }

        Eigen::PartialPivLU<Eigen::MatrixXd> lu(coef_ff);
        const double rcond = lu.rcond();
        const Eigen::VectorXd sol = lu.solve(rhs);
        if (!sol.allFinite() || rcond < 1e-14) {
            std::ostringstream msg;
            msg << "policy evaluation system is singular (reciprocal condition "
                << rcond << ", lambda=" << gf.lambda() << ", lengthscales=["
                << gf.spec().lengthscales.transpose() << "], gamma=" << problem.gamma
                << ")";
            throw SolverError(msg.str());
        }
        for (int r = 0; r < nf; ++r) values[free_idx[r]] = sol[r];
    }

    ValueRepresentation vr;
    vr.values = values;
    vr.alpha = gf.solve(values);
    vr.gram = supp.gram;
    return vr;
}

std::pair<Policy, int> improve_with_batches(const SupportingSet& supp,
                                            const std::vector<KernelBatch>& batches,
                                            const MomentModel& model,
                                            const ProblemDefinition& problem,
                                            const ValueRepresentation& vr,
                                            const Policy& current) {
    check_policy(supp, problem, current);
    const int n = supp.size();
    const int q = problem.action_set.count;
    Policy next;
    next.actions.resize(static_cast<size_t>(n), 0);

    for (int i = 0; i < n; ++i) {
        const StateVector& s = supp.states[static_cast<size_t>(i)];
        const Eigen::VectorXd rewards = model.expected_reward_all(s, q);
        const KernelBatch& batch = batches[static_cast<size_t>(i)];
        int best_a = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < q; ++a) {
            const TransitionMoments tm = model.moments(s, a);
            tm.validate();
            const double score =
                rewards[a] +
                problem.gamma * batch.diffusion_dot(tm.mu, tm.sigma, vr.alpha);
            if (score > best_score) {
                best_score = score;
                best_a = a;
            }
        }
        next.actions[static_cast<size_t>(i)] = best_a;
    }
    for (int i = 0; i < n; ++i) {
        if (supp.labels[static_cast<size_t>(i)] != Region::Free) {
            next.actions[static_cast<size_t>(i)] = 0;
        }
    }

    int changed = 0;
    for (int i = 0; i < n; ++i) {
        if (next.actions[static_cast<size_t>(i)] != current.actions[static_cast<size_t>(i)]) {
            ++changed;
        }
    }
    return {std::move(next), changed};
}

double residual_with_batches(const SupportingSet& supp,
                             const std::vector<KernelBatch>& batches,
                             const MomentModel& model,
                             const ProblemDefinition& problem, const Policy& policy,
                             const ValueRepresentation& vr) {
    check_policy(supp, problem, policy);
    double total = 0.0;
    int count = 0;
    for (int i = 0; i < supp.size(); ++i) {
        if (supp.labels[static_cast<size_t>(i)] != Region::Free) continue;
        const StateVector& s = supp.states[static_cast<size_t>(i)];
        const int a = policy.actions[static_cast<size_t>(i)];
        const TransitionMoments tm = model.moments(s, a);
        const KernelBatch& batch = batches[static_cast<size_t>(i)];
        const double v = batch.kernel_values().dot(vr.alpha);
        const double lv =
            problem.gamma * batch.diffusion_dot(tm.mu, tm.sigma, vr.alpha);
        const double reward = model.expected_reward(s, a);
        total += std::abs(-reward - (lv - (1.0 - problem.gamma) * v));
        ++count;
    }
    return count > 0 ? total / count : 0.0;
}

uint64_t policy_hash(const Policy& policy) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (int a : policy.actions) {
        h ^= static_cast<uint64_t>(a) + 0x9e3779b97f4a7c15ULL;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

Eigen::MatrixXd build_generator(const SupportingSet& supp, const MomentModel& model,
                                const Policy& policy, double gamma) {
    if (policy.size() != supp.size()) {
        throw std::invalid_argument("policy length does not match supporting set");
    }
    return generator_with_batches(supp, make_batches(supp), model, policy, gamma);
}

ValueRepresentation policy_evaluation(const SupportingSet& supp,
                                      const MomentModel& model,
                                      const ProblemDefinition& problem,
                                      const Policy& policy) {
    return evaluate_with_batches(supp, make_batches(supp), model, problem, policy);
}

double value_at(const ValueRepresentation& vr, const StateVector& s) {
    const GramFactor& gf = *vr.gram;
    KernelBatch batch(gf.spec(), s, gf.states_matrix());
    return batch.kernel_values().dot(vr.alpha);
}

double value_local_operator(const ValueRepresentation& vr, const StateVector& s,
                            const StateVector& mu, const StateMatrix& sigma,
                            double gamma) {
    const GramFactor& gf = *vr.gram;
    KernelBatch batch(gf.spec(), s, gf.states_matrix());
    return gamma * batch.diffusion_dot(mu, sigma, vr.alpha);
}

std::pair<Policy, int> policy_improvement(const SupportingSet& supp,
                                          const MomentModel& model,
                                          const ProblemDefinition& problem,
                                          const ValueRepresentation& vr,
                                          const Policy& current) {
    return improve_with_batches(supp, make_batches(supp), model, problem, vr, current);
}

double bellman_residual(const SupportingSet& supp, const MomentModel& model,
                        const ProblemDefinition& problem, const Policy& policy,
                        const ValueRepresentation& vr) {
    return residual_with_batches(supp, make_batches(supp), model, problem, policy, vr);
}

SolveResult policy_iteration(const SupportingSet& supp, const MomentModel& model,
                             const ProblemDefinition& problem,
                             const SolveOptions& options) {
    if (options.max_iterations < 1) {
        throw std::invalid_argument("max_iterations must be at least 1");
    }
    Policy policy;
    if (options.initial_policy) {
        policy = *options.initial_policy;
        check_policy(supp, problem, policy);
    } else {
        policy.actions.assign(static_cast<size_t>(supp.size()), 0);
    }

    const std::vector<KernelBatch> batches = make_batches(supp);

    SolveResult best;
    double best_residual = std::numeric_limits<double>::infinity();
    std::vector<std::pair<uint64_t, Policy>> history;
    history.emplace_back(policy_hash(policy), policy);

    SolveReport report;
    using clock = std::chrono::steady_clock;
    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        const auto t0 = clock::now();
        ValueRepresentation vr =
            evaluate_with_batches(supp, batches, model, problem, policy);
        auto [next, changed] =
            improve_with_batches(supp, batches, model, problem, vr, policy);
        const double residual =
            residual_with_batches(supp, batches, model, problem, next, vr);
        const auto t1 = clock::now();

        report.iterations = iter;
        report.policy_changes.push_back(changed);
        report.iteration_seconds.push_back(
            std::chrono::duration<double>(t1 - t0).count());
        report.mean_values.push_back(vr.values.size() > 0 ? vr.values.mean() : 0.0);

        if (residual < best_residual) {
            best_residual = residual;
            best.policy = policy;
            best.values = vr;
        }

        if (changed == 0) {
            report.converged = true;
            report.bellman_residual = residual;
            return SolveResult{std::move(policy), std::move(vr), std::move(report)};
        }

        const uint64_t h = policy_hash(next);
        for (const auto& [seen_hash, seen_policy] : history) {
            if (seen_hash == h && seen_policy == next) {
                report.cycle_detected = true;
                report.bellman_residual = best_residual;
                best.report = std::move(report);
                return best;
            }
        }
        history.emplace_back(h, next);
        policy = std::move(next);
    }

    report.bellman_residual = best_residual;
    best.report = std::move(report);
    return best;
}

}  // namespace ktmdp
