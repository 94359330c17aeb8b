#include "ktmdp/baselines.hpp"
#include "ktmdp/envs.hpp"
#include "ktmdp/kernel.hpp"
#include "ktmdp/sampling.hpp"
#include "ktmdp/solver.hpp"

#include "doctest.h"
#include "mock_model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace ktmdp;

namespace {

double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }

/// Analytic mass a N(mean, std^2 I) next state puts into the rectangle.
double gaussian_rect_mass(const Eigen::Vector2d& mean, double std, double x0, double x1,
                          double y0, double y1) {
    const double mx = (normal_cdf((x1 - mean.x()) / std) - normal_cdf((x0 - mean.x()) / std));
    const double my = (normal_cdf((y1 - mean.y()) / std) - normal_cdf((y0 - mean.y()) / std));
    return mx * my;
}

PlaneConfig open_plane(double noise_std) {
    PlaneConfig cfg;
    cfg.bounds.lo = state2(0.0, 0.0);
    cfg.bounds.hi = state2(3.0, 3.0);
    // Degenerate goal in a corner no cell center or sample region hits.
    cfg.goal = GoalRegion::rectangle({-1.0, -0.5, -1.0, -0.5});
    cfg.noise_std = noise_std;
    return cfg;
}

}  // namespace

TEST_CASE("gaussian_expected_kernel closed form") {
    SUBCASE("zero covariance reduces to a point evaluation") {
        const KernelSpec spec = KernelSpec::isotropic(1.3, 0.7, 2);
        std::mt19937_64 eng(5);
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        for (int k = 0; k < 20; ++k) {
            const StateVector mean = state2(u(eng), u(eng));
            const StateVector sj = state2(u(eng), u(eng));
            const double got = gaussian_expected_kernel(spec, mean, StateMatrix::Zero(2, 2), sj);
            CHECK(got == doctest::Approx(kernel_eval(spec, mean, sj)).epsilon(1e-12));
        }
    }
    SUBCASE("covariance equal to the kernel metric gives c * 2^(-d/2)") {
        for (int d : {1, 2, 3}) {
            const double ell = 0.9;
            const KernelSpec spec = KernelSpec::isotropic(2.0, ell, d);
            const StateVector s = StateVector::Constant(d, 0.4);
            const StateMatrix cov = ell * ell * StateMatrix::Identity(d, d);
            const double got = gaussian_expected_kernel(spec, s, cov, s);
            CHECK(got == doctest::Approx(2.0 * std::pow(2.0, -0.5 * d)).epsilon(1e-12));
        }
    }
    SUBCASE("matches Monte Carlo for full covariances") {
        std::mt19937_64 eng(99);
        std::normal_distribution<double> z(0.0, 1.0);
        std::uniform_real_distribution<double> u(-1.5, 1.5);
        for (int trial = 0; trial < 5; ++trial) {
            const int d = 1 + trial % 3;
            KernelSpec spec;
            spec.amplitude = 1.0 + 0.3 * trial;
            spec.lengthscales = StateVector::Constant(d, 0.6 + 0.2 * trial);
            spec.wrap_mask.assign(static_cast<std::size_t>(d), false);

            Eigen::MatrixXd chol = Eigen::MatrixXd::Zero(d, d);
            for (int i = 0; i < d; ++i) {
                for (int j = 0; j <= i; ++j) chol(i, j) = 0.4 * z(eng);
                chol(i, i) = std::abs(chol(i, i)) + 0.1;
            }
            const StateMatrix cov = chol * chol.transpose();
            StateVector mean(d), sj(d);
            for (int i = 0; i < d; ++i) {
                mean[i] = u(eng);
                sj[i] = u(eng);
            }

            const long n = 200000;
            double sum = 0.0, sum_sq = 0.0;
            for (long k = 0; k < n; ++k) {
                Eigen::VectorXd zz(d);
                for (int i = 0; i < d; ++i) zz[i] = z(eng);
                const StateVector x = mean + StateVector(chol * zz);
                const double v = kernel_eval(spec, x, sj);
                sum += v;
                sum_sq += v * v;
            }
            const double mc = sum / n;
            const double se = std::sqrt((sum_sq / n - mc * mc) / n);
            const double got = gaussian_expected_kernel(spec, mean, cov, sj);
            CHECK(std::abs(got - mc) <= 4.0 * se + 1e-12);
        }
    }
    SUBCASE("monotone decreasing in the mean distance") {
        const KernelSpec spec = KernelSpec::isotropic(1.0, 1.0, 2);
        const StateMatrix cov = 0.3 * StateMatrix::Identity(2, 2);
        const StateVector sj = state2(0.0, 0.0);
        double prev = gaussian_expected_kernel(spec, state2(0.0, 0.0), cov, sj);
        for (double dist : {0.5, 1.0, 2.0, 3.5}) {
            const double v = gaussian_expected_kernel(spec, state2(dist, 0.0), cov, sj);
            CHECK(v < prev);
            prev = v;
        }
    }
    SUBCASE("input validation") {
        const KernelSpec spec = KernelSpec::isotropic(1.0, 1.0, 2);
        KernelSpec wrapped = spec;
        wrapped.wrap_mask = {false, true};
        const StateMatrix ok = StateMatrix::Identity(2, 2);
        CHECK_THROWS_AS(
            gaussian_expected_kernel(wrapped, state2(0, 0), ok, state2(1, 1)),
            std::invalid_argument);

        StateMatrix asym = ok;
        asym(0, 1) = 0.5;
        CHECK_THROWS_AS(gaussian_expected_kernel(spec, state2(0, 0), asym, state2(1, 1)),
                        std::invalid_argument);

        const StateMatrix indef = -0.5 * StateMatrix::Identity(2, 2);
        CHECK_THROWS_AS(gaussian_expected_kernel(spec, state2(0, 0), indef, state2(1, 1)),
                        std::invalid_argument);

        CHECK_THROWS_AS(gaussian_expected_kernel(spec, StateVector::Zero(3),
                                                 StateMatrix::Identity(3, 3), StateVector::Zero(3)),
                        std::invalid_argument);
    }
}

TEST_CASE("discretize bins transitions onto the lattice") {
    SUBCASE("zero noise puts unit mass on the waypoint's cell") {
        PlaneConfig cfg = open_plane(0.0);
        PlaneWorld world(cfg);
        const GridMDP mdp = discretize(world, world.problem(), {3, 3}, 50, 7);
        REQUIRE(mdp.n_cells() == 9);
        for (int i = 0; i < mdp.n_cells(); ++i) {
            if (mdp.labels[static_cast<std::size_t>(i)] != Region::Free) continue;
            for (int a = 0; a < mdp.n_actions(); ++a) {
                const StateVector wp = world.waypoint(mdp.centers[static_cast<std::size_t>(i)], a);
                const int target = mdp.cell_index(wp);
                CHECK(mdp.transitions[static_cast<std::size_t>(a)](i, target) == 1.0);
            }
        }
    }
    SUBCASE("rows are stochastic") {
        PlaneWorld world(plane_default_config());
        const GridMDP mdp = discretize(world, world.problem(), {4, 4}, 200, 3);
        for (int a = 0; a < mdp.n_actions(); ++a) {
            const auto& p = mdp.transitions[static_cast<std::size_t>(a)];
            for (int i = 0; i < mdp.n_cells(); ++i) {
                CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
                CHECK(p.row(i).minCoeff() >= 0.0);
            }
        }
    }
    SUBCASE("known Gaussian matches analytic cell masses") {
        PlaneConfig cfg = open_plane(0.35);
        PlaneWorld world(cfg);
        const int m = 20000;
        const GridMDP mdp = discretize(world, world.problem(), {3, 3}, m, 11);

        const int i = mdp.cell_index(state2(1.5, 1.5));  // center cell
        REQUIRE(mdp.labels[static_cast<std::size_t>(i)] == Region::Free);
        for (int a : {0, 2, 5, 9}) {
            const StateVector wp = world.waypoint(mdp.centers[static_cast<std::size_t>(i)], a);
            const Eigen::Vector2d mean(wp[0], wp[1]);
            double in_bounds = 0.0;
            for (int cx = 0; cx < 3; ++cx) {
                for (int cy = 0; cy < 3; ++cy) {
                    const int j = cx * 3 + cy;
                    const double mass = gaussian_rect_mass(mean, cfg.noise_std, cx * 1.0,
                                                           cx + 1.0, cy * 1.0, cy + 1.0);
                    const double se = std::sqrt(std::max(mass * (1.0 - mass), 1e-9) / m);
                    CHECK(std::abs(mdp.transitions[static_cast<std::size_t>(a)](i, j) - mass) <=
                          4.0 * se);
                    in_bounds += mass;
                }
            }
            const double oob = 1.0 - in_bounds;
            const double se = std::sqrt(std::max(oob * (1.0 - oob), 1e-9) / m);
            CHECK(std::abs(mdp.transitions[static_cast<std::size_t>(a)](i, 9) - oob) <= 4.0 * se);
        }
    }
    SUBCASE("terminal cells are absorbing") {
        PlaneWorld world(plane_default_config());
        const GridMDP mdp = discretize(world, world.problem(), {5, 5}, 100, 1);
        bool saw_goal = false, saw_obstacle = false;
        for (int i = 0; i < mdp.n_cells(); ++i) {
            const Region label = mdp.labels[static_cast<std::size_t>(i)];
            if (label == Region::Free) continue;
            saw_goal = saw_goal || label == Region::Goal;
            saw_obstacle = saw_obstacle || label == Region::Obstacle;
            for (int a = 0; a < mdp.n_actions(); ++a) {
                CHECK(mdp.transitions[static_cast<std::size_t>(a)](i, i) == 1.0);
            }
        }
        CHECK(saw_goal);
        CHECK(saw_obstacle);
    }
    SUBCASE("cell_index handles boundaries") {
        PlaneWorld world(open_plane(0.1));
        const GridMDP mdp = discretize(world, world.problem(), {3, 3}, 10, 1);
        CHECK(mdp.cell_index(state2(3.0, 3.0)) == 8);   // upper corner -> last cell
        CHECK(mdp.cell_index(state2(0.0, 0.0)) == 0);
        CHECK(mdp.cell_index(state2(3.01, 1.0)) == 9);  // pseudo-cell
        CHECK(mdp.cell_index(state2(1.0, -0.2)) == 9);
        // Flattening matches the evenly spaced lattice ordering.
        const auto lattice = evenly_spaced(mdp.bounds, {3, 3});
        for (int i = 0; i < 9; ++i) {
            CHECK(mdp.cell_index(lattice[static_cast<std::size_t>(i)]) == i);
            CHECK((mdp.centers[static_cast<std::size_t>(i)] - lattice[static_cast<std::size_t>(i)])
                      .norm() == 0.0);
        }
    }
}

TEST_CASE("grid policy iteration solves tabular problems exactly") {
    SUBCASE("single absorbing goal cell is worth the pinned goal value") {
        GridMDP mdp;
        mdp.centers = {StateVector::Constant(1, 0.5)};
        mdp.labels = {Region::Goal};
        mdp.counts = {1};
        mdp.bounds.lo = StateVector::Constant(1, 0.0);
        mdp.bounds.hi = StateVector::Constant(1, 1.0);
        mdp.gamma = 0.9;
        mdp.goal_value = 1.0 / (1.0 - 0.9);
        mdp.obstacle_value = -1.0;
        mdp.transitions = {Eigen::MatrixXd::Zero(1, 2)};
        mdp.transitions[0](0, 0) = 1.0;
        mdp.rewards = Eigen::MatrixXd::Constant(1, 1, 1.0);

        const GridSolveResult res = grid_policy_iteration(mdp);
        CHECK(res.converged);
        CHECK(res.iterations == 1);
        CHECK(res.values[0] == doctest::Approx(10.0).epsilon(1e-9));
    }
    SUBCASE("two-cell chain matches the hand solve") {
        GridMDP mdp;
        mdp.centers = {StateVector::Constant(1, 0.5), StateVector::Constant(1, 1.5)};
        mdp.labels = {Region::Free, Region::Goal};
        mdp.counts = {2};
        mdp.bounds.lo = StateVector::Constant(1, 0.0);
        mdp.bounds.hi = StateVector::Constant(1, 2.0);
        mdp.gamma = 0.9;
        mdp.goal_value = 1.0 / (1.0 - 0.9);
        mdp.obstacle_value = -1.0;
        // Action 0: stay. Action 1: step into the goal cell.
        mdp.transitions = {Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(2, 3)};
        mdp.transitions[0](0, 0) = 1.0;
        mdp.transitions[0](1, 1) = 1.0;
        mdp.transitions[1](0, 1) = 1.0;
        mdp.transitions[1](1, 1) = 1.0;
        mdp.rewards = Eigen::MatrixXd::Zero(2, 2);
        mdp.rewards(0, 1) = 1.0;  // entering the goal

        const GridSolveResult res = grid_policy_iteration(mdp);
        CHECK(res.converged);
        CHECK(res.policy[0] == 1);
        // V0 = 1 + gamma * goal_value, solved by hand.
        CHECK(res.values[0] == doctest::Approx(1.0 + 0.9 / (1.0 - 0.9)).epsilon(1e-12));
        CHECK(res.values[1] == mdp.goal_value);
    }
    SUBCASE("identical actions keep the lowest index") {
        GridMDP mdp;
        mdp.centers = {StateVector::Constant(1, 0.5), StateVector::Constant(1, 1.5)};
        mdp.labels = {Region::Free, Region::Goal};
        mdp.counts = {2};
        mdp.bounds.lo = StateVector::Constant(1, 0.0);
        mdp.bounds.hi = StateVector::Constant(1, 2.0);
        mdp.gamma = 0.9;
        mdp.goal_value = 10.0;
        mdp.obstacle_value = -1.0;
        Eigen::MatrixXd step = Eigen::MatrixXd::Zero(2, 3);
        step(0, 1) = 1.0;
        step(1, 1) = 1.0;
        mdp.transitions = {step, step, step};
        mdp.rewards = Eigen::MatrixXd::Ones(2, 3);

        const GridSolveResult res = grid_policy_iteration(mdp);
        CHECK(res.converged);
        CHECK(res.policy[0] == 0);
    }
    SUBCASE("converged policy is greedy with respect to its own values") {
        PlaneWorld world(plane_default_config());
        const GridMDP mdp = discretize(world, world.problem(), {6, 6}, 400, 21);
        const GridSolveResult res = grid_policy_iteration(mdp);
        REQUIRE(res.converged);

        for (int i = 0; i < mdp.n_cells(); ++i) {
            if (mdp.labels[static_cast<std::size_t>(i)] != Region::Free) continue;
            double best = -1e300;
            for (int a = 0; a < mdp.n_actions(); ++a) {
                const auto& p = mdp.transitions[static_cast<std::size_t>(a)];
                const double q = mdp.rewards(i, a) +
                                 mdp.gamma * (p.row(i).head(mdp.n_cells()).dot(res.values) +
                                              p(i, mdp.n_cells()) * mdp.obstacle_value);
                best = std::max(best, q);
            }
            const auto& p =
                mdp.transitions[static_cast<std::size_t>(res.policy[static_cast<std::size_t>(i)])];
            const double chosen =
                mdp.rewards(i, res.policy[static_cast<std::size_t>(i)]) +
                mdp.gamma * (p.row(i).head(mdp.n_cells()).dot(res.values) +
                             p(i, mdp.n_cells()) * mdp.obstacle_value);
            CHECK(chosen >= best - 1e-12);
        }
    }
}

TEST_CASE("plane_gaussian_transition exposes the exact transition law") {
    const PlaneConfig cfg = plane_default_config();
    PlaneWorld world(cfg);
    const GaussianTransition trans = plane_gaussian_transition(cfg);
    const StateVector s = state2(2.2, 6.6);
    for (int a = 0; a < cfg.action_count; ++a) {
        const auto [mean, cov] = trans(s, a);
        CHECK((mean - world.waypoint(s, a)).norm() == 0.0);
        CHECK((cov - 0.04 * StateMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
    }
    CHECK_THROWS_AS(trans(s, cfg.action_count), std::invalid_argument);
}

namespace {

/// Small 1D instance with exactly Gaussian transitions: action 0 drifts
/// right, action 1 drifts left; states at and beyond 1.75 are the goal.
struct DirectFixture {
    ProblemDefinition problem;
    SupportingSet supp;
    mocks::TableModel rewards;
    GaussianTransition transition;

    DirectFixture() {
        problem.gamma = 0.9;
        problem.bounds.lo = StateVector::Constant(1, -5.0);
        problem.bounds.hi = StateVector::Constant(1, 5.0);
        problem.action_set.count = 2;
        problem.action_set.generator = [](const StateVector& s, int a) {
            StateVector next = s;
            next[0] += (a == 0 ? 0.3 : -0.3);
            return next;
        };
        problem.region_classifier = [](const StateVector& s) {
            return s[0] >= 1.75 ? Region::Goal : Region::Free;
        };

        std::vector<StateVector> states;
        for (double x : {0.0, 0.5, 1.0, 1.5, 2.0}) states.push_back(StateVector::Constant(1, x));
        supp = make_supporting_set(KernelSpec::isotropic(1.0, 0.8, 1), states, 0.3, problem);

        rewards.states = states;
        rewards.rewards = {{0.05, 0.0}, {0.1, 0.02}, {0.3, 0.05}, {0.8, 0.1}, {0.0, 0.0}};
        rewards.table.assign(states.size(), std::vector<TransitionMoments>(2));

        transition = [](const StateVector& s, int a) {
            StateVector mean = s;
            mean[0] += (a == 0 ? 0.3 : -0.3);
            StateMatrix cov = 0.04 * StateMatrix::Identity(1, 1);
            return std::pair<StateVector, StateMatrix>(mean, cov);
        };
    }
};

}  // namespace

TEST_CASE("direct kernel policy iteration") {
    SUBCASE("single goal state is pinned exactly") {
        ProblemDefinition prob;
        prob.gamma = 0.9;
        prob.bounds.lo = StateVector::Constant(1, -5.0);
        prob.bounds.hi = StateVector::Constant(1, 5.0);
        prob.action_set.count = 1;
        prob.region_classifier = [](const StateVector&) { return Region::Goal; };

        SupportingSet supp = make_supporting_set(
            KernelSpec::isotropic(1.0, 1.0, 1), {StateVector::Zero(1)}, 0.5, prob);
        mocks::UniformModel model;
        const GaussianTransition trans = [](const StateVector& s, int) {
            return std::pair<StateVector, StateMatrix>(s, StateMatrix::Zero(1, 1));
        };
        const SolveResult res = direct_kernel_policy_iteration(supp, trans, model, prob);
        CHECK(res.report.converged);
        CHECK(res.values.values[0] == prob.goal_value());
    }
    SUBCASE("one evaluation matches an independently assembled row-replacement system") {
        DirectFixture fx;
        Policy pi;
        pi.actions = {0, 1, 0, 1, 0};
        SolveOptions opts;
        opts.max_iterations = 1;
        opts.initial_policy = pi;
        const SolveResult res =
            direct_kernel_policy_iteration(fx.supp, fx.transition, fx.rewards, fx.problem, opts);

        const int n = fx.supp.size();
        const KernelSpec& spec = fx.supp.gram->spec();
        Eigen::MatrixXd gram(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                gram(i, j) = kernel_eval(spec, fx.supp.states[static_cast<std::size_t>(i)],
                                         fx.supp.states[static_cast<std::size_t>(j)]);
            }
        }
        const Eigen::MatrixXd ginv =
            (0.3 * Eigen::MatrixXd::Identity(n, n) + gram).inverse();

        Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd rhs(n);
        for (int i = 0; i < n; ++i) {
            if (fx.supp.labels[static_cast<std::size_t>(i)] == Region::Goal) {
                rhs[i] = fx.problem.goal_value();
                continue;
            }
            const auto [mean, cov] =
                fx.transition(fx.supp.states[static_cast<std::size_t>(i)],
                              pi.actions[static_cast<std::size_t>(i)]);
            Eigen::RowVectorXd p(n);
            for (int j = 0; j < n; ++j) {
                p[j] = gaussian_expected_kernel(spec, mean, cov,
                                                fx.supp.states[static_cast<std::size_t>(j)]);
            }
            system.row(i) -= fx.problem.gamma * p * ginv;
            rhs[i] = fx.rewards.rewards[static_cast<std::size_t>(i)]
                                       [static_cast<std::size_t>(pi.actions[static_cast<std::size_t>(i)])];
        }
        const Eigen::VectorXd oracle = Eigen::FullPivLU<Eigen::MatrixXd>(system).solve(rhs);

        for (int i = 0; i < n; ++i) {
            CHECK(res.values.values[i] == doctest::Approx(oracle[i]).epsilon(1e-10));
        }
        CHECK(res.values.values[4] == fx.problem.goal_value());
    }
    SUBCASE("zero covariance reduces to deterministic kernel policy iteration") {
        DirectFixture fx;
        fx.transition = [](const StateVector& s, int a) {
            StateVector mean = s;
            mean[0] += (a == 0 ? 0.3 : -0.3);
            return std::pair<StateVector, StateMatrix>(mean, StateMatrix::Zero(1, 1));
        };
        Policy pi;
        pi.actions = {1, 0, 1, 0, 0};
        SolveOptions opts;
        opts.max_iterations = 1;
        opts.initial_policy = pi;
        const SolveResult res =
            direct_kernel_policy_iteration(fx.supp, fx.transition, fx.rewards, fx.problem, opts);

        const int n = fx.supp.size();
        const KernelSpec& spec = fx.supp.gram->spec();
        Eigen::MatrixXd gram(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                gram(i, j) = kernel_eval(spec, fx.supp.states[static_cast<std::size_t>(i)],
                                         fx.supp.states[static_cast<std::size_t>(j)]);
            }
        }
        const Eigen::MatrixXd ginv =
            (0.3 * Eigen::MatrixXd::Identity(n, n) + gram).inverse();
        Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd rhs(n);
        for (int i = 0; i < n; ++i) {
            if (fx.supp.labels[static_cast<std::size_t>(i)] == Region::Goal) {
                rhs[i] = fx.problem.goal_value();
                continue;
            }
            StateVector mean = fx.supp.states[static_cast<std::size_t>(i)];
            mean[0] += (pi.actions[static_cast<std::size_t>(i)] == 0 ? 0.3 : -0.3);
            Eigen::RowVectorXd p(n);
            for (int j = 0; j < n; ++j) {
                // Point-mass expectation: a plain kernel evaluation.
                p[j] = kernel_eval(spec, mean, fx.supp.states[static_cast<std::size_t>(j)]);
            }
            system.row(i) -= fx.problem.gamma * p * ginv;
            rhs[i] = fx.rewards.rewards[static_cast<std::size_t>(i)]
                                       [static_cast<std::size_t>(pi.actions[static_cast<std::size_t>(i)])];
        }
        const Eigen::VectorXd oracle = Eigen::FullPivLU<Eigen::MatrixXd>(system).solve(rhs);
        for (int i = 0; i < n; ++i) {
            CHECK(res.values.values[i] == doctest::Approx(oracle[i]).epsilon(1e-10));
        }
    }
    SUBCASE("full run converges and reports consistently") {
        DirectFixture fx;
        const SolveResult res =
            direct_kernel_policy_iteration(fx.supp, fx.transition, fx.rewards, fx.problem);
        CHECK(res.report.converged);
        CHECK(res.report.iterations <= 20);
        CHECK(static_cast<int>(res.report.policy_changes.size()) == res.report.iterations);
        CHECK(res.report.policy_changes.back() == 0);
        CHECK(res.policy.actions[4] == 0);  // goal state forced to action 0
        CHECK(res.values.values.allFinite());
        // Values never exceed the pinned goal value on this reward scale.
        CHECK(res.values.values.maxCoeff() <= fx.problem.goal_value() + 1e-9);
    }
}
