#include "ktmdp/solver.hpp"

#include "doctest.h"
#include "mock_model.hpp"
#include "oracles.hpp"

#include <Eigen/LU>

#include <cmath>
#include <cstring>
#include <random>

using namespace ktmdp;

namespace {

StateVector vec1(double x) { return StateVector::Constant(1, x); }

TransitionMoments mom1(double mu, double var) {
    TransitionMoments tm;
    tm.mu = vec1(mu);
    tm.sigma = StateMatrix::Constant(1, 1, var + mu * mu);
    return tm;
}

struct Draw {
    std::mt19937_64 eng;
    explicit Draw(uint64_t seed) : eng(seed) {}
    double uniform(double lo, double hi) {
        const double u = static_cast<double>(eng() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }
};

// Random table instance over n 1D states laid out on a unit grid.
mocks::TableModel random_table(Draw& rng, int n, int actions) {
    mocks::TableModel model;
    for (int i = 0; i < n; ++i) model.states.push_back(vec1(static_cast<double>(i)));
    model.table.resize(static_cast<size_t>(n));
    model.rewards.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < actions; ++a) {
            model.table[static_cast<size_t>(i)].push_back(
                mom1(rng.uniform(-0.8, 0.8), rng.uniform(0.01, 0.4)));
            model.rewards[static_cast<size_t>(i)].push_back(rng.uniform(-1.0, 1.0));
        }
    }
    return model;
}

// Brute-force assembly of the full evaluation system: full matrix inverse,
// fixed rows replaced by unit equations, dense solve. Used as the
// independent oracle for policy_evaluation.
Eigen::VectorXd brute_force_evaluation(const SupportingSet& supp,
                                       const mocks::TableModel& model,
                                       const ProblemDefinition& prob,
                                       const Policy& policy) {
    const int n = supp.size();
    const KernelSpec& spec = supp.gram->spec();
    Eigen::MatrixXd gram(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            gram(i, j) = kernel_eval(spec, supp.states[static_cast<size_t>(i)],
                                     supp.states[static_cast<size_t>(j)]);
        }
    }
    Eigen::MatrixXd reg = gram;
    reg.diagonal().array() += supp.gram->lambda();

    Eigen::MatrixXd gen = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        if (supp.labels[static_cast<size_t>(i)] != Region::Free) continue;
        const TransitionMoments tm =
            model.table[static_cast<size_t>(i)]
                       [static_cast<size_t>(policy.actions[static_cast<size_t>(i)])];
        for (int j = 0; j < n; ++j) {
            gen(i, j) = prob.gamma * kernel_diffusion(
                                         spec, supp.states[static_cast<size_t>(i)],
                                         supp.states[static_cast<size_t>(j)], tm.mu,
                                         tm.sigma);
        }
    }

    Eigen::MatrixXd coef = gen * reg.inverse();
    coef.diagonal().array() -= (1.0 - prob.gamma);
    Eigen::VectorXd rhs(n);
    for (int i = 0; i < n; ++i) {
        if (supp.labels[static_cast<size_t>(i)] == Region::Free) {
            rhs[i] = -model.rewards[static_cast<size_t>(i)][static_cast<size_t>(
                policy.actions[static_cast<size_t>(i)])];
        } else {
            coef.row(i).setZero();
            coef(i, i) = 1.0;
            rhs[i] = supp.labels[static_cast<size_t>(i)] == Region::Goal
                         ? prob.goal_value()
                         : prob.obstacle_reward;
        }
    }
    return Eigen::FullPivLU<Eigen::MatrixXd>(coef).solve(rhs);
}

}  // namespace

TEST_CASE("generator matrix closed forms") {
    SUBCASE("null moments give the zero matrix") {
        ProblemDefinition prob = mocks::free_problem_1d(1);
        mocks::UniformModel model;
        model.tm.mu = vec1(0.0);
        model.tm.sigma = StateMatrix::Zero(1, 1);
        KernelSpec spec = KernelSpec::isotropic(1.0, 1.0, 1);
        SupportingSet supp =
            make_supporting_set(spec, {vec1(0.0), vec1(1.0), vec1(2.5)}, 0.5, prob);
        Policy pol;
        pol.actions = {0, 0, 0};
        const Eigen::MatrixXd gen = build_generator(supp, model, pol, prob.gamma);
        CHECK(gen.cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("single free state with unit moments") {
        ProblemDefinition prob;
        prob.gamma = 0.9;
        prob.bounds.lo = StateVector::Constant(2, -10.0);
        prob.bounds.hi = StateVector::Constant(2, 10.0);
        prob.action_set.count = 1;
        prob.region_classifier = [](const StateVector&) { return Region::Free; };
        mocks::UniformModel model;
        model.tm.mu = StateVector::Zero(2);
        model.tm.sigma = StateMatrix::Identity(2, 2);
        KernelSpec spec = KernelSpec::isotropic(1.0, 1.0, 2);
        SupportingSet supp = make_supporting_set(spec, {StateVector::Zero(2)}, 0.1, prob);
        Policy pol;
        pol.actions = {0};
        const Eigen::MatrixXd gen = build_generator(supp, model, pol, prob.gamma);
        REQUIRE(gen.rows() == 1);
        CHECK(gen(0, 0) == doctest::Approx(-0.9).epsilon(1e-14));
    }

    SUBCASE("entries match the finite-difference operator on column kernels") {
        Draw rng(0x5EED);
        ProblemDefinition prob = mocks::free_problem_1d(2);
        mocks::TableModel model = random_table(rng, 5, 2);
        KernelSpec spec = KernelSpec::isotropic(1.0, 1.3, 1);
        SupportingSet supp = make_supporting_set(spec, model.states, 0.5, prob);
        Policy pol;
        pol.actions = {1, 0, 1, 1, 0};
        const Eigen::MatrixXd gen = build_generator(supp, model, pol, prob.gamma);
        for (int i = 0; i < 5; ++i) {
            const TransitionMoments tm =
                model.table[static_cast<size_t>(i)]
                           [static_cast<size_t>(pol.actions[static_cast<size_t>(i)])];
            for (int j = 0; j < 5; ++j) {
                const StateVector s_j = supp.states[static_cast<size_t>(j)];
                const auto column_kernel = [&](const Eigen::VectorXd& x) {
                    return kernel_eval(spec, StateVector(x), s_j);
                };
                const double fd =
                    prob.gamma *
                    oracles::fd_diffusion_operator(
                        column_kernel, supp.states[static_cast<size_t>(i)],
                        Eigen::VectorXd(tm.mu), Eigen::MatrixXd(tm.sigma), 1e-5, 1e-4);
                CHECK(gen(i, j) ==
                      doctest::Approx(fd).epsilon(1e-4).scale(std::max(1.0, std::abs(fd))));
            }
        }
    }

    SUBCASE("goal and obstacle rows are zeroed") {
        ProblemDefinition prob = mocks::free_problem_1d(1);
        prob.region_classifier = [](const StateVector& s) {
            if (s[0] > 1.5) return Region::Goal;
            if (s[0] < -1.5) return Region::Obstacle;
            return Region::Free;
        };
        mocks::UniformModel model;
        model.tm = mom1(0.3, 0.1);
        KernelSpec spec = KernelSpec::isotropic(1.0, 1.0, 1);
        SupportingSet supp =
            make_supporting_set(spec, {vec1(-2.0), vec1(0.0), vec1(2.0)}, 0.5, prob);
        Policy pol;
        pol.actions = {0, 0, 0};
        const Eigen::MatrixXd gen = build_generator(supp, model, pol, prob.gamma);
        CHECK(gen.row(0).cwiseAbs().maxCoeff() == 0.0);
        CHECK(gen.row(2).cwiseAbs().maxCoeff() == 0.0);
        CHECK(gen.row(1).cwiseAbs().maxCoeff() > 0.0);
    }
}

TEST_CASE("policy evaluation closed forms") {
    SUBCASE("single goal state gets the geometric-series value") {
        ProblemDefinition prob = mocks::free_problem_1d(1);
        prob.region_classifier = [](const StateVector&) { return Region::Goal; };
        mocks::UniformModel model;
        model.tm = mom1(0.0, 0.0);
        KernelSpec spec = KernelSpec::isotropic(1.0, 1.0, 1);
        SupportingSet supp = make_supporting_set(spec, {vec1(0.0)}, 0.0, prob);
        Policy pol;
        pol.actions = {0};
        const ValueRepresentation vr = policy_evaluation(supp, model, prob, pol);
        CHECK(vr.values[0] == prob.goal_value());  // exact fixed row
        CHECK(vr.values[0] == doctest::Approx(10.0).epsilon(1e-9));
    }

    SUBCASE("null moments reduce to immediate discounted reward") {
        ProblemDefinition prob = mocks::free_problem_1d(1);
        mocks::TableModel model;
        model.states = {vec1(0.0), vec1(1.0), vec1(2.0)};
        model.table.resize(3, {mom1(0.0, 0.0)});
        model.rewards = {{0.4}, {-0.2}, {1.0}};
        KernelSpec spec = KernelSpec::isotropic(1.0, 1.0, 1);
        SupportingSet supp = make_supporting_set(spec, model.states, 0.0, prob);
        Policy pol;
        pol.actions = {0, 0, 0};
        const ValueRepresentation vr = policy_evaluation(supp, model, prob, pol);
        CHECK(vr.values[0] == doctest::Approx(4.0).epsilon(1e-12));
        CHECK(vr.values[1] == doctest::Approx(-2.0).epsilon(1e-12));
        CHECK(vr.values[2] == doctest::Approx(10.0).epsilon(1e-12));
    }

    SUBCASE("matches the brute-force assembly oracle") {
        Draw rng(0xFACE);
        ProblemDefinition prob = mocks::free_problem_1d(2);
        prob.region_classifier = [](const StateVector& s) {
            if (s[0] > 1.5 && s[0] < 2.5) return Region::Goal;
            if (s[0] < -1.5) return Region::Obstacle;
            return Region::Free;
        };
        for (int trial = 0; trial < 5; ++trial) {
            mocks::TableModel model;
            model.states = {vec1(-2.0), vec1(0.0), vec1(1.0), vec1(2.0), vec1(3.0)};
            model.table.resize(5);
            model.rewards.resize(5);
            for (int i = 0; i < 5; ++i) {
                for (int a = 0; a < 2; ++a) {
                    model.table[static_cast<size_t>(i)].push_back(
                        mom1(rng.uniform(-0.8, 0.8), rng.uniform(0.01, 0.4)));
                    model.rewards[static_cast<size_t>(i)].push_back(
                        rng.uniform(-1.0, 1.0));
                }
            }
            KernelSpec spec = KernelSpec::isotropic(1.0, 1.2, 1);
            SupportingSet supp = make_supporting_set(spec, model.states, 0.3, prob);
            REQUIRE(supp.labels[0] == Region::Obstacle);
            REQUIRE(supp.labels[3] == Region::Goal);
            Policy pol;
            pol.actions = {0, 1, 0, 1, 0};
            const ValueRepresentation vr = policy_evaluation(supp, model, prob, pol);
            const Eigen::VectorXd oracle =
                brute_force_evaluation(supp, model, prob, pol);
            CHECK((vr.values - oracle).norm() / oracle.norm() < 1e-10);
            // Fixed rows hold exactly, not merely to solver tolerance.
            CHECK(vr.values[3] == prob.goal_value());
            CHECK(vr.values[0] == prob.obstacle_reward);
            // The weights reproduce the values through the Gram system.
            CHECK((supp.gram->apply(vr.alpha) - vr.values).norm() /
                      vr.values.norm() <
                  1e-8);
        }
    }

    SUBCASE("singular system reports condition and hyperparameters") {
        // Drift magnitude bisected offline so the free-row system loses rank.
        const double mu_star = 0.172052868939186;
        ProblemDefinition prob = mocks::free_problem_1d(1, 0.95);
        mocks::TableModel model;
        model.states = {vec1(0.0), vec1(1.0)};
        model.table = {{mom1(mu_star, 0.01)}, {mom1(-mu_star, 0.01)}};
        model.rewards = {{0.3}, {0.3}};
        KernelSpec spec = KernelSpec::isotropic(1.0, 1.0, 1);
        SupportingSet supp = make_supporting_set(spec, model.states, 0.0, prob);
        Policy pol;
        pol.actions = {0, 0};
        try {
            (void)policy_evaluation(supp, model, prob, pol);
            FAIL("expected a solver error");
        } catch (const SolverError& e) {
            const std::string what = e.what();
            CHECK(what.find("condition") != std::string::npos);
            CHECK(what.find("lambda") != std::string::npos);
            CHECK(what.find("gamma") != std::string::npos);
        }
    }
}

TEST_CASE("value queries") {
    Draw rng(0xCAFE);
    ProblemDefinition prob = mocks::free_problem_1d(1);
    KernelSpec spec = KernelSpec::isotropic(1.0, 1.1, 1);
    std::vector<StateVector> states = {vec1(-1.0), vec1(0.5), vec1(2.0), vec1(3.5)};
    SupportingSet supp = make_supporting_set(spec, states, 0.0, prob);

    Eigen::VectorXd values(4);
    values << 2.0, -1.0, 0.5, 3.0;
    ValueRepresentation vr;
    vr.values = values;
    vr.alpha = supp.gram->solve(values);
    vr.gram = supp.gram;

    SUBCASE("interpolates supporting values when unregularized") {
        for (int j = 0; j < 4; ++j) {
            CHECK(value_at(vr, states[static_cast<size_t>(j)]) ==
                  doctest::Approx(values[j]).epsilon(1e-10));
        }
    }

    SUBCASE("zero weights give zero everywhere") {
        ValueRepresentation zero = vr;
        zero.alpha.setZero();
        CHECK(value_at(zero, vec1(1.7)) == 0.0);
        CHECK(value_local_operator(zero, vec1(1.7), vec1(0.5),
                                   StateMatrix::Constant(1, 1, 0.3), 0.9) == 0.0);
    }

    SUBCASE("matches the naive summation oracle") {
        for (int trial = 0; trial < 20; ++trial) {
            const StateVector s = vec1(rng.uniform(-2.0, 4.0));
            double naive = 0.0;
            for (int j = 0; j < 4; ++j) {
                naive += vr.alpha[j] *
                         kernel_eval(spec, s, states[static_cast<size_t>(j)]);
            }
            CHECK(value_at(vr, s) == doctest::Approx(naive).epsilon(1e-12));
        }
    }

    SUBCASE("null operator inputs give zero") {
        CHECK(value_local_operator(vr, vec1(1.0), vec1(0.0),
                                   StateMatrix::Zero(1, 1), 0.9) == 0.0);
    }

    SUBCASE("local operator matches finite differences of the value surface") {
        for (int trial = 0; trial < 10; ++trial) {
            const StateVector s = vec1(rng.uniform(-0.5, 2.5));
            const StateVector mu = vec1(rng.uniform(-0.8, 0.8));
            const StateMatrix sigma = StateMatrix::Constant(1, 1, rng.uniform(0.05, 0.4));
            const auto value_fn = [&](const Eigen::VectorXd& x) {
                return value_at(vr, StateVector(x));
            };
            const double fd = 0.9 * oracles::fd_diffusion_operator(
                                        value_fn, s, Eigen::VectorXd(mu),
                                        Eigen::MatrixXd(sigma), 1e-5, 1e-4);
            const double got = value_local_operator(vr, s, mu, sigma, 0.9);
            CHECK(got == doctest::Approx(fd).epsilon(1e-3).scale(
                             std::max(1.0, std::abs(fd))));
        }
    }
}

TEST_CASE("policy improvement") {
    ProblemDefinition prob = mocks::free_problem_1d(2);
    KernelSpec spec = KernelSpec::isotropic(1.0, 1.0, 1);

    SUBCASE("identical actions keep index zero by tie-break") {
        mocks::UniformModel model;
        model.tm = mom1(0.2, 0.1);
        model.reward = 0.5;
        SupportingSet supp =
            make_supporting_set(spec, {vec1(0.0), vec1(1.0), vec1(2.0)}, 0.5, prob);
        Policy pol;
        pol.actions = {0, 0, 0};
        ValueRepresentation vr = policy_evaluation(supp, model, prob, pol);
        const auto [next, changed] = policy_improvement(supp, model, prob, vr, pol);
        CHECK(changed == 0);
        CHECK(next.actions == std::vector<int>{0, 0, 0});
    }

    SUBCASE("drift up the value gradient wins under equal rewards") {
        mocks::TableModel model;
        for (int i = 0; i < 5; ++i) model.states.push_back(vec1(static_cast<double>(i)));
        // Action 0 drifts down-slope, action 1 up-slope; rewards equal.
        model.table.resize(5, {mom1(-0.3, 0.05), mom1(0.3, 0.05)});
        model.rewards.resize(5, {0.1, 0.1});
        SupportingSet supp = make_supporting_set(spec, model.states, 0.3, prob);
        // Hand-built increasing value surface. Its kernel representation
        // decays outside the data, so only interior states see a clean
        // positive gradient.
        ValueRepresentation vr;
        vr.values = Eigen::VectorXd::LinSpaced(5, 0.0, 4.0);
        vr.alpha = supp.gram->solve(vr.values);
        vr.gram = supp.gram;
        Policy pol;
        pol.actions = {0, 0, 0, 0, 0};
        const auto [next, changed] = policy_improvement(supp, model, prob, vr, pol);
        CHECK(next.actions[1] == 1);
        CHECK(next.actions[2] == 1);
        CHECK(next.actions[3] == 1);
        CHECK(changed >= 3);
    }

    SUBCASE("matches brute-force argmax via the naive summation oracle") {
        Draw rng(0xABCD);
        for (int trial = 0; trial < 5; ++trial) {
            mocks::TableModel model = random_table(rng, 5, 3);
            ProblemDefinition prob3 = mocks::free_problem_1d(3);
            SupportingSet supp = make_supporting_set(spec, model.states, 0.4, prob3);
            ValueRepresentation vr;
            vr.values = Eigen::VectorXd(5);
            for (int i = 0; i < 5; ++i) vr.values[i] = rng.uniform(-3.0, 3.0);
            vr.alpha = supp.gram->solve(vr.values);
            vr.gram = supp.gram;
            Policy pol;
            pol.actions = {0, 0, 0, 0, 0};
            const auto [next, changed] = policy_improvement(supp, model, prob3, vr, pol);

            for (int i = 0; i < 5; ++i) {
                int best_a = 0;
                double best = -1e300;
                for (int a = 0; a < 3; ++a) {
                    const TransitionMoments& tm =
                        model.table[static_cast<size_t>(i)][static_cast<size_t>(a)];
                    double op = 0.0;
                    for (int j = 0; j < 5; ++j) {
                        op += vr.alpha[j] *
                              kernel_diffusion(spec, model.states[static_cast<size_t>(i)],
                                               model.states[static_cast<size_t>(j)],
                                               tm.mu, tm.sigma);
                    }
                    const double score =
                        model.rewards[static_cast<size_t>(i)][static_cast<size_t>(a)] +
                        prob3.gamma * op;
                    if (score > best) {
                        best = score;
                        best_a = a;
                    }
                }
                CHECK(next.actions[static_cast<size_t>(i)] == best_a);
            }
        }
    }

    SUBCASE("fixed states keep action zero") {
        ProblemDefinition labeled = prob;
        labeled.region_classifier = [](const StateVector& s) {
            return s[0] > 1.5 ? Region::Goal : Region::Free;
        };
        mocks::TableModel model;
        model.states = {vec1(0.0), vec1(2.0)};
        model.table.resize(2, {mom1(-0.3, 0.05), mom1(0.3, 0.05)});
        model.rewards.resize(2, {0.0, 1.0});  // action 1 strictly better
        SupportingSet supp = make_supporting_set(spec, model.states, 0.3, labeled);
        ValueRepresentation vr;
        vr.values = Eigen::VectorXd::Zero(2);
        vr.alpha = supp.gram->solve(vr.values);
        vr.gram = supp.gram;
        Policy pol;
        pol.actions = {0, 0};
        const auto [next, changed] = policy_improvement(supp, model, prob, vr, pol);
        CHECK(next.actions[0] == 1);
        CHECK(next.actions[1] == 0);  // goal state pinned to action 0
    }
}

TEST_CASE("one improvement sweep makes exactly N*Q moment queries") {
    Draw rng(0x1234);
    mocks::TableModel model = random_table(rng, 7, 3);
    ProblemDefinition prob = mocks::free_problem_1d(3);
    KernelSpec spec = KernelSpec::isotropic(1.0, 1.0, 1);
    SupportingSet supp = make_supporting_set(spec, model.states, 0.4, prob);
    ValueRepresentation vr = policy_evaluation(
        supp, model, prob, Policy{std::vector<int>(7, 0)});
    model.moment_queries = 0;
    (void)policy_improvement(supp, model, prob, vr, Policy{std::vector<int>(7, 0)});
    CHECK(model.moment_queries == 7 * 3);
}

TEST_CASE("policy iteration") {
    KernelSpec spec = KernelSpec::isotropic(1.0, 1.0, 1);

    SUBCASE("single goal state converges immediately") {
        ProblemDefinition prob = mocks::free_problem_1d(2);
        prob.region_classifier = [](const StateVector&) { return Region::Goal; };
        mocks::UniformModel model;
        model.tm = mom1(0.0, 0.0);
        SupportingSet supp = make_supporting_set(spec, {vec1(0.0)}, 0.0, prob);
        const SolveResult res = policy_iteration(supp, model, prob);
        CHECK(res.report.converged);
        CHECK(res.report.iterations == 1);
        CHECK(res.values.values[0] == prob.goal_value());
        CHECK(res.values.values[0] == doctest::Approx(10.0).epsilon(1e-9));
        CHECK(res.report.policy_changes.back() == 0);
    }

    SUBCASE("final policy matches exhaustive policy search") {
        // Seed picked so that every generated instance converges; the
        // matching itself is the property under test.
        Draw rng(1);
        int verified = 0;
        for (int trial = 0; trial < 8; ++trial) {
            mocks::TableModel model = random_table(rng, 2, 2);
            ProblemDefinition prob = mocks::free_problem_1d(2);
            SupportingSet supp = make_supporting_set(spec, model.states, 0.6, prob);
            const SolveResult res = policy_iteration(supp, model, prob);
            if (!res.report.converged) continue;

            std::vector<int> best;
            double best_score = -1e300;
            for (int a0 = 0; a0 < 2; ++a0) {
                for (int a1 = 0; a1 < 2; ++a1) {
                    Policy cand;
                    cand.actions = {a0, a1};
                    const ValueRepresentation vr =
                        policy_evaluation(supp, model, prob, cand);
                    if (vr.values.mean() > best_score) {
                        best_score = vr.values.mean();
                        best = cand.actions;
                    }
                }
            }
            CHECK(res.policy.actions == best);
            ++verified;
        }
        CHECK(verified >= 4);  // most random instances must actually converge
    }

    SUBCASE("action-table cycle is detected and the best iterate returned") {
        // Instance found by offline search; evaluation/improvement oscillates
        // between two action tables under this lambda.
        mocks::TableModel model;
        model.states = {vec1(0.0), vec1(1.0)};
        model.table = {{mom1(0.090946078766835248, 0.37234943422794797),
                        mom1(-0.78012564362085635, 0.21652119081505894)},
                       {mom1(-0.66325863641663352, 0.088931995006823292),
                        mom1(0.42628178164576735, 0.083700928739201222)}};
        model.rewards = {{0.17835881822832156, 0.40714054569884506},
                         {-0.92696110476682514, -0.087887552552511128}};
        ProblemDefinition prob = mocks::free_problem_1d(2);
        SupportingSet supp = make_supporting_set(spec, model.states, 0.5, prob);
        const SolveResult res = policy_iteration(supp, model, prob);
        CHECK(res.report.cycle_detected);
        CHECK_FALSE(res.report.converged);
        CHECK(res.policy.size() == 2);
        CHECK(res.values.values.allFinite());
        CHECK(std::isfinite(res.report.bellman_residual));
        // The returned iterate carries the smallest residual seen in the run.
        const double returned = bellman_residual(supp, model, prob,
                                                 res.policy, res.values);
        CHECK(std::isfinite(returned));
    }

    SUBCASE("solves are bitwise deterministic") {
        Draw rng(0x9F);
        mocks::TableModel model = random_table(rng, 6, 3);
        ProblemDefinition prob = mocks::free_problem_1d(3);
        SupportingSet supp = make_supporting_set(spec, model.states, 0.5, prob);
        const SolveResult a = policy_iteration(supp, model, prob);
        const SolveResult b = policy_iteration(supp, model, prob);
        CHECK(a.policy.actions == b.policy.actions);
        REQUIRE(a.values.values.size() == b.values.values.size());
        CHECK(std::memcmp(a.values.values.data(), b.values.values.data(),
                          sizeof(double) * static_cast<size_t>(
                                               a.values.values.size())) == 0);
    }

    SUBCASE("report bookkeeping") {
        Draw rng(0x42);
        mocks::TableModel model = random_table(rng, 4, 2);
        ProblemDefinition prob = mocks::free_problem_1d(2);
        SupportingSet supp = make_supporting_set(spec, model.states, 0.5, prob);
        const SolveResult res = policy_iteration(supp, model, prob);
        CHECK(res.report.iterations >= 1);
        CHECK(res.report.policy_changes.size() ==
              static_cast<size_t>(res.report.iterations));
        CHECK(res.report.mean_values.size() ==
              static_cast<size_t>(res.report.iterations));
        CHECK(res.report.iteration_seconds.size() ==
              static_cast<size_t>(res.report.iterations));
        if (res.report.converged) CHECK(res.report.policy_changes.back() == 0);
    }

    SUBCASE("initial policy is honored and validated") {
        Draw rng(0x43);
        mocks::TableModel model = random_table(rng, 3, 2);
        ProblemDefinition prob = mocks::free_problem_1d(2);
        SupportingSet supp = make_supporting_set(spec, model.states, 0.5, prob);
        SolveOptions opts;
        opts.initial_policy = Policy{{9, 0, 0}};
        CHECK_THROWS_AS(policy_iteration(supp, model, prob, opts),
                        std::invalid_argument);
        opts.initial_policy = Policy{{1, 1, 1}};
        CHECK_NOTHROW(policy_iteration(supp, model, prob, opts));
        opts.max_iterations = 0;
        CHECK_THROWS_AS(policy_iteration(supp, model, prob, opts),
                        std::invalid_argument);
    }
}
