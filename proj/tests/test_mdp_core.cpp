#include "ktmdp/mdp_core.hpp"

#include "doctest.h"
#include "mock_model.hpp"

#include <cmath>

using namespace ktmdp;

namespace {

ProblemDefinition box_problem() {
    ProblemDefinition prob;
    prob.gamma = 0.9;
    prob.bounds.lo = StateVector::Zero(2);
    prob.bounds.hi = StateVector::Constant(2, 10.0);
    prob.action_set.count = 4;
    const Rect goal{7.0, 9.0, 7.0, 9.0};
    const Rect obstacle{4.0, 6.0, 4.0, 6.0};
    prob.region_classifier = [goal, obstacle](const StateVector& s) {
        if (goal.contains(s[0], s[1])) return Region::Goal;
        if (obstacle.contains(s[0], s[1])) return Region::Obstacle;
        return Region::Free;
    };
    return prob;
}

StateVector vec2(double x, double y) {
    StateVector v(2);
    v << x, y;
    return v;
}

}  // namespace

TEST_CASE("transition moment validation") {
    SUBCASE("consistent moments pass") {
        TransitionMoments tm;
        tm.mu = vec2(0.2, -0.1);
        tm.sigma = StateMatrix::Identity(2, 2) * 0.05 + tm.mu * tm.mu.transpose();
        CHECK_NOTHROW(tm.validate());
    }
    SUBCASE("zero-covariance boundary case passes") {
        TransitionMoments tm;
        tm.mu = vec2(0.5, 0.5);
        tm.sigma = tm.mu * tm.mu.transpose();
        CHECK_NOTHROW(tm.validate());
    }
    SUBCASE("asymmetric second moment is rejected") {
        TransitionMoments tm;
        tm.mu = vec2(0.0, 0.0);
        tm.sigma = StateMatrix::Identity(2, 2);
        tm.sigma(0, 1) = 0.2;
        CHECK_THROWS_AS(tm.validate(), std::invalid_argument);
    }
    SUBCASE("indefinite centered covariance is rejected") {
        TransitionMoments tm;
        tm.mu = vec2(1.0, 0.0);
        tm.sigma = StateMatrix::Identity(2, 2) * 0.1;  // sigma - mu mu^T < 0
        CHECK_THROWS_AS(tm.validate(), std::invalid_argument);
    }
    SUBCASE("dimension mismatch is rejected") {
        TransitionMoments tm;
        tm.mu = vec2(0.0, 0.0);
        tm.sigma = StateMatrix::Identity(3, 3);
        CHECK_THROWS_AS(tm.validate(), std::invalid_argument);
    }
}

TEST_CASE("region classification") {
    const ProblemDefinition prob = box_problem();
    CHECK(classify(prob, vec2(8.0, 8.0)) == Region::Goal);
    CHECK(classify(prob, vec2(5.0, 5.0)) == Region::Obstacle);
    CHECK(classify(prob, vec2(2.0, 2.0)) == Region::Free);
    // Anything outside the workspace box counts as an obstacle.
    CHECK(classify(prob, vec2(-0.5, 5.0)) == Region::Obstacle);
    CHECK(classify(prob, vec2(5.0, 10.5)) == Region::Obstacle);
}

TEST_CASE("supporting set construction labels every state") {
    const ProblemDefinition prob = box_problem();
    KernelSpec spec = KernelSpec::isotropic(1.0, 1.5, 2);
    std::vector<StateVector> states = {vec2(2.0, 2.0), vec2(8.0, 8.0), vec2(5.0, 5.0)};
    SupportingSet supp = make_supporting_set(spec, states, 0.5, prob);
    REQUIRE(supp.size() == 3);
    CHECK(supp.labels[0] == Region::Free);
    CHECK(supp.labels[1] == Region::Goal);
    CHECK(supp.labels[2] == Region::Obstacle);
    CHECK(supp.gram->size() == 3);
    CHECK_NOTHROW(check_coverage(supp));
}

TEST_CASE("coverage rules for solver-facing supporting sets") {
    const ProblemDefinition prob = box_problem();
    KernelSpec spec = KernelSpec::isotropic(1.0, 1.5, 2);

    SupportingSet tiny = make_supporting_set(spec, {vec2(8.0, 8.0)}, 0.5, prob);
    CHECK_THROWS_AS(check_coverage(tiny), std::invalid_argument);

    SupportingSet no_goal =
        make_supporting_set(spec, {vec2(1.0, 1.0), vec2(2.0, 2.0)}, 0.5, prob);
    CHECK_THROWS_AS(check_coverage(no_goal), std::invalid_argument);
}

TEST_CASE("value representation weights reproduce the values") {
    const ProblemDefinition prob = box_problem();
    KernelSpec spec = KernelSpec::isotropic(1.0, 1.5, 2);
    std::vector<StateVector> states = {vec2(1.0, 1.0), vec2(3.0, 2.0), vec2(8.0, 8.0),
                                       vec2(6.0, 9.0)};
    SupportingSet supp = make_supporting_set(spec, states, 0.7, prob);

    Eigen::VectorXd values(4);
    values << 1.0, -2.0, 10.0, 4.5;
    ValueRepresentation vr;
    vr.values = values;
    vr.alpha = supp.gram->solve(values);
    vr.gram = supp.gram;

    const Eigen::VectorXd back = supp.gram->apply(vr.alpha);
    CHECK((back - values).norm() / values.norm() < 1e-8);
}

TEST_CASE("default batched reward falls back to per-action calls") {
    mocks::TableModel model;
    model.states = {StateVector::Constant(1, 0.0), StateVector::Constant(1, 2.0)};
    model.table.resize(2);
    model.rewards = {{0.5, -1.0, 2.0}, {0.0, 3.0, -0.25}};
    const Eigen::VectorXd all =
        model.expected_reward_all(StateVector::Constant(1, 2.0), 3);
    REQUIRE(all.size() == 3);
    CHECK(all[0] == 0.0);
    CHECK(all[1] == 3.0);
    CHECK(all[2] == -0.25);
}

TEST_CASE("region names") {
    CHECK(std::string(region_name(Region::Free)) == "free");
    CHECK(std::string(region_name(Region::Goal)) == "goal");
    CHECK(std::string(region_name(Region::Obstacle)) == "obstacle");
}
