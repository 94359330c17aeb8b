#include "ktmdp/mdp_core.hpp"

#include <Eigen/Eigenvalues>

#include <sstream>

namespace ktmdp {

void TransitionMoments::validate() const {
    const int d = static_cast<int>(mu.size());
    if (sigma.rows() != d || sigma.cols() != d) {
        throw std::invalid_argument("transition moment dimensions disagree");
    }
    const double asym = (sigma - sigma.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-9) {
        std::ostringstream msg;
        msg << "second transition moment is not symmetric (max asymmetry " << asym
            << ")";
        throw std::invalid_argument(msg.str());
    }
    const StateMatrix cov = sigma - mu * mu.transpose();
    Eigen::SelfAdjointEigenSolver<StateMatrix> eig(cov, Eigen::EigenvaluesOnly);
    const double min_eig = eig.eigenvalues().minCoeff();
    if (min_eig < -1e-9) {
        std::ostringstream msg;
        msg << "displacement covariance is indefinite (smallest eigenvalue " << min_eig
            << ")";
        throw std::invalid_argument(msg.str());
    }
}

TransitionMoments TransitionMoments::validated(StateVector mu, StateMatrix sigma) {
    TransitionMoments tm{std::move(mu), std::move(sigma)};
    tm.validate();
    return tm;
}

Region classify(const ProblemDefinition& problem, const StateVector& s) {
    if (!problem.bounds.contains(s)) return Region::Obstacle;
    return problem.region_classifier(s);
}

SupportingSet make_supporting_set(const KernelSpec& spec,
                                  std::vector<StateVector> states, double lambda,
                                  const ProblemDefinition& problem) {
    SupportingSet supp;
    supp.gram = std::make_shared<GramFactor>(build_gram(spec, states, lambda));
    supp.states = std::move(states);
    supp.labels.reserve(supp.states.size());
    for (const StateVector& s : supp.states) {
        supp.labels.push_back(classify(problem, s));
    }
    return supp;
}

void check_coverage(const SupportingSet& supp) {
    if (supp.size() < 2) {
        throw std::invalid_argument("supporting set needs at least two states");
    }
    bool has_goal = false;
    for (Region r : supp.labels) has_goal = has_goal || (r == Region::Goal);
    if (!has_goal) {
        throw std::invalid_argument(
            "supporting set has no goal-labeled state; the fixed goal value cannot "
            "anchor the solve");
    }
}

Eigen::VectorXd MomentModel::expected_reward_all(const StateVector& s,
                                                 int action_count) const {
    Eigen::VectorXd out(action_count);
    for (int a = 0; a < action_count; ++a) out[a] = expected_reward(s, a);
    return out;
}

}  // namespace ktmdp
