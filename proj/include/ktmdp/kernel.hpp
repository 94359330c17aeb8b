#pragma once

#include "ktmdp/state.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <vector>

namespace ktmdp {

/// Raised when a regularized Gram system is numerically unusable.
struct IllConditionedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Gaussian kernel k(s, s') = c * exp(-1/2 (s-s')^T Sigma^{-1} (s-s'))
/// with Sigma = diag(lengthscales^2). Dimensions flagged in `wrap_mask`
/// are periodic with period 2*pi and differences are wrapped to (-pi, pi]
/// before everything else.
struct KernelSpec {
    double amplitude = 1.0;
    StateVector lengthscales;
    std::vector<bool> wrap_mask;  // empty means no periodic dimensions

    int dim() const { return static_cast<int>(lengthscales.size()); }

    /// Isotropic kernel: one lengthscale for every dimension.
    static KernelSpec isotropic(double amplitude, double lengthscale, int dim,
                                std::vector<bool> wrap = {});

    void validate() const;
};

/// Component-wise difference s1 - s2 with periodic dimensions wrapped.
StateVector wrapped_diff(const KernelSpec& spec, const StateVector& s1,
                         const StateVector& s2);

double kernel_eval(const KernelSpec& spec, const StateVector& s1, const StateVector& s2);

/// Gradient of k(s1, s2) with respect to the first argument.
StateVector kernel_grad(const KernelSpec& spec, const StateVector& s1,
                        const StateVector& s2);

/// Drift-diffusion operator (mu^T grad + 1/2 grad . sigma grad) applied to
/// k(., s2) at s1. Undiscounted; callers apply their own discount factor.
/// `sigma` must be symmetric to 1e-9.
double kernel_diffusion(const KernelSpec& spec, const StateVector& s1,
                        const StateVector& s2, const StateVector& mu,
                        const StateMatrix& sigma);

/// Supporting states with the factorized regularized Gram matrix
/// (lambda*I + K). Immutable after construction; safe to share across
/// concurrent readers.
class GramFactor {
public:
    GramFactor(KernelSpec spec, std::vector<StateVector> states,
               Eigen::MatrixXd gram, double lambda);

    int size() const { return static_cast<int>(states_.size()); }
    const KernelSpec& spec() const { return spec_; }
    const std::vector<StateVector>& states() const { return states_; }
    /// States as a d-by-N matrix, one column per supporting state.
    const Eigen::MatrixXd& states_matrix() const { return states_mat_; }
    const Eigen::MatrixXd& gram() const { return gram_; }
    double lambda() const { return lambda_; }
    double condition_estimate() const { return condition_; }

    /// Applies (lambda*I + K)^{-1} to a vector or a stack of columns.
    Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return llt_.solve(b); }
    Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const { return llt_.solve(b); }

    /// (lambda*I + K) * x, for round-trip checks.
    Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
        return lambda_ * x + gram_ * x;
    }

private:
    KernelSpec spec_;
    std::vector<StateVector> states_;
    Eigen::MatrixXd states_mat_;
    Eigen::MatrixXd gram_;
    double lambda_ = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double condition_ = 0.0;
};

/// Assembles and factorizes the regularized Gram matrix. States must be
/// pairwise distinct (distance >= 1e-9). Throws IllConditionedError when
/// the factorization fails or the condition estimate exceeds 1e12; a
/// larger lambda fixes both.
GramFactor build_gram(const KernelSpec& spec, const std::vector<StateVector>& states,
                      double lambda);

/// Per-query-state batch evaluation of the kernel and its diffusion
/// operator against every supporting state at once. Precomputes the
/// wrapped differences so that evaluating many (mu, sigma) pairs at the
/// same query state is cheap; used in the hot policy-improvement and
/// action-selection loops.
class KernelBatch {
public:
    KernelBatch(const KernelSpec& spec, const StateVector& s,
                const Eigen::MatrixXd& states_mat);

    /// k(s, s_j) for every supporting state j.
    const Eigen::VectorXd& kernel_values() const { return kvals_; }

    /// Row vector of operator values: entry j equals
    /// kernel_diffusion(spec, s, s_j, mu, sigma).
    Eigen::VectorXd diffusion(const StateVector& mu, const StateMatrix& sigma) const;

    /// dot(alpha, diffusion(mu, sigma)) without materializing the vector.
    double diffusion_dot(const StateVector& mu, const StateMatrix& sigma,
                         const Eigen::VectorXd& alpha) const;

private:
    const KernelSpec& spec_;
    Eigen::MatrixXd diff_;    // d x N wrapped differences s - s_j
    Eigen::MatrixXd scaled_;  // Sigma^{-1} * diff_
    Eigen::VectorXd kvals_;
};

}  // namespace ktmdp
