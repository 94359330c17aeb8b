#include "ktmdp/kernel.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace ktmdp {

namespace {

void check_dim(const KernelSpec& spec, const StateVector& s, const char* what) {
    if (s.size() != spec.dim()) {
        std::ostringstream msg;
        msg << what << " has dimension " << s.size() << ", kernel expects "
            << spec.dim();
        throw std::invalid_argument(msg.str());
    }
}

void check_sigma(const KernelSpec& spec, const StateMatrix& sigma) {
    if (sigma.rows() != spec.dim() || sigma.cols() != spec.dim()) {
        std::ostringstream msg;
        msg << "second moment is " << sigma.rows() << "x" << sigma.cols()
            << ", kernel expects " << spec.dim() << "x" << spec.dim();
        throw std::invalid_argument(msg.str());
    }
    const double asym = (sigma - sigma.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-9) {
        std::ostringstream msg;
        msg << "second moment is not symmetric (max asymmetry " << asym << ")";
        throw std::invalid_argument(msg.str());
    }
}

}  // namespace

KernelSpec KernelSpec::isotropic(double amplitude, double lengthscale, int dim,
                                 std::vector<bool> wrap) {
    KernelSpec spec;
    spec.amplitude = amplitude;
    spec.lengthscales = StateVector::Constant(dim, lengthscale);
    spec.wrap_mask = std::move(wrap);
    spec.validate();
    return spec;
}

void KernelSpec::validate() const {
    if (lengthscales.size() == 0) {
        throw std::invalid_argument("kernel has no lengthscales");
    }
    if (amplitude <= 0.0) {
        throw std::invalid_argument("kernel amplitude must be positive");
    }
    if ((lengthscales.array() <= 0.0).any()) {
        throw std::invalid_argument("kernel lengthscales must be positive");
    }
    if (!wrap_mask.empty() && static_cast<int>(wrap_mask.size()) != dim()) {
        throw std::invalid_argument("wrap mask length does not match kernel dimension");
    }
}

StateVector wrapped_diff(const KernelSpec& spec, const StateVector& s1,
                         const StateVector& s2) {
    check_dim(spec, s1, "first state");
    check_dim(spec, s2, "second state");
    StateVector d = s1 - s2;
    if (!spec.wrap_mask.empty()) {
        for (int i = 0; i < spec.dim(); ++i) {
            if (spec.wrap_mask[static_cast<size_t>(i)]) d[i] = wrap_angle(d[i]);
        }
    }
    return d;
}

double kernel_eval(const KernelSpec& spec, const StateVector& s1, const StateVector& s2) {
    const StateVector d = wrapped_diff(spec, s1, s2);
    const double q = (d.array() / spec.lengthscales.array()).square().sum();
    return spec.amplitude * std::exp(-0.5 * q);
}

StateVector kernel_grad(const KernelSpec& spec, const StateVector& s1,
                        const StateVector& s2) {
    const StateVector d = wrapped_diff(spec, s1, s2);
    const double q = (d.array() / spec.lengthscales.array()).square().sum();
    const double k = spec.amplitude * std::exp(-0.5 * q);
    return (-d.array() / spec.lengthscales.array().square() * k).matrix();
}

double kernel_diffusion(const KernelSpec& spec, const StateVector& s1,
                        const StateVector& s2, const StateVector& mu,
                        const StateMatrix& sigma) {
    check_dim(spec, mu, "drift");
    check_sigma(spec, sigma);
    const StateVector d = wrapped_diff(spec, s1, s2);
    const Eigen::Array<double, Eigen::Dynamic, 1, 0, 3, 1> inv_sq =
        spec.lengthscales.array().square().inverse();
    const double q = (d.array().square() * inv_sq).sum();
    const double k = spec.amplitude * std::exp(-0.5 * q);

    const StateVector g = (d.array() * inv_sq).matrix();  // Sigma^{-1} (s1 - s2)
    const double drift_term = -mu.dot(g);
    const double trace_term = (sigma.diagonal().array() * inv_sq).sum();
    const double quad_term = g.dot(sigma * g);
    return (drift_term + 0.5 * (quad_term - trace_term)) * k;
}

GramFactor::GramFactor(KernelSpec spec, std::vector<StateVector> states,
                       Eigen::MatrixXd gram, double lambda)
    : spec_(std::move(spec)),
      states_(std::move(states)),
      gram_(std::move(gram)),
      lambda_(lambda) {
    const int n = static_cast<int>(states_.size());
    states_mat_.resize(spec_.dim(), n);
    for (int j = 0; j < n; ++j) states_mat_.col(j) = states_[static_cast<size_t>(j)];

    Eigen::MatrixXd reg = gram_;
    reg.diagonal().array() += lambda_;
    llt_.compute(reg);
    if (llt_.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "regularized Gram matrix is not positive definite (lambda=" << lambda_
            << "); increase the regularizer";
        throw IllConditionedError(msg.str());
    }
    const double rcond = llt_.rcond();
    condition_ = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
    if (condition_ > 1e12) {
        std::ostringstream msg;
        msg << "regularized Gram matrix is ill conditioned (estimate " << condition_
            << ", lambda=" << lambda_ << "); increase the regularizer";
        throw IllConditionedError(msg.str());
    }
}

GramFactor build_gram(const KernelSpec& spec, const std::vector<StateVector>& states,
                      double lambda) {
    spec.validate();
    if (states.empty()) {
        throw std::invalid_argument("supporting state set is empty");
    }
    if (lambda < 0.0) {
        throw std::invalid_argument("regularizer lambda must be nonnegative");
    }
    const int n = static_cast<int>(states.size());
    for (int i = 0; i < n; ++i) {
        check_dim(spec, states[static_cast<size_t>(i)], "supporting state");
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const StateVector d = wrapped_diff(spec, states[static_cast<size_t>(i)],
                                               states[static_cast<size_t>(j)]);
            if (d.norm() < 1e-9) {
                std::ostringstream msg;
                msg << "supporting states " << i << " and " << j
                    << " coincide (distance " << d.norm() << ")";
                throw std::invalid_argument(msg.str());
            }
        }
    }

    Eigen::MatrixXd gram(n, n);
    for (int i = 0; i < n; ++i) {
        gram(i, i) = spec.amplitude;
        for (int j = i + 1; j < n; ++j) {
            const double k = kernel_eval(spec, states[static_cast<size_t>(i)],
                                         states[static_cast<size_t>(j)]);
            gram(i, j) = k;
            gram(j, i) = k;
        }
    }
    return GramFactor(spec, states, std::move(gram), lambda);
}

KernelBatch::KernelBatch(const KernelSpec& spec, const StateVector& s,
                         const Eigen::MatrixXd& states_mat)
    : spec_(spec) {
    check_dim(spec, s, "query state");
    if (states_mat.rows() != spec.dim()) {
        throw std::invalid_argument("supporting state matrix row count mismatch");
    }
    const int n = static_cast<int>(states_mat.cols());
    diff_ = (-states_mat).colwise() + s;
    if (!spec.wrap_mask.empty()) {
        for (int i = 0; i < spec.dim(); ++i) {
            if (!spec.wrap_mask[static_cast<size_t>(i)]) continue;
            for (int j = 0; j < n; ++j) diff_(i, j) = wrap_angle(diff_(i, j));
        }
    }
    const Eigen::VectorXd inv_sq = spec.lengthscales.array().square().inverse().matrix();
    scaled_ = inv_sq.asDiagonal() * diff_;
    const Eigen::VectorXd q = diff_.cwiseProduct(scaled_).colwise().sum().transpose();
    kvals_ = (spec.amplitude * (-0.5 * q.array()).exp()).matrix();
}

Eigen::VectorXd KernelBatch::diffusion(const StateVector& mu,
                                       const StateMatrix& sigma) const {
    check_dim(spec_, mu, "drift");
    check_sigma(spec_, sigma);
    const double trace_term =
        (sigma.diagonal().array() / spec_.lengthscales.array().square()).sum();
    const Eigen::VectorXd lin = (mu.transpose() * scaled_).transpose();
    const Eigen::VectorXd quad =
        (sigma * scaled_).cwiseProduct(scaled_).colwise().sum().transpose();
    const Eigen::VectorXd out =
        (-lin.array() + 0.5 * (quad.array() - trace_term)).matrix();
    return out.cwiseProduct(kvals_);
}

double KernelBatch::diffusion_dot(const StateVector& mu, const StateMatrix& sigma,
                                  const Eigen::VectorXd& alpha) const {
    return diffusion(mu, sigma).dot(alpha);
}

}  // namespace ktmdp
