#pragma once

// Independent numerical oracles used to cross-check the library's analytic
// code paths. Everything here is deliberately written the slow, obvious way
// and must not call back into the code under test beyond plain function
// evaluation.

#include <Eigen/Core>

#include <functional>

namespace oracles {

using ScalarFn = std::function<double(const Eigen::VectorXd&)>;

/// Central-difference gradient of a scalar function.
inline Eigen::VectorXd fd_gradient(const ScalarFn& f, const Eigen::VectorXd& x,
                                   double h) {
    Eigen::VectorXd g(x.size());
    for (int i = 0; i < x.size(); ++i) {
        Eigen::VectorXd xp = x;
        Eigen::VectorXd xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
}

/// Central-difference Hessian of a scalar function (four-point stencil).
inline Eigen::MatrixXd fd_hessian(const ScalarFn& f, const Eigen::VectorXd& x,
                                  double h) {
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd hess(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            Eigen::VectorXd xpp = x;
            Eigen::VectorXd xpm = x;
            Eigen::VectorXd xmp = x;
            Eigen::VectorXd xmm = x;
            xpp[i] += h;
            xpp[j] += h;
            xpm[i] += h;
            xpm[j] -= h;
            xmp[i] -= h;
            xmp[j] += h;
            xmm[i] -= h;
            xmm[j] -= h;
            hess(i, j) = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * h * h);
        }
    }
    return hess;
}

/// Drift-diffusion operator mu^T grad f + 1/2 sum_ij sigma_ij d2f/dxi dxj,
/// everything taken from finite differences.
inline double fd_diffusion_operator(const ScalarFn& f, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& mu,
                                    const Eigen::MatrixXd& sigma, double grad_step,
                                    double hess_step) {
    const Eigen::VectorXd g = fd_gradient(f, x, grad_step);
    const Eigen::MatrixXd hess = fd_hessian(f, x, hess_step);
    double second = 0.0;
    for (int i = 0; i < x.size(); ++i) {
        for (int j = 0; j < x.size(); ++j) {
            second += sigma(i, j) * hess(i, j);
        }
    }
    return mu.dot(g) + 0.5 * second;
}

}  // namespace oracles
