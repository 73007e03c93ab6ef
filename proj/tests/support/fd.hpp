#pragma once

// Central-difference gradient helper for gradient-correctness checks.

#include <Eigen/Core>

#include <functional>

namespace testsupport {

inline Eigen::VectorXd central_difference(
    const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
    double h) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd p = x;
    for (int i = 0; i < x.size(); ++i) {
        const double orig = p[i];
        p[i] = orig + h;
        const double fp = f(p);
        p[i] = orig - h;
        const double fm = f(p);
        p[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double denom = std::max(b.norm(), 1e-12);
    return (a - b).norm() / denom;
}

}  // namespace testsupport
