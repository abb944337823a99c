#pragma once

#include <Eigen/Dense>

#include "netlim/model.hpp"

namespace netlim {

struct QuadratureConfig {
    int gauss_nodes = 32;           // Gauss-Hermite nodes per Gaussian dimension
    int init_nodes = 32;            // nodes for a Gaussian initial law
    double degenerate_eps = 1e-14;  // variance at or below this is treated as deterministic
};

/// Physicists' Gauss-Hermite rule: sum_i w_i p(x_i) = int p(x) exp(-x^2) dx
/// exactly for polynomials up to degree 2n-1.  Golub-Welsch nodes, cached per n.
struct GaussHermite {
    Eigen::VectorXd x;
    Eigen::VectorXd w;
};
const GaussHermite& gauss_hermite(int n);

/// E[f(X)] and E[f(X)^2] for X ~ N(mean, var).
double expect_f(const SigmoidSpec& f, double mean, double var, const QuadratureConfig& qc);
double expect_f_sq(const SigmoidSpec& f, double mean, double var, const QuadratureConfig& qc);

/// E[f(X) f(Y)] for (X,Y) ~ N(mean, cov).  The covariance is diagonalized and
/// degenerate directions (eigenvalue <= degenerate_eps) are dropped, so rank-1
/// and fully deterministic cases integrate over 1 and 0 dimensions.  Throws
/// NumericalError if an eigenvalue falls below -1e-10.
double expect_ff(const SigmoidSpec& f, const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov,
                 const QuadratureConfig& qc);

} // namespace netlim
