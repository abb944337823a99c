#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "netlim/errors.hpp"
#include "netlim/rng.hpp"

namespace netlim {

/// Firing-rate nonlinearity: increasing Lipschitz bijection onto (0,1).
/// Only the logistic family is implemented; slope g > 0.
struct SigmoidSpec {
    double g = 1.0;

    double operator()(double x) const {
        const double z = g * x;
        double y;
        if (z >= 0.0) {
            y = 1.0 / (1.0 + std::exp(-z));
        } else {
            const double e = std::exp(z);
            y = e / (1.0 + e);
        }
        // exp underflow would land exactly on 0 or 1; pin to the open interval
        return std::clamp(y, std::numeric_limits<double>::min(),
                          1.0 - std::numeric_limits<double>::epsilon() / 2.0);
    }

    double lipschitz() const { return 0.25 * g; }
};

/// Synaptic-weight covariance on index lags, finite support [-d,d]^2.
/// First argument is the postsynaptic (row) lag.
class CovFunction {
  public:
    CovFunction() = default;
    /// values: (2d+1)x(2d+1) row-major, (k,l) -> row k+d, column l+d.
    CovFunction(int d, std::vector<double> values);

    int d() const { return d_; }
    double operator()(int k, int l) const {
        if (std::abs(k) > d_ || std::abs(l) > d_) return 0.0;
        return values_[static_cast<std::size_t>((k + d_) * (2 * d_ + 1) + (l + d_))];
    }
    const std::vector<double>& values() const { return values_; }

    bool is_point_symmetric(double tol = 1e-12) const;
    /// Largest |l| such that some Lambda(k,l) != 0; the lag extent of the M blocks.
    int moment_lag_extent() const;
    bool is_zero() const;

  private:
    int d_ = 0;
    std::vector<double> values_{0.0};
};

/// Law of the time-0 membrane potential.
class InitialLaw {
  public:
    enum class Kind { PointMass, Gaussian, Discrete };

    static InitialLaw point_mass(double u0);
    static InitialLaw gaussian(double m0, double s02);
    static InitialLaw discrete(std::vector<std::pair<double, double>> atoms);

    Kind kind() const { return kind_; }
    double point_value() const { return u0_; }
    double gaussian_mean() const { return m0_; }
    double gaussian_var() const { return s02_; }
    const std::vector<std::pair<double, double>>& atoms() const { return atoms_; }

    double mean() const;
    double variance() const;

    /// Exact or Gauss-Hermite (value, weight) pairs for integrating against this law.
    /// Point mass and discrete variants are exact; the Gaussian variant uses a
    /// Hermite rule with `gauss_nodes` points (collapsing to a point mass when
    /// its variance is below `degenerate_eps`).
    std::vector<std::pair<double, double>> quadrature_atoms(int gauss_nodes,
                                                            double degenerate_eps = 1e-14) const;

    double sample(Rng& rng) const;

    /// Empty if valid, otherwise one message per violated invariant.
    std::vector<std::string> check() const;

  private:
    Kind kind_ = Kind::PointMass;
    double u0_ = 0.0;
    double m0_ = 0.0;
    double s02_ = 0.0;
    std::vector<std::pair<double, double>> atoms_;
};

struct ModelParams {
    double gamma = 0.0;       // leak rate, in [0,1)
    double sigma2 = 1.0;      // variance of the intrinsic noise B
    double theta_bar = 0.0;   // mean injected current
    double theta2 = 0.0;      // variance of the injected current
    double j_bar = 0.0;       // limit mean synaptic weight
    CovFunction lambda;       // weight covariance
    SigmoidSpec f;            // rate function
    InitialLaw mu_init;       // law of u_0
    int horizon_T = 1;        // time steps after t=0
};

/// Returns p unchanged if every invariant holds; otherwise throws ConfigError
/// whose message lists every violated invariant by name.
ModelParams validate_params(const ModelParams& p);

// --- trajectory coordinate change -------------------------------------------
//
// v = Psi(u):  v_0 = u_0,  v_s = u_s - gamma u_{s-1} - theta_bar  (s >= 1).
// The inverse reconstructs u_t = sum_{i<=t} gamma^i v_{t-i}
//                              + theta_bar (gamma^t - 1)/(gamma - 1).

Eigen::VectorXd psi_forward(const Eigen::VectorXd& u, double gamma, double theta_bar);
Eigen::VectorXd psi_inverse(const Eigen::VectorXd& v, double gamma, double theta_bar);

/// Coordinate t of the inverse as an affine map of (v_0..v_t):
/// weights[j] = gamma^(t-j), offset = theta_bar (gamma^t - 1)/(gamma - 1).
struct AffineCoeffs {
    Eigen::VectorXd weights;
    double offset = 0.0;
};
AffineCoeffs psi_inverse_coeffs(int t, double gamma, double theta_bar);

// --- spectral validity of Lambda --------------------------------------------

struct SpectralCheck {
    bool pass = false;
    double min_value = 0.0;
};

/// Evaluates the 2D DFT of the periodized Lambda table on an odd torus and
/// reports the minimum value; the field sampler exists iff this is >= -1e-10.
/// Computed as a direct cosine sum over the support of Lambda, independent of
/// the FFT route the sampler uses.
SpectralCheck lambda_psd_check(const CovFunction& lambda, int torus_size);

} // namespace netlim
