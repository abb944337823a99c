#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "netlim/model.hpp"
#include "netlim/quadrature.hpp"
#include "netlim/rng.hpp"

namespace netlim {

/// The limit law in v-coordinates: time-0 marginal mu_init^Z, Gaussian on
/// times 1..T with mean c and lag covariances K^l; M^l are the f-moment
/// matrices the K's are assembled from.
///
/// Matrices are (T+1)x(T+1) with row/column 0 unused so that indices match
/// the 1-based time convention of the defining identities.  Only lags
/// 0..d (K) and 0..LM (M) are stored; negative lags resolve through
/// K^{-l}_{s,r} = K^l_{r,s} in the accessors.
struct LimitLaw {
    ModelParams params;  // generating parameters (provenance)
    int T = 0;
    int d = 0;
    int LM = 0;  // largest |l| with lambda(k,l) != 0 for some k
    Eigen::VectorXd c;                // index s = 1..T
    std::vector<Eigen::MatrixXd> K;  // lag 0..d
    std::vector<Eigen::MatrixXd> M;  // lag 0..LM

    double K_at(int l, int r, int s) const {
        if (std::abs(l) > d) return 0.0;
        return l >= 0 ? K[static_cast<std::size_t>(l)](r, s)
                      : K[static_cast<std::size_t>(-l)](s, r);
    }
    double M_at(int l, int r, int s) const {
        if (std::abs(l) > LM) throw ConfigError("LimitLaw::M_at: lag outside stored range");
        return l >= 0 ? M[static_cast<std::size_t>(l)](r, s)
                      : M[static_cast<std::size_t>(-l)](s, r);
    }
};

/// A finite-dimensional marginal of the limit law: i.i.d. mu_init time-0
/// coordinates (one per unit) plus a Gaussian block over times >= 1.
struct GaussianMarginal {
    InitialLaw init;
    std::vector<int> times;  // Gaussian time extent per unit; size 1 or 2
    Eigen::VectorXd mean;    // stacked Gaussian means
    Eigen::MatrixXd cov;     // stacked Gaussian covariance
};

/// Optional replacement for the rate function inside the Monte-Carlo oracle
/// (verification hook); empty means "use p.f".
using IntegrandHook = std::function<double(double)>;

struct McResult {
    double estimate = 0.0;
    double stderr_ = 0.0;
};

struct OracleTarget {
    enum class Kind { Mean, Same, Cross } kind = Kind::Same;
    int lag = 0;  // used by Cross
    int r = 1;
    int s = 1;  // Mean uses s only
};

// Entry evaluators shared by the inductive solver and apply_Q; `law` supplies
// the marginals (entries with time index <= the required horizon must be set).
double mean_entry(const LimitLaw& law, int s, const ModelParams& p, const QuadratureConfig& q);
double moment_same(const LimitLaw& law, int r, int s, const ModelParams& p,
                   const QuadratureConfig& q);
double moment_cross(const LimitLaw& law, int l, int r, int s, const ModelParams& p,
                    const QuadratureConfig& q);
double assemble_K(const LimitLaw& law, const CovFunction& lambda, double theta2, int k, int r,
                  int s);

LimitLaw solve_limit_law(const ModelParams& p, const QuadratureConfig& q);

/// Marginal over times 0..t of one neuron.
GaussianMarginal single_marginal(const LimitLaw& law, int t);
/// Marginal over (times 0..t of neuron 0, times 0..s of neuron l), l != 0.
GaussianMarginal pair_marginal(const LimitLaw& law, int l, int t, int s);

/// One application of the map nu -> Q^nu with nu's marginals substituted for
/// the limit law's.  solve_limit_law's output is its fixed point.
LimitLaw apply_Q(const LimitLaw& nu, const ModelParams& p, const QuadratureConfig& q);

/// Brute-force sampling of the exact marginal, bypassing the coefficient
/// reduction: v is drawn in full, mapped through psi_inverse, and the
/// f-product averaged.  Rejects N < 100.
McResult mc_moment_oracle(const LimitLaw& law, const OracleTarget& target, std::int64_t N,
                          std::uint64_t seed, const IntegrandHook& hook = {});

/// Mean and covariance of the v-coordinates of neurons -m..m, times 1..T.
struct WindowCovariance {
    Eigen::VectorXd mean;  // (2m+1)*T, neuron-major
    Eigen::MatrixXd cov;
    double min_eig = 0.0;
};
WindowCovariance window_covariance(const LimitLaw& law, int m);

/// Streams exact u-trajectory samples over window V_m; each draw is a
/// (2m+1) x (T+1) matrix, row j+m = neuron j, column t = time t.
class WindowSampler {
  public:
    WindowSampler(const LimitLaw& law, int m, std::uint64_t seed);
    Eigen::MatrixXd next();
    const WindowCovariance& window() const { return wc_; }

  private:
    const LimitLaw& law_;
    int m_;
    WindowCovariance wc_;
    Eigen::MatrixXd L_;  // PSD factor of wc_.cov
    Rng rng_;
};

/// N exact samples of u-trajectories over window V_m (the first N draws of
/// WindowSampler with the same seed).
std::vector<Eigen::MatrixXd> sample_limit_law(const LimitLaw& law, int m, std::int64_t N,
                                              std::uint64_t seed);

} // namespace netlim
