#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "netlim/model.hpp"
#include "netlim/rng.hpp"

namespace netlim {

enum class WeightMethod { FftTorus, DirectFactorization };

struct SimConfig {
    int n = 1;  // population V_n = {-n..n}, size 2n+1
    std::uint64_t seed = 0;
    WeightMethod weight_method = WeightMethod::FftTorus;
};

/// One realization of the synaptic matrix; row = postsynaptic index i+n,
/// column = presynaptic index j+n.
struct WeightField {
    Eigen::MatrixXd J;
    WeightMethod method = WeightMethod::FftTorus;
};

/// Simulated trajectories plus the noise realizations that generated them
/// (retained so the coordinate-change identity is checkable exactly).
struct TrajectoryEnsemble {
    Eigen::MatrixXd u;      // (2n+1) x (T+1)
    Eigen::VectorXd theta;  // per-neuron injected current, drawn once
    Eigen::MatrixXd B;      // (2n+1) x T, column t-1 enters the step to time t
    std::uint64_t seed = 0;
};

/// Shift-averaged empirical statistics of the v-coordinates.  Layout mirrors
/// LimitLaw: index 0 of c_hat and of the matrix rows/columns is unused.
struct EmpiricalStats {
    int n = 0;
    int T = 0;
    Eigen::VectorXd c_hat;                 // s = 1..T
    std::vector<Eigen::MatrixXd> K_hat;   // lag k = 0..k_max
    std::vector<std::vector<double>> marginal_pool;  // per time s = 0..T, v^j_s over j
};

/// Draws stationary Gaussian weight fields on the (2n+1)^2 torus with
/// E J = j_bar/(2n+1) and Cov(J_{i+k,j+l}, J_{ij}) = Lambda(k,l)/(2n+1).
/// The fft-torus route synthesizes through the spectral density of the
/// periodized covariance; direct-factorization (n <= 6 only) factorizes the
/// full block-circulant covariance and serves as the cross-check.
class WeightSampler {
  public:
    WeightSampler(const ModelParams& p, int n, WeightMethod method);
    ~WeightSampler();
    WeightSampler(const WeightSampler&) = delete;
    WeightSampler& operator=(const WeightSampler&) = delete;

    WeightField draw(Rng& rng);
    /// Spectral density grid used by the fft-torus route (empty for direct).
    const Eigen::MatrixXd& spectrum() const { return S_; }

  private:
    int N_ = 0;
    double mean_ = 0.0;
    WeightMethod method_;
    Eigen::MatrixXd S_;        // spectrum of the wrapped covariance / N
    Eigen::MatrixXd sqrtS_;
    Eigen::MatrixXd factor_;   // direct route: PSD square root of the full covariance
    std::vector<std::complex<double>> buf_;
    void* plan_ = nullptr;     // fftw_plan for the backward transform
};

WeightField sample_weights(const ModelParams& p, const SimConfig& sim);

TrajectoryEnsemble simulate(const ModelParams& p, const SimConfig& sim, const WeightField& w);

EmpiricalStats empirical_stats(const TrajectoryEnsemble& ens, const ModelParams& p, int k_max);

/// Pools per-trial statistics: moment estimates average, marginal pools
/// concatenate.  All records must share n, T and the lag range.
EmpiricalStats pool_stats(const std::vector<EmpiricalStats>& per_trial);

/// Bounded functional of a (2m+1) x (T+1) window of u-trajectories.
using WindowFunctional = std::function<double(const Eigen::MatrixXd&)>;

/// Periodic-wrap shift average (1/(2n+1)) sum_j h(window centered at j).
double empirical_test_function(const TrajectoryEnsemble& ens, const WindowFunctional& h, int m);

/// Shift average plus the across-window standard deviation of the h values
/// (the raw ingredient of the single-path standard error).
struct ShiftAverage {
    double mean = 0.0;
    double sd = 0.0;
};
ShiftAverage empirical_test_function_stats(const TrajectoryEnsemble& ens,
                                           const WindowFunctional& h, int m);

/// Named functionals: "one", "f_center_last" (f(u^0_T)), "f_pair_last"
/// (f(u^0_T) f(u^1_T); needs m >= 1).
WindowFunctional make_window_functional(const std::string& name, const ModelParams& p);

} // namespace netlim
