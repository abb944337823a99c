#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "netlim/limit_law.hpp"
#include "netlim/network.hpp"

namespace netlim {

/// Plan for a convergence experiment.  The reference law must be solved up
/// front (or left default-constructed, in which case the runners solve it
/// from the model parameters).
struct ExperimentPlan {
    std::vector<int> n_list;          // strictly increasing population radii
    int trials_per_n = 20;
    std::uint64_t seed = 0;
    int k_max = 1;                    // covariance lags 0..k_max enter the distances
    int threads = 1;

    // quenched exceedance sweep (skipped when the list is empty); the
    // threshold is eps_mult * (median error at the largest sweep size)
    std::vector<int> exceed_n_list;
    int exceed_draws = 60;
    double exceed_eps_mult = 2.0;

    // ergodic-path settings
    std::string functional = "f_pair_last";
    int window_m = 1;
    std::int64_t law_samples = 1000000;  // reference-side draws for the h expectation

    LimitLaw reference;               // T == 0 means "solve on demand"
};

/// Distances of one empirical-statistics record from the limit law.
struct TrialDistance {
    int n = 0;
    int trial = 0;                    // -1 marks the trial-pooled aggregate
    double mean_err = 0.0;            // sup_s |c_hat_s - c_s|
    std::vector<double> cov_err;      // per lag k: sup_{r,s} |K_hat^k - (sigma2 Id [k=0] + K^k)|
    std::vector<double> ks_stat;      // per time s = 1..T (0 when the pool is empty)
    std::vector<double> ks_p;         // matching p-values at n_eff = pool/(2d+1)

    double max_cov_err() const;
    double max_ks_stat() const;
    double min_ks_p() const;
};

/// Per-size roll-up over trials.
struct SizeSummary {
    int n = 0;
    double median_mean_err = 0.0;
    double iqr_mean_err = 0.0;
    std::vector<double> median_cov_err;  // per lag
    double median_ks_stat = 0.0;         // median over trials of the per-trial max
    double median_min_ks_p = 0.0;        // median over trials of the per-trial min
    TrialDistance aggregate;             // distances of the trial-pooled statistics
};

/// One point of the quenched exceedance sweep.
struct ExceedancePoint {
    int n = 0;
    double eps = 0.0;
    double fraction = 0.0;            // share of J draws with mean_err > eps
    int draws = 0;
    std::vector<double> errors;       // per-draw mean errors
};

/// One point of the single-path ergodic experiment.
struct ErgodicPoint {
    int n = 0;
    double path_value = 0.0;          // shift average of h over the realization
    double path_se = 0.0;             // sd across windows / sqrt((2n+1)/(2m+1+2d))
    double gap = 0.0;                 // |path_value - reference value|
    double combined_se = 0.0;         // sqrt(path_se^2 + ref_se^2)
};

struct DistanceReport {
    std::string experiment;           // "averaged" | "quenched" | "ergodic"
    std::vector<TrialDistance> records;
    std::vector<SizeSummary> summaries;
    std::vector<ExceedancePoint> exceedance;  // quenched runs only
    std::vector<ErgodicPoint> ergodic;        // ergodic runs only
    double ref_value = 0.0;           // ergodic reference E_{mu_e}[h] and its
    double ref_se = 0.0;              // sampling standard error
};

/// Metrics of one statistics record against the law.  KS effective sample
/// size discounts neuron correlation: pool size / (2d+1).
TrialDistance distance_report(const EmpiricalStats& stats, const LimitLaw& law, int n);

/// Fresh weights every trial: empirical statistics aggregate over the
/// annealed path measure.
DistanceReport run_averaged_convergence(const ExperimentPlan& plan, const ModelParams& p,
                                        const QuadratureConfig& q);

/// One weight draw per size, trials vary only noise and initial conditions;
/// optionally sweeps the exceedance fraction over many weight draws.
DistanceReport run_quenched_convergence(const ExperimentPlan& plan, const ModelParams& p,
                                        const QuadratureConfig& q);

/// One realization per size; shift averages of h against the law-side
/// expectation estimated by streaming exact window samples.
DistanceReport run_ergodic_path(const ExperimentPlan& plan, const ModelParams& p,
                                const QuadratureConfig& q, const WindowFunctional& h, int m);
/// Same, with h built from plan.functional and m = plan.window_m.
DistanceReport run_ergodic_path(const ExperimentPlan& plan, const ModelParams& p,
                                const QuadratureConfig& q);

/// Least-squares slope of log(y) against log(x); x, y positive.
double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Runs body(0..count-1) on up to `threads` workers; any exception is
/// rethrown on the caller after all workers join.
void parallel_for(int count, int threads, const std::function<void(int)>& body);

} // namespace netlim
