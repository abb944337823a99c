#include "netlim/convergence.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "netlim/errors.hpp"
#include "netlim/stats.hpp"

namespace netlim {

namespace {

std::uint64_t trial_key(std::uint64_t block, std::uint64_t a, std::uint64_t b) {
    return (block << 48) | (a << 32) | b;
}

void validate_plan(const ExperimentPlan& plan, const ModelParams& p) {
    std::vector<std::string> bad;
    auto check_sizes = [&](const std::vector<int>& ns, const char* what) {
        for (std::size_t i = 0; i < ns.size(); ++i) {
            if (ns[i] < 1) bad.push_back(std::string(what) + " contains a size below 1");
            if (i > 0 && ns[i] <= ns[i - 1])
                bad.push_back(std::string(what) + " not strictly increasing");
            if (2 * ns[i] + 1 <= 2 * p.lambda.d())
                bad.push_back(std::string(what) + " has a torus smaller than the coupling range");
        }
    };
    if (plan.n_list.empty()) bad.push_back("n_list empty");
    check_sizes(plan.n_list, "n_list");
    check_sizes(plan.exceed_n_list, "exceed_n_list");
    if (plan.trials_per_n < 1) bad.push_back("trials_per_n below 1");
    if (plan.k_max < 0) bad.push_back("k_max negative");
    if (plan.threads < 1) bad.push_back("threads below 1");
    if (!plan.exceed_n_list.empty() && plan.exceed_draws < 2)
        bad.push_back("exceed_draws below 2");
    if (plan.exceed_eps_mult <= 0.0) bad.push_back("exceed_eps_mult not positive");
    if (plan.window_m < 0 || plan.window_m > 3) bad.push_back("window_m outside [0,3]");
    if (plan.law_samples < 2) bad.push_back("law_samples below 2");
    if (plan.reference.T != 0 && plan.reference.T != p.horizon_T)
        bad.push_back("reference law horizon does not match the model");
    if (!bad.empty()) {
        std::ostringstream os;
        os << "invalid experiment plan:";
        for (const auto& b : bad) os << "\n  - " << b;
        throw ConfigError(os.str());
    }
}

// Resolves the reference law, solving it when the plan carries none.
const LimitLaw& resolve_reference(const ExperimentPlan& plan, const ModelParams& p,
                                  const QuadratureConfig& q, LimitLaw& storage) {
    if (plan.reference.T != 0) return plan.reference;
    storage = solve_limit_law(p, q);
    return storage;
}

SizeSummary summarize(int n, const std::vector<TrialDistance>& recs, const EmpiricalStats& agg,
                      const LimitLaw& law) {
    SizeSummary sum;
    sum.n = n;
    std::vector<double> mean_errs, ks_stats, ks_ps;
    for (const auto& r : recs) {
        mean_errs.push_back(r.mean_err);
        ks_stats.push_back(r.max_ks_stat());
        ks_ps.push_back(r.min_ks_p());
    }
    sum.median_mean_err = median(mean_errs);
    sum.iqr_mean_err = interquartile_range(mean_errs);
    const std::size_t lags = recs.front().cov_err.size();
    sum.median_cov_err.resize(lags);
    for (std::size_t k = 0; k < lags; ++k) {
        std::vector<double> errs;
        for (const auto& r : recs) errs.push_back(r.cov_err[k]);
        sum.median_cov_err[k] = median(errs);
    }
    sum.median_ks_stat = median(ks_stats);
    sum.median_min_ks_p = median(ks_ps);
    sum.aggregate = distance_report(agg, law, n);
    sum.aggregate.trial = -1;
    return sum;
}

// One fresh-weights trial: simulate and measure.
TrialDistance one_trial(const ModelParams& p, const LimitLaw& law, int n, int k_max,
                        std::uint64_t seed, const WeightField* fixed_weights,
                        EmpiricalStats* stats_out) {
    SimConfig sim;
    sim.n = n;
    sim.seed = seed;
    const TrajectoryEnsemble ens = fixed_weights != nullptr
                                       ? simulate(p, sim, *fixed_weights)
                                       : simulate(p, sim, sample_weights(p, sim));
    EmpiricalStats st = empirical_stats(ens, p, k_max);
    TrialDistance rec = distance_report(st, law, n);
    if (stats_out != nullptr) *stats_out = std::move(st);
    return rec;
}

void run_size_block(DistanceReport& rep, const ExperimentPlan& plan, const ModelParams& p,
                    const LimitLaw& law, bool quenched) {
    for (std::size_t ni = 0; ni < plan.n_list.size(); ++ni) {
        const int n = plan.n_list[ni];
        WeightField shared;
        if (quenched) {
            SimConfig js;
            js.n = n;
            js.seed = derive_seed(plan.seed, Stream::Weights, ni);
            shared = sample_weights(p, js);
        }
        std::vector<TrialDistance> recs(static_cast<std::size_t>(plan.trials_per_n));
        std::vector<EmpiricalStats> stats(recs.size());
        parallel_for(plan.trials_per_n, plan.threads, [&](int t) {
            const std::uint64_t seed =
                derive_seed(plan.seed, Stream::Trial, trial_key(0, ni, static_cast<std::uint64_t>(t)));
            recs[static_cast<std::size_t>(t)] =
                one_trial(p, law, n, plan.k_max, seed, quenched ? &shared : nullptr,
                          &stats[static_cast<std::size_t>(t)]);
            recs[static_cast<std::size_t>(t)].trial = t;
        });
        rep.summaries.push_back(summarize(n, recs, pool_stats(stats), law));
        rep.records.insert(rep.records.end(), recs.begin(), recs.end());
    }
}

} // namespace

double TrialDistance::max_cov_err() const {
    double m = 0.0;
    for (double e : cov_err) m = std::max(m, e);
    return m;
}

double TrialDistance::max_ks_stat() const {
    double m = 0.0;
    for (double s : ks_stat) m = std::max(m, s);
    return m;
}

double TrialDistance::min_ks_p() const {
    double m = 1.0;
    for (double p : ks_p) m = std::min(m, p);
    return m;
}

void parallel_for(int count, int threads, const std::function<void(int)>& body) {
    if (count <= 0) return;
    const int workers = std::min(threads, count);
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

TrialDistance distance_report(const EmpiricalStats& stats, const LimitLaw& law, int n) {
    if (stats.T != law.T) throw ConfigError("distance_report: statistics/law horizon mismatch");
    const int T = law.T;
    TrialDistance rec;
    rec.n = n;

    for (int s = 1; s <= T; ++s)
        rec.mean_err = std::max(rec.mean_err, std::abs(stats.c_hat(s) - law.c(s)));

    rec.cov_err.resize(stats.K_hat.size());
    for (std::size_t k = 0; k < stats.K_hat.size(); ++k) {
        double e = 0.0;
        for (int r = 1; r <= T; ++r)
            for (int s = 1; s <= T; ++s) {
                const double target = (k == 0 && r == s ? law.params.sigma2 : 0.0) +
                                      law.K_at(static_cast<int>(k), r, s);
                e = std::max(e, std::abs(stats.K_hat[k](r, s) - target));
            }
        rec.cov_err[k] = e;
    }

    rec.ks_stat.assign(static_cast<std::size_t>(T), 0.0);
    rec.ks_p.assign(static_cast<std::size_t>(T), 1.0);
    for (int s = 1; s <= T; ++s) {
        if (stats.marginal_pool.size() <= static_cast<std::size_t>(s)) break;
        const auto& pool = stats.marginal_pool[static_cast<std::size_t>(s)];
        if (pool.empty()) continue;
        const double mean = law.c(s);
        const double var = law.params.sigma2 + law.K[0](s, s);
        const double stat =
            ks_statistic(pool, [&](double x) { return normal_cdf(x, mean, var); });
        const double n_eff =
            static_cast<double>(pool.size()) / static_cast<double>(2 * law.d + 1);
        rec.ks_stat[static_cast<std::size_t>(s - 1)] = stat;
        rec.ks_p[static_cast<std::size_t>(s - 1)] = ks_pvalue(stat, n_eff);
    }
    return rec;
}

DistanceReport run_averaged_convergence(const ExperimentPlan& plan, const ModelParams& p,
                                        const QuadratureConfig& q) {
    validate_plan(plan, p);
    LimitLaw storage;
    const LimitLaw& law = resolve_reference(plan, p, q, storage);
    DistanceReport rep;
    rep.experiment = "averaged";
    run_size_block(rep, plan, p, law, /*quenched=*/false);
    return rep;
}

DistanceReport run_quenched_convergence(const ExperimentPlan& plan, const ModelParams& p,
                                        const QuadratureConfig& q) {
    validate_plan(plan, p);
    LimitLaw storage;
    const LimitLaw& law = resolve_reference(plan, p, q, storage);
    DistanceReport rep;
    rep.experiment = "quenched";
    run_size_block(rep, plan, p, law, /*quenched=*/true);

    if (!plan.exceed_n_list.empty()) {
        // exceedance sweep: one fresh (weights, noise) realization per draw
        for (std::size_t mi = 0; mi < plan.exceed_n_list.size(); ++mi) {
            ExceedancePoint pt;
            pt.n = plan.exceed_n_list[mi];
            pt.draws = plan.exceed_draws;
            pt.errors.resize(static_cast<std::size_t>(plan.exceed_draws));
            parallel_for(plan.exceed_draws, plan.threads, [&](int r) {
                const std::uint64_t seed = derive_seed(
                    plan.seed, Stream::Trial, trial_key(1, mi, static_cast<std::uint64_t>(r)));
                pt.errors[static_cast<std::size_t>(r)] =
                    one_trial(p, law, pt.n, plan.k_max, seed, nullptr, nullptr).mean_err;
            });
            rep.exceedance.push_back(std::move(pt));
        }
        // the deviation scale is model-dependent, so the threshold is anchored
        // to a multiple of the median error at the largest sweep size
        const double eps = plan.exceed_eps_mult * median(rep.exceedance.back().errors);
        for (auto& pt : rep.exceedance) {
            int count = 0;
            for (double e : pt.errors)
                if (e > eps) ++count;
            pt.eps = eps;
            pt.fraction = static_cast<double>(count) / static_cast<double>(pt.draws);
        }
    }
    return rep;
}

DistanceReport run_ergodic_path(const ExperimentPlan& plan, const ModelParams& p,
                                const QuadratureConfig& q, const WindowFunctional& h, int m) {
    validate_plan(plan, p);
    if (m < 0 || m > 3) throw ConfigError("run_ergodic_path: window radius outside [0,3]");
    LimitLaw storage;
    const LimitLaw& law = resolve_reference(plan, p, q, storage);
    DistanceReport rep;
    rep.experiment = "ergodic";

    // law-side expectation of h by streaming exact window samples
    WindowSampler sampler(law, m, plan.seed);
    double acc = 0.0, acc2 = 0.0;
    for (std::int64_t i = 0; i < plan.law_samples; ++i) {
        const double hv = h(sampler.next());
        acc += hv;
        acc2 += hv * hv;
    }
    const double N = static_cast<double>(plan.law_samples);
    rep.ref_value = acc / N;
    rep.ref_se =
        std::sqrt(std::max(0.0, (acc2 / N - rep.ref_value * rep.ref_value) / (N - 1.0)));

    for (std::size_t ni = 0; ni < plan.n_list.size(); ++ni) {
        const int n = plan.n_list[ni];
        SimConfig sim;
        sim.n = n;
        sim.seed = derive_seed(plan.seed, Stream::Trial, trial_key(2, ni, 0));
        const TrajectoryEnsemble ens = simulate(p, sim, sample_weights(p, sim));
        const ShiftAverage sa = empirical_test_function_stats(ens, h, m);
        ErgodicPoint pt;
        pt.n = n;
        pt.path_value = sa.mean;
        // windows further apart than their own width plus the coupling range
        // decorrelate; discount the shift count accordingly
        const double n_eff =
            static_cast<double>(2 * n + 1) / static_cast<double>(2 * m + 1 + 2 * law.d);
        pt.path_se = sa.sd / std::sqrt(n_eff);
        pt.gap = std::abs(sa.mean - rep.ref_value);
        pt.combined_se = std::hypot(pt.path_se, rep.ref_se);
        rep.ergodic.push_back(pt);
    }
    return rep;
}

DistanceReport run_ergodic_path(const ExperimentPlan& plan, const ModelParams& p,
                                const QuadratureConfig& q) {
    return run_ergodic_path(plan, p, q, make_window_functional(plan.functional, p),
                            plan.window_m);
}

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ConfigError("fit_loglog_slope: need at least two matching points");
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] <= 0.0 || y[i] <= 0.0)
            throw NumericalError("fit_loglog_slope: nonpositive data");
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace netlim
