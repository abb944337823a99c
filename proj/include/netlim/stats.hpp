#pragma once

#include <functional>
#include <vector>

namespace netlim {

double normal_cdf(double x, double mean, double var);

/// One-sample Kolmogorov-Smirnov statistic sup_x |F_n(x) - F(x)|.
double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf);

/// Asymptotic p-value for a KS statistic at (effective) sample size n_eff,
/// with the usual small-sample correction of the argument.
double ks_pvalue(double stat, double n_eff);

/// Two-sample KS statistic sup_x |F_a(x) - F_b(x)|.
double ks_two_sample_statistic(std::vector<double> a, std::vector<double> b);
double ks_two_sample_pvalue(double stat, std::size_t na, std::size_t nb);

/// Linear-interpolation quantile (q in [0,1]) of an unsorted sample.
double quantile(std::vector<double> v, double q);
double median(std::vector<double> v);
double interquartile_range(std::vector<double> v);

} // namespace netlim
