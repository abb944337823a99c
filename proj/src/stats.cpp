#include "netlim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "netlim/errors.hpp"

namespace netlim {

double normal_cdf(double x, double mean, double var) {
    if (var <= 0.0) return x < mean ? 0.0 : 1.0;
    return 0.5 * std::erfc((mean - x) / std::sqrt(2.0 * var));
}

double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
    if (sample.empty()) throw ConfigError("ks_statistic: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double stat = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double F = cdf(sample[i]);
        const double lo = static_cast<double>(i) / n;
        const double hi = static_cast<double>(i + 1) / n;
        stat = std::max({stat, std::abs(F - lo), std::abs(hi - F)});
    }
    return stat;
}

double ks_pvalue(double stat, double n_eff) {
    if (n_eff <= 0.0) throw ConfigError("ks_pvalue: nonpositive effective sample size");
    const double sn = std::sqrt(n_eff);
    const double lambda = (sn + 0.12 + 0.11 / sn) * stat;
    if (lambda < 1e-8) return 1.0;
    // Kolmogorov tail sum 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2)
    double sum = 0.0, sign = 1.0;
    const double a = -2.0 * lambda * lambda;
    for (int k = 1; k <= 100; ++k) {
        const double term = sign * std::exp(a * k * k);
        sum += term;
        if (std::abs(term) < 1e-12 * std::abs(sum) || std::abs(term) < 1e-300) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_two_sample_statistic(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ConfigError("ks_two_sample_statistic: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double stat = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        stat = std::max(stat, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return stat;
}

double ks_two_sample_pvalue(double stat, std::size_t na, std::size_t nb) {
    const double n_eff = static_cast<double>(na) * static_cast<double>(nb) /
                         static_cast<double>(na + nb);
    return ks_pvalue(stat, n_eff);
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw ConfigError("quantile: empty sample");
    if (q < 0.0 || q > 1.0) throw ConfigError("quantile: q outside [0,1]");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= v.size()) return v.back();
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

double interquartile_range(std::vector<double> v) {
    const double q1 = quantile(v, 0.25);
    const double q3 = quantile(std::move(v), 0.75);
    return q3 - q1;
}

} // namespace netlim
