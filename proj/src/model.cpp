#include "netlim/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "netlim/quadrature.hpp"

namespace netlim {

CovFunction::CovFunction(int d, std::vector<double> values) : d_(d), values_(std::move(values)) {
    if (d_ < 0) throw ConfigError("covariance: negative interaction range d");
    const std::size_t expect = static_cast<std::size_t>(2 * d_ + 1) * static_cast<std::size_t>(2 * d_ + 1);
    if (values_.size() != expect) {
        std::ostringstream os;
        os << "covariance: expected " << expect << " values for d=" << d_ << ", got " << values_.size();
        throw ConfigError(os.str());
    }
}

bool CovFunction::is_point_symmetric(double tol) const {
    for (int k = -d_; k <= d_; ++k)
        for (int l = -d_; l <= d_; ++l)
            if (std::abs((*this)(k, l) - (*this)(-k, -l)) > tol) return false;
    return true;
}

int CovFunction::moment_lag_extent() const {
    int ext = 0;
    for (int k = -d_; k <= d_; ++k)
        for (int l = -d_; l <= d_; ++l)
            if ((*this)(k, l) != 0.0) ext = std::max(ext, std::abs(l));
    return ext;
}

bool CovFunction::is_zero() const {
    return std::all_of(values_.begin(), values_.end(), [](double x) { return x == 0.0; });
}

InitialLaw InitialLaw::point_mass(double u0) {
    InitialLaw law;
    law.kind_ = Kind::PointMass;
    law.u0_ = u0;
    return law;
}

InitialLaw InitialLaw::gaussian(double m0, double s02) {
    InitialLaw law;
    law.kind_ = Kind::Gaussian;
    law.m0_ = m0;
    law.s02_ = s02;
    return law;
}

InitialLaw InitialLaw::discrete(std::vector<std::pair<double, double>> atoms) {
    InitialLaw law;
    law.kind_ = Kind::Discrete;
    law.atoms_ = std::move(atoms);
    return law;
}

double InitialLaw::mean() const {
    switch (kind_) {
        case Kind::PointMass: return u0_;
        case Kind::Gaussian: return m0_;
        case Kind::Discrete: {
            double m = 0.0;
            for (const auto& [x, w] : atoms_) m += w * x;
            return m;
        }
    }
    return 0.0;
}

double InitialLaw::variance() const {
    switch (kind_) {
        case Kind::PointMass: return 0.0;
        case Kind::Gaussian: return s02_;
        case Kind::Discrete: {
            const double m = mean();
            double v = 0.0;
            for (const auto& [x, w] : atoms_) v += w * (x - m) * (x - m);
            return v;
        }
    }
    return 0.0;
}

std::vector<std::pair<double, double>> InitialLaw::quadrature_atoms(int gauss_nodes,
                                                                    double degenerate_eps) const {
    switch (kind_) {
        case Kind::PointMass: return {{u0_, 1.0}};
        case Kind::Discrete: return atoms_;
        case Kind::Gaussian: {
            if (s02_ <= degenerate_eps) return {{m0_, 1.0}};
            // E phi(N(m,s2)) = sum_i w_i/sqrt(pi) * phi(m + sqrt(2 s2) x_i)
            const GaussHermite& gh = gauss_hermite(gauss_nodes);
            const double s = std::sqrt(2.0 * s02_);
            const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
            std::vector<std::pair<double, double>> atoms;
            atoms.reserve(static_cast<std::size_t>(gh.x.size()));
            for (Eigen::Index i = 0; i < gh.x.size(); ++i)
                atoms.emplace_back(m0_ + s * gh.x(i), gh.w(i) * inv_sqrt_pi);
            return atoms;
        }
    }
    return {};
}

double InitialLaw::sample(Rng& rng) const {
    switch (kind_) {
        case Kind::PointMass: return u0_;
        case Kind::Gaussian: {
            if (s02_ <= 0.0) return m0_;
            std::normal_distribution<double> n(m0_, std::sqrt(s02_));
            return n(rng);
        }
        case Kind::Discrete: {
            std::uniform_real_distribution<double> u01(0.0, 1.0);
            double r = u01(rng);
            for (const auto& [x, w] : atoms_) {
                r -= w;
                if (r <= 0.0) return x;
            }
            return atoms_.back().first;
        }
    }
    return 0.0;
}

std::vector<std::string> InitialLaw::check() const {
    std::vector<std::string> bad;
    if (kind_ == Kind::Gaussian && s02_ < 0.0) bad.push_back("mu_init: gaussian variance negative");
    if (kind_ == Kind::Discrete) {
        if (atoms_.empty()) bad.push_back("mu_init: discrete law has no atoms");
        double total = 0.0;
        bool neg = false;
        for (const auto& [x, w] : atoms_) {
            (void)x;
            total += w;
            if (w < 0.0) neg = true;
        }
        if (neg) bad.push_back("mu_init: discrete law has a negative weight");
        if (!atoms_.empty() && std::abs(total - 1.0) > 1e-12)
            bad.push_back("mu_init: discrete weights do not sum to 1");
    }
    return bad;
}

ModelParams validate_params(const ModelParams& p) {
    std::vector<std::string> bad;
    if (!(p.gamma >= 0.0 && p.gamma < 1.0)) bad.push_back("gamma out of [0,1)");
    if (!(p.sigma2 > 0.0)) bad.push_back("sigma2 not positive");
    if (p.theta2 < 0.0) bad.push_back("theta2 negative");
    if (!(p.f.g > 0.0)) bad.push_back("sigmoid slope not positive");
    if (p.horizon_T < 1) bad.push_back("horizon_T below 1");
    if (!p.lambda.is_point_symmetric()) bad.push_back("lambda point-symmetry violated");
    for (const auto& msg : p.mu_init.check()) bad.push_back(msg);
    if (!bad.empty()) {
        std::ostringstream os;
        os << "invalid model parameters:";
        for (const auto& msg : bad) os << "\n  - " << msg;
        throw ConfigError(os.str());
    }
    return p;
}

Eigen::VectorXd psi_forward(const Eigen::VectorXd& u, double gamma, double theta_bar) {
    Eigen::VectorXd v(u.size());
    if (u.size() == 0) return v;
    v(0) = u(0);
    for (Eigen::Index s = 1; s < u.size(); ++s) v(s) = u(s) - gamma * u(s - 1) - theta_bar;
    return v;
}

Eigen::VectorXd psi_inverse(const Eigen::VectorXd& v, double gamma, double theta_bar) {
    Eigen::VectorXd u(v.size());
    if (v.size() == 0) return u;
    u(0) = v(0);
    for (Eigen::Index s = 1; s < v.size(); ++s) u(s) = gamma * u(s - 1) + v(s) + theta_bar;
    return u;
}

AffineCoeffs psi_inverse_coeffs(int t, double gamma, double theta_bar) {
    AffineCoeffs c;
    c.weights.resize(t + 1);
    double p = 1.0;  // gamma^(t-j) accumulated from j=t downward
    for (int j = t; j >= 0; --j) {
        c.weights(j) = p;
        p *= gamma;
    }
    // theta_bar (gamma^t - 1)/(gamma - 1) = theta_bar sum_{i=0}^{t-1} gamma^i
    double s = 0.0;
    double q = 1.0;
    for (int i = 0; i < t; ++i) {
        s += q;
        q *= gamma;
    }
    c.offset = theta_bar * s;
    return c;
}

SpectralCheck lambda_psd_check(const CovFunction& lambda, int torus_size) {
    if (torus_size < 1 || torus_size % 2 == 0)
        throw ConfigError("lambda_psd_check: torus size must be odd and positive");
    if (torus_size <= 2 * lambda.d())
        throw ConfigError("lambda_psd_check: torus too small for the covariance support");
    const int N = torus_size;
    const int d = lambda.d();
    // DFT of the periodized covariance table: S(p,q) = sum_{k,l} Lambda(k,l)
    // cos(2 pi (p k + q l)/N); real because Lambda is point-symmetric.  With
    // N > 2d the lags never wrap onto each other, so the sum over the support
    // is the full periodized transform.
    SpectralCheck out;
    out.min_value = std::numeric_limits<double>::infinity();
    const double two_pi = 2.0 * M_PI;
    for (int p = 0; p < N; ++p) {
        for (int q = 0; q < N; ++q) {
            double s = 0.0;
            for (int k = -d; k <= d; ++k)
                for (int l = -d; l <= d; ++l)
                    s += lambda(k, l) * std::cos(two_pi * (static_cast<double>(p) * k +
                                                           static_cast<double>(q) * l) / N);
            out.min_value = std::min(out.min_value, s);
        }
    }
    out.pass = out.min_value >= -1e-10;
    return out;
}

} // namespace netlim
