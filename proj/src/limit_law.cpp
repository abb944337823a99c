#include "netlim/limit_law.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace netlim {

namespace {

constexpr double kMarginalPsdTol = -1e-10;
constexpr double kWindowPsdTol = -1e-8;

// sigma^2 Id + K^0 over times 1..t.
Eigen::MatrixXd gaussian_block(const LimitLaw& law, int t) {
    Eigen::MatrixXd S = Eigen::MatrixXd::Identity(t, t) * law.params.sigma2;
    for (int r = 1; r <= t; ++r)
        for (int s = 1; s <= t; ++s) S(r - 1, s - 1) += law.K[0](r, s);
    return S;
}

// K^l over rows 1..t, columns 1..s.
Eigen::MatrixXd cross_block(const LimitLaw& law, int l, int t, int s) {
    Eigen::MatrixXd B(t, s);
    for (int a = 1; a <= t; ++a)
        for (int b = 1; b <= s; ++b) B(a - 1, b - 1) = law.K_at(l, a, b);
    return B;
}

double min_eigenvalue(const Eigen::MatrixXd& A) {
    if (A.rows() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

void check_marginal_psd(const Eigen::MatrixXd& cov, const char* where) {
    const double mn = min_eigenvalue(cov);
    if (mn < kMarginalPsdTol) {
        std::ostringstream os;
        os << where << ": covariance min eigenvalue " << mn << " below tolerance "
           << kMarginalPsdTol;
        throw NumericalError(os.str());
    }
}

// PSD square root factor for sampling; eigenvalues in [tol, 0) are clipped.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov, const char* where) {
    if (cov.rows() == 0) return cov;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const double mn = es.eigenvalues().minCoeff();
    if (mn < kWindowPsdTol) {
        std::ostringstream os;
        os << where << ": covariance min eigenvalue " << mn << " below tolerance " << kWindowPsdTol;
        throw NumericalError(os.str());
    }
    return es.eigenvectors() *
           es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

// Affine statistics of X = Psi^{-1}(v)_t as a function of v_0:
//   X | v_0 ~ N(a_0 v_0 + base, var) with base = offset + a~.c.
struct ReducedCoord {
    double a0 = 1.0;
    double base = 0.0;
    Eigen::VectorXd tail;  // a_1..a_t, zero-padded to the shared horizon
};

ReducedCoord reduce_coord(const LimitLaw& law, int t, int horizon) {
    const AffineCoeffs co = psi_inverse_coeffs(t, law.params.gamma, law.params.theta_bar);
    ReducedCoord rc;
    rc.a0 = co.weights(0);
    rc.base = co.offset;
    rc.tail = Eigen::VectorXd::Zero(horizon);
    for (int j = 1; j <= t; ++j) {
        rc.tail(j - 1) = co.weights(j);
        rc.base += co.weights(j) * law.c(j);
    }
    return rc;
}

} // namespace

double mean_entry(const LimitLaw& law, int s, const ModelParams& p, const QuadratureConfig& q) {
    const int t = s - 1;
    const ReducedCoord rc = reduce_coord(law, t, t);
    const double var = t > 0 ? double(rc.tail.transpose() * gaussian_block(law, t) * rc.tail) : 0.0;
    double acc = 0.0;
    for (const auto& [x0, w0] : p.mu_init.quadrature_atoms(q.init_nodes, q.degenerate_eps))
        acc += w0 * expect_f(p.f, rc.a0 * x0 + rc.base, var, q);
    return p.j_bar * acc;
}

double moment_same(const LimitLaw& law, int r, int s, const ModelParams& p,
                   const QuadratureConfig& q) {
    const int pp = std::max(r, s) - 1;
    const ReducedCoord rr = reduce_coord(law, r - 1, pp);
    const ReducedCoord rs = reduce_coord(law, s - 1, pp);
    double var_r = 0.0, var_s = 0.0, cross = 0.0;
    if (pp > 0) {
        const Eigen::MatrixXd S = gaussian_block(law, pp);
        var_r = rr.tail.transpose() * S * rr.tail;
        var_s = rs.tail.transpose() * S * rs.tail;
        cross = rr.tail.transpose() * S * rs.tail;
    }
    double acc = 0.0;
    for (const auto& [x0, w0] : p.mu_init.quadrature_atoms(q.init_nodes, q.degenerate_eps)) {
        const double m1 = rr.a0 * x0 + rr.base;
        const double m2 = rs.a0 * x0 + rs.base;
        if (r == s) {
            acc += w0 * expect_f_sq(p.f, m1, var_r, q);
        } else {
            Eigen::Matrix2d C;
            C << var_r, cross, cross, var_s;
            acc += w0 * expect_ff(p.f, Eigen::Vector2d(m1, m2), C, q);
        }
    }
    return acc;
}

double moment_cross(const LimitLaw& law, int l, int r, int s, const ModelParams& p,
                    const QuadratureConfig& q) {
    if (l == 0) throw ConfigError("moment_cross: lag must be nonzero");
    const int tr = r - 1, ts = s - 1;
    const ReducedCoord rr = reduce_coord(law, tr, tr);
    const ReducedCoord rs = reduce_coord(law, ts, ts);
    const double var_r =
        tr > 0 ? double(rr.tail.transpose() * gaussian_block(law, tr) * rr.tail) : 0.0;
    const double var_s =
        ts > 0 ? double(rs.tail.transpose() * gaussian_block(law, ts) * rs.tail) : 0.0;
    const double cross =
        (tr > 0 && ts > 0)
            ? double(rr.tail.transpose() * cross_block(law, l, tr, ts) * rs.tail)
            : 0.0;
    const auto atoms = p.mu_init.quadrature_atoms(q.init_nodes, q.degenerate_eps);
    double acc = 0.0;
    for (const auto& [x1, w1] : atoms) {
        for (const auto& [x2, w2] : atoms) {
            Eigen::Matrix2d C;
            C << var_r, cross, cross, var_s;
            acc += w1 * w2 *
                   expect_ff(p.f, Eigen::Vector2d(rr.a0 * x1 + rr.base, rs.a0 * x2 + rs.base), C,
                             q);
        }
    }
    return acc;
}

double assemble_K(const LimitLaw& law, const CovFunction& lambda, double theta2, int k, int r,
                  int s) {
    if (std::abs(k) > lambda.d()) return 0.0;
    double acc = (k == 0) ? theta2 : 0.0;
    for (int l = -law.LM; l <= law.LM; ++l) {
        const double lv = lambda(k, l);
        if (lv != 0.0) acc += lv * law.M_at(l, r, s);
    }
    return acc;
}

LimitLaw solve_limit_law(const ModelParams& p_in, const QuadratureConfig& q) {
    const ModelParams p = validate_params(p_in);
    if (q.gauss_nodes < 2 || q.init_nodes < 2)
        throw ConfigError("quadrature: node counts must be at least 2");

    LimitLaw law;
    law.params = p;
    law.T = p.horizon_T;
    law.d = p.lambda.d();
    law.LM = p.lambda.moment_lag_extent();
    law.c = Eigen::VectorXd::Zero(law.T + 1);
    law.K.assign(static_cast<std::size_t>(law.d) + 1,
                 Eigen::MatrixXd::Zero(law.T + 1, law.T + 1));
    law.M.assign(static_cast<std::size_t>(law.LM) + 1,
                 Eigen::MatrixXd::Zero(law.T + 1, law.T + 1));

    for (int t = 1; t <= law.T; ++t) {
        law.c(t) = mean_entry(law, t, p, q);
        for (int r = 1; r <= t; ++r) {
            const double v = moment_same(law, r, t, p, q);
            law.M[0](r, t) = v;
            law.M[0](t, r) = v;
        }
        for (int l = 1; l <= law.LM; ++l) {
            for (int r = 1; r <= t; ++r) law.M[static_cast<std::size_t>(l)](r, t) =
                moment_cross(law, l, r, t, p, q);
            for (int s = 1; s < t; ++s) law.M[static_cast<std::size_t>(l)](t, s) =
                moment_cross(law, l, t, s, p, q);
        }
        for (int k = 0; k <= law.d; ++k) {
            for (int r = 1; r <= t; ++r) law.K[static_cast<std::size_t>(k)](r, t) =
                assemble_K(law, p.lambda, p.theta2, k, r, t);
            for (int s = 1; s < t; ++s) law.K[static_cast<std::size_t>(k)](t, s) =
                assemble_K(law, p.lambda, p.theta2, k, t, s);
        }
    }
    return law;
}

GaussianMarginal single_marginal(const LimitLaw& law, int t) {
    if (t < 0 || t > law.T) throw ConfigError("single_marginal: time outside [0, T]");
    GaussianMarginal g;
    g.init = law.params.mu_init;
    g.times = {t};
    g.mean = law.c.segment(1, t);
    g.cov = gaussian_block(law, t);
    check_marginal_psd(g.cov, "single_marginal");
    return g;
}

GaussianMarginal pair_marginal(const LimitLaw& law, int l, int t, int s) {
    if (l == 0) throw ConfigError("pair_marginal: lag must be nonzero");
    if (t < 0 || t > law.T || s < 0 || s > law.T)
        throw ConfigError("pair_marginal: time outside [0, T]");
    GaussianMarginal g;
    g.init = law.params.mu_init;
    g.times = {t, s};
    g.mean.resize(t + s);
    g.mean << law.c.segment(1, t), law.c.segment(1, s);
    g.cov = Eigen::MatrixXd::Zero(t + s, t + s);
    g.cov.topLeftCorner(t, t) = gaussian_block(law, t);
    g.cov.bottomRightCorner(s, s) = gaussian_block(law, s);
    g.cov.topRightCorner(t, s) = cross_block(law, l, t, s);
    g.cov.bottomLeftCorner(s, t) = g.cov.topRightCorner(t, s).transpose();
    check_marginal_psd(g.cov, "pair_marginal");
    return g;
}

LimitLaw apply_Q(const LimitLaw& nu, const ModelParams& p, const QuadratureConfig& q) {
    LimitLaw out;
    out.params = p;
    out.T = nu.T;
    out.d = p.lambda.d();
    out.LM = p.lambda.moment_lag_extent();
    out.c = Eigen::VectorXd::Zero(out.T + 1);
    out.K.assign(static_cast<std::size_t>(out.d) + 1,
                 Eigen::MatrixXd::Zero(out.T + 1, out.T + 1));
    out.M.assign(static_cast<std::size_t>(out.LM) + 1,
                 Eigen::MatrixXd::Zero(out.T + 1, out.T + 1));
    for (int s = 1; s <= out.T; ++s) out.c(s) = mean_entry(nu, s, p, q);
    for (int r = 1; r <= out.T; ++r)
        for (int s = 1; s <= out.T; ++s) {
            out.M[0](r, s) = moment_same(nu, r, s, p, q);
            for (int l = 1; l <= out.LM; ++l)
                out.M[static_cast<std::size_t>(l)](r, s) = moment_cross(nu, l, r, s, p, q);
        }
    for (int k = 0; k <= out.d; ++k)
        for (int r = 1; r <= out.T; ++r)
            for (int s = 1; s <= out.T; ++s)
                out.K[static_cast<std::size_t>(k)](r, s) =
                    assemble_K(out, p.lambda, p.theta2, k, r, s);
    return out;
}

McResult mc_moment_oracle(const LimitLaw& law, const OracleTarget& target, std::int64_t N,
                          std::uint64_t seed, const IntegrandHook& hook) {
    if (N < 100) throw ConfigError("mc_moment_oracle: need at least 100 samples");
    const ModelParams& p = law.params;
    const auto f = [&](double x) { return hook ? hook(x) : p.f(x); };

    GaussianMarginal marg;
    switch (target.kind) {
        case OracleTarget::Kind::Mean: marg = single_marginal(law, target.s - 1); break;
        case OracleTarget::Kind::Same:
            marg = single_marginal(law, std::max(target.r, target.s) - 1);
            break;
        case OracleTarget::Kind::Cross:
            marg = pair_marginal(law, target.lag, target.r - 1, target.s - 1);
            break;
    }
    const Eigen::MatrixXd L = psd_factor(marg.cov, "mc_moment_oracle");
    const int dim = static_cast<int>(marg.mean.size());

    // Decorrelate oracle streams across targets sharing one seed.
    const std::uint64_t idx = (static_cast<std::uint64_t>(static_cast<int>(target.kind) + 1) << 48) ^
                              (static_cast<std::uint64_t>(target.lag & 0xffff) << 32) ^
                              (static_cast<std::uint64_t>(target.r) << 16) ^
                              static_cast<std::uint64_t>(target.s);
    Rng rng = make_rng(seed, Stream::MonteCarlo, idx);
    std::normal_distribution<double> stdnorm(0.0, 1.0);

    Eigen::VectorXd z(dim), g(dim);
    double sum = 0.0, sumsq = 0.0;
    for (std::int64_t i = 0; i < N; ++i) {
        const double v01 = marg.init.sample(rng);
        const double v02 = (marg.times.size() == 2) ? marg.init.sample(rng) : 0.0;
        for (int j = 0; j < dim; ++j) z(j) = stdnorm(rng);
        g = marg.mean + L * z;

        double value = 0.0;
        if (target.kind == OracleTarget::Kind::Cross) {
            const int t1 = marg.times[0], t2 = marg.times[1];
            Eigen::VectorXd v1(t1 + 1), v2(t2 + 1);
            v1(0) = v01;
            v1.tail(t1) = g.head(t1);
            v2(0) = v02;
            v2.tail(t2) = g.tail(t2);
            const Eigen::VectorXd u1 = psi_inverse(v1, p.gamma, p.theta_bar);
            const Eigen::VectorXd u2 = psi_inverse(v2, p.gamma, p.theta_bar);
            value = f(u1(target.r - 1)) * f(u2(target.s - 1));
        } else {
            const int t1 = marg.times[0];
            Eigen::VectorXd v(t1 + 1);
            v(0) = v01;
            v.tail(t1) = g;
            const Eigen::VectorXd u = psi_inverse(v, p.gamma, p.theta_bar);
            value = (target.kind == OracleTarget::Kind::Mean)
                        ? p.j_bar * f(u(target.s - 1))
                        : f(u(target.r - 1)) * f(u(target.s - 1));
        }
        sum += value;
        sumsq += value * value;
    }
    McResult res;
    res.estimate = sum / static_cast<double>(N);
    const double var =
        std::max(0.0, (sumsq - sum * sum / static_cast<double>(N)) / static_cast<double>(N - 1));
    res.stderr_ = std::sqrt(var / static_cast<double>(N));
    return res;
}

WindowCovariance window_covariance(const LimitLaw& law, int m) {
    if (m < 0) throw ConfigError("window_covariance: negative window radius");
    const int T = law.T;
    const int W = 2 * m + 1;
    WindowCovariance wc;
    wc.mean.resize(W * T);
    wc.cov = Eigen::MatrixXd::Zero(W * T, W * T);
    for (int j = 0; j < W; ++j) wc.mean.segment(j * T, T) = law.c.segment(1, T);
    for (int j = 0; j < W; ++j) {
        for (int jp = 0; jp < W; ++jp) {
            const int lag = jp - j;
            if (std::abs(lag) > law.d && j != jp) continue;
            Eigen::MatrixXd blk = Eigen::MatrixXd::Zero(T, T);
            if (std::abs(lag) <= law.d)
                for (int r = 1; r <= T; ++r)
                    for (int s = 1; s <= T; ++s) blk(r - 1, s - 1) = law.K_at(lag, r, s);
            if (j == jp) blk += law.params.sigma2 * Eigen::MatrixXd::Identity(T, T);
            wc.cov.block(j * T, jp * T, T, T) = blk;
        }
    }
    wc.min_eig = min_eigenvalue(wc.cov);
    if (wc.min_eig < kWindowPsdTol) {
        std::ostringstream os;
        os << "window_covariance: min eigenvalue " << wc.min_eig << " below tolerance "
           << kWindowPsdTol;
        throw NumericalError(os.str());
    }
    return wc;
}

WindowSampler::WindowSampler(const LimitLaw& law, int m, std::uint64_t seed)
    : law_(law),
      m_(m),
      wc_(window_covariance(law, m)),
      L_(psd_factor(wc_.cov, "WindowSampler")),
      rng_(make_rng(seed, Stream::WindowSampling, 0)) {}

Eigen::MatrixXd WindowSampler::next() {
    const int T = law_.T;
    const int W = 2 * m_ + 1;
    const int dim = W * T;
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    Eigen::VectorXd v0(W), z(dim);
    for (int j = 0; j < W; ++j) v0(j) = law_.params.mu_init.sample(rng_);
    for (int j = 0; j < dim; ++j) z(j) = stdnorm(rng_);
    const Eigen::VectorXd vflat = wc_.mean + L_ * z;
    Eigen::MatrixXd u(W, T + 1);
    Eigen::VectorXd v(T + 1);
    for (int j = 0; j < W; ++j) {
        v(0) = v0(j);
        v.tail(T) = vflat.segment(j * T, T);
        u.row(j) = psi_inverse(v, law_.params.gamma, law_.params.theta_bar).transpose();
    }
    return u;
}

std::vector<Eigen::MatrixXd> sample_limit_law(const LimitLaw& law, int m, std::int64_t N,
                                              std::uint64_t seed) {
    WindowSampler sampler(law, m, seed);
    std::vector<Eigen::MatrixXd> out;
    out.reserve(static_cast<std::size_t>(N));
    for (std::int64_t i = 0; i < N; ++i) out.push_back(sampler.next());
    return out;
}

} // namespace netlim
