#include "netlim/network.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <random>
#include <sstream>

namespace netlim {

namespace {

std::mutex g_fftw_mutex;  // fftw plan creation/destruction is not thread-safe

int wrap_lag(int k, int N) {
    int r = ((k % N) + N) % N;
    return r > N / 2 ? r - N : r;
}

void check_torus(const ModelParams& p, int n) {
    if (n < 1) throw ConfigError("network: population radius n must be >= 1");
    if (2 * n + 1 <= 2 * p.lambda.d())
        throw ConfigError("network: torus 2n+1 must exceed twice the covariance range d");
}

} // namespace

WeightSampler::WeightSampler(const ModelParams& p, int n, WeightMethod method)
    : N_(2 * n + 1), mean_(p.j_bar / (2 * n + 1)), method_(method) {
    check_torus(p, n);
    const SpectralCheck chk = lambda_psd_check(p.lambda, N_);
    if (!chk.pass) {
        std::ostringstream os;
        os << "weight sampler: covariance spectrally invalid on torus " << N_
           << " (min spectral value " << chk.min_value << ")";
        throw NumericalError(os.str());
    }
    const int N = N_;

    if (method_ == WeightMethod::DirectFactorization) {
        if (n > 6)
            throw ConfigError("direct-factorization weight sampling is a cross-check, n <= 6 only");
        // full covariance of the N^2 field values, C[(i,j),(i',j')] = Lambda_wrap/N
        Eigen::MatrixXd C(N * N, N * N);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j)
                for (int ip = 0; ip < N; ++ip)
                    for (int jp = 0; jp < N; ++jp)
                        C(i * N + j, ip * N + jp) =
                            p.lambda(wrap_lag(i - ip, N), wrap_lag(j - jp, N)) / N;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
        if (es.eigenvalues().minCoeff() < -1e-10)
            throw NumericalError("weight sampler: block-circulant covariance not PSD");
        factor_ = es.eigenvectors() *
                  es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
        return;
    }

    // spectral synthesis: S = Re(FFT_fwd(Lambda_wrap / N))
    buf_.assign(static_cast<std::size_t>(N) * N, {0.0, 0.0});
    for (int k = -p.lambda.d(); k <= p.lambda.d(); ++k)
        for (int l = -p.lambda.d(); l <= p.lambda.d(); ++l) {
            const int a = ((k % N) + N) % N;
            const int b = ((l % N) + N) % N;
            buf_[static_cast<std::size_t>(a) * N + b] = p.lambda(k, l) / N;
        }
    {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        fftw_plan fwd = fftw_plan_dft_2d(N, N, reinterpret_cast<fftw_complex*>(buf_.data()),
                                         reinterpret_cast<fftw_complex*>(buf_.data()),
                                         FFTW_FORWARD, FFTW_ESTIMATE);
        fftw_execute(fwd);
        fftw_destroy_plan(fwd);
    }
    S_.resize(N, N);
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) S_(a, b) = buf_[static_cast<std::size_t>(a) * N + b].real();
    const double scale = std::max(1.0, S_.cwiseAbs().maxCoeff());
    if (S_.minCoeff() < -1e-10 * scale)
        throw NumericalError("weight sampler: periodized spectrum went negative");
    sqrtS_ = S_.cwiseMax(0.0).cwiseSqrt();
    {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        plan_ = fftw_plan_dft_2d(N, N, reinterpret_cast<fftw_complex*>(buf_.data()),
                                 reinterpret_cast<fftw_complex*>(buf_.data()), FFTW_BACKWARD,
                                 FFTW_ESTIMATE);
    }
}

WeightSampler::~WeightSampler() {
    if (plan_ != nullptr) {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        fftw_destroy_plan(static_cast<fftw_plan>(plan_));
    }
}

WeightField WeightSampler::draw(Rng& rng) {
    const int N = N_;
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    WeightField w;
    w.method = method_;
    w.J.resize(N, N);

    if (method_ == WeightMethod::DirectFactorization) {
        Eigen::VectorXd z(N * N);
        for (int i = 0; i < N * N; ++i) z(i) = stdnorm(rng);
        const Eigen::VectorXd g = factor_ * z;
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) w.J(i, j) = mean_ + g(i * N + j);
        return w;
    }

    // G = Re(FFT_bwd(sqrt(S) o zeta)) / N with zeta complex standard normal
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
            const double re = stdnorm(rng);
            const double im = stdnorm(rng);
            buf_[static_cast<std::size_t>(a) * N + b] =
                std::complex<double>(sqrtS_(a, b) * re, sqrtS_(a, b) * im);
        }
    fftw_execute(static_cast<fftw_plan>(plan_));
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b)
            w.J(a, b) = mean_ + buf_[static_cast<std::size_t>(a) * N + b].real() / N;
    return w;
}

WeightField sample_weights(const ModelParams& p, const SimConfig& sim) {
    WeightSampler sampler(p, sim.n, sim.weight_method);
    Rng rng = make_rng(sim.seed, Stream::Weights);
    return sampler.draw(rng);
}

TrajectoryEnsemble simulate(const ModelParams& p, const SimConfig& sim, const WeightField& w) {
    check_torus(p, sim.n);
    const int N = 2 * sim.n + 1;
    if (w.J.rows() != N || w.J.cols() != N)
        throw ConfigError("simulate: weight matrix shape does not match n");
    const int T = p.horizon_T;

    TrajectoryEnsemble ens;
    ens.seed = sim.seed;
    ens.u.resize(N, T + 1);
    ens.theta.resize(N);
    ens.B.resize(N, T);

    Rng rng = make_rng(sim.seed, Stream::Simulation);
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    // draw order: u_0 across neurons, then theta, then B column by column
    for (int j = 0; j < N; ++j) ens.u(j, 0) = p.mu_init.sample(rng);
    const double theta_sd = std::sqrt(p.theta2);
    for (int j = 0; j < N; ++j)
        ens.theta(j) = p.theta_bar + (p.theta2 > 0.0 ? theta_sd * stdnorm(rng) : 0.0);
    const double noise_sd = std::sqrt(p.sigma2);

    Eigen::VectorXd rate(N);
    for (int t = 1; t <= T; ++t) {
        for (int j = 0; j < N; ++j) ens.B(j, t - 1) = noise_sd * stdnorm(rng);
        for (int j = 0; j < N; ++j) rate(j) = p.f(ens.u(j, t - 1));
        ens.u.col(t) =
            p.gamma * ens.u.col(t - 1) + w.J * rate + ens.theta + ens.B.col(t - 1);
    }
    return ens;
}

EmpiricalStats empirical_stats(const TrajectoryEnsemble& ens, const ModelParams& p, int k_max) {
    const int N = static_cast<int>(ens.u.rows());
    const int T = static_cast<int>(ens.u.cols()) - 1;
    if (k_max < 0 || 2 * k_max >= N)
        throw ConfigError("empirical_stats: lag range k_max out of range for this population");

    EmpiricalStats st;
    st.n = (N - 1) / 2;
    st.T = T;

    // v-coordinates per neuron
    Eigen::MatrixXd v(N, T + 1);
    v.col(0) = ens.u.col(0);
    for (int s = 1; s <= T; ++s)
        v.col(s) = ens.u.col(s) - p.gamma * ens.u.col(s - 1) -
                   Eigen::VectorXd::Constant(N, p.theta_bar);

    st.c_hat = Eigen::VectorXd::Zero(T + 1);
    for (int s = 1; s <= T; ++s) st.c_hat(s) = v.col(s).mean();

    Eigen::MatrixXd vc = v.rightCols(T);
    for (int s = 0; s < T; ++s) vc.col(s).array() -= st.c_hat(s + 1);

    st.K_hat.assign(static_cast<std::size_t>(k_max) + 1,
                    Eigen::MatrixXd::Zero(T + 1, T + 1));
    for (int k = 0; k <= k_max; ++k) {
        Eigen::MatrixXd& K = st.K_hat[static_cast<std::size_t>(k)];
        for (int r = 1; r <= T; ++r)
            for (int s = 1; s <= T; ++s) {
                double acc = 0.0;
                for (int j = 0; j < N; ++j) acc += vc(j, r - 1) * vc((j + k) % N, s - 1);
                K(r, s) = acc / N;
            }
    }

    st.marginal_pool.assign(static_cast<std::size_t>(T) + 1, {});
    for (int s = 0; s <= T; ++s) {
        auto& pool = st.marginal_pool[static_cast<std::size_t>(s)];
        pool.resize(static_cast<std::size_t>(N));
        for (int j = 0; j < N; ++j) pool[static_cast<std::size_t>(j)] = v(j, s);
    }
    return st;
}

EmpiricalStats pool_stats(const std::vector<EmpiricalStats>& per_trial) {
    if (per_trial.empty()) throw ConfigError("pool_stats: no statistics to pool");
    EmpiricalStats agg = per_trial.front();
    for (std::size_t t = 1; t < per_trial.size(); ++t) {
        const EmpiricalStats& st = per_trial[t];
        if (st.T != agg.T || st.K_hat.size() != agg.K_hat.size())
            throw ConfigError("pool_stats: mismatched statistics records");
        agg.c_hat += st.c_hat;
        for (std::size_t k = 0; k < agg.K_hat.size(); ++k) agg.K_hat[k] += st.K_hat[k];
        for (std::size_t s = 0; s < agg.marginal_pool.size(); ++s)
            agg.marginal_pool[s].insert(agg.marginal_pool[s].end(), st.marginal_pool[s].begin(),
                                        st.marginal_pool[s].end());
    }
    const double inv = 1.0 / static_cast<double>(per_trial.size());
    agg.c_hat *= inv;
    for (auto& K : agg.K_hat) K *= inv;
    return agg;
}

ShiftAverage empirical_test_function_stats(const TrajectoryEnsemble& ens,
                                           const WindowFunctional& h, int m) {
    const int N = static_cast<int>(ens.u.rows());
    const int T = static_cast<int>(ens.u.cols()) - 1;
    if (m < 0 || 2 * m + 1 > N) throw ConfigError("empirical_test_function: window exceeds torus");
    Eigen::MatrixXd window(2 * m + 1, T + 1);
    double acc = 0.0, acc2 = 0.0;
    for (int j = 0; j < N; ++j) {
        for (int o = -m; o <= m; ++o) window.row(o + m) = ens.u.row(((j + o) % N + N) % N);
        const double hv = h(window);
        acc += hv;
        acc2 += hv * hv;
    }
    ShiftAverage out;
    out.mean = acc / N;
    out.sd = std::sqrt(std::max(0.0, acc2 / N - out.mean * out.mean));
    return out;
}

double empirical_test_function(const TrajectoryEnsemble& ens, const WindowFunctional& h, int m) {
    return empirical_test_function_stats(ens, h, m).mean;
}

WindowFunctional make_window_functional(const std::string& name, const ModelParams& p) {
    const SigmoidSpec f = p.f;
    if (name == "one") return [](const Eigen::MatrixXd&) { return 1.0; };
    if (name == "f_center_last")
        return [f](const Eigen::MatrixXd& w) {
            const Eigen::Index m = (w.rows() - 1) / 2;
            return f(w(m, w.cols() - 1));
        };
    if (name == "f_pair_last")
        return [f](const Eigen::MatrixXd& w) {
            const Eigen::Index m = (w.rows() - 1) / 2;
            if (m + 1 >= w.rows())
                throw ConfigError("f_pair_last needs a window radius of at least 1");
            return f(w(m, w.cols() - 1)) * f(w(m + 1, w.cols() - 1));
        };
    throw ConfigError("unknown window functional '" + name +
                      "' (known: one, f_center_last, f_pair_last)");
}

} // namespace netlim
