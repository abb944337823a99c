#include "netlim/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "netlim/errors.hpp"

namespace netlim {

namespace {
constexpr double kSqrtPi = 1.7724538509055160273;
constexpr double kPsdTol = -1e-10;
}

const GaussHermite& gauss_hermite(int n) {
    if (n < 1) throw ConfigError("gauss_hermite: need at least one node");
    static std::map<int, GaussHermite> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    // Jacobi matrix of the Hermite recurrence: zero diagonal, off-diagonal
    // beta_i = sqrt(i/2).  Eigenvalues are the nodes; weights are
    // sqrt(pi) * (first eigenvector component)^2.
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) {
        const double b = std::sqrt(0.5 * i);
        J(i, i - 1) = b;
        J(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    GaussHermite gh;
    gh.x = es.eigenvalues();
    gh.w.resize(n);
    for (int i = 0; i < n; ++i) {
        const double v0 = es.eigenvectors()(0, i);
        gh.w(i) = kSqrtPi * v0 * v0;
    }
    return cache.emplace(n, std::move(gh)).first->second;
}

double expect_f(const SigmoidSpec& f, double mean, double var, const QuadratureConfig& qc) {
    if (var < kPsdTol) throw NumericalError("expect_f: negative variance");
    if (var <= qc.degenerate_eps) return f(mean);
    const GaussHermite& gh = gauss_hermite(qc.gauss_nodes);
    const double s = std::sqrt(2.0 * var);
    double acc = 0.0;
    for (int i = 0; i < gh.x.size(); ++i) acc += gh.w(i) * f(mean + s * gh.x(i));
    return acc / kSqrtPi;
}

double expect_f_sq(const SigmoidSpec& f, double mean, double var, const QuadratureConfig& qc) {
    if (var < kPsdTol) throw NumericalError("expect_f_sq: negative variance");
    if (var <= qc.degenerate_eps) {
        const double y = f(mean);
        return y * y;
    }
    const GaussHermite& gh = gauss_hermite(qc.gauss_nodes);
    const double s = std::sqrt(2.0 * var);
    double acc = 0.0;
    for (int i = 0; i < gh.x.size(); ++i) {
        const double y = f(mean + s * gh.x(i));
        acc += gh.w(i) * y * y;
    }
    return acc / kSqrtPi;
}

double expect_ff(const SigmoidSpec& f, const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov,
                 const QuadratureConfig& qc) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    Eigen::Vector2d ev = es.eigenvalues();  // ascending
    if (ev(0) < kPsdTol) throw NumericalError("expect_ff: covariance not positive semidefinite");
    ev = ev.cwiseMax(0.0);

    if (ev(1) <= qc.degenerate_eps) return f(mean(0)) * f(mean(1));

    const GaussHermite& gh = gauss_hermite(qc.gauss_nodes);
    const int n = static_cast<int>(gh.x.size());

    if (ev(0) <= qc.degenerate_eps) {
        // Rank one: both coordinates driven by a single standard normal.
        const Eigen::Vector2d dir = es.eigenvectors().col(1) * std::sqrt(2.0 * ev(1));
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
            acc += gh.w(i) * f(mean(0) + dir(0) * gh.x(i)) * f(mean(1) + dir(1) * gh.x(i));
        return acc / kSqrtPi;
    }

    const Eigen::Matrix2d L =
        es.eigenvectors() * (2.0 * ev.array()).sqrt().matrix().asDiagonal();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double x = mean(0) + L(0, 0) * gh.x(i) + L(0, 1) * gh.x(j);
            const double y = mean(1) + L(1, 0) * gh.x(i) + L(1, 1) * gh.x(j);
            acc += gh.w(i) * gh.w(j) * f(x) * f(y);
        }
    }
    return acc / (kSqrtPi * kSqrtPi);
}

} // namespace netlim
