#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "netlim/limit_law.hpp"
#include "netlim/stats.hpp"

using namespace netlim;

namespace {

LimitLaw solve_c1() {
    static LimitLaw law = solve_limit_law(fixtures::config_c1(), QuadratureConfig{});
    return law;
}

double sup_diff(const LimitLaw& a, const LimitLaw& b) {
    double s = (a.c - b.c).cwiseAbs().maxCoeff();
    for (std::size_t l = 0; l < a.K.size(); ++l)
        s = std::max(s, (a.K[l] - b.K[l]).cwiseAbs().maxCoeff());
    for (std::size_t l = 0; l < a.M.size(); ++l)
        s = std::max(s, (a.M[l] - b.M[l]).cwiseAbs().maxCoeff());
    return s;
}

} // namespace

TEST_CASE("C1 hand-computable entries") {
    const LimitLaw law = solve_c1();
    CHECK(law.c(1) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(law.M[0](1, 1) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(law.M[1](1, 1) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(law.K[0](1, 1) == doctest::Approx(0.02).epsilon(1e-13));
    CHECK(law.K[1](1, 1) == doctest::Approx(0.01).epsilon(1e-13));
}

TEST_CASE("decoupled configuration solves to exact zeros") {
    const LimitLaw law = solve_limit_law(fixtures::config_decoupled(), QuadratureConfig{});
    CHECK(law.c.cwiseAbs().maxCoeff() == 0.0);
    for (const auto& K : law.K) CHECK(K.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mean_entry basics") {
    const LimitLaw law = solve_c1();
    const ModelParams& p = law.params;
    QuadratureConfig q;
    CHECK(mean_entry(law, 1, p, q) == doctest::Approx(0.5).epsilon(1e-14));
    ModelParams p0 = p;
    p0.j_bar = 0.0;
    for (int s = 1; s <= law.T; ++s) CHECK(mean_entry(law, s, p0, q) == 0.0);
}

TEST_CASE("moment bounds") {
    const LimitLaw law = solve_c1();
    for (int s = 1; s <= law.T; ++s) {
        CHECK(std::abs(law.c(s)) <= std::abs(law.params.j_bar));
        // second moment dominates squared mean (f-mean = c_s since j_bar = 1)
        CHECK(law.M[0](s, s) >= law.c(s) * law.c(s));
    }
    for (const auto& M : law.M)
        for (int r = 1; r <= law.T; ++r)
            for (int s = 1; s <= law.T; ++s) {
                CHECK(M(r, s) > 0.0);
                CHECK(M(r, s) < 1.0);
            }
}

TEST_CASE("lag symmetry holds against independently computed negative lags") {
    const LimitLaw law = solve_c1();
    QuadratureConfig q;
    for (int r = 1; r <= law.T; ++r)
        for (int s = 1; s <= law.T; ++s) {
            // accessor identity
            CHECK(law.M_at(-1, s, r) == law.M_at(1, r, s));
            CHECK(law.K_at(-1, s, r) == law.K_at(1, r, s));
            // fresh quadrature at the negative lag
            const double neg = moment_cross(law, -1, s, r, law.params, q);
            CHECK(neg == doctest::Approx(law.M_at(1, r, s)).epsilon(1e-12));
        }
    CHECK(((law.M[0] - law.M[0].transpose()).cwiseAbs().maxCoeff()) == 0.0);
}

TEST_CASE("covariance vanishes exactly beyond the interaction range") {
    const LimitLaw law = solve_c1();
    for (int l : {2, 3, 17})
        for (int r = 1; r <= law.T; ++r)
            for (int s = 1; s <= law.T; ++s) {
                CHECK(law.K_at(l, r, s) == 0.0);
                CHECK(law.K_at(-l, r, s) == 0.0);
            }
}

TEST_CASE("single_marginal structure and consistency") {
    const LimitLaw law = solve_c1();
    const GaussianMarginal m0 = single_marginal(law, 0);
    CHECK(m0.mean.size() == 0);
    CHECK(m0.cov.rows() == 0);

    const GaussianMarginal m1 = single_marginal(law, 1);
    CHECK(m1.mean(0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(m1.cov(0, 0) == doctest::Approx(1.02).epsilon(1e-13));

    for (int t = 1; t < law.T; ++t) {
        const GaussianMarginal a = single_marginal(law, t);
        const GaussianMarginal b = single_marginal(law, t + 1);
        CHECK((b.cov.topLeftCorner(t, t) - a.cov).cwiseAbs().maxCoeff() == 0.0);
        CHECK((b.mean.head(t) - a.mean).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("pair_marginal structure") {
    const LimitLaw law = solve_c1();
    const GaussianMarginal pm = pair_marginal(law, 1, 1, 1);
    CHECK(pm.cov(0, 0) == doctest::Approx(1.02).epsilon(1e-13));
    CHECK(pm.cov(1, 1) == doctest::Approx(1.02).epsilon(1e-13));
    CHECK(pm.cov(0, 1) == doctest::Approx(0.01).epsilon(1e-13));
    CHECK(pm.cov(1, 0) == doctest::Approx(0.01).epsilon(1e-13));

    // lag -l swaps the blocks and transposes the cross block
    const GaussianMarginal a = pair_marginal(law, 1, 3, 2);
    const GaussianMarginal b = pair_marginal(law, -1, 2, 3);
    CHECK((a.cov.topRightCorner(3, 2) - b.cov.bottomLeftCorner(3, 2)).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK((a.cov.topLeftCorner(3, 3) - b.cov.bottomRightCorner(3, 3)).cwiseAbs().maxCoeff() ==
          0.0);

    CHECK_THROWS_AS(pair_marginal(law, 0, 1, 1), ConfigError);
}

TEST_CASE("cross moments factorize when the cross block vanishes") {
    LimitLaw law = solve_c1();
    law.K[1].setZero();
    QuadratureConfig q;
    for (int r = 1; r <= law.T; ++r)
        for (int s = 1; s <= law.T; ++s) {
            const double joint = moment_cross(law, 1, r, s, law.params, q);
            const double prod = mean_entry(law, r, law.params, q) *
                                mean_entry(law, s, law.params, q);  // j_bar = 1
            CHECK(joint == doctest::Approx(prod).epsilon(1e-12));
        }
}

TEST_CASE("solver output is a fixed point of the Q-map") {
    const LimitLaw law = solve_c1();
    const LimitLaw q = apply_Q(law, law.params, QuadratureConfig{});
    CHECK(sup_diff(law, q) < 1e-6);
}

TEST_CASE("apply_Q maps the decoupled zero law to itself") {
    const LimitLaw law = solve_limit_law(fixtures::config_decoupled(), QuadratureConfig{});
    const LimitLaw q = apply_Q(law, law.params, QuadratureConfig{});
    CHECK(q.c.cwiseAbs().maxCoeff() == 0.0);
    for (const auto& K : q.K) CHECK(K.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mc oracle: degenerate cases and sample-size gate") {
    const LimitLaw law = solve_c1();
    OracleTarget t;
    t.kind = OracleTarget::Kind::Same;
    t.r = t.s = 1;
    const McResult constant =
        mc_moment_oracle(law, t, 1000, 99, [](double) { return 1.0; });
    CHECK(constant.estimate == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(constant.stderr_ == 0.0);

    // time-0 only and point-mass initial law: no randomness at all
    const McResult exact = mc_moment_oracle(law, t, 1000, 99);
    CHECK(exact.estimate == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(exact.stderr_ == 0.0);

    CHECK_THROWS_AS(mc_moment_oracle(law, t, 50, 99), ConfigError);
}

TEST_CASE("quadrature agrees with the sampling oracle") {
    const LimitLaw law = solve_c1();
    const std::int64_t N = 200000;

    OracleTarget mean_t;
    mean_t.kind = OracleTarget::Kind::Mean;
    mean_t.s = 2;
    const McResult m = mc_moment_oracle(law, mean_t, N, 4242);
    CHECK(std::abs(m.estimate - law.c(2)) < 4.5 * m.stderr_);

    OracleTarget same_t;
    same_t.kind = OracleTarget::Kind::Same;
    same_t.r = 1;
    same_t.s = 2;
    const McResult s = mc_moment_oracle(law, same_t, N, 4242);
    CHECK(std::abs(s.estimate - law.M[0](1, 2)) < 4.5 * s.stderr_);

    OracleTarget cross_t;
    cross_t.kind = OracleTarget::Kind::Cross;
    cross_t.lag = 1;
    cross_t.r = 2;
    cross_t.s = 2;
    const McResult c = mc_moment_oracle(law, cross_t, N, 4242);
    CHECK(std::abs(c.estimate - law.M[1](2, 2)) < 4.5 * c.stderr_);
}

TEST_CASE("apply_Q on a perturbed law matches the oracle on that law") {
    LimitLaw pert = solve_c1();
    pert.c.tail(pert.T).array() += 0.1;
    const LimitLaw q = apply_Q(pert, pert.params, QuadratureConfig{});
    OracleTarget t;
    t.kind = OracleTarget::Kind::Mean;
    t.s = 3;
    const McResult m = mc_moment_oracle(pert, t, 200000, 777);
    CHECK(std::abs(m.estimate - q.c(3)) < 4.5 * m.stderr_);
}

TEST_CASE("window covariance structure") {
    const LimitLaw law = solve_c1();
    const int T = law.T;

    const WindowCovariance w0 = window_covariance(law, 0);
    const GaussianMarginal full = single_marginal(law, T);
    CHECK((w0.cov - full.cov).cwiseAbs().maxCoeff() == 0.0);
    CHECK((w0.mean - full.mean).cwiseAbs().maxCoeff() == 0.0);

    const WindowCovariance w2 = window_covariance(law, 2);
    CHECK(w2.min_eig >= -1e-8);
    // block (j, j') carries K^{j'-j}
    for (int r = 1; r <= T; ++r)
        for (int s = 1; s <= T; ++s) {
            CHECK(w2.cov(0 * T + r - 1, 1 * T + s - 1) == law.K_at(1, r, s));
            CHECK(w2.cov(1 * T + r - 1, 0 * T + s - 1) == law.K_at(-1, r, s));
            CHECK(w2.cov(0 * T + r - 1, 3 * T + s - 1) == 0.0);
        }

    const LimitLaw dec = solve_limit_law(fixtures::config_decoupled(), QuadratureConfig{});
    const WindowCovariance wd = window_covariance(dec, 2);
    Eigen::MatrixXd off = wd.cov;
    for (int j = 0; j < 5; ++j) off.block(j * dec.T, j * dec.T, dec.T, dec.T).setZero();
    CHECK(off.cwiseAbs().maxCoeff() == 0.0);  // block-diagonal at d=0
}

TEST_CASE("limit-law samples reproduce the law's moments") {
    const LimitLaw law = solve_c1();
    const int T = law.T;
    const std::int64_t N = 20000;
    const auto samples = sample_limit_law(law, 1, N, 2025);
    REQUIRE(samples.size() == static_cast<std::size_t>(N));

    // v-coordinates of the center neuron
    Eigen::VectorXd mean_acc = Eigen::VectorXd::Zero(T);
    double k1_acc = 0.0;  // lag-1 cross cov entry (1,1) between neurons 0 and 1
    std::vector<Eigen::VectorXd> v_center, v_right;
    v_center.reserve(samples.size());
    for (const auto& u : samples) {
        const Eigen::VectorXd vc = psi_forward(u.row(1).transpose(), law.params.gamma, law.params.theta_bar);
        const Eigen::VectorXd vr = psi_forward(u.row(2).transpose(), law.params.gamma, law.params.theta_bar);
        mean_acc += vc.tail(T);
        v_center.push_back(vc);
        v_right.push_back(vr);
    }
    mean_acc /= static_cast<double>(N);
    // stderr of each mean component ~ sqrt(1.1/N)
    const double se = std::sqrt(1.1 / static_cast<double>(N));
    CHECK((mean_acc - law.c.tail(T)).cwiseAbs().maxCoeff() < 4.5 * se);

    for (std::int64_t i = 0; i < N; ++i)
        k1_acc += (v_center[static_cast<std::size_t>(i)](1) - law.c(1)) *
                  (v_right[static_cast<std::size_t>(i)](1) - law.c(1));
    k1_acc /= static_cast<double>(N);
    // Cov(v^0_1, v^1_1) = K^1_{11}; product-moment stderr ~ sigma^2/sqrt(N)
    CHECK(std::abs(k1_acc - law.K[1](1, 1)) < 4.5 * 1.02 / std::sqrt(static_cast<double>(N)));
}

TEST_CASE("decoupled samples are AR(1) paths") {
    const LimitLaw law = solve_limit_law(fixtures::config_decoupled(3), QuadratureConfig{});
    const std::int64_t N = 20000;
    const auto samples = sample_limit_law(law, 0, N, 77);
    double s1 = 0.0, s2 = 0.0;
    for (const auto& u : samples) {
        const Eigen::VectorXd v = psi_forward(u.row(0).transpose(), 0.5, 0.0);
        s1 += v(1);
        s2 += v(1) * v(1);
    }
    const double mean = s1 / static_cast<double>(N);
    const double var = s2 / static_cast<double>(N) - mean * mean;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(N)));
    CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / static_cast<double>(N)));
}

TEST_CASE("window sampler streams the same draws as sample_limit_law") {
    const LimitLaw law = solve_c1();
    WindowSampler sampler(law, 1, 5150);
    const auto batch = sample_limit_law(law, 1, 5, 5150);
    for (int i = 0; i < 5; ++i)
        CHECK((sampler.next() - batch[static_cast<std::size_t>(i)]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("doubling quadrature nodes leaves the law unchanged at 1e-8") {
    QuadratureConfig q32, q64;
    q64.gauss_nodes = 64;
    q64.init_nodes = 64;
    const LimitLaw a = solve_limit_law(fixtures::config_c1(), q32);
    const LimitLaw b = solve_limit_law(fixtures::config_c1(), q64);
    CHECK(sup_diff(a, b) <= 1e-8);
}
