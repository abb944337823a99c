#pragma once

#include "netlim/model.hpp"

namespace fixtures {

// Separable covariance from lambda = (0.1, 0.2, 0.1) on lags -1..1.
inline netlim::CovFunction separable_lambda() {
    const double lam[3] = {0.1, 0.2, 0.1};
    std::vector<double> vals(9);
    for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) vals[static_cast<std::size_t>(3 * k + l)] = lam[k] * lam[l];
    return netlim::CovFunction(1, vals);
}

// Reference configuration C1: gamma=0.5, sigma2=1, theta_bar=0, theta2=0,
// j_bar=1, logistic slope 1, point-mass initial law at 0, T=5.
inline netlim::ModelParams config_c1(int horizon = 5) {
    netlim::ModelParams p;
    p.gamma = 0.5;
    p.sigma2 = 1.0;
    p.theta_bar = 0.0;
    p.theta2 = 0.0;
    p.j_bar = 1.0;
    p.lambda = separable_lambda();
    p.f = netlim::SigmoidSpec{1.0};
    p.mu_init = netlim::InitialLaw::point_mass(0.0);
    p.horizon_T = horizon;
    return p;
}

// Fully decoupled network: no coupling, no weight noise, no current noise.
inline netlim::ModelParams config_decoupled(int horizon = 5) {
    netlim::ModelParams p;
    p.gamma = 0.5;
    p.sigma2 = 1.0;
    p.theta_bar = 0.0;
    p.theta2 = 0.0;
    p.j_bar = 0.0;
    p.lambda = netlim::CovFunction(0, {0.0});
    p.f = netlim::SigmoidSpec{1.0};
    p.mu_init = netlim::InitialLaw::point_mass(0.0);
    p.horizon_T = horizon;
    return p;
}

} // namespace fixtures
