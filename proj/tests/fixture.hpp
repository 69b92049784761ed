#pragma once

#include "ebal/core.hpp"

#include <vector>

// Reference values from tests/oracles/fixture_oracles.py.
namespace fixture {

inline ebal::ObservationalDataset small_dataset() {
    static const double x[16][2] = {{-0.21, -0.52}, {0.15, -1.79}, {0.28, -0.32}, {-0.73, 0.1},
                                    {-1.95, -0.16}, {-0.73, 0.41}, {0.44, -0.93}, {-0.93, -1.47},
                                    {-0.79, 0.32},  {0.86, 0.23},  {0.03, -0.87}, {0.2, -0.82},
                                    {0.24, -0.2},   {0.86, 0.2},   {1.37, -0.41}, {0.76, 0.23}};
    static const double y[16] = {2.9, 1.06, 2.88, -0.29, -0.3, 0.06, 2.15, 0.21,
                                 0.8, 1.58, 1.51, 1.17, 2.27, 1.69, 3.24, 1.64};
    ebal::Matrix cov(16, 2);
    ebal::Vector out(16);
    std::vector<int> t(16);
    for (int i = 0; i < 16; ++i) {
        cov(i, 0) = x[i][0];
        cov(i, 1) = x[i][1];
        out(i) = y[i];
        t[static_cast<std::size_t>(i)] = i % 2 == 0 ? 1 : 0;
    }
    return ebal::ObservationalDataset(cov, t, out, {}, {"x1", "x2"});
}

constexpr double dual_value = 0.9076059644443804;
constexpr double theta_star = 0.8341151943524012;
constexpr double scalar_weights[3] = {0.11620406037800088, 0.2675918792439982, 0.6162040603780009};

constexpr double logit_coef[3] = {-0.0217600312804104, -0.192787307815999, -0.053538085647837734};
constexpr double ipw = 1.1410024629028657;
constexpr double ols = 1.1730484191218702;
constexpr double ols_beta[3] = {0.7750380165991977, 1.051133578174647, -0.15711240302734522};
constexpr double ipw_dr = 1.172399024153224;
constexpr double eb_theta[2] = {-0.2598466121382664, 0.02263588941507698};
constexpr double eb_weights[8] = {0.1161551323849711,  0.15237940487047028, 0.15345243068692607,
                                  0.15490382981019368, 0.10110504721723017, 0.11720108419665555,
                                  0.10103641244396132, 0.1037666583895921};
constexpr double eb = 1.1727785370804744;
constexpr double eb_wls = 1.1727785367874268;

// Blocks for propensity expit(0.3 x1 - 0.4 x2), y0 = y - t, y1 = y0 + 1 + 0.2 x1.
constexpr double H_c[4] = {0.5985760074692549, 0.038224226792343115, 0.03822422679234313, 0.42357294872868817};
constexpr double G_c[4] = {0.6456055676012946, 0.10192598530026037, 0.10192598530026038, 0.6243645485100651};
constexpr double K_c[4] = {0.2983586555244682, 0.00632097226156222, 0.006320972261562223, 0.2358317459209316};

// (H1, G0, Hc, Hc0, Hc1, Gc, Gc0, pi) = (2, 3, 1.5, 0.6, -0.4, 2.5, 0.9, 0.3)
constexpr double v_eb_scalar = 17.46666666666667;

// Mean of expit(-X1 + 0.5 X2 - 0.25 X3 - 0.1 X4), X ~ N(0, I4), 1e7 draws.
constexpr double ks_treated_fraction = 0.4999122999420108;

}  // namespace fixture
