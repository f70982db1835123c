#include <gtest/gtest.h>

#include <cmath>

#include "evscale/errors.hpp"
#include "evscale/nuisance.hpp"
#include "evscale/simulator.hpp"
#include "test_helpers.hpp"

using namespace evscale;

TEST(FitIntensity, ExponentialClosedForm) {
    std::vector<Path> paths(4);
    const double times[] = {0.5, 1.2, 3.0, 2.0};
    for (int i = 0; i < 4; ++i) {
        paths[i].tau = 3.0;
        paths[i].l0 = 0.1 * i;
        if (i != 2) paths[i].jumps = {{times[i], Mark::outcome_j(1)}};
    }
    CovariateSpec spec{false, false, false, false, true};
    const auto fit = fit_intensity(paths, Mark::outcome_j(1), spec);
    EXPECT_NEAR(fit.model.eta, 3.0 / (0.5 + 1.2 + 3.0 + 2.0), 1e-10);
    EXPECT_DOUBLE_EQ(fit.model.nu, 1.0);
    EXPECT_EQ(fit.events, 3);
}

TEST(FitIntensity, RecoversExponentialRate) {
    const double r = 0.35;
    const auto sc = build_scenario(test_support::single_outcome(r, 3.0));
    const auto cohort = sample_cohort(sc, std::nullopt, 5000, 31);
    const auto fit = fit_intensity(cohort.paths, Mark::outcome_j(1));
    // se of log eta about 1 / sqrt(events) when nu is free it is a little larger
    const double se = 3.0 * r / std::sqrt(static_cast<double>(fit.events));
    EXPECT_NEAR(fit.model.eta, r, 3.0 * se);
    EXPECT_NEAR(fit.model.nu, 1.0, 0.1);
}

TEST(FitIntensity, Example1CoefficientOnEll) {
    const auto sc = build_scenario(preset_config("example1"));
    const auto cohort = sample_cohort(sc, std::nullopt, 5000, 32);
    const auto fit = fit_intensity(cohort.paths, Mark::z());
    const auto ll = intensity_loglik(cohort.paths, Mark::z(),
                                     {std::log(fit.model.eta), std::log(fit.model.nu), fit.model.beta_a0,
                                      fit.model.beta_l0, fit.model.beta_z, fit.model.beta_ell});
    // observed information for beta_ell (full inverse not needed for a loose check)
    const double info = -ll.hessian[5][5];
    ASSERT_GT(info, 0.0);
    EXPECT_NEAR(fit.model.beta_ell, 3.0, 4.0 / std::sqrt(info));
    EXPECT_LT(fit.gradient_norm, 1e-6);
}

TEST(FitIntensity, GradientMatchesFiniteDifference) {
    const auto sc = build_scenario(preset_config("example3"));
    const auto cohort = sample_cohort(sc, std::nullopt, 400, 33);
    const std::vector<double> theta{std::log(0.12), std::log(1.1), -0.3, 0.2, 0.4, 0.1};
    const auto ll = intensity_loglik(cohort.paths, Mark::outcome_j(1), theta);
    for (int k = 0; k < 6; ++k) {
        auto up = theta;
        auto dn = theta;
        up[k] += 1e-6;
        dn[k] -= 1e-6;
        const double fd = (intensity_loglik(cohort.paths, Mark::outcome_j(1), up, false).value -
                           intensity_loglik(cohort.paths, Mark::outcome_j(1), dn, false).value) /
                          2e-6;
        EXPECT_NEAR(ll.gradient[k], fd, 1e-4 * std::max(1.0, std::abs(fd))) << k;
    }
}

TEST(FitIntensity, NoEvents) {
    const auto sc = build_scenario(test_support::single_outcome(0.2, 1.0));
    const auto cohort = sample_cohort(sc, std::nullopt, 50, 1);
    const auto fit = fit_intensity(cohort.paths, Mark::z());
    EXPECT_EQ(fit.model.eta, 0.0);
    EXPECT_FALSE(fit.warnings.empty());
}

TEST(Propensity, BalancedArms) {
    const auto sc = build_scenario(preset_config("example2"));
    const auto cohort = sample_cohort(sc, std::nullopt, 10000, 34);
    const auto pi = fit_propensity(cohort.paths);
    ASSERT_TRUE(pi.has_value());
    EXPECT_NEAR(pi->prob(1, 0.5), 0.5, 3.0 * 0.5 / std::sqrt(10000.0));
}

TEST(Propensity, NoArm) {
    const auto sc = build_scenario(preset_config("example1"));
    const auto cohort = sample_cohort(sc, std::nullopt, 100, 35);
    EXPECT_FALSE(fit_propensity(cohort.paths).has_value());
}

TEST(Propensity, SingleArmRejected) {
    const auto sc = build_scenario(preset_config("example2"));
    auto cohort = sample_cohort(sc, std::nullopt, 100, 36);
    for (auto& p : cohort.paths) p.a0 = 1;
    EXPECT_THROW((void)fit_propensity(cohort.paths), ConfigError);
}

TEST(Propensity, LogisticRecovery) {
    auto config = preset_config("example2");
    config.propensity = Propensity::logistic(-0.5, 1.5);
    const auto sc = build_scenario(config);
    const auto cohort = sample_cohort(sc, std::nullopt, 20000, 37);
    const auto pi = fit_propensity(cohort.paths, PropensityForm::logistic);
    ASSERT_TRUE(pi.has_value());
    EXPECT_NEAR(pi->intercept, -0.5, 0.1);
    EXPECT_NEAR(pi->slope, 1.5, 0.2);
}

TEST(FitNuisance, DroppedCovariatesAreRecorded) {
    const auto sc = build_scenario(preset_config("example3"));
    const auto cohort = sample_cohort(sc, std::nullopt, 1000, 38);
    NuisanceOptions opt;
    opt.covariates["outcome1"] = CovariateSpec{true, true, false, true, false};
    const auto set = fit_nuisance(cohort.paths, opt);
    EXPECT_TRUE(set.misspecified.at("outcome1"));
    EXPECT_EQ(set.models.outcomes[0].beta_z, 0.0);
    EXPECT_TRUE(set.propensity.has_value());
}
