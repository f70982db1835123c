#include <gtest/gtest.h>

#include <cmath>

#include "../support/forward_ode.hpp"
#include "evscale/errors.hpp"
#include "evscale/markov_engine.hpp"
#include "evscale/truth.hpp"
#include "test_helpers.hpp"

using namespace evscale;

TEST(Backward, NoDynamics) {
    ModelSet m;
    m.outcomes = {IntensityModel{0.0, 1.0}};
    const auto table = backward_solve(m, {std::nullopt, 1.0}, 3.0, 50, std::nullopt, 0.0);
    for (std::size_t k = 0; k < table.grid().size(); ++k) {
        for (int s = 0; s < 2; ++s) {
            EXPECT_EQ(table.at_node(k)[s][0], 0.0);
            EXPECT_EQ(table.at_node(k)[s][1], 0.0);
        }
        EXPECT_EQ(table.at_node(k)[2][1], 1.0);
    }
}

TEST(Backward, SingleOutcomeClosedForm) {
    const double r = 0.7;
    const double tau = 2.5;
    const auto sc = test_support::single_outcome(r, tau);
    const auto table = backward_solve(sc.models, {std::nullopt, 1.0}, tau, 100, std::nullopt, 0.0);
    for (std::size_t k = 0; k < table.grid().size(); k += 10) {
        const double t = table.grid()[k];
        EXPECT_NEAR(table.value(t, State{}, Target::outcome1), 1.0 - std::exp(-r * (tau - t)), 1e-12) << t;
    }
    // linear interpolation between nodes: error at most r^2 dt^2 / 8
    const double dt = tau / 100.0;
    for (double t : {0.31, 1.013, 2.49}) {
        EXPECT_NEAR(table.value(t, State{}, Target::outcome1), 1.0 - std::exp(-r * (tau - t)), r * r * dt * dt / 8.0)
            << t;
    }
}

TEST(Backward, ExactInterpolationBetweenNodes) {
    const double r = 0.7;
    const double tau = 2.5;
    const auto sc = test_support::single_outcome(r, tau);
    const auto table =
        backward_solve(sc.models, {std::nullopt, 1.0}, tau, 5, std::nullopt, 0.0, Interpolation::exact);
    for (double t : {0.1, 0.77, 1.9}) {
        EXPECT_NEAR(table.value(t, State{}, Target::outcome1), 1.0 - std::exp(-r * (tau - t)), 1e-13) << t;
    }
}

TEST(Backward, WeibullMatchesForwardEquations) {
    auto config = preset_config("example3");
    for (auto* m : {&config.models.outcomes[0], &config.models.ell, &config.models.z}) m->nu = 1.6;
    for (int arm : {0, 1}) {
        const auto oracle = test_support::forward_counts(config.models, 0.7, config.tau, arm, 0.0);
        const auto table = backward_solve(config.models, {arm, 0.7}, config.tau, 2000, arm, 0.0);
        EXPECT_NEAR(table.value(0.0, State{}, Target::outcome1), oracle.psi1, 1e-7);
        EXPECT_NEAR(table.value(0.0, State{}, Target::z), oracle.psi_z, 1e-7);
    }
}

TEST(Backward, PluginMatchesMonteCarlo) {
    const auto config = preset_config("example1");
    const auto sc = build_scenario(config);
    const auto mc = mc_psi(sc, {std::nullopt, 0.5}, Target::outcome1, 100000, 21);
    const double plug = plugin_psi(config.models, {std::nullopt, 0.5}, Target::outcome1, config.tau,
                                   config.l0.nodes(50), config.propensity);
    EXPECT_NEAR(plug, mc.value, 3.0 * mc.se);
}

TEST(Backward, CoarseGridRejectedForSingularShape) {
    ModelSet m;
    m.outcomes = {IntensityModel{2.0, 0.3}};
    EngineOptions opt;
    opt.grid_size = 4;
    opt.coarse_tolerance = 1e-8;
    BackwardSolver solver(m, {std::nullopt, 1.0}, 3.0, opt);
    EXPECT_THROW((void)solver.solve(std::nullopt, 0.0), Error);
}

TEST(Backward, InvalidModel) {
    ModelSet m;
    m.outcomes = {IntensityModel{1.0, 0.0}};
    EXPECT_THROW(BackwardSolver(m, {std::nullopt, 1.0}, 3.0), Error);
}

TEST(CleverCovariate, OutcomeJumpFromStart) {
    const auto config = preset_config("example1");
    const auto table = backward_solve(config.models, {std::nullopt, 1.0}, config.tau, 200, std::nullopt, 0.0);
    const double t = 1.2;
    const double g = table.value(t, State{}, Target::outcome1);
    EXPECT_NEAR(clever_covariate(table, t, State{}, Mark::outcome_j(1), 1.0, Target::outcome1), 1.0 - g, 1e-15);
}

TEST(CleverCovariate, FrozenZCount) {
    const auto config = preset_config("example1");
    const auto table = backward_solve(config.models, {std::nullopt, 1.0}, config.tau, 200, std::nullopt, 0.0);
    EXPECT_NEAR(table.value(0.9, State{0, 1}, Target::z), 1.0, 1e-15);
    EXPECT_NEAR(clever_covariate(table, 0.9, State{0, 1}, Mark::outcome_j(1), 1.0, Target::z), 0.0, 1e-15);
}

TEST(CleverCovariate, ZeroAlphaZJump) {
    const auto config = preset_config("example1");
    const auto table = backward_solve(config.models, {std::nullopt, 0.0}, config.tau, 200, std::nullopt, 0.0);
    EXPECT_EQ(clever_covariate(table, 1.0, State{}, Mark::z(), 0.0, Target::outcome1), 0.0);
    EXPECT_EQ(clever_covariate(table, 1.0, State{}, Mark::z(), 0.0, Target::z), 0.0);
}

TEST(CleverCovariate, RejectsInadmissible) {
    const auto config = preset_config("example1");
    const auto table = backward_solve(config.models, {std::nullopt, 1.0}, config.tau, 20, std::nullopt, 0.0);
    EXPECT_THROW((void)clever_covariate(table, 1.0, State{0, 1}, Mark::z(), 1.0, Target::z), std::exception);
    EXPECT_THROW((void)clever_covariate(table, 1.0, State{}, Mark::censor(), 1.0, Target::z), std::exception);
}

TEST(Plugin, ZeroAlphaNoZ) {
    const auto config = preset_config("example1");
    EXPECT_EQ(plugin_psi(config.models, {std::nullopt, 0.0}, Target::z, config.tau, {0.5}, std::nullopt), 0.0);
}

TEST(Plugin, SingleAtom) {
    auto config = preset_config("example1");
    config.models.outcomes[0].beta_l0 = 0.8;
    const double l0 = 0.37;
    const auto table = backward_solve(config.models, {std::nullopt, 1.3}, config.tau, 2000, std::nullopt, l0);
    EXPECT_DOUBLE_EQ(plugin_psi(config.models, {std::nullopt, 1.3}, Target::outcome1, config.tau, {l0}, std::nullopt),
                     table.value(0.0, State{}, Target::outcome1));
}

TEST(Plugin, Example2ArmOrderingMatchesMonteCarlo) {
    const auto config = preset_config("example2");
    const auto sc = build_scenario(config);
    const double p1 = plugin_psi(config.models, {1, 1.0}, Target::z, config.tau, {0.5}, config.propensity);
    const double p0 = plugin_psi(config.models, {0, 1.0}, Target::z, config.tau, {0.5}, config.propensity);
    const auto m1 = mc_psi(sc, {1, 1.0}, Target::z, 50000, 22);
    const auto m0 = mc_psi(sc, {0, 1.0}, Target::z, 50000, 22);
    EXPECT_LT(p1, p0);
    EXPECT_LT(m1.value, m0.value);
}

TEST(Backward, SecondOrderUnderRefinement) {
    // Weibull shapes differ across marks, so freezing rates over a step is not exact
    auto config = preset_config("example1");
    config.models.outcomes[0].nu = 1.8;
    config.models.ell.nu = 0.8;
    config.models.z.nu = 1.3;
    EngineOptions opt;
    opt.coarse_tolerance = 1.0;
    auto value = [&](std::size_t M) {
        opt.grid_size = M;
        BackwardSolver solver(config.models, {std::nullopt, 2.0}, config.tau, opt);
        return solver.solve(std::nullopt, 0.0).value(0.0, State{}, Target::outcome1);
    };
    const double reference = value(6400);
    const double e1 = std::abs(value(50) - reference);
    const double e2 = std::abs(value(100) - reference);
    const double e3 = std::abs(value(200) - reference);
    EXPECT_GE(std::log2(e1 / e2), 1.8);
    EXPECT_GE(std::log2(e2 / e3), 1.8);
}

TEST(Backward, SubstepsKeepCoarseGridsAccurate) {
    auto config = preset_config("example1");
    config.models.outcomes[0].nu = 1.8;
    config.models.z.nu = 0.7;
    const InterventionSpec iv{std::nullopt, 50.0};
    const auto oracle = test_support::forward_counts(config.models, 50.0, config.tau, 0, 0.0, 200000);
    EngineOptions opt;
    opt.grid_size = 200;
    opt.coarse_tolerance = 1e-4;
    const auto table = BackwardSolver(config.models, iv, config.tau, opt).solve(std::nullopt, 0.0);
    EXPECT_NEAR(table.value(0.0, State{}, Target::z), oracle.psi_z, 1e-4);
    EXPECT_NEAR(table.value(0.0, State{}, Target::outcome1), oracle.psi1, 1e-4);
}
