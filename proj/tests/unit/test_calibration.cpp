#include <gtest/gtest.h>

#include <cmath>

#include "../support/forward_ode.hpp"
#include "evscale/calibration.hpp"
#include "evscale/errors.hpp"
#include "evscale/simulator.hpp"
#include "evscale/truth.hpp"
#include "test_helpers.hpp"

using namespace evscale;

namespace {

/// psi_z(alpha) = slope * alpha capped at 0.9; psi_1 = 0.2 + 0.1 alpha.
class LinearEvaluator : public CurveEvaluator {
public:
    explicit LinearEvaluator(double slope) : slope_(slope) {}
    Evaluation evaluate(Target x, std::optional<int>, double alpha) override {
        ++calls;
        Evaluation e;
        e.alpha = alpha;
        e.psi = x == Target::z ? std::min(slope_ * alpha, 0.9) : 0.2 + 0.1 * alpha;
        return e;
    }
    [[nodiscard]] double sample_size() const override { return 1e6; }
    [[nodiscard]] std::string mode() const override { return "linear"; }
    int calls{0};

private:
    double slope_;
};

ValidatedScenario z_only_scenario(double rate, double tau) { return build_scenario(test_support::z_only(rate, tau)); }

}  // namespace

TEST(SolveAlpha, IdentityCalibration) {
    PluginEvaluator ev(build_scenario(preset_config("example1")));
    const double theta = ev.evaluate(Target::z, std::nullopt, 1.0).psi;
    const auto r = solve_alpha(ev, {TargetKind::fixed_theta, theta, std::nullopt});
    EXPECT_EQ(r.alpha_hat, 1.0);
    EXPECT_EQ(r.trace.size(), 1u);
}

TEST(SolveAlpha, ZOnlyClosedForm) {
    const double rate = 0.3;
    const double tau = 2.0;
    PluginEvaluator ev(z_only_scenario(rate, tau));
    for (double theta : {0.1, 0.4, 0.8}) {
        const auto r = solve_alpha(ev, {TargetKind::fixed_theta, theta, std::nullopt});
        const double exact = -std::log(1.0 - theta) / (rate * tau);
        EXPECT_LE(std::abs(r.at_alpha.psi - theta), r.c_n);
        // dPsi/dalpha = r tau (1 - theta), so the alpha error is at most c_n / slope
        EXPECT_NEAR(r.alpha_hat, exact, 1e-8 + r.c_n / (rate * tau * (1.0 - theta)));
    }
}

TEST(SolveAlpha, Example1RelativeOnOracle) {
    const auto config = preset_config("example1");
    MonteCarloEvaluator ev(build_scenario(config), 100000, 5);
    const auto r = solve_alpha(ev, {TargetKind::relative_rho, 0.6, std::nullopt});
    EXPECT_LE(std::abs(r.at_alpha.psi - r.level), r.c_n);
    EXPECT_NEAR(r.level, 0.6 * ev.evaluate(Target::z, std::nullopt, 1.0).psi, 1e-15);
    const double truth_level = 0.6 * test_support::forward_psi(config, std::nullopt, 1.0).psi_z;
    const auto at = test_support::forward_psi(config, std::nullopt, r.alpha_hat);
    EXPECT_NEAR(at.psi_z, truth_level, 3.0 * r.at_alpha.se);
    EXPECT_TRUE(r.monotonicity_flags.empty());
}

TEST(SolveAlpha, InfeasibleWithoutSolve) {
    LinearEvaluator ev(0.1);
    try {
        (void)solve_alpha(ev, {TargetKind::fixed_theta, 0.95, std::nullopt});
        FAIL() << "expected InfeasibleTarget";
    } catch (const InfeasibleTarget& e) {
        EXPECT_DOUBLE_EQ(e.max_fraction(), 0.9);
        EXPECT_EQ(e.code(), ExitCode::infeasible);
    }
    EXPECT_EQ(ev.calls, 1);
}

TEST(SolveAlpha, TargetValidation) {
    LinearEvaluator ev(0.1);
    EXPECT_THROW((void)solve_alpha(ev, {TargetKind::fixed_theta, 1.5, std::nullopt}), ConfigError);
    EXPECT_THROW((void)solve_alpha(ev, {TargetKind::match_other_arm, 0.0, std::nullopt}), ConfigError);
    EXPECT_THROW((void)solve_alpha(ev, {TargetKind::relative_rho, -1.0, std::nullopt}), ConfigError);
}

TEST(SolveAlpha, BracketsFromBothSides) {
    LinearEvaluator ev(0.1);
    const auto up = solve_alpha(ev, {TargetKind::fixed_theta, 0.37, std::nullopt});
    EXPECT_NEAR(up.alpha_hat, 3.7, 1e-8);
    const auto down = solve_alpha(ev, {TargetKind::fixed_theta, 0.013, std::nullopt});
    EXPECT_NEAR(down.alpha_hat, 0.13, 1e-8);
    for (const auto* r : {&up, &down}) EXPECT_LE(std::abs(r->at_alpha.psi - r->level), r->c_n);
}

TEST(Derivative, LinearCurveExact) {
    LinearEvaluator ev(0.07);
    const auto d = derivative(ev, Target::z, std::nullopt, 2.0, 0.3);
    EXPECT_NEAR(d.kappa, 0.07, 1e-15);
}

TEST(Derivative, ZOnlySecondOrder) {
    const double rate = 0.3;
    const double tau = 2.0;
    EngineOptions engine;
    engine.grid_size = 200;
    PluginEvaluator ev(z_only_scenario(rate, tau), engine);
    const double alpha = 1.4;
    const double exact = rate * tau * std::exp(-alpha * rate * tau);
    const double e1 = std::abs(derivative(ev, Target::z, std::nullopt, alpha, 0.2).kappa - exact);
    const double e2 = std::abs(derivative(ev, Target::z, std::nullopt, alpha, 0.1).kappa - exact);
    EXPECT_NEAR(e1 / e2, 4.0, 0.2);
    // leading term h^2 kappa''' / 6 with kappa''' = (r tau)^3 e^{-alpha r tau}
    EXPECT_NEAR(e1, 0.04 * std::pow(rate * tau, 3) * std::exp(-alpha * rate * tau) / 6.0, 0.05 * e1);
}

TEST(Derivative, DefaultStep) {
    LinearEvaluator ev(0.1);
    EXPECT_NEAR(derivative(ev, Target::z, std::nullopt, 2.0).h, 0.2, 1e-12);
    EXPECT_NEAR(derivative(ev, Target::z, std::nullopt, 0.05).h, 0.05, 1e-15);
}

TEST(Derivative, Example2AgainstPreciseMonteCarlo) {
    const auto config = preset_config("example2");
    const auto sc = build_scenario(config);
    PluginEvaluator plug(sc);
    const double alpha = 1.5;
    const double h = 0.25;
    const auto d = derivative(plug, Target::z, 1, alpha, h);
    MonteCarloEvaluator mc(sc, 1000000, 51);
    const auto dm = derivative(mc, Target::z, 1, alpha, h);
    // common random numbers: the paired difference has its own se
    const auto& a = dm.plus.influence;
    const auto& b = dm.minus.influence;
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i]) * (a[i] - b[i]);
    const double se = std::sqrt(ss / a.size() / a.size()) / (2.0 * h);
    EXPECT_NEAR(dm.kappa, d.kappa, 3.0 * se + 1e-6);
}

TEST(Composite, IdentityAnchorMatchesAlphaOneFit) {
    const auto sc = build_scenario(preset_config("example2"));
    const auto cohort = sample_cohort(sc, std::nullopt, 600, 52);
    TmleEvaluator ev(cohort.paths, fit_nuisance(cohort.paths), sc.tau());
    const double theta = ev.evaluate(Target::z, 1, 1.0).psi;
    const auto rep = composite_estimate(ev, {TargetKind::fixed_theta, theta, 1});
    EXPECT_EQ(rep.alpha_hat, 1.0);
    EXPECT_DOUBLE_EQ(rep.psi1_hat, ev.evaluate(Target::outcome1, 1, 1.0).psi);
    EXPECT_GT(rep.psi1_se, 0.0);
    ASSERT_EQ(rep.composite_influence.size(), cohort.paths.size());
}

TEST(Composite, ExchangeableArmsGiveNoIndirectEffect) {
    auto config = preset_config("example1");
    config.propensity = Propensity::constant(0.5);
    const auto sc = build_scenario(config);
    const auto cohort = sample_cohort(sc, std::nullopt, 2000, 53);
    TmleEvaluator ev(cohort.paths, fit_nuisance(cohort.paths), sc.tau());
    const auto rep = composite_estimate(ev, {TargetKind::match_other_arm, 0.0, 1});
    ASSERT_TRUE(rep.decomposition.has_value());
    const auto& d = *rep.decomposition;
    EXPECT_NEAR(d.indirect, 0.0, 1.96 * d.indirect_se + 1e-12);
    EXPECT_NEAR(rep.alpha_hat, 1.0, 1.96 * rep.alpha_se + 1e-12);
    EXPECT_NEAR(d.indirect + d.direct, d.total, 1e-12);
}

TEST(Composite, Example3MatchDecompositionAgainstOracle) {
    const auto config = preset_config("example3");
    const auto sc = build_scenario(config);
    const auto cohort = sample_cohort(sc, std::nullopt, 2000, 54);
    TmleEvaluator ev(cohort.paths, fit_nuisance(cohort.paths), sc.tau());
    const CalibrationTarget t{TargetKind::match_other_arm, 0.0, 0};
    const auto rep = composite_estimate(ev, t);
    const auto& d = *rep.decomposition;
    EXPECT_NEAR(d.indirect + d.direct, d.total, 1e-12);
    EXPECT_DOUBLE_EQ(d.total, ev.evaluate(Target::outcome1, 0, 1.0).psi - ev.evaluate(Target::outcome1, 1, 1.0).psi);

    PluginEvaluator truth(sc);
    const auto oracle = composite_estimate(truth, t);
    const auto& o = *oracle.decomposition;
    EXPECT_NEAR(d.indirect, o.indirect, 3.0 * d.indirect_se);
    EXPECT_NEAR(d.direct, o.direct, 3.0 * d.direct_se);
    EXPECT_NEAR(d.total, o.total, 3.0 * d.total_se);
}

TEST(Composite, JointDecompositionAdds) {
    PluginEvaluator ev(build_scenario(preset_config("example2")));
    const auto d = joint_decomposition(ev, 0.5);
    EXPECT_NEAR(d.indirect + d.direct, d.total, 1e-12);
}

TEST(Feasibility, StructurallyZeroZ) {
    auto config = preset_config("example1");
    config.models.z.eta = 0.0;
    PluginEvaluator ev(build_scenario(config));
    const auto rep = feasibility_report(ev, std::nullopt, CalibrationTarget{TargetKind::fixed_theta, 0.01, {}});
    EXPECT_EQ(rep.l_hat, 0.0);
    EXPECT_FALSE(rep.feasible);
    EXPECT_THROW((void)solve_alpha(ev, {TargetKind::fixed_theta, 0.01, std::nullopt}), InfeasibleTarget);
}

TEST(Feasibility, AboveMaximalFraction) {
    PluginEvaluator ev(build_scenario(preset_config("example2")));
    const auto rep = feasibility_report(ev, 1, CalibrationTarget{TargetKind::fixed_theta, 0.9, 1});
    EXPECT_FALSE(rep.feasible);
    EXPECT_LT(*rep.margin, 0.0);
    EXPECT_EQ(rep.curve.size(), 7u);
}

TEST(Feasibility, Example1NearOne) {
    const auto config = preset_config("example1");
    PluginEvaluator ev(build_scenario(config));
    const auto rep = feasibility_report(ev, std::nullopt, std::nullopt);
    const double oracle = test_support::forward_psi(config, std::nullopt, 50.0, 100000).psi_z;
    EXPECT_NEAR(rep.l_hat, oracle, 1e-5);
    EXPECT_GT(rep.l_hat, 0.9);
}
