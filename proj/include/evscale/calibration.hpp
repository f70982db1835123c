#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "evscale/event_model.hpp"
#include "evscale/markov_engine.hpp"
#include "evscale/nuisance.hpp"
#include "evscale/tmle.hpp"

namespace evscale {

/// Psi_x^{a,alpha} from some source, with a standard error and, where
/// available, a per-unit influence vector (EIC for TMLE, centred counts
/// for Monte Carlo) that lets contrasts and composites get paired SEs.
struct Evaluation {
    double alpha{1.0};
    double psi{0.0};
    double se{0.0};
    std::vector<double> influence;
    double max_weight{0.0};
};

class CurveEvaluator {
public:
    virtual ~CurveEvaluator() = default;
    virtual Evaluation evaluate(Target x, std::optional<int> arm, double alpha) = 0;
    /// n used by c_n = se / log n and h = n^(-1/6).
    [[nodiscard]] virtual double sample_size() const = 0;
    [[nodiscard]] virtual std::string mode() const = 0;
};

/// Monte Carlo truth with common random numbers across alpha and arm.
class MonteCarloEvaluator : public CurveEvaluator {
public:
    MonteCarloEvaluator(ValidatedScenario scenario, std::size_t reps, std::uint64_t seed)
        : scenario_(std::move(scenario)), reps_(reps), seed_(seed) {}
    Evaluation evaluate(Target x, std::optional<int> arm, double alpha) override;
    [[nodiscard]] double sample_size() const override { return static_cast<double>(reps_); }
    [[nodiscard]] std::string mode() const override { return "oracle"; }

private:
    ValidatedScenario scenario_;
    std::size_t reps_;
    std::uint64_t seed_;
    std::map<std::tuple<int, int, double>, Evaluation> cache_;
};

/// Exact substitution value from the backward equations at the true models.
class PluginEvaluator : public CurveEvaluator {
public:
    PluginEvaluator(ValidatedScenario scenario, EngineOptions engine = {}, std::size_t l0_nodes = 200,
                    double nominal_n = 1e6)
        : scenario_(std::move(scenario)), engine_(engine), l0_nodes_(l0_nodes), nominal_n_(nominal_n) {}
    Evaluation evaluate(Target x, std::optional<int> arm, double alpha) override;
    [[nodiscard]] double sample_size() const override { return nominal_n_; }
    [[nodiscard]] std::string mode() const override { return "plugin"; }

private:
    ValidatedScenario scenario_;
    EngineOptions engine_;
    std::size_t l0_nodes_;
    double nominal_n_;
};

/// Targeted estimates from a cohort; every (x, arm, alpha) is a fresh
/// targeting run from the shared initial fits.
class TmleEvaluator : public CurveEvaluator {
public:
    TmleEvaluator(std::vector<Path> paths, NuisanceSet initial, double tau, TmleOptions options = {})
        : paths_(std::move(paths)), initial_(std::move(initial)), tau_(tau), options_(std::move(options)) {}
    Evaluation evaluate(Target x, std::optional<int> arm, double alpha) override;
    [[nodiscard]] double sample_size() const override { return static_cast<double>(paths_.size()); }
    [[nodiscard]] std::string mode() const override { return "estimate"; }
    [[nodiscard]] const std::vector<EstimateReport>& reports() const { return reports_; }

private:
    std::vector<Path> paths_;
    NuisanceSet initial_;
    double tau_;
    TmleOptions options_;
    std::map<std::tuple<int, int, double>, Evaluation> cache_;
    std::vector<EstimateReport> reports_;
};

enum class TargetKind { fixed_theta, absolute_delta, relative_rho, match_other_arm };

[[nodiscard]] std::string to_string(TargetKind k);
[[nodiscard]] TargetKind parse_target_kind(const std::string& text);

struct CalibrationTarget {
    TargetKind kind{TargetKind::fixed_theta};
    /// theta, delta or rho; unused for match_other_arm.
    double value{0.0};
    /// Arm whose alpha is calibrated; required for match_other_arm.
    std::optional<int> arm{};
};

struct SolveOptions {
    /// Fixed tolerance instead of se / log n.
    std::optional<double> c_n{};
    /// Lower bound on the tolerance (needed for error-free evaluators).
    double min_tolerance{1e-10};
    double large_alpha{50.0};
    int max_evaluations{200};
    double alpha_max{1e4};
    double alpha_min{1e-10};
};

struct TracePoint {
    double alpha;
    double psi;
    double se;
};

struct SolveResult {
    double alpha_hat{1.0};
    double level{0.0};
    double c_n{0.0};
    Evaluation at_alpha{};
    /// Psi_z^{a,1} (absolute/relative) or Psi_z^{1-a,1} (match); empty for fixed levels.
    std::optional<Evaluation> reference{};
    Evaluation large_alpha{};
    std::vector<TracePoint> trace;
    /// Pairs in the alpha-sorted trace whose Psi_z drops by more than 2 c_n.
    std::vector<std::pair<double, double>> monotonicity_flags;
};

/// Solves Psi_z^{a,alpha} = level with the expand/contract walk from alpha = 1
/// and bisection once bracketed. Throws InfeasibleTarget when the level is
/// outside (0, L^a) with L^a = Psi_z^{a,large_alpha}.
[[nodiscard]] SolveResult solve_alpha(CurveEvaluator& evaluator, const CalibrationTarget& target,
                                      const SolveOptions& options = {});

struct DerivativeResult {
    double kappa{0.0};
    double h{0.0};
    Evaluation plus{};
    Evaluation minus{};
    /// True when the two evaluations differ by less than twice their combined SE.
    bool noise_dominated{false};
};

/// Central difference (psi(alpha + h) - psi(alpha - h)) / (2h). Without h the
/// default is n^(-1/6) max(alpha, 1), clamped so alpha - h >= 0.
[[nodiscard]] DerivativeResult derivative(CurveEvaluator& evaluator, Target x, std::optional<int> arm, double alpha,
                                          std::optional<double> h = std::nullopt);

struct Decomposition {
    double total{0.0};
    double indirect{0.0};
    double direct{0.0};
    double total_se{0.0};
    double indirect_se{0.0};
    double direct_se{0.0};
};

struct CompositeReport {
    std::string mode;
    CalibrationTarget target{};
    double level{0.0};
    double c_n{0.0};
    double alpha_hat{1.0};
    double alpha_se{0.0};
    double psi_z_hat{0.0};
    double psi1_hat{0.0};
    double psi1_se{0.0};
    double ci_lo{0.0};
    double ci_hi{0.0};
    double kappa_z{0.0};
    double kappa_1{0.0};
    double derivative_h{0.0};
    bool kappa_noise_dominated{false};
    double large_alpha_value{0.0};
    double feasibility_margin{0.0};
    std::optional<Decomposition> decomposition{};
    std::vector<TracePoint> trace;
    std::vector<std::pair<double, double>> monotonicity_flags;
    std::vector<double> composite_influence;
};

struct CompositeOptions {
    SolveOptions solve{};
    std::optional<double> h{};
};

/// alpha-hat, Psi_1 at alpha-hat and the composite influence
/// phi_1(alpha-hat) + kappa_1 phi_alpha. For match_other_arm the report also
/// carries indirect = Psi_1^{a,1} - Psi_1^{a,alpha-hat} and
/// direct = Psi_1^{a,alpha-hat} - Psi_1^{1-a,1}.
[[nodiscard]] CompositeReport composite_estimate(CurveEvaluator& evaluator, const CalibrationTarget& target,
                                                 const CompositeOptions& options = {});

/// Psi_1^{1,1} - Psi_1^{0,alpha} = (Psi_1^{1,1} - Psi_1^{1,alpha}) + (Psi_1^{1,alpha} - Psi_1^{0,alpha}).
[[nodiscard]] Decomposition joint_decomposition(CurveEvaluator& evaluator, double alpha);

struct FeasibilityPoint {
    double alpha;
    double psi_z;
    double psi_z_se;
    double psi1;
    double psi1_se;
    double max_weight;
};

struct FeasibilityReport {
    double large_alpha{50.0};
    double l_hat{0.0};
    double l_se{0.0};
    std::optional<double> level{};
    std::optional<double> margin{};
    bool feasible{true};
    std::vector<FeasibilityPoint> curve;
};

[[nodiscard]] FeasibilityReport feasibility_report(CurveEvaluator& evaluator, std::optional<int> arm,
                                                   const std::optional<CalibrationTarget>& target,
                                                   const std::vector<double>& alphas = {0, 0.25, 0.5, 1, 2, 5, 10},
                                                   double large_alpha = 50.0);

}  // namespace evscale
