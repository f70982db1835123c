#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evscale/event_model.hpp"

namespace evscale {

/// The counted mark in Psi_x: outcome 1 or the intermediate event z.
enum class Target { outcome1 = 0, z = 1 };

[[nodiscard]] std::string to_string(Target x);
[[nodiscard]] Target parse_target(const std::string& text);

/// g[state][x] for the four transient states and x in {outcome1, z}.
using StateValues = std::array<std::array<double, 2>, kNumStates>;

enum class Interpolation { linear, exact };

struct EngineOptions {
    std::size_t grid_size{2000};
    Interpolation interpolation{Interpolation::linear};
    /// Upper bound on the estimated rate-freezing error accumulated over the grid.
    /// Steps over their share are bisected adaptively; the solve fails only
    /// when a step would need more than 4096 pieces.
    double coarse_tolerance{1e-4};
};

/// Subject-specific ingredients of the intervened generator: per mark and
/// state the factor scale * exp(linear predictor), zero when inadmissible.
struct RateSpec {
    int num_outcomes{1};
    /// Marks in the order outcome1..J, ell, z.
    std::vector<std::array<double, kNumStates>> multiplier;
    std::vector<double> eta;
    std::vector<double> nu;
};

/// Backward solution g_x(t, s | a0, l0) of the Kolmogorov equations on the grid.
class ValueTable {
public:
    ValueTable(std::shared_ptr<const std::vector<double>> grid, std::vector<StateValues> values, RateSpec rates,
               Interpolation mode);

    [[nodiscard]] const std::vector<double>& grid() const { return *grid_; }
    [[nodiscard]] const StateValues& at_node(std::size_t k) const { return values_[k]; }
    [[nodiscard]] double tau() const { return grid_->back(); }
    [[nodiscard]] Interpolation interpolation() const { return mode_; }

    /// All transient-state values at time t in [0, tau].
    [[nodiscard]] StateValues at(double t) const;
    [[nodiscard]] double value(double t, const State& s, Target x) const;

    /// Index k with grid[k] <= t < grid[k+1] (last cell for t = tau).
    [[nodiscard]] std::size_t cell(double t) const;

private:
    std::shared_ptr<const std::vector<double>> grid_;
    std::vector<StateValues> values_;
    RateSpec rates_;
    Interpolation mode_;
};

/// Precomputes per-step time factors for a model set under an intervention
/// and solves the backward equations for any (a0, l0).
class BackwardSolver {
public:
    BackwardSolver(const ModelSet& models, const InterventionSpec& intervention, double tau,
                   EngineOptions options = {});

    [[nodiscard]] ValueTable solve(std::optional<int> a0, double l0) const;
    [[nodiscard]] RateSpec rates_for(std::optional<int> a0, double l0) const;
    [[nodiscard]] const ModelSet& models() const { return models_; }
    [[nodiscard]] const InterventionSpec& intervention() const { return intervention_; }
    [[nodiscard]] const EngineOptions& options() const { return options_; }
    [[nodiscard]] double tau() const { return tau_; }

private:
    ModelSet models_;
    InterventionSpec intervention_;
    double tau_;
    EngineOptions options_;
    std::shared_ptr<const std::vector<double>> grid_;
    std::vector<std::vector<double>> step_rate_;   // [mark][k], step-averaged baseline rate
    std::vector<std::vector<double>> step_error_;  // [mark][k], |exact - midpoint| integral
    bool uses_l0_{false};
    bool uses_a0_{false};

    friend class TableCache;
};

/// Memoises tables per distinct (a0, l0) actually affecting the rates.
class TableCache {
public:
    explicit TableCache(const BackwardSolver& solver) : solver_(solver) {}
    const ValueTable& get(std::optional<int> a0, double l0);
    /// Tables for every path's own (a0, l0), solving missing ones in parallel.
    std::vector<const ValueTable*> for_subjects(const std::vector<Path>& paths);

private:
    const BackwardSolver& solver_;
    std::map<std::pair<int, double>, std::unique_ptr<ValueTable>> tables_;
};

/// Propagates values backwards over [t0, t1] with constant rates r[mark][state].
void propagate_frozen(StateValues& g, const std::vector<std::array<double, kNumStates>>& rates, int num_outcomes,
                      double duration);

[[nodiscard]] ValueTable backward_solve(const ModelSet& models, const InterventionSpec& intervention, double tau,
                                        std::size_t grid_size, std::optional<int> a0, double l0,
                                        Interpolation mode = Interpolation::linear);

/// Post-jump minus no-jump value of N^x(tau) for a jump of `mark` at a time
/// where the table gives `g`; jumps of z carry the factor alpha.
[[nodiscard]] double clever_covariate(const StateValues& g, const State& state, const Mark& mark, double alpha,
                                      Target x);
[[nodiscard]] double clever_covariate(const ValueTable& table, double t, const State& state, const Mark& mark,
                                      double alpha, Target x);

/// Mean over l0_sample of g_x(0, 00 | a, l0). With no arm in the intervention
/// and a propensity given, A0 is averaged over P(A0 | l0).
[[nodiscard]] double plugin_psi(const ModelSet& models, const InterventionSpec& intervention, Target x, double tau,
                                const std::vector<double>& l0_sample, const std::optional<Propensity>& propensity,
                                EngineOptions options = {});

}  // namespace evscale
