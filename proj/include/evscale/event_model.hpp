#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace evscale {

/// Largest number of competing outcome marks (J) supported.
inline constexpr int kMaxOutcomes = 6;

enum class MarkKind { outcome, ell, z, censor };

/// One element of the mark space {1..J, ell, z, c}.
struct Mark {
    MarkKind kind{MarkKind::outcome};
    int outcome{1};  // 1-based; meaningful only for MarkKind::outcome

    static constexpr Mark outcome_j(int j) { return {MarkKind::outcome, j}; }
    static constexpr Mark ell() { return {MarkKind::ell, 0}; }
    static constexpr Mark z() { return {MarkKind::z, 0}; }
    static constexpr Mark censor() { return {MarkKind::censor, 0}; }

    [[nodiscard]] constexpr bool terminal() const {
        return kind == MarkKind::outcome || kind == MarkKind::censor;
    }
    [[nodiscard]] std::string to_string() const;
    static Mark parse(std::string_view text);

    friend constexpr bool operator==(const Mark& a, const Mark& b) {
        return a.kind == b.kind && (a.kind != MarkKind::outcome || a.outcome == b.outcome);
    }
};

/// Current values of the two binary processes (N^ell(t-), N^z(t-)).
struct State {
    int n_ell{0};
    int n_z{0};

    /// 00 -> 0, ell only -> 1, z only -> 2, both -> 3.
    [[nodiscard]] constexpr int index() const { return n_ell + 2 * n_z; }
    static constexpr State from_index(int i) { return {i & 1, (i >> 1) & 1}; }
    [[nodiscard]] State after(const Mark& m) const;

    friend constexpr bool operator==(const State& a, const State& b) {
        return a.n_ell == b.n_ell && a.n_z == b.n_z;
    }
};

inline constexpr int kNumStates = 4;

/// ell and z can jump once; terminal marks are always admissible while at risk.
[[nodiscard]] constexpr bool admissible(const Mark& m, const State& s) {
    switch (m.kind) {
        case MarkKind::ell: return s.n_ell == 0;
        case MarkKind::z: return s.n_z == 0;
        default: return true;
    }
}

struct Jump {
    double time{0.0};
    Mark mark{};
};

/// One subject's observed (or simulated) trajectory on [0, tau].
struct Path {
    double l0{0.0};
    std::optional<int> a0;
    std::vector<Jump> jumps;
    double tau{1.0};

    /// Time of the terminal jump, or tau when follow-up runs to the horizon.
    [[nodiscard]] double end_time() const;
    [[nodiscard]] bool has_terminal() const;
    /// N^x(tau) for a mark x.
    [[nodiscard]] int count(const Mark& m) const;
    /// State just before time t, i.e. (N^ell(t-), N^z(t-)).
    [[nodiscard]] State state_before(double t) const;
    /// Throws std::invalid_argument when a structural invariant fails.
    void validate() const;
};

/// A piece of a path on which the state is frozen: [start, end) in `state`,
/// optionally closed by a jump at `end`.
struct Segment {
    double start;
    double end;
    State state;
    std::optional<Mark> closing_mark;
};

[[nodiscard]] std::vector<Segment> segments(const Path& path);

/// Weibull-Cox cause-specific intensity
///   eta * nu * t^(nu-1) * exp(b_a0 A0 + b_l0 L0 + b_z N^z(t-) + b_ell N^ell(t-)).
struct IntensityModel {
    double eta{0.0};
    double nu{1.0};
    double beta_a0{0.0};
    double beta_l0{0.0};
    double beta_z{0.0};
    double beta_ell{0.0};

    [[nodiscard]] double linear_predictor(const State& s, std::optional<int> a0, double l0) const {
        return beta_a0 * (a0 ? *a0 : 0) + beta_l0 * l0 + beta_z * s.n_z + beta_ell * s.n_ell;
    }
};

[[nodiscard]] double hazard_at(const IntensityModel& model, const Mark& mark, double t, const State& state,
                               std::optional<int> a0, double l0);

[[nodiscard]] double cumulative_hazard(const IntensityModel& model, const Mark& mark, double s, double t,
                                       const State& state, std::optional<int> a0, double l0);

/// Integral of the mark's intensity along the path from 0 to t.
[[nodiscard]] double path_cumulative_hazard(const IntensityModel& model, const Mark& mark, const Path& path,
                                            double t);

/// One intensity model per mark of {1..J, ell, z, c}.
struct ModelSet {
    std::vector<IntensityModel> outcomes{IntensityModel{}};
    IntensityModel ell{};
    IntensityModel z{};
    IntensityModel censor{};

    [[nodiscard]] int num_outcomes() const { return static_cast<int>(outcomes.size()); }
    [[nodiscard]] const IntensityModel& operator[](const Mark& m) const;
    [[nodiscard]] IntensityModel& operator[](const Mark& m);
    /// outcomes 1..J, ell, z (the marks that the targeting step fluctuates).
    [[nodiscard]] std::vector<Mark> event_marks() const;
};

/// P(A0 = 1 | L0): a constant or logistic in L0.
struct Propensity {
    enum class Form { constant, logistic };
    Form form{Form::constant};
    double p1{0.5};
    double intercept{0.0};
    double slope{0.0};

    [[nodiscard]] double prob(int a, double l0) const;
    static Propensity constant(double p) { return {Form::constant, p, 0.0, 0.0}; }
    static Propensity logistic(double b0, double b1) { return {Form::logistic, 0.5, b0, b1}; }
};

/// Uniform(0,1) when `empirical` is empty, otherwise resampling from the values.
struct L0Distribution {
    std::vector<double> empirical;

    [[nodiscard]] bool uniform() const { return empirical.empty(); }
    [[nodiscard]] double draw(double u) const;
    /// Deterministic nodes representing the law (midpoint rule for the uniform).
    [[nodiscard]] std::vector<double> nodes(std::size_t count) const;
};

struct ScenarioConfig {
    std::string name{"custom"};
    ModelSet models{};
    L0Distribution l0{};
    std::optional<Propensity> propensity{};
    double tau{3.0};
};

/// Intervention: fix the arm (or leave A0 as observed), scale the z-intensity by
/// alpha and remove censoring.
struct InterventionSpec {
    std::optional<int> arm;
    double alpha{1.0};
};

class ValidatedScenario;

/// Validates a configuration; throws evscale::ConfigError on violations.
[[nodiscard]] ValidatedScenario build_scenario(ScenarioConfig config);

class ValidatedScenario {
public:
    [[nodiscard]] const ScenarioConfig& config() const { return config_; }
    [[nodiscard]] const ModelSet& models() const { return config_.models; }
    [[nodiscard]] double tau() const { return config_.tau; }
    [[nodiscard]] int num_outcomes() const { return config_.models.num_outcomes(); }
    [[nodiscard]] bool has_arm() const { return config_.propensity.has_value(); }
    [[nodiscard]] const std::optional<Propensity>& propensity() const { return config_.propensity; }

    /// Throws ConfigError when the intervention references an arm the scenario lacks.
    void check_intervention(const InterventionSpec& iv) const;

private:
    explicit ValidatedScenario(ScenarioConfig c) : config_(std::move(c)) {}
    friend ValidatedScenario build_scenario(ScenarioConfig config);
    ScenarioConfig config_;
};

/// Baseline defaults for the presets; none of these are given for the examples.
struct PresetDefaults {
    double eta{0.1};
    double nu{1.0};
    double tau{3.0};
    double censor_eta{0.05};
};

/// example1 (operation, no baseline arm), example2 (T2D trial), example3 (drop-in trial).
[[nodiscard]] ScenarioConfig preset_config(std::string_view name, const PresetDefaults& defaults = {});

[[nodiscard]] std::vector<std::string> preset_names();

}  // namespace evscale
