#include "evscale/event_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "evscale/errors.hpp"

namespace evscale {

std::string Mark::to_string() const {
    switch (kind) {
        case MarkKind::outcome: return "outcome" + std::to_string(outcome);
        case MarkKind::ell: return "ell";
        case MarkKind::z: return "z";
        case MarkKind::censor: return "censor";
    }
    return "unknown";
}

Mark Mark::parse(std::string_view text) {
    if (text == "ell") return Mark::ell();
    if (text == "z") return Mark::z();
    if (text == "censor" || text == "c") return Mark::censor();
    constexpr std::string_view prefix = "outcome";
    if (text.substr(0, prefix.size()) == prefix && text.size() > prefix.size()) {
        const std::string digits(text.substr(prefix.size()));
        int j = 0;
        try {
            std::size_t used = 0;
            j = std::stoi(digits, &used);
            if (used != digits.size()) j = 0;
        } catch (const std::exception&) {
            j = 0;
        }
        if (j >= 1 && j <= kMaxOutcomes) return Mark::outcome_j(j);
    }
    throw std::invalid_argument("unknown mark '" + std::string(text) + "'");
}

State State::after(const Mark& m) const {
    State s = *this;
    if (m.kind == MarkKind::ell) s.n_ell = 1;
    if (m.kind == MarkKind::z) s.n_z = 1;
    return s;
}

double Path::end_time() const {
    if (!jumps.empty() && jumps.back().mark.terminal()) return jumps.back().time;
    return tau;
}

bool Path::has_terminal() const { return !jumps.empty() && jumps.back().mark.terminal(); }

int Path::count(const Mark& m) const {
    return static_cast<int>(std::count_if(jumps.begin(), jumps.end(), [&](const Jump& j) { return j.mark == m; }));
}

State Path::state_before(double t) const {
    State s;
    for (const auto& j : jumps) {
        if (j.time >= t) break;
        s = s.after(j.mark);
    }
    return s;
}

void Path::validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("path: tau must be positive");
    if (a0 && *a0 != 0 && *a0 != 1) throw std::invalid_argument("path: a0 must be 0 or 1");
    if (!std::isfinite(l0)) throw std::invalid_argument("path: l0 must be finite");
    double prev = 0.0;
    int n_ell = 0;
    int n_z = 0;
    for (std::size_t k = 0; k < jumps.size(); ++k) {
        const auto& j = jumps[k];
        if (!(j.time > prev) || j.time > tau) {
            throw std::invalid_argument("path: jump times must be strictly increasing in (0, tau]");
        }
        prev = j.time;
        if (j.mark.kind == MarkKind::ell && ++n_ell > 1) throw std::invalid_argument("path: more than one ell jump");
        if (j.mark.kind == MarkKind::z && ++n_z > 1) throw std::invalid_argument("path: more than one z jump");
        if (j.mark.kind == MarkKind::outcome && (j.mark.outcome < 1 || j.mark.outcome > kMaxOutcomes)) {
            throw std::invalid_argument("path: outcome index out of range");
        }
        if (j.mark.terminal() && k + 1 != jumps.size()) {
            throw std::invalid_argument("path: jumps after a terminal event");
        }
    }
}

std::vector<Segment> segments(const Path& path) {
    std::vector<Segment> out;
    out.reserve(path.jumps.size() + 1);
    double start = 0.0;
    State state;
    for (const auto& j : path.jumps) {
        out.push_back({start, j.time, state, j.mark});
        if (j.mark.terminal()) return out;
        state = state.after(j.mark);
        start = j.time;
    }
    if (start < path.tau) out.push_back({start, path.tau, state, std::nullopt});
    return out;
}

double hazard_at(const IntensityModel& model, const Mark& mark, double t, const State& state,
                 std::optional<int> a0, double l0) {
    if (!(t > 0.0)) throw std::invalid_argument("hazard_at: t must be positive");
    if (!admissible(mark, state) || model.eta == 0.0) return 0.0;
    const double shape = model.nu == 1.0 ? 1.0 : model.nu * std::pow(t, model.nu - 1.0);
    return model.eta * shape * std::exp(model.linear_predictor(state, a0, l0));
}

double cumulative_hazard(const IntensityModel& model, const Mark& mark, double s, double t, const State& state,
                         std::optional<int> a0, double l0) {
    if (s < 0.0 || s > t) throw std::invalid_argument("cumulative_hazard: need 0 <= s <= t");
    if (!admissible(mark, state) || model.eta == 0.0 || s == t) return 0.0;
    const double base = model.nu == 1.0 ? t - s : std::pow(t, model.nu) - std::pow(s, model.nu);
    return model.eta * std::exp(model.linear_predictor(state, a0, l0)) * base;
}

double path_cumulative_hazard(const IntensityModel& model, const Mark& mark, const Path& path, double t) {
    double total = 0.0;
    for (const auto& seg : segments(path)) {
        if (seg.start >= t) break;
        total += cumulative_hazard(model, mark, seg.start, std::min(seg.end, t), seg.state, path.a0, path.l0);
    }
    return total;
}

const IntensityModel& ModelSet::operator[](const Mark& m) const {
    switch (m.kind) {
        case MarkKind::ell: return ell;
        case MarkKind::z: return z;
        case MarkKind::censor: return censor;
        case MarkKind::outcome: break;
    }
    if (m.outcome < 1 || m.outcome > num_outcomes()) throw std::out_of_range("no model for " + m.to_string());
    return outcomes[static_cast<std::size_t>(m.outcome - 1)];
}

IntensityModel& ModelSet::operator[](const Mark& m) {
    return const_cast<IntensityModel&>(static_cast<const ModelSet&>(*this)[m]);
}

std::vector<Mark> ModelSet::event_marks() const {
    std::vector<Mark> marks;
    for (int j = 1; j <= num_outcomes(); ++j) marks.push_back(Mark::outcome_j(j));
    marks.push_back(Mark::ell());
    marks.push_back(Mark::z());
    return marks;
}

double Propensity::prob(int a, double l0) const {
    const double p = form == Form::constant ? p1 : 1.0 / (1.0 + std::exp(-(intercept + slope * l0)));
    return a == 1 ? p : 1.0 - p;
}

double L0Distribution::draw(double u) const {
    if (uniform()) return u;
    const auto n = empirical.size();
    const auto k = std::min(n - 1, static_cast<std::size_t>(u * static_cast<double>(n)));
    return empirical[k];
}

std::vector<double> L0Distribution::nodes(std::size_t count) const {
    if (!uniform()) return empirical;
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(count);
    return out;
}

namespace {

void check_model(const IntensityModel& m, const std::string& label, bool allow_zero_rate) {
    const bool finite = std::isfinite(m.eta) && std::isfinite(m.nu) && std::isfinite(m.beta_a0) &&
                        std::isfinite(m.beta_l0) && std::isfinite(m.beta_z) && std::isfinite(m.beta_ell);
    if (!finite) throw ConfigError("event_model", label + ": non-finite parameter");
    if (allow_zero_rate ? m.eta < 0.0 : !(m.eta > 0.0)) {
        throw ConfigError("event_model", label + ": eta must be " + (allow_zero_rate ? "non-negative" : "positive"));
    }
    if (!(m.nu > 0.0)) throw ConfigError("event_model", label + ": nu must be positive");
}

}  // namespace

ValidatedScenario build_scenario(ScenarioConfig config) {
    if (!(config.tau > 0.0) || !std::isfinite(config.tau)) throw ConfigError("event_model", "tau must be positive");
    const int J = config.models.num_outcomes();
    if (J < 1) throw ConfigError("event_model", "missing outcome model (J must be >= 1)");
    if (J > kMaxOutcomes) throw ConfigError("event_model", "at most " + std::to_string(kMaxOutcomes) + " outcomes");
    for (int j = 1; j <= J; ++j) {
        check_model(config.models.outcomes[static_cast<std::size_t>(j - 1)], "outcome" + std::to_string(j), false);
    }
    check_model(config.models.ell, "ell", true);
    check_model(config.models.z, "z", true);
    check_model(config.models.censor, "censor", true);
    if (config.propensity) {
        const auto& p = *config.propensity;
        if (p.form == Propensity::Form::constant && !(p.p1 > 0.0 && p.p1 < 1.0)) {
            throw ConfigError("event_model", "propensity must lie in (0,1)");
        }
        if (!std::isfinite(p.intercept) || !std::isfinite(p.slope)) {
            throw ConfigError("event_model", "propensity coefficients must be finite");
        }
    }
    for (double v : config.l0.empirical) {
        if (!std::isfinite(v)) throw ConfigError("event_model", "empirical l0 values must be finite");
    }
    return ValidatedScenario(std::move(config));
}

void ValidatedScenario::check_intervention(const InterventionSpec& iv) const {
    if (!(iv.alpha >= 0.0) || !std::isfinite(iv.alpha)) throw ConfigError("event_model", "alpha must be >= 0");
    if (iv.arm) {
        if (!has_arm()) throw ConfigError("event_model", "arm requested in a scenario without baseline treatment");
        if (*iv.arm != 0 && *iv.arm != 1) throw ConfigError("event_model", "arm must be 0 or 1");
    }
}

ScenarioConfig preset_config(std::string_view name, const PresetDefaults& d) {
    ScenarioConfig c;
    c.name = std::string(name);
    c.tau = d.tau;
    IntensityModel base;
    base.eta = d.eta;
    base.nu = d.nu;
    c.models.outcomes = {base};
    c.models.ell = base;
    c.models.z = base;
    c.models.censor = IntensityModel{d.censor_eta, 1.0};
    auto& death = c.models.outcomes[0];
    if (name == "example1") {
        // observational: no baseline treatment decision
        c.models.z.beta_ell = 3.0;
        death.beta_ell = 2.5;
        c.models.ell.beta_z = -2.5;
        death.beta_z = -0.5;
    } else if (name == "example2") {
        c.propensity = Propensity::constant(0.5);
        death.beta_a0 = -0.1;
        c.models.z.beta_a0 = -2.5;
        death.beta_z = 1.5;
    } else if (name == "example3") {
        c.propensity = Propensity::constant(0.5);
        c.models.ell.beta_a0 = -2.5;
        death.beta_a0 = -0.5;
        c.models.z.beta_ell = 3.0;
        death.beta_ell = 0.5;
        c.models.ell.beta_z = -2.0;
        death.beta_z = -3.0;
    } else {
        throw ConfigError("event_model", "unknown preset '" + std::string(name) + "'");
    }
    return c;
}

std::vector<std::string> preset_names() { return {"example1", "example2", "example3"}; }

}  // namespace evscale
