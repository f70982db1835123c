#include "evscale/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "evscale/errors.hpp"
#include "evscale/parallel.hpp"
#include "evscale/truth.hpp"

namespace evscale {

namespace {

std::tuple<int, int, double> key(Target x, std::optional<int> arm, double alpha) {
    return {static_cast<int>(x), arm.value_or(-1), alpha};
}

double rms_se(const std::vector<double>& influence, double n) {
    if (influence.empty()) return 0.0;
    std::vector<double> sq(influence.size());
    for (std::size_t i = 0; i < influence.size(); ++i) sq[i] = influence[i] * influence[i];
    return std::sqrt(mean(sq) / n);
}

std::vector<double> combine(const std::vector<double>& a, double ca, const std::vector<double>& b, double cb) {
    if (a.empty() || b.empty() || a.size() != b.size()) return {};
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = ca * a[i] + cb * b[i];
    return out;
}

}  // namespace

Evaluation MonteCarloEvaluator::evaluate(Target x, std::optional<int> arm, double alpha) {
    if (auto it = cache_.find(key(x, arm, alpha)); it != cache_.end()) return it->second;
    const auto sample = mc_sample(scenario_, InterventionSpec{arm, alpha}, reps_, seed_);
    for (Target t : {Target::outcome1, Target::z}) {
        const auto& v = t == Target::outcome1 ? sample.n1 : sample.nz;
        Evaluation e;
        e.alpha = alpha;
        e.psi = mean(v);
        e.se = std::sqrt(std::max(0.0, e.psi * (1.0 - e.psi)) / static_cast<double>(reps_));
        e.influence.resize(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) e.influence[i] = v[i] - e.psi;
        cache_[key(t, arm, alpha)] = std::move(e);
    }
    return cache_.at(key(x, arm, alpha));
}

Evaluation PluginEvaluator::evaluate(Target x, std::optional<int> arm, double alpha) {
    const InterventionSpec iv{arm, alpha};
    scenario_.check_intervention(iv);
    Evaluation e;
    e.alpha = alpha;
    e.psi = plugin_psi(scenario_.models(), iv, x, scenario_.tau(), scenario_.config().l0.nodes(l0_nodes_),
                       scenario_.propensity(), engine_);
    return e;
}

Evaluation TmleEvaluator::evaluate(Target x, std::optional<int> arm, double alpha) {
    if (auto it = cache_.find(key(x, arm, alpha)); it != cache_.end()) return it->second;
    auto result = target(paths_, initial_, InterventionSpec{arm, alpha}, x, tau_, options_);
    Evaluation e;
    e.alpha = alpha;
    e.psi = result.report.psi_hat;
    e.se = result.report.se;
    e.influence = result.report.eic;
    e.max_weight = result.report.weights.max_weight;
    result.report.eic.clear();
    reports_.push_back(std::move(result.report));
    cache_[key(x, arm, alpha)] = e;
    return e;
}

std::string to_string(TargetKind k) {
    switch (k) {
        case TargetKind::fixed_theta: return "fixed";
        case TargetKind::absolute_delta: return "absolute";
        case TargetKind::relative_rho: return "relative";
        case TargetKind::match_other_arm: return "match";
    }
    return "unknown";
}

TargetKind parse_target_kind(const std::string& text) {
    if (text == "fixed" || text == "fixed_theta") return TargetKind::fixed_theta;
    if (text == "absolute" || text == "absolute_delta") return TargetKind::absolute_delta;
    if (text == "relative" || text == "relative_rho") return TargetKind::relative_rho;
    if (text == "match" || text == "match_other_arm") return TargetKind::match_other_arm;
    throw ConfigError("calibration", "unknown calibration kind '" + text + "'");
}

namespace {

void check_target(const CalibrationTarget& t) {
    switch (t.kind) {
        case TargetKind::fixed_theta:
            if (!(t.value > 0.0 && t.value < 1.0)) throw ConfigError("calibration", "theta must lie in (0,1)");
            break;
        case TargetKind::absolute_delta:
            if (!(t.value > -1.0 && t.value < 1.0)) throw ConfigError("calibration", "delta must lie in (-1,1)");
            break;
        case TargetKind::relative_rho:
            if (!(t.value > 0.0) || !std::isfinite(t.value)) throw ConfigError("calibration", "rho must be positive");
            break;
        case TargetKind::match_other_arm:
            if (!t.arm) throw ConfigError("calibration", "matching the other arm needs --arm");
            break;
    }
    if (t.arm && *t.arm != 0 && *t.arm != 1) throw ConfigError("calibration", "arm must be 0 or 1");
}

struct Level {
    double value;
    std::optional<Evaluation> reference;
};

Level resolve_level(CurveEvaluator& ev, const CalibrationTarget& t) {
    switch (t.kind) {
        case TargetKind::fixed_theta: return {t.value, std::nullopt};
        case TargetKind::absolute_delta: {
            auto ref = ev.evaluate(Target::z, t.arm, 1.0);
            return {ref.psi + t.value, ref};
        }
        case TargetKind::relative_rho: {
            auto ref = ev.evaluate(Target::z, t.arm, 1.0);
            return {t.value * ref.psi, ref};
        }
        case TargetKind::match_other_arm: {
            auto ref = ev.evaluate(Target::z, 1 - *t.arm, 1.0);
            return {ref.psi, ref};
        }
    }
    return {0.0, std::nullopt};
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

SolveResult solve_alpha(CurveEvaluator& evaluator, const CalibrationTarget& target, const SolveOptions& options) {
    check_target(target);
    SolveResult out;
    const auto level = resolve_level(evaluator, target);
    out.level = level.value;
    out.reference = level.reference;
    out.large_alpha = evaluator.evaluate(Target::z, target.arm, options.large_alpha);
    const double L = out.large_alpha.psi;
    if (!(out.level > 0.0) || out.level >= L) {
        throw InfeasibleTarget("calibration level " + fmt(out.level) + " is outside (0, L^a) with L^a = " + fmt(L) +
                                   " (Psi_z at alpha = " + fmt(options.large_alpha) + ")",
                               out.level, L);
    }

    const double logn = std::log(std::max(evaluator.sample_size(), 3.0));
    auto tolerance = [&](const Evaluation& e) {
        return options.c_n ? *options.c_n : std::max(e.se / logn, options.min_tolerance);
    };
    std::optional<double> lo;
    std::optional<double> hi;
    double alpha = 1.0;
    for (int count = 0;; ++count) {
        if (count >= options.max_evaluations || alpha > options.alpha_max || alpha < options.alpha_min) {
            throw NonConvergence("calibration", "alpha search exhausted its bracket near alpha = " + fmt(alpha));
        }
        Evaluation e = evaluator.evaluate(Target::z, target.arm, alpha);
        out.trace.push_back({alpha, e.psi, e.se});
        const double c = tolerance(e);
        if (std::abs(e.psi - out.level) <= c) {
            out.alpha_hat = alpha;
            out.c_n = c;
            out.at_alpha = std::move(e);
            break;
        }
        if (e.psi < out.level) lo = alpha; else hi = alpha;
        if (lo && hi) {
            if (*hi - *lo <= 1e-14 * std::max(1.0, *hi)) {
                throw NonConvergence("calibration", "bracket collapsed at alpha = " + fmt(alpha) +
                                                        " without meeting the tolerance");
            }
            alpha = 0.5 * (*lo + *hi);
        } else {
            alpha = e.psi < out.level ? 1.25 * alpha : 0.8 * alpha;
        }
    }

    auto sorted = out.trace;
    std::sort(sorted.begin(), sorted.end(), [](const TracePoint& a, const TracePoint& b) { return a.alpha < b.alpha; });
    for (std::size_t k = 1; k < sorted.size(); ++k) {
        if (sorted[k].psi < sorted[k - 1].psi - 2.0 * out.c_n) {
            out.monotonicity_flags.emplace_back(sorted[k - 1].alpha, sorted[k].alpha);
        }
    }
    return out;
}

DerivativeResult derivative(CurveEvaluator& evaluator, Target x, std::optional<int> arm, double alpha,
                            std::optional<double> h) {
    DerivativeResult r;
    r.h = h ? *h : std::pow(std::max(evaluator.sample_size(), 1.0), -1.0 / 6.0) * std::max(alpha, 1.0);
    if (!h) r.h = std::min(r.h, alpha);
    if (!(r.h > 0.0)) throw std::invalid_argument("derivative: step h must be positive");
    if (alpha - r.h < 0.0) throw std::invalid_argument("derivative: alpha - h must be nonnegative");
    r.plus = evaluator.evaluate(x, arm, alpha + r.h);
    r.minus = evaluator.evaluate(x, arm, alpha - r.h);
    r.kappa = (r.plus.psi - r.minus.psi) / (2.0 * r.h);
    const double combined = std::hypot(r.plus.se, r.minus.se);
    r.noise_dominated = combined > 0.0 && std::abs(r.plus.psi - r.minus.psi) < 2.0 * combined;
    return r;
}

namespace {

Decomposition decompose(const Evaluation& a, const std::vector<double>& mid_influence, double mid_psi,
                        const Evaluation& b, double n) {
    Decomposition d;
    d.indirect = a.psi - mid_psi;
    d.direct = mid_psi - b.psi;
    d.total = a.psi - b.psi;
    d.indirect_se = rms_se(combine(a.influence, 1.0, mid_influence, -1.0), n);
    d.direct_se = rms_se(combine(mid_influence, 1.0, b.influence, -1.0), n);
    d.total_se = rms_se(combine(a.influence, 1.0, b.influence, -1.0), n);
    return d;
}

}  // namespace

CompositeReport composite_estimate(CurveEvaluator& evaluator, const CalibrationTarget& target,
                                   const CompositeOptions& options) {
    const SolveResult sr = solve_alpha(evaluator, target, options.solve);
    const double n = evaluator.sample_size();
    CompositeReport rep;
    rep.mode = evaluator.mode();
    rep.target = target;
    rep.level = sr.level;
    rep.c_n = sr.c_n;
    rep.alpha_hat = sr.alpha_hat;
    rep.psi_z_hat = sr.at_alpha.psi;
    rep.trace = sr.trace;
    rep.monotonicity_flags = sr.monotonicity_flags;
    rep.large_alpha_value = sr.large_alpha.psi;
    rep.feasibility_margin = sr.large_alpha.psi - sr.level;

    const auto dz = derivative(evaluator, Target::z, target.arm, sr.alpha_hat, options.h);
    const auto d1 = derivative(evaluator, Target::outcome1, target.arm, sr.alpha_hat, options.h);
    rep.kappa_z = dz.kappa;
    rep.kappa_1 = d1.kappa;
    rep.derivative_h = dz.h;
    rep.kappa_noise_dominated = dz.noise_dominated || d1.noise_dominated;
    if (!(dz.kappa > 0.0)) {
        throw NonConvergence("calibration", "derivative of Psi_z at alpha-hat is not positive (" + fmt(dz.kappa) + ")");
    }
    const Evaluation e1 = evaluator.evaluate(Target::outcome1, target.arm, sr.alpha_hat);
    rep.psi1_hat = e1.psi;

    const auto& phi_z = sr.at_alpha.influence;
    std::vector<double> phi_alpha;
    switch (target.kind) {
        case TargetKind::fixed_theta:
            phi_alpha.resize(phi_z.size());
            for (std::size_t i = 0; i < phi_z.size(); ++i) phi_alpha[i] = -phi_z[i] / dz.kappa;
            break;
        case TargetKind::absolute_delta:
            phi_alpha = combine(sr.reference->influence, 1.0 / dz.kappa, phi_z, -1.0 / dz.kappa);
            break;
        case TargetKind::relative_rho:
            phi_alpha = combine(sr.reference->influence, target.value / dz.kappa, phi_z, -1.0 / dz.kappa);
            break;
        case TargetKind::match_other_arm:
            phi_alpha = combine(sr.reference->influence, 1.0 / dz.kappa, phi_z, -1.0 / dz.kappa);
            break;
    }
    rep.composite_influence = combine(e1.influence, 1.0, phi_alpha, dz.kappa > 0.0 ? d1.kappa : 0.0);
    rep.alpha_se = rms_se(phi_alpha, n);
    rep.psi1_se = rms_se(rep.composite_influence, n);
    rep.ci_lo = rep.psi1_hat - 1.96 * rep.psi1_se;
    rep.ci_hi = rep.psi1_hat + 1.96 * rep.psi1_se;

    if (target.kind == TargetKind::match_other_arm) {
        const Evaluation same = evaluator.evaluate(Target::outcome1, target.arm, 1.0);
        const Evaluation other = evaluator.evaluate(Target::outcome1, 1 - *target.arm, 1.0);
        rep.decomposition = decompose(same, rep.composite_influence, rep.psi1_hat, other, n);
    }
    return rep;
}

Decomposition joint_decomposition(CurveEvaluator& evaluator, double alpha) {
    const Evaluation p11 = evaluator.evaluate(Target::outcome1, 1, 1.0);
    const Evaluation p1a = evaluator.evaluate(Target::outcome1, 1, alpha);
    const Evaluation p0a = evaluator.evaluate(Target::outcome1, 0, alpha);
    return decompose(p11, p1a.influence, p1a.psi, p0a, evaluator.sample_size());
}

FeasibilityReport feasibility_report(CurveEvaluator& evaluator, std::optional<int> arm,
                                     const std::optional<CalibrationTarget>& target, const std::vector<double>& alphas,
                                     double large_alpha) {
    FeasibilityReport rep;
    rep.large_alpha = large_alpha;
    const auto big = evaluator.evaluate(Target::z, arm, large_alpha);
    rep.l_hat = big.psi;
    rep.l_se = big.se;
    for (double a : alphas) {
        const auto ez = evaluator.evaluate(Target::z, arm, a);
        const auto e1 = evaluator.evaluate(Target::outcome1, arm, a);
        rep.curve.push_back({a, ez.psi, ez.se, e1.psi, e1.se, std::max(ez.max_weight, e1.max_weight)});
    }
    if (target) {
        check_target(*target);
        const auto level = resolve_level(evaluator, *target);
        rep.level = level.value;
        rep.margin = rep.l_hat - level.value;
        rep.feasible = level.value > 0.0 && level.value < rep.l_hat;
    }
    return rep;
}

}  // namespace evscale
