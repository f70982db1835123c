#include "evscale/nuisance.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "evscale/errors.hpp"
#include "evscale/parallel.hpp"

namespace evscale {

namespace {

constexpr int kParams = 6;
constexpr std::array<const char*, kParams> kNames{"log_eta", "log_nu", "a0", "l0", "n_z", "n_ell"};

struct Record {
    double a;
    double b;
    std::array<double, 4> x;
    bool event;
};

std::vector<Record> at_risk_records(const std::vector<Path>& paths, const Mark& mark) {
    std::vector<Record> out;
    for (const auto& p : paths) {
        for (const auto& seg : segments(p)) {
            if (!admissible(mark, seg.state) || !(seg.end > seg.start)) continue;
            out.push_back({seg.start, seg.end,
                           {static_cast<double>(p.a0.value_or(0)), p.l0, static_cast<double>(seg.state.n_z),
                            static_cast<double>(seg.state.n_ell)},
                           seg.closing_mark && *seg.closing_mark == mark});
        }
    }
    return out;
}

struct Accum {
    double value{0.0};
    std::array<double, kParams> g{};
    std::array<std::array<double, kParams>, kParams> h{};
};

void accumulate(const Record& r, const std::array<double, kParams>& th, bool derivatives, Accum& acc) {
    const double nu = std::exp(th[1]);
    double lp = 0.0;
    for (int k = 0; k < 4; ++k) lp += th[static_cast<std::size_t>(k + 2)] * r.x[static_cast<std::size_t>(k)];
    const double e = std::exp(th[0] + lp);
    const double bnu = std::pow(r.b, nu);
    const double anu = r.a > 0.0 ? std::pow(r.a, nu) : 0.0;
    const double H = e * (bnu - anu);
    acc.value -= H;
    const double lb = std::log(r.b);
    if (r.event) acc.value += th[0] + th[1] + (nu - 1.0) * lb + lp;
    if (!derivatives) return;

    const double la = r.a > 0.0 ? std::log(r.a) : 0.0;
    const double Hv = e * nu * (bnu * lb - anu * la);
    const double Hvv = Hv + e * nu * nu * (bnu * lb * lb - anu * la * la);
    std::array<double, kParams> dH{H, Hv, 0, 0, 0, 0};
    for (int k = 0; k < 4; ++k) dH[static_cast<std::size_t>(k + 2)] = r.x[static_cast<std::size_t>(k)] * H;
    for (int i = 0; i < kParams; ++i) acc.g[static_cast<std::size_t>(i)] -= dH[static_cast<std::size_t>(i)];
    // second derivatives: H is exp-linear in (u, beta), so d2H = feature products times H, except in v
    std::array<double, kParams> f{1.0, 0.0, r.x[0], r.x[1], r.x[2], r.x[3]};
    for (int i = 0; i < kParams; ++i) {
        for (int j = 0; j < kParams; ++j) {
            const auto ui = static_cast<std::size_t>(i);
            const auto uj = static_cast<std::size_t>(j);
            double d2;
            if (i == 1 && j == 1) d2 = Hvv;
            else if (i == 1) d2 = f[uj] * Hv;
            else if (j == 1) d2 = f[ui] * Hv;
            else d2 = f[ui] * f[uj] * H;
            acc.h[ui][uj] -= d2;
        }
    }
    if (r.event) {
        acc.g[0] += 1.0;
        acc.g[1] += 1.0 + nu * lb;
        for (int k = 0; k < 4; ++k) acc.g[static_cast<std::size_t>(k + 2)] += r.x[static_cast<std::size_t>(k)];
        acc.h[1][1] += nu * lb;
    }
}

Accum evaluate(const std::vector<Record>& records, const std::array<double, kParams>& th, bool derivatives) {
    constexpr std::size_t chunk = 2048;
    const std::size_t chunks = (records.size() + chunk - 1) / chunk;
    std::vector<Accum> parts(chunks);
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t end = std::min(records.size(), (c + 1) * chunk);
        for (std::size_t i = c * chunk; i < end; ++i) accumulate(records[i], th, derivatives, parts[c]);
    });
    Accum total;
    for (const auto& p : parts) {
        total.value += p.value;
        for (int i = 0; i < kParams; ++i) {
            total.g[static_cast<std::size_t>(i)] += p.g[static_cast<std::size_t>(i)];
            for (int j = 0; j < kParams; ++j)
                total.h[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
                    p.h[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    return total;
}

IntensityModel to_model(const std::array<double, kParams>& th) {
    return {std::exp(th[0]), std::exp(th[1]), th[2], th[3], th[4], th[5]};
}

}  // namespace

LogLikelihood intensity_loglik(const std::vector<Path>& paths, const Mark& mark, const std::vector<double>& theta,
                               bool derivatives) {
    if (theta.size() != kParams) throw std::invalid_argument("intensity_loglik: theta must have 6 entries");
    std::array<double, kParams> th{};
    std::copy(theta.begin(), theta.end(), th.begin());
    const auto acc = evaluate(at_risk_records(paths, mark), th, derivatives);
    LogLikelihood out;
    out.value = acc.value;
    if (derivatives) {
        out.gradient.assign(acc.g.begin(), acc.g.end());
        for (const auto& row : acc.h) out.hessian.emplace_back(row.begin(), row.end());
    }
    return out;
}

IntensityFit fit_intensity(const std::vector<Path>& paths, const Mark& mark, const CovariateSpec& spec,
                           const FitOptions& options) {
    const auto records = at_risk_records(paths, mark);
    IntensityFit fit;
    double exposure = 0.0;
    for (const auto& r : records) {
        exposure += r.b - r.a;
        fit.events += r.event ? 1 : 0;
    }
    if (fit.events == 0) {
        fit.model = IntensityModel{0.0, 1.0};
        fit.warnings.push_back("no " + mark.to_string() + " events: fitted a zero hazard");
        return fit;
    }

    std::vector<int> active{0};
    if (!spec.fix_shape) active.push_back(1);
    const std::array<bool, 4> wanted{spec.a0, spec.l0, spec.n_z, spec.n_ell};
    for (int k = 0; k < 4; ++k) {
        if (!wanted[static_cast<std::size_t>(k)]) continue;
        const double first = records.front().x[static_cast<std::size_t>(k)];
        const bool varies = std::any_of(records.begin(), records.end(),
                                        [&](const Record& r) { return r.x[static_cast<std::size_t>(k)] != first; });
        if (varies) active.push_back(k + 2);
        else fit.dropped.emplace_back(kNames[static_cast<std::size_t>(k + 2)]);
    }
    const auto p = static_cast<Eigen::Index>(active.size());

    std::array<double, kParams> th{std::log(fit.events / exposure), 0.0, 0.0, 0.0, 0.0, 0.0};
    Accum cur = evaluate(records, th, true);
    fit.loglik_init = cur.value;
    auto grad_of = [&](const Accum& a) {
        Eigen::VectorXd g(p);
        for (Eigen::Index i = 0; i < p; ++i) g(i) = a.g[static_cast<std::size_t>(active[static_cast<std::size_t>(i)])];
        return g;
    };

    const double gtol = options.gradient_tolerance * std::max(1.0, static_cast<double>(fit.events));
    bool converged = false;
    for (int it = 0; it < options.max_iter; ++it) {
        Eigen::VectorXd g = grad_of(cur);
        fit.gradient_norm = g.norm();
        fit.iterations = it;
        if (fit.gradient_norm <= gtol) {
            converged = true;
            break;
        }
        Eigen::MatrixXd negH(p, p);
        for (Eigen::Index i = 0; i < p; ++i)
            for (Eigen::Index j = 0; j < p; ++j)
                negH(i, j) = -cur.h[static_cast<std::size_t>(active[static_cast<std::size_t>(i)])]
                                   [static_cast<std::size_t>(active[static_cast<std::size_t>(j)])];
        Eigen::LDLT<Eigen::MatrixXd> ldlt(negH);
        Eigen::VectorXd step;
        if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0.0).all()) {
            step = ldlt.solve(g);
            // predicted gain already at round-off of the log-likelihood
            if (0.5 * g.dot(step) <= 1e-14 * std::max(1.0, std::abs(cur.value))) {
                converged = true;
                break;
            }
        } else {
            step = g / std::max(1.0, g.norm());
        }
        const double big = step.cwiseAbs().maxCoeff();
        if (big > 5.0) step *= 5.0 / big;

        bool improved = false;
        double scale = 1.0;
        for (int half = 0; half < 60; ++half, scale *= 0.5) {
            auto trial = th;
            for (Eigen::Index i = 0; i < p; ++i) trial[static_cast<std::size_t>(active[static_cast<std::size_t>(i)])] += scale * step(i);
            const Accum val = evaluate(records, trial, false);
            if (std::isfinite(val.value) && val.value >= cur.value) {
                th = trial;
                cur = evaluate(records, th, true);
                improved = true;
                break;
            }
        }
        if (!improved) {
            fit.gradient_norm = grad_of(cur).norm();
            converged = fit.gradient_norm <= 1e3 * gtol;
            break;
        }
    }
    if (!converged) {
        fit.gradient_norm = grad_of(cur).norm();
        if (fit.gradient_norm <= gtol) {
            converged = true;
        } else {
            throw NonConvergence("nuisance", "fit for " + mark.to_string() + " did not converge; gradient norm " +
                                                 std::to_string(fit.gradient_norm));
        }
    }
    fit.model = to_model(th);
    fit.loglik = cur.value;
    return fit;
}

std::optional<Propensity> fit_propensity(const std::vector<Path>& paths, PropensityForm form) {
    const auto with_arm = std::count_if(paths.begin(), paths.end(), [](const Path& p) { return p.a0.has_value(); });
    if (with_arm == 0) return std::nullopt;
    if (static_cast<std::size_t>(with_arm) != paths.size()) {
        throw ConfigError("nuisance", "baseline treatment recorded for some subjects only");
    }
    const auto treated = std::count_if(paths.begin(), paths.end(), [](const Path& p) { return *p.a0 == 1; });
    if (treated == 0 || static_cast<std::size_t>(treated) == paths.size()) {
        throw ConfigError("nuisance", "single-arm cohort: propensity is not estimable");
    }
    const double n = static_cast<double>(paths.size());
    if (form == PropensityForm::constant) return Propensity::constant(static_cast<double>(treated) / n);

    Eigen::Vector2d b(std::log(treated / (n - treated)), 0.0);
    for (int it = 0; it < 100; ++it) {
        Eigen::Vector2d g = Eigen::Vector2d::Zero();
        Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
        for (const auto& p : paths) {
            const Eigen::Vector2d x(1.0, p.l0);
            const double mu = 1.0 / (1.0 + std::exp(-x.dot(b)));
            g += (*p.a0 - mu) * x;
            info += mu * (1.0 - mu) * x * x.transpose();
        }
        if (g.norm() <= 1e-10) break;
        const Eigen::Vector2d step = info.ldlt().solve(g);
        if (!step.allFinite()) throw NonConvergence("nuisance", "logistic propensity fit failed");
        b += step;
        if (it == 99) throw NonConvergence("nuisance", "logistic propensity fit did not converge");
    }
    return Propensity::logistic(b(0), b(1));
}

NuisanceSet fit_nuisance(const std::vector<Path>& paths, const NuisanceOptions& options) {
    if (paths.empty()) throw std::invalid_argument("fit_nuisance: empty cohort");
    int J = options.num_outcomes;
    if (J == 0) {
        J = 1;
        for (const auto& p : paths)
            for (const auto& j : p.jumps)
                if (j.mark.kind == MarkKind::outcome) J = std::max(J, j.mark.outcome);
    }
    NuisanceSet set;
    set.models.outcomes.assign(static_cast<std::size_t>(J), IntensityModel{});
    std::vector<Mark> marks = set.models.event_marks();
    marks.push_back(Mark::censor());
    for (const auto& m : marks) {
        const std::string name = m.to_string();
        CovariateSpec spec;
        if (auto it = options.covariates.find(name); it != options.covariates.end()) spec = it->second;
        const bool user_misspec = spec.drops_any();
        if (options.fix_shape) spec.fix_shape = true;
        auto fit = fit_intensity(paths, m, spec, options.fit);
        set.models[m] = fit.model;
        set.misspecified[name] = user_misspec;
        for (const auto& w : fit.warnings) set.warnings.push_back(w);
        set.fits[name] = std::move(fit);
    }
    set.propensity = fit_propensity(paths, options.propensity);
    return set;
}

}  // namespace evscale
