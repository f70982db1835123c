#include "evscale/tmle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "evscale/errors.hpp"
#include "evscale/parallel.hpp"
#include "evscale/quadrature.hpp"
#include "evscale/weights.hpp"

namespace evscale {

namespace {

constexpr std::size_t kMaxMarks = static_cast<std::size_t>(kMaxOutcomes) + 2;
using MarkVec = std::array<double, kMaxMarks>;

std::size_t mark_slot(const Mark& m, int num_outcomes) {
    switch (m.kind) {
        case MarkKind::outcome: return static_cast<std::size_t>(m.outcome - 1);
        case MarkKind::ell: return static_cast<std::size_t>(num_outcomes);
        case MarkKind::z: return static_cast<std::size_t>(num_outcomes) + 1;
        case MarkKind::censor: break;
    }
    throw std::invalid_argument("censoring has no martingale slot");
}

}  // namespace

MartingaleParts martingale_parts(const Path& path, const ModelSet& models, const std::optional<Propensity>& propensity,
                                 const ValueTable& table, const InterventionSpec& intervention, Target x,
                                 const EicOptions& options) {
    const int J = models.num_outcomes();
    const auto marks = models.event_marks();
    const std::size_t nm = marks.size();
    MartingaleParts parts;
    parts.jump.assign(nm, 0.0);
    parts.compensator.assign(nm, 0.0);
    parts.g0 = table.at_node(0)[0][static_cast<std::size_t>(x)];

    const WeightTrace trace(path, propensity, models.censor, models.z, intervention.arm, intervention.alpha);
    if (trace.identically_zero()) return parts;
    parts.max_weight = trace.max();
    const double cap = options.weight_cap;
    parts.truncated = cap > 0.0 && parts.max_weight > cap;
    const double alpha = intervention.alpha;
    const auto& grid = table.grid();
    const double tau = table.tau();

    const auto& segs = trace.segments();
    for (std::size_t k = 0; k < segs.size(); ++k) {
        const auto& seg = segs[k];
        const State s = seg.state;
        MarkVec c{};
        MarkVec nu{};
        double nu_min = std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < nm; ++m) {
            const auto& model = models[marks[m]];
            nu[m] = model.nu;
            if (!admissible(marks[m], s) || model.eta == 0.0) continue;
            c[m] = model.eta * std::exp(model.linear_predictor(s, path.a0, path.l0));
            nu_min = std::min(nu_min, model.nu);
        }
        auto weight = [&](double t) {
            const double w = trace.at(k, t);
            return cap > 0.0 ? std::min(w, cap) : w;
        };
        if (seg.end > seg.start && nu_min < std::numeric_limits<double>::infinity()) {
            auto integrand = [&](double t) {
                MarkVec f{};
                const double w = weight(t);
                if (w == 0.0) return f;
                const StateValues g = table.at(t);
                for (std::size_t m = 0; m < nm; ++m) {
                    if (c[m] == 0.0) continue;
                    const double lambda = nu[m] == 1.0 ? c[m] : c[m] * nu[m] * std::pow(t, nu[m] - 1.0);
                    f[m] = w * clever_covariate(g, s, marks[m], alpha, x) * lambda;
                }
                return f;
            };
            std::vector<double> cuts{seg.start};
            for (std::size_t node = table.cell(seg.start) + 1; node < grid.size() && grid[node] < seg.end; ++node) {
                if (grid[node] > seg.start) cuts.push_back(grid[node]);
            }
            cuts.push_back(seg.end);
            for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
                const double a = cuts[p];
                const double b = cuts[p + 1];
                const double tol = options.quad_tolerance * (b - a) / tau;
                MarkVec piece{};
                if (a == 0.0 && nu_min < 1.0) {
                    // t = b u^(1/nu_min) removes the t^(nu-1) singularity at the origin
                    const double pw = 1.0 / nu_min;
                    auto mapped = [&](double u) {
                        u = std::max(u, 1e-8);
                        const double t = b * std::pow(u, pw);
                        MarkVec f = integrand(t);
                        const double jac = b * pw * std::pow(u, pw - 1.0);
                        for (std::size_t m = 0; m < nm; ++m) f[m] *= jac;
                        return f;
                    };
                    piece = adaptive_simpson<kMaxMarks>(mapped, nm, 0.0, 1.0, tol);
                } else {
                    piece = adaptive_simpson<kMaxMarks>(integrand, nm, a, b, tol);
                }
                for (std::size_t m = 0; m < nm; ++m) parts.compensator[m] += piece[m];
            }
        }
        if (seg.closing_mark && seg.closing_mark->kind != MarkKind::censor) {
            const Mark& jm = *seg.closing_mark;
            const double w = weight(seg.end);
            if (w != 0.0) parts.jump[mark_slot(jm, J)] += w * clever_covariate(table, seg.end, s, jm, alpha, x);
        }
    }
    return parts;
}

EICComponents eic_value(const Path& path, const ModelSet& models, const std::optional<Propensity>& propensity,
                        const ValueTable& table, const InterventionSpec& intervention, Target x, double psi_ref,
                        const EicOptions& options) {
    const auto parts = martingale_parts(path, models, propensity, table, intervention, x, options);
    const int J = models.num_outcomes();
    EICComponents out;
    out.outcomes.resize(static_cast<std::size_t>(J));
    for (int j = 0; j < J; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        out.outcomes[uj] = parts.jump[uj] - parts.compensator[uj];
    }
    const auto ell = static_cast<std::size_t>(J);
    out.ell = parts.jump[ell] - parts.compensator[ell];
    out.z = parts.jump[ell + 1] - parts.compensator[ell + 1];
    out.baseline = parts.g0 - psi_ref;
    out.total = out.baseline + out.ell + out.z;
    for (double v : out.outcomes) out.total += v;
    return out;
}

namespace {

std::optional<double> solve_epsilon(double D, double C) {
    const double scale = std::abs(D) + std::abs(C);
    if (scale == 0.0) return 0.0;
    if (C != 0.0 && D / C > 0.0 && std::isfinite(D / C)) return std::log(D / C);
    double eps = 0.0;
    for (int it = 0; it < 100; ++it) {
        const double f = D - std::exp(eps) * C;
        if (std::abs(f) <= 1e-12 * scale) return eps;
        const double fp = -std::exp(eps) * C;
        if (fp == 0.0) break;
        const double next = std::clamp(eps - f / fp, -2.0, 2.0);
        if (next == eps) break;
        eps = next;
    }
    if (std::abs(D - std::exp(eps) * C) <= 1e-12 * scale) return eps;
    return std::nullopt;
}

struct Pass {
    std::vector<MartingaleParts> parts;
    double psi{0.0};
    std::vector<double> phi;
    double mean_phi{0.0};
};

Pass run_pass(const std::vector<Path>& paths, const ModelSet& models, const std::optional<Propensity>& propensity,
              const InterventionSpec& intervention, Target x, double tau, const TmleOptions& options,
              const std::vector<const ValueTable*>* frozen, std::vector<const ValueTable*>& fresh_out,
              std::unique_ptr<BackwardSolver>& solver, std::unique_ptr<TableCache>& cache) {
    solver = std::make_unique<BackwardSolver>(models, intervention, tau, options.engine);
    cache = std::make_unique<TableCache>(*solver);
    fresh_out = cache->for_subjects(paths);
    const auto& tables = frozen ? *frozen : fresh_out;
    Pass pass;
    pass.parts.resize(paths.size());
    parallel_for(paths.size(), [&](std::size_t i) {
        pass.parts[i] = martingale_parts(paths[i], models, propensity, *tables[i], intervention, x, options.eic);
        pass.parts[i].g0 = fresh_out[i]->at_node(0)[0][static_cast<std::size_t>(x)];
    });
    std::vector<double> g0(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) g0[i] = pass.parts[i].g0;
    pass.psi = mean(g0);
    pass.phi.resize(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto& p = pass.parts[i];
        double v = p.g0 - pass.psi;
        for (std::size_t m = 0; m < p.jump.size(); ++m) v += p.jump[m] - p.compensator[m];
        pass.phi[i] = v;
    }
    pass.mean_phi = mean(pass.phi);
    return pass;
}

double mean_square(const std::vector<double>& v) {
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = v[i] * v[i];
    return mean(sq);
}

}  // namespace

TmleResult target(const std::vector<Path>& paths, const NuisanceSet& nuisances, const InterventionSpec& intervention,
                  Target x, double tau, const TmleOptions& options) {
    if (paths.size() < 2) throw std::invalid_argument("tmle: need at least two subjects");
    if (!(intervention.alpha >= 0.0)) throw ConfigError("tmle", "alpha must be >= 0");
    if (intervention.arm && !nuisances.propensity) {
        throw ConfigError("tmle", "an arm was requested but the cohort has no baseline treatment");
    }
    const double n = static_cast<double>(paths.size());
    ModelSet models = nuisances.models;
    const auto marks = models.event_marks();

    std::unique_ptr<BackwardSolver> solver;
    std::unique_ptr<TableCache> cache;
    std::unique_ptr<BackwardSolver> frozen_solver;
    std::unique_ptr<TableCache> frozen_cache;
    std::vector<const ValueTable*> tables;
    std::vector<const ValueTable*> frozen_tables;

    Pass pass = run_pass(paths, models, nuisances.propensity, intervention, x, tau, options, nullptr, tables, solver,
                         cache);
    if (options.frozen_tables) {
        frozen_solver = std::move(solver);
        frozen_cache = std::move(cache);
        frozen_tables = tables;
    }
    const double psi_initial = pass.psi;
    const double s_n = std::sqrt(mean_square(pass.phi)) / (std::sqrt(n) * std::log(n));
    const double threshold = options.residual_tolerance ? *options.residual_tolerance : s_n;

    EstimateReport report;
    report.target = to_string(x);
    report.intervention = intervention;
    report.n = paths.size();
    report.psi_initial = psi_initial;
    report.stopping_threshold = threshold;

    int sweep = 0;
    while (std::abs(pass.mean_phi) > threshold) {
        if (sweep >= options.max_sweeps) {
            throw NonConvergence("tmle", "targeting did not reach |P_n phi| <= " + std::to_string(threshold) +
                                             " within " + std::to_string(options.max_sweeps) +
                                             " sweeps (last " + std::to_string(pass.mean_phi) + ")");
        }
        ++sweep;
        for (std::size_t m = 0; m < marks.size(); ++m) {
            std::vector<double> d(paths.size());
            std::vector<double> c(paths.size());
            double size = 0.0;
            for (std::size_t i = 0; i < paths.size(); ++i) {
                d[i] = pass.parts[i].jump[m];
                c[i] = pass.parts[i].compensator[m];
                size += std::abs(d[i]) + std::abs(c[i]);
            }
            // clever covariate zero up to round-off: the ratio would be noise
            if (size <= 1e-12 * n) continue;
            const auto eps = solve_epsilon(pairwise_sum(d), pairwise_sum(c));
            if (!eps) {
                report.skipped_components.push_back("sweep " + std::to_string(sweep) + ": " + marks[m].to_string());
                continue;
            }
            models[marks[m]].eta *= std::exp(*eps);
        }
        pass = run_pass(paths, models, nuisances.propensity, intervention, x, tau, options,
                        options.frozen_tables ? &frozen_tables : nullptr, tables, solver, cache);
    }

    report.iterations = sweep;
    report.converged = true;
    report.psi_hat = pass.psi;
    report.eic_residual = pass.mean_phi;
    report.eic = pass.phi;
    report.se = std::sqrt(mean_square(pass.phi) / n);
    report.ci_lo = report.psi_hat - 1.96 * report.se;
    report.ci_hi = report.psi_hat + 1.96 * report.se;
    double sum_max = 0.0;
    for (const auto& p : pass.parts) {
        report.weights.max_weight = std::max(report.weights.max_weight, p.max_weight);
        sum_max += p.max_weight;
        report.weights.truncated_subjects += p.truncated ? 1 : 0;
    }
    report.weights.mean_max_weight = sum_max / n;
    return {models, std::move(report)};
}

EstimateReport estimate_alpha_fixed(const std::vector<Path>& paths, const InterventionSpec& intervention, Target x,
                                    double tau, const EstimateConfig& config) {
    const NuisanceSet fitted = fit_nuisance(paths, config.nuisance);
    return target(paths, fitted, intervention, x, tau, config.tmle).report;
}

}  // namespace evscale
