#include "evscale/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "evscale/calibration.hpp"
#include "evscale/errors.hpp"
#include "evscale/parallel.hpp"
#include "evscale/scenario_io.hpp"
#include "evscale/simulator.hpp"
#include "evscale/tmle.hpp"
#include "evscale/truth.hpp"

namespace evscale {

namespace {

namespace fs = std::filesystem;

struct ScenarioArgs {
    std::string preset;
    std::string config;
    PresetDefaults defaults;
};

struct CohortArgs {
    std::string cohort;
    double tau{0.0};
    std::size_t grid{200};
    std::string interpolation{"linear"};
    double residual_tol{0.0};
    double quad_tol{1e-8};
    double weight_cap{0.0};
    bool fix_shape{false};
    std::vector<std::string> drop;
    std::string propensity{"constant"};
    int max_sweeps{50};
};

struct Common {
    std::string out_dir{"."};
    int threads{0};
    std::uint64_t seed{1};
    std::string mode{"oracle"};
    std::size_t reps{100000};
    std::string arm{"none"};
};

std::optional<int> parse_arm(const std::string& s) {
    if (s == "none" || s.empty()) return std::nullopt;
    if (s == "0") return 0;
    if (s == "1") return 1;
    throw ConfigError("cli", "--arm must be 0, 1 or none");
}

ValidatedScenario load_scenario(const ScenarioArgs& a) {
    if (!a.config.empty() && !a.preset.empty()) throw ConfigError("cli", "give either --preset or --config, not both");
    if (!a.config.empty()) return build_scenario(load_scenario_file(a.config));
    if (a.preset.empty()) throw ConfigError("cli", "a scenario is required (--preset or --config)");
    return build_scenario(preset_config(a.preset, a.defaults));
}

void add_scenario_options(CLI::App* app, ScenarioArgs& a) {
    app->add_option("--preset", a.preset, "example1 | example2 | example3");
    app->add_option("--config", a.config, "scenario JSON file");
    app->add_option("--eta", a.defaults.eta, "preset baseline eta for every event mark");
    app->add_option("--nu", a.defaults.nu, "preset baseline Weibull shape");
    app->add_option("--tau", a.defaults.tau, "preset horizon");
    app->add_option("--censor-eta", a.defaults.censor_eta, "preset censoring rate");
}

void add_cohort_options(CLI::App* app, CohortArgs& c) {
    app->add_option("--cohort", c.cohort, "cohort CSV (id,l0,a0,time,mark)");
    app->add_option("--horizon", c.tau, "horizon tau of the cohort (default: from the scenario or the data)");
    app->add_option("--grid", c.grid, "time grid size of the value tables");
    app->add_option("--interpolation", c.interpolation, "linear | exact");
    app->add_option("--residual-tol", c.residual_tol, "stop targeting at this |P_n phi| instead of s_n");
    app->add_option("--quad-tol", c.quad_tol, "quadrature tolerance for compensator integrals");
    app->add_option("--weight-cap", c.weight_cap, "truncate clever weights at this value (0 = off)");
    app->add_flag("--fix-shape", c.fix_shape, "fit exponential baselines (nu = 1)");
    app->add_option("--drop", c.drop, "drop covariates from a fit, e.g. outcome1:n_ell or ell:a0");
    app->add_option("--propensity", c.propensity, "constant | logistic");
    app->add_option("--max-sweeps", c.max_sweeps, "maximum targeting sweeps");
}

std::string write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cli", "cannot write '" + path.string() + "'");
    f << content;
    return path.string();
}

Json run_manifest(const std::string& command, const std::vector<std::string>& args) {
    Json j;
    j["tool"] = "evscale";
    j["version"] = kVersion;
    j["kind"] = "run";
    j["command"] = command;
    j["args"] = args;
    return j;
}

EstimateConfig estimate_config(const CohortArgs& c) {
    EstimateConfig cfg;
    cfg.tmle.engine.grid_size = c.grid;
    if (c.interpolation == "exact") cfg.tmle.engine.interpolation = Interpolation::exact;
    else if (c.interpolation != "linear") throw ConfigError("cli", "--interpolation must be linear or exact");
    if (c.residual_tol > 0.0) cfg.tmle.residual_tolerance = c.residual_tol;
    cfg.tmle.eic.quad_tolerance = c.quad_tol;
    cfg.tmle.eic.weight_cap = c.weight_cap;
    cfg.tmle.max_sweeps = c.max_sweeps;
    cfg.nuisance.fix_shape = c.fix_shape;
    if (c.propensity == "logistic") cfg.nuisance.propensity = PropensityForm::logistic;
    else if (c.propensity != "constant") throw ConfigError("cli", "--propensity must be constant or logistic");
    for (const auto& d : c.drop) {
        const auto colon = d.find(':');
        if (colon == std::string::npos) throw ConfigError("cli", "--drop expects mark:covariate, got '" + d + "'");
        const std::string mark = d.substr(0, colon);
        const std::string cov = d.substr(colon + 1);
        (void)Mark::parse(mark == "c" ? "censor" : mark);
        auto& spec = cfg.nuisance.covariates[mark];
        if (cov == "a0") spec.a0 = false;
        else if (cov == "l0") spec.l0 = false;
        else if (cov == "n_z") spec.n_z = false;
        else if (cov == "n_ell") spec.n_ell = false;
        else if (cov == "shape") spec.fix_shape = true;
        else throw ConfigError("cli", "unknown covariate '" + cov + "' (a0, l0, n_z, n_ell, shape)");
    }
    return cfg;
}

std::vector<Path> load_cohort(const CohortArgs& c, const ScenarioArgs& s, std::ostream& err, double& tau) {
    if (c.cohort.empty()) throw ConfigError("cli", "--cohort is required in estimate mode");
    std::ifstream in(c.cohort);
    if (!in) throw ConfigError("cli", "cannot open cohort '" + c.cohort + "'");
    std::optional<double> horizon;
    if (c.tau > 0.0) horizon = c.tau;
    else if (!s.preset.empty() || !s.config.empty()) horizon = load_scenario(s).tau();
    auto imported = read_cohort_csv(in, horizon);
    for (const auto& w : imported.warnings) err << Json{{"warning", w}}.dump() << "\n";
    tau = imported.paths.empty() ? 0.0 : imported.paths.front().tau;
    return std::move(imported.paths);
}

Json report_json(const EstimateReport& r) {
    Json j;
    j["target"] = r.target;
    j["intervention"] = intervention_to_json(r.intervention);
    j["n"] = r.n;
    j["psi"] = r.psi_hat;
    j["se"] = r.se;
    j["ci"] = {r.ci_lo, r.ci_hi};
    j["psi_initial"] = r.psi_initial;
    j["eic_residual"] = r.eic_residual;
    j["stopping_threshold"] = r.stopping_threshold;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    j["skipped_components"] = r.skipped_components;
    j["weight_diagnostics"] = {{"max_weight", r.weights.max_weight},
                               {"mean_max_weight", r.weights.mean_max_weight},
                               {"truncated_subjects", r.weights.truncated_subjects}};
    return j;
}

Json decomposition_json(const Decomposition& d) {
    return Json{{"total", d.total},       {"indirect", d.indirect},       {"direct", d.direct},
                {"total_se", d.total_se}, {"indirect_se", d.indirect_se}, {"direct_se", d.direct_se}};
}

std::string trace_csv(const std::vector<TracePoint>& trace) {
    std::ostringstream os;
    os << "alpha,psiz,se\n";
    for (const auto& t : trace) os << format_double(t.alpha) << "," << format_double(t.psi) << "," << format_double(t.se) << "\n";
    return os.str();
}

Json composite_json(const CompositeReport& r) {
    Json j;
    j["mode"] = r.mode;
    j["kind"] = to_string(r.target.kind);
    j["value"] = r.target.value;
    j["arm"] = r.target.arm ? Json(*r.target.arm) : Json(nullptr);
    j["level"] = r.level;
    j["c_n"] = r.c_n;
    j["alpha_hat"] = r.alpha_hat;
    j["alpha_se"] = r.alpha_se;
    j["psiz_at_alpha"] = r.psi_z_hat;
    j["psi1"] = r.psi1_hat;
    j["psi1_se"] = r.psi1_se;
    j["psi1_ci"] = {r.ci_lo, r.ci_hi};
    j["kappa_z"] = r.kappa_z;
    j["kappa_1"] = r.kappa_1;
    j["derivative_h"] = r.derivative_h;
    j["kappa_noise_dominated"] = r.kappa_noise_dominated;
    j["feasibility"] = {{"L_hat", r.large_alpha_value}, {"margin", r.feasibility_margin}};
    if (r.decomposition) j["decomposition"] = decomposition_json(*r.decomposition);
    Json flags = Json::array();
    for (const auto& f : r.monotonicity_flags) flags.push_back({f.first, f.second});
    j["monotonicity_flags"] = flags;
    j["evaluations"] = r.trace.size();
    return j;
}

class Runner {
public:
    Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

    int run(const std::vector<std::string>& args) {
        CLI::App app{"Stochastic alpha-scaling interventions on event histories", "evscale"};
        app.require_subcommand(1);
        app.set_version_flag("--version", std::string(kVersion));
        app.add_option("--threads", common_.threads, "worker threads (default: EVSCALE_THREADS or all cores)");

        auto* sim = app.add_subcommand("simulate", "simulate a cohort (CSV plus manifest)");
        add_scenario_options(sim, scenario_);
        std::size_t n = 1000;
        double alpha = 1.0;
        bool intervene = false;
        sim->add_option("--n", n, "number of subjects")->required();
        sim->add_option("--seed", common_.seed, "random seed");
        sim->add_option("--arm", common_.arm, "intervened arm 0 | 1 | none");
        sim->add_option("--alpha", alpha, "z-intensity scaling; any intervention option removes censoring");
        sim->add_flag("--intervene", intervene, "simulate under the intervention (default: observed law)");
        sim->add_option("--out-dir", common_.out_dir, "output directory");

        auto* curve = app.add_subcommand("truth-curve", "Monte Carlo truth curve as CSV");
        add_scenario_options(curve, scenario_);
        std::vector<double> alphas{0.0, 0.25, 0.5, 1.0, 2.0, 3.0};
        curve->add_option("--alphas", alphas, "alpha grid")->delimiter(',');
        curve->add_option("--reps", common_.reps, "Monte Carlo replicates");
        curve->add_option("--seed", common_.seed, "random seed");
        curve->add_option("--arm", common_.arm, "arm 0 | 1 | none");
        curve->add_option("--out-dir", common_.out_dir, "output directory");

        auto* est = app.add_subcommand("estimate", "TMLE for Psi_x at a fixed alpha");
        add_scenario_options(est, scenario_);
        add_cohort_options(est, cohort_);
        std::string x = "outcome1";
        est->add_option("--alpha", alpha, "z-intensity scaling");
        est->add_option("--arm", common_.arm, "arm 0 | 1 | none");
        est->add_option("--x", x, "outcome1 | z");
        est->add_option("--out-dir", common_.out_dir, "output directory");

        CalibrationTarget target;
        std::string kind = "relative";
        double h = 0.0;
        double c_n = 0.0;
        auto add_calibration = [&](CLI::App* sub) {
            add_scenario_options(sub, scenario_);
            add_cohort_options(sub, cohort_);
            sub->add_option("--mode", common_.mode, "oracle (Monte Carlo) | plugin (exact) | estimate (TMLE)");
            sub->add_option("--reps", common_.reps, "Monte Carlo replicates in oracle mode");
            sub->add_option("--seed", common_.seed, "random seed in oracle mode");
            sub->add_option("--arm", common_.arm, "calibrated arm 0 | 1 | none");
            sub->add_option("--out-dir", common_.out_dir, "output directory");
            sub->add_option("--step", h, "derivative step (default n^(-1/6) max(alpha,1))");
            sub->add_option("--c-n", c_n, "fixed search tolerance (default se / log n)");
        };
        auto* cal = app.add_subcommand("calibrate", "solve for a calibrated alpha and the composite Psi_1");
        add_calibration(cal);
        cal->add_option("--kind", kind, "fixed | absolute | relative | match");
        cal->add_option("--theta", target.value, "fixed level");
        cal->add_option("--delta", target.value, "absolute change");
        cal->add_option("--rho", target.value, "relative change");

        auto* dec = app.add_subcommand("decompose", "indirect/direct decompositions");
        add_calibration(dec);
        bool match = false;
        dec->add_option("--alpha", alpha, "alpha for Psi_1^{1,1} - Psi_1^{0,alpha}");
        dec->add_flag("--match", match, "decompose Psi_1^{a,1} - Psi_1^{1-a,1} through the matching alpha");

        auto* fea = app.add_subcommand("feasibility", "L^a and the Psi_z curve for a target");
        add_calibration(fea);
        std::vector<double> feas_alphas{0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0};
        fea->add_option("--alphas", feas_alphas, "alpha grid")->delimiter(',');
        double large_alpha = 50.0;
        fea->add_option("--large-alpha", large_alpha, "alpha used for L^a");
        fea->add_option("--kind", kind, "fixed | absolute | relative | match (optional target)");
        fea->add_option("--value", target.value, "theta, delta or rho");

        auto* rep = app.add_subcommand("replay", "re-run from a manifest");
        std::string manifest;
        rep->add_option("--manifest", manifest, "manifest JSON written by a previous run")->required();

        std::vector<std::string> reversed(args.rbegin(), args.rend());
        try {
            app.parse(reversed);
        } catch (const CLI::CallForHelp&) {
            out_ << app.help();
            return 0;
        } catch (const CLI::CallForVersion&) {
            out_ << kVersion << "\n";
            return 0;
        } catch (const CLI::ParseError& e) {
            return fail("cli", e.what(), ExitCode::config);
        }

        try {
            if (common_.threads > 0) set_num_threads(common_.threads);
            if (*rep) return replay(manifest);
            if (*sim) return simulate(n, intervene || sim->count("--alpha") || sim->count("--arm"), alpha, args);
            if (*curve) return truth_curve(alphas, args);
            if (*est) return estimate(alpha, x, args);
            if (*cal) {
                target.kind = parse_target_kind(kind);
                target.arm = parse_arm(common_.arm);
                return calibrate(target, h, c_n, args);
            }
            if (*dec) return decompose(alpha, match, h, c_n, args);
            if (*fea) {
                std::optional<CalibrationTarget> t;
                if (fea->count("--kind")) {
                    target.kind = parse_target_kind(kind);
                    target.arm = parse_arm(common_.arm);
                    t = target;
                }
                return feasibility(t, feas_alphas, large_alpha, args);
            }
        } catch (const InfeasibleTarget& e) {
            Json extra{{"level", e.level()}, {"L_hat", e.max_fraction()}};
            return fail(e.module(), e.what(), e.code(), extra);
        } catch (const Error& e) {
            return fail(e.module(), e.what(), e.code());
        } catch (const std::invalid_argument& e) {
            return fail("cli", e.what(), ExitCode::config);
        } catch (const std::exception& e) {
            return fail("runtime", e.what(), ExitCode::runtime);
        }
        return 0;
    }

private:
    int fail(const std::string& module, const std::string& message, ExitCode code, Json extra = Json::object()) {
        Json j;
        j["error"] = {{"module", module}, {"message", message}, {"exit_code", static_cast<int>(code)}};
        for (auto it = extra.begin(); it != extra.end(); ++it) j["error"][it.key()] = it.value();
        err_ << j.dump() << "\n";
        return static_cast<int>(code);
    }

    fs::path out(const std::string& name) const { return fs::path(common_.out_dir) / name; }

    void emit(const std::string& name, const std::string& content) {
        write_file(out(name), content);
        out_ << content;
    }

    void save_manifest(const std::string& name, const std::string& command, const std::vector<std::string>& args) {
        write_file(out(name), run_manifest(command, args).dump(2) + "\n");
    }

    int simulate(std::size_t n, bool intervene, double alpha, const std::vector<std::string>& args) {
        const auto scenario = load_scenario(scenario_);
        std::optional<InterventionSpec> iv;
        if (intervene) iv = InterventionSpec{parse_arm(common_.arm), alpha};
        const auto cohort = sample_cohort(scenario, iv, n, common_.seed);
        std::ostringstream csv;
        write_cohort_csv(csv, cohort.paths);
        write_file(out("cohort.csv"), csv.str());
        Json m = cohort_manifest(cohort);
        m["args"] = args;
        write_file(out("cohort.manifest.json"), m.dump(2) + "\n");
        out_ << Json{{"cohort", out("cohort.csv").string()}, {"manifest", out("cohort.manifest.json").string()},
                     {"n", n}}
                    .dump()
             << "\n";
        return 0;
    }

    int truth_curve(const std::vector<double>& alphas, const std::vector<std::string>& args) {
        const auto scenario = load_scenario(scenario_);
        const auto points = mc_curve(scenario, parse_arm(common_.arm), alphas, common_.reps, common_.seed);
        std::ostringstream csv;
        csv << "alpha,psi1,psi1_se,psiz,psiz_se\n";
        for (const auto& p : points) {
            csv << format_double(p.alpha) << "," << format_double(p.psi1) << "," << format_double(p.mc_se_1) << ","
                << format_double(p.psi_z) << "," << format_double(p.mc_se_z) << "\n";
        }
        emit("truth_curve.csv", csv.str());
        save_manifest("truth_curve.manifest.json", "truth-curve", args);
        return 0;
    }

    int estimate(double alpha, const std::string& x, const std::vector<std::string>& args) {
        double tau = 0.0;
        const auto paths = load_cohort(cohort_, scenario_, err_, tau);
        const auto report =
            estimate_alpha_fixed(paths, InterventionSpec{parse_arm(common_.arm), alpha}, parse_target(x), tau,
                                 estimate_config(cohort_));
        emit("estimate.json", report_json(report).dump(2) + "\n");
        save_manifest("estimate.manifest.json", "estimate", args);
        return 0;
    }

    std::unique_ptr<CurveEvaluator> evaluator() {
        if (common_.mode == "oracle") {
            return std::make_unique<MonteCarloEvaluator>(load_scenario(scenario_), common_.reps, common_.seed);
        }
        if (common_.mode == "plugin") {
            EngineOptions e;
            e.grid_size = std::max<std::size_t>(cohort_.grid, 2000);
            return std::make_unique<PluginEvaluator>(load_scenario(scenario_), e);
        }
        if (common_.mode == "estimate") {
            double tau = 0.0;
            auto paths = load_cohort(cohort_, scenario_, err_, tau);
            const auto cfg = estimate_config(cohort_);
            auto fitted = fit_nuisance(paths, cfg.nuisance);
            return std::make_unique<TmleEvaluator>(std::move(paths), std::move(fitted), tau, cfg.tmle);
        }
        throw ConfigError("cli", "--mode must be oracle, plugin or estimate");
    }

    int calibrate(const CalibrationTarget& target, double h, double c_n, const std::vector<std::string>& args) {
        auto ev = evaluator();
        CompositeOptions opt;
        if (h > 0.0) opt.h = h;
        if (c_n > 0.0) opt.solve.c_n = c_n;
        const auto rep = composite_estimate(*ev, target, opt);
        Json j = composite_json(rep);
        const auto psi1_at_one = ev->evaluate(Target::outcome1, target.arm, 1.0);
        j["psi1_at_alpha_1"] = psi1_at_one.psi;
        write_file(out("calibration_trace.csv"), trace_csv(rep.trace));
        emit("calibration.json", j.dump(2) + "\n");
        save_manifest("calibration.manifest.json", "calibrate", args);
        return 0;
    }

    int decompose(double alpha, bool match, double h, double c_n, const std::vector<std::string>& args) {
        auto ev = evaluator();
        Json j;
        j["mode"] = ev->mode();
        if (match) {
            CalibrationTarget t{TargetKind::match_other_arm, 0.0, parse_arm(common_.arm)};
            CompositeOptions opt;
            if (h > 0.0) opt.h = h;
            if (c_n > 0.0) opt.solve.c_n = c_n;
            const auto rep = composite_estimate(*ev, t, opt);
            j["kind"] = "match_other_arm";
            j["arm"] = *t.arm;
            j["alpha_hat"] = rep.alpha_hat;
            j["decomposition"] = decomposition_json(*rep.decomposition);
        } else {
            j["kind"] = "joint";
            j["alpha"] = alpha;
            j["decomposition"] = decomposition_json(joint_decomposition(*ev, alpha));
        }
        emit("decomposition.json", j.dump(2) + "\n");
        save_manifest("decomposition.manifest.json", "decompose", args);
        return 0;
    }

    int feasibility(const std::optional<CalibrationTarget>& target, const std::vector<double>& alphas,
                    double large_alpha, const std::vector<std::string>& args) {
        auto ev = evaluator();
        const auto rep = feasibility_report(*ev, parse_arm(common_.arm), target, alphas, large_alpha);
        std::ostringstream csv;
        csv << "alpha,psiz,psiz_se,psi1,psi1_se,max_weight\n";
        for (const auto& p : rep.curve) {
            csv << format_double(p.alpha) << "," << format_double(p.psi_z) << "," << format_double(p.psi_z_se) << ","
                << format_double(p.psi1) << "," << format_double(p.psi1_se) << "," << format_double(p.max_weight)
                << "\n";
        }
        write_file(out("feasibility_curve.csv"), csv.str());
        Json j;
        j["mode"] = ev->mode();
        j["large_alpha"] = rep.large_alpha;
        j["L_hat"] = rep.l_hat;
        j["L_se"] = rep.l_se;
        j["level"] = rep.level ? Json(*rep.level) : Json(nullptr);
        j["margin"] = rep.margin ? Json(*rep.margin) : Json(nullptr);
        j["feasible"] = rep.feasible;
        emit("feasibility.json", j.dump(2) + "\n");
        save_manifest("feasibility.manifest.json", "feasibility", args);
        if (target && !rep.feasible) {
            return fail("calibration", "target level outside (0, L^a)", ExitCode::infeasible,
                        Json{{"level", *rep.level}, {"L_hat", rep.l_hat}});
        }
        return 0;
    }

    int replay(const std::string& path) {
        const Json m = read_json_file(path);
        const std::string kind = m.value("kind", "");
        if (kind == "cohort") {
            const auto cohort = cohort_from_manifest(m);
            std::ostringstream csv;
            write_cohort_csv(csv, cohort.paths);
            out_ << csv.str();
            return 0;
        }
        if (kind == "run") {
            std::vector<std::string> args = m.at("args").get<std::vector<std::string>>();
            Runner again(out_, err_);
            return again.run(args);
        }
        throw ConfigError("cli", "manifest kind must be cohort or run");
    }

    std::ostream& out_;
    std::ostream& err_;
    Common common_;
    ScenarioArgs scenario_;
    CohortArgs cohort_;
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Runner runner(out, err);
    return runner.run(args);
}

}  // namespace evscale
