#include "evscale/scenario_io.hpp"

#include <fstream>
#include <set>

#include "evscale/errors.hpp"

namespace evscale {

namespace {

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config", where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) throw ConfigError("config", "unknown key '" + it.key() + "' in " + where);
    }
}

double number(const Json& j, const std::string& where) {
    if (!j.is_number()) throw ConfigError("config", where + " must be a number");
    return j.get<double>();
}

void apply_model(IntensityModel& m, const Json& j, const std::string& where) {
    check_keys(j, {"eta", "nu", "beta_a0", "beta_l0", "beta_z", "beta_ell"}, where);
    if (j.contains("eta")) m.eta = number(j["eta"], where + ".eta");
    if (j.contains("nu")) m.nu = number(j["nu"], where + ".nu");
    if (j.contains("beta_a0")) m.beta_a0 = number(j["beta_a0"], where + ".beta_a0");
    if (j.contains("beta_l0")) m.beta_l0 = number(j["beta_l0"], where + ".beta_l0");
    if (j.contains("beta_z")) m.beta_z = number(j["beta_z"], where + ".beta_z");
    if (j.contains("beta_ell")) m.beta_ell = number(j["beta_ell"], where + ".beta_ell");
}

}  // namespace

Json model_to_json(const IntensityModel& m) {
    return Json{{"eta", m.eta},         {"nu", m.nu},         {"beta_a0", m.beta_a0},
                {"beta_l0", m.beta_l0}, {"beta_z", m.beta_z}, {"beta_ell", m.beta_ell}};
}

Json scenario_to_json(const ScenarioConfig& c) {
    Json j;
    j["name"] = c.name;
    j["tau"] = c.tau;
    Json outs = Json::array();
    for (const auto& m : c.models.outcomes) outs.push_back(model_to_json(m));
    j["outcomes"] = outs;
    j["ell"] = model_to_json(c.models.ell);
    j["z"] = model_to_json(c.models.z);
    j["censor"] = model_to_json(c.models.censor);
    if (!c.propensity) {
        j["propensity"] = nullptr;
    } else if (c.propensity->form == Propensity::Form::constant) {
        j["propensity"] = Json{{"form", "constant"}, {"p1", c.propensity->p1}};
    } else {
        j["propensity"] =
            Json{{"form", "logistic"}, {"intercept", c.propensity->intercept}, {"slope", c.propensity->slope}};
    }
    if (c.l0.uniform()) j["l0"] = Json{{"distribution", "uniform"}};
    else j["l0"] = Json{{"empirical", c.l0.empirical}};
    return j;
}

ScenarioConfig scenario_from_json(const Json& j) {
    try {
        check_keys(j, {"name", "preset", "defaults", "tau", "outcomes", "ell", "z", "censor", "propensity", "l0"},
                   "scenario");
        ScenarioConfig c;
        if (j.contains("preset")) {
            PresetDefaults d;
            if (j.contains("defaults")) {
                const auto& dj = j["defaults"];
                check_keys(dj, {"eta", "nu", "tau", "censor_eta"}, "defaults");
                if (dj.contains("eta")) d.eta = number(dj["eta"], "defaults.eta");
                if (dj.contains("nu")) d.nu = number(dj["nu"], "defaults.nu");
                if (dj.contains("tau")) d.tau = number(dj["tau"], "defaults.tau");
                if (dj.contains("censor_eta")) d.censor_eta = number(dj["censor_eta"], "defaults.censor_eta");
            }
            c = preset_config(j["preset"].get<std::string>(), d);
        } else {
            if (j.contains("defaults")) throw ConfigError("config", "'defaults' only applies together with 'preset'");
            for (const char* key : {"outcomes", "ell", "z", "censor"}) {
                if (!j.contains(key)) throw ConfigError("config", std::string("missing mark model '") + key + "'");
            }
            c.models.outcomes.clear();
        }
        if (j.contains("name")) c.name = j["name"].get<std::string>();
        if (j.contains("tau")) c.tau = number(j["tau"], "tau");
        if (j.contains("outcomes")) {
            const auto& arr = j["outcomes"];
            if (!arr.is_array() || arr.empty()) throw ConfigError("config", "outcomes must be a nonempty array");
            if (c.models.outcomes.size() < arr.size()) c.models.outcomes.resize(arr.size());
            for (std::size_t k = 0; k < arr.size(); ++k) {
                apply_model(c.models.outcomes[k], arr[k], "outcomes[" + std::to_string(k) + "]");
            }
        }
        if (j.contains("ell")) apply_model(c.models.ell, j["ell"], "ell");
        if (j.contains("z")) apply_model(c.models.z, j["z"], "z");
        if (j.contains("censor")) apply_model(c.models.censor, j["censor"], "censor");
        if (j.contains("propensity")) {
            const auto& pj = j["propensity"];
            if (pj.is_null()) {
                c.propensity.reset();
            } else {
                check_keys(pj, {"form", "p1", "intercept", "slope"}, "propensity");
                const std::string form = pj.value("form", "constant");
                if (form == "constant") {
                    c.propensity = Propensity::constant(number(pj.at("p1"), "propensity.p1"));
                } else if (form == "logistic") {
                    c.propensity = Propensity::logistic(number(pj.at("intercept"), "propensity.intercept"),
                                                        number(pj.at("slope"), "propensity.slope"));
                } else {
                    throw ConfigError("config", "propensity.form must be constant or logistic");
                }
            }
        }
        if (j.contains("l0")) {
            const auto& lj = j["l0"];
            check_keys(lj, {"distribution", "empirical"}, "l0");
            if (lj.contains("empirical")) {
                c.l0.empirical = lj["empirical"].get<std::vector<double>>();
                if (c.l0.empirical.empty()) throw ConfigError("config", "l0.empirical must not be empty");
            } else if (lj.value("distribution", "uniform") != "uniform") {
                throw ConfigError("config", "l0.distribution must be uniform (or give l0.empirical)");
            }
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config", std::string("scenario schema violation: ") + e.what());
    }
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config", "invalid JSON in '" + path + "': " + e.what());
    }
}

ScenarioConfig load_scenario_file(const std::string& path) { return scenario_from_json(read_json_file(path)); }

Json intervention_to_json(const std::optional<InterventionSpec>& iv) {
    if (!iv) return nullptr;
    Json j;
    j["arm"] = iv->arm ? Json(*iv->arm) : Json(nullptr);
    j["alpha"] = iv->alpha;
    return j;
}

std::optional<InterventionSpec> intervention_from_json(const Json& j) {
    if (j.is_null()) return std::nullopt;
    check_keys(j, {"arm", "alpha"}, "intervention");
    InterventionSpec iv;
    if (j.contains("arm") && !j["arm"].is_null()) iv.arm = j["arm"].get<int>();
    if (j.contains("alpha")) iv.alpha = number(j["alpha"], "intervention.alpha");
    return iv;
}

Json cohort_manifest(const Cohort& cohort) {
    Json j;
    j["tool"] = "evscale";
    j["version"] = kVersion;
    j["kind"] = "cohort";
    j["seed"] = cohort.seed;
    j["n"] = cohort.paths.size();
    j["first_index"] = cohort.first_index;
    j["intervention"] = intervention_to_json(cohort.intervention);
    j["scenario"] = scenario_to_json(cohort.scenario);
    return j;
}

Cohort cohort_from_manifest(const Json& m) {
    try {
        const auto scenario = build_scenario(scenario_from_json(m.at("scenario")));
        return sample_cohort(scenario, intervention_from_json(m.value("intervention", Json(nullptr))),
                             m.at("n").get<std::size_t>(), m.at("seed").get<std::uint64_t>(),
                             m.value("first_index", std::uint64_t{0}));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config", std::string("manifest schema violation: ") + e.what());
    }
}

Json nuisance_to_json(const NuisanceSet& set) {
    Json j;
    Json marks = Json::array();
    auto all = set.models.event_marks();
    all.push_back(Mark::censor());
    for (const auto& m : all) {
        const auto name = m.to_string();
        Json e;
        e["mark"] = name;
        e["eta"] = set.models[m].eta;
        e["nu"] = set.models[m].nu;
        e["beta"] = {set.models[m].beta_a0, set.models[m].beta_l0, set.models[m].beta_z, set.models[m].beta_ell};
        e["beta_names"] = {"a0", "l0", "n_z", "n_ell"};
        auto it = set.misspecified.find(name);
        e["misspecified"] = it != set.misspecified.end() && it->second;
        if (auto f = set.fits.find(name); f != set.fits.end()) {
            e["events"] = f->second.events;
            e["loglik"] = f->second.loglik;
            e["gradient_norm"] = f->second.gradient_norm;
            e["dropped"] = f->second.dropped;
        }
        marks.push_back(e);
    }
    j["models"] = marks;
    if (!set.propensity) {
        j["propensity"] = nullptr;
    } else if (set.propensity->form == Propensity::Form::constant) {
        j["propensity"] = Json{{"form", "constant"}, {"p1", set.propensity->p1}};
    } else {
        j["propensity"] = Json{{"form", "logistic"},
                               {"intercept", set.propensity->intercept},
                               {"slope", set.propensity->slope}};
    }
    j["warnings"] = set.warnings;
    return j;
}

}  // namespace evscale
