#include "evscale/simulator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "evscale/errors.hpp"
#include "evscale/parallel.hpp"

namespace evscale {

double total_cumulative_hazard(const std::vector<HazardTerm>& terms, double s, double t) {
    double h = 0.0;
    for (const auto& term : terms) {
        h += term.nu == 1.0 ? term.c * (t - s) : term.c * (std::pow(t, term.nu) - std::pow(s, term.nu));
    }
    return h;
}

double invert_total_hazard(const std::vector<HazardTerm>& terms, double s, double target) {
    if (!(target > 0.0)) return s;
    double csum = 0.0;
    for (const auto& term : terms) csum += term.c;
    if (!(csum > 0.0)) throw NonConvergence("simulator", "total hazard is identically zero");
    const double nu0 = terms.front().nu;
    const bool common_shape = std::all_of(terms.begin(), terms.end(), [&](const HazardTerm& t) { return t.nu == nu0; });
    if (common_shape) {
        if (nu0 == 1.0) return s + target / csum;
        return std::pow(std::pow(s, nu0) + target / csum, 1.0 / nu0);
    }

    auto f = [&](double t) { return total_cumulative_hazard(terms, s, t) - target; };
    auto df = [&](double t) {
        double d = 0.0;
        for (const auto& term : terms) d += term.c * term.nu * std::pow(t, term.nu - 1.0);
        return d;
    };
    double lo = s;
    double hi = std::max(s, 1e-12) * 2.0 + 1.0;
    for (int k = 0; f(hi) < 0.0; ++k) {
        lo = hi;
        hi *= 2.0;
        if (k > 2000 || !std::isfinite(hi)) throw NonConvergence("simulator", "could not bracket the next event time");
    }
    double t = 0.5 * (lo + hi);
    const double tol = 1e-13 * std::max(1.0, target);
    for (int it = 0; it < 200; ++it) {
        const double v = f(t);
        if (std::abs(v) <= tol) return t;
        if (v < 0.0) lo = t; else hi = t;
        const double d = df(t);
        double next = d > 0.0 && std::isfinite(d) ? t - v / d : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) return next;
        t = next;
    }
    if (std::abs(f(t)) <= 1e-10) return t;
    throw NonConvergence("simulator", "event time root finder did not converge");
}

Path sample_path(const ValidatedScenario& scenario, const std::optional<InterventionSpec>& intervention,
                 SubjectStream& rng) {
    const auto& cfg = scenario.config();
    const auto& models = cfg.models;
    Path path;
    path.tau = cfg.tau;
    path.l0 = cfg.l0.draw(rng.uniform());
    const double ua = rng.uniform();
    if (scenario.has_arm()) {
        path.a0 = ua < scenario.propensity()->prob(1, path.l0) ? 1 : 0;
    }
    if (intervention && intervention->arm) path.a0 = *intervention->arm;

    const bool intervened = intervention.has_value();
    const double alpha = intervened ? intervention->alpha : 1.0;

    std::vector<Mark> marks;
    std::vector<HazardTerm> terms;
    double t = 0.0;
    State state;
    for (;;) {
        marks.clear();
        terms.clear();
        auto add = [&](const Mark& m, double scale) {
            const auto& model = models[m];
            if (!admissible(m, state) || model.eta == 0.0 || scale == 0.0) return;
            marks.push_back(m);
            terms.push_back({scale * model.eta * std::exp(model.linear_predictor(state, path.a0, path.l0)), model.nu});
        };
        for (int j = 1; j <= models.num_outcomes(); ++j) add(Mark::outcome_j(j), 1.0);
        add(Mark::ell(), 1.0);
        add(Mark::z(), alpha);
        if (!intervened) add(Mark::censor(), 1.0);

        const double e = rng.exponential();
        const double u_mark = rng.uniform();
        if (terms.empty() || total_cumulative_hazard(terms, t, path.tau) < e) break;
        const double next = std::min(invert_total_hazard(terms, t, e), path.tau);

        double total = 0.0;
        std::vector<double> hz(terms.size());
        for (std::size_t k = 0; k < terms.size(); ++k) {
            hz[k] = terms[k].c * (terms[k].nu == 1.0 ? 1.0 : terms[k].nu * std::pow(next, terms[k].nu - 1.0));
            total += hz[k];
        }
        if (!(total > 0.0) || !std::isfinite(total)) {
            throw NonConvergence("simulator", "degenerate hazards at the sampled event time");
        }
        std::size_t pick = terms.size() - 1;
        double acc = 0.0;
        for (std::size_t k = 0; k < terms.size(); ++k) {
            acc += hz[k];
            if (u_mark * total < acc) {
                pick = k;
                break;
            }
        }
        path.jumps.push_back({next, marks[pick]});
        if (marks[pick].terminal()) break;
        state = state.after(marks[pick]);
        t = next;
        if (t >= path.tau) break;
    }
    return path;
}

Cohort sample_cohort(const ValidatedScenario& scenario, const std::optional<InterventionSpec>& intervention,
                     std::size_t n, std::uint64_t seed, std::uint64_t first_index) {
    if (n == 0) throw std::invalid_argument("sample_cohort: n must be at least 1");
    if (intervention) scenario.check_intervention(*intervention);
    Cohort cohort;
    cohort.seed = seed;
    cohort.first_index = first_index;
    cohort.scenario = scenario.config();
    cohort.intervention = intervention;
    cohort.paths.resize(n);
    parallel_for(n, [&](std::size_t i) {
        SubjectStream rng(seed, first_index + i);
        cohort.paths[i] = sample_path(scenario, intervention, rng);
    });
    return cohort;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_cohort_csv(std::ostream& out, const std::vector<Path>& paths) {
    out << "id,l0,a0,time,mark\n";
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto& p = paths[i];
        const std::string prefix =
            std::to_string(i + 1) + "," + format_double(p.l0) + "," + (p.a0 ? std::to_string(*p.a0) : "NA") + ",";
        for (const auto& j : p.jumps) out << prefix << format_double(j.time) << "," << j.mark.to_string() << "\n";
        if (!p.has_terminal()) out << prefix << format_double(p.tau) << ",end\n";
    }
}

namespace {

double parse_double(const std::string& s, std::size_t line) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError("simulator", "cohort csv line " + std::to_string(line) + ": bad number '" + s + "'");
    }
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

CsvImport read_cohort_csv(std::istream& in, std::optional<double> tau) {
    CsvImport result;
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    struct Raw {
        std::string id;
        Path path;
        std::optional<double> end;
    };
    std::vector<Raw> raws;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto cells = split_csv(line);
        if (!header) {
            if (cells != std::vector<std::string>{"id", "l0", "a0", "time", "mark"}) {
                throw ConfigError("simulator", "cohort csv must start with header id,l0,a0,time,mark");
            }
            header = true;
            continue;
        }
        if (cells.size() != 5) throw ConfigError("simulator", "cohort csv line " + std::to_string(line_no) + ": expected 5 fields");
        if (raws.empty() || raws.back().id != cells[0]) {
            Raw r;
            r.id = cells[0];
            r.path.l0 = parse_double(cells[1], line_no);
            if (cells[2] != "NA") {
                const double a = parse_double(cells[2], line_no);
                if (a != 0.0 && a != 1.0) throw ConfigError("simulator", "cohort csv: a0 must be 0, 1 or NA");
                r.path.a0 = static_cast<int>(a);
            }
            raws.push_back(std::move(r));
        }
        auto& raw = raws.back();
        const double time = parse_double(cells[3], line_no);
        if (raw.end) throw ConfigError("simulator", "cohort csv: rows after the end row for id " + raw.id);
        if (cells[4] == "end") {
            raw.end = time;
            continue;
        }
        Mark m;
        try {
            m = Mark::parse(cells[4]);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("simulator", std::string("cohort csv: ") + e.what());
        }
        raw.path.jumps.push_back({time, m});
    }
    if (!header) throw ConfigError("simulator", "cohort csv is empty");

    double horizon = 0.0;
    if (tau) {
        horizon = *tau;
    } else {
        for (const auto& r : raws) {
            if (r.end) horizon = std::max(horizon, *r.end);
            for (const auto& j : r.path.jumps) horizon = std::max(horizon, j.time);
        }
    }
    std::size_t perturbed = 0;
    for (auto& r : raws) {
        r.path.tau = horizon;
        auto& jumps = r.path.jumps;
        for (std::size_t k = 1; k < jumps.size(); ++k) {
            if (jumps[k].time <= jumps[k - 1].time) {
                jumps[k].time = jumps[k - 1].time + 1e-9;
                ++perturbed;
            }
        }
        try {
            r.path.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError("simulator", "cohort csv id " + r.id + ": " + e.what());
        }
        result.paths.push_back(std::move(r.path));
    }
    if (perturbed > 0) {
        result.warnings.push_back(std::to_string(perturbed) + " tied event time(s) perturbed by 1e-9");
    }
    return result;
}

}  // namespace evscale
