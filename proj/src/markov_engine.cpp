#include "evscale/markov_engine.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <tuple>

#include "evscale/errors.hpp"
#include "evscale/parallel.hpp"

namespace evscale {

std::string to_string(Target x) { return x == Target::outcome1 ? "outcome1" : "z"; }

Target parse_target(const std::string& text) {
    if (text == "outcome1" || text == "1") return Target::outcome1;
    if (text == "z") return Target::z;
    throw ConfigError("markov_engine", "target must be outcome1 or z, got '" + text + "'");
}

namespace {

constexpr int kEll = 1;
constexpr int kZ = 2;
constexpr std::size_t kMaxSubsteps = 4096;

double weibull_increment(double eta, double nu, double t0, double t1) {
    if (eta == 0.0) return 0.0;
    return nu == 1.0 ? eta * (t1 - t0) : eta * (std::pow(t1, nu) - std::pow(t0, nu));
}

// |int_{t0}^{t1} lambda(t) (t - t_mid) dt| for the baseline Weibull rate
double first_moment(double eta, double nu, double t0, double t1) {
    if (eta == 0.0 || nu == 1.0) return 0.0;
    const double mid = 0.5 * (t0 + t1);
    const double m = nu / (nu + 1.0) * (std::pow(t1, nu + 1.0) - std::pow(t0, nu + 1.0)) -
                     mid * (std::pow(t1, nu) - std::pow(t0, nu));
    return std::abs(eta * m);
}

}  // namespace

void propagate_frozen(StateValues& g, const std::vector<std::array<double, kNumStates>>& rates, int num_outcomes,
                      double duration) {
    if (!(duration > 0.0)) return;
    const std::size_t ell = static_cast<std::size_t>(num_outcomes);
    const std::size_t z = ell + 1;
    std::array<double, kNumStates> q{};
    std::array<double, 2> c[kNumStates]{};
    double qmax = 0.0;
    for (int s = 0; s < kNumStates; ++s) {
        double total = 0.0;
        double terminal = 0.0;
        for (std::size_t m = 0; m < rates.size(); ++m) total += rates[m][static_cast<std::size_t>(s)];
        for (std::size_t j = 0; j < ell; ++j) terminal += rates[j][static_cast<std::size_t>(s)];
        q[static_cast<std::size_t>(s)] = total;
        c[s][0] = rates[0][static_cast<std::size_t>(s)];
        c[s][1] = (s & kZ) ? terminal : 0.0;
        qmax = std::max(qmax, total);
    }
    const auto apply = [&](const StateValues& v, StateValues& out) {
        for (int s = 0; s < kNumStates; ++s) {
            const auto us = static_cast<std::size_t>(s);
            const double re = (s & kEll) ? 0.0 : rates[ell][us];
            const double rz = (s & kZ) ? 0.0 : rates[z][us];
            for (int x = 0; x < 2; ++x) {
                double d = -q[us] * v[us][static_cast<std::size_t>(x)];
                if (re != 0.0) d += re * v[static_cast<std::size_t>(s | kEll)][static_cast<std::size_t>(x)];
                if (rz != 0.0) d += rz * v[static_cast<std::size_t>(s | kZ)][static_cast<std::size_t>(x)];
                out[us][static_cast<std::size_t>(x)] = d;
            }
        }
    };
    const int nsub = std::max(1, static_cast<int>(std::ceil(qmax * duration)));
    const double d = duration / nsub;
    StateValues term{};
    StateValues next{};
    for (int sub = 0; sub < nsub; ++sub) {
        apply(g, term);
        StateValues sum = g;
        double largest = 0.0;
        for (int s = 0; s < kNumStates; ++s) {
            for (int x = 0; x < 2; ++x) {
                auto& v = term[static_cast<std::size_t>(s)][static_cast<std::size_t>(x)];
                v = d * (v + c[s][x]);
                sum[static_cast<std::size_t>(s)][static_cast<std::size_t>(x)] += v;
                largest = std::max(largest, std::abs(v));
            }
        }
        for (int k = 2; k < 80 && largest > 1e-17; ++k) {
            apply(term, next);
            largest = 0.0;
            const double f = d / k;
            for (int s = 0; s < kNumStates; ++s) {
                for (int x = 0; x < 2; ++x) {
                    const auto us = static_cast<std::size_t>(s);
                    const auto ux = static_cast<std::size_t>(x);
                    term[us][ux] = f * next[us][ux];
                    sum[us][ux] += term[us][ux];
                    largest = std::max(largest, std::abs(term[us][ux]));
                }
            }
        }
        for (auto& row : sum)
            for (auto& v : row) v = std::clamp(v, 0.0, 1.0);
        g = sum;
    }
}

ValueTable::ValueTable(std::shared_ptr<const std::vector<double>> grid, std::vector<StateValues> values,
                       RateSpec rates, Interpolation mode)
    : grid_(std::move(grid)), values_(std::move(values)), rates_(std::move(rates)), mode_(mode) {}

std::size_t ValueTable::cell(double t) const {
    const auto& g = *grid_;
    const std::size_t m = g.size() - 1;
    const double tau = g.back();
    auto k = static_cast<std::size_t>(std::clamp(t / tau * static_cast<double>(m), 0.0, static_cast<double>(m - 1)));
    while (k > 0 && g[k] > t) --k;
    while (k + 1 < m && g[k + 1] <= t) ++k;
    return k;
}

StateValues ValueTable::at(double t) const {
    const auto& g = *grid_;
    t = std::clamp(t, 0.0, g.back());
    const std::size_t k = cell(t);
    if (t == g[k]) return values_[k];
    if (t == g[k + 1]) return values_[k + 1];
    if (mode_ == Interpolation::linear) {
        const double w = (t - g[k]) / (g[k + 1] - g[k]);
        StateValues out;
        for (std::size_t s = 0; s < kNumStates; ++s)
            for (std::size_t x = 0; x < 2; ++x) out[s][x] = (1.0 - w) * values_[k][s][x] + w * values_[k + 1][s][x];
        return out;
    }
    const double t1 = g[k + 1];
    const double dur = t1 - t;
    std::vector<std::array<double, kNumStates>> rates(rates_.multiplier.size());
    for (std::size_t m = 0; m < rates.size(); ++m) {
        const double base = weibull_increment(rates_.eta[m], rates_.nu[m], t, t1) / dur;
        for (std::size_t s = 0; s < kNumStates; ++s) rates[m][s] = rates_.multiplier[m][s] * base;
    }
    StateValues out = values_[k + 1];
    propagate_frozen(out, rates, rates_.num_outcomes, dur);
    return out;
}

double ValueTable::value(double t, const State& s, Target x) const {
    return at(t)[static_cast<std::size_t>(s.index())][static_cast<std::size_t>(x)];
}

BackwardSolver::BackwardSolver(const ModelSet& models, const InterventionSpec& intervention, double tau,
                               EngineOptions options)
    : models_(models), intervention_(intervention), tau_(tau), options_(options) {
    if (options_.grid_size < 2) throw std::invalid_argument("markov_engine: grid size must be at least 2");
    if (!(tau > 0.0)) throw std::invalid_argument("markov_engine: tau must be positive");
    if (!(intervention.alpha >= 0.0)) throw Error("markov_engine", "negative z-rate scaling");
    const auto marks = models_.event_marks();
    for (const auto& m : marks) {
        const auto& model = models_[m];
        if (!(model.eta >= 0.0) || !(model.nu > 0.0) || !std::isfinite(model.eta)) {
            throw Error("markov_engine", "negative or invalid rate for " + m.to_string());
        }
        uses_l0_ = uses_l0_ || model.beta_l0 != 0.0;
        uses_a0_ = uses_a0_ || model.beta_a0 != 0.0;
    }
    const std::size_t M = options_.grid_size;
    auto grid = std::make_shared<std::vector<double>>(M + 1);
    for (std::size_t k = 0; k <= M; ++k) (*grid)[k] = tau * static_cast<double>(k) / static_cast<double>(M);
    (*grid)[M] = tau;
    grid_ = grid;
    step_rate_.assign(marks.size(), std::vector<double>(M));
    step_error_.assign(marks.size(), std::vector<double>(M));
    for (std::size_t m = 0; m < marks.size(); ++m) {
        const auto& model = models_[marks[m]];
        for (std::size_t k = 0; k < M; ++k) {
            const double t0 = (*grid)[k];
            const double t1 = (*grid)[k + 1];
            step_rate_[m][k] = weibull_increment(model.eta, model.nu, t0, t1) / (t1 - t0);
            step_error_[m][k] = first_moment(model.eta, model.nu, t0, t1);
        }
    }
}

RateSpec BackwardSolver::rates_for(std::optional<int> a0, double l0) const {
    const auto marks = models_.event_marks();
    RateSpec spec;
    spec.num_outcomes = models_.num_outcomes();
    spec.multiplier.resize(marks.size());
    for (std::size_t m = 0; m < marks.size(); ++m) {
        const auto& model = models_[marks[m]];
        spec.eta.push_back(model.eta);
        spec.nu.push_back(model.nu);
        const double scale = marks[m].kind == MarkKind::z ? intervention_.alpha : 1.0;
        for (int s = 0; s < kNumStates; ++s) {
            const State st = State::from_index(s);
            spec.multiplier[m][static_cast<std::size_t>(s)] =
                admissible(marks[m], st) && scale != 0.0 ? scale * std::exp(model.linear_predictor(st, a0, l0)) : 0.0;
        }
    }
    return spec;
}

ValueTable BackwardSolver::solve(std::optional<int> a0, double l0) const {
    if (intervention_.arm) a0 = intervention_.arm;
    RateSpec spec = rates_for(a0, l0);
    const std::size_t M = options_.grid_size;
    const std::size_t nm = spec.multiplier.size();

    std::vector<double> mult_max(nm, 0.0);
    for (std::size_t m = 0; m < nm; ++m)
        for (double v : spec.multiplier[m]) mult_max[m] = std::max(mult_max[m], v);
    const auto& grid = *grid_;
    const auto& marks_eta = spec.eta;
    const auto& marks_nu = spec.nu;
    // commutator estimate of freezing the rates over [t0, t1]
    auto piece_error = [&](double t0, double t1) {
        double q = 0.0;
        double moment = 0.0;
        for (std::size_t m = 0; m < nm; ++m) {
            if (mult_max[m] == 0.0) continue;
            q += mult_max[m] * weibull_increment(marks_eta[m], marks_nu[m], t0, t1) / (t1 - t0);
            moment += mult_max[m] * first_moment(marks_eta[m], marks_nu[m], t0, t1);
        }
        return 2.0 * q * moment;
    };
    // steps whose estimate exceeds their share of the tolerance are split, worst piece first
    std::vector<std::vector<double>> pieces(M);
    for (std::size_t k = 0; k < M; ++k) {
        double q = 0.0;
        double moment = 0.0;
        for (std::size_t m = 0; m < nm; ++m) {
            q += mult_max[m] * step_rate_[m][k];
            moment += mult_max[m] * step_error_[m][k];
        }
        const double e = 2.0 * q * moment;
        const double budget = options_.coarse_tolerance * (grid[k + 1] - grid[k]) / tau_;
        if (!std::isfinite(e)) throw Error("markov_engine", "non-finite rates on the time grid");
        if (e <= budget) continue;
        using Piece = std::tuple<double, double, double>;  // error, start, end
        std::priority_queue<Piece> heap;
        heap.emplace(e, grid[k], grid[k + 1]);
        double total = e;
        while (total > budget) {
            if (heap.size() >= kMaxSubsteps) {
                throw Error("markov_engine", "grid too coarse: step error estimate " + std::to_string(total) +
                                                 " exceeds " + std::to_string(budget) + " on [" +
                                                 std::to_string(grid[k]) + ", " + std::to_string(grid[k + 1]) +
                                                 "] even with " + std::to_string(kMaxSubsteps) + " substeps");
            }
            const auto [err, lo, hi] = heap.top();
            heap.pop();
            const double mid = 0.5 * (lo + hi);
            const double left = piece_error(lo, mid);
            const double right = piece_error(mid, hi);
            total += left + right - err;
            heap.emplace(left, lo, mid);
            heap.emplace(right, mid, hi);
        }
        auto& cuts = pieces[k];
        while (!heap.empty()) {
            cuts.push_back(std::get<1>(heap.top()));
            heap.pop();
        }
        cuts.push_back(grid[k + 1]);
        std::sort(cuts.begin(), cuts.end());
    }

    std::vector<StateValues> values(M + 1);
    StateValues g{};
    for (int s = 0; s < kNumStates; ++s) {
        g[static_cast<std::size_t>(s)][0] = 0.0;
        g[static_cast<std::size_t>(s)][1] = (s & kZ) ? 1.0 : 0.0;
    }
    values[M] = g;
    std::vector<std::array<double, kNumStates>> rates(nm);
    for (std::size_t k = M; k-- > 0;) {
        if (pieces[k].empty()) {
            for (std::size_t m = 0; m < nm; ++m)
                for (std::size_t s = 0; s < kNumStates; ++s) rates[m][s] = spec.multiplier[m][s] * step_rate_[m][k];
            propagate_frozen(g, rates, spec.num_outcomes, grid[k + 1] - grid[k]);
        } else {
            const auto& cuts = pieces[k];
            for (std::size_t j = cuts.size() - 1; j-- > 0;) {
                const double a = cuts[j];
                const double b = cuts[j + 1];
                for (std::size_t m = 0; m < nm; ++m) {
                    const double base = weibull_increment(marks_eta[m], marks_nu[m], a, b) / (b - a);
                    for (std::size_t s = 0; s < kNumStates; ++s) rates[m][s] = spec.multiplier[m][s] * base;
                }
                propagate_frozen(g, rates, spec.num_outcomes, b - a);
            }
        }
        values[k] = g;
    }
    return ValueTable(grid_, std::move(values), std::move(spec), options_.interpolation);
}

const ValueTable& TableCache::get(std::optional<int> a0, double l0) {
    if (solver_.intervention_.arm) a0 = solver_.intervention_.arm;
    const std::pair<int, double> key{solver_.uses_a0_ ? a0.value_or(0) : 0, solver_.uses_l0_ ? l0 : 0.0};
    auto it = tables_.find(key);
    if (it == tables_.end()) {
        it = tables_.emplace(key, std::make_unique<ValueTable>(solver_.solve(a0, l0))).first;
    }
    return *it->second;
}

std::vector<const ValueTable*> TableCache::for_subjects(const std::vector<Path>& paths) {
    std::optional<int> arm = solver_.intervention_.arm;
    std::vector<std::pair<int, double>> keys(paths.size());
    std::vector<std::pair<std::optional<int>, double>> todo;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto a0 = arm ? arm : paths[i].a0;
        keys[i] = {solver_.uses_a0_ ? a0.value_or(0) : 0, solver_.uses_l0_ ? paths[i].l0 : 0.0};
        if (!tables_.count(keys[i])) {
            tables_.emplace(keys[i], nullptr);
            todo.emplace_back(a0, paths[i].l0);
        }
    }
    std::vector<std::unique_ptr<ValueTable>> solved(todo.size());
    parallel_for(todo.size(), [&](std::size_t k) {
        solved[k] = std::make_unique<ValueTable>(solver_.solve(todo[k].first, todo[k].second));
    });
    for (std::size_t k = 0; k < todo.size(); ++k) {
        const auto a0 = todo[k].first;
        const std::pair<int, double> key{solver_.uses_a0_ ? a0.value_or(0) : 0, solver_.uses_l0_ ? todo[k].second : 0.0};
        tables_[key] = std::move(solved[k]);
    }
    std::vector<const ValueTable*> out(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) out[i] = tables_.at(keys[i]).get();
    return out;
}

ValueTable backward_solve(const ModelSet& models, const InterventionSpec& intervention, double tau,
                          std::size_t grid_size, std::optional<int> a0, double l0, Interpolation mode) {
    EngineOptions opt;
    opt.grid_size = grid_size;
    opt.interpolation = mode;
    return BackwardSolver(models, intervention, tau, opt).solve(a0, l0);
}

double clever_covariate(const StateValues& g, const State& state, const Mark& mark, double alpha, Target x) {
    if (!admissible(mark, state)) {
        throw std::invalid_argument("clever_covariate: " + mark.to_string() + " is not admissible from this state");
    }
    const auto xi = static_cast<std::size_t>(x);
    const double before = g[static_cast<std::size_t>(state.index())][xi];
    double after = 0.0;
    switch (mark.kind) {
        case MarkKind::outcome:
            after = x == Target::outcome1 ? (mark.outcome == 1 ? 1.0 : 0.0) : static_cast<double>(state.n_z);
            break;
        case MarkKind::censor:
            throw std::invalid_argument("clever_covariate: censoring has no clever covariate");
        case MarkKind::ell:
        case MarkKind::z:
            after = g[static_cast<std::size_t>(state.after(mark).index())][xi];
            break;
    }
    const double h = after - before;
    return mark.kind == MarkKind::z ? alpha * h : h;
}

double clever_covariate(const ValueTable& table, double t, const State& state, const Mark& mark, double alpha,
                        Target x) {
    return clever_covariate(table.at(t), state, mark, alpha, x);
}

double plugin_psi(const ModelSet& models, const InterventionSpec& intervention, Target x, double tau,
                  const std::vector<double>& l0_sample, const std::optional<Propensity>& propensity,
                  EngineOptions options) {
    if (l0_sample.empty()) throw std::invalid_argument("plugin_psi: l0 sample is empty");
    BackwardSolver solver(models, intervention, tau, options);
    TableCache cache(solver);
    const auto xi = static_cast<std::size_t>(x);
    std::vector<double> vals(l0_sample.size());
    for (std::size_t i = 0; i < l0_sample.size(); ++i) {
        const double l0 = l0_sample[i];
        if (intervention.arm || !propensity) {
            vals[i] = cache.get(intervention.arm, l0).at_node(0)[0][xi];
        } else {
            const double p1 = propensity->prob(1, l0);
            vals[i] = p1 * cache.get(1, l0).at_node(0)[0][xi] + (1.0 - p1) * cache.get(0, l0).at_node(0)[0][xi];
        }
    }
    return mean(vals);
}

}  // namespace evscale
