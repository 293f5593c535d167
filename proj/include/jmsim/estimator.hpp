#pragma once

// Simulated maximum likelihood over the model setup.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "jmsim/density.hpp"
#include "jmsim/errors.hpp"
#include "jmsim/model.hpp"
#include "jmsim/optimizer.hpp"
#include "jmsim/parallel.hpp"
#include "jmsim/rng.hpp"
#include "jmsim/simulator.hpp"

namespace jmsim {

struct TuningSchedule {
    std::size_t n = 0;   // observed subjects
    double dt = 0.0;     // simulation step
    std::size_t N = 0;   // simulated samples
    double h = 0.0;      // base kernel bandwidth
};

/// dt = 1/n, N = n, h = n^(-1/2).
inline TuningSchedule tuning_from_n(std::size_t n) {
    if (n < 2) throw ContractViolation("tuning_from_n: n must be >= 2");
    const double nd = static_cast<double>(n);
    return {n, 1.0 / nd, n, 1.0 / std::sqrt(nd)};
}

/// The schedule used by the estimation drivers: the same rates with
/// N = sim_factor * n and h = kernel_factor * n^(-1/2).
inline TuningSchedule estimation_schedule(std::size_t n, double sim_factor = 10.0, double kernel_factor = 10.0) {
    if (!(sim_factor > 0.0) || !(kernel_factor > 0.0))
        throw ContractViolation("estimation_schedule: factors must be positive");
    TuningSchedule s = tuning_from_n(n);
    s.N = static_cast<std::size_t>(std::llround(sim_factor * static_cast<double>(n)));
    s.N = std::max<std::size_t>(s.N, 1);
    s.h *= kernel_factor;
    return s;
}

enum class LikelihoodMode { full, mean };

struct PartitionSettings {
    PartitionMode mode = PartitionMode::uniform_times;
    std::size_t cells = 4;  // equal-length mode only
};

/// Log-likelihood of a dataset under a setup, computed from N samples
/// simulated with a caller-fixed seed (common random numbers).
/// Per-coordinate spread of the observed (Z_T, T) pairs.
inline std::vector<double> data_scales(const ObservedDataset& data) {
    SampleSet s;
    for (const auto& sub : data.subjects) s.samples.push_back({sub.event_covariates, sub.event_time, false, {}});
    return sample_scales(s);
}

/// The kernel bandwidth is h times the spread of each observed coordinate.
/// It depends only on the data, so it is the same for every setup compared.
class Objective {
public:
    Objective(LongitudinalSpec spec, const ObservedDataset& data, TuningSchedule schedule,
              LikelihoodMode mode = LikelihoodMode::full, PartitionSettings part = {})
        : spec_(std::move(spec)), data_(&data), schedule_(schedule), mode_(mode) {
        if (data.subjects.empty()) throw ContractViolation("objective: dataset is empty");
        if (!(schedule.dt > 0.0) || schedule.N < 1 || !(schedule.h > 0.0))
            throw ContractViolation("objective: schedule must have dt > 0, N >= 1, h > 0");
        if (data.p != spec_.p) throw ContractViolation("objective: dataset and spec disagree on p");
        bandwidth_ = data_scales(data);
        for (auto& v : bandwidth_) v *= schedule.h;
        if (mode_ == LikelihoodMode::mean) {
            partition_ = build_partition(data, part.mode, part.cells);
            snapshots_.assign(partition_.boundaries.begin() + 1, partition_.boundaries.end());
        }
    }

    LikelihoodMode mode() const noexcept { return mode_; }
    const Partition& partition() const noexcept { return partition_; }
    const TuningSchedule& schedule() const noexcept { return schedule_; }
    const LongitudinalSpec& spec() const noexcept { return spec_; }
    const ObservedDataset& data() const noexcept { return *data_; }
    const std::vector<double>& bandwidth() const noexcept { return bandwidth_; }

    /// Factor that puts the objective on a per-subject scale.
    double per_subject_scale() const noexcept {
        return mode_ == LikelihoodMode::full ? 1.0 / static_cast<double>(data_->size()) : 1.0;
    }

    SampleSet simulate(const ModelSetup& setup, std::uint64_t seed) const {
        JointSimOptions opt;
        opt.dt = schedule_.dt;
        opt.n = schedule_.N;
        opt.censor_bound = data_->censor_bound;
        opt.seed = seed;
        opt.snapshot_times = snapshots_;
        return gen_sim_joint(setup, spec_, opt);
    }

    double operator()(const ModelSetup& setup, std::uint64_t seed) const {
        const SampleSet samples = simulate(setup, seed);
        if (mode_ == LikelihoodMode::full) return log_likelihood(EmpiricalPdf(samples, bandwidth_), *data_);
        return mean_log_likelihood(samples, *data_, partition_, bandwidth_).value;
    }

    MeanLikelihood mean_detail(const ModelSetup& setup, std::uint64_t seed) const {
        if (mode_ != LikelihoodMode::mean) throw ContractViolation("mean_detail requires mean mode");
        const SampleSet samples = simulate(setup, seed);
        return mean_log_likelihood(samples, *data_, partition_, bandwidth_, true);
    }

private:
    LongitudinalSpec spec_;
    const ObservedDataset* data_;
    TuningSchedule schedule_;
    LikelihoodMode mode_;
    Partition partition_;
    std::vector<double> snapshots_;
    std::vector<double> bandwidth_;
};

inline double objective(const ModelSetup& setup, const LongitudinalSpec& spec, const ObservedDataset& data,
                        const TuningSchedule& schedule, LikelihoodMode mode, std::uint64_t seed) {
    return Objective(spec, data, schedule, mode)(setup, seed);
}

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

struct ParamBlock {
    std::string name;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const noexcept { return end - begin; }
};

/// Flat optimizer coordinates for a setup: the longitudinal parameters a,
/// then b, b_c and the step heights of both baselines.  Variances and step
/// heights live on the log scale.
class ParamLayout {
public:
    ParamLayout(const LongitudinalSpec& spec, double horizon, double sim_dt, std::size_t max_pieces,
                bool estimate_hazards)
        : p_(spec.p), counting_(spec.counting_index.has_value()), hazards_(estimate_hazards) {
        if (!(horizon > 0.0)) throw ContractViolation("ParamLayout: horizon must be positive");
        const auto info = spec.param_info();
        n_a_ = info.size();
        for (const auto& pi : info) {
            names_.push_back(pi.name);
            log_.push_back(pi.positive);
        }
        add_block("a", n_a_);
        for (std::size_t k = 0; k < p_; ++k) push("b[" + std::to_string(k + 1) + "]", false);
        add_block("b", p_);
        if (counting_) {
            for (std::size_t k = 0; k < p_; ++k) push("b_c[" + std::to_string(k + 1) + "]", false);
            add_block("b_c", p_);
        }
        if (hazards_) {
            const auto fine = static_cast<std::size_t>(std::ceil(horizon / sim_dt - 1e-9));
            pieces_ = std::max<std::size_t>(1, std::min(fine, max_pieces));
            piece_dt_ = horizon / static_cast<double>(pieces_);
            for (std::size_t k = 0; k < pieces_; ++k) push("theta[" + std::to_string(k + 1) + "]", true);
            add_block("theta", pieces_);
            if (counting_) {
                for (std::size_t k = 0; k < pieces_; ++k) push("theta_c[" + std::to_string(k + 1) + "]", true);
                add_block("theta_c", pieces_);
            }
        }
    }

    std::size_t size() const noexcept { return names_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }
    bool log_scale(std::size_t i) const { return log_.at(i); }
    std::size_t pieces() const noexcept { return pieces_; }
    double piece_dt() const noexcept { return piece_dt_; }
    bool counting() const noexcept { return counting_; }
    bool hazards_free() const noexcept { return hazards_; }
    std::size_t p() const noexcept { return p_; }

    std::optional<ParamBlock> block(const std::string& name) const {
        for (const auto& b : blocks_)
            if (b.name == name) return b;
        return std::nullopt;
    }

    /// Optimizer coordinates to setup.  Fixed baselines come from `base`.
    ModelSetup decode(std::span<const double> x, const ModelSetup& base) const {
        if (x.size() != size()) throw ContractViolation("ParamLayout::decode: wrong vector length");
        ModelSetup s;
        std::size_t pos = 0;
        s.a.resize(n_a_);
        for (std::size_t i = 0; i < n_a_; ++i, ++pos) s.a[i] = log_[pos] ? std::exp(x[pos]) : x[pos];
        s.b.assign(x.begin() + pos, x.begin() + pos + p_);
        pos += p_;
        if (counting_) {
            s.b_c.assign(x.begin() + pos, x.begin() + pos + p_);
            pos += p_;
        } else {
            s.b_c.assign(p_, 0.0);
        }
        if (hazards_) {
            std::vector<double> th(pieces_);
            for (std::size_t k = 0; k < pieces_; ++k) th[k] = std::exp(x[pos++]);
            s.lambda0 = StepHazard(std::move(th), piece_dt_);
            if (counting_) {
                std::vector<double> tc(pieces_);
                for (std::size_t k = 0; k < pieces_; ++k) tc[k] = std::exp(x[pos++]);
                s.lambda0_c = StepHazard(std::move(tc), piece_dt_);
            } else {
                s.lambda0_c = constant_hazard(0.0);
            }
        } else {
            s.lambda0 = base.lambda0;
            s.lambda0_c = base.lambda0_c;
        }
        return s;
    }

    /// Setup to optimizer coordinates.  Baselines of any form are averaged
    /// over each piece of the estimation grid.
    std::vector<double> encode(const ModelSetup& s) const {
        if (s.a.size() != n_a_) throw ContractViolation("ParamLayout::encode: a has the wrong length");
        if (s.b.size() != p_ || s.b_c.size() != p_) throw ContractViolation("ParamLayout::encode: b/b_c length");
        std::vector<double> x;
        x.reserve(size());
        for (std::size_t i = 0; i < n_a_; ++i) x.push_back(log_[i] ? std::log(std::max(s.a[i], 1e-300)) : s.a[i]);
        x.insert(x.end(), s.b.begin(), s.b.end());
        if (counting_) x.insert(x.end(), s.b_c.begin(), s.b_c.end());
        if (hazards_) {
            auto push_hazard = [&](const Hazard& hz) {
                for (std::size_t k = 0; k < pieces_; ++k) {
                    const double lo = piece_dt_ * static_cast<double>(k);
                    const double v = (hz.cumulative(lo + piece_dt_) - hz.cumulative(lo)) / piece_dt_;
                    x.push_back(std::log(std::max(v, 1e-300)));
                }
            };
            push_hazard(s.lambda0);
            if (counting_) push_hazard(s.lambda0_c);
        }
        return x;
    }

    /// Coordinates mapped back to natural units (variances and step heights
    /// exponentiated).
    std::vector<double> natural(std::span<const double> x) const {
        std::vector<double> out(x.begin(), x.end());
        for (std::size_t i = 0; i < out.size(); ++i)
            if (log_[i]) out[i] = std::exp(out[i]);
        return out;
    }

private:
    void push(std::string name, bool log_scale) {
        names_.push_back(std::move(name));
        log_.push_back(log_scale);
    }
    void add_block(const std::string& name, std::size_t count) {
        if (count == 0) return;
        const std::size_t end = names_.size();
        blocks_.push_back({name, end - count, end});
    }

    std::size_t p_;
    bool counting_;
    bool hazards_;
    std::size_t n_a_ = 0;
    std::size_t pieces_ = 0;
    double piece_dt_ = 0.0;
    std::vector<std::string> names_;
    std::vector<bool> log_;
    std::vector<ParamBlock> blocks_;
};

// ---------------------------------------------------------------------------
// Maximization
// ---------------------------------------------------------------------------

struct EstimatorOptions {
    std::uint64_t seed = 1;
    std::size_t restarts = 3;
    std::size_t max_sweeps = 6;
    double tol_f = 1e-6;
    std::size_t block_evals = 0;  // per block per sweep; 0 means 15 * (block size + 1)
    std::size_t max_hazard_pieces = 10;  // never more than the simulation grid allows
    bool estimate_hazards = true;
    double jitter = 0.5;  // restart start perturbation, in units of the initial step

    // Default box, natural units.
    double coef_bound = 5.0;
    double mean_bound = 5.0;
    double var_lo = 0.01, var_hi = 25.0;
    double theta_lo = 1e-4, theta_hi = 50.0;
    std::map<std::string, std::pair<double, double>> bounds;  // per-name overrides, natural units

    std::optional<ModelSetup> start;  // otherwise method of moments
    std::vector<std::string> free_blocks;  // blocks to optimize; empty means all
    PartitionSettings partition;
};

struct TraceEntry {
    std::size_t restart = 0;
    std::size_t sweep = 0;
    std::string block;
    std::size_t evals = 0;
    double value = 0.0;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double v) const { return lo <= v && v <= hi; }
};

struct EstimationResult {
    ModelSetup setup_hat;
    std::vector<std::string> names;
    std::vector<double> estimate;  // natural units, aligned with names
    double objective_value = 0.0;
    std::vector<TraceEntry> objective_trace;
    std::size_t evaluations = 0;
    std::uint64_t seed = 0;
    TuningSchedule schedule;
    LikelihoodMode mode = LikelihoodMode::full;
    double hazard_dt = 0.0;
    std::vector<double> se;
    std::vector<Interval> ci95;
    std::vector<bool> selected;  // b then b_c; true means kept
    double penalty = 0.0;
    std::vector<std::string> warnings;

    double value_of(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return estimate[i];
        throw ContractViolation("no parameter named " + name);
    }
};

using SetupObjective = std::function<double(const ModelSetup&, std::uint64_t seed)>;

namespace detail {

inline std::pair<double, double> regress(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 1e-12 * n) return {my, 0.0};
    const double slope = sxy / sxx;
    return {my - slope * mx, slope};
}

}  // namespace detail

/// Data-driven starting setup: b = b_c = 0; linear-mixed means and
/// variances from regressions of the event-time covariates on Z2(T); flat
/// baselines at the average event and jump rates.
inline ModelSetup initial_setup(const LongitudinalSpec& spec, const ObservedDataset& data,
                                const ParamLayout& layout) {
    ModelSetup s;
    s.a = spec.params();
    if (spec.linear_mixed) {
        const auto& lm = *spec.linear_mixed;
        const std::size_t q = lm.dims.size();
        for (std::size_t i = 0; i < q; ++i) {
            std::vector<double> x, y;
            for (const auto& sub : data.subjects) {
                const double t = sub.event_time;
                x.push_back(lm.z2(t));
                y.push_back(sub.event_covariates[lm.dims[i]] - lm.alpha[i] * lm.z1(t));
            }
            const auto [mu_e, mu_b] = detail::regress(x, y);
            std::vector<double> x2, r2;
            for (std::size_t j = 0; j < x.size(); ++j) {
                const double r = y[j] - mu_e - mu_b * x[j];
                x2.push_back(x[j] * x[j]);
                r2.push_back(r * r);
            }
            const auto [v_e, v_b] = detail::regress(x2, r2);
            s.a[i] = mu_e;
            s.a[q + i] = mu_b;
            s.a[2 * q + i] = std::clamp(v_e, 0.05, 20.0);
            s.a[3 * q + i] = std::clamp(v_b, 0.05, 20.0);
        }
    }
    s.b.assign(spec.p, 0.0);
    s.b_c.assign(spec.p, 0.0);
    double exposure = 0.0, events = 0.0, jumps = 0.0;
    for (const auto& sub : data.subjects) {
        exposure += sub.event_time;
        if (sub.event_time < data.censor_bound * (1.0 - 1e-9)) events += 1.0;
        if (spec.counting_index) jumps += std::max(0.0, sub.event_covariates[*spec.counting_index]);
    }
    exposure = std::max(exposure, 1e-6);
    const double rate = std::max(events, 0.5) / exposure;
    const double rate_c = std::max(jumps, 0.5) / exposure;
    if (layout.hazards_free()) {
        s.lambda0 = StepHazard(std::vector<double>(layout.pieces(), rate), layout.piece_dt());
        s.lambda0_c = layout.counting() ? Hazard(StepHazard(std::vector<double>(layout.pieces(), rate_c),
                                                            layout.piece_dt()))
                                        : Hazard(constant_hazard(0.0));
    } else {
        s.lambda0 = constant_hazard(rate);
        s.lambda0_c = constant_hazard(spec.counting_index ? rate_c : 0.0);
    }
    return s;
}

namespace detail {

struct Box {
    std::vector<double> lo, hi, step;
};

inline Box make_box(const ParamLayout& layout, const EstimatorOptions& opt) {
    Box box;
    const auto& names = layout.names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        const std::string& nm = names[i];
        double lo, hi, step;
        const bool theta = nm.rfind("theta", 0) == 0;
        if (theta) {
            lo = opt.theta_lo, hi = opt.theta_hi, step = 0.3;
        } else if (layout.log_scale(i)) {
            lo = opt.var_lo, hi = opt.var_hi, step = 0.4;
        } else if (nm.rfind("b", 0) == 0) {
            lo = -opt.coef_bound, hi = opt.coef_bound, step = 0.5;
        } else {
            lo = -opt.mean_bound, hi = opt.mean_bound, step = 0.5;
        }
        if (auto it = opt.bounds.find(nm); it != opt.bounds.end()) std::tie(lo, hi) = it->second;
        if (!(lo <= hi)) throw ConfigError("bounds." + nm, "lower bound exceeds upper bound");
        if (layout.log_scale(i)) {
            if (!(lo > 0.0)) throw ConfigError("bounds." + nm, "bounds of a positive parameter must be > 0");
            lo = std::log(lo);
            hi = std::log(hi);
        }
        box.lo.push_back(lo);
        box.hi.push_back(hi);
        box.step.push_back(step);
    }
    return box;
}

struct RestartOutcome {
    std::vector<double> x;
    double value = -std::numeric_limits<double>::infinity();
    std::vector<TraceEntry> trace;
    std::size_t evals = 0;
};

inline RestartOutcome run_restart(const SetupObjective& f, const ParamLayout& layout, const ModelSetup& base,
                                  const Box& box, std::vector<double> x, std::uint64_t seed, std::size_t restart,
                                  const EstimatorOptions& opt) {
    RestartOutcome out;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], box.lo[i], box.hi[i]);
    auto value_at = [&](std::span<const double> v) { return f(layout.decode(v, base), seed); };
    double fx;
    try {
        fx = value_at(x);
    } catch (const Error&) {
        fx = -std::numeric_limits<double>::infinity();
    }
    if (std::isnan(fx)) fx = -std::numeric_limits<double>::infinity();
    out.evals = 1;
    out.trace.push_back({restart, 0, "start", 1, fx});
    std::vector<double> lo(x.size()), hi(x.size());
    for (std::size_t sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
        const double before = fx;
        for (const auto& blk : layout.blocks()) {
            if (!opt.free_blocks.empty() &&
                std::find(opt.free_blocks.begin(), opt.free_blocks.end(), blk.name) == opt.free_blocks.end())
                continue;
            for (std::size_t i = 0; i < x.size(); ++i) {
                const bool inside = i >= blk.begin && i < blk.end;
                lo[i] = inside ? box.lo[i] : x[i];
                hi[i] = inside ? box.hi[i] : x[i];
            }
            NelderMeadOptions nm;
            nm.max_evals = opt.block_evals ? opt.block_evals : 15 * (blk.size() + 1);
            nm.tol_f = opt.tol_f;
            auto r = nelder_mead_max(value_at, x, lo, hi, box.step, nm);
            out.evals += r.evals;
            if (r.f > fx) {
                fx = r.f;
                x = std::move(r.x);
            }
            out.trace.push_back({restart, sweep, blk.name, out.evals, fx});
        }
        if (std::isfinite(fx) && fx - before < opt.tol_f) break;
    }
    out.x = std::move(x);
    out.value = fx;
    return out;
}

inline std::uint64_t restart_seed(std::uint64_t seed, std::size_t r) {
    return r == 0 ? seed : derive_seed(seed, 0x5245u, r);
}

}  // namespace detail

/// Maximizes a setup objective by cycling Nelder-Mead over the parameter
/// blocks.  Each restart holds its own simulation seed fixed; restart 0 uses
/// options.seed and starts at the initial setup, later restarts start from
/// a jittered copy.  The winner is chosen by its value under options.seed.
inline EstimationResult maximize_objective(const SetupObjective& f, const LongitudinalSpec& spec,
                                           const ObservedDataset& data, const TuningSchedule& schedule,
                                           const EstimatorOptions& opt) {
    if (opt.restarts < 1) throw ConfigError("restarts", "must be >= 1");
    if (!opt.estimate_hazards && !opt.start)
        throw ConfigError("start", "fixed baselines require a starting setup");
    const ParamLayout layout(spec, data.censor_bound, schedule.dt, opt.max_hazard_pieces, opt.estimate_hazards);
    const ModelSetup base = opt.start ? *opt.start : initial_setup(spec, data, layout);
    const auto box = detail::make_box(layout, opt);
    const auto x0 = layout.encode(base);

    std::vector<detail::RestartOutcome> outcomes(opt.restarts);
    std::vector<double> scores(opt.restarts, -std::numeric_limits<double>::infinity());
    parallel_for(opt.restarts, [&](std::size_t r) {
        std::vector<double> start = x0;
        if (r > 0) {
            StreamRng rng(opt.seed, r, StreamPurpose::data, 0x4a17u);
            for (std::size_t i = 0; i < start.size(); ++i)
                if (box.hi[i] > box.lo[i]) start[i] += opt.jitter * box.step[i] * rng.normal();
        }
        outcomes[r] = detail::run_restart(f, layout, base, box, start, detail::restart_seed(opt.seed, r), r, opt);
        if (r == 0) {
            scores[r] = outcomes[r].value;
        } else {
            try {
                scores[r] = f(layout.decode(outcomes[r].x, base), opt.seed);
            } catch (const Error&) {
            }
            if (std::isnan(scores[r])) scores[r] = -std::numeric_limits<double>::infinity();
        }
    });

    std::size_t best = 0;
    for (std::size_t r = 1; r < opt.restarts; ++r)
        if (scores[r] > scores[best]) best = r;

    EstimationResult res;
    for (const auto& o : outcomes) {
        res.objective_trace.insert(res.objective_trace.end(), o.trace.begin(), o.trace.end());
        res.evaluations += o.evals;
    }
    if (!std::isfinite(scores[best])) {
        std::vector<double> trace;
        for (const auto& t : res.objective_trace) trace.push_back(t.value);
        throw NonConvergence("optimizer never reached a finite objective value", std::move(trace));
    }
    res.setup_hat = layout.decode(outcomes[best].x, base);
    res.names = layout.names();
    res.estimate = layout.natural(outcomes[best].x);
    res.objective_value = scores[best];
    res.seed = opt.seed;
    res.schedule = schedule;
    res.hazard_dt = layout.piece_dt();
    return res;
}

/// Maximum simulated likelihood estimate.
inline EstimationResult maximize(const ObservedDataset& data, const LongitudinalSpec& spec,
                                 const TuningSchedule& schedule, LikelihoodMode mode,
                                 const EstimatorOptions& opt = {}) {
    data.validate();
    const Objective obj(spec, data, schedule, mode, opt.partition);
    auto res = maximize_objective([&](const ModelSetup& s, std::uint64_t seed) { return obj(s, seed); }, spec,
                                  data, schedule, opt);
    res.mode = mode;
    return res;
}

// ---------------------------------------------------------------------------
// Adaptive LASSO
// ---------------------------------------------------------------------------

struct LassoOptions {
    std::vector<double> gammas{0.0, 0.01, 0.03, 0.1};
    double holdout_fraction = 1.0 / 3.0;
    double zero_threshold = 1e-3;
    std::uint64_t split_seed = 7;
    bool coefficients_only = true;  // penalized fits hold a and the baselines at the pilot
};

struct LassoPathPoint {
    double gamma = 0.0;
    double holdout_score = 0.0;
    std::vector<double> b, b_c;
};

struct LassoResult {
    EstimationResult fit;  // refit on all subjects at the chosen gamma
    double gamma = 0.0;
    std::vector<LassoPathPoint> path;
    std::vector<double> weights, weights_c;
};

namespace detail {

inline ObservedDataset subset(const ObservedDataset& data, const std::vector<std::size_t>& idx) {
    ObservedDataset out = data;
    out.subjects.clear();
    for (auto i : idx) out.subjects.push_back(data.subjects[i]);
    return out;
}

inline double l1_penalty(const ModelSetup& s, const std::vector<double>& w, const std::vector<double>& wc) {
    double pen = 0.0;
    for (std::size_t k = 0; k < s.b.size(); ++k) pen += w[k] * std::abs(s.b[k]);
    for (std::size_t k = 0; k < wc.size() && k < s.b_c.size(); ++k) pen += wc[k] * std::abs(s.b_c[k]);
    return pen;
}

/// Penalized fit plus a sweep that tries setting each coefficient to exactly
/// zero, keeping the zero whenever the penalized value does not drop.
inline EstimationResult penalized_fit(const Objective& obj, double gamma, const std::vector<double>& w,
                                      const std::vector<double>& wc, const EstimatorOptions& opt) {
    const double scale = obj.per_subject_scale();
    SetupObjective f = [&](const ModelSetup& s, std::uint64_t seed) {
        return scale * obj(s, seed) - gamma * l1_penalty(s, w, wc);
    };
    auto res = maximize_objective(f, obj.spec(), obj.data(), obj.schedule(), opt);
    if (gamma > 0.0) {
        ModelSetup cur = res.setup_hat;
        double val = res.objective_value;
        for (int which = 0; which < 2; ++which) {
            auto& coef = which == 0 ? cur.b : cur.b_c;
            const std::size_t count = which == 0 ? coef.size() : std::min(coef.size(), wc.size());
            for (std::size_t k = 0; k < count; ++k) {
                if (coef[k] == 0.0) continue;
                const double keep = coef[k];
                coef[k] = 0.0;
                double v;
                try {
                    v = f(cur, opt.seed);
                } catch (const Error&) {
                    v = -std::numeric_limits<double>::infinity();
                }
                if (v >= val) {
                    val = v;
                } else {
                    coef[k] = keep;
                }
            }
        }
        const ParamLayout layout(obj.spec(), obj.data().censor_bound, obj.schedule().dt, opt.max_hazard_pieces,
                                 opt.estimate_hazards);
        res.setup_hat = cur;
        res.estimate = layout.natural(layout.encode(cur));
        res.objective_value = val;
    }
    res.penalty = gamma;
    return res;
}

}  // namespace detail

/// Adaptive LASSO: weights 1/|pilot coefficient|, gamma chosen by the
/// unpenalized per-subject objective on a held-out subject split, then a
/// refit on all subjects.  The result's `selected` mask flags coefficients
/// with |value| >= zero_threshold.
inline LassoResult adaptive_lasso(const ObservedDataset& data, const LongitudinalSpec& spec,
                                  const TuningSchedule& schedule, LikelihoodMode mode, const EstimatorOptions& opt,
                                  const EstimationResult& pilot, const LassoOptions& lasso) {
    if (lasso.gammas.empty()) throw ConfigError("lasso.gammas", "penalty grid is empty");
    for (double g : lasso.gammas)
        if (!(g >= 0.0)) throw ConfigError("lasso.gammas", "penalties must be >= 0");
    data.validate();
    LassoResult out;
    const auto& pb = pilot.setup_hat.b;
    const auto& pbc = pilot.setup_hat.b_c;
    for (double v : pb) out.weights.push_back(1.0 / std::max(std::abs(v), 1e-3));
    if (spec.counting_index)
        for (double v : pbc) out.weights_c.push_back(1.0 / std::max(std::abs(v), 1e-3));

    EstimatorOptions warm = opt;
    warm.start = pilot.setup_hat;
    warm.restarts = 1;
    if (lasso.coefficients_only) warm.free_blocks = {"b", "b_c"};

    std::vector<std::size_t> perm(data.size());
    std::iota(perm.begin(), perm.end(), 0);
    {
        StreamRng rng(lasso.split_seed, 0, StreamPurpose::data, 0x5b17u);
        for (std::size_t i = perm.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
            std::swap(perm[i - 1], perm[std::min(j, i - 1)]);
        }
    }
    const auto n_test = static_cast<std::size_t>(std::floor(lasso.holdout_fraction * static_cast<double>(data.size())));
    std::optional<std::size_t> chosen;
    if (lasso.gammas.size() > 1 && n_test >= 1 && data.size() - n_test >= 2) {
        std::vector<std::size_t> test_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
        std::vector<std::size_t> train_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
        std::sort(test_idx.begin(), test_idx.end());
        std::sort(train_idx.begin(), train_idx.end());
        const auto train = detail::subset(data, train_idx);
        const auto test = detail::subset(data, test_idx);
        const Objective train_obj(spec, train, schedule, mode, opt.partition);
        const Objective test_obj(spec, test, schedule, mode, opt.partition);
        out.path.resize(lasso.gammas.size());
        parallel_for(lasso.gammas.size(), [&](std::size_t g) {
            auto fit = detail::penalized_fit(train_obj, lasso.gammas[g], out.weights, out.weights_c, warm);
            double score = -std::numeric_limits<double>::infinity();
            try {
                score = test_obj.per_subject_scale() * test_obj(fit.setup_hat, opt.seed);
            } catch (const Error&) {
            }
            out.path[g] = {lasso.gammas[g], score, fit.setup_hat.b, fit.setup_hat.b_c};
        });
        std::size_t best = 0;
        for (std::size_t g = 1; g < out.path.size(); ++g)
            if (out.path[g].holdout_score > out.path[best].holdout_score) best = g;
        chosen = best;
    } else {
        chosen = 0;
        out.path.push_back({lasso.gammas[0], 0.0, {}, {}});
    }
    out.gamma = lasso.gammas[*chosen];
    const Objective full(spec, data, schedule, mode, opt.partition);
    out.fit = detail::penalized_fit(full, out.gamma, out.weights, out.weights_c, warm);
    out.fit.mode = mode;
    out.fit.selected.clear();
    for (double v : out.fit.setup_hat.b) out.fit.selected.push_back(std::abs(v) >= lasso.zero_threshold);
    if (spec.counting_index)
        for (double v : out.fit.setup_hat.b_c) out.fit.selected.push_back(std::abs(v) >= lasso.zero_threshold);
    return out;
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

/// Inverse of the empirical distribution function: the ceil(n*q)-th order
/// statistic (at least the first).
inline double quantile_type1(std::vector<double> v, double q) {
    if (v.empty()) throw ContractViolation("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    const double pos = std::ceil(q * static_cast<double>(v.size()) - 1e-12);
    const auto k = static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(v.size())));
    return v[k - 1];
}

struct Band {
    std::vector<double> t, estimate, lo, hi;
};

struct BootstrapOptions {
    std::size_t reps = 30;
    double level = 0.95;
    std::uint64_t seed = 11;
    std::vector<double> grid;     // cumulative-hazard band times; default: 50 points on [0, C]
    bool include_point = false;   // add the point estimate as an extra replicate
    std::size_t restarts = 1;
};

struct BootstrapResult {
    std::vector<std::string> names;
    std::vector<Interval> intervals;  // percentile intervals, natural units
    std::vector<double> se;           // replicate standard deviations
    Band cum_hazard, cum_hazard_c;
    std::size_t reps_ok = 0;
    std::size_t reps_failed = 0;
    std::vector<std::vector<double>> replicates;
};

namespace detail {

inline Band percentile_band(const std::vector<double>& grid, const std::vector<const Hazard*>& curves,
                            const Hazard& point, double level) {
    Band b;
    b.t = grid;
    for (double t : grid) {
        std::vector<double> v;
        for (const auto* c : curves) v.push_back(c->cumulative(t));
        b.estimate.push_back(point.cumulative(t));
        b.lo.push_back(quantile_type1(v, (1.0 - level) / 2.0));
        b.hi.push_back(quantile_type1(v, 1.0 - (1.0 - level) / 2.0));
    }
    return b;
}

inline double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

/// Nonparametric bootstrap over subjects.  Each replicate re-estimates from
/// the point estimate; failed replicates are dropped and counted.
inline BootstrapResult bootstrap_bands(const ObservedDataset& data, const LongitudinalSpec& spec,
                                       const TuningSchedule& schedule, LikelihoodMode mode,
                                       const EstimatorOptions& opt, const EstimationResult& point,
                                       const BootstrapOptions& bopt) {
    if (bopt.reps < 2) throw ConfigError("bootstrap.reps", "need at least 2 replicates");
    if (!(bopt.level > 0.0 && bopt.level < 1.0)) throw ConfigError("bootstrap.level", "must lie in (0, 1)");
    std::vector<std::optional<EstimationResult>> fits(bopt.reps);
    parallel_for(bopt.reps, [&](std::size_t r) {
        ObservedDataset boot = data;
        boot.subjects.clear();
        StreamRng rng(bopt.seed, r, StreamPurpose::data, 0xb007u);
        for (std::size_t i = 0; i < data.size(); ++i) {
            auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(data.size()));
            j = std::min(j, data.size() - 1);
            Subject s = data.subjects[j];
            s.id += "#" + std::to_string(i);
            boot.subjects.push_back(std::move(s));
        }
        EstimatorOptions o = opt;
        o.start = point.setup_hat;
        o.restarts = bopt.restarts;
        o.seed = derive_seed(bopt.seed, 0xb0u, r);
        try {
            fits[r] = maximize(boot, spec, schedule, mode, o);
        } catch (const Error&) {
        }
    });

    BootstrapResult out;
    out.names = point.names;
    std::vector<const Hazard*> curves, curves_c;
    for (const auto& f : fits) {
        if (!f || f->estimate.size() != point.estimate.size()) {
            ++out.reps_failed;
            continue;
        }
        ++out.reps_ok;
        out.replicates.push_back(f->estimate);
        curves.push_back(&f->setup_hat.lambda0);
        curves_c.push_back(&f->setup_hat.lambda0_c);
    }
    if (bopt.include_point) {
        out.replicates.push_back(point.estimate);
        curves.push_back(&point.setup_hat.lambda0);
        curves_c.push_back(&point.setup_hat.lambda0_c);
    }
    if (out.replicates.size() < 2)
        throw NonConvergence("bootstrap: fewer than two replicates succeeded", {});
    const double a = (1.0 - bopt.level) / 2.0;
    for (std::size_t i = 0; i < point.estimate.size(); ++i) {
        std::vector<double> v;
        for (const auto& r : out.replicates) v.push_back(r[i]);
        out.intervals.push_back({quantile_type1(v, a), quantile_type1(v, 1.0 - a)});
        out.se.push_back(detail::sample_sd(v));
    }
    std::vector<double> grid = bopt.grid;
    if (grid.empty())
        for (int i = 0; i <= 50; ++i) grid.push_back(data.censor_bound * i / 50.0);
    out.cum_hazard = detail::percentile_band(grid, curves, point.setup_hat.lambda0, bopt.level);
    out.cum_hazard_c = detail::percentile_band(grid, curves_c, point.setup_hat.lambda0_c, bopt.level);
    return out;
}

/// Copies bootstrap intervals and standard errors into an estimation
/// result, widening each interval to contain the point estimate.
inline void attach_intervals(EstimationResult& res, const BootstrapResult& boot) {
    res.ci95 = boot.intervals;
    res.se = boot.se;
    for (std::size_t i = 0; i < res.ci95.size() && i < res.estimate.size(); ++i) {
        res.ci95[i].lo = std::min(res.ci95[i].lo, res.estimate[i]);
        res.ci95[i].hi = std::max(res.ci95[i].hi, res.estimate[i]);
    }
}

}  // namespace jmsim
