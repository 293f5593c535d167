#pragma once

// Path-wise simulation of the longitudinal process and of (W_S, S) samples.
//
// Every trajectory j draws from its own counter-based streams addressed by
// (seed, j, purpose, index), so the output for a given seed does not depend
// on how trajectories are scheduled across threads.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jmsim/errors.hpp"
#include "jmsim/model.hpp"
#include "jmsim/parallel.hpp"
#include "jmsim/rng.hpp"

namespace jmsim {

/// One draw of (W_S, S).  `snapshots[i]` is the state at the i-th requested
/// snapshot time, present only for snapshot times the trajectory reached.
struct SimulatedSample {
    std::vector<double> w;
    double s = 0.0;
    bool censored = false;
    std::vector<std::vector<double>> snapshots;
};

struct SampleSet {
    std::vector<SimulatedSample> samples;
    std::vector<double> snapshot_times;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
};

/// values(k, j) is the state of trajectory j at time t0[j] + k*dt.
class TrajectoryGrid {
public:
    TrajectoryGrid(double dt, std::size_t p, std::size_t n_traj, std::size_t n_steps)
        : dt_(dt), p_(p), n_traj_(n_traj), n_steps_(n_steps),
          data_((n_steps + 1) * n_traj * p, 0.0), t0_(n_traj, 0.0), jumps_(n_traj) {}

    double dt() const noexcept { return dt_; }
    std::size_t p() const noexcept { return p_; }
    std::size_t trajectories() const noexcept { return n_traj_; }
    std::size_t steps() const noexcept { return n_steps_; }

    std::span<const double> values(std::size_t k, std::size_t j) const {
        return {data_.data() + (k * n_traj_ + j) * p_, p_};
    }
    std::span<double> values(std::size_t k, std::size_t j) {
        return {data_.data() + (k * n_traj_ + j) * p_, p_};
    }

    double t0(std::size_t j) const { return t0_[j]; }
    double time(std::size_t k, std::size_t j) const { return t0_[j] + static_cast<double>(k) * dt_; }

    /// Grid indices at which the counting coordinate jumped, increasing.
    const std::vector<std::size_t>& jumps(std::size_t j) const { return jumps_[j]; }
    /// Index of the last counting jump (0 if none).
    std::size_t jump_t(std::size_t j) const { return jumps_[j].empty() ? 0 : jumps_[j].back(); }

private:
    friend struct GridWriter;
    double dt_;
    std::size_t p_;
    std::size_t n_traj_;
    std::size_t n_steps_;
    std::vector<double> data_;
    std::vector<double> t0_;
    std::vector<std::vector<std::size_t>> jumps_;
};

struct GridWriter {
    static std::vector<double>& t0(TrajectoryGrid& g) { return g.t0_; }
    static std::vector<std::vector<std::size_t>>& jumps(TrajectoryGrid& g) { return g.jumps_; }
};

namespace detail {

/// Per-run values of the configuration functions and baselines on the
/// absolute grid k*dt, shared by every trajectory whose clock starts at 0.
struct GridCache {
    std::vector<double> z1, z2, lam, lam_c;
};

inline GridCache make_grid_cache(const LongitudinalSpec& spec, const ModelSetup* setup, double dt,
                                 std::size_t n_steps) {
    GridCache c;
    if (spec.linear_mixed) {
        c.z1.resize(n_steps + 1);
        c.z2.resize(n_steps + 1);
        for (std::size_t k = 0; k <= n_steps; ++k) {
            const double t = static_cast<double>(k) * dt;
            c.z1[k] = spec.linear_mixed->z1(t);
            c.z2[k] = spec.linear_mixed->z2(t);
        }
    }
    if (setup) {
        c.lam.resize(n_steps + 1);
        c.lam_c.resize(n_steps + 1);
        for (std::size_t k = 0; k <= n_steps; ++k) {
            const double t = static_cast<double>(k) * dt;
            c.lam[k] = setup->lambda0(t);
            c.lam_c[k] = setup->lambda0_c(t);
        }
    }
    return c;
}

/// Evolves the continuous coordinates of one trajectory with the counting
/// coordinate frozen.  Linear-mixed coordinates follow the exact increment
/// alpha*dZ1 + beta*dZ2 measured from the last restart; drift coordinates
/// follow z <- z + eps*dt with eps drawn from the conditional sampler.
class PathEngine {
public:
    PathEngine(const LongitudinalSpec& spec, std::uint64_t seed, double dt, const GridCache* cache)
        : spec_(spec), seed_(seed), dt_(dt), cache_(cache), z_(spec.p, 0.0) {
        if (spec_.linear_mixed) {
            const std::size_t q = spec_.linear_mixed->dims.size();
            beta_.resize(q);
            anchor_.resize(q);
        }
        if (spec_.drift) eps_.resize(spec_.drift->dims.size());
    }

    /// Draws the random effect and the initial state of trajectory j.
    /// `initial_row`, when given, replaces the draw from F_0.
    void init(std::size_t j, double t0, const std::vector<double>* initial_row) {
        j_ = j;
        t0_ = t0;
        std::fill(z_.begin(), z_.end(), 0.0);
        StreamRng rng(seed_, j, StreamPurpose::initial);
        if (spec_.linear_mixed) {
            const auto& lm = *spec_.linear_mixed;
            const std::size_t q = lm.dims.size();
            std::vector<double> e(q);
            for (std::size_t i = 0; i < q; ++i) e[i] = lm.error.mean[i] + std::sqrt(lm.error.var[i]) * rng.normal();
            for (std::size_t i = 0; i < q; ++i)
                beta_[i] = lm.effect.mean[i] + std::sqrt(lm.effect.var[i]) * rng.normal();
            for (std::size_t i = 0; i < q; ++i)
                z_[lm.dims[i]] = lm.alpha[i] * z1_at(0) + beta_[i] * z2_at(0) + e[i];
        }
        const bool from_samples = !spec_.initial_samples.empty();
        for (std::size_t d = 0; d < spec_.p; ++d) {
            if (!owned_by_initial(d)) continue;
            if (from_samples) {
                z_[d] = spec_.initial_samples[j % spec_.initial_samples.size()][d];
            } else {
                z_[d] = spec_.initial.mean[d] + std::sqrt(spec_.initial.var[d]) * rng.normal();
            }
        }
        if (spec_.counting_index) z_[*spec_.counting_index] = 0.0;
        if (initial_row) {
            if (initial_row->size() != spec_.p) throw ContractViolation("initial sample rows must have p entries");
            z_ = *initial_row;
        }
        restart(0);
    }

    /// Moves the state from grid index k-1 to k.
    void step(std::size_t k) {
        if (spec_.drift) {
            const auto& dr = *spec_.drift;
            StreamRng rng(seed_, j_, StreamPurpose::drift, static_cast<std::uint32_t>(k));
            dr.sampler(z_, time(k - 1), dr.params, rng, eps_);
            for (std::size_t i = 0; i < dr.dims.size(); ++i) {
                double& zd = z_[dr.dims[i]];
                zd += eps_[i] * dt_;
                if (!std::isfinite(zd)) throw SimulationError(j_, "drift sampler produced a non-finite state");
            }
        }
        if (spec_.linear_mixed) {
            const auto& lm = *spec_.linear_mixed;
            const double d1 = z1_at(k) - anchor_z1_;
            const double d2 = z2_at(k) - anchor_z2_;
            for (std::size_t i = 0; i < lm.dims.size(); ++i)
                z_[lm.dims[i]] = anchor_[i] + lm.alpha[i] * d1 + beta_[i] * d2;
        }
    }

    /// Re-anchors the linear-mixed increments at grid index k.
    void restart(std::size_t k) {
        if (!spec_.linear_mixed) return;
        const auto& lm = *spec_.linear_mixed;
        for (std::size_t i = 0; i < lm.dims.size(); ++i) anchor_[i] = z_[lm.dims[i]];
        anchor_z1_ = z1_at(k);
        anchor_z2_ = z2_at(k);
    }

    std::vector<double>& state() { return z_; }
    const std::vector<double>& state() const { return z_; }
    double time(std::size_t k) const { return t0_ + static_cast<double>(k) * dt_; }

private:
    bool owned_by_initial(std::size_t d) const {
        if (spec_.drift)
            for (auto x : spec_.drift->dims)
                if (x == d) return true;
        for (auto x : spec_.static_dims)
            if (x == d) return true;
        return false;
    }
    double z1_at(std::size_t k) const {
        if (cache_ && t0_ == 0.0 && k < cache_->z1.size()) return cache_->z1[k];
        return spec_.linear_mixed->z1(time(k));
    }
    double z2_at(std::size_t k) const {
        if (cache_ && t0_ == 0.0 && k < cache_->z2.size()) return cache_->z2[k];
        return spec_.linear_mixed->z2(time(k));
    }

    const LongitudinalSpec& spec_;
    std::uint64_t seed_;
    double dt_;
    const GridCache* cache_;
    std::size_t j_ = 0;
    double t0_ = 0.0;
    std::vector<double> z_;
    std::vector<double> beta_;
    std::vector<double> anchor_;
    double anchor_z1_ = 0.0;
    double anchor_z2_ = 0.0;
    std::vector<double> eps_;
};

inline void check_run_args(double dt, std::size_t n) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt", "step length must be positive");
    if (n < 1) throw ConfigError("N", "sample size must be >= 1");
}

/// Observer for the jump/terminal race.  on_state(k, z) sees the state at
/// every grid index the trajectory reaches (after any jump at k).
struct RaceResult {
    std::size_t end_index = 0;  // terminal index, or last simulated index
    bool terminal = false;
    std::vector<std::size_t> jumps;
};

/// The inverse-transform race of one trajectory from index 0 to n_steps.
/// Round r draws (omega, omega') from the round stream at index r; the
/// counting jump happens at the first k with exp(-H_c(k)) <= omega and the
/// terminal event at the first k with exp(-H(k)) <= omega', where the
/// cumulative hazards restart from zero after each jump.  A terminal event
/// wins if it is reached at an earlier index than the jump, or at the same
/// index with an earlier crossing inside the step.
template <class OnState>
RaceResult run_race(PathEngine& path, const LongitudinalSpec& spec, const ModelSetup& setup,
                    const GridCache& cache, double dt, std::size_t n_steps, std::uint64_t seed,
                    std::size_t j, bool terminal_enabled, OnState&& on_state) {
    RaceResult res;
    const bool counting = spec.counting_index.has_value();
    const std::size_t ci = counting ? *spec.counting_index : 0;
    std::uint32_t round = 0;
    double thr_jump = 0.0, thr_term = 0.0;
    auto draw_round = [&] {
        StreamRng rng(seed, j, StreamPurpose::round, round++);
        thr_jump = -std::log(rng.uniform());
        thr_term = -std::log(rng.uniform());
    };
    draw_round();
    double h_jump = 0.0, h_term = 0.0;
    on_state(std::size_t{0}, path.state());
    for (std::size_t k = 1; k <= n_steps; ++k) {
        path.step(k);
        auto& z = path.state();
        bool jump_hit = false;
        double jump_frac = 0.0;
        if (counting) {
            const double inc = std::exp(dot(setup.b_c, z)) * cache.lam_c[k] * dt;
            if (std::isnan(inc)) throw SimulationError(j, "non-finite counting intensity");
            jump_frac = (thr_jump - h_jump) / inc;
            h_jump += inc;
            jump_hit = h_jump >= thr_jump;
        }
        bool term_hit = false;
        double term_frac = 0.0;
        if (terminal_enabled) {
            const double inc = std::exp(dot(setup.b, z)) * cache.lam[k] * dt;
            if (std::isnan(inc)) throw SimulationError(j, "non-finite terminal hazard");
            term_frac = (thr_term - h_term) / inc;
            h_term += inc;
            term_hit = h_term >= thr_term;
        }
        // Both crossed within the same step: the cumulative hazards are
        // interpolated linearly across the step and the earlier crossing wins.
        if (term_hit && jump_hit && term_frac < jump_frac) jump_hit = false;
        if (term_hit && !jump_hit) {
            on_state(k, z);
            res.end_index = k;
            res.terminal = true;
            return res;
        }
        if (jump_hit) {
            z[ci] += 1.0;
            res.jumps.push_back(k);
            path.restart(k);
            h_jump = 0.0;
            h_term = 0.0;
            draw_round();
        }
        on_state(k, z);
    }
    res.end_index = n_steps;
    return res;
}

inline TrajectoryGrid continuous_grid(const LongitudinalSpec& spec, std::span<const double> t0, double dt,
                                      std::size_t n_steps, std::size_t n, std::uint64_t seed,
                                      const std::vector<std::vector<double>>* initial) {
    check_run_args(dt, n);
    spec.validate();
    if (!t0.empty() && t0.size() != n) throw ContractViolation("initial-time vector must have N entries");
    if (initial && initial->empty()) initial = nullptr;
    TrajectoryGrid grid(dt, spec.p, n, n_steps);
    auto& clocks = GridWriter::t0(grid);
    for (std::size_t j = 0; j < n; ++j) clocks[j] = t0.empty() ? 0.0 : t0[j];
    const GridCache cache = make_grid_cache(spec, nullptr, dt, n_steps);
    parallel_for(n, [&](std::size_t j) {
        PathEngine path(spec, seed, dt, &cache);
        path.init(j, clocks[j], initial ? &(*initial)[j % initial->size()] : nullptr);
        auto out0 = grid.values(0, j);
        std::copy(path.state().begin(), path.state().end(), out0.begin());
        for (std::size_t k = 1; k <= n_steps; ++k) {
            path.step(k);
            auto out = grid.values(k, j);
            std::copy(path.state().begin(), path.state().end(), out.begin());
        }
    });
    return grid;
}

}  // namespace detail

/// Simulatible sequence for the linear mixed model alpha*Z1 + beta*Z2 + e.
/// Trajectory j holds one beta draw across all steps; its clock starts at
/// t0[j] (all zero when t0 is empty).
inline TrajectoryGrid gen_sim_linear_mixed(const LongitudinalSpec& spec, std::span<const double> t0, double dt,
                                           std::size_t n_steps, std::size_t n, std::uint64_t seed) {
    if (!spec.linear_mixed) throw ConfigError("linear_mixed", "gen_sim_linear_mixed needs a linear-mixed part");
    return detail::continuous_grid(spec, t0, dt, n_steps, n, seed, nullptr);
}

/// Euler-type simulatible sequence for a Markovian drift.  `initial`, when
/// non-empty, is the sample set S_N of starting states (row j % size).
inline TrajectoryGrid gen_sim_euler(const LongitudinalSpec& spec, const std::vector<std::vector<double>>& initial,
                                    std::span<const double> t0, double dt, std::size_t n_steps, std::size_t n,
                                    std::uint64_t seed) {
    if (!spec.drift) throw ConfigError("drift", "gen_sim_euler needs a drift part");
    return detail::continuous_grid(spec, t0, dt, n_steps, n, seed, &initial);
}

/// Longitudinal process with one counting coordinate.  Between jumps the
/// continuous coordinates evolve with the count frozen; jumps follow the
/// inverse-transform rule on the discretized survival of the jump intensity.
inline TrajectoryGrid gen_sim_counting(const ModelSetup& setup, const LongitudinalSpec& base_spec, double dt,
                                       std::size_t n_steps, std::size_t n, std::uint64_t seed) {
    if (!base_spec.counting_index) throw ConfigError("counting_index", "gen_sim_counting needs a counting dimension");
    detail::check_run_args(dt, n);
    const LongitudinalSpec spec = base_spec.with_params(setup.a);
    spec.validate();
    setup.validate(spec.p);
    TrajectoryGrid grid(dt, spec.p, n, n_steps);
    auto& jumps = GridWriter::jumps(grid);
    const auto cache = detail::make_grid_cache(spec, &setup, dt, n_steps);
    parallel_for(n, [&](std::size_t j) {
        detail::PathEngine path(spec, seed, dt, &cache);
        path.init(j, 0.0, nullptr);
        auto res = detail::run_race(path, spec, setup, cache, dt, n_steps, seed, j, false,
                                    [&](std::size_t k, const std::vector<double>& z) {
                                        auto out = grid.values(k, j);
                                        std::copy(z.begin(), z.end(), out.begin());
                                    });
        jumps[j] = std::move(res.jumps);
    });
    return grid;
}

/// Options for gen_sim_joint beyond the core arguments.
struct JointSimOptions {
    double dt = 0.01;
    std::size_t n = 100;
    double censor_bound = 1.0;
    std::uint64_t seed = 0;
    std::vector<double> snapshot_times;  // states recorded for the censored pdf
};

inline std::size_t grid_index(double t, double dt) {
    return static_cast<std::size_t>(std::floor(t / dt + 1e-9));
}

/// N i.i.d. samples of (W_S, S): the state at the terminal event and its
/// time, or the state at C with s = C when no event occurs before C.
inline SampleSet gen_sim_joint(const ModelSetup& setup, const LongitudinalSpec& base_spec,
                               const JointSimOptions& opt) {
    if (!(opt.censor_bound > 0.0)) throw ConfigError("censor_bound", "must be positive");
    detail::check_run_args(opt.dt, opt.n);
    const LongitudinalSpec spec = base_spec.with_params(setup.a);
    spec.validate();
    setup.validate(spec.p);
    const std::size_t n_steps = grid_index(opt.censor_bound, opt.dt);
    const auto cache = detail::make_grid_cache(spec, &setup, opt.dt, n_steps);

    std::vector<std::size_t> snap_idx;
    for (double t : opt.snapshot_times) snap_idx.push_back(grid_index(t, opt.dt));

    SampleSet out;
    out.snapshot_times = opt.snapshot_times;
    out.samples.resize(opt.n);
    parallel_for(opt.n, [&](std::size_t j) {
        detail::PathEngine path(spec, opt.seed, opt.dt, &cache);
        path.init(j, 0.0, nullptr);
        SimulatedSample& smp = out.samples[j];
        smp.snapshots.assign(snap_idx.size(), {});
        auto res = detail::run_race(path, spec, setup, cache, opt.dt, n_steps, opt.seed, j, true,
                                    [&](std::size_t k, const std::vector<double>& z) {
                                        for (std::size_t i = 0; i < snap_idx.size(); ++i)
                                            if (snap_idx[i] == k) smp.snapshots[i] = z;
                                    });
        smp.w = path.state();
        if (res.terminal) {
            smp.s = static_cast<double>(res.end_index) * opt.dt;
            smp.censored = false;
        } else {
            smp.s = opt.censor_bound;
            smp.censored = true;
        }
    });
    return out;
}

inline SampleSet gen_sim_joint(const ModelSetup& setup, const LongitudinalSpec& spec, double dt, std::size_t n,
                               double censor_bound, std::uint64_t seed) {
    JointSimOptions opt;
    opt.dt = dt;
    opt.n = n;
    opt.censor_bound = censor_bound;
    opt.seed = seed;
    return gen_sim_joint(setup, spec, opt);
}

}  // namespace jmsim
