#pragma once

// Example-1 generator, replication metrics and the replication study.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jmsim/errors.hpp"
#include "jmsim/estimator.hpp"
#include "jmsim/model.hpp"
#include "jmsim/parallel.hpp"
#include "jmsim/rng.hpp"
#include "jmsim/simulator.hpp"

namespace jmsim {

/// Six linear-mixed coordinates with Z1 = 0, Z2(t) = t and standard normal
/// effect and error, plus a counting coordinate in the last slot.
struct Example1Truth {
    static constexpr std::size_t p = 7;
    static constexpr std::size_t counting_index = 6;
    static constexpr double censor_bound = 2.0;
    static constexpr double data_dt = 0.001;  // simulation step for generated data

    static std::vector<double> b() { return {1.0, -1.0, 0.3, 0.0, 0.0, 0.0, 1.0}; }
    static std::vector<double> b_c() { return {0.0, 0.0, 0.0, -1.0, 1.0, 0.6, 1.0}; }

    static ClosedFormHazard lambda0() { return exp_ratio_hazard(1.0, 1.0); }
    static ClosedFormHazard lambda0_c() { return exp_ratio_hazard(3.0, 0.5); }

    static LongitudinalSpec spec() {
        LongitudinalSpec s;
        s.p = p;
        s.counting_index = counting_index;
        LinearMixedPart lm;
        lm.dims = {0, 1, 2, 3, 4, 5};
        lm.alpha.assign(6, 0.0);
        lm.effect = {std::vector<double>(6, 0.0), std::vector<double>(6, 1.0)};
        lm.error = {std::vector<double>(6, 0.0), std::vector<double>(6, 1.0)};
        lm.z1 = [](double) { return 0.0; };
        lm.z2 = [](double t) { return t; };
        s.linear_mixed = std::move(lm);
        return s;
    }

    static ModelSetup setup() {
        ModelSetup m;
        m.a = spec().params();
        m.b = b();
        m.b_c = b_c();
        m.lambda0 = lambda0();
        m.lambda0_c = lambda0_c();
        return m;
    }
};

/// n subjects drawn from the Example-1 truth.  Only the event-time
/// covariates are kept; every longitudinal history is missing.
inline ObservedDataset gen_example1(std::size_t n, std::uint64_t seed,
                                    double censor_bound = Example1Truth::censor_bound,
                                    double dt = Example1Truth::data_dt) {
    if (n < 1) throw ContractViolation("gen_example1: n must be >= 1");
    const auto samples = gen_sim_joint(Example1Truth::setup(), Example1Truth::spec(), dt, n, censor_bound, seed);
    ObservedDataset data;
    data.p = Example1Truth::p;
    data.censor_bound = censor_bound;
    for (std::size_t d = 0; d < data.p; ++d) data.missing_set.push_back(d);
    for (std::size_t i = 0; i < n; ++i) {
        Subject s;
        s.id = std::to_string(i + 1);
        s.event_time = samples.samples[i].s;
        s.event_covariates = samples.samples[i].w;
        data.subjects.push_back(std::move(s));
    }
    return data;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct MetricRow {
    std::string name;
    double truth = 0.0;
    double bias = 0.0;
    double sse = 0.0;
    double cp = std::numeric_limits<double>::quiet_NaN();  // NaN when no intervals were supplied
};

/// bias = mean(estimate) - truth, SSE = sample standard deviation, CP =
/// fraction of intervals covering the truth.  `intervals` is either empty
/// or has one interval vector per estimate.
inline std::vector<MetricRow> metrics(const std::vector<std::vector<double>>& estimates,
                                      const std::vector<double>& truth,
                                      const std::vector<std::vector<Interval>>& intervals = {},
                                      const std::vector<std::string>& names = {}) {
    if (estimates.size() < 2) throw ContractViolation("metrics: need at least two estimates");
    if (!intervals.empty() && intervals.size() != estimates.size())
        throw ContractViolation("metrics: one interval set per estimate required");
    std::vector<MetricRow> rows(truth.size());
    const double r = static_cast<double>(estimates.size());
    for (std::size_t k = 0; k < truth.size(); ++k) {
        double mean = 0.0;
        for (const auto& e : estimates) mean += e.at(k);
        mean /= r;
        double ss = 0.0;
        for (const auto& e : estimates) ss += (e[k] - mean) * (e[k] - mean);
        rows[k].name = k < names.size() ? names[k] : std::to_string(k + 1);
        rows[k].truth = truth[k];
        rows[k].bias = mean - truth[k];
        rows[k].sse = std::sqrt(ss / (r - 1.0));
        if (!intervals.empty()) {
            double cover = 0.0;
            for (const auto& iv : intervals)
                if (iv.at(k).contains(truth[k])) cover += 1.0;
            rows[k].cp = cover / r;
        }
    }
    return rows;
}

struct CurvePoint {
    double t = 0.0;
    double estimate = 0.0;
    double truth = 0.0;
};

struct CumHazardError {
    double sup_error = 0.0;
    double l2_error = 0.0;  // trapezoid L2 norm of the difference over the grid
    std::vector<CurvePoint> curve;
};

/// Compares the cumulative hazards of `est` and `truth` on a grid.
inline CumHazardError cum_hazard_error(const Hazard& est, const Hazard& truth, const std::vector<double>& grid) {
    if (grid.empty()) throw ContractViolation("cum_hazard_error: empty grid");
    CumHazardError out;
    for (double t : grid) {
        if (!(t >= 0.0)) throw ContractViolation("cum_hazard_error: grid times must be >= 0");
        const CurvePoint pt{t, est.cumulative(t), truth.cumulative(t)};
        out.sup_error = std::max(out.sup_error, std::abs(pt.estimate - pt.truth));
        out.curve.push_back(pt);
    }
    double l2 = 0.0;
    for (std::size_t i = 1; i < out.curve.size(); ++i) {
        const double a = out.curve[i - 1].estimate - out.curve[i - 1].truth;
        const double b = out.curve[i].estimate - out.curve[i].truth;
        l2 += 0.5 * (a * a + b * b) * (out.curve[i].t - out.curve[i - 1].t);
    }
    out.l2_error = std::sqrt(l2);
    return out;
}

inline std::vector<double> uniform_grid(double lo, double hi, std::size_t points) {
    std::vector<double> g;
    for (std::size_t i = 0; i < points; ++i)
        g.push_back(points == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
    return g;
}

// ---------------------------------------------------------------------------
// Replication study
// ---------------------------------------------------------------------------

struct StudyOptions {
    std::size_t reps = 50;
    std::size_t n = 100;
    std::uint64_t seed = 2024;
    std::vector<std::uint64_t> replicate_seeds;  // overrides the derived data seeds when non-empty
    double censor_bound = Example1Truth::censor_bound;
    LikelihoodMode mode = LikelihoodMode::full;
    double sim_factor = 10.0;     // N = sim_factor * n
    double kernel_factor = 10.0;  // h = kernel_factor * n^(-1/2)
    EstimatorOptions estimator;
    std::size_t bootstrap_reps = 30;  // 0 disables coverage
    double hazard_horizon = 1.0;      // cumulative-hazard comparison on [0, horizon]
    std::string store_dir;            // per-replicate results, enables resume
};

struct ReplicateRecord {
    std::size_t index = 0;
    std::uint64_t data_seed = 0;
    bool ok = false;
    std::string error;
    std::vector<double> estimate;
    std::vector<Interval> intervals;
    double sup_error = 0.0, l2_error = 0.0;
    double sup_error_c = 0.0, l2_error_c = 0.0;
    double seconds = 0.0;
};

struct ReplicationReport {
    std::size_t reps = 0;
    std::size_t n = 0;
    std::size_t failed = 0;
    bool failure_flag = false;  // more than 10% of replicates failed
    std::size_t resumed = 0;
    std::vector<std::string> names;
    std::vector<MetricRow> rows;
    double mean_sup_error = 0.0, mean_l2_error = 0.0;
    double mean_sup_error_c = 0.0, mean_l2_error_c = 0.0;
    std::vector<ReplicateRecord> records;
    double wall_seconds = 0.0;
};

inline nlohmann::json to_json(const ReplicateRecord& r) {
    nlohmann::json j;
    j["index"] = r.index;
    j["data_seed"] = r.data_seed;
    j["ok"] = r.ok;
    j["error"] = r.error;
    j["estimate"] = r.estimate;
    auto iv = nlohmann::json::array();
    for (const auto& i : r.intervals) iv.push_back({i.lo, i.hi});
    j["intervals"] = iv;
    j["sup_error"] = r.sup_error;
    j["l2_error"] = r.l2_error;
    j["sup_error_c"] = r.sup_error_c;
    j["l2_error_c"] = r.l2_error_c;
    j["seconds"] = r.seconds;
    return j;
}

inline ReplicateRecord replicate_from_json(const nlohmann::json& j) {
    ReplicateRecord r;
    r.index = j.at("index").get<std::size_t>();
    r.data_seed = j.at("data_seed").get<std::uint64_t>();
    r.ok = j.at("ok").get<bool>();
    r.error = j.at("error").get<std::string>();
    r.estimate = j.at("estimate").get<std::vector<double>>();
    for (const auto& i : j.at("intervals")) r.intervals.push_back({i.at(0).get<double>(), i.at(1).get<double>()});
    r.sup_error = j.at("sup_error").get<double>();
    r.l2_error = j.at("l2_error").get<double>();
    r.sup_error_c = j.at("sup_error_c").get<double>();
    r.l2_error_c = j.at("l2_error_c").get<double>();
    r.seconds = j.value("seconds", 0.0);
    return r;
}

namespace detail {

inline std::filesystem::path replicate_path(const std::string& dir, std::size_t r) {
    return std::filesystem::path(dir) / ("replicate_" + std::to_string(r + 1) + ".json");
}

inline std::optional<ReplicateRecord> load_replicate(const std::string& dir, std::size_t r, std::uint64_t seed) {
    if (dir.empty()) return std::nullopt;
    const auto path = replicate_path(dir, r);
    std::ifstream in(path);
    if (!in) return std::nullopt;
    try {
        auto rec = replicate_from_json(nlohmann::json::parse(in));
        if (rec.index != r || rec.data_seed != seed) return std::nullopt;
        return rec;
    } catch (const std::exception&) {
        return std::nullopt;  // partial or foreign file: recompute
    }
}

inline void save_replicate(const std::string& dir, const ReplicateRecord& rec) {
    if (dir.empty()) return;
    const auto path = replicate_path(dir, rec.index);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write " + tmp);
        out << to_json(rec).dump() << '\n';
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Truth in the estimator's natural coordinates (step heights are the
/// truth averaged over each piece).
inline std::vector<double> example1_truth_vector(const ParamLayout& layout) {
    return layout.natural(layout.encode(Example1Truth::setup()));
}

/// Runs `reps` independent generate-and-estimate replicates of Example 1.
inline ReplicationReport replicate_study(const StudyOptions& opt) {
    if (opt.reps < 2) throw ConfigError("reps", "need at least 2 replicates");
    if (!opt.replicate_seeds.empty() && opt.replicate_seeds.size() != opt.reps)
        throw ConfigError("seeds", "seed list length must equal reps");
    if (!opt.store_dir.empty()) std::filesystem::create_directories(opt.store_dir);
    const auto t_start = std::chrono::steady_clock::now();
    const TuningSchedule schedule = estimation_schedule(opt.n, opt.sim_factor, opt.kernel_factor);
    const auto spec = Example1Truth::spec();
    const ParamLayout layout(spec, opt.censor_bound, schedule.dt, opt.estimator.max_hazard_pieces,
                             opt.estimator.estimate_hazards);
    const auto grid = uniform_grid(0.0, std::min(opt.hazard_horizon, opt.censor_bound), 101);
    const Hazard truth0 = Example1Truth::lambda0();
    const Hazard truth_c = Example1Truth::lambda0_c();

    ReplicationReport rep;
    rep.reps = opt.reps;
    rep.n = opt.n;
    rep.names = layout.names();
    rep.records.resize(opt.reps);
    std::vector<char> resumed(opt.reps, 0);
    parallel_for(opt.reps, [&](std::size_t r) {
        const std::uint64_t data_seed =
            opt.replicate_seeds.empty() ? derive_seed(opt.seed, 0xda7au, r) : opt.replicate_seeds[r];
        if (auto done = detail::load_replicate(opt.store_dir, r, data_seed)) {
            rep.records[r] = std::move(*done);
            resumed[r] = 1;
            return;
        }
        const auto t0 = std::chrono::steady_clock::now();
        ReplicateRecord rec;
        rec.index = r;
        rec.data_seed = data_seed;
        try {
            const auto data = gen_example1(opt.n, data_seed, opt.censor_bound);
            EstimatorOptions est = opt.estimator;
            est.seed = derive_seed(data_seed, 0xe57u);
            auto fit = maximize(data, spec, schedule, opt.mode, est);
            if (opt.bootstrap_reps >= 2) {
                BootstrapOptions b;
                b.reps = opt.bootstrap_reps;
                b.seed = derive_seed(data_seed, 0xb00u);
                auto boot = bootstrap_bands(data, spec, schedule, opt.mode, est, fit, b);
                attach_intervals(fit, boot);
                rec.intervals = fit.ci95;
            }
            rec.estimate = fit.estimate;
            const auto e0 = cum_hazard_error(fit.setup_hat.lambda0, truth0, grid);
            const auto ec = cum_hazard_error(fit.setup_hat.lambda0_c, truth_c, grid);
            rec.sup_error = e0.sup_error;
            rec.l2_error = e0.l2_error;
            rec.sup_error_c = ec.sup_error;
            rec.l2_error_c = ec.l2_error;
            rec.ok = true;
        } catch (const Error& e) {
            rec.ok = false;
            rec.error = e.what();
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        detail::save_replicate(opt.store_dir, rec);
        rep.records[r] = std::move(rec);
    });

    std::vector<std::vector<double>> estimates;
    std::vector<std::vector<Interval>> intervals;
    bool all_intervals = opt.bootstrap_reps >= 2;
    for (std::size_t r = 0; r < opt.reps; ++r) {
        const auto& rec = rep.records[r];
        rep.resumed += resumed[r];
        if (!rec.ok) {
            ++rep.failed;
            continue;
        }
        estimates.push_back(rec.estimate);
        if (rec.intervals.size() == rec.estimate.size())
            intervals.push_back(rec.intervals);
        else
            all_intervals = false;
        rep.mean_sup_error += rec.sup_error;
        rep.mean_l2_error += rec.l2_error;
        rep.mean_sup_error_c += rec.sup_error_c;
        rep.mean_l2_error_c += rec.l2_error_c;
    }
    rep.failure_flag = rep.failed * 10 > opt.reps;
    if (estimates.size() >= 2) {
        const double k = static_cast<double>(estimates.size());
        rep.mean_sup_error /= k;
        rep.mean_l2_error /= k;
        rep.mean_sup_error_c /= k;
        rep.mean_l2_error_c /= k;
        rep.rows = metrics(estimates, example1_truth_vector(layout), all_intervals ? intervals : decltype(intervals){},
                           rep.names);
    }
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

}  // namespace jmsim
