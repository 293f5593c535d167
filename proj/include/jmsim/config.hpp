#pragma once

// Run configuration: JSON schema checks with field paths, defaults, and
// translation into library option structs.  The resolved configuration
// (every default filled in) is what commands write back to disk.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "jmsim/errors.hpp"
#include "jmsim/estimator.hpp"
#include "jmsim/experiments.hpp"
#include "jmsim/model.hpp"

namespace jmsim {

using Json = nlohmann::json;

/// Longitudinal spec plus, when given, a full truth setup.
struct ModelConfig {
    LongitudinalSpec spec;
    std::optional<ModelSetup> truth;
};

struct SimulateSettings {
    std::size_t N = 100;
    double dt = 0.01;
    double censor_bound = 0.0;
    std::uint64_t seed = 1;
    bool trajectories = false;  // also dump longitudinal paths
    bool dataset = false;       // also write the samples as an observed dataset
};

struct EstimateSettings {
    LikelihoodMode mode = LikelihoodMode::full;
    EstimatorOptions estimator;
    double sim_factor = 10.0;
    double kernel_factor = 10.0;
    std::optional<std::size_t> N;
    std::optional<double> dt, h;
    std::optional<LassoOptions> lasso;
    BootstrapOptions bootstrap;  // reps = 0 disables
    std::size_t curve_points = 101;
};

struct InputFiles {
    std::string subjects, longitudinal, sidecar;
};

struct RunConfig {
    std::string command;
    Json resolved;
    std::optional<ModelConfig> model;
    SimulateSettings simulate;
    EstimateSettings estimate;
    StudyOptions replicate;
    InputFiles inputs;
    std::string output_dir;
    int workers = 1;
};

namespace config_detail {

/// Walks one JSON object, reading typed fields with defaults and recording
/// the resolved value.  Problems are collected with their dotted paths.
class Section {
public:
    Section(const Json* src, std::string path, Json& out, std::vector<std::string>& diag)
        : src_(src), path_(std::move(path)), out_(out), diag_(diag) {
        if (src_ && !src_->is_null() && !src_->is_object()) {
            fail("", "must be an object");
            src_ = nullptr;
        }
        if (!out_.is_object()) out_ = Json::object();
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void fail(const std::string& key, const std::string& what) const {
        const std::string f = key.empty() ? path_ : field(key);
        diag_.push_back((f.empty() ? std::string("config") : f) + ": " + what);
    }

    const Json* raw(const std::string& key) {
        known_.insert(key);
        if (!src_ || !src_->contains(key)) return nullptr;
        const Json& v = (*src_)[key];
        return v.is_null() ? nullptr : &v;
    }

    bool has(const std::string& key) { return raw(key) != nullptr; }

    std::optional<double> number(const std::string& key, std::optional<double> def, double lo, double hi,
                                 bool lo_open = false) {
        const Json* v = raw(key);
        if (!v) {
            if (def) out_[key] = *def;
            return def;
        }
        if (!v->is_number()) {
            fail(key, "must be a number");
            return def;
        }
        const double x = v->get<double>();
        if (!std::isfinite(x) || x < lo || x > hi || (lo_open && x == lo)) {
            fail(key, "must be in " + std::string(lo_open ? "(" : "[") + num(lo) + ", " + num(hi) + "]");
            return def;
        }
        out_[key] = x;
        return x;
    }

    double require_number(const std::string& key, double lo, double hi, bool lo_open = false) {
        if (!has(key)) {
            fail(key, "required field missing");
            return lo;
        }
        return number(key, std::nullopt, lo, hi, lo_open).value_or(lo);
    }

    std::optional<std::uint64_t> integer(const std::string& key, std::optional<std::uint64_t> def,
                                         std::uint64_t lo = 0,
                                         std::uint64_t hi = std::numeric_limits<std::uint64_t>::max()) {
        const Json* v = raw(key);
        if (!v) {
            if (def) out_[key] = *def;
            return def;
        }
        if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
            fail(key, "must be a non-negative integer");
            return def;
        }
        const auto x = v->get<std::uint64_t>();
        if (x < lo || x > hi) {
            fail(key, "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
            return def;
        }
        out_[key] = x;
        return x;
    }

    bool boolean(const std::string& key, bool def) {
        const Json* v = raw(key);
        if (!v) {
            out_[key] = def;
            return def;
        }
        if (!v->is_boolean()) {
            fail(key, "must be true or false");
            return def;
        }
        out_[key] = v->get<bool>();
        return v->get<bool>();
    }

    std::string string(const std::string& key, const std::string& def, const std::vector<std::string>& allowed = {}) {
        const Json* v = raw(key);
        if (!v) {
            out_[key] = def;
            return def;
        }
        if (!v->is_string()) {
            fail(key, "must be a string");
            return def;
        }
        const auto s = v->get<std::string>();
        if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            fail(key, "must be one of " + list);
            return def;
        }
        out_[key] = s;
        return s;
    }

    std::optional<std::vector<double>> numbers(const std::string& key, std::optional<std::size_t> len = {}) {
        const Json* v = raw(key);
        if (!v) return std::nullopt;
        if (!v->is_array()) {
            fail(key, "must be an array of numbers");
            return std::nullopt;
        }
        std::vector<double> out;
        for (const auto& e : *v) {
            if (!e.is_number() || !std::isfinite(e.get<double>())) {
                fail(key, "must contain only finite numbers");
                return std::nullopt;
            }
            out.push_back(e.get<double>());
        }
        if (len && out.size() != *len) {
            fail(key, "must have " + std::to_string(*len) + " entries");
            return std::nullopt;
        }
        out_[key] = out;
        return out;
    }

    /// 1-based indices in [1, p], returned 0-based.
    std::optional<std::vector<std::size_t>> dims(const std::string& key, std::size_t p) {
        const Json* v = raw(key);
        if (!v) return std::nullopt;
        std::vector<std::size_t> out;
        if (!v->is_array()) {
            fail(key, "must be an array of 1-based dimension indices");
            return std::nullopt;
        }
        for (const auto& e : *v) {
            if (!e.is_number_integer() || e.get<long long>() < 1 || e.get<long long>() > static_cast<long long>(p)) {
                fail(key, "entries must be integers in 1.." + std::to_string(p));
                return std::nullopt;
            }
            out.push_back(e.get<std::size_t>() - 1);
        }
        out_[key] = *v;
        return out;
    }

    std::optional<std::vector<std::uint64_t>> seeds(const std::string& key) {
        const Json* v = raw(key);
        if (!v) return std::nullopt;
        std::vector<std::uint64_t> out;
        bool ok = v->is_array();
        if (ok)
            for (const auto& e : *v) {
                if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<long long>() >= 0)) {
                    ok = false;
                    break;
                }
                out.push_back(e.get<std::uint64_t>());
            }
        if (!ok) {
            fail(key, "must be an array of non-negative integer seeds");
            return std::nullopt;
        }
        out_[key] = out;
        return out;
    }

    Section child(const std::string& key) {
        const Json* v = raw(key);
        return Section(v, field(key), out_[key], diag_);
    }

    /// Removes a placeholder written by child() for an absent section.
    void drop(const std::string& key) {
        if (!has(key)) out_.erase(key);
    }

    /// Copies a value through unchanged (already validated elsewhere).
    void keep(const std::string& key, const Json& v) { out_[key] = v; }

    void finish() const {
        if (!src_) return;
        for (auto it = src_->begin(); it != src_->end(); ++it)
            if (!known_.count(it.key())) fail(it.key(), "unknown field");
    }

    bool present() const { return src_ != nullptr; }

private:
    static std::string num(double x) {
        std::ostringstream os;
        os << x;
        return os.str();
    }

    const Json* src_;
    std::string path_;
    Json& out_;
    std::vector<std::string>& diag_;
    std::set<std::string> known_;
};

inline std::optional<Hazard> read_hazard(Section s) {
    if (!s.present()) return std::nullopt;
    const auto type = s.string("type", "constant", {"constant", "exp_ratio", "step"});
    std::optional<Hazard> out;
    if (type == "constant") {
        const double v = s.require_number("value", 0.0, 1e6);
        out = constant_hazard(v);
    } else if (type == "exp_ratio") {
        const double f = s.require_number("floor", -50.0, 50.0);
        const double r = s.require_number("rate", 0.0, 1e6, true);
        if (r > 0.0) out = exp_ratio_hazard(f, r);
    } else {
        const double dt = s.require_number("dt", 0.0, 1e6, true);
        const auto theta = s.numbers("theta");
        if (!theta || theta->empty()) {
            s.fail("theta", "required non-empty array of step heights");
        } else if (std::any_of(theta->begin(), theta->end(), [](double v) { return v < 0.0; })) {
            s.fail("theta", "step heights must be >= 0");
        } else if (dt > 0.0) {
            out = StepHazard(*theta, dt);
        }
    }
    s.finish();
    return out;
}

inline ScalarFn read_poly(Section s, const char* what, std::vector<double> def) {
    const auto c = s.numbers("poly");
    std::vector<double> coef = c.value_or(def);
    if (!c) s.keep("poly", coef);
    s.finish();
    (void)what;
    return [coef](double t) {
        double v = 0.0;
        for (auto it = coef.rbegin(); it != coef.rend(); ++it) v = v * t + *it;
        return v;
    };
}

/// Drift rate intercept + slope * z_d + noise_sd * N(0,1) per covered dimension.
inline DriftSampler linear_drift_sampler(std::vector<std::size_t> dims) {
    return [dims](std::span<const double> z, double, std::span<const double> prm, StreamRng& rng,
                  std::span<double> out) {
        const std::size_t q = dims.size();
        for (std::size_t i = 0; i < q; ++i) {
            const double sd = std::abs(prm[2 * q + i]);
            out[i] = prm[i] + prm[q + i] * z[dims[i]] + (sd > 0.0 ? sd * rng.normal() : 0.0);
        }
    };
}

inline std::optional<ModelConfig> read_model(Section s) {
    if (!s.present()) return std::nullopt;
    ModelConfig mc;
    const auto preset = s.string("preset", "none", {"none", "example1"});
    std::size_t p = 0;
    if (preset == "example1") {
        mc.spec = Example1Truth::spec();
        mc.truth = Example1Truth::setup();
        p = Example1Truth::p;
        // Echoed back in the resolved config; must agree with the preset.
        s.integer("p", p, p, p);
        s.integer("counting_index", Example1Truth::counting_index + 1, Example1Truth::counting_index + 1,
                  Example1Truth::counting_index + 1);
        for (const char* k : {"linear_mixed", "drift", "static_dims", "initial"})
            if (s.has(k)) s.fail(k, "cannot be combined with a preset");
    } else {
        const auto pp = s.integer("p", std::nullopt, 1, 1000);
        if (!pp) {
            if (!s.has("p")) s.fail("p", "required field missing");
            s.finish();
            return std::nullopt;
        }
        p = *pp;
        mc.spec.p = p;
        if (s.has("counting_index")) {
            const auto ci = s.integer("counting_index", std::nullopt, 1, p);
            if (ci) mc.spec.counting_index = *ci - 1;
        }
        if (s.has("linear_mixed")) {
            Section lm = s.child("linear_mixed");
            LinearMixedPart part;
            part.dims = lm.dims("dims", p).value_or(std::vector<std::size_t>{});
            if (part.dims.empty()) lm.fail("dims", "required non-empty array");
            const std::size_t q = part.dims.size();
            part.alpha = lm.numbers("alpha", q).value_or(std::vector<double>(q, 0.0));
            lm.keep("alpha", part.alpha);
            for (auto [key, dist] : {std::pair{"effect", &part.effect}, std::pair{"error", &part.error}}) {
                Section d = lm.child(key);
                dist->mean = d.numbers("mean", q).value_or(std::vector<double>(q, 0.0));
                dist->var = d.numbers("var", q).value_or(std::vector<double>(q, 1.0));
                d.keep("mean", dist->mean);
                d.keep("var", dist->var);
                d.finish();
            }
            part.z1 = read_poly(lm.child("z1"), "z1", {0.0});
            part.z2 = read_poly(lm.child("z2"), "z2", {0.0, 1.0});
            part.estimate_alpha = lm.boolean("estimate_alpha", false);
            lm.finish();
            mc.spec.linear_mixed = std::move(part);
        }
        if (s.has("drift")) {
            Section dr = s.child("drift");
            DriftPart part;
            part.dims = dr.dims("dims", p).value_or(std::vector<std::size_t>{});
            if (part.dims.empty()) dr.fail("dims", "required non-empty array");
            const std::size_t q = part.dims.size();
            const auto icpt = dr.numbers("intercept", q).value_or(std::vector<double>(q, 0.0));
            const auto slope = dr.numbers("slope", q).value_or(std::vector<double>(q, 0.0));
            const auto sd = dr.numbers("noise_sd", q).value_or(std::vector<double>(q, 0.0));
            dr.keep("intercept", icpt);
            dr.keep("slope", slope);
            dr.keep("noise_sd", sd);
            dr.finish();
            part.params = icpt;
            part.params.insert(part.params.end(), slope.begin(), slope.end());
            part.params.insert(part.params.end(), sd.begin(), sd.end());
            for (const char* nm : {"drift_intercept", "drift_slope", "drift_noise_sd"})
                for (auto d : part.dims) part.param_names.push_back(std::string(nm) + "[" + std::to_string(d + 1) + "]");
            part.sampler = linear_drift_sampler(part.dims);
            mc.spec.drift = std::move(part);
        }
        mc.spec.static_dims = s.dims("static_dims", p).value_or(std::vector<std::size_t>{});
        if (s.has("initial")) {
            Section in = s.child("initial");
            mc.spec.initial.mean = in.numbers("mean", p).value_or(std::vector<double>(p, 0.0));
            mc.spec.initial.var = in.numbers("var", p).value_or(std::vector<double>(p, 0.0));
            in.keep("mean", mc.spec.initial.mean);
            in.keep("var", mc.spec.initial.var);
            in.finish();
        } else {
            mc.spec.initial = {std::vector<double>(p, 0.0), std::vector<double>(p, 0.0)};
        }
        try {
            mc.spec.validate();
        } catch (const ConfigError& e) {
            s.fail(e.field(), std::string(e.what()).substr(e.field().empty() ? 0 : e.field().size() + 2));
        }
    }

    if (s.has("truth")) {
        Section t = s.child("truth");
        ModelSetup m = mc.truth.value_or(ModelSetup{});
        if (!mc.truth) {
            m.a = mc.spec.params();
            m.b.assign(p, 0.0);
            m.b_c.assign(p, 0.0);
        }
        const std::size_t na = mc.spec.params().size();
        if (auto a = t.numbers("a", na)) m.a = *a;
        if (auto b = t.numbers("b", p)) m.b = *b;
        if (auto bc = t.numbers("b_c", p)) m.b_c = *bc;
        t.keep("a", m.a);
        t.keep("b", m.b);
        t.keep("b_c", m.b_c);
        const bool need = !mc.truth;
        if (auto h = read_hazard(t.child("lambda0"))) {
            m.lambda0 = *h;
        } else if (need && !t.has("lambda0")) {
            t.fail("lambda0", "required field missing");
        }
        if (auto h = read_hazard(t.child("lambda0_c"))) {
            m.lambda0_c = *h;
        } else if (need && mc.spec.counting_index && !t.has("lambda0_c")) {
            t.fail("lambda0_c", "required when a counting dimension is configured");
        }
        t.drop("lambda0");
        t.drop("lambda0_c");
        t.finish();
        mc.truth = std::move(m);
    }
    s.finish();
    return mc;
}

inline std::optional<PartitionMode> partition_mode(const std::string& s) {
    if (s == "uniform_times") return PartitionMode::uniform_times;
    if (s == "equal_length") return PartitionMode::equal_length;
    return std::nullopt;
}

}  // namespace config_detail

/// Validates `user` for `command` and fills every default.  Throws
/// ConfigError listing each problem as "field.path: message".
inline RunConfig parse_config(const Json& user, const std::string& command) {
    using config_detail::Section;
    static const std::vector<std::string> kCommands{"simulate", "estimate", "replicate", "validate"};
    if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end())
        throw ConfigError("command", "unknown command " + command);

    RunConfig rc;
    rc.command = command;
    std::vector<std::string> diag;
    Json out = Json::object();
    Section root(&user, "", out, diag);
    root.keep("command", command);
    (void)root.raw("command");  // informational; the subcommand decides

    rc.model = config_detail::read_model(root.child("model"));
    root.drop("model");
    if (!rc.model && (command == "simulate" || command == "estimate"))
        root.fail("model", "required field missing");
    if (rc.model && command == "simulate" && !rc.model->truth)
        root.fail("model.truth", "simulate needs a truth setup");

    {
        Section s = root.child("simulation");
        rc.simulate.N = s.integer("N", 100, 1, 100000000).value_or(100);
        rc.simulate.dt = s.number("dt", 0.01, 0.0, 1e3, true).value_or(0.01);
        if (command == "simulate")
            rc.simulate.censor_bound = s.require_number("censor_bound", 0.0, 1e9, true);
        else
            rc.simulate.censor_bound = s.number("censor_bound", std::nullopt, 0.0, 1e9, true).value_or(0.0);
        rc.simulate.seed = s.integer("seed", 1).value_or(1);
        rc.simulate.trajectories = s.boolean("trajectories", false);
        rc.simulate.dataset = s.boolean("dataset", false);
        s.finish();
    }
    {
        Section s = root.child("estimation");
        auto& e = rc.estimate;
        const auto mode = s.string("mode", "full", {"full", "mean"});
        e.mode = mode == "mean" ? LikelihoodMode::mean : LikelihoodMode::full;
        auto& o = e.estimator;
        o.seed = s.integer("seed", 1).value_or(1);
        o.restarts = s.integer("restarts", 3, 1, 1000).value_or(3);
        o.max_sweeps = s.integer("max_sweeps", 6, 1, 1000).value_or(6);
        o.block_evals = s.integer("block_evals", 0).value_or(0);
        o.max_hazard_pieces = s.integer("max_hazard_pieces", 10, 1, 10000).value_or(10);
        o.estimate_hazards = s.boolean("estimate_hazards", true);
        o.tol_f = s.number("tol_f", 1e-6, 0.0, 1e6).value_or(1e-6);
        e.sim_factor = s.number("sim_factor", 10.0, 0.0, 1e4, true).value_or(10.0);
        e.kernel_factor = s.number("kernel_factor", 10.0, 0.0, 1e4, true).value_or(10.0);
        if (auto v = s.integer("N", std::nullopt, 1)) e.N = *v;
        if (auto v = s.number("dt", std::nullopt, 0.0, 1e3, true)) e.dt = *v;
        if (auto v = s.number("h", std::nullopt, 0.0, 1e6, true)) e.h = *v;
        e.curve_points = s.integer("curve_points", 101, 2, 100000).value_or(101);
        {
            Section pt = s.child("partition");
            const auto pm = pt.string("mode", "uniform_times", {"uniform_times", "equal_length"});
            o.partition.mode = *config_detail::partition_mode(pm);
            o.partition.cells = pt.integer("cells", 4, 1, 100000).value_or(4);
            pt.finish();
        }
        if (s.has("lasso")) {
            Section l = s.child("lasso");
            LassoOptions lo;
            if (auto g = l.numbers("gammas")) {
                if (g->empty() || std::any_of(g->begin(), g->end(), [](double x) { return x < 0.0; }))
                    l.fail("gammas", "must be a non-empty list of values >= 0");
                else
                    lo.gammas = *g;
            }
            l.keep("gammas", lo.gammas);
            lo.holdout_fraction = l.number("holdout_fraction", lo.holdout_fraction, 0.0, 0.9, true).value_or(0.5);
            lo.zero_threshold = l.number("zero_threshold", lo.zero_threshold, 0.0, 1e3).value_or(1e-3);
            lo.split_seed = l.integer("split_seed", lo.split_seed).value_or(7);
            lo.coefficients_only = l.boolean("coefficients_only", true);
            l.finish();
            e.lasso = lo;
        }
        s.drop("lasso");
        {
            Section b = s.child("bootstrap");
            e.bootstrap.reps = b.integer("reps", 0, 0, 100000).value_or(0);
            e.bootstrap.seed = b.integer("seed", 11).value_or(11);
            e.bootstrap.level = b.number("level", 0.95, 0.0, 1.0, true).value_or(0.95);
            e.bootstrap.restarts = b.integer("restarts", 1, 1, 100).value_or(1);
            b.finish();
        }
        s.finish();
    }
    {
        Section s = root.child("replicate");
        auto& r = rc.replicate;
        r.reps = s.integer("reps", 50, 1, 100000).value_or(50);
        r.n = s.integer("n", 100, 2, 1000000).value_or(100);
        r.seed = s.integer("seed", 2024).value_or(2024);
        if (s.has("seeds")) {
            if (auto sd = s.seeds("seeds")) {
                if (sd->size() != r.reps)
                    s.fail("seeds", "must list exactly reps = " + std::to_string(r.reps) + " seeds");
                else
                    r.replicate_seeds = *sd;
            }
        }
        r.censor_bound = s.number("censor_bound", Example1Truth::censor_bound, 0.0, 1e9, true).value_or(2.0);
        r.bootstrap_reps = s.integer("bootstrap_reps", 30, 0, 100000).value_or(30);
        r.hazard_horizon = s.number("hazard_horizon", 1.0, 0.0, 1e9, true).value_or(1.0);
        s.finish();
        // The estimator settings above apply to every replicate.
        r.mode = rc.estimate.mode;
        r.sim_factor = rc.estimate.sim_factor;
        r.kernel_factor = rc.estimate.kernel_factor;
        r.estimator = rc.estimate.estimator;
    }
    {
        Section s = root.child("inputs");
        rc.inputs.subjects = s.string("subjects", "");
        rc.inputs.longitudinal = s.string("longitudinal", "");
        rc.inputs.sidecar = s.string("sidecar", "");
        s.finish();
    }
    rc.output_dir = root.string("output_dir", "");
    rc.workers = static_cast<int>(root.integer("workers", 1, 1, 4096).value_or(1));
    root.finish();

    if (!diag.empty()) {
        std::string msg;
        for (const auto& d : diag) msg += (msg.empty() ? "" : "\n") + d;
        const auto colon = diag.front().find(':');
        throw ConfigError(diag.front().substr(0, colon), msg.substr(colon + 2));
    }
    rc.resolved = std::move(out);
    return rc;
}

/// Overlays `top` onto `base` recursively; objects merge, everything else replaces.
inline Json merge_config(Json base, const Json& top) {
    if (!base.is_object() || !top.is_object()) return top;
    for (auto it = top.begin(); it != top.end(); ++it) {
        if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
            base[it.key()] = merge_config(base[it.key()], it.value());
        else
            base[it.key()] = it.value();
    }
    return base;
}

/// Schedule used by `estimate` for a dataset of n subjects.
inline TuningSchedule resolve_schedule(const EstimateSettings& e, std::size_t n) {
    TuningSchedule s = estimation_schedule(n, e.sim_factor, e.kernel_factor);
    if (e.N) s.N = *e.N;
    if (e.dt) s.dt = *e.dt;
    if (e.h) s.h = *e.h;
    return s;
}

}  // namespace jmsim
