#pragma once

// Parameter and data types shared by every module, plus hazard primitives.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "jmsim/errors.hpp"
#include "jmsim/rng.hpp"

namespace jmsim {

using ScalarFn = std::function<double(double)>;

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// ---------------------------------------------------------------------------
// Baseline hazards
// ---------------------------------------------------------------------------

/// Piecewise-constant hazard: theta[i] on [i*dt, (i+1)*dt), held at the last
/// height beyond k*dt.
class StepHazard {
public:
    StepHazard(std::vector<double> theta, double dt) : theta_(std::move(theta)), dt_(dt) {
        if (theta_.empty()) throw ContractViolation("StepHazard: needs at least one step");
        if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw ContractViolation("StepHazard: dt must be positive");
        for (double v : theta_) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ContractViolation("StepHazard: step heights must be finite and >= 0");
        }
        prefix_.resize(theta_.size() + 1, 0.0);
        for (std::size_t i = 0; i < theta_.size(); ++i) prefix_[i + 1] = prefix_[i] + theta_[i] * dt_;
    }

    std::size_t steps() const noexcept { return theta_.size(); }
    double dt() const noexcept { return dt_; }
    double horizon() const noexcept { return dt_ * static_cast<double>(theta_.size()); }
    const std::vector<double>& theta() const noexcept { return theta_; }

    std::size_t index(double t) const {
        if (!(t >= 0.0)) throw ContractViolation("StepHazard: t must be >= 0");
        const double q = std::floor(t / dt_);
        if (q >= static_cast<double>(theta_.size())) return theta_.size() - 1;
        return static_cast<std::size_t>(q);
    }

    double operator()(double t) const { return theta_[index(t)]; }

    /// Exact integral of the step function over [0, t].
    double cumulative(double t) const {
        if (!(t >= 0.0)) throw ContractViolation("StepHazard: t must be >= 0");
        const double q = std::floor(t / dt_);
        const std::size_t k = theta_.size();
        if (q >= static_cast<double>(k)) return prefix_[k] + theta_[k - 1] * (t - horizon());
        const auto i = static_cast<std::size_t>(q);
        return prefix_[i] + theta_[i] * (t - static_cast<double>(i) * dt_);
    }

private:
    std::vector<double> theta_;
    double dt_;
    std::vector<double> prefix_;
};

/// Hazard given by a formula.  The cumulative falls back to composite
/// Simpson when no closed form is supplied.
class ClosedFormHazard {
public:
    ClosedFormHazard(std::string name, ScalarFn rate, ScalarFn cumulative = {})
        : name_(std::move(name)), rate_(std::move(rate)), cumulative_(std::move(cumulative)) {
        if (!rate_) throw ContractViolation("ClosedFormHazard: rate function required");
    }

    const std::string& name() const noexcept { return name_; }
    double operator()(double t) const { return rate_(t); }

    double cumulative(double t) const {
        if (cumulative_) return cumulative_(t);
        if (t <= 0.0) return 0.0;
        constexpr int kIntervals = 2000;
        const double h = t / kIntervals;
        double s = rate_(0.0) + rate_(t);
        for (int i = 1; i < kIntervals; ++i) s += rate_(i * h) * ((i % 2) ? 4.0 : 2.0);
        return s * h / 3.0;
    }

private:
    std::string name_;
    ScalarFn rate_;
    ScalarFn cumulative_;
};

inline ClosedFormHazard constant_hazard(double value) {
    if (!(value >= 0.0)) throw ContractViolation("constant_hazard: value must be >= 0");
    return ClosedFormHazard("constant", [value](double) { return value; },
                            [value](double t) { return value * t; });
}

/// (exp(-floor) + exp(-rate*t)) / (exp(-floor) + 1); equals 1 at t = 0 and
/// decays to the normalized floor.  Both Example-1 baselines have this form.
inline ClosedFormHazard exp_ratio_hazard(double floor, double rate) {
    if (!(rate > 0.0)) throw ContractViolation("exp_ratio_hazard: rate must be positive");
    const double ef = std::exp(-floor);
    const double norm = ef + 1.0;
    return ClosedFormHazard(
        "exp_ratio",
        [=](double t) { return (ef + std::exp(-rate * t)) / norm; },
        [=](double t) { return (ef * t + (1.0 - std::exp(-rate * t)) / rate) / norm; });
}

/// Either a step function or a closed form.
class Hazard {
public:
    Hazard(StepHazard h) : v_(std::move(h)) {}          // NOLINT(google-explicit-constructor)
    Hazard(ClosedFormHazard h) : v_(std::move(h)) {}    // NOLINT(google-explicit-constructor)

    double operator()(double t) const {
        return std::visit([t](const auto& h) { return h(t); }, v_);
    }
    double cumulative(double t) const {
        return std::visit([t](const auto& h) { return h.cumulative(t); }, v_);
    }

    bool is_step() const noexcept { return std::holds_alternative<StepHazard>(v_); }
    const StepHazard& step() const { return std::get<StepHazard>(v_); }
    const ClosedFormHazard& closed_form() const { return std::get<ClosedFormHazard>(v_); }

private:
    std::variant<StepHazard, ClosedFormHazard> v_;
};

// ---------------------------------------------------------------------------
// Longitudinal process description
// ---------------------------------------------------------------------------

struct NormalDiag {
    std::vector<double> mean;
    std::vector<double> var;
};

/// alpha * Z1(t) + beta * Z2(t) + e on a subset of coordinates.  Z1 and Z2
/// are scalar configuration functions shared by the covered coordinates.
struct LinearMixedPart {
    std::vector<std::size_t> dims;
    std::vector<double> alpha;
    NormalDiag effect;  // beta
    NormalDiag error;   // e
    ScalarFn z1;
    ScalarFn z2;
    bool estimate_alpha = false;
};

/// Draws the rate epsilon(t) for the covered coordinates given the full
/// state and time.  `out` has one slot per covered coordinate.
using DriftSampler = std::function<void(std::span<const double> z, double t,
                                        std::span<const double> params, StreamRng& rng,
                                        std::span<double> out)>;

struct DriftPart {
    std::vector<std::size_t> dims;
    DriftSampler sampler;
    std::vector<double> params;
    std::vector<std::string> param_names;
};

struct ParamInfo {
    std::string name;
    bool positive = false;  // variance-type parameter
};

/// Generative description of Z(t).  Every non-counting coordinate is owned
/// by exactly one of linear_mixed, drift or static_dims.  Drift and static
/// coordinates take their initial value from `initial` (a diagonal normal
/// over all p coordinates) or, when non-empty, from `initial_samples`
/// (row j % size for trajectory j).
struct LongitudinalSpec {
    std::size_t p = 0;
    std::optional<std::size_t> counting_index;
    std::optional<LinearMixedPart> linear_mixed;
    std::optional<DriftPart> drift;
    std::vector<std::size_t> static_dims;
    NormalDiag initial;
    std::vector<std::vector<double>> initial_samples;

    void validate() const {
        if (p == 0) throw ConfigError("p", "covariate dimension must be >= 1");
        std::vector<int> owners(p, 0);
        auto claim = [&](std::size_t d, const char* who) {
            if (d >= p) throw ConfigError(who, "dimension index " + std::to_string(d) + " out of range");
            ++owners[d];
        };
        if (counting_index) claim(*counting_index, "counting_index");
        if (linear_mixed) {
            const auto& lm = *linear_mixed;
            const std::size_t q = lm.dims.size();
            for (auto d : lm.dims) claim(d, "linear_mixed.dims");
            if (lm.alpha.size() != q || lm.effect.mean.size() != q || lm.effect.var.size() != q ||
                lm.error.mean.size() != q || lm.error.var.size() != q)
                throw ConfigError("linear_mixed", "parameter vectors must match the number of covered dims");
            for (std::size_t i = 0; i < q; ++i) {
                if (!(lm.effect.var[i] >= 0.0) || !(lm.error.var[i] >= 0.0))
                    throw ConfigError("linear_mixed", "variances must be >= 0");
            }
            if (!lm.z1 || !lm.z2) throw ConfigError("linear_mixed", "configuration functions z1, z2 required");
        }
        if (drift) {
            for (auto d : drift->dims) claim(d, "drift.dims");
            if (!drift->sampler) throw ConfigError("drift", "sampler required");
        }
        for (auto d : static_dims) claim(d, "static_dims");
        for (std::size_t d = 0; d < p; ++d) {
            if (owners[d] != 1)
                throw ConfigError("dims", "coordinate " + std::to_string(d + 1) +
                                              (owners[d] == 0 ? " is not covered" : " is covered twice"));
        }
        if ((drift || !static_dims.empty()) && initial_samples.empty()) {
            if (initial.mean.size() != p || initial.var.size() != p)
                throw ConfigError("initial", "initial distribution must have p means and variances");
            for (double v : initial.var)
                if (!(v >= 0.0)) throw ConfigError("initial", "variances must be >= 0");
        }
        for (const auto& row : initial_samples)
            if (row.size() != p) throw ConfigError("initial_samples", "rows must have p entries");
    }

    /// Flat view of the longitudinal parameters `a`, in the order
    /// mu_error, mu_effect, sigma2_error, sigma2_effect, [alpha], drift params.
    std::vector<double> params() const {
        std::vector<double> out;
        if (linear_mixed) {
            const auto& lm = *linear_mixed;
            for (const auto* v : {&lm.error.mean, &lm.effect.mean, &lm.error.var, &lm.effect.var})
                out.insert(out.end(), v->begin(), v->end());
            if (lm.estimate_alpha) out.insert(out.end(), lm.alpha.begin(), lm.alpha.end());
        }
        if (drift) out.insert(out.end(), drift->params.begin(), drift->params.end());
        return out;
    }

    std::vector<ParamInfo> param_info() const {
        std::vector<ParamInfo> out;
        if (linear_mixed) {
            const auto& lm = *linear_mixed;
            const char* names[] = {"mu_error", "mu_effect", "sigma2_error", "sigma2_effect"};
            for (int g = 0; g < 4; ++g)
                for (auto d : lm.dims)
                    out.push_back({std::string(names[g]) + "[" + std::to_string(d + 1) + "]", g >= 2});
            if (lm.estimate_alpha)
                for (auto d : lm.dims) out.push_back({"alpha[" + std::to_string(d + 1) + "]", false});
        }
        if (drift) {
            for (std::size_t i = 0; i < drift->params.size(); ++i) {
                const std::string nm = i < drift->param_names.size() ? drift->param_names[i]
                                                                     : "drift[" + std::to_string(i + 1) + "]";
                out.push_back({nm, false});
            }
        }
        return out;
    }

    /// Copy of this spec with `a` substituted (inverse of params()).
    LongitudinalSpec with_params(std::span<const double> a) const {
        LongitudinalSpec out = *this;
        if (a.empty()) return out;
        if (a.size() != params().size())
            throw ContractViolation("with_params: expected " + std::to_string(params().size()) +
                                    " longitudinal parameters, got " + std::to_string(a.size()));
        std::size_t pos = 0;
        auto take = [&](std::vector<double>& v) {
            for (auto& x : v) x = a[pos++];
        };
        if (out.linear_mixed) {
            auto& lm = *out.linear_mixed;
            take(lm.error.mean);
            take(lm.effect.mean);
            take(lm.error.var);
            take(lm.effect.var);
            if (lm.estimate_alpha) take(lm.alpha);
        }
        if (out.drift) take(out.drift->params);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Model setup
// ---------------------------------------------------------------------------

/// Omega = (a, b, b_c, lambda0, lambda0_c).
struct ModelSetup {
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> b_c;
    Hazard lambda0 = constant_hazard(0.0);
    Hazard lambda0_c = constant_hazard(0.0);

    void validate(std::size_t p) const {
        if (b.size() != p) throw ContractViolation("ModelSetup: b must have length p = " + std::to_string(p));
        if (b_c.size() != p) throw ContractViolation("ModelSetup: b_c must have length p = " + std::to_string(p));
        for (double v : b)
            if (!std::isfinite(v)) throw ContractViolation("ModelSetup: non-finite coefficient in b");
        for (double v : b_c)
            if (!std::isfinite(v)) throw ContractViolation("ModelSetup: non-finite coefficient in b_c");
    }
};

enum class EventKind { terminal, counting };

/// lambda0(t) * exp(b . z) for the terminal event, or the counting analogue.
inline double cox_rate(const ModelSetup& setup, std::span<const double> z, double t, EventKind which) {
    const auto& coef = which == EventKind::terminal ? setup.b : setup.b_c;
    if (z.size() != coef.size())
        throw ContractViolation("cox_rate: covariate length " + std::to_string(z.size()) +
                                " does not match coefficient length " + std::to_string(coef.size()));
    if (!(t >= 0.0)) throw ContractViolation("cox_rate: t must be >= 0");
    const Hazard& base = which == EventKind::terminal ? setup.lambda0 : setup.lambda0_c;
    return base(t) * std::exp(dot(coef, z));
}

// ---------------------------------------------------------------------------
// Observed data
// ---------------------------------------------------------------------------

struct LongitudinalRow {
    double time = 0.0;
    std::size_t dim = 0;  // 0-based
    double value = 0.0;
};

struct Subject {
    std::string id;
    double event_time = 0.0;
    std::vector<double> event_covariates;
    std::vector<LongitudinalRow> rows;  // sorted by (time, dim)
};

/// Per-subject event time, covariates at the event time, and partial
/// longitudinal histories for the dimensions outside `missing_set`.
struct ObservedDataset {
    std::size_t p = 0;
    std::vector<Subject> subjects;
    std::vector<std::size_t> missing_set;  // 0-based
    double censor_bound = 0.0;

    std::size_t size() const noexcept { return subjects.size(); }

    bool is_missing(std::size_t d) const {
        return std::find(missing_set.begin(), missing_set.end(), d) != missing_set.end();
    }

    /// Dimensions whose histories are observed, in increasing order.
    std::vector<std::size_t> observed_dims() const {
        std::vector<std::size_t> out;
        for (std::size_t d = 0; d < p; ++d)
            if (!is_missing(d)) out.push_back(d);
        return out;
    }

    double max_event_time() const {
        double m = 0.0;
        for (const auto& s : subjects) m = std::max(m, s.event_time);
        return m;
    }

    bool has_longitudinal_rows() const {
        return std::any_of(subjects.begin(), subjects.end(), [](const Subject& s) { return !s.rows.empty(); });
    }

    /// Throws ValidationError listing every violated invariant.
    void validate() const {
        std::vector<std::string> diag;
        if (subjects.empty()) diag.emplace_back("dataset has no subjects");
        if (p == 0) diag.emplace_back("covariate dimension p must be >= 1");
        if (!(censor_bound > 0.0)) diag.emplace_back("censor_bound must be positive");
        for (auto d : missing_set)
            if (d >= p) diag.push_back("missing_set entry " + std::to_string(d + 1) + " exceeds p");
        for (const auto& s : subjects) {
            if (s.event_covariates.size() != p)
                diag.push_back("subject " + s.id + ": expected " + std::to_string(p) + " event covariates");
            if (!(s.event_time >= 0.0) || !std::isfinite(s.event_time))
                diag.push_back("subject " + s.id + ": event time must be finite and >= 0");
            if (s.event_time > censor_bound * (1.0 + 1e-12))
                diag.push_back("subject " + s.id + ": event time exceeds censor_bound");
            for (const auto& r : s.rows) {
                if (r.time > s.event_time * (1.0 + 1e-12))
                    diag.push_back("subject " + s.id + ": longitudinal time " + std::to_string(r.time) +
                                   " after event time");
                if (is_missing(r.dim))
                    diag.push_back("subject " + s.id + ": dimension " + std::to_string(r.dim + 1) +
                                   " is in the missing set");
            }
        }
        if (!diag.empty()) throw ValidationError(std::move(diag));
    }
};

}  // namespace jmsim
