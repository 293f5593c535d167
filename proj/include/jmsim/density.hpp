#pragma once

// Kernel density estimate of (W_S, S) and the likelihoods built on it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "jmsim/errors.hpp"
#include "jmsim/model.hpp"
#include "jmsim/parallel.hpp"
#include "jmsim/simulator.hpp"

namespace jmsim {

namespace detail {
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))

inline void check_bandwidth(std::span<const double> h) {
    for (double v : h)
        if (!(v > 0.0) || !std::isfinite(v)) throw ContractViolation("kernel bandwidth must be positive and finite");
}

/// Running log-sum-exp accumulator.
struct LogSum {
    double m = -std::numeric_limits<double>::infinity();
    double s = 0.0;
    void add(double q) {
        if (q <= m) {
            s += std::exp(q - m);
        } else {
            s = s * std::exp(m - q) + 1.0;
            m = q;
        }
    }
    bool empty() const { return s == 0.0; }
    double value() const { return m + std::log(s); }
};
}  // namespace detail

/// Product Gaussian kernel: prod_i exp(-u_i^2 / (2 h_i^2)) / (h_i sqrt(2 pi)).
inline double log_gaussian_kernel(std::span<const double> u, std::span<const double> h) {
    if (u.size() != h.size()) throw ContractViolation("gaussian_kernel: offset and bandwidth lengths differ");
    detail::check_bandwidth(h);
    double q = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double r = u[i] / h[i];
        q += -0.5 * r * r - std::log(h[i]) - detail::kLogSqrt2Pi;
    }
    return q;
}

inline double gaussian_kernel(std::span<const double> u, std::span<const double> h) {
    return std::exp(log_gaussian_kernel(u, h));
}

/// Per-coordinate sample standard deviation of the (w, s) atoms.  A
/// coordinate with no spread gets scale 1.
inline std::vector<double> sample_scales(const SampleSet& samples) {
    if (samples.empty()) throw ContractViolation("sample_scales: empty sample set");
    const std::size_t d = samples.samples.front().w.size() + 1;
    const double n = static_cast<double>(samples.size());
    std::vector<double> mean(d, 0.0), m2(d, 0.0), out(d, 1.0);
    for (const auto& smp : samples.samples) {
        for (std::size_t i = 0; i + 1 < d; ++i) mean[i] += smp.w[i];
        mean[d - 1] += smp.s;
    }
    for (auto& v : mean) v /= n;
    for (const auto& smp : samples.samples) {
        for (std::size_t i = 0; i + 1 < d; ++i) m2[i] += (smp.w[i] - mean[i]) * (smp.w[i] - mean[i]);
        m2[d - 1] += (smp.s - mean[d - 1]) * (smp.s - mean[d - 1]);
    }
    if (samples.size() < 2) return out;
    for (std::size_t i = 0; i < d; ++i) {
        const double sd = std::sqrt(m2[i] / (n - 1.0));
        if (sd > 0.0 && std::isfinite(sd)) out[i] = sd;
    }
    return out;
}

/// h_i = h * scale_i.
inline std::vector<double> scaled_bandwidth(const SampleSet& samples, double h) {
    if (!(h > 0.0)) throw ContractViolation("base bandwidth must be positive");
    auto out = sample_scales(samples);
    for (auto& v : out) v *= h;
    return out;
}

/// (1/N) sum_i K_h(z - W_i, s - S_i) over the simulated atoms.
class EmpiricalPdf {
public:
    EmpiricalPdf(const SampleSet& samples, std::vector<double> h) : h_(std::move(h)) {
        if (samples.empty()) throw ContractViolation("EmpiricalPdf: empty sample set");
        d_ = samples.samples.front().w.size() + 1;
        if (h_.size() != d_) throw ContractViolation("EmpiricalPdf: bandwidth must have p+1 entries");
        detail::check_bandwidth(h_);
        n_ = samples.size();
        atoms_.reserve(n_ * d_);
        for (const auto& smp : samples.samples) {
            if (smp.w.size() + 1 != d_) throw ContractViolation("EmpiricalPdf: inconsistent sample dimension");
            atoms_.insert(atoms_.end(), smp.w.begin(), smp.w.end());
            atoms_.push_back(smp.s);
        }
        inv_h_.resize(d_);
        log_norm_ = -std::log(static_cast<double>(n_));
        for (std::size_t i = 0; i < d_; ++i) {
            inv_h_[i] = 1.0 / h_[i];
            log_norm_ -= std::log(h_[i]) + detail::kLogSqrt2Pi;
        }
    }

    /// Bandwidth h times the per-coordinate spread of the atoms.
    static EmpiricalPdf with_scaled_bandwidth(const SampleSet& samples, double h) {
        return EmpiricalPdf(samples, scaled_bandwidth(samples, h));
    }

    std::size_t dim() const noexcept { return d_; }
    std::size_t size() const noexcept { return n_; }
    const std::vector<double>& bandwidth() const noexcept { return h_; }

    double log_eval(std::span<const double> z, double s) const {
        if (z.size() + 1 != d_) throw ContractViolation("EmpiricalPdf: query has wrong dimension");
        detail::LogSum acc;
        const double* a = atoms_.data();
        for (std::size_t j = 0; j < n_; ++j, a += d_) {
            double q = 0.0;
            for (std::size_t i = 0; i + 1 < d_; ++i) {
                const double r = (z[i] - a[i]) * inv_h_[i];
                q += r * r;
            }
            const double r = (s - a[d_ - 1]) * inv_h_[d_ - 1];
            q += r * r;
            acc.add(-0.5 * q);
        }
        return acc.value() + log_norm_;
    }

    double operator()(std::span<const double> z, double s) const { return std::exp(log_eval(z, s)); }

private:
    std::vector<double> h_;
    std::size_t d_ = 0;
    std::size_t n_ = 0;
    std::vector<double> atoms_;
    std::vector<double> inv_h_;
    double log_norm_ = 0.0;
};

/// sum_i log p(Z_{T_i}, T_i) over the observed subjects.
inline double log_likelihood(const EmpiricalPdf& pdf, const ObservedDataset& data) {
    if (data.subjects.empty()) throw ContractViolation("log_likelihood: dataset is empty");
    std::vector<double> terms(data.size());
    parallel_for(data.size(), [&](std::size_t i) {
        const auto& s = data.subjects[i];
        terms[i] = pdf.log_eval(s.event_covariates, s.event_time);
    });
    double sum = 0.0;
    for (double v : terms) sum += v;
    return sum;
}

/// Builds the pdf for `setup` (normally by simulation) and evaluates it.
template <class PdfBuilder>
double log_likelihood(PdfBuilder&& build, const ObservedDataset& data, const ModelSetup& setup) {
    return log_likelihood(build(setup), data);
}

// ---------------------------------------------------------------------------
// Censored / uncensored conditional pdfs and the mean log-likelihood
// ---------------------------------------------------------------------------

namespace detail {
inline std::size_t at_risk(const SampleSet& samples, double t) {
    std::size_t n = 0;
    for (const auto& smp : samples.samples)
        if (smp.s >= t) ++n;
    return n;
}

inline std::size_t snapshot_slot(const SampleSet& samples, double t) {
    for (std::size_t i = 0; i < samples.snapshot_times.size(); ++i)
        if (std::abs(samples.snapshot_times[i] - t) <= 1e-12 * std::max(1.0, std::abs(t))) return i;
    throw ContractViolation("sample set carries no snapshot at t = " + std::to_string(t));
}
}  // namespace detail

/// Log of the uncensored conditional pdf on the window [t, t_next).  Zero
/// (the pdf equals 1) when s lies outside the window.
inline double log_uncensored_pdf(const SampleSet& samples, double t, double t_next, std::span<const double> z,
                                 double s, std::span<const double> h) {
    if (!(t < t_next)) throw ContractViolation("uncensored pdf: window must satisfy t < t'");
    if (!(t <= s && s < t_next)) return 0.0;
    if (samples.empty()) throw ContractViolation("uncensored pdf: empty sample set");
    if (h.size() != z.size() + 1) throw ContractViolation("uncensored pdf: bandwidth must have p+1 entries");
    detail::check_bandwidth(h);
    const std::size_t n_t = detail::at_risk(samples, t);
    if (n_t == 0) throw DegenerateWindow(t, t_next, "no simulated sample at risk");
    detail::LogSum acc;
    for (const auto& smp : samples.samples) {
        if (!(t <= smp.s && smp.s <= t_next)) continue;
        double q = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double r = (z[i] - smp.w[i]) / h[i];
            q += r * r;
        }
        const double r = (s - smp.s) / h[z.size()];
        acc.add(-0.5 * (q + r * r));
    }
    if (acc.empty()) throw DegenerateWindow(t, t_next, "no simulated event inside the window");
    double log_norm = -std::log(static_cast<double>(n_t));
    for (double v : h) log_norm -= std::log(v) + detail::kLogSqrt2Pi;
    return acc.value() + log_norm;
}

inline double uncensored_pdf_eval(const SampleSet& samples, double t, double t_next, std::span<const double> z,
                                  double s, std::span<const double> h) {
    return std::exp(log_uncensored_pdf(samples, t, t_next, z, s, h));
}

/// Log of the censored pdf at the window end t_next: density of the observed
/// coordinates `dims` at t_next among simulated trajectories still alive
/// past t_next, normalized by the count at risk at t.  Zero when s < t_next.
/// The simulated state at t_next is read from the sample snapshots.  With
/// no observed coordinates the kernel is 1 and the value is the simulated
/// conditional survival fraction.
inline double log_censored_pdf(const SampleSet& samples, double t, double t_next,
                               std::span<const std::size_t> dims, std::span<const double> z_obs, double s,
                               std::span<const double> h) {
    if (!(t < t_next)) throw ContractViolation("censored pdf: window must satisfy t < t'");
    if (!(s >= t_next)) return 0.0;
    if (samples.empty()) throw ContractViolation("censored pdf: empty sample set");
    if (dims.size() != z_obs.size()) throw ContractViolation("censored pdf: observed vector length mismatch");
    const std::size_t n_t = detail::at_risk(samples, t);
    if (n_t == 0) throw DegenerateWindow(t, t_next, "no simulated sample at risk");
    const std::size_t slot = dims.empty() ? 0 : detail::snapshot_slot(samples, t_next);
    for (auto d : dims)
        if (d >= h.size()) throw ContractViolation("censored pdf: dimension index outside bandwidth");
    detail::LogSum acc;
    for (const auto& smp : samples.samples) {
        // A sample censored at C has lived through C.
        if (!(smp.s > t_next || (smp.censored && smp.s >= t_next))) continue;
        double q = 0.0;
        if (!dims.empty()) {
            const auto& w = smp.snapshots.at(slot);
            if (w.empty()) throw ContractViolation("censored pdf: surviving sample lacks its snapshot");
            for (std::size_t i = 0; i < dims.size(); ++i) {
                const double r = (z_obs[i] - w[dims[i]]) / h[dims[i]];
                q += r * r;
            }
        }
        acc.add(-0.5 * q);
    }
    if (acc.empty()) throw DegenerateWindow(t, t_next, "no simulated sample survives past the window");
    double log_norm = -std::log(static_cast<double>(n_t));
    for (auto d : dims) log_norm -= std::log(h[d]) + detail::kLogSqrt2Pi;
    return acc.value() + log_norm;
}

inline double censored_pdf_eval(const SampleSet& samples, double t, double t_next,
                                std::span<const std::size_t> dims, std::span<const double> z_obs, double s,
                                std::span<const double> h) {
    return std::exp(log_censored_pdf(samples, t, t_next, dims, z_obs, s, h));
}

/// Boundaries 0 = t_0 < t_1 < ... < t_m.
struct Partition {
    std::vector<double> boundaries;

    std::size_t cells() const noexcept { return boundaries.empty() ? 0 : boundaries.size() - 1; }

    void validate() const {
        if (boundaries.size() < 2) throw ContractViolation("partition needs at least one cell");
        if (boundaries.front() != 0.0) throw ContractViolation("partition must start at 0");
        for (std::size_t i = 1; i < boundaries.size(); ++i)
            if (!(boundaries[i] > boundaries[i - 1])) throw ContractViolation("partition boundaries must increase");
    }
};

enum class PartitionMode { uniform_times, equal_length };

namespace detail {
inline std::vector<double> observation_times(const Subject& s) {
    std::vector<double> t;
    for (const auto& r : s.rows) t.push_back(r.time);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end(), [](double a, double b) { return std::abs(a - b) <= 1e-9; }), t.end());
    return t;
}
}  // namespace detail

/// Uniform-times mode uses the observation times of the subject with the
/// greatest event time (the data must share one observation schedule);
/// equal-length mode splits [0, max T] into m_hint cells.
inline Partition build_partition(const ObservedDataset& data, PartitionMode mode, std::size_t m_hint = 1) {
    if (data.subjects.empty()) throw ContractViolation("build_partition: dataset is empty");
    const double t_max = data.max_event_time();
    if (!(t_max > 0.0)) throw ContractViolation("build_partition: all event times are zero");
    Partition part;
    part.boundaries.push_back(0.0);
    if (mode == PartitionMode::equal_length) {
        if (m_hint < 1) throw ContractViolation("build_partition: m_hint must be >= 1");
        for (std::size_t j = 1; j <= m_hint; ++j)
            part.boundaries.push_back(j == m_hint ? t_max : t_max * static_cast<double>(j) / static_cast<double>(m_hint));
        return part;
    }
    std::size_t star = 0;
    for (std::size_t i = 1; i < data.size(); ++i)
        if (data.subjects[i].event_time > data.subjects[star].event_time) star = i;
    const auto ref = detail::observation_times(data.subjects[star]);
    for (const auto& s : data.subjects) {
        const auto ts = detail::observation_times(s);
        const std::size_t common = std::min(ts.size(), ref.size());
        for (std::size_t j = 0; j + 1 < common; ++j) {
            if (std::abs(ts[j] - ref[j]) > 1e-9)
                throw ConfigError("partition.mode",
                                  "uniform-times partition requires a shared observation schedule (subject " + s.id +
                                      " differs)");
        }
    }
    for (double t : ref)
        if (t > part.boundaries.back() + 1e-12) part.boundaries.push_back(t);
    if (part.boundaries.back() < data.subjects[star].event_time - 1e-12)
        part.boundaries.push_back(data.subjects[star].event_time);
    return part;
}

/// Value of the observed coordinates of subject `s` at time t, linearly
/// interpolated between flanking observations (the event-time covariates
/// act as the final observation); held flat outside the observed range.
inline std::vector<double> observed_at(const Subject& s, std::span<const std::size_t> dims, double t) {
    std::vector<double> out(dims.size());
    for (std::size_t i = 0; i < dims.size(); ++i) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& r : s.rows)
            if (r.dim == dims[i]) pts.emplace_back(r.time, r.value);
        pts.emplace_back(s.event_time, s.event_covariates.at(dims[i]));
        std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        if (t <= pts.front().first) {
            out[i] = pts.front().second;
            continue;
        }
        if (t >= pts.back().first) {
            out[i] = pts.back().second;
            continue;
        }
        for (std::size_t k = 1; k < pts.size(); ++k) {
            if (t <= pts[k].first) {
                const auto& [t0, v0] = pts[k - 1];
                const auto& [t1, v1] = pts[k];
                out[i] = t1 > t0 ? v0 + (v1 - v0) * (t - t0) / (t1 - t0) : v1;
                break;
            }
        }
    }
    return out;
}

struct CellContribution {
    std::size_t cell = 0;
    std::string subject;
    double log_uncensored = 0.0;
    double log_censored = 0.0;
};

struct MeanLikelihood {
    double value = 0.0;
    std::vector<std::string> warnings;
    std::vector<CellContribution> contributions;  // filled on request
};

/// Partition-averaged log-likelihood combining the uncensored event-time
/// density and the censored density of the observed coordinates:
///   (1/m) sum_j (1/n_{t_{j-1}}) sum_i [log p^u + log p^c].
/// Cells with no observed subject at risk are skipped with a warning;
/// degenerate simulated windows throw DegenerateWindow tagged with the cell.
inline MeanLikelihood mean_log_likelihood(const SampleSet& samples, const ObservedDataset& data,
                                          const Partition& partition, std::span<const double> h,
                                          bool keep_contributions = false) {
    if (data.subjects.empty()) throw ContractViolation("mean_log_likelihood: dataset is empty");
    partition.validate();
    if (partition.boundaries.back() < data.max_event_time() - 1e-12)
        throw ContractViolation("mean_log_likelihood: partition does not cover the largest event time");
    const auto dims = data.observed_dims();
    const std::size_t m = partition.cells();
    MeanLikelihood out;
    for (std::size_t j = 1; j <= m; ++j) {
        const double lo = partition.boundaries[j - 1];
        const double hi = partition.boundaries[j];
        std::size_t n_lo = 0;
        for (const auto& s : data.subjects)
            if (s.event_time >= lo) ++n_lo;
        if (n_lo == 0) {
            out.warnings.push_back("cell " + std::to_string(j) + " skipped: no observed subject at risk");
            continue;
        }
        double cell_sum = 0.0;
        try {
            for (const auto& s : data.subjects) {
                const double lu = log_uncensored_pdf(samples, lo, hi, s.event_covariates, s.event_time, h);
                double lc = 0.0;
                if (s.event_time >= hi) {
                    const auto z = observed_at(s, dims, hi);
                    lc = log_censored_pdf(samples, lo, hi, dims, z, s.event_time, h);
                }
                cell_sum += lu + lc;
                if (keep_contributions && (lu != 0.0 || lc != 0.0))
                    out.contributions.push_back({j, s.id, lu, lc});
            }
        } catch (DegenerateWindow& e) {
            e.cell = j;
            throw;
        }
        out.value += cell_sum / static_cast<double>(n_lo);
    }
    out.value /= static_cast<double>(m);
    return out;
}

}  // namespace jmsim
