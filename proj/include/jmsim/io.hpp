#pragma once

// File formats: observed datasets (subjects CSV, longitudinal CSV, JSON
// sidecar), simulated samples, trajectory dumps and estimation results.
// Dimension indices are 1-based in every file.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "jmsim/density.hpp"
#include "jmsim/errors.hpp"
#include "jmsim/estimator.hpp"
#include "jmsim/experiments.hpp"
#include "jmsim/model.hpp"
#include "jmsim/simulator.hpp"

namespace jmsim::io {

/// Shortest decimal string that parses back to the same double.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw IoError("float formatting failed");
    return std::string(buf, end);
}

inline bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && end == s.data() + s.size() && std::isfinite(out);
}

inline bool parse_index(std::string_view s, std::size_t& out) {
    if (s.empty()) return false;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && end == s.data() + s.size();
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

struct CsvRow {
    std::size_t line = 0;  // 1-based line number in the file
    std::vector<std::string> cells;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<CsvRow> rows;
};

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    CsvTable t;
    std::string line;
    std::size_t no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++no;
        if (trim(line).empty()) continue;
        if (!have_header) {
            t.header = split_csv(line);
            have_header = true;
        } else {
            t.rows.push_back({no, split_csv(line)});
        }
    }
    if (!have_header) throw ValidationError({path.filename().string() + ": missing header row"});
    return t;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

// ---------------------------------------------------------------------------
// Observed datasets
// ---------------------------------------------------------------------------

struct Sidecar {
    std::vector<std::size_t> missing_set;  // 0-based
    double censor_bound = 0.0;
    std::optional<std::size_t> p;
};

inline Sidecar read_sidecar(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError({path.filename().string() + ": invalid JSON: " + e.what()});
    }
    std::vector<std::string> diag;
    Sidecar s;
    const std::string f = path.filename().string();
    if (!j.is_object()) throw ValidationError({f + ": top level must be an object"});
    if (!j.contains("censor_bound") || !j["censor_bound"].is_number())
        diag.push_back(f + ": censor_bound: required number");
    else
        s.censor_bound = j["censor_bound"].get<double>();
    if (!j.contains("missing_set") || !j["missing_set"].is_array()) {
        diag.push_back(f + ": missing_set: required array of 1-based dimension indices");
    } else {
        for (const auto& v : j["missing_set"]) {
            if (!v.is_number_integer() || v.get<long long>() < 1)
                diag.push_back(f + ": missing_set: entries must be integers >= 1");
            else
                s.missing_set.push_back(v.get<std::size_t>() - 1);
        }
    }
    if (j.contains("p")) {
        if (!j["p"].is_number_integer() || j["p"].get<long long>() < 1)
            diag.push_back(f + ": p: must be an integer >= 1");
        else
            s.p = j["p"].get<std::size_t>();
    }
    if (!diag.empty()) throw ValidationError(std::move(diag));
    std::sort(s.missing_set.begin(), s.missing_set.end());
    s.missing_set.erase(std::unique(s.missing_set.begin(), s.missing_set.end()), s.missing_set.end());
    return s;
}

/// Reads the subjects CSV (subject_id, event_time, z_1..z_p), the optional
/// longitudinal CSV (subject_id, time, dim_index, value) and the sidecar.
/// Every offending row is reported with its file and line number.
inline ObservedDataset ingest(const std::filesystem::path& subjects_csv, const std::filesystem::path& longitudinal_csv,
                              const std::filesystem::path& sidecar_json) {
    const Sidecar side = read_sidecar(sidecar_json);
    const CsvTable subj = read_csv(subjects_csv);
    const std::string sf = subjects_csv.filename().string();
    std::vector<std::string> diag;

    const auto& h = subj.header;
    if (h.size() < 3 || h[0] != "subject_id" || h[1] != "event_time")
        throw ValidationError({sf + " line 1: header must be subject_id,event_time,z_1,...,z_p"});
    const std::size_t p = h.size() - 2;
    for (std::size_t k = 0; k < p; ++k)
        if (h[k + 2] != "z_" + std::to_string(k + 1))
            diag.push_back(sf + " line 1: column " + std::to_string(k + 3) + " must be z_" + std::to_string(k + 1));
    if (side.p && *side.p != p)
        diag.push_back(sf + ": sidecar declares p = " + std::to_string(*side.p) + " but the header has " +
                       std::to_string(p) + " covariates");

    ObservedDataset data;
    data.p = p;
    data.censor_bound = side.censor_bound;
    data.missing_set = side.missing_set;
    for (auto d : data.missing_set)
        if (d >= p) diag.push_back(sidecar_json.filename().string() + ": missing_set entry " + std::to_string(d + 1) +
                                   " exceeds p = " + std::to_string(p));
    std::map<std::string, std::size_t> index;
    for (const auto& row : subj.rows) {
        const std::string at = sf + " line " + std::to_string(row.line) + ": ";
        if (row.cells.size() != p + 2) {
            diag.push_back(at + "expected " + std::to_string(p + 2) + " fields, found " +
                           std::to_string(row.cells.size()));
            continue;
        }
        Subject s;
        s.id = row.cells[0];
        bool ok = true;
        if (s.id.empty()) {
            diag.push_back(at + "empty subject_id");
            ok = false;
        }
        if (!parse_double(row.cells[1], s.event_time) || s.event_time < 0.0) {
            diag.push_back(at + "event_time must be a finite number >= 0");
            ok = false;
        } else if (side.censor_bound > 0.0 && s.event_time > side.censor_bound * (1.0 + 1e-12)) {
            diag.push_back(at + "event_time " + row.cells[1] + " exceeds censor_bound");
            ok = false;
        }
        s.event_covariates.resize(p);
        for (std::size_t k = 0; k < p; ++k) {
            if (!parse_double(row.cells[k + 2], s.event_covariates[k])) {
                diag.push_back(at + "z_" + std::to_string(k + 1) + " is not a finite number");
                ok = false;
            }
        }
        if (index.count(s.id)) {
            diag.push_back(at + "duplicate subject_id " + s.id);
            ok = false;
        }
        if (!ok) continue;
        index[s.id] = data.subjects.size();
        data.subjects.push_back(std::move(s));
    }

    if (!longitudinal_csv.empty()) {
        const CsvTable lon = read_csv(longitudinal_csv);
        const std::string lf = longitudinal_csv.filename().string();
        const std::vector<std::string> want{"subject_id", "time", "dim_index", "value"};
        if (lon.header != want) {
            diag.push_back(lf + " line 1: header must be subject_id,time,dim_index,value");
        } else {
            for (const auto& row : lon.rows) {
                const std::string at = lf + " line " + std::to_string(row.line) + ": ";
                if (row.cells.size() != 4) {
                    diag.push_back(at + "expected 4 fields, found " + std::to_string(row.cells.size()));
                    continue;
                }
                LongitudinalRow r;
                std::size_t dim1 = 0;
                if (!parse_double(row.cells[1], r.time) || r.time < 0.0) {
                    diag.push_back(at + "time must be a finite number >= 0");
                    continue;
                }
                if (!parse_index(row.cells[2], dim1) || dim1 < 1 || dim1 > p) {
                    diag.push_back(at + "dim_index must be an integer in 1.." + std::to_string(p));
                    continue;
                }
                if (!parse_double(row.cells[3], r.value)) {
                    diag.push_back(at + "value is not a finite number");
                    continue;
                }
                r.dim = dim1 - 1;
                auto it = index.find(row.cells[0]);
                if (it == index.end()) {
                    diag.push_back(at + "unknown subject_id " + row.cells[0]);
                    continue;
                }
                Subject& s = data.subjects[it->second];
                if (r.time > s.event_time * (1.0 + 1e-12)) {
                    diag.push_back(at + "time " + row.cells[1] + " is after the event time of subject " + s.id);
                    continue;
                }
                if (data.is_missing(r.dim)) {
                    diag.push_back(at + "dimension " + std::to_string(dim1) + " is in the missing set");
                    continue;
                }
                s.rows.push_back(r);
            }
        }
    }
    if (data.subjects.empty() && diag.empty()) diag.push_back(sf + ": no subjects");
    if (!diag.empty()) throw ValidationError(std::move(diag));
    for (auto& s : data.subjects)
        std::stable_sort(s.rows.begin(), s.rows.end(), [](const LongitudinalRow& a, const LongitudinalRow& b) {
            return a.time < b.time || (a.time == b.time && a.dim < b.dim);
        });
    data.validate();
    return data;
}

inline void write_subjects_csv(const ObservedDataset& data, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "subject_id,event_time";
    for (std::size_t k = 0; k < data.p; ++k) out << ",z_" << k + 1;
    out << '\n';
    for (const auto& s : data.subjects) {
        out << s.id << ',' << fmt(s.event_time);
        for (double v : s.event_covariates) out << ',' << fmt(v);
        out << '\n';
    }
}

inline void write_longitudinal_csv(const ObservedDataset& data, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "subject_id,time,dim_index,value\n";
    for (const auto& s : data.subjects)
        for (const auto& r : s.rows) out << s.id << ',' << fmt(r.time) << ',' << r.dim + 1 << ',' << fmt(r.value) << '\n';
}

inline void write_sidecar(const ObservedDataset& data, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["p"] = data.p;
    std::vector<std::size_t> miss;
    for (auto d : data.missing_set) miss.push_back(d + 1);
    j["missing_set"] = miss;
    j["censor_bound"] = data.censor_bound;
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

inline void write_dataset(const ObservedDataset& data, const std::filesystem::path& dir) {
    write_subjects_csv(data, dir / "subjects.csv");
    write_longitudinal_csv(data, dir / "longitudinal.csv");
    write_sidecar(data, dir / "sidecar.json");
}

// ---------------------------------------------------------------------------
// Simulation output
// ---------------------------------------------------------------------------

inline void write_samples_csv(const SampleSet& samples, const std::filesystem::path& path) {
    auto out = open_out(path);
    const std::size_t p = samples.empty() ? 0 : samples.samples.front().w.size();
    out << "sample_id,s,censored";
    for (std::size_t k = 0; k < p; ++k) out << ",w_" << k + 1;
    out << '\n';
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& smp = samples.samples[i];
        out << i + 1 << ',' << fmt(smp.s) << ',' << (smp.censored ? 1 : 0);
        for (double v : smp.w) out << ',' << fmt(v);
        out << '\n';
    }
}

inline void write_trajectories_csv(const TrajectoryGrid& grid, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "trajectory_id,step_index,time";
    for (std::size_t k = 0; k < grid.p(); ++k) out << ",z_" << k + 1;
    out << '\n';
    for (std::size_t j = 0; j < grid.trajectories(); ++j) {
        for (std::size_t k = 0; k <= grid.steps(); ++k) {
            out << j + 1 << ',' << k << ',' << fmt(grid.time(k, j));
            for (double v : grid.values(k, j)) out << ',' << fmt(v);
            out << '\n';
        }
    }
}

inline void write_contributions_csv(const MeanLikelihood& ml, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "cell_index,subject_id,log_uncensored,log_censored\n";
    for (const auto& c : ml.contributions)
        out << c.cell << ',' << c.subject << ',' << fmt(c.log_uncensored) << ',' << fmt(c.log_censored) << '\n';
}

// ---------------------------------------------------------------------------
// Estimation output
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json hazard_json(const Hazard& h) {
    nlohmann::ordered_json j;
    if (h.is_step()) {
        j["type"] = "step";
        j["dt"] = h.step().dt();
        j["theta"] = h.step().theta();
    } else {
        j["type"] = h.closed_form().name();
    }
    return j;
}

inline const char* mode_name(LikelihoodMode m) { return m == LikelihoodMode::full ? "full" : "mean"; }

inline nlohmann::ordered_json result_json(const EstimationResult& r) {
    nlohmann::ordered_json j;
    j["mode"] = mode_name(r.mode);
    j["seed"] = r.seed;
    j["schedule"] = {{"n", r.schedule.n}, {"dt", r.schedule.dt}, {"N", r.schedule.N}, {"h", r.schedule.h}};
    j["objective"] = r.objective_value;
    j["penalty"] = r.penalty;
    nlohmann::ordered_json params = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < r.names.size(); ++i) {
        nlohmann::ordered_json p;
        p["name"] = r.names[i];
        p["estimate"] = r.estimate[i];
        if (i < r.se.size()) p["se"] = r.se[i];
        if (i < r.ci95.size()) p["ci95"] = {r.ci95[i].lo, r.ci95[i].hi};
        params.push_back(p);
    }
    j["parameters"] = params;
    j["a"] = r.setup_hat.a;
    j["b"] = r.setup_hat.b;
    j["b_c"] = r.setup_hat.b_c;
    j["lambda0"] = hazard_json(r.setup_hat.lambda0);
    j["lambda0_c"] = hazard_json(r.setup_hat.lambda0_c);
    if (!r.selected.empty()) {
        std::vector<int> mask;
        for (bool b : r.selected) mask.push_back(b ? 1 : 0);
        j["selected"] = mask;
    }
    nlohmann::ordered_json trace;
    trace["evaluations"] = r.evaluations;
    trace["entries"] = r.objective_trace.size();
    if (!r.objective_trace.empty()) {
        trace["first"] = r.objective_trace.front().value;
        trace["last"] = r.objective_trace.back().value;
    }
    nlohmann::ordered_json steps = nlohmann::ordered_json::array();
    for (const auto& t : r.objective_trace)
        steps.push_back({{"restart", t.restart}, {"sweep", t.sweep}, {"block", t.block}, {"evals", t.evals},
                         {"value", t.value}});
    trace["steps"] = steps;
    j["trace"] = trace;
    j["warnings"] = r.warnings;
    return j;
}

inline void write_json(const nlohmann::ordered_json& j, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

inline void write_curve_csv(const CumHazardError& e, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "t,est_cum,true_cum\n";
    for (const auto& pt : e.curve) out << fmt(pt.t) << ',' << fmt(pt.estimate) << ',' << fmt(pt.truth) << '\n';
}

/// Cumulative hazard of an estimate on a grid, optionally with bootstrap bands.
inline void write_band_csv(const Hazard& est, const std::vector<double>& grid, const Band* band,
                           const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "t,est_cum" << (band ? ",lo,hi" : "") << '\n';
    for (std::size_t i = 0; i < grid.size(); ++i) {
        out << fmt(grid[i]) << ',' << fmt(est.cumulative(grid[i]));
        if (band) out << ',' << fmt(band->lo.at(i)) << ',' << fmt(band->hi.at(i));
        out << '\n';
    }
}

/// Table-style report: one row per parameter.
inline void write_report_csv(const ReplicationReport& rep, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "Var,n,Truth,Bias,SSE,CP\n";
    for (const auto& r : rep.rows)
        out << r.name << ',' << rep.n << ',' << fmt(r.truth) << ',' << fmt(r.bias) << ',' << fmt(r.sse) << ','
            << (std::isnan(r.cp) ? std::string("") : fmt(r.cp)) << '\n';
}

inline void write_hazard_summary_csv(const ReplicationReport& rep, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "baseline,n,mean_sup_error,mean_l2_error\n";
    out << "lambda0," << rep.n << ',' << fmt(rep.mean_sup_error) << ',' << fmt(rep.mean_l2_error) << '\n';
    out << "lambda0_c," << rep.n << ',' << fmt(rep.mean_sup_error_c) << ',' << fmt(rep.mean_l2_error_c) << '\n';
}

}  // namespace jmsim::io
