#pragma once

// Command-line front end: simulate | estimate | replicate | validate.
// Requires CLI11.hpp on the include path.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "jmsim/config.hpp"
#include "jmsim/errors.hpp"
#include "jmsim/estimator.hpp"
#include "jmsim/experiments.hpp"
#include "jmsim/io.hpp"
#include "jmsim/parallel.hpp"
#include "jmsim/simulator.hpp"

namespace jmsim::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputEnv = "JMSIM_OUTPUT_DIR";

enum ExitCode : int { ok = 0, failure = 1, validation = 2, non_convergence = 3, io_failure = 4 };

namespace detail {

namespace fs = std::filesystem;

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw ConfigError("config", std::string("invalid JSON in ") + path + ": " + e.what());
    }
}

/// A manifest embeds the resolved config under "config"; accept either form.
inline Json load_config(const std::string& path) {
    if (path.empty()) return Json::object();
    Json j = read_json_file(path);
    if (!j.is_object()) throw ConfigError("config", "top level must be an object");
    if (j.contains("manifest_version") && j.contains("config")) j = j["config"];
    j.erase("command");
    return j;
}

inline std::vector<double> parse_list(const std::string& text, const std::string& field) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        double v = 0.0;
        if (!io::parse_double(io::trim(item), v)) throw ConfigError(field, "malformed list entry '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError(field, "empty list");
    return out;
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& text, const std::string& field) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t v = 0;
        if (!io::parse_index(io::trim(item), v)) throw ConfigError(field, "malformed seed '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError(field, "empty seed list");
    return out;
}

inline std::string output_dir(const RunConfig& rc) {
    if (!rc.output_dir.empty()) return rc.output_dir;
    if (const char* env = std::getenv(kOutputEnv); env && *env) return env;
    return "jmsim_out";
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

inline void write_run_files(const RunConfig& rc, const fs::path& dir, nlohmann::ordered_json extra,
                            double seconds) {
    io::write_json(nlohmann::ordered_json(rc.resolved), dir / "resolved_config.json");
    nlohmann::ordered_json m;
    m["manifest_version"] = 1;
    m["tool"] = "jmsim";
    m["version"] = kVersion;
    m["command"] = rc.command;
    m["config"] = rc.resolved;
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    m["wall_seconds"] = seconds;
    io::write_json(m, dir / "manifest.json");
}

inline nlohmann::ordered_json schedule_json(const TuningSchedule& s) {
    return {{"n", s.n}, {"dt", s.dt}, {"N", s.N}, {"h", s.h}};
}

inline ObservedDataset load_dataset(const RunConfig& rc) {
    if (rc.inputs.subjects.empty()) throw ConfigError("inputs.subjects", "required field missing");
    if (rc.inputs.sidecar.empty()) throw ConfigError("inputs.sidecar", "required field missing");
    for (const auto& f : {rc.inputs.subjects, rc.inputs.longitudinal, rc.inputs.sidecar})
        if (!f.empty() && !fs::exists(f)) throw IoError("cannot open " + f);
    return io::ingest(rc.inputs.subjects, rc.inputs.longitudinal, rc.inputs.sidecar);
}

// ---------------------------------------------------------------------------

inline int cmd_simulate(const RunConfig& rc, std::ostream& out) {
    Timer timer;
    const auto& s = rc.simulate;
    const ModelSetup& truth = *rc.model->truth;
    const fs::path dir = output_dir(rc);
    const auto samples = gen_sim_joint(truth, rc.model->spec, s.dt, s.N, s.censor_bound, s.seed);
    io::write_samples_csv(samples, dir / "samples.csv");
    if (s.trajectories) {
        const std::size_t steps = grid_index(s.censor_bound, s.dt);
        const auto grid = rc.model->spec.counting_index
                              ? gen_sim_counting(truth, rc.model->spec, s.dt, steps, s.N, s.seed)
                              : jmsim::detail::continuous_grid(rc.model->spec.with_params(truth.a), {}, s.dt,
                                                               steps, s.N, s.seed, nullptr);
        io::write_trajectories_csv(grid, dir / "trajectories.csv");
    }
    if (s.dataset) {
        ObservedDataset data;
        data.p = rc.model->spec.p;
        data.censor_bound = s.censor_bound;
        for (std::size_t d = 0; d < data.p; ++d) data.missing_set.push_back(d);
        for (std::size_t i = 0; i < samples.size(); ++i)
            data.subjects.push_back({std::to_string(i + 1), samples.samples[i].s, samples.samples[i].w, {}});
        io::write_dataset(data, dir);
    }
    std::size_t censored = 0;
    for (const auto& smp : samples.samples) censored += smp.censored ? 1 : 0;
    write_run_files(rc, dir, {{"seeds", {{"simulation", s.seed}}}, {"samples", s.N}, {"censored", censored}},
                    timer.seconds());
    out << "wrote " << s.N << " samples (" << censored << " censored) to " << (dir / "samples.csv").string() << '\n';
    return ok;
}

inline int cmd_estimate(const RunConfig& rc, std::ostream& out) {
    Timer timer;
    const auto& e = rc.estimate;
    if (e.mode == LikelihoodMode::mean && rc.inputs.longitudinal.empty())
        throw ConfigError("inputs.longitudinal", "mean mode needs a longitudinal file");
    const ObservedDataset data = load_dataset(rc);
    if (data.p != rc.model->spec.p)
        throw ConfigError("model.p", "model has p = " + std::to_string(rc.model->spec.p) + " but the data have p = " +
                                         std::to_string(data.p));
    if (e.mode == LikelihoodMode::mean && !data.has_longitudinal_rows())
        throw ConfigError("inputs.longitudinal", "mean mode needs at least one longitudinal row");
    const TuningSchedule sched = resolve_schedule(e, data.size());
    const fs::path dir = output_dir(rc);

    EstimationResult fit;
    std::optional<LassoResult> lasso;
    try {
        fit = maximize(data, rc.model->spec, sched, e.mode, e.estimator);
        if (e.lasso) {
            lasso = adaptive_lasso(data, rc.model->spec, sched, e.mode, e.estimator, fit, *e.lasso);
            fit = lasso->fit;
        }
    } catch (const NonConvergence& nc) {
        nlohmann::ordered_json t;
        t["error"] = nc.what();
        t["trace"] = nc.trace();
        io::write_json(t, dir / "trace.json");
        throw;
    }

    const std::vector<double> grid = uniform_grid(0.0, data.censor_bound, e.curve_points);
    std::optional<BootstrapResult> boot;
    if (e.bootstrap.reps > 0) {
        BootstrapOptions bo = e.bootstrap;
        bo.grid = grid;
        boot = bootstrap_bands(data, rc.model->spec, sched, e.mode, e.estimator, fit, bo);
        attach_intervals(fit, *boot);
    }

    io::write_json(io::result_json(fit), dir / "result.json");
    io::write_band_csv(fit.setup_hat.lambda0, grid, boot ? &boot->cum_hazard : nullptr, dir / "cum_hazard.csv");
    if (rc.model->spec.counting_index)
        io::write_band_csv(fit.setup_hat.lambda0_c, grid, boot ? &boot->cum_hazard_c : nullptr,
                           dir / "cum_hazard_c.csv");
    if (lasso) {
        auto f = io::open_out(dir / "lasso_path.csv");
        f << "gamma,holdout_score";
        for (std::size_t k = 0; k < data.p; ++k) f << ",b_" << k + 1;
        for (std::size_t k = 0; k < data.p; ++k) f << ",b_c_" << k + 1;
        f << '\n';
        for (const auto& pt : lasso->path) {
            f << io::fmt(pt.gamma) << ',' << io::fmt(pt.holdout_score);
            for (double v : pt.b) f << ',' << io::fmt(v);
            for (double v : pt.b_c) f << ',' << io::fmt(v);
            f << '\n';
        }
    }
    if (e.mode == LikelihoodMode::mean) {
        const Objective obj(rc.model->spec, data, sched, e.mode, e.estimator.partition);
        io::write_contributions_csv(obj.mean_detail(fit.setup_hat, fit.seed), dir / "cells.csv");
    }

    nlohmann::ordered_json extra;
    extra["seeds"] = {{"estimator", e.estimator.seed}};
    if (e.lasso) extra["seeds"]["lasso_split"] = e.lasso->split_seed;
    if (boot) extra["seeds"]["bootstrap"] = e.bootstrap.seed;
    extra["schedule"] = schedule_json(sched);
    extra["subjects"] = data.size();
    extra["evaluations"] = fit.evaluations;
    extra["objective"] = fit.objective_value;
    if (lasso) extra["lasso_fits"] = e.lasso->gammas.size();
    if (boot) extra["failures"] = boot->reps_failed;
    write_run_files(rc, dir, extra, timer.seconds());
    out << "objective " << io::fmt(fit.objective_value) << " after " << fit.evaluations << " evaluations\n";
    for (std::size_t i = 0; i < fit.names.size(); ++i) out << "  " << fit.names[i] << " = " << io::fmt(fit.estimate[i]) << '\n';
    if (lasso) out << "lasso: " << e.lasso->gammas.size() << " penalized fits, chosen gamma " << io::fmt(lasso->gamma) << '\n';
    return ok;
}

inline int cmd_replicate(const RunConfig& rc, bool resume, std::ostream& out) {
    Timer timer;
    StudyOptions opt = rc.replicate;
    const fs::path dir = output_dir(rc);
    const fs::path store = dir / "replicates";
    if (!resume) {
        std::error_code ec;
        fs::remove_all(store, ec);
    }
    opt.store_dir = store.string();
    const ReplicationReport rep = replicate_study(opt);
    io::write_report_csv(rep, dir / "report.csv");
    io::write_hazard_summary_csv(rep, dir / "hazard_errors.csv");
    {
        auto f = io::open_out(dir / "replicates.csv");
        f << "replicate,data_seed,ok";
        for (const auto& n : rep.names) f << ',' << n;
        f << ",sup_error,sup_error_c\n";
        for (const auto& r : rep.records) {
            f << r.index << ',' << r.data_seed << ',' << (r.ok ? 1 : 0);
            for (std::size_t i = 0; i < rep.names.size(); ++i)
                f << ',' << (r.ok && i < r.estimate.size() ? io::fmt(r.estimate[i]) : std::string());
            f << ',' << (r.ok ? io::fmt(r.sup_error) : "") << ',' << (r.ok ? io::fmt(r.sup_error_c) : "") << '\n';
        }
    }
    nlohmann::ordered_json extra;
    std::vector<std::uint64_t> seeds;
    for (const auto& r : rep.records) seeds.push_back(r.data_seed);
    extra["seeds"] = {{"master", opt.seed}, {"replicates", seeds}};
    extra["schedule"] = schedule_json(estimation_schedule(opt.n, opt.sim_factor, opt.kernel_factor));
    extra["failures"] = rep.failed;
    extra["failure_flag"] = rep.failure_flag;
    extra["resumed"] = rep.resumed;
    write_run_files(rc, dir, extra, timer.seconds());
    out << "replicates: " << rep.reps << " (failed " << rep.failed << ", resumed " << rep.resumed << ")\n";
    if (rep.failure_flag) out << "warning: more than 10% of replicates failed\n";
    return ok;
}

inline int cmd_validate(const RunConfig& rc, std::ostream& out) {
    if (rc.inputs.subjects.empty() && rc.inputs.sidecar.empty()) {
        out << "config ok\n";
        return ok;
    }
    const ObservedDataset data = load_dataset(rc);
    std::size_t rows = 0;
    for (const auto& s : data.subjects) rows += s.rows.size();
    out << "dataset ok: " << data.size() << " subjects, p = " << data.p << ", " << rows
        << " longitudinal rows, missing set size " << data.missing_set.size() << '\n';
    return ok;
}

}  // namespace detail

/// Parses argv, runs one subcommand and returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Simulation-based joint model estimation"};
    app.require_subcommand(1);
    app.fallthrough();
    int workers = 0;
    bool strict = false;
    app.add_option("--workers", workers, "Cap on worker threads (results do not depend on it)")->check(CLI::Range(1, 4096));
    app.add_flag("--config-strict", strict, "Config file values win over flags");

    struct Common {
        std::string config, output_dir;
    };
    Common common;
    Json flags = Json::object();
    auto set = [&flags](const std::string& path, Json v) {
        Json* node = &flags;
        std::stringstream ss(path);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(ss, part, '.')) parts.push_back(part);
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
        (*node)[parts.back()] = std::move(v);
    };

    std::optional<std::uint64_t> seed, n_samples, reps, n_subj, restarts, sweeps, boot_reps;
    std::optional<double> dt, censor;
    std::string mode, lasso_grid, seed_list, resume_dir, subjects, longitudinal, sidecar;
    bool trajectories = false, dataset = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "Run config JSON or a previous manifest");
        sub->add_option("--output-dir", common.output_dir, std::string("Output directory (default $") + kOutputEnv + ")");
    };
    auto add_inputs = [&](CLI::App* sub) {
        sub->add_option("--subjects", subjects, "Subjects CSV");
        sub->add_option("--longitudinal", longitudinal, "Longitudinal CSV");
        sub->add_option("--sidecar", sidecar, "Sidecar JSON");
    };

    auto* sim = app.add_subcommand("simulate", "Draw joint samples from a truth setup");
    add_common(sim);
    sim->add_option("--N", n_samples, "Number of samples");
    sim->add_option("--dt", dt, "Simulation step");
    sim->add_option("--censor-bound", censor, "Censor bound C");
    sim->add_option("--seed", seed, "Simulation seed");
    sim->add_flag("--trajectories", trajectories, "Also write longitudinal paths");
    sim->add_flag("--dataset", dataset, "Also write the samples as an observed dataset");

    auto* est = app.add_subcommand("estimate", "Fit a setup to an observed dataset");
    add_common(est);
    add_inputs(est);
    est->add_option("--mode", mode, "Likelihood: full or mean")->check(CLI::IsMember({"full", "mean"}));
    est->add_option("--lasso", lasso_grid, "Adaptive-LASSO penalty grid, e.g. 0,0.01,0.1");
    est->add_option("--seed", seed, "Estimator seed");
    est->add_option("--restarts", restarts, "Optimizer restarts");
    est->add_option("--max-sweeps", sweeps, "Block-coordinate sweeps per restart");
    est->add_option("--bootstrap-reps", boot_reps, "Bootstrap replicates (0 disables)");

    auto* rep = app.add_subcommand("replicate", "Run the Example-1 replication study");
    add_common(rep);
    rep->add_option("--reps", reps, "Replicates");
    rep->add_option("--n", n_subj, "Subjects per replicate");
    rep->add_option("--seed", seed, "Master seed");
    rep->add_option("--seeds", seed_list, "Explicit comma-separated data seeds, one per replicate");
    rep->add_option("--bootstrap-reps", boot_reps, "Bootstrap replicates per replicate (0 disables coverage)");
    rep->add_option("--restarts", restarts, "Optimizer restarts");
    rep->add_option("--max-sweeps", sweeps, "Block-coordinate sweeps per restart");
    rep->add_option("--resume", resume_dir, "Continue a partial run in this directory");

    auto* val = app.add_subcommand("validate", "Check a config and/or dataset files");
    add_common(val);
    add_inputs(val);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, er;
        const int code = app.exit(e, o, er);
        out << o.str();
        err << er.str();
        return code == 0 ? ok : validation;
    }

    CLI::App* chosen = app.get_subcommands().front();
    const std::string command = chosen->get_name();
    try {
        if (!common.output_dir.empty()) set("output_dir", common.output_dir);
        if (!resume_dir.empty()) set("output_dir", resume_dir);
        if (workers > 0) set("workers", workers);
        if (!subjects.empty()) set("inputs.subjects", subjects);
        if (!longitudinal.empty()) set("inputs.longitudinal", longitudinal);
        if (!sidecar.empty()) set("inputs.sidecar", sidecar);
        if (command == "simulate") {
            if (n_samples) set("simulation.N", *n_samples);
            if (dt) set("simulation.dt", *dt);
            if (censor) set("simulation.censor_bound", *censor);
            if (seed) set("simulation.seed", *seed);
            if (trajectories) set("simulation.trajectories", true);
            if (dataset) set("simulation.dataset", true);
        } else if (command == "estimate") {
            if (!mode.empty()) set("estimation.mode", mode);
            if (!lasso_grid.empty()) set("estimation.lasso.gammas", detail::parse_list(lasso_grid, "estimation.lasso.gammas"));
            if (seed) set("estimation.seed", *seed);
            if (boot_reps) set("estimation.bootstrap.reps", *boot_reps);
        } else if (command == "replicate") {
            if (reps) set("replicate.reps", *reps);
            if (n_subj) set("replicate.n", *n_subj);
            if (seed) set("replicate.seed", *seed);
            if (!seed_list.empty()) set("replicate.seeds", detail::parse_seed_list(seed_list, "replicate.seeds"));
            if (boot_reps) set("replicate.bootstrap_reps", *boot_reps);
        }
        if (restarts) set("estimation.restarts", *restarts);
        if (sweeps) set("estimation.max_sweeps", *sweeps);

        const Json file = detail::load_config(common.config);
        const Json merged = strict ? merge_config(flags, file) : merge_config(file, flags);
        RunConfig rc = parse_config(merged, command);
        rc.output_dir = detail::output_dir(rc);
        rc.resolved["output_dir"] = rc.output_dir;
        set_workers(rc.workers);

        if (command == "simulate") return detail::cmd_simulate(rc, out);
        if (command == "estimate") return detail::cmd_estimate(rc, out);
        if (command == "replicate") return detail::cmd_replicate(rc, !resume_dir.empty(), out);
        return detail::cmd_validate(rc, out);
    } catch (const ValidationError& e) {
        err << "validation error:\n";
        for (const auto& d : e.diagnostics()) err << "  " << d << '\n';
        return validation;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return validation;
    } catch (const ContractViolation& e) {
        err << "invalid input: " << e.what() << '\n';
        return validation;
    } catch (const NonConvergence& e) {
        err << "non-convergence: " << e.what() << '\n';
        err << "trace:";
        for (double v : e.trace()) err << ' ' << io::fmt(v);
        err << '\n';
        return non_convergence;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << '\n';
        return io_failure;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return failure;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "I/O error: " << e.what() << '\n';
        return io_failure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return failure;
    }
}

}  // namespace jmsim::cli
