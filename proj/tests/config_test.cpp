#include <gtest/gtest.h>

#include <string>

#include "jmsim/config.hpp"

using namespace jmsim;

namespace {

Json example1_simulate() {
    return Json::parse(R"({
        "model": {"preset": "example1"},
        "simulation": {"N": 50, "dt": 0.01, "censor_bound": 2.0, "seed": 3}
    })");
}

// Field and full message of the ConfigError thrown for `j`.
std::pair<std::string, std::string> config_error(const Json& j, const std::string& command) {
    try {
        parse_config(j, command);
    } catch (const ConfigError& e) {
        return {e.field(), e.what()};
    }
    ADD_FAILURE() << "configuration was accepted";
    return {};
}

}  // namespace

TEST(Config, PresetSimulateParses) {
    const auto rc = parse_config(example1_simulate(), "simulate");
    ASSERT_TRUE(rc.model.has_value());
    EXPECT_EQ(rc.model->spec.p, 7u);
    ASSERT_TRUE(rc.model->truth.has_value());
    EXPECT_EQ(rc.model->truth->b, Example1Truth::b());
    EXPECT_EQ(rc.simulate.N, 50u);
    EXPECT_EQ(rc.simulate.censor_bound, 2.0);
    EXPECT_EQ(rc.simulate.seed, 3u);
    EXPECT_EQ(rc.workers, 1);
}

TEST(Config, MissingCensorBoundNamesTheField) {
    auto j = example1_simulate();
    j["simulation"].erase("censor_bound");
    const auto [field, what] = config_error(j, "simulate");
    EXPECT_EQ(field, "simulation.censor_bound");
    EXPECT_NE(what.find("required field missing"), std::string::npos);
    // Other commands do not need it.
    EXPECT_NO_THROW(parse_config(j, "estimate"));
}

TEST(Config, UnknownFieldsAreRejected) {
    auto j = example1_simulate();
    j["simulation"]["NN"] = 4;
    EXPECT_EQ(config_error(j, "simulate").first, "simulation.NN");
    j = example1_simulate();
    j["bogus"] = true;
    EXPECT_EQ(config_error(j, "simulate").first, "bogus");
}

TEST(Config, EveryProblemIsListed) {
    auto j = example1_simulate();
    j["simulation"]["N"] = -1;
    j["estimation"]["mode"] = "partial";
    j["workers"] = "four";
    const auto [field, what] = config_error(j, "simulate");
    EXPECT_EQ(field, "simulation.N");
    EXPECT_NE(what.find("estimation.mode"), std::string::npos) << what;
    EXPECT_NE(what.find("workers"), std::string::npos) << what;
}

TEST(Config, ReplicateSeedsMustMatchReps) {
    Json j = Json::parse(R"({"replicate": {"reps": 3, "seeds": [1, 2]}})");
    EXPECT_EQ(config_error(j, "replicate").first, "replicate.seeds");
    j["replicate"]["seeds"] = {1, "x", 3};
    EXPECT_EQ(config_error(j, "replicate").first, "replicate.seeds");
    j["replicate"]["seeds"] = {4, 5, 6};
    const auto rc = parse_config(j, "replicate");
    EXPECT_EQ(rc.replicate.replicate_seeds, (std::vector<std::uint64_t>{4, 5, 6}));
}

TEST(Config, ReplicateInheritsEstimatorSettings) {
    const Json j = Json::parse(R"({"estimation": {"mode": "mean", "restarts": 2, "sim_factor": 3},
                                   "replicate": {"reps": 4, "n": 60, "bootstrap_reps": 0}})");
    const auto rc = parse_config(j, "replicate");
    EXPECT_EQ(rc.replicate.mode, LikelihoodMode::mean);
    EXPECT_EQ(rc.replicate.estimator.restarts, 2u);
    EXPECT_EQ(rc.replicate.sim_factor, 3.0);
    EXPECT_EQ(rc.replicate.n, 60u);
    EXPECT_EQ(rc.replicate.bootstrap_reps, 0u);
}

TEST(Config, ModelIsRequiredForSimulateAndEstimate) {
    EXPECT_EQ(config_error(Json::object(), "estimate").first, "model");
    EXPECT_NO_THROW(parse_config(Json::object(), "replicate"));
    EXPECT_THROW(parse_config(Json::object(), "fit"), ConfigError);
}

TEST(Config, ExplicitModelBuildsSpec) {
    const Json j = Json::parse(R"({
        "model": {
            "p": 3, "counting_index": 3,
            "linear_mixed": {"dims": [1], "alpha": [0.5], "effect": {"var": [2]}, "z2": {"poly": [0, 2]}},
            "static_dims": [2],
            "initial": {"mean": [0, 1, 0], "var": [0, 1, 0]},
            "truth": {"b": [1, 0, 0.5], "b_c": [0, 0, 0.1],
                      "lambda0": {"type": "exp_ratio", "floor": 1, "rate": 1},
                      "lambda0_c": {"type": "step", "dt": 0.5, "theta": [1, 2]}}
        },
        "simulation": {"censor_bound": 1.0}
    })");
    const auto rc = parse_config(j, "simulate");
    const auto& spec = rc.model->spec;
    EXPECT_EQ(spec.p, 3u);
    EXPECT_EQ(spec.counting_index, std::optional<std::size_t>(2));
    EXPECT_EQ(spec.static_dims, (std::vector<std::size_t>{1}));
    EXPECT_EQ(spec.linear_mixed->alpha, (std::vector<double>{0.5}));
    EXPECT_EQ(spec.linear_mixed->effect.var, (std::vector<double>{2.0}));
    EXPECT_EQ(spec.linear_mixed->z2(1.5), 3.0);
    EXPECT_EQ(spec.linear_mixed->z1(1.5), 0.0);
    const auto& truth = *rc.model->truth;
    EXPECT_EQ(truth.b, (std::vector<double>{1.0, 0.0, 0.5}));
    EXPECT_NEAR(truth.lambda0.cumulative(1.0), 0.7310585786300049, 1e-12);
    EXPECT_DOUBLE_EQ(truth.lambda0_c.cumulative(1.0), 1.5);
    EXPECT_EQ(parse_config(rc.resolved, "simulate").resolved, rc.resolved);
}

TEST(Config, ModelCoverageErrorsSurface) {
    const Json j = Json::parse(R"({"model": {"p": 2, "static_dims": [1], "initial": {"mean": [0, 0], "var": [1, 1]},
                                             "truth": {"lambda0": {"type": "constant", "value": 1}}},
                                   "simulation": {"censor_bound": 1}})");
    const auto [field, what] = config_error(j, "simulate");
    EXPECT_NE(what.find("coordinate 2 is not covered"), std::string::npos) << what;
}

TEST(Config, TruthNeedsBaselines) {
    const Json j = Json::parse(R"({"model": {"p": 1, "static_dims": [1], "initial": {"mean": [0], "var": [1]},
                                             "truth": {"b": [1]}},
                                   "simulation": {"censor_bound": 1}})");
    EXPECT_EQ(config_error(j, "simulate").first, "model.truth.lambda0");
}

TEST(Config, PresetRejectsStructuralOverrides) {
    Json j = example1_simulate();
    j["model"]["static_dims"] = {1};
    EXPECT_EQ(config_error(j, "simulate").first, "model.static_dims");
}

TEST(Config, ResolvedConfigReparsesToSameSettings) {
    Json j = example1_simulate();
    j["estimation"] = Json::parse(R"({"mode": "mean", "lasso": {"gammas": [0, 0.1]}, "partition": {"mode": "equal_length", "cells": 3}})");
    const auto a = parse_config(j, "simulate");
    EXPECT_TRUE(a.resolved.contains("simulation"));
    EXPECT_EQ(a.resolved["simulation"]["N"], 50);
    EXPECT_EQ(a.resolved["estimation"]["restarts"], 3);
    const auto b = parse_config(a.resolved, "simulate");
    EXPECT_EQ(a.resolved, b.resolved);
    EXPECT_EQ(b.estimate.mode, LikelihoodMode::mean);
    ASSERT_TRUE(b.estimate.lasso.has_value());
    EXPECT_EQ(b.estimate.lasso->gammas, (std::vector<double>{0.0, 0.1}));
    EXPECT_EQ(b.estimate.estimator.partition.mode, PartitionMode::equal_length);
    EXPECT_EQ(b.estimate.estimator.partition.cells, 3u);
}

TEST(Config, LassoGammasValidated) {
    Json j = example1_simulate();
    j["estimation"]["lasso"]["gammas"] = Json::array();
    EXPECT_EQ(config_error(j, "simulate").first, "estimation.lasso.gammas");
    j["estimation"]["lasso"]["gammas"] = {0.1, -1};
    EXPECT_EQ(config_error(j, "simulate").first, "estimation.lasso.gammas");
}

TEST(Config, MergeOverlaysObjects) {
    const Json base = Json::parse(R"({"a": {"x": 1, "y": 2}, "b": [1, 2], "c": 3})");
    const Json top = Json::parse(R"({"a": {"y": 5, "z": 6}, "b": [9]})");
    const Json m = merge_config(base, top);
    EXPECT_EQ(m, Json::parse(R"({"a": {"x": 1, "y": 5, "z": 6}, "b": [9], "c": 3})"));
}

TEST(Config, ScheduleOverrides) {
    EstimateSettings e;
    const auto s = resolve_schedule(e, 100);
    EXPECT_EQ(s.N, 1000u);
    EXPECT_DOUBLE_EQ(s.h, 1.0);
    e.N = 77;
    e.h = 0.3;
    e.dt = 0.02;
    const auto t = resolve_schedule(e, 100);
    EXPECT_EQ(t.N, 77u);
    EXPECT_EQ(t.h, 0.3);
    EXPECT_EQ(t.dt, 0.02);
}
