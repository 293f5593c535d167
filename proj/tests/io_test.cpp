#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <string>

#include "jmsim/experiments.hpp"
#include "jmsim/io.hpp"
#include "test_util.hpp"

using namespace jmsim;
using jmsim::tu::slurp;
using jmsim::tu::spit;
using jmsim::tu::TempDir;

namespace {

const char* kSidecar = R"({"p": 2, "missing_set": [2], "censor_bound": 2.0})";

const char* kSubjects =
    "subject_id,event_time,z_1,z_2\n"
    "a,0.8,0.5,1\n"
    "b,2,-0.25,0\n";

const char* kLongitudinal =
    "subject_id,time,dim_index,value\n"
    "a,0.5,1,0.4\n"
    "a,0.0,1,0.1\n"
    "b,1.5,1,-0.2\n";

struct Files {
    TempDir dir{"io"};
    std::filesystem::path subjects = dir / "subjects.csv";
    std::filesystem::path longitudinal = dir / "longitudinal.csv";
    std::filesystem::path sidecar = dir / "sidecar.json";

    Files(const std::string& s = kSubjects, const std::string& l = kLongitudinal, const std::string& c = kSidecar) {
        spit(subjects, s);
        spit(longitudinal, l);
        spit(sidecar, c);
    }
};

// Runs ingest and returns the diagnostics it rejected the input with.
std::vector<std::string> rejection(const Files& f, bool with_longitudinal = true) {
    try {
        io::ingest(f.subjects, with_longitudinal ? f.longitudinal : std::filesystem::path{}, f.sidecar);
    } catch (const ValidationError& e) {
        return e.diagnostics();
    }
    ADD_FAILURE() << "input was accepted";
    return {};
}

bool mentions(const std::vector<std::string>& diags, const std::string& needle) {
    for (const auto& d : diags)
        if (d.find(needle) != std::string::npos) return true;
    return false;
}

}  // namespace

TEST(Format, ShortestRoundTrip) {
    EXPECT_EQ(io::fmt(0.1), "0.1");
    EXPECT_EQ(io::fmt(2.0), "2");
    EXPECT_EQ(io::fmt(-1.5e-300), "-1.5e-300");
    EXPECT_EQ(io::fmt(std::numeric_limits<double>::infinity()), "inf");
    for (double v : {1.0 / 3.0, std::exp(1.0), -123456.789e10, 5e-324}) {
        double back = 0.0;
        ASSERT_TRUE(io::parse_double(io::fmt(v), back));
        EXPECT_EQ(back, v);
    }
}

TEST(Format, ParsingIsStrict) {
    double d = 0.0;
    EXPECT_TRUE(io::parse_double("+1.5", d));
    EXPECT_EQ(d, 1.5);
    EXPECT_FALSE(io::parse_double("1.5x", d));
    EXPECT_FALSE(io::parse_double("", d));
    EXPECT_FALSE(io::parse_double("nan", d));
    std::size_t k = 0;
    EXPECT_TRUE(io::parse_index("12", k));
    EXPECT_EQ(k, 12u);
    EXPECT_FALSE(io::parse_index("-1", k));
    EXPECT_FALSE(io::parse_index("1.0", k));
    EXPECT_EQ(io::split_csv(" a , b,,c\r"), (std::vector<std::string>{"a", "b", "", "c"}));
}

TEST(Ingest, ValidFilesLoad) {
    const Files f;
    const auto d = io::ingest(f.subjects, f.longitudinal, f.sidecar);
    EXPECT_EQ(d.p, 2u);
    EXPECT_EQ(d.censor_bound, 2.0);
    EXPECT_EQ(d.missing_set, (std::vector<std::size_t>{1}));
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d.subjects[0].id, "a");
    EXPECT_EQ(d.subjects[1].event_covariates, (std::vector<double>{-0.25, 0.0}));
    ASSERT_EQ(d.subjects[0].rows.size(), 2u);
    EXPECT_EQ(d.subjects[0].rows[0].time, 0.0);  // sorted by time
    EXPECT_EQ(d.subjects[0].rows[1].value, 0.4);
    EXPECT_EQ(d.subjects[0].rows[0].dim, 0u);
}

TEST(Ingest, AllMissingWithoutLongitudinalFile) {
    const Files f(kSubjects, "", R"({"missing_set": [1, 2], "censor_bound": 2})");
    const auto d = io::ingest(f.subjects, {}, f.sidecar);
    EXPECT_EQ(d.missing_set.size(), 2u);
    EXPECT_TRUE(d.subjects[0].rows.empty());
}

TEST(Ingest, HeaderOnlyLongitudinalFileIsValid) {
    const Files f(kSubjects, "subject_id,time,dim_index,value\n", R"({"missing_set": [1, 2], "censor_bound": 2})");
    EXPECT_NO_THROW(io::ingest(f.subjects, f.longitudinal, f.sidecar));
}

TEST(Ingest, ObservationAfterEventTimeIsRejectedWithLine) {
    const Files f(kSubjects, std::string(kLongitudinal) + "a,0.9,1,0.3\n");
    const auto diags = rejection(f);
    ASSERT_EQ(diags.size(), 1u);
    EXPECT_NE(diags[0].find("longitudinal.csv line 5"), std::string::npos) << diags[0];
    EXPECT_NE(diags[0].find("after the event time"), std::string::npos);
}

TEST(Ingest, MissingDimensionObservationRejected) {
    const Files f(kSubjects, std::string(kLongitudinal) + "b,0.2,2,1.0\n");
    const auto diags = rejection(f);
    EXPECT_TRUE(mentions(diags, "line 5: dimension 2 is in the missing set"));
}

TEST(Ingest, EveryBadRowReported) {
    const std::string subjects = std::string(kSubjects) +
                                 "a,0.3,1,2\n"      // line 4: duplicate
                                 "c,2.5,0,0\n"      // line 5: beyond C
                                 "d,0.5,x,0\n"      // line 6: not a number
                                 "e,0.5,1\n";       // line 7: short row
    const std::string lon = std::string(kLongitudinal) + "zz,0.1,1,0\n" + "a,0.1,3,0\n";
    const Files f(subjects, lon);
    const auto diags = rejection(f);
    EXPECT_TRUE(mentions(diags, "subjects.csv line 4: duplicate subject_id a"));
    EXPECT_TRUE(mentions(diags, "subjects.csv line 5: event_time 2.5 exceeds censor_bound"));
    EXPECT_TRUE(mentions(diags, "subjects.csv line 6: z_1 is not a finite number"));
    EXPECT_TRUE(mentions(diags, "subjects.csv line 7: expected 4 fields, found 3"));
    EXPECT_TRUE(mentions(diags, "longitudinal.csv line 5: unknown subject_id zz"));
    EXPECT_TRUE(mentions(diags, "longitudinal.csv line 6: dim_index must be an integer in 1..2"));
    EXPECT_EQ(diags.size(), 6u);
}

TEST(Ingest, BadHeadersAndSidecar) {
    EXPECT_TRUE(mentions(rejection(Files("id,event_time,z_1\na,1,0\n")), "line 1: header"));
    EXPECT_TRUE(mentions(rejection(Files("subject_id,event_time,z_1,z_3\na,1,0,0\n")), "must be z_2"));
    EXPECT_TRUE(mentions(rejection(Files(kSubjects, kLongitudinal, R"({"missing_set": [2]})")), "censor_bound"));
    EXPECT_TRUE(mentions(rejection(Files(kSubjects, kLongitudinal, R"({"missing_set": [3], "censor_bound": 2})")),
                         "exceeds p = 2"));
    EXPECT_TRUE(mentions(rejection(Files(kSubjects, kLongitudinal, R"({"p": 3, "missing_set": [], "censor_bound": 2})")),
                         "declares p = 3"));
    EXPECT_TRUE(mentions(rejection(Files(kSubjects, kLongitudinal, "{not json")), "invalid JSON"));
    EXPECT_TRUE(mentions(rejection(Files("subject_id,event_time,z_1,z_2\n", "subject_id,time,dim_index,value\n")), "no subjects"));
}

TEST(Ingest, MissingFileIsIoError) {
    const Files f;
    EXPECT_THROW(io::ingest(f.dir / "nope.csv", {}, f.sidecar), IoError);
    EXPECT_THROW(io::ingest(f.subjects, {}, f.dir / "nope.json"), IoError);
}

TEST(Dataset, WriteThenReadIsByteIdentical) {
    TempDir dir("io_roundtrip");
    auto data = gen_example1(15, 2, 2.0, 0.01);
    data.missing_set = {1, 2, 3, 4, 5, 6};
    for (auto& s : data.subjects) s.rows.push_back({s.event_time / 2.0, 0, s.event_covariates[0] / 3.0});
    io::write_dataset(data, dir.path());
    const auto back = io::ingest(dir / "subjects.csv", dir / "longitudinal.csv", dir / "sidecar.json");
    ASSERT_EQ(back.size(), data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_EQ(back.subjects[i].event_time, data.subjects[i].event_time);
        EXPECT_EQ(back.subjects[i].event_covariates, data.subjects[i].event_covariates);
        EXPECT_EQ(back.subjects[i].rows[0].value, data.subjects[i].rows[0].value);
    }
    TempDir again("io_roundtrip2");
    io::write_dataset(back, again.path());
    for (const char* name : {"subjects.csv", "longitudinal.csv", "sidecar.json"})
        EXPECT_EQ(slurp(dir / name), slurp(again / name)) << name;
}

TEST(Output, SamplesCsvLayout) {
    TempDir dir("io_samples");
    SampleSet s;
    s.samples.push_back({{0.5, 1.0}, 0.25, false, {}});
    s.samples.push_back({{-1.0, 0.0}, 2.0, true, {}});
    io::write_samples_csv(s, dir / "nested" / "samples.csv");
    EXPECT_EQ(slurp(dir / "nested" / "samples.csv"),
              "sample_id,s,censored,w_1,w_2\n1,0.25,0,0.5,1\n2,2,1,-1,0\n");
}

TEST(Output, ResultJsonCarriesParameters) {
    EstimationResult r;
    r.names = {"b[1]", "theta[1]"};
    r.estimate = {0.5, 1.25};
    r.setup_hat.b = {0.5};
    r.setup_hat.b_c = {0.0};
    r.setup_hat.lambda0 = StepHazard({1.25}, 2.0);
    r.ci95 = {{0.0, 1.0}, {1.0, 1.5}};
    r.se = {0.2, 0.1};
    r.seed = 7;
    r.objective_value = -3.5;
    const auto j = io::result_json(r);
    EXPECT_EQ(j["mode"], "full");
    EXPECT_EQ(j["seed"], 7);
    EXPECT_EQ(j["objective"], -3.5);
    ASSERT_EQ(j["parameters"].size(), 2u);
    EXPECT_EQ(j["parameters"][0]["name"], "b[1]");
    EXPECT_EQ(j["parameters"][1]["estimate"], 1.25);
    EXPECT_EQ(j["parameters"][0]["ci95"][1], 1.0);
}

TEST(Output, BandCsvWithAndWithoutBand) {
    TempDir dir("io_band");
    const Hazard h = constant_hazard(2.0);
    io::write_band_csv(h, {0.0, 0.5}, nullptr, dir / "a.csv");
    EXPECT_EQ(slurp(dir / "a.csv"), "t,est_cum\n0,0\n0.5,1\n");
    Band b;
    b.lo = {0.0, 0.75};
    b.hi = {0.0, 1.5};
    io::write_band_csv(h, {0.0, 0.5}, &b, dir / "b.csv");
    EXPECT_EQ(slurp(dir / "b.csv"), "t,est_cum,lo,hi\n0,0,0,0\n0.5,1,0.75,1.5\n");
}
