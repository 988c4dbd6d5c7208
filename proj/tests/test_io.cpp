#include "oracles.hpp"

#include "hmmev/io.hpp"
#include "hmmev/pipeline.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <functional>
#include <random>

using namespace hmmev;

namespace {

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("hmmev_") + info->test_suite_name() + "_" + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path dir_;
};

void expect_message(const std::function<void()>& f, const std::string& needle) {
    try {
        f();
        ADD_FAILURE() << "expected a ValidationError mentioning '" << needle << "'";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
}

}  // namespace

TEST(Sha256, KnownVectors) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

// ---------------------------------------------------------------------------
// Models

using ModelIo = TempDir;

TEST_F(ModelIo, RoundTripIsExact) {
    std::mt19937_64 rng(1);
    for (bool full : {false, true}) {
        const auto m = oracle::random_model(rng, 3, 2, full);
        save_model(dir_ / "m.json", m);
        const auto back = load_model(dir_ / "m.json");
        EXPECT_EQ(back.pi(), m.pi());
        EXPECT_EQ(back.trans(), m.trans());
        EXPECT_EQ(back.covariance_type(), m.covariance_type());
        for (int i = 0; i < 3; ++i) {
            EXPECT_EQ(back.emission(i).mean(), m.emission(i).mean());
            EXPECT_TRUE(back.emission(i).covariance().isApprox(m.emission(i).covariance(), 1e-15));
        }
        const auto y = oracle::random_observations(rng, 40, 2);
        const auto a = loglik_series(m, y);
        const auto b = loglik_series(back, y);
        for (std::size_t t = 0; t < a.size(); ++t) EXPECT_NEAR(a[t], b[t], 1e-12);
    }
}

TEST_F(ModelIo, SerializedFormHasTheDocumentedFields) {
    std::mt19937_64 rng(2);
    const auto j = model_to_json(oracle::random_model(rng, 2, 3, false));
    EXPECT_EQ(j.at("version"), "hmm-model/1");
    EXPECT_EQ(j.at("n_states"), 2);
    EXPECT_EQ(j.at("dim"), 3);
    ASSERT_EQ(j.at("trans").size(), 2u);
    EXPECT_EQ(j.at("trans").at(0).size(), 2u);
    EXPECT_EQ(j.at("emissions").at(0).at("cov_type"), "diag");
}

TEST_F(ModelIo, RejectsUnknownVersion) {
    std::mt19937_64 rng(3);
    auto j = model_to_json(oracle::random_model(rng, 2, 1, false));
    j["version"] = "hmm-model/2";
    write_json_file(dir_ / "m.json", j);
    expect_message([&] { load_model(dir_ / "m.json"); }, "unsupported version 'hmm-model/2'");
}

TEST_F(ModelIo, RejectsNonStochasticRows) {
    std::mt19937_64 rng(4);
    auto j = model_to_json(oracle::random_model(rng, 2, 1, false));
    j["trans"] = {0.5, 0.6, 0.3, 0.7};
    write_json_file(dir_ / "m.json", j);
    EXPECT_THROW(load_model(dir_ / "m.json"), ValidationError);
}

TEST_F(ModelIo, MissingFileIsAnError) { EXPECT_THROW(load_model(dir_ / "absent.json"), ValidationError); }

// ---------------------------------------------------------------------------
// Calibration and timelines

using CalibrationIo = TempDir;

TEST_F(CalibrationIo, RoundTrip) {
    DetectorCalibration cal;
    cal.gradient[1] = make_gradient_calibration(1, -12.5, 3.25);
    cal.gradient[2] = make_gradient_calibration(2, -0.1, 0.1);
    cal.magnitude[1] = MagnitudeThreshold{1, {-1.0, -2.0 / 3.0}, {0.1, 1e-17}, 3.0};
    cal.dod_bound[1] = 0.3;
    save_calibration(dir_ / "cal.json", cal);
    const auto back = load_calibration(dir_ / "cal.json");
    EXPECT_EQ(back.gradient, cal.gradient);
    EXPECT_EQ(back.magnitude.at(1).mu, cal.magnitude.at(1).mu);
    EXPECT_EQ(back.magnitude.at(1).sigma, cal.magnitude.at(1).sigma);
    EXPECT_EQ(back.dod_bound, cal.dod_bound);
    EXPECT_FALSE(back.magnitude.count(2));
}

TEST_F(CalibrationIo, GradientCalibrationDocument) {
    const auto j = gradient_calibration_to_json(make_gradient_calibration(3, 2.0, 6.0));
    EXPECT_EQ(j.at("version"), "grad-cal/1");
    EXPECT_EQ(j.at("grad_range"), 4.0);
    auto bad = j;
    bad["grad_range"] = 5.0;
    EXPECT_THROW(gradient_calibration_from_json(bad), ValidationError);
}

TEST(TimelineIo, NdjsonRoundTrip) {
    EventTimeline tl;
    tl.events = {{1, EventKind::SkillSwitch, 2, DetectorKind::Gradient, 0.1},
                 {7, EventKind::AnomalyTrigger, 2, DetectorKind::Dod, -1234.5678901234567},
                 {7, EventKind::AnomalyTrigger, 2, DetectorKind::Magnitude, 1e-300}};
    const auto text = timeline_to_ndjson(tl);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
    EXPECT_EQ(timeline_from_ndjson(text), tl);
}

TEST(TimelineIo, BadRecordNamesItsLine) {
    expect_message([] { timeline_from_ndjson("{\"t\":1,\"kind\":\"skill-switch\",\"skill\":1,\"detector\":\"gradient\",\"value\":0}\n{oops\n"); },
                   "line 2");
}

// ---------------------------------------------------------------------------
// Trials

using TrialIo = TempDir;

TEST_F(TrialIo, SynthesizedTrialRoundTripsBitExact) {
    const auto spec = default_task_spec(7);
    auto trial = synthesize_recovery_scenario(spec, 2);
    trial = inject_anomaly(trial, AnomalyType::SlipperyPick, 20);
    save_trial(dir_ / "trial.csv", trial, spec_hash(spec));
    const auto back = load_trial(dir_ / "trial.csv", 13);
    EXPECT_EQ(back, trial);
    EXPECT_EQ(back.dt, trial.dt);
}

TEST_F(TrialIo, CsvAloneRebuildsWindows) {
    auto trial = synthesize_nominal(default_task_spec(7), 1);
    trial = inject_anomaly(trial, AnomalyType::GripperCollision, 30);
    trial = inject_anomaly(trial, AnomalyType::ArmCollision, 32);
    const auto back = trial_from_csv(trial_to_csv(trial));
    EXPECT_EQ(back.observations, trial.observations);
    EXPECT_EQ(back.skill_labels, trial.skill_labels);
    ASSERT_EQ(back.anomalies.size(), 2u);
    EXPECT_EQ(back.anomalies[0].type, AnomalyType::GripperCollision);
    EXPECT_EQ(back.anomalies[1].t_start, 32);
}

TEST_F(TrialIo, ExtremeValuesSurviveDecimalText) {
    Trial t;
    t.observations.resize(3, 2);
    t.observations << 0.1, -1e-300, 1.0 / 3.0, 123456789.123456789, -0.0, 2.2250738585072014e-308;
    t.skill_labels = {1, 1, 2};
    save_trial(dir_ / "x.csv", t);
    const auto back = load_trial(dir_ / "x.csv");
    for (Eigen::Index r = 0; r < 3; ++r) {
        for (Eigen::Index c = 0; c < 2; ++c) {
            EXPECT_EQ(std::bit_cast<std::uint64_t>(back.observations(r, c)), std::bit_cast<std::uint64_t>(t.observations(r, c)));
        }
    }
}

TEST(TrialCsv, HeaderLayout) {
    EXPECT_EQ(trial_csv_header(2), "t,y0,y1,skill,anomaly,recovery");
}

TEST(TrialCsv, DimensionMismatchNamesTheLine) {
    Trial t;
    t.observations = Observations::Zero(2, 12);
    t.skill_labels = {1, 1};
    expect_message([&] { trial_from_csv(trial_to_csv(t), "short.csv", 13); }, "short.csv:1:");
    expect_message([&] { trial_from_csv(trial_to_csv(t), "short.csv", 13); }, "expected 13");
}

TEST(TrialCsv, RaggedRowNamesTheLine) {
    const std::string text = "t,y0,y1,skill,anomaly,recovery\n1,0,0,1,,\n2,0,1,,\n";
    expect_message([&] { trial_from_csv(text, "ragged.csv"); }, "ragged.csv:3:");
}

TEST(TrialCsv, NonFiniteValueNamesTheLine) {
    const std::string text = "t,y0,skill,anomaly,recovery\n1,0,1,,\n2,0,1,,\n3,nan,1,,\n";
    expect_message([&] { trial_from_csv(text, "nan.csv"); }, "nan.csv:4:");
}

TEST(TrialCsv, MalformedHeader) {
    expect_message([] { trial_from_csv("time,y0,skill,anomaly,recovery\n1,0,1,,\n", "h.csv"); }, "h.csv:1:");
    expect_message([] { trial_from_csv("t,y0,skill,anomaly,recovery\n1,0,1,bogus,\n", "a.csv"); }, "bogus");
}

// ---------------------------------------------------------------------------
// Manifest

using ManifestIo = TempDir;

TEST_F(ManifestIo, RoundTripAndRoles) {
    const auto spec = default_task_spec(7);
    DatasetManifest m;
    m.name = "tiny";
    m.spec_hash = spec_hash(spec);
    for (int i = 1; i <= 2; ++i) {
        const std::string p = "train/" + std::to_string(i) + ".csv";
        save_trial(dir_ / p, synthesize_nominal(spec, static_cast<std::uint64_t>(i)), m.spec_hash);
        m.trials.push_back({p, TrialRole::Train});
    }
    save_trial(dir_ / "rec.csv", synthesize_recovery_scenario(spec, 1), m.spec_hash);
    m.trials.push_back({"rec.csv", TrialRole::Recovery});
    save_manifest(dir_ / "manifest.json", m);

    const auto back = load_manifest(dir_ / "manifest.json");
    EXPECT_EQ(back.name, "tiny");
    EXPECT_EQ(back.spec_hash, m.spec_hash);
    EXPECT_EQ(back.paths_with(TrialRole::Train).size(), 2u);
    const auto rec = load_role(dir_ / "manifest.json", back, TrialRole::Recovery);
    ASSERT_EQ(rec.size(), 1u);
    EXPECT_EQ(rec[0], synthesize_recovery_scenario(spec, 1));
}

TEST_F(ManifestIo, MissingFileIsListed) {
    DatasetManifest m;
    m.name = "broken";
    m.trials.push_back({"nowhere/1.csv", TrialRole::TestNominal});
    save_manifest(dir_ / "manifest.json", m);
    expect_message([&] { load_manifest(dir_ / "manifest.json"); }, "nowhere/1.csv");
}

TEST_F(ManifestIo, DuplicatePathsAndUnknownRoles) {
    DatasetManifest m;
    m.trials = {{"a.csv", TrialRole::Train}, {"a.csv", TrialRole::Recovery}};
    EXPECT_THROW(manifest_to_json(m), ValidationError);
    EXPECT_THROW(trial_role_from_string("validation"), ValidationError);
}

TEST(SpecHash, StableAndSensitive) {
    EXPECT_EQ(spec_hash(default_task_spec(7)), spec_hash(default_task_spec(7)));
    EXPECT_NE(spec_hash(default_task_spec(7)), spec_hash(default_task_spec(8)));
    EXPECT_EQ(spec_hash(default_task_spec(7)).size(), 64u);
}

TEST(MatrixCsv, HeaderAndIntegers) {
    Eigen::MatrixXi m(2, 2);
    m << 1, -1, 2, 3;
    EXPECT_EQ(matrix_to_csv({"a", "b"}, m), "a,b\n1,-1\n2,3\n");
    EXPECT_THROW(matrix_to_csv({"a"}, m), ValidationError);
}
