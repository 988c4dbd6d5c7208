#include "oracles.hpp"

#include "hmmev/diagnostics.hpp"
#include "hmmev/pipeline.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace hmmev;

namespace {

const Experiment& experiment() {
    static const Experiment e = run_experiment(7);
    return e;
}

HmmModel single_state(double mean, double var = 1.0) {
    return HmmModel(Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Ones(1, 1),
                    {GaussianEmission::diagonal(Eigen::VectorXd::Constant(1, mean), Eigen::VectorXd::Constant(1, var))});
}

Observations column(std::initializer_list<double> xs) {
    Observations y(static_cast<Eigen::Index>(xs.size()), 1);
    Eigen::Index i = 0;
    for (double x : xs) y(i++, 0) = x;
    return y;
}

// Two single-state skills far apart on one axis, with a gradient threshold of -4.05 each.
struct ToyDetector {
    SkillModels models;
    DetectorCalibration cal;
    ToyDetector() {
        models.emplace(1, single_state(0.0));
        models.emplace(2, single_state(10.0));
        cal.gradient[1] = make_gradient_calibration(1, -3.0, -0.9);
        cal.gradient[2] = make_gradient_calibration(2, -3.0, -0.9);
    }
};

}  // namespace

// ---------------------------------------------------------------------------
// Forward gradient

TEST(ForwardGradient, Arithmetic) {
    EXPECT_EQ(forward_gradient(5.0, 3.0), 2.0);
    EXPECT_EQ(forward_gradient(-7.25, -7.25), 0.0);
}

TEST(ForwardGradient, SingleStateGradientIsTheEmissionDensity) {
    const auto m = single_state(1.0, 2.0);
    const auto y = column({0.3, -1.0, 4.0, 1.0});
    const auto g = gradient_series(m, y);
    ASSERT_EQ(g.size(), 3u);
    for (std::size_t k = 0; k < g.size(); ++k) {
        EXPECT_NEAR(g[k], emission_logprob(m, 0, row_of(y, static_cast<Eigen::Index>(k + 1))), 1e-12);
    }
}

TEST(ForwardGradient, ConstantStreamGivesConstantSeries) {
    const auto g = gradient_series(single_state(0.0), Observations::Constant(6, 1, 0.5));
    for (double v : g) EXPECT_NEAR(v, g.front(), 1e-12);
}

TEST(ForwardGradient, NeedsTwoObservations) {
    EXPECT_THROW(gradient_series(single_state(0.0), Observations::Zero(1, 1)), ValidationError);
}

TEST(ForwardGradient, TelescopesToTheFinalLoglik) {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 30; ++rep) {
        const auto m = oracle::random_model(rng, 3, 2, rep % 2 == 0);
        const auto y = oracle::random_observations(rng, 100, 2);
        const auto ll = loglik_series(m, y);
        const auto g = gradient_series(m, y);
        EXPECT_NEAR(ll.front() + std::accumulate(g.begin(), g.end(), 0.0), ll.back(), 1e-9);
    }
}

// ---------------------------------------------------------------------------
// Skill identification

TEST(Identify, SingleModelAlwaysWins) {
    SkillModels models;
    models.emplace(4, single_state(0.0));
    const auto labels = identify_sequence(models, column({0, 5, -3, 100}));
    EXPECT_EQ(labels, std::vector<SkillId>(4, 4));
    EXPECT_EQ(score_skill_cumulative(models, column({1, 2})), 4);
}

TEST(Identify, IdenticalModelsTieToTheLowestId) {
    SkillModels models;
    models.emplace(3, single_state(0.0));
    models.emplace(2, single_state(0.0));
    models.emplace(5, single_state(0.0));
    EXPECT_EQ(identify_sequence(models, column({0, 1, 2, 3})), std::vector<SkillId>(4, 2));
}

TEST(Identify, FirstStepScoresWithInitialLoglik) {
    SkillModels models;
    models.emplace(1, single_state(0.0));
    models.emplace(2, single_state(3.0));
    SkillBeliefs states;
    const auto s = identify_skill(models, states, Eigen::VectorXd::Constant(1, 2.9));
    EXPECT_EQ(s.skill, 2);
    EXPECT_EQ(s.values.at(1), states.at(1).loglik);
    EXPECT_EQ(states.at(1).t, 1);
}

TEST(Identify, ArgmaxIsShiftInvariant) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 5.0);
    for (int rep = 0; rep < 200; ++rep) {
        std::map<SkillId, double> v;
        for (SkillId id = 1; id <= 5; ++id) v[id] = g(rng);
        const double c = g(rng) * 100;
        auto shifted = v;
        for (auto& [id, x] : shifted) x += c;
        EXPECT_EQ(argmax_skill(v), argmax_skill(shifted));
    }
}

TEST(Identify, BeliefsAtDifferentStepsAreRejected) {
    SkillModels models;
    models.emplace(1, single_state(0.0));
    models.emplace(2, single_state(1.0));
    SkillBeliefs states;
    states[1] = forward_init(models.at(1), Eigen::VectorXd::Zero(1));
    EXPECT_THROW(identify_skill(models, states, Eigen::VectorXd::Zero(1)), ValidationError);
    EXPECT_THROW(identify_skill(SkillModels{}, states, Eigen::VectorXd::Zero(1)), ValidationError);
}

TEST(Identify, PicksTheGeneratingSkillAfterBurnIn) {
    const auto& e = experiment();
    auto rng = detail::make_rng(99, 3, 0);
    std::vector<Eigen::VectorXd> rows;
    detail::sample_skill_block(e.spec.skill(3), rng, rows);
    const auto y = detail::stack_rows(rows, e.spec.dim);
    const auto labels = identify_sequence(e.skills.models, y);
    int hits = 0;
    for (std::size_t t = 3; t < labels.size(); ++t) hits += labels[t] == 3;
    EXPECT_GE(static_cast<double>(hits) / static_cast<double>(labels.size() - 3), 0.95);
}

TEST(Identify, CumulativeScoringPicksTheGeneratingSkill) {
    const auto& e = experiment();
    auto rng = detail::make_rng(99, 2, 0);
    std::vector<Eigen::VectorXd> rows;
    detail::sample_skill_block(e.spec.skill(2), rng, rows);
    EXPECT_EQ(score_skill_cumulative(e.skills.models, detail::stack_rows(rows, e.spec.dim)), 2);
}

TEST(Identify, CumulativeScoringLagsTheGradientAfterASwitch) {
    const auto& e = experiment();
    int gradient_total = 0;
    int cumulative_total = 0;
    for (const auto& trial : e.test_nominal) {
        const auto grad = identify_sequence(e.skills.models, trial.observations);
        const auto cum = cumulative_sequence(e.skills.models, trial.observations);
        for (const auto& b : skill_blocks(trial.skill_labels)) {
            if (b.t_start == 1) continue;
            auto first_hit = [&](const std::vector<SkillId>& p) {
                for (int t = b.t_start; t <= b.t_end; ++t) {
                    if (p[static_cast<std::size_t>(t - 1)] == b.skill) return t - b.t_start;
                }
                return b.length();
            };
            gradient_total += first_hit(grad);
            cumulative_total += first_hit(cum);
        }
    }
    EXPECT_GT(cumulative_total, gradient_total);
}

// ---------------------------------------------------------------------------
// Gradient calibration and test

TEST(GradientTest, ThresholdArithmetic) {
    const auto cal = make_gradient_calibration(1, 2.0, 6.0);
    EXPECT_EQ(cal.grad_range, 4.0);
    EXPECT_EQ(cal.threshold(), 0.0);
    EXPECT_TRUE(gradient_anomaly_test(cal, -1.0));
    EXPECT_FALSE(gradient_anomaly_test(cal, 2.0));
    EXPECT_FALSE(gradient_anomaly_test(cal, 0.0));
    EXPECT_THROW(make_gradient_calibration(1, 3.0, 2.0), ValidationError);
}

TEST(GradientTest, CalibrationFromKnownGradients) {
    // Single-state N(0,1): grad L_t = -0.5 log(2 pi) - y_t^2 / 2.
    const auto m = single_state(0.0);
    const double c = -0.5 * std::log(2.0 * std::numbers::pi);
    const auto y = column({0.0, 2.0, 0.0, 1.0});
    const auto cal = calibrate_gradient(m, {y}, 1);
    EXPECT_NEAR(cal.grad_max, c, 1e-12);
    EXPECT_NEAR(cal.grad_min, c - 2.0, 1e-12);
    EXPECT_EQ(cal.grad_range, cal.grad_max - cal.grad_min);
    EXPECT_EQ(calibrate_gradient(m, {y, y}, 1), cal);
    EXPECT_THROW(calibrate_gradient(m, {}), ValidationError);
}

TEST(GradientTest, Monotone) {
    const auto cal = make_gradient_calibration(1, -10.0, -2.0);
    for (double a = -30.0; a < 0.0; a += 0.5) {
        if (!gradient_anomaly_test(cal, a)) continue;
        for (double b = a - 5.0; b < a; b += 0.25) EXPECT_TRUE(gradient_anomaly_test(cal, b));
    }
}

TEST(GradientTest, CalibrationContainsEveryTrainingGradient) {
    const auto& e = experiment();
    const auto segs = segments_by_skill(e.train);
    for (const auto& [id, model] : e.skills.models) {
        const auto& cal = e.calibration.gradient.at(id);
        for (const auto& y : segs.at(id)) {
            for (double g : gradient_series(model, y)) {
                EXPECT_GE(g, cal.grad_min);
                EXPECT_LE(g, cal.grad_max);
                EXPECT_FALSE(gradient_anomaly_test(cal, g));
            }
        }
    }
}

TEST(GradientTest, CollisionTriggersWithinThreeSteps) {
    const auto& e = experiment();
    const auto& trial = e.test_anomalous.front();
    const auto& run = e.anomalous_runs.front();
    const auto times = run.timeline.trigger_times(DetectorKind::Gradient);
    ASSERT_EQ(trial.anomalies.size(), 5u);
    for (const auto& a : trial.anomalies) {
        const bool hit = std::any_of(times.begin(), times.end(), [&](int t) { return t >= a.t_start && t <= a.t_start + 3; });
        EXPECT_TRUE(hit) << "collision at " << a.t_start;
        const auto col = static_cast<Eigen::Index>(std::find(run.skills.begin(), run.skills.end(),
                                                             run.hypothesis[static_cast<std::size_t>(a.t_start - 1)]) -
                                                   run.skills.begin());
        EXPECT_LT(run.scores.col(col).segment(a.t_start - 1, 4).minCoeff(), e.calibration.gradient.at(run.skills[static_cast<std::size_t>(col)]).threshold());
    }
}

// ---------------------------------------------------------------------------
// Magnitude threshold

TEST(Magnitude, IdenticalTrialsHaveZeroSpread) {
    const auto m = single_state(0.0);
    const auto y = column({0.1, 0.4, -0.2});
    const auto thr = calibrate_magnitude(m, {y, y, y});
    const auto ll = loglik_series(m, y);
    for (std::size_t t = 0; t < ll.size(); ++t) {
        EXPECT_NEAR(thr.sigma[t], 0.0, 1e-12);
        EXPECT_NEAR(thr.threshold(static_cast<int>(t) + 1), ll[t], 1e-12);
    }
}

TEST(Magnitude, ZeroKGivesTheMeanCurve) {
    const auto m = single_state(0.0);
    const auto thr = calibrate_magnitude(m, {column({0, 1, 2}), column({1, 1, 1})}, 0.0);
    for (std::size_t t = 0; t < thr.length(); ++t) EXPECT_EQ(thr.threshold(static_cast<int>(t) + 1), thr.mu[t]);
}

TEST(Magnitude, SampleStandardDeviation) {
    // L_1 under N(0,1) for y = 0 and y = 2 differs by exactly 2.
    const auto m = single_state(0.0);
    const auto thr = calibrate_magnitude(m, {column({0.0}), column({2.0})}, 3.0);
    EXPECT_NEAR(thr.sigma[0], std::sqrt(2.0), 1e-12);
}

TEST(Magnitude, NeedsTwoTrials) {
    EXPECT_THROW(calibrate_magnitude(single_state(0.0), {column({0.0})}), ValidationError);
}

TEST(Magnitude, ResamplesToTheMedianLength) {
    const auto m = single_state(0.0);
    const auto thr = calibrate_magnitude(m, {Observations::Zero(4, 1), Observations::Zero(10, 1), Observations::Zero(7, 1)});
    EXPECT_EQ(thr.length(), 7u);
    EXPECT_EQ(median_length({4, 10, 7, 8}), 7u);
    const auto r = resample_linear({0.0, 3.0}, 4);
    EXPECT_NEAR(r[1], 1.0, 1e-15);
    EXPECT_NEAR(r[3], 3.0, 1e-15);
}

TEST(Magnitude, TestSemantics) {
    MagnitudeThreshold thr;
    thr.mu = {-1.0, -2.0, -3.0};
    thr.sigma = {0.5, 0.5, 1.0};
    thr.k = 3.0;
    EXPECT_FALSE(magnitude_anomaly_test(thr, 10.0, 1));
    EXPECT_TRUE(magnitude_anomaly_test(thr, -2.0 - 4.0 * 0.5, 2));
    EXPECT_EQ(thr.threshold(50), thr.threshold(3));
    EXPECT_THROW((void)thr.threshold(0), ValidationError);
}

TEST(Magnitude, NominalCurvesStayAboveTheirThreshold) {
    const auto& e = experiment();
    const auto segs = segments_by_skill(e.train);
    for (const auto& [id, model] : e.skills.models) {
        const auto& thr = e.calibration.magnitude.at(id);
        for (const auto& curve : aligned_loglik_curves(model, segs.at(id))) {
            for (std::size_t t = 0; t < curve.size(); ++t) EXPECT_GE(curve[t], thr.threshold(static_cast<int>(t) + 1));
        }
    }
}

TEST(Magnitude, PerturbedStartFlagsMagnitudeButNotGradient) {
    const auto& e = experiment();
    const SkillId id = 1;
    const auto& model = e.skills.models.at(id);
    auto y = rows_between(e.test_nominal.front().observations, 1, skill_blocks(e.test_nominal.front().skill_labels)[0].t_end);
    const Eigen::VectorXd sigma = detail::nominal_noise(e.spec.dim);
    for (int c = kForceBegin; c < kForceBegin + 3; ++c) y(0, c) += 3.0 * sigma(c);
    const auto ll = loglik_series(model, y);
    EXPECT_TRUE(magnitude_anomaly_test(e.calibration.magnitude.at(id), ll[0], 1));
    for (double g : gradient_series(model, y)) EXPECT_FALSE(gradient_anomaly_test(e.calibration.gradient.at(id), g));
}

// ---------------------------------------------------------------------------
// Derivative of difference

TEST(Dod, ConstantOffsetHasZeroDerivative) {
    MagnitudeThreshold thr;
    thr.mu = {-1, -2, -3, -4};
    thr.sigma = {0, 0, 0, 0};
    const std::vector<double> h = {1, 0, -1, -2};
    for (int t = 2; t <= 4; ++t) {
        EXPECT_EQ(dod_statistic(thr, h, t), 0.0);
        EXPECT_FALSE(dod_anomaly_test(thr, h, t, 0.0));
    }
}

TEST(Dod, StepChangeGivesItsSize) {
    MagnitudeThreshold thr;
    thr.mu = {0, 0, 0};
    thr.sigma = {0, 0, 0};
    const std::vector<double> h = {1, 1, 3.5};
    EXPECT_EQ(dod_statistic(thr, h, 3), 2.5);
    EXPECT_TRUE(dod_anomaly_test(thr, h, 3, 2.0));
    EXPECT_FALSE(dod_anomaly_test(thr, h, 3, 2.5));
    EXPECT_THROW(dod_statistic(thr, h, 1), ValidationError);
}

TEST(Dod, BoundIsWidenedAwayFromZero) {
    const auto m = single_state(0.0);
    const auto a = column({1.0, 1.0, 1.0, 1.0});
    const auto b = column({1.1, 1.1, 1.1, 1.1});
    const auto thr = calibrate_magnitude(m, {a, b});
    double hi = -1e300;
    for (const auto* y : {&a, &b}) {
        const auto h = loglik_series(m, *y);
        for (int t = 2; t <= 4; ++t) hi = std::max(hi, dod_statistic(thr, h, t));
    }
    EXPECT_NEAR(calibrate_dod(thr, m, {a, b}, 1.5), 1.5 * hi, 1e-12);
}

TEST(Dod, DivergingCurvesRaiseFalseAlarmsTheGradientIgnores) {
    // Nominal curves drift apart linearly; a trial that fits better than any nominal one
    // pulls away from F1 faster than the calibrated bound while its gradient is high.
    const auto m = single_state(0.0);
    const std::vector<Observations> nominal = {Observations::Constant(12, 1, 1.0), Observations::Constant(12, 1, 1.1)};
    const auto thr = calibrate_magnitude(m, nominal);
    const double bound = calibrate_dod(thr, m, nominal);
    const auto grad_cal = calibrate_gradient(m, nominal);
    const Observations test = Observations::Zero(12, 1);
    const auto h = loglik_series(m, test);
    int dod_hits = 0;
    for (int t = 2; t <= 12; ++t) dod_hits += dod_anomaly_test(thr, h, t, bound);
    EXPECT_GT(dod_hits, 0);
    for (double g : gradient_series(m, test)) EXPECT_FALSE(gradient_anomaly_test(grad_cal, g));
}

// ---------------------------------------------------------------------------
// Timeline and detector

TEST(Timeline, GroupingChainsWithinTheGap) {
    EXPECT_EQ(group_triggers({1, 3, 8, 14, 15, 30}, 5), (std::vector<int>{1, 14, 30}));
    EXPECT_EQ(group_triggers({10, 1}, 5), (std::vector<int>{1, 10}));
    EXPECT_TRUE(group_triggers({}, 5).empty());
}

TEST(Timeline, KindNamesRoundTrip) {
    for (auto k : {EventKind::SkillSwitch, EventKind::AnomalyTrigger}) EXPECT_EQ(event_kind_from_string(to_string(k)), k);
    for (auto d : kAllDetectors) EXPECT_EQ(detector_kind_from_string(to_string(d)), d);
    EXPECT_THROW(detector_kind_from_string("bogus"), ValidationError);
}

TEST(Detector, SwitchSuppressionAndTrigger) {
    const ToyDetector toy;
    const auto y = column({0, 0, 0, 10, 30, 10, 10, 30, 10});
    const auto run = run_detector(toy.models, toy.cal, y, DetectorConfig{});
    const auto sw = run.timeline.switches();
    ASSERT_EQ(sw.size(), 1u);
    EXPECT_EQ(sw[0].t, 4);
    EXPECT_EQ(sw[0].skill, 2);
    // t = 5 lies in the suppression window [4, 6]; t = 8 does not.
    EXPECT_EQ(run.timeline.trigger_times(DetectorKind::Gradient), std::vector<int>{8});
    EXPECT_EQ(run.hypothesis, (std::vector<SkillId>{1, 1, 1, 2, 2, 2, 2, 2, 2}));
}

TEST(Detector, AnomalousCandidateDoesNotTakeOver) {
    const ToyDetector toy;
    const auto y = column({0, 0, 0, 0, 25, 0, 0});
    const auto run = run_detector(toy.models, toy.cal, y, DetectorConfig{});
    EXPECT_EQ(run.argmax_labels[4], 2);
    EXPECT_TRUE(run.timeline.switches().empty());
    EXPECT_EQ(run.timeline.trigger_times(DetectorKind::Gradient), std::vector<int>{5});
    EXPECT_EQ(run.timeline.events.back().skill, 1);

    DetectorConfig no_hold;
    no_hold.hold_on_anomalous_switch = false;
    const auto free = run_detector(toy.models, toy.cal, y, no_hold);
    EXPECT_EQ(free.timeline.switches().size(), 2u);
    EXPECT_TRUE(free.timeline.trigger_times(DetectorKind::Gradient).empty());
}

TEST(Detector, MissingCalibrationIsRejected) {
    const ToyDetector toy;
    DetectorCalibration partial = toy.cal;
    partial.gradient.erase(2);
    EXPECT_THROW(DetectorState(toy.models, partial, DetectorConfig{}), ValidationError);
    DetectorConfig mag;
    mag.magnitude = true;
    EXPECT_THROW(DetectorState(toy.models, toy.cal, mag), ValidationError);
}

TEST(Detector, NominalTrialHasFourSwitchesAndNoTriggers) {
    const auto& e = experiment();
    for (const auto& trial : e.test_nominal) {
        const auto run = run_detector(e.skills.models, e.calibration, trial.observations, DetectorConfig{});
        EXPECT_EQ(run.timeline.switches().size(), 4u);
        EXPECT_TRUE(run.timeline.trigger_times(DetectorKind::Gradient).empty());
    }
}

TEST(Detector, OneTriggerGroupPerCollidedSkill) {
    const auto& e = experiment();
    const auto& trial = e.test_anomalous.front();
    const auto groups = group_triggers(e.anomalous_runs.front().timeline.trigger_times(DetectorKind::Gradient), 5);
    EXPECT_GE(groups.size(), 5u);
    const auto blocks = skill_blocks(trial.skill_labels);
    for (const auto& b : blocks) {
        EXPECT_TRUE(std::any_of(groups.begin(), groups.end(), [&](int g) { return g >= b.t_start && g <= b.t_end; }))
            << "skill " << b.skill;
    }
}

TEST(Detector, NoDetectorsMeansOnlySwitches) {
    const auto& e = experiment();
    DetectorConfig none;
    none.gradient = false;
    const auto run = run_detector(e.skills.models, e.calibration, e.test_anomalous.front().observations, none);
    for (const auto& ev : run.timeline.events) EXPECT_EQ(ev.kind, EventKind::SkillSwitch);
    EXPECT_FALSE(run.timeline.events.empty());
}

TEST(Detector, NoTriggersInsideSuppressionWindows) {
    const auto& e = experiment();
    for (const auto* runs : {&e.anomalous_runs, &e.recovery_runs}) {
        for (const auto& run : *runs) {
            for (const auto& s : run.timeline.switches()) {
                for (const auto& ev : run.timeline.events) {
                    if (ev.kind != EventKind::AnomalyTrigger) continue;
                    EXPECT_FALSE(ev.t >= s.t && ev.t < s.t + 3) << "trigger at " << ev.t << " after switch at " << s.t;
                }
            }
        }
    }
}

TEST(Detector, TimestampsAreNonDecreasing) {
    for (const auto& run : experiment().anomalous_runs) {
        const auto& ev = run.timeline.events;
        EXPECT_TRUE(std::is_sorted(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.t < b.t; }));
    }
}

TEST(Detector, Deterministic) {
    const auto& e = experiment();
    const auto cfg = all_detectors(ExperimentConfig{});
    const auto& y = e.test_anomalous[2].observations;
    const auto a = run_detector(e.skills.models, e.calibration, y, cfg);
    const auto b = run_detector(e.skills.models, e.calibration, y, cfg);
    EXPECT_EQ(a.timeline, b.timeline);
    EXPECT_EQ(a.scores, b.scores);
}

// ---------------------------------------------------------------------------
// Viterbi diagnostics

TEST(Diagnostics, SingleStateTriangleIsAllOnes) {
    const auto trace = incremental_viterbi(single_state(0.0), column({1, 2, 3, 4}));
    const auto tri = triangle_matrix(trace);
    for (int t = 0; t < 4; ++t) {
        for (int i = 0; i < 4; ++i) EXPECT_EQ(tri(t, i), i <= t ? 1 : -1);
    }
    EXPECT_TRUE(detect_sequence_breaks(trace).breaks.empty());
}

TEST(Diagnostics, SingleObservationTrace) {
    const auto trace = incremental_viterbi(well_separated_model(), Observations::Zero(1, 2));
    ASSERT_EQ(trace.paths.size(), 1u);
    EXPECT_EQ(trace.paths[0].size(), 1u);
}

TEST(Diagnostics, TraceEntriesMatchFromScratchViterbi) {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 10; ++rep) {
        const auto m = oracle::random_model(rng, 3, 1, false);
        const auto y = oracle::random_observations(rng, 30, 1);
        const auto trace = incremental_viterbi(m, y);
        for (Eigen::Index t = 0; t < y.rows(); ++t) {
            EXPECT_EQ(trace.paths[static_cast<std::size_t>(t)], viterbi(m, y.topRows(t + 1)).path);
        }
        EXPECT_EQ(trace.paths.back(), viterbi(m, y).path);
    }
}

TEST(Diagnostics, HandBuiltBreak) {
    IncrementalViterbiTrace trace;
    trace.paths = {{0}, {0, 0}, {0, 1, 1}, {0, 1, 1, 1}};
    const auto rep = detect_sequence_breaks(trace);
    ASSERT_EQ(rep.breaks.size(), 1u);
    EXPECT_EQ(rep.breaks[0], (SequenceBreak{3, 2, 1}));
    EXPECT_EQ(rep.max_break_len, 1);
    EXPECT_EQ(rep.transitions, std::vector<int>{2});
    EXPECT_TRUE(breaks_localized(rep));

    IncrementalViterbiTrace monotone;
    monotone.paths = {{0}, {0, 1}, {0, 1, 1}};
    EXPECT_TRUE(detect_sequence_breaks(monotone).breaks.empty());
    EXPECT_THROW(detect_sequence_breaks(IncrementalViterbiTrace{}), ValidationError);
}

TEST(Diagnostics, SelfTransitionDominance) {
    const auto e = GaussianEmission::diagonal(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
    Eigen::Matrix2d bad;
    bad << 0.2, 0.8, 0.3, 0.7;
    EXPECT_TRUE(check_self_transition_dominance(HmmModel(Eigen::Vector2d(1, 0), Eigen::Matrix2d::Identity(), {e, e})));
    EXPECT_TRUE(check_self_transition_dominance(HmmModel(Eigen::Vector2d(1, 0), Eigen::Matrix2d::Constant(0.5), {e, e})));
    EXPECT_FALSE(check_self_transition_dominance(HmmModel(Eigen::Vector2d(1, 0), bad, {e, e})));
    EXPECT_TRUE(check_self_transition_dominance(well_separated_model()));
}

TEST(Diagnostics, EmissionCurves) {
    const auto m1 = single_state(0.5, 2.0);
    const auto y = column({0.0, 1.0, -3.0});
    const auto c1 = emission_curves(m1, y);
    for (int t = 0; t < 3; ++t) EXPECT_NEAR(c1(t, 0), oracle::emission(m1, 0, y.row(t).transpose()), 1e-12);

    const auto e0 = GaussianEmission::diagonal(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Ones(1));
    const auto e1 = GaussianEmission::diagonal(Eigen::VectorXd::Constant(1, 3.0), Eigen::VectorXd::Ones(1));
    const HmmModel sym(Eigen::Vector2d(0.5, 0.5), Eigen::Matrix2d::Constant(0.5), {e0, e1});
    const auto c2 = emission_curves(sym, column({1.0}));
    EXPECT_NEAR(c2(0, 0), c2(0, 1), 1e-12);
}

TEST(Diagnostics, SingleStateResidualsVanish) {
    const auto res = corollary_residuals(single_state(0.0), column({0.3, 2.0, -1.0, 0.0}));
    for (double r : res) EXPECT_NEAR(r, 0.0, 1e-12);
}

TEST(Diagnostics, StableMaskMargin) {
    const auto mask = stable_mask({4}, 7, 2);
    EXPECT_EQ(mask, (std::vector<bool>{true, true, false, false, false, true, true}));
}

TEST(Diagnostics, WellSeparatedCorollary) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto b = well_separated_benchmark(seed);
        const auto s = summarize_corollary(b.model, b.observations, transition_times(b.states));
        ASSERT_GT(s.stable_steps, 0u);
        EXPECT_GE(s.fraction, 0.95) << "seed " << seed;
        EXPECT_GE(s.correlation, 0.9) << "seed " << seed;
    }
}

TEST(Diagnostics, ResidualsStayBelowLogNOnWellSeparatedTrials) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto b = well_separated_benchmark(seed);
        for (double r : corollary_residuals(b.model, b.observations)) EXPECT_LE(r, std::log(3.0)) << "seed " << seed;
    }
}

TEST(Diagnostics, OverlappingEmissionsBreakTheApproximation) {
    const auto e0 = GaussianEmission::diagonal(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
    const auto e1 = GaussianEmission::diagonal(Eigen::VectorXd::Constant(1, 0.1), Eigen::VectorXd::Ones(1));
    Eigen::Matrix2d a;
    a << 0.95, 0.05, 0.05, 0.95;
    const HmmModel m(Eigen::Vector2d(0.5, 0.5), a, {e0, e1});
    std::mt19937_64 rng(4);
    const auto z = sample_states(m, 200, rng);
    Observations y(200, 1);
    for (int t = 0; t < 200; ++t) y.row(t) = m.emission(z[static_cast<std::size_t>(t)]).sample(rng).transpose();
    const auto s = summarize_corollary(m, y, transition_times(z));
    EXPECT_LT(s.fraction, 0.5);
}

TEST(Diagnostics, BreaksAreShortAndNearTransitions) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto b = well_separated_benchmark(seed);
        const auto rep = detect_sequence_breaks(incremental_viterbi(b.model, b.observations), transition_times(b.states));
        EXPECT_LE(rep.max_break_len, 1) << "seed " << seed;
        EXPECT_TRUE(breaks_localized(rep, 1, 1)) << "seed " << seed;
    }
}
