#pragma once

#include "hmmev/baum_welch.hpp"
#include "hmmev/detection.hpp"
#include "hmmev/evaluation.hpp"
#include "hmmev/synthesis.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hmmev {

struct ExperimentConfig {
    TrainConfig train = [] {
        TrainConfig c;
        c.transition_smoothing = 1e-3;
        return c;
    }();
    std::vector<int> state_candidates = {2, 3, 4};
    double k = 3.0;
    double dod_factor = 1.5;
    int suppression_window = 3;
    int grouping_gap = 5;
    ReactionConfig reaction;
};

// Contiguous ground-truth blocks of every trial, grouped by skill.
inline std::map<SkillId, std::vector<Observations>> segments_by_skill(const std::vector<Trial>& trials) {
    std::map<SkillId, std::vector<Observations>> out;
    for (const auto& trial : trials) {
        for (const auto& b : skill_blocks(trial.skill_labels)) {
            out[b.skill].push_back(rows_between(trial.observations, b.t_start, b.t_end));
        }
    }
    return out;
}

struct SkillTraining {
    StateSelection selection;
    double final_loglik = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct TrainedSkills {
    SkillModels models;
    std::map<SkillId, SkillTraining> info;
};

inline TrainedSkills train_skill_models(const std::vector<Trial>& train, const ExperimentConfig& cfg,
                                        const std::vector<SkillId>& required = {}) {
    const auto segments = segments_by_skill(train);
    for (SkillId id : required) {
        if (!segments.count(id)) throw ValidationError("no training data for skill " + std::to_string(id));
    }
    TrainedSkills out;
    for (const auto& [id, segs] : segments) {
        SkillTraining info;
        info.selection = select_num_states(segs, cfg.state_candidates, cfg.train);
        auto fit = train_baum_welch(segs, info.selection.best, cfg.train);
        info.final_loglik = fit.loglik_trace.back();
        info.iterations = fit.iterations;
        info.converged = fit.converged;
        out.models.emplace(id, std::move(fit.model));
        out.info.emplace(id, std::move(info));
    }
    return out;
}

inline DetectorCalibration calibrate_detectors(const SkillModels& models, const std::vector<Trial>& nominal,
                                               const ExperimentConfig& cfg) {
    const auto segments = segments_by_skill(nominal);
    DetectorCalibration cal;
    for (const auto& [id, model] : models) {
        const auto it = segments.find(id);
        if (it == segments.end()) throw ValidationError("no calibration data for skill " + std::to_string(id));
        cal.gradient[id] = calibrate_gradient(model, it->second, id);
        cal.magnitude[id] = calibrate_magnitude(model, it->second, cfg.k, id);
        cal.dod_bound[id] = calibrate_dod(cal.magnitude[id], model, it->second, cfg.dod_factor);
    }
    return cal;
}

inline DetectorConfig all_detectors(const ExperimentConfig& cfg) {
    DetectorConfig d;
    d.gradient = d.magnitude = d.dod = true;
    d.suppression_window = cfg.suppression_window;
    return d;
}

// ---------------------------------------------------------------------------
// Scenario datasets

inline constexpr std::uint64_t kTrainSeedBase = 0;
inline constexpr std::uint64_t kNominalTestSeedBase = 100;
inline constexpr std::uint64_t kAnomalousSeedBase = 200;
inline constexpr std::uint64_t kRecoverySeedBase = 300;

inline std::vector<Trial> nominal_trials(const TaskSpec& spec, std::uint64_t seed_base, int count = 5) {
    std::vector<Trial> out;
    for (int i = 1; i <= count; ++i) out.push_back(synthesize_nominal(spec, seed_base + static_cast<std::uint64_t>(i)));
    return out;
}

struct PlannedAnomaly {
    int block = 0;  // zero-based skill block index
    AnomalyType type = AnomalyType::GripperCollision;
};

// Fourteen anomalies over five trials: a gripper collision in every skill, an arm collision in
// every skill, a displaced object plus a slippery pick, a missing object, and a slippery pick.
inline std::vector<std::vector<PlannedAnomaly>> anomaly_suite_plan() {
    using A = AnomalyType;
    return {
        {{0, A::GripperCollision}, {1, A::GripperCollision}, {2, A::GripperCollision}, {3, A::GripperCollision},
         {4, A::GripperCollision}},
        {{0, A::ArmCollision}, {1, A::ArmCollision}, {2, A::ArmCollision}, {3, A::ArmCollision}, {4, A::ArmCollision}},
        {{1, A::ObjectDisplacement}, {2, A::SlipperyPick}},
        {{2, A::MissingObject}},
        {{3, A::SlipperyPick}},
    };
}

inline int planned_onset(const SkillBlock& b) { return b.t_start + static_cast<int>(std::lround(0.3 * b.length())); }

inline std::vector<Trial> anomaly_suite(const TaskSpec& spec, std::uint64_t seed_base = kAnomalousSeedBase) {
    std::vector<Trial> out;
    const auto plan = anomaly_suite_plan();
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const std::uint64_t seed = seed_base + i + 1;
        Trial trial = synthesize_nominal(spec, seed);
        const auto blocks = skill_blocks(trial.skill_labels);
        for (std::size_t k = 0; k < plan[i].size(); ++k) {
            const auto& p = plan[i][k];
            if (p.block >= static_cast<int>(blocks.size())) throw ValidationError("anomaly plan exceeds skill count");
            AnomalyParams params;
            params.seed = seed * 16 + k;
            params.channel_sigma = detail::nominal_noise(spec.dim);
            trial = inject_anomaly(trial, p.type, planned_onset(blocks[static_cast<std::size_t>(p.block)]), params);
        }
        out.push_back(std::move(trial));
    }
    return out;
}

inline std::vector<Trial> recovery_trials(const TaskSpec& spec, std::uint64_t seed_base = kRecoverySeedBase,
                                          int count = 5) {
    std::vector<Trial> out;
    for (int i = 1; i <= count; ++i) out.push_back(synthesize_recovery_scenario(spec, seed_base + static_cast<std::uint64_t>(i)));
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation over a set of detector runs

struct DetectorReport {
    AnomalyCounts counts;
    MicroMetrics metrics;
    int post_recovery_fp = 0;
};

struct EvaluationReport {
    ConfusionMatrix confusion;
    ReactionStats first;
    ReactionStats first_k;
    std::map<DetectorKind, DetectorReport> detectors;
};

inline constexpr std::array<DetectorKind, 3> kAllDetectors = {DetectorKind::Gradient, DetectorKind::Dod,
                                                              DetectorKind::Magnitude};

// `identification` trials feed the confusion matrix and reaction times, `anomaly` trials the
// TP/FP/FN accounting and `recovery` trials the post-recovery false-positive count.
struct EvaluationInputs {
    std::vector<const Trial*> identification;
    std::vector<const DetectionRun*> identification_runs;
    std::vector<const Trial*> anomaly;
    std::vector<const DetectionRun*> anomaly_runs;
    std::vector<const Trial*> recovery;
    std::vector<const DetectionRun*> recovery_runs;
};

inline EvaluationReport evaluate(const EvaluationInputs& in, const ExperimentConfig& cfg) {
    EvaluationReport rep;
    std::vector<SkillId> pred;
    std::vector<SkillId> truth;
    std::vector<BlockReaction> first;
    std::vector<BlockReaction> first_k;
    for (std::size_t i = 0; i < in.identification.size(); ++i) {
        const auto& p = in.identification_runs[i]->argmax_labels;
        const auto& l = in.identification[i]->skill_labels;
        pred.insert(pred.end(), p.begin(), p.end());
        truth.insert(truth.end(), l.begin(), l.end());
        auto a = block_reactions(p, l, ReactionCriterion::FirstOccurrence, cfg.reaction);
        auto b = block_reactions(p, l, ReactionCriterion::FirstKSuccessive, cfg.reaction);
        first.insert(first.end(), a.begin(), a.end());
        first_k.insert(first_k.end(), b.begin(), b.end());
    }
    if (!truth.empty()) {
        rep.confusion = confusion_matrix(pred, truth);
        rep.first = summarize_reactions(first);
        rep.first_k = summarize_reactions(first_k);
    }
    for (DetectorKind d : kAllDetectors) {
        DetectorReport dr;
        for (std::size_t i = 0; i < in.anomaly.size(); ++i) {
            dr.counts += match_anomalies(in.anomaly_runs[i]->timeline.trigger_times(d), *in.anomaly[i], cfg.grouping_gap);
        }
        dr.metrics = micro_metrics(dr.counts);
        for (std::size_t i = 0; i < in.recovery.size(); ++i) {
            dr.post_recovery_fp += post_recovery_fp(in.recovery_runs[i]->timeline.trigger_times(d), *in.recovery[i],
                                                    cfg.grouping_gap);
        }
        rep.detectors[d] = dr;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// End-to-end experiment on synthetic data

struct Experiment {
    TaskSpec spec;
    std::vector<Trial> train;
    std::vector<Trial> test_nominal;
    std::vector<Trial> test_anomalous;
    std::vector<Trial> recovery;
    TrainedSkills skills;
    DetectorCalibration calibration;
    std::vector<DetectionRun> nominal_runs;
    std::vector<DetectionRun> anomalous_runs;
    std::vector<DetectionRun> recovery_runs;
    EvaluationReport report;
};

inline std::vector<DetectionRun> run_all(const SkillModels& models, const DetectorCalibration& cal,
                                         const std::vector<Trial>& trials, const DetectorConfig& dcfg) {
    std::vector<DetectionRun> runs;
    for (const auto& t : trials) runs.push_back(run_detector(models, cal, t.observations, dcfg));
    return runs;
}

inline EvaluationInputs standard_inputs(const Experiment& e) {
    EvaluationInputs in;
    for (std::size_t i = 0; i < e.test_nominal.size(); ++i) {
        in.identification.push_back(&e.test_nominal[i]);
        in.identification_runs.push_back(&e.nominal_runs[i]);
        in.anomaly.push_back(&e.test_nominal[i]);
        in.anomaly_runs.push_back(&e.nominal_runs[i]);
    }
    for (std::size_t i = 0; i < e.test_anomalous.size(); ++i) {
        in.anomaly.push_back(&e.test_anomalous[i]);
        in.anomaly_runs.push_back(&e.anomalous_runs[i]);
    }
    for (std::size_t i = 0; i < e.recovery.size(); ++i) {
        in.recovery.push_back(&e.recovery[i]);
        in.recovery_runs.push_back(&e.recovery_runs[i]);
    }
    return in;
}

inline Experiment run_experiment(TaskSpec spec, const ExperimentConfig& cfg = {}) {
    Experiment e;
    e.spec = std::move(spec);
    e.train = nominal_trials(e.spec, kTrainSeedBase);
    e.test_nominal = nominal_trials(e.spec, kNominalTestSeedBase);
    e.test_anomalous = anomaly_suite(e.spec);
    e.recovery = recovery_trials(e.spec);
    e.skills = train_skill_models(e.train, cfg);
    e.calibration = calibrate_detectors(e.skills.models, e.train, cfg);
    const DetectorConfig dcfg = all_detectors(cfg);
    e.nominal_runs = run_all(e.skills.models, e.calibration, e.test_nominal, dcfg);
    e.anomalous_runs = run_all(e.skills.models, e.calibration, e.test_anomalous, dcfg);
    e.recovery_runs = run_all(e.skills.models, e.calibration, e.recovery, dcfg);
    e.report = evaluate(standard_inputs(e), cfg);
    return e;
}

inline Experiment run_experiment(std::uint64_t seed, const ExperimentConfig& cfg = {}) {
    return run_experiment(default_task_spec(seed), cfg);
}

}  // namespace hmmev
