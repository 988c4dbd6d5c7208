#pragma once

#include "hmmev/detection.hpp"
#include "hmmev/trial.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <vector>

namespace hmmev {

// ---------------------------------------------------------------------------
// Confusion matrix

struct ConfusionMatrix {
    std::vector<SkillId> skills;  // row/column order
    Eigen::MatrixXd counts;       // counts(i, j): true skills[i] predicted as skills[j]
    Eigen::MatrixXd rates;        // row-normalised counts; all-zero rows stay zero
    double overall_accuracy = 0.0;

    [[nodiscard]] double rate(SkillId truth, SkillId pred) const { return rates(index(truth), index(pred)); }

    [[nodiscard]] Eigen::Index index(SkillId s) const {
        const auto it = std::find(skills.begin(), skills.end(), s);
        if (it == skills.end()) throw ValidationError("skill " + std::to_string(s) + " not in confusion matrix");
        return static_cast<Eigen::Index>(it - skills.begin());
    }
};

inline ConfusionMatrix confusion_matrix(const std::vector<SkillId>& pred, const std::vector<SkillId>& truth) {
    if (pred.size() != truth.size()) {
        throw ValidationError("confusion_matrix: " + std::to_string(pred.size()) + " predictions for " +
                              std::to_string(truth.size()) + " labels");
    }
    std::set<SkillId> ids(truth.begin(), truth.end());
    ids.insert(pred.begin(), pred.end());
    ConfusionMatrix cm;
    cm.skills.assign(ids.begin(), ids.end());
    const auto s = static_cast<Eigen::Index>(cm.skills.size());
    cm.counts = Eigen::MatrixXd::Zero(s, s);
    for (std::size_t t = 0; t < truth.size(); ++t) cm.counts(cm.index(truth[t]), cm.index(pred[t])) += 1.0;
    cm.rates = cm.counts;
    for (Eigen::Index i = 0; i < s; ++i) {
        const double row = cm.counts.row(i).sum();
        if (row > 0.0) cm.rates.row(i) /= row;
    }
    const double total = cm.counts.sum();
    cm.overall_accuracy = total > 0.0 ? cm.counts.trace() / total : 0.0;
    return cm;
}

// Per-timestep accuracy implied by per-skill diagonal rates and per-skill sample counts.
inline double weighted_accuracy(const std::vector<double>& diagonal, const std::vector<double>& weights) {
    if (diagonal.size() != weights.size() || diagonal.empty()) throw ValidationError("weighted_accuracy: size mismatch");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < diagonal.size(); ++i) {
        num += diagonal[i] * weights[i];
        den += weights[i];
    }
    return num / den;
}

// ---------------------------------------------------------------------------
// Reaction time

enum class ReactionCriterion { FirstOccurrence, FirstKSuccessive };

struct ReactionConfig {
    int lookback = 20;  // steps before the true start where an early prediction still counts
    int k = 10;         // run length for the successive criterion
};

struct BlockReaction {
    SkillId skill = 0;
    int true_start = 0;
    int length = 0;
    std::optional<int> predicted_start;
    std::optional<double> reaction;  // offset / length; negative when the prediction is early
};

inline std::vector<BlockReaction> block_reactions(const std::vector<SkillId>& pred, const std::vector<SkillId>& truth,
                                                  ReactionCriterion criterion, const ReactionConfig& cfg = {}) {
    if (pred.size() != truth.size()) throw ValidationError("reaction: prediction/label length mismatch");
    if (cfg.k < 1 || cfg.lookback < 0) throw ValidationError("reaction: invalid configuration");
    const int len = static_cast<int>(truth.size());
    std::vector<BlockReaction> out;
    for (const auto& b : skill_blocks(truth)) {
        BlockReaction r;
        r.skill = b.skill;
        r.true_start = b.t_start;
        r.length = std::max(1, b.t_end - b.t_start);
        const int from = std::max(1, b.t_start - cfg.lookback);
        const int need = criterion == ReactionCriterion::FirstOccurrence ? 1 : cfg.k;
        int run = 0;
        for (int t = from; t <= len; ++t) {
            run = pred[static_cast<std::size_t>(t - 1)] == b.skill ? run + 1 : 0;
            if (run == need) {
                r.predicted_start = t - need + 1;
                break;
            }
        }
        if (r.predicted_start) r.reaction = static_cast<double>(*r.predicted_start - b.t_start) / r.length;
        out.push_back(r);
    }
    return out;
}

struct ReactionStats {
    std::map<SkillId, std::optional<double>> per_skill;  // signed mean over blocks, fraction of duration
    double signed_average = 0.0;
    double abs_average = 0.0;      // mean over skills of |per-skill value|
    double mean_abs_block = 0.0;   // mean over all blocks of |reaction|
    int missing_blocks = 0;
};

inline ReactionStats summarize_reactions(const std::vector<BlockReaction>& blocks) {
    ReactionStats st;
    std::map<SkillId, std::vector<double>> by_skill;
    double abs_sum = 0.0;
    int found = 0;
    for (const auto& b : blocks) {
        by_skill[b.skill];
        if (!b.reaction) {
            ++st.missing_blocks;
            continue;
        }
        by_skill[b.skill].push_back(*b.reaction);
        abs_sum += std::abs(*b.reaction);
        ++found;
    }
    double s_sum = 0.0;
    double a_sum = 0.0;
    int skills = 0;
    for (const auto& [id, vals] : by_skill) {
        if (vals.empty()) {
            st.per_skill[id] = std::nullopt;
            continue;
        }
        double m = 0.0;
        for (double v : vals) m += v;
        m /= static_cast<double>(vals.size());
        st.per_skill[id] = m;
        s_sum += m;
        a_sum += std::abs(m);
        ++skills;
    }
    if (skills > 0) {
        st.signed_average = s_sum / skills;
        st.abs_average = a_sum / skills;
    }
    if (found > 0) st.mean_abs_block = abs_sum / found;
    return st;
}

inline ReactionStats reaction_percentage(const std::vector<SkillId>& pred, const std::vector<SkillId>& truth,
                                         ReactionCriterion criterion, const ReactionConfig& cfg = {}) {
    return summarize_reactions(block_reactions(pred, truth, criterion, cfg));
}

// ---------------------------------------------------------------------------
// Anomaly accounting

struct TrialCounts {
    int tp = 0;
    int fp = 0;
    int fn = 0;
};

struct AnomalyCounts {
    int tp = 0;
    int fp = 0;
    int fn = 0;
    std::vector<TrialCounts> per_trial;

    AnomalyCounts& operator+=(const AnomalyCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        per_trial.insert(per_trial.end(), o.per_trial.begin(), o.per_trial.end());
        return *this;
    }
};

// Grouped triggers are matched per skill block: the first group at or after an anomaly's onset
// (and inside that anomaly's skill block) is its true positive, later groups in the block are
// ignored, groups with no earlier anomaly in their block are false positives.
inline AnomalyCounts match_anomalies(const std::vector<int>& trigger_times, const Trial& trial, int grouping_gap) {
    const auto blocks = skill_blocks(trial.skill_labels);
    std::vector<bool> matched(trial.anomalies.size(), false);
    TrialCounts c;
    for (int g : group_triggers(trigger_times, grouping_gap)) {
        const SkillBlock& block = block_containing(blocks, g);
        bool after_anomaly = false;
        std::optional<std::size_t> target;
        for (std::size_t a = 0; a < trial.anomalies.size(); ++a) {
            const auto& w = trial.anomalies[a];
            if (w.t_start < block.t_start || w.t_start > block.t_end || w.t_start > g) continue;
            after_anomaly = true;
            if (!matched[a] && (!target || w.t_start < trial.anomalies[*target].t_start)) target = a;
        }
        if (target) {
            matched[*target] = true;
            ++c.tp;
        } else if (!after_anomaly) {
            ++c.fp;
        }
    }
    c.fn = static_cast<int>(std::count(matched.begin(), matched.end(), false));
    AnomalyCounts out{c.tp, c.fp, c.fn, {c}};
    return out;
}

struct MicroMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f_score = 0.0;
};

inline MicroMetrics micro_metrics(const AnomalyCounts& c) {
    if (c.tp < 0 || c.fp < 0 || c.fn < 0) throw ValidationError("negative anomaly counts");
    MicroMetrics m;
    if (c.tp + c.fp == 0) {
        m.precision = c.fn == 0 ? 1.0 : 0.0;
    } else {
        m.precision = static_cast<double>(c.tp) / (c.tp + c.fp);
    }
    m.recall = c.tp + c.fn == 0 ? 1.0 : static_cast<double>(c.tp) / (c.tp + c.fn);
    m.f_score = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

// Span after the first recovery window up to (not including) the start of the next different skill.
inline Window post_recovery_span(const Trial& trial) {
    if (trial.recovery_windows.empty()) throw ValidationError("trial has no recovery window");
    const Window& w = trial.recovery_windows.front();
    const SkillId current = trial.skill_labels.at(static_cast<std::size_t>(w.t_end - 1));
    int next = trial.length() + 1;
    for (int t = w.t_end + 1; t <= trial.length(); ++t) {
        if (trial.skill_labels[static_cast<std::size_t>(t - 1)] != current) {
            next = t;
            break;
        }
    }
    return {w.t_end + 1, next - 1};
}

inline int post_recovery_fp(const std::vector<int>& trigger_times, const Trial& trial, int grouping_gap) {
    const Window span = post_recovery_span(trial);
    std::vector<int> inside;
    for (int t : trigger_times) {
        if (t >= span.t_start && t <= span.t_end) inside.push_back(t);
    }
    return static_cast<int>(group_triggers(inside, grouping_gap).size());
}

}  // namespace hmmev
