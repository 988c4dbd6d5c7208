#pragma once

#include "hmmev/types.hpp"

#include <algorithm>
#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace hmmev {

enum class AnomalyType { ObjectDisplacement, MissingObject, SlipperyPick, GripperCollision, ArmCollision };

inline constexpr std::array<AnomalyType, 5> kAllAnomalyTypes = {
    AnomalyType::ObjectDisplacement, AnomalyType::MissingObject, AnomalyType::SlipperyPick,
    AnomalyType::GripperCollision, AnomalyType::ArmCollision};

inline std::string_view to_string(AnomalyType a) {
    switch (a) {
        case AnomalyType::ObjectDisplacement: return "object_displacement";
        case AnomalyType::MissingObject: return "missing_object";
        case AnomalyType::SlipperyPick: return "slippery_pick";
        case AnomalyType::GripperCollision: return "gripper_collision";
        case AnomalyType::ArmCollision: return "arm_collision";
    }
    return "unknown";
}

inline AnomalyType anomaly_type_from_string(std::string_view s) {
    for (AnomalyType a : kAllAnomalyTypes) {
        if (to_string(a) == s) return a;
    }
    throw ValidationError("unknown anomaly type '" + std::string(s) + "'");
}

// Timesteps are one-based and windows are inclusive on both ends.
struct Window {
    int t_start = 1;
    int t_end = 1;
    friend bool operator==(const Window&, const Window&) = default;
};

struct AnomalyWindow {
    int t_start = 1;
    int t_end = 1;
    AnomalyType type = AnomalyType::GripperCollision;
    friend bool operator==(const AnomalyWindow&, const AnomalyWindow&) = default;
};

struct Trial {
    Observations observations;
    std::vector<SkillId> skill_labels;
    std::vector<AnomalyWindow> anomalies;
    std::vector<Window> recovery_windows;
    double dt = 1.0;

    [[nodiscard]] int length() const { return static_cast<int>(observations.rows()); }
    [[nodiscard]] int dim() const { return static_cast<int>(observations.cols()); }

    friend bool operator==(const Trial& a, const Trial& b) {
        return a.observations.rows() == b.observations.rows() && a.observations.cols() == b.observations.cols() &&
               a.observations == b.observations && a.skill_labels == b.skill_labels && a.anomalies == b.anomalies &&
               a.recovery_windows == b.recovery_windows && a.dt == b.dt;
    }
};

struct SkillBlock {
    SkillId skill = 0;
    int t_start = 1;
    int t_end = 1;

    [[nodiscard]] int length() const { return t_end - t_start + 1; }
    friend bool operator==(const SkillBlock&, const SkillBlock&) = default;
};

// Maximal runs of equal labels, in order.
inline std::vector<SkillBlock> skill_blocks(const std::vector<SkillId>& labels) {
    std::vector<SkillBlock> blocks;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int t = static_cast<int>(i) + 1;
        if (blocks.empty() || blocks.back().skill != labels[i]) {
            blocks.push_back({labels[i], t, t});
        } else {
            blocks.back().t_end = t;
        }
    }
    return blocks;
}

inline const SkillBlock& block_containing(const std::vector<SkillBlock>& blocks, int t) {
    for (const auto& b : blocks) {
        if (t >= b.t_start && t <= b.t_end) return b;
    }
    throw ValidationError("timestep " + std::to_string(t) + " is outside every skill block");
}

inline Observations rows_between(const Observations& y, int t_start, int t_end) {
    return y.middleRows(t_start - 1, t_end - t_start + 1);
}

inline void validate_trial(const Trial& trial) {
    const int len = trial.length();
    if (len < 1) throw ValidationError("trial is empty");
    if (static_cast<int>(trial.skill_labels.size()) != len) {
        throw ValidationError("trial has " + std::to_string(trial.skill_labels.size()) + " labels for " +
                              std::to_string(len) + " observations");
    }
    require_finite(trial.observations, "trial");
    auto in_range = [len](int a, int b) { return a >= 1 && b <= len && a <= b; };
    for (const auto& w : trial.anomalies) {
        if (!in_range(w.t_start, w.t_end)) throw ValidationError("anomaly window outside the trial");
    }
    for (const auto& w : trial.recovery_windows) {
        if (!in_range(w.t_start, w.t_end)) throw ValidationError("recovery window outside the trial");
    }
    for (AnomalyType type : kAllAnomalyTypes) {
        std::vector<AnomalyWindow> same;
        for (const auto& w : trial.anomalies) {
            if (w.type == type) same.push_back(w);
        }
        std::sort(same.begin(), same.end(), [](const auto& a, const auto& b) { return a.t_start < b.t_start; });
        for (std::size_t i = 1; i < same.size(); ++i) {
            if (same[i].t_start <= same[i - 1].t_end) {
                throw ValidationError("overlapping " + std::string(to_string(type)) + " windows");
            }
        }
    }
}

}  // namespace hmmev
