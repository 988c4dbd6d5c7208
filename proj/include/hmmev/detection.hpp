#pragma once

#include "hmmev/forward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hmmev {

using SkillModels = std::map<SkillId, HmmModel>;
using SkillBeliefs = std::map<SkillId, LogBelief>;

// ---------------------------------------------------------------------------
// Forward gradient

inline double forward_gradient(double loglik, double loglik_prev) { return loglik - loglik_prev; }

// grad L_t for t = 2..T (entry k holds t = k + 2).
inline std::vector<double> gradient_series(const HmmModel& model, const Observations& y) {
    if (y.rows() < 2) throw ValidationError("gradient_series needs at least two observations");
    const auto ll = loglik_series(model, y);
    std::vector<double> g(ll.size() - 1);
    for (std::size_t t = 1; t < ll.size(); ++t) g[t - 1] = forward_gradient(ll[t], ll[t - 1]);
    return g;
}

struct SkillScores {
    SkillId skill = 0;                 // argmax, lowest id on ties
    std::map<SkillId, double> values;  // per-model gradient (or L_1 on the first step)
};

inline SkillId argmax_skill(const std::map<SkillId, double>& values) {
    SkillId best = values.begin()->first;
    double best_val = values.begin()->second;
    for (const auto& [id, v] : values) {
        if (v > best_val) {  // map order is ascending, so strict keeps the lowest id
            best = id;
            best_val = v;
        }
    }
    return best;
}

// Advances every model's belief by one observation and picks the skill whose model has
// the largest forward gradient. On the very first observation there is no L_0, so the
// initial log-likelihood L_1 is used as the score (equivalently, L_0 = 0 for every model).
inline SkillScores identify_skill(const SkillModels& models, SkillBeliefs& states, const ObsRef& y) {
    if (models.empty()) throw ValidationError("identify_skill: no models");
    std::optional<int> step;
    SkillScores out;
    for (const auto& [id, model] : models) {
        auto it = states.find(id);
        const int t = it == states.end() ? 0 : it->second.t;
        if (step && *step != t) throw ValidationError("identify_skill: beliefs are at different timesteps");
        step = t;
        if (t == 0) {
            LogBelief b = forward_init(model, y);
            out.values[id] = b.loglik;
            states[id] = std::move(b);
        } else {
            LogBelief b = forward_step(model, it->second, y);
            out.values[id] = forward_gradient(b.loglik, it->second.loglik);
            it->second = std::move(b);
        }
    }
    out.skill = argmax_skill(out.values);
    return out;
}

// Per-timestep predictions over a whole sequence.
inline std::vector<SkillId> identify_sequence(const SkillModels& models, const Observations& y) {
    SkillBeliefs states;
    std::vector<SkillId> labels;
    labels.reserve(static_cast<std::size_t>(y.rows()));
    for (Eigen::Index t = 0; t < y.rows(); ++t) labels.push_back(identify_skill(models, states, row_of(y, t)).skill);
    return labels;
}

// Baseline: argmax over skills of the cumulative log-likelihood of the whole sequence.
inline SkillId score_skill_cumulative(const SkillModels& models, const Observations& y) {
    if (models.empty()) throw ValidationError("score_skill_cumulative: no models");
    if (y.rows() < 1) throw ValidationError("score_skill_cumulative: empty sequence");
    std::map<SkillId, double> finals;
    for (const auto& [id, model] : models) finals[id] = total_loglik(model, y);
    return argmax_skill(finals);
}

// Prefix-wise cumulative predictions (the H_{t,s} baseline applied online).
inline std::vector<SkillId> cumulative_sequence(const SkillModels& models, const Observations& y) {
    std::map<SkillId, ForwardFilter> filters;
    for (const auto& [id, model] : models) filters.emplace(id, ForwardFilter(model));
    std::vector<SkillId> labels;
    for (Eigen::Index t = 0; t < y.rows(); ++t) {
        std::map<SkillId, double> h;
        for (auto& [id, f] : filters) h[id] = f.push(row_of(y, t)).loglik;
        labels.push_back(argmax_skill(h));
    }
    return labels;
}

// ---------------------------------------------------------------------------
// Gradient anomaly test

struct GradientCalibration {
    SkillId model_id = 0;
    double grad_min = 0.0;
    double grad_max = 0.0;
    double grad_range = 0.0;

    [[nodiscard]] double threshold() const { return grad_min - grad_range / 2.0; }
    friend bool operator==(const GradientCalibration&, const GradientCalibration&) = default;
};

inline GradientCalibration make_gradient_calibration(SkillId id, double grad_min, double grad_max) {
    if (!(grad_max >= grad_min)) throw ValidationError("gradient calibration needs grad_max >= grad_min");
    return {id, grad_min, grad_max, grad_max - grad_min};
}

inline GradientCalibration calibrate_gradient(const HmmModel& model, const std::vector<Observations>& nominal,
                                              SkillId model_id = 0) {
    if (nominal.empty()) throw ValidationError("calibrate_gradient: no nominal trials");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& y : nominal) {
        for (double g : gradient_series(model, y)) {
            lo = std::min(lo, g);
            hi = std::max(hi, g);
        }
    }
    return make_gradient_calibration(model_id, lo, hi);
}

inline bool gradient_anomaly_test(const GradientCalibration& cal, double grad) { return grad < cal.threshold(); }

// ---------------------------------------------------------------------------
// Magnitude threshold F1 = mu(H) - k sigma(H) and its derivative-of-difference F2

struct MagnitudeThreshold {
    SkillId model_id = 0;
    std::vector<double> mu;
    std::vector<double> sigma;
    double k = 3.0;

    [[nodiscard]] std::size_t length() const { return mu.size(); }

    // F1 at one-based local time t; times past the curve clamp to its last value.
    [[nodiscard]] double threshold(int t) const {
        if (mu.empty()) throw ValidationError("empty magnitude threshold");
        if (t < 1) throw ValidationError("magnitude threshold queried at t < 1");
        const std::size_t i = std::min(static_cast<std::size_t>(t), mu.size()) - 1;
        return mu[i] - k * sigma[i];
    }
};

// Linear resampling of a curve onto n points, endpoints preserved.
inline std::vector<double> resample_linear(const std::vector<double>& xs, std::size_t n) {
    if (xs.empty() || n == 0) throw ValidationError("resample_linear: empty input");
    if (xs.size() == 1 || n == 1) return std::vector<double>(n, xs.front());
    std::vector<double> out(n);
    const double scale = static_cast<double>(xs.size() - 1) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double pos = static_cast<double>(i) * scale;
        const auto lo = std::min(static_cast<std::size_t>(pos), xs.size() - 2);
        const double frac = pos - static_cast<double>(lo);
        out[i] = xs[lo] + frac * (xs[lo + 1] - xs[lo]);
    }
    return out;
}

inline std::size_t median_length(std::vector<std::size_t> lengths) {
    std::sort(lengths.begin(), lengths.end());
    return lengths[(lengths.size() - 1) / 2];
}

// Aligned cumulative log-likelihood curves of the nominal trials, resampled to the median length.
inline std::vector<std::vector<double>> aligned_loglik_curves(const HmmModel& model,
                                                              const std::vector<Observations>& nominal) {
    std::vector<std::vector<double>> curves;
    std::vector<std::size_t> lengths;
    for (const auto& y : nominal) {
        curves.push_back(loglik_series(model, y));
        lengths.push_back(curves.back().size());
    }
    const std::size_t target = median_length(lengths);
    for (auto& c : curves) c = resample_linear(c, target);
    return curves;
}

inline MagnitudeThreshold calibrate_magnitude(const HmmModel& model, const std::vector<Observations>& nominal,
                                              double k = 3.0, SkillId model_id = 0) {
    if (nominal.size() < 2) throw ValidationError("calibrate_magnitude needs at least two nominal trials");
    const auto curves = aligned_loglik_curves(model, nominal);
    const std::size_t len = curves.front().size();
    const double n = static_cast<double>(curves.size());
    MagnitudeThreshold thr;
    thr.model_id = model_id;
    thr.k = k;
    thr.mu.assign(len, 0.0);
    thr.sigma.assign(len, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
        double m = 0.0;
        for (const auto& c : curves) m += c[t];
        m /= n;
        double ss = 0.0;
        for (const auto& c : curves) ss += (c[t] - m) * (c[t] - m);
        thr.mu[t] = m;
        thr.sigma[t] = std::sqrt(ss / (n - 1.0));
    }
    return thr;
}

inline bool magnitude_anomaly_test(const MagnitudeThreshold& thr, double loglik, int t) {
    return loglik < thr.threshold(t);
}

// Discrete derivative of |H - F1| at one-based local time t >= 2. `local_loglik[i]` is H at t = i + 1.
inline double dod_statistic(const MagnitudeThreshold& thr, const std::vector<double>& local_loglik, int t) {
    if (t < 2) throw ValidationError("derivative-of-difference needs t >= 2");
    if (static_cast<std::size_t>(t) > local_loglik.size()) throw ValidationError("dod: t beyond the series");
    const double now = std::abs(local_loglik[static_cast<std::size_t>(t - 1)] - thr.threshold(t));
    const double before = std::abs(local_loglik[static_cast<std::size_t>(t - 2)] - thr.threshold(t - 1));
    return now - before;
}

inline bool dod_anomaly_test(const MagnitudeThreshold& thr, const std::vector<double>& local_loglik, int t,
                             double dod_threshold) {
    return dod_statistic(thr, local_loglik, t) > dod_threshold;
}

// Bound = (max statistic seen on the nominal trials) widened by `factor` away from zero.
inline double calibrate_dod(const MagnitudeThreshold& thr, const HmmModel& model,
                            const std::vector<Observations>& nominal, double factor = 1.5) {
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& y : nominal) {
        const auto h = loglik_series(model, y);
        for (int t = 2; t <= static_cast<int>(h.size()); ++t) hi = std::max(hi, dod_statistic(thr, h, t));
    }
    if (!std::isfinite(hi)) throw ValidationError("calibrate_dod: nominal trials too short");
    return hi >= 0.0 ? hi * factor : hi / factor;
}

// ---------------------------------------------------------------------------
// Online detector

enum class EventKind { SkillSwitch, AnomalyTrigger };
enum class DetectorKind { Gradient, Magnitude, Dod };

inline std::string_view to_string(EventKind k) { return k == EventKind::SkillSwitch ? "skill-switch" : "anomaly-trigger"; }

inline std::string_view to_string(DetectorKind d) {
    switch (d) {
        case DetectorKind::Gradient: return "gradient";
        case DetectorKind::Magnitude: return "magnitude";
        case DetectorKind::Dod: return "dod";
    }
    return "unknown";
}

inline EventKind event_kind_from_string(std::string_view s) {
    if (s == "skill-switch") return EventKind::SkillSwitch;
    if (s == "anomaly-trigger") return EventKind::AnomalyTrigger;
    throw ValidationError("unknown event kind '" + std::string(s) + "'");
}

inline DetectorKind detector_kind_from_string(std::string_view s) {
    if (s == "gradient") return DetectorKind::Gradient;
    if (s == "magnitude") return DetectorKind::Magnitude;
    if (s == "dod") return DetectorKind::Dod;
    throw ValidationError("unknown detector '" + std::string(s) + "'");
}

struct Event {
    int t = 0;  // one-based
    EventKind kind = EventKind::SkillSwitch;
    SkillId skill = 0;
    DetectorKind detector = DetectorKind::Gradient;
    double value = 0.0;
    friend bool operator==(const Event&, const Event&) = default;
};

struct EventTimeline {
    std::vector<Event> events;

    [[nodiscard]] std::vector<int> trigger_times(DetectorKind d) const {
        std::vector<int> out;
        for (const auto& e : events) {
            if (e.kind == EventKind::AnomalyTrigger && e.detector == d) out.push_back(e.t);
        }
        return out;
    }

    [[nodiscard]] std::vector<Event> switches() const {
        std::vector<Event> out;
        for (const auto& e : events) {
            if (e.kind == EventKind::SkillSwitch) out.push_back(e);
        }
        return out;
    }

    friend bool operator==(const EventTimeline&, const EventTimeline&) = default;
};

// Collapses triggers that follow the previous one within `gap` steps; returns the first time of each group.
inline std::vector<int> group_triggers(std::vector<int> times, int gap) {
    std::sort(times.begin(), times.end());
    std::vector<int> groups;
    int last = 0;
    for (int t : times) {
        if (groups.empty() || t - last > gap) groups.push_back(t);
        last = t;
    }
    return groups;
}

struct DetectorCalibration {
    std::map<SkillId, GradientCalibration> gradient;
    std::map<SkillId, MagnitudeThreshold> magnitude;
    std::map<SkillId, double> dod_bound;
};

struct DetectorConfig {
    bool gradient = true;
    bool magnitude = false;
    bool dod = false;
    int suppression_window = 3;  // steps, starting at the switch step
    // A candidate switch whose own model flags the observation as anomalous is not accepted.
    bool hold_on_anomalous_switch = true;

    [[nodiscard]] bool any() const { return gradient || magnitude || dod; }
};

// Single-stream detector state. Not safe for concurrent use; the models must outlive it.
class DetectorState {
public:
    DetectorState(const SkillModels& models, const DetectorCalibration& cal, DetectorConfig cfg)
        : models_(&models), cal_(&cal), cfg_(cfg) {
        if (models.empty()) throw ValidationError("detector needs at least one model");
        for (const auto& [id, m] : models) {
            (void)m;
            if (cfg_.gradient && !cal.gradient.count(id)) {
                throw ValidationError("missing gradient calibration for skill " + std::to_string(id));
            }
            if ((cfg_.magnitude || cfg_.dod) && !cal.magnitude.count(id)) {
                throw ValidationError("missing magnitude threshold for skill " + std::to_string(id));
            }
            if (cfg_.dod && !cal.dod_bound.count(id)) {
                throw ValidationError("missing derivative-of-difference bound for skill " + std::to_string(id));
            }
        }
    }

    std::vector<Event> step(const ObsRef& y) {
        std::vector<Event> events;
        last_ = identify_skill(*models_, beliefs_, y);
        ++t_;
        if (t_ == 1) {
            hypothesis_ = last_.skill;
            restart_local(y);
            return events;
        }
        const SkillId cand = last_.skill;
        bool switched = false;
        if (cand != hypothesis_ && accept_switch(cand)) {
            hypothesis_ = cand;
            switched = true;
            suppress_until_ = t_ + cfg_.suppression_window - 1;
            events.push_back({t_, EventKind::SkillSwitch, cand, DetectorKind::Gradient, last_.values.at(cand)});
        }
        if (switched) {
            restart_local(y);
        } else {
            local_.push_back(local_filter_->push(y).loglik);
        }
        if (t_ <= suppress_until_) return events;

        const int tau = static_cast<int>(local_.size());
        if (cfg_.gradient) {
            const double g = last_.values.at(hypothesis_);
            if (gradient_anomaly_test(cal_->gradient.at(hypothesis_), g)) {
                events.push_back({t_, EventKind::AnomalyTrigger, hypothesis_, DetectorKind::Gradient, g});
            }
        }
        if (cfg_.magnitude) {
            const double h = local_.back();
            if (magnitude_anomaly_test(cal_->magnitude.at(hypothesis_), h, tau)) {
                events.push_back({t_, EventKind::AnomalyTrigger, hypothesis_, DetectorKind::Magnitude, h});
            }
        }
        if (cfg_.dod && tau >= 2) {
            const double d = dod_statistic(cal_->magnitude.at(hypothesis_), local_, tau);
            if (d > cal_->dod_bound.at(hypothesis_)) {
                events.push_back({t_, EventKind::AnomalyTrigger, hypothesis_, DetectorKind::Dod, d});
            }
        }
        return events;
    }

    [[nodiscard]] int t() const { return t_; }
    [[nodiscard]] SkillId hypothesis() const { return hypothesis_; }
    [[nodiscard]] const SkillScores& last_scores() const { return last_; }
    [[nodiscard]] const SkillBeliefs& beliefs() const { return beliefs_; }
    // H of the hypothesis model since its identified start.
    [[nodiscard]] double local_loglik() const { return local_.empty() ? kNegInf : local_.back(); }

private:
    bool accept_switch(SkillId cand) const {
        if (!cfg_.hold_on_anomalous_switch) return true;
        auto it = cal_->gradient.find(cand);
        if (it == cal_->gradient.end()) return true;
        return !gradient_anomaly_test(it->second, last_.values.at(cand));
    }

    void restart_local(const ObsRef& y) {
        local_filter_.emplace(models_->at(hypothesis_));
        local_.clear();
        local_.push_back(local_filter_->push(y).loglik);
    }

    const SkillModels* models_;
    const DetectorCalibration* cal_;
    DetectorConfig cfg_;
    SkillBeliefs beliefs_;
    SkillScores last_;
    SkillId hypothesis_ = 0;
    int t_ = 0;
    int suppress_until_ = 0;
    std::optional<ForwardFilter> local_filter_;
    std::vector<double> local_;
};

// Everything a single detector pass produces; the series feed plots and reports.
struct DetectionRun {
    EventTimeline timeline;
    std::vector<SkillId> hypothesis;      // detector's skill hypothesis per step
    std::vector<SkillId> argmax_labels;   // raw per-step argmax of the forward gradient
    std::vector<SkillId> skills;          // column order of the matrices below
    Eigen::MatrixXd scores;               // T x S: L_1 on row 0, grad L_t afterwards
    Eigen::MatrixXd logliks;              // T x S: L_t per model
    std::vector<double> local_loglik;     // H of the hypothesis model since its start
};

inline DetectionRun run_detector(const SkillModels& models, const DetectorCalibration& cal, const Observations& y,
                                 const DetectorConfig& cfg) {
    if (y.rows() < 1) throw ValidationError("run_detector: empty sequence");
    DetectorState state(models, cal, cfg);
    DetectionRun run;
    for (const auto& [id, m] : models) {
        (void)m;
        run.skills.push_back(id);
    }
    const auto s = static_cast<Eigen::Index>(run.skills.size());
    run.scores.resize(y.rows(), s);
    run.logliks.resize(y.rows(), s);
    for (Eigen::Index t = 0; t < y.rows(); ++t) {
        for (const auto& e : state.step(row_of(y, t))) run.timeline.events.push_back(e);
        run.hypothesis.push_back(state.hypothesis());
        run.argmax_labels.push_back(state.last_scores().skill);
        for (Eigen::Index c = 0; c < s; ++c) {
            const SkillId id = run.skills[static_cast<std::size_t>(c)];
            run.scores(t, c) = state.last_scores().values.at(id);
            run.logliks(t, c) = state.beliefs().at(id).loglik;
        }
        run.local_loglik.push_back(state.local_loglik());
    }
    return run;
}

}  // namespace hmmev
