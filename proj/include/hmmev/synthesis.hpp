#pragma once

#include "hmmev/diagnostics.hpp"
#include "hmmev/trial.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace hmmev {

// Channel layout of the 13-dim observation: position, unit quaternion, force, torque.
inline constexpr int kPosBegin = 0;
inline constexpr int kQuatBegin = 3;
inline constexpr int kForceBegin = 7;
inline constexpr int kTorqueBegin = 10;
inline constexpr int kDefaultDim = 13;

struct SkillSpec {
    SkillId id = 0;
    std::string name;
    HmmModel generator;
    int min_duration = 1;
    int max_duration = 1;
};

struct TaskSpec {
    int dim = kDefaultDim;
    std::uint64_t seed = 0;
    double min_separation = 0.0;  // minimum symmetric KL between any two states of different skills
    double dt = 0.01;
    // Per-trial constant wrench sensor bias, in units of the nominal wrench noise.
    double wrench_bias = 0.0;
    std::vector<SkillSpec> skills;

    [[nodiscard]] const SkillSpec& skill(SkillId id) const {
        for (const auto& s : skills) {
            if (s.id == id) return s;
        }
        throw ValidationError("no skill with id " + std::to_string(id));
    }
};

inline void validate_spec(const TaskSpec& spec) {
    if (spec.skills.empty()) throw ValidationError("task spec has no skills");
    for (const auto& s : spec.skills) {
        if (s.min_duration < s.generator.n_states() || s.max_duration < s.min_duration) {
            throw ValidationError("skill '" + s.name + "' has an invalid duration range");
        }
        if (s.generator.dim() != spec.dim) throw ValidationError("skill '" + s.name + "' generator dimension mismatch");
    }
}

// KL(p || q) + KL(q || p) for two diagonal Gaussians.
inline double symmetric_kl_diag(const GaussianEmission& p, const GaussianEmission& q) {
    const Eigen::ArrayXd vp = p.variances().array();
    const Eigen::ArrayXd vq = q.variances().array();
    const Eigen::ArrayXd d2 = (p.mean() - q.mean()).array().square();
    return 0.5 * ((vp / vq + vq / vp - 2.0) + d2 * (1.0 / vp + 1.0 / vq)).sum();
}

inline double min_cross_skill_kl(const TaskSpec& spec) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < spec.skills.size(); ++a) {
        for (std::size_t b = a + 1; b < spec.skills.size(); ++b) {
            for (const auto& ea : spec.skills[a].generator.emissions()) {
                for (const auto& eb : spec.skills[b].generator.emissions()) {
                    best = std::min(best, symmetric_kl_diag(ea, eb));
                }
            }
        }
    }
    return best;
}

namespace detail {

struct SkillProfile {
    const char* name;
    std::array<double, 3> pos_from, pos_to;
    double yaw_from, yaw_to;  // rotation about the vertical axis of a downward-pointing gripper
    std::array<double, 3> force_from, force_to;
    std::array<double, 3> torque_from, torque_to;
    int base_duration;
};

// Pick at (0.55, 0, 0.12), place at (0.30, 0.40, 0.12), hover 13 cm above each.
inline const std::array<SkillProfile, 5>& pick_and_place_profiles() {
    static const std::array<SkillProfile, 5> profiles = {{
        {"hover_pick", {0.40, 0.20, 0.38}, {0.55, 0.00, 0.25}, 0.0, 0.3, {0, 0, 0}, {0, 0, 0},
         {0, 0, 0}, {0, 0, 0}, 110},
        {"grasp", {0.55, 0.00, 0.23}, {0.55, 0.00, 0.12}, 0.3, 0.3, {1.5, 0, -2.5}, {4.0, 0, -7.0},
         {0, 0.10, 0}, {0, 0.25, 0}, 95},
        {"lift", {0.55, 0.00, 0.13}, {0.55, 0.00, 0.27}, 0.3, 0.35, {3.0, 0.5, -11.0}, {3.0, 0.5, -9.5},
         {0.3, -0.3, 0}, {0.3, -0.2, 0}, 100},
        {"hover_place", {0.52, 0.05, 0.29}, {0.30, 0.40, 0.25}, 0.45, 0.9, {2.5, -1.5, -9.5}, {2.0, -2.0, -9.5},
         {-0.2, 0.2, 0.15}, {-0.3, 0.3, 0.15}, 130},
        {"place", {0.30, 0.40, 0.23}, {0.30, 0.40, 0.12}, 0.9, 0.9, {0.0, 0, -6.0}, {-1.0, 0, 3.0},
         {0.2, 0.3, -0.2}, {0.2, 0.4, -0.3}, 90},
    }};
    return profiles;
}

inline constexpr std::array<double, 4> kChannelNoise = {0.004, 0.004, 0.4, 0.04};  // pos, quat, force, torque

inline Eigen::VectorXd nominal_noise(int dim) {
    Eigen::VectorXd s(dim);
    for (int c = 0; c < dim; ++c) {
        const int group = c < kQuatBegin ? 0 : c < kForceBegin ? 1 : c < kTorqueBegin ? 2 : 3;
        s(c) = kChannelNoise[static_cast<std::size_t>(group)];
    }
    return s;
}

inline constexpr double kDurationSpread = 0.1;

inline double lerp(double a, double b, double f) { return a + (b - a) * f; }

inline HmmModel left_right_generator(const std::vector<GaussianEmission>& emissions, int mean_duration) {
    const auto n = static_cast<Eigen::Index>(emissions.size());
    Eigen::VectorXd pi = Eigen::VectorXd::Zero(n);
    pi(0) = 1.0;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    const double stay = 1.0 - static_cast<double>(n) / static_cast<double>(mean_duration);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        a(i, i) = stay;
        a(i, i + 1) = 1.0 - stay;
    }
    a(n - 1, n - 1) = 1.0;
    return HmmModel(pi, a, emissions);
}

inline SkillSpec make_skill(const SkillProfile& p, SkillId id, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> n_dist(2, 4);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> mult(0.6, 1.8);
    const int n = n_dist(rng);
    const Eigen::VectorXd noise = nominal_noise(kDefaultDim);
    std::vector<GaussianEmission> emissions;
    for (int i = 0; i < n; ++i) {
        const double f = (i + 0.5) / n;
        Eigen::VectorXd mu(kDefaultDim);
        for (int c = 0; c < 3; ++c) {
            mu(kPosBegin + c) = lerp(p.pos_from[c], p.pos_to[c], f) + 0.01 * unit(rng);
            mu(kForceBegin + c) = lerp(p.force_from[c], p.force_to[c], f) + 0.3 * unit(rng);
            mu(kTorqueBegin + c) = lerp(p.torque_from[c], p.torque_to[c], f) + 0.03 * unit(rng);
        }
        const double half_yaw = 0.5 * (lerp(p.yaw_from, p.yaw_to, f) + 0.02 * unit(rng));
        // Half-turn about a horizontal axis rotated by the yaw: a downward gripper. Stored as (x, y, z, w).
        mu(kQuatBegin + 0) = std::cos(half_yaw);
        mu(kQuatBegin + 1) = std::sin(half_yaw);
        mu(kQuatBegin + 2) = 0.0;
        mu(kQuatBegin + 3) = 0.0;
        const double m = mult(rng);
        emissions.push_back(GaussianEmission::diagonal(mu, (noise * m).array().square().matrix()));
    }
    const int lo = std::max(n, static_cast<int>(std::lround(p.base_duration * (1.0 - kDurationSpread))));
    const int hi = static_cast<int>(std::lround(p.base_duration * (1.0 + kDurationSpread)));
    return SkillSpec{id, p.name, left_right_generator(emissions, (lo + hi) / 2), lo, hi};
}

inline std::mt19937_64 make_rng(std::uint64_t a, std::uint64_t b, std::uint64_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                      static_cast<std::uint32_t>(tag)};
    return std::mt19937_64(seq);
}

}  // namespace detail

// Five pick-and-place skills (ids 1..5) with 2-4 state left-to-right generators.
inline TaskSpec default_task_spec(std::uint64_t seed, double min_separation = 50.0, double wrench_bias = 1.0) {
    auto rng = detail::make_rng(seed, 0, 0x5bec);
    for (int attempt = 0; attempt < 200; ++attempt) {
        TaskSpec spec;
        spec.seed = seed;
        spec.min_separation = min_separation;
        spec.wrench_bias = wrench_bias;
        const auto& profiles = detail::pick_and_place_profiles();
        for (std::size_t k = 0; k < profiles.size(); ++k) {
            spec.skills.push_back(detail::make_skill(profiles[k], static_cast<SkillId>(k + 1), rng));
        }
        if (min_cross_skill_kl(spec) >= min_separation) return spec;
    }
    throw ValidationError("could not generate skills meeting the requested separation");
}

namespace detail {

// One left-to-right sweep through the generator: every state is visited, segment
// lengths are jittered around an even split of the sampled duration.
inline void sample_skill_block(const SkillSpec& skill, std::mt19937_64& rng, std::vector<Eigen::VectorXd>& rows) {
    const int n = skill.generator.n_states();
    std::uniform_int_distribution<int> dur_dist(skill.min_duration, skill.max_duration);
    std::uniform_real_distribution<double> w_dist(0.7, 1.3);
    const int d = dur_dist(rng);
    std::vector<double> w(static_cast<std::size_t>(n));
    double total = 0.0;
    for (auto& x : w) total += (x = w_dist(rng));
    std::vector<int> len(static_cast<std::size_t>(n));
    int used = 0;
    for (int i = 0; i < n; ++i) {
        len[static_cast<std::size_t>(i)] = std::max(1, static_cast<int>(std::floor(d * w[static_cast<std::size_t>(i)] / total)));
        used += len[static_cast<std::size_t>(i)];
    }
    len.back() = std::max(1, len.back() + d - used);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < len[static_cast<std::size_t>(i)]; ++k) rows.push_back(skill.generator.emission(i).sample(rng));
    }
}

inline Observations stack_rows(const std::vector<Eigen::VectorXd>& rows, Eigen::Index dim) {
    Observations y(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t t = 0; t < rows.size(); ++t) y.row(static_cast<Eigen::Index>(t)) = rows[t].transpose();
    return y;
}

}  // namespace detail

inline Trial synthesize_nominal(const TaskSpec& spec, std::uint64_t seed) {
    validate_spec(spec);
    auto rng = detail::make_rng(spec.seed, seed, 0x7a11);
    std::vector<Eigen::VectorXd> rows;
    Trial trial;
    trial.dt = spec.dt;
    for (const auto& skill : spec.skills) {
        const std::size_t before = rows.size();
        detail::sample_skill_block(skill, rng, rows);
        trial.skill_labels.insert(trial.skill_labels.end(), rows.size() - before, skill.id);
    }
    trial.observations = detail::stack_rows(rows, spec.dim);
    if (spec.wrench_bias > 0.0 && spec.dim == kDefaultDim) {
        std::normal_distribution<double> normal(0.0, spec.wrench_bias);
        const Eigen::VectorXd noise = detail::nominal_noise(spec.dim);
        for (int c = kForceBegin; c < kDefaultDim; ++c) trial.observations.col(c).array() += normal(rng) * noise(c);
    }
    return trial;
}

// ---------------------------------------------------------------------------
// Anomaly injection

struct AnomalyParams {
    double magnitude = 1.0;  // scales the type's default amplitude; 0 leaves observations untouched
    int duration = 5;        // transient length for collisions, 3..8 nominally
    std::uint64_t seed = 0;
    std::optional<Eigen::VectorXd> channel_sigma;    // nominal noise per channel; estimated if absent
    std::optional<Eigen::VectorXd> free_space_wrench;  // 6 values; zeros if absent
};

// Robust per-channel noise estimate from first differences over rows [t_start, t_end].
inline Eigen::VectorXd estimate_channel_sigma(const Observations& y, int t_start, int t_end) {
    const Eigen::Index d = y.cols();
    Eigen::VectorXd s(d);
    const int n = t_end - t_start;
    if (n < 2) return Eigen::VectorXd::Ones(d);
    std::vector<double> diffs(static_cast<std::size_t>(n));
    for (Eigen::Index c = 0; c < d; ++c) {
        for (int k = 0; k < n; ++k) diffs[static_cast<std::size_t>(k)] = std::abs(y(t_start + k, c) - y(t_start + k - 1, c));
        auto mid = diffs.begin() + n / 2;
        std::nth_element(diffs.begin(), mid, diffs.end());
        s(c) = std::max(*mid / (0.6745 * std::numbers::sqrt2), 1e-9);
    }
    return s;
}

namespace detail {

inline double median_of(const Observations& y, Eigen::Index c, int from0, int to0) {
    std::vector<double> v;
    for (int t = from0; t <= to0; ++t) v.push_back(y(t, c));
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

}  // namespace detail

inline Trial inject_anomaly(const Trial& trial, AnomalyType type, int t, const AnomalyParams& params = {}) {
    validate_trial(trial);
    if (t < 1 || t > trial.length()) {
        throw ValidationError("anomaly onset " + std::to_string(t) + " outside trial of length " +
                              std::to_string(trial.length()));
    }
    if (trial.dim() != kDefaultDim) throw ValidationError("anomaly injection expects 13-dim observations");
    if (params.duration < 1) throw ValidationError("anomaly duration must be positive");
    Trial out = trial;
    const auto blocks = skill_blocks(trial.skill_labels);
    const SkillBlock& block = block_containing(blocks, t);
    const Eigen::VectorXd sigma = params.channel_sigma ? *params.channel_sigma
                                                       : estimate_channel_sigma(trial.observations, block.t_start - 1,
                                                                                block.t_end - 1);
    Eigen::VectorXd free_space = params.free_space_wrench ? *params.free_space_wrench : Eigen::VectorXd::Zero(6);
    auto rng = detail::make_rng(params.seed, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(type) + 0xa0);
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto& y = out.observations;
    const double m = params.magnitude;
    const int t0 = t - 1;  // zero-based onset
    int t_end = block.t_end;

    auto signs = [&](int from, int count) {
        Eigen::VectorXd s = Eigen::VectorXd::Zero(y.cols());
        for (int c = from; c < from + count; ++c) s(c) = coin(rng) ? 1.0 : -1.0;
        return s;
    };

    switch (type) {
        case AnomalyType::GripperCollision:
        case AnomalyType::ArmCollision: {
            t_end = std::min(trial.length(), t + params.duration - 1);
            Eigen::VectorXd amp = 10.0 * signs(kForceBegin, 6);
            if (type == AnomalyType::ArmCollision) {
                amp = 5.0 * signs(kForceBegin, 6);
                amp.segment(kPosBegin, 7) = 10.0 * signs(kPosBegin, 7).segment(kPosBegin, 7);
            }
            const int len = t_end - t + 1;
            for (int k = 0; k < len; ++k) {
                const double shape = std::sin(std::numbers::pi * (k + 0.5) / len);
                y.row(t0 + k) += (m * shape * amp.cwiseProduct(sigma)).transpose();
            }
            break;
        }
        case AnomalyType::ObjectDisplacement: {
            const Eigen::VectorXd off = 8.0 * m * signs(kPosBegin, 3).cwiseProduct(sigma);
            for (int r = t0; r < block.t_end; ++r) y.row(r) += off.transpose();
            break;
        }
        case AnomalyType::MissingObject: {
            for (int c = 0; c < 6; ++c) {
                const Eigen::Index ch = kForceBegin + c;
                const double level = detail::median_of(trial.observations, ch, t0, block.t_end - 1);
                const double shift = m * (free_space(c) - level);
                for (int r = t0; r < block.t_end; ++r) y(r, ch) += shift * (1.0 - std::exp(-(r - t0 + 1) / 3.0));
            }
            break;
        }
        case AnomalyType::SlipperyPick: {
            for (int c = 0; c < 6; ++c) {
                const Eigen::Index ch = kForceBegin + c;
                const double level = detail::median_of(trial.observations, ch, t0, block.t_end - 1);
                const double drop = m * 0.7 * (level - free_space(c));
                for (int r = t0; r < block.t_end; ++r) y(r, ch) += -drop + m * 2.0 * sigma(ch) * normal(rng);
            }
            break;
        }
    }
    out.anomalies.push_back({t, t_end, type});
    validate_trial(out);
    return out;
}

// ---------------------------------------------------------------------------
// Recovery scenario

// Extra noise on the retrace, in units of the nominal channel noise.
inline constexpr double kRetraceNoise = 1.0;

struct RecoveryInfo {
    SkillId skill = 0;
    int collision_t = 0;
};

// Nominal prefix, a collision at ~40% of one skill, a retrace of that skill's prefix back
// toward its start, then a fresh execution of the interrupted skill and the remaining skills.
inline Trial synthesize_recovery_scenario(const TaskSpec& spec, std::uint64_t seed, RecoveryInfo* info = nullptr) {
    validate_spec(spec);
    if (spec.dim != kDefaultDim || spec.skills.size() < 3) {
        throw ValidationError("recovery scenario needs a 13-dim spec with at least three skills");
    }
    const Trial base = synthesize_nominal(spec, seed);
    auto rng = detail::make_rng(spec.seed, seed, 0x2ec0);
    const auto blocks = skill_blocks(base.skill_labels);
    std::uniform_int_distribution<std::size_t> pick(1, blocks.size() - 2);
    const SkillBlock block = blocks[pick(rng)];
    const int collision = block.t_start + static_cast<int>(std::lround(0.4 * block.length()));

    AnomalyParams params;
    params.seed = seed;
    params.channel_sigma = detail::nominal_noise(spec.dim);
    const Trial hit = inject_anomaly(base, AnomalyType::GripperCollision, collision, params);
    const int hit_end = hit.anomalies.back().t_end;

    std::vector<Eigen::VectorXd> rows;
    std::vector<SkillId> labels;
    for (int r = 0; r < hit_end; ++r) {
        rows.emplace_back(hit.observations.row(r).transpose());
        labels.push_back(hit.skill_labels[static_cast<std::size_t>(r)]);
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::VectorXd noise = kRetraceNoise * detail::nominal_noise(spec.dim);
    const int recovery_start = hit_end + 1;
    for (int r = collision - 2; r >= block.t_start - 1; --r) {
        Eigen::VectorXd v = base.observations.row(r).transpose();
        for (Eigen::Index c = 0; c < v.size(); ++c) v(c) += noise(c) * normal(rng);
        rows.push_back(v);
        labels.push_back(block.skill);
    }
    const int recovery_end = static_cast<int>(rows.size());
    const std::size_t before = rows.size();
    detail::sample_skill_block(spec.skill(block.skill), rng, rows);
    labels.insert(labels.end(), rows.size() - before, block.skill);
    for (int r = block.t_end; r < base.length(); ++r) {
        rows.emplace_back(base.observations.row(r).transpose());
        labels.push_back(base.skill_labels[static_cast<std::size_t>(r)]);
    }

    Trial out;
    out.dt = spec.dt;
    out.observations = detail::stack_rows(rows, spec.dim);
    out.skill_labels = std::move(labels);
    out.anomalies = hit.anomalies;
    out.recovery_windows.push_back({recovery_start, recovery_end});
    validate_trial(out);
    if (info) *info = {block.skill, collision};
    return out;
}

// ---------------------------------------------------------------------------
// Well-separated benchmark for the Viterbi diagnostics

struct SeparatedBenchmark {
    HmmModel model;
    Observations observations;
    std::vector<int> states;  // zero-based ground truth
};

inline HmmModel well_separated_model(int n_states = 3, double separation = 8.0, double self = 0.95) {
    if (n_states < 1) throw ValidationError("need at least one state");
    const double off = n_states > 1 ? (1.0 - self) / (n_states - 1) : 0.0;
    Eigen::MatrixXd a = Eigen::MatrixXd::Constant(n_states, n_states, off);
    a.diagonal().setConstant(n_states > 1 ? self : 1.0);
    Eigen::VectorXd pi = Eigen::VectorXd::Constant(n_states, 1.0 / n_states);
    std::vector<GaussianEmission> em;
    for (int i = 0; i < n_states; ++i) {
        Eigen::Vector2d mu(separation * i, (i % 2) * separation * 0.5);
        em.push_back(GaussianEmission::diagonal(mu, Eigen::Vector2d::Ones()));
    }
    return HmmModel(pi, a, em);
}

inline std::vector<int> sample_states(const HmmModel& model, int length, std::mt19937_64& rng) {
    std::vector<int> z(static_cast<std::size_t>(length));
    auto draw = [&](const Eigen::VectorXd& p) {
        std::discrete_distribution<int> d(p.data(), p.data() + p.size());
        return d(rng);
    };
    z[0] = draw(model.pi());
    for (int t = 1; t < length; ++t) z[static_cast<std::size_t>(t)] = draw(model.trans().row(z[static_cast<std::size_t>(t - 1)]).transpose());
    return z;
}

inline SeparatedBenchmark well_separated_benchmark(std::uint64_t seed, int length = 60) {
    HmmModel model = well_separated_model();
    auto rng = detail::make_rng(seed, 0, 0xbe7c);
    auto states = sample_states(model, length, rng);
    Observations y(length, model.dim());
    for (int t = 0; t < length; ++t) y.row(t) = model.emission(states[static_cast<std::size_t>(t)]).sample(rng).transpose();
    return {std::move(model), std::move(y), std::move(states)};
}

}  // namespace hmmev
