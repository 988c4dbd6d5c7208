#pragma once

#include "hmmev/detection.hpp"
#include "hmmev/viterbi.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

namespace hmmev {

// Entry t - 1 is the Viterbi path for the prefix y_1..y_t.
struct IncrementalViterbiTrace {
    std::vector<std::vector<int>> paths;
};

inline IncrementalViterbiTrace incremental_viterbi(const HmmModel& model, const Observations& y) {
    ViterbiLattice lattice(model, y);
    IncrementalViterbiTrace trace;
    trace.paths.reserve(static_cast<std::size_t>(y.rows()));
    for (Eigen::Index t = 0; t < y.rows(); ++t) trace.paths.push_back(lattice.prefix(t).path);
    return trace;
}

struct SequenceBreak {
    int t = 0;                 // one-based step at which history was rewritten
    int first_divergence = 0;  // one-based index of the first rewritten position
    int length = 0;            // number of rewritten positions
    friend bool operator==(const SequenceBreak&, const SequenceBreak&) = default;
};

struct SequenceBreakReport {
    std::vector<SequenceBreak> breaks;
    std::vector<int> transitions;  // one-based first step of each new state
    int max_break_len = 0;
};

// One-based times t where path[t-1] != path[t-2].
inline std::vector<int> transition_times(const std::vector<int>& path) {
    std::vector<int> out;
    for (std::size_t i = 1; i < path.size(); ++i) {
        if (path[i] != path[i - 1]) out.push_back(static_cast<int>(i) + 1);
    }
    return out;
}

// When no transitions are supplied they are inferred from the final decoded path.
inline SequenceBreakReport detect_sequence_breaks(const IncrementalViterbiTrace& trace,
                                                  std::vector<int> transitions = {}) {
    if (trace.paths.empty()) throw ValidationError("empty Viterbi trace");
    SequenceBreakReport report;
    for (std::size_t k = 1; k < trace.paths.size(); ++k) {
        const auto& prev = trace.paths[k - 1];
        const auto& cur = trace.paths[k];
        int first = 0;
        int count = 0;
        for (std::size_t i = 0; i < prev.size(); ++i) {
            if (cur[i] != prev[i]) {
                if (count == 0) first = static_cast<int>(i) + 1;
                ++count;
            }
        }
        if (count > 0) {
            report.breaks.push_back({static_cast<int>(k) + 1, first, count});
            report.max_break_len = std::max(report.max_break_len, count);
        }
    }
    report.transitions = transitions.empty() ? transition_times(trace.paths.back()) : std::move(transitions);
    return report;
}

// Every break rewrites at most `max_len` positions, all within `tolerance` steps of a transition.
inline bool breaks_localized(const SequenceBreakReport& report, int max_len = 1, int tolerance = 1) {
    for (const auto& b : report.breaks) {
        if (b.length > max_len) return false;
        for (int pos = b.first_divergence; pos < b.first_divergence + b.length; ++pos) {
            const bool near = std::any_of(report.transitions.begin(), report.transitions.end(),
                                          [&](int tr) { return std::abs(pos - tr) <= tolerance; });
            if (!near) return false;
        }
    }
    return true;
}

// Each state's largest outgoing probability is its self-transition (ties allowed).
inline bool check_self_transition_dominance(const HmmModel& model) {
    const auto& a = model.trans();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        if (a(i, i) < a.row(i).maxCoeff()) return false;
    }
    return true;
}

// T x N matrix of log b_i(y_t).
inline Eigen::MatrixXd emission_curves(const HmmModel& model, const Observations& y) {
    Eigen::MatrixXd out(y.rows(), model.n_states());
    for (Eigen::Index t = 0; t < y.rows(); ++t) {
        check_dim(model, row_of(y, t));
        out.row(t) = model.emission_logprobs(row_of(y, t)).transpose();
    }
    return out;
}

inline std::vector<double> max_emission_series(const HmmModel& model, const Observations& y) {
    const Eigen::MatrixXd curves = emission_curves(model, y);
    std::vector<double> out(static_cast<std::size_t>(curves.rows()));
    for (Eigen::Index t = 0; t < curves.rows(); ++t) out[static_cast<std::size_t>(t)] = curves.row(t).maxCoeff();
    return out;
}

// |grad L_t - (log b_z(t)(y_t) + log A_z(t-1)z(t))| for t = 2..T along the full-sequence Viterbi path.
inline std::vector<double> corollary_residuals(const HmmModel& model, const Observations& y) {
    const auto grads = gradient_series(model, y);
    const auto path = viterbi(model, y).path;
    std::vector<double> res(grads.size());
    for (std::size_t k = 0; k < grads.size(); ++k) {
        const std::size_t t = k + 1;
        const double approx = emission_logprob(model, path[t], row_of(y, static_cast<Eigen::Index>(t))) +
                              model.log_trans()(path[t - 1], path[t]);
        res[k] = std::abs(grads[k] - approx);
    }
    return res;
}

// mask[t-1] is true when t is at least `margin` steps from every transition.
inline std::vector<bool> stable_mask(const std::vector<int>& transitions, int length, int margin = 2) {
    std::vector<bool> mask(static_cast<std::size_t>(length), true);
    for (int t = 1; t <= length; ++t) {
        for (int tr : transitions) {
            if (std::abs(t - tr) < margin) mask[static_cast<std::size_t>(t - 1)] = false;
        }
    }
    return mask;
}

struct CorollarySummary {
    std::size_t stable_steps = 0;
    std::size_t within_tolerance = 0;
    double fraction = 0.0;
    double correlation = 0.0;  // Pearson(grad L_t, max_i log b_i(y_t)) over the same steps
};

inline CorollarySummary summarize_corollary(const HmmModel& model, const Observations& y,
                                            const std::vector<int>& transitions, double tolerance = 1e-3,
                                            int margin = 2) {
    const auto res = corollary_residuals(model, y);
    const auto grads = gradient_series(model, y);
    const auto maxb = max_emission_series(model, y);
    const auto mask = stable_mask(transitions, static_cast<int>(y.rows()), margin);
    CorollarySummary s;
    std::vector<double> g;
    std::vector<double> b;
    for (std::size_t k = 0; k < res.size(); ++k) {
        if (!mask[k + 1]) continue;
        ++s.stable_steps;
        if (res[k] <= tolerance) ++s.within_tolerance;
        g.push_back(grads[k]);
        b.push_back(maxb[k + 1]);
    }
    if (s.stable_steps > 0) {
        s.fraction = static_cast<double>(s.within_tolerance) / static_cast<double>(s.stable_steps);
        s.correlation = pearson(g, b);
    }
    return s;
}

// Triangle matrix for plotting: row t - 1 holds the path for prefix t, -1 past its end.
// States are written one-based.
inline Eigen::MatrixXi triangle_matrix(const IncrementalViterbiTrace& trace) {
    const auto n = static_cast<Eigen::Index>(trace.paths.size());
    Eigen::MatrixXi m = Eigen::MatrixXi::Constant(n, n, -1);
    for (Eigen::Index t = 0; t < n; ++t) {
        const auto& p = trace.paths[static_cast<std::size_t>(t)];
        for (std::size_t i = 0; i < p.size(); ++i) m(t, static_cast<Eigen::Index>(i)) = p[i] + 1;
    }
    return m;
}

}  // namespace hmmev
