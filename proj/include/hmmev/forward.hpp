#pragma once

#include "hmmev/hmm_model.hpp"

#include <vector>

namespace hmmev {

// Unnormalised log forward variables log alpha_i(t) and the running log-likelihood
// L_t = logsumexp(log_alpha). t is one-based: the belief after consuming y_1..y_t.
struct LogBelief {
    Eigen::VectorXd log_alpha;
    double loglik = kNegInf;
    int t = 0;
};

inline void check_dim(const HmmModel& model, const ObsRef& y) {
    if (y.size() != model.dim()) {
        throw ValidationError("observation has dimension " + std::to_string(y.size()) + ", model expects " +
                              std::to_string(model.dim()));
    }
}

inline LogBelief forward_init(const HmmModel& model, const ObsRef& y1) {
    check_dim(model, y1);
    if ((model.pi().array() <= 0.0).all()) {
        throw ValidationError("initial distribution has no support");
    }
    LogBelief b;
    b.log_alpha = model.log_pi() + model.emission_logprobs(y1);
    b.loglik = logsumexp(b.log_alpha);
    b.t = 1;
    return b;
}

inline LogBelief forward_step(const HmmModel& model, const LogBelief& prev, const ObsRef& y) {
    if (prev.t < 1) throw ValidationError("forward_step needs an initialised belief");
    check_dim(model, y);
    const int n = model.n_states();
    if (prev.log_alpha.size() != n) throw ValidationError("belief does not match model state count");
    const Eigen::VectorXd emit = model.emission_logprobs(y);
    LogBelief next;
    next.log_alpha.resize(n);
    Eigen::VectorXd scratch(n);
    for (int i = 0; i < n; ++i) {
        scratch = prev.log_alpha + model.log_trans().col(i);
        next.log_alpha(i) = emit(i) + logsumexp(scratch);
    }
    next.loglik = logsumexp(next.log_alpha);
    next.t = prev.t + 1;
    return next;
}

// Streaming wrapper around forward_init / forward_step.
class ForwardFilter {
public:
    explicit ForwardFilter(const HmmModel& model) : model_(&model) {}

    const LogBelief& push(const ObsRef& y) {
        belief_ = belief_.t == 0 ? forward_init(*model_, y) : forward_step(*model_, belief_, y);
        return belief_;
    }

    [[nodiscard]] const LogBelief& belief() const { return belief_; }
    [[nodiscard]] const HmmModel& model() const { return *model_; }

private:
    const HmmModel* model_;
    LogBelief belief_;
};

// L_1..L_T.
inline std::vector<double> loglik_series(const HmmModel& model, const Observations& y) {
    if (y.rows() < 1) throw ValidationError("loglik_series needs at least one observation");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(y.rows()));
    ForwardFilter f(model);
    for (Eigen::Index t = 0; t < y.rows(); ++t) out.push_back(f.push(row_of(y, t)).loglik);
    return out;
}

inline double total_loglik(const HmmModel& model, const Observations& y) { return loglik_series(model, y).back(); }

}  // namespace hmmev
