#pragma once

#include "hmmev/forward.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

namespace hmmev {

struct TrainConfig {
    int max_iterations = 200;
    double tolerance = 1e-4;          // stop when the total log-likelihood improves by less
    double variance_floor = kVarianceFloor;
    CovarianceType covariance = CovarianceType::Diagonal;
    double self_transition = 0.9;     // initial A_ii
    double transition_smoothing = 0.0;// applied once after convergence, see HmmModel::smoothed
    double init_jitter = 0.0;         // std-dev multiples added to the initial means
    std::uint64_t seed = 0;
};

struct TrainResult {
    HmmModel model;
    std::vector<double> loglik_trace;  // total training log-likelihood before each M-step
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> warnings;
};

namespace detail {

struct SufficientStats {
    double loglik = 0.0;
    Eigen::VectorXd pi_acc;
    Eigen::MatrixXd xi_acc;
    Eigen::VectorXd from_acc;          // sum of gamma over t < T
    std::vector<Eigen::MatrixXd> gammas;  // per trial, T x N
};

inline Eigen::MatrixXd emission_table(const HmmModel& model, const Observations& y) {
    Eigen::MatrixXd e(y.rows(), model.n_states());
    for (Eigen::Index t = 0; t < y.rows(); ++t) e.row(t) = model.emission_logprobs(row_of(y, t)).transpose();
    return e;
}

inline SufficientStats e_step(const HmmModel& model, const std::vector<Observations>& trials) {
    const int n = model.n_states();
    SufficientStats s;
    s.pi_acc = Eigen::VectorXd::Zero(n);
    s.xi_acc = Eigen::MatrixXd::Zero(n, n);
    s.from_acc = Eigen::VectorXd::Zero(n);
    const Eigen::MatrixXd& log_a = model.log_trans();
    Eigen::VectorXd scratch(n);
    for (const auto& y : trials) {
        const Eigen::Index len = y.rows();
        const Eigen::MatrixXd e = emission_table(model, y);
        Eigen::MatrixXd la(len, n), lb(len, n);
        la.row(0) = model.log_pi().transpose() + e.row(0);
        for (Eigen::Index t = 1; t < len; ++t) {
            for (int i = 0; i < n; ++i) {
                scratch = la.row(t - 1).transpose() + log_a.col(i);
                la(t, i) = e(t, i) + logsumexp(scratch);
            }
        }
        lb.row(len - 1).setZero();
        for (Eigen::Index t = len - 2; t >= 0; --t) {
            for (int j = 0; j < n; ++j) {
                scratch = log_a.row(j).transpose() + e.row(t + 1).transpose() + lb.row(t + 1).transpose();
                lb(t, j) = logsumexp(scratch);
            }
        }
        const Eigen::VectorXd last = la.row(len - 1).transpose();
        const double ll = logsumexp(last);
        s.loglik += ll;
        Eigen::MatrixXd gamma = (la + lb).array() - ll;
        gamma = gamma.array().exp();
        s.pi_acc += gamma.row(0).transpose();
        for (Eigen::Index t = 0; t + 1 < len; ++t) {
            s.from_acc += gamma.row(t).transpose();
            for (int j = 0; j < n; ++j) {
                for (int i = 0; i < n; ++i) {
                    s.xi_acc(j, i) += std::exp(la(t, j) + log_a(j, i) + e(t + 1, i) + lb(t + 1, i) - ll);
                }
            }
        }
        s.gammas.push_back(std::move(gamma));
    }
    return s;
}

inline Eigen::MatrixXd floor_covariance(const Eigen::MatrixXd& cov, CovarianceType type, double floor) {
    if (type == CovarianceType::Diagonal) {
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(cov.rows(), cov.cols());
        for (Eigen::Index d = 0; d < cov.rows(); ++d) out(d, d) = std::max(cov(d, d), floor);
        return out;
    }
    // Clamping the eigenvalues is the constrained maximiser, so EM stays monotone.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (cov + cov.transpose()));
    const Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(floor);
    Eigen::MatrixXd out = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

inline GaussianEmission make_emission(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, CovarianceType type,
                                      double floor) {
    const Eigen::MatrixXd c = floor_covariance(cov, type, floor);
    if (type == CovarianceType::Diagonal) return GaussianEmission::diagonal(mean, c.diagonal(), floor);
    return GaussianEmission::full(mean, c, floor);
}

// Weighted mean and covariance over all trials for one state.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> weighted_moments(const std::vector<Observations>& trials,
                                                                   const std::vector<Eigen::VectorXd>& weights,
                                                                   Eigen::Index dim, double& total) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
    total = 0.0;
    for (std::size_t r = 0; r < trials.size(); ++r) {
        mean += trials[r].transpose() * weights[r];
        total += weights[r].sum();
    }
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
    if (total <= 0.0) return {mean, cov};
    mean /= total;
    for (std::size_t r = 0; r < trials.size(); ++r) {
        const Eigen::MatrixXd centred = trials[r].rowwise() - mean.transpose();
        cov.noalias() += centred.transpose() * weights[r].asDiagonal() * centred;
    }
    cov /= total;
    return {mean, cov};
}

inline HmmModel m_step(const HmmModel& current, const SufficientStats& s, const std::vector<Observations>& trials,
                       const TrainConfig& cfg) {
    const int n = current.n_states();
    const Eigen::Index dim = current.dim();
    constexpr double kMinOccupancy = 1e-12;

    Eigen::VectorXd pi = s.pi_acc / s.pi_acc.sum();
    Eigen::MatrixXd a = current.trans();
    for (int j = 0; j < n; ++j) {
        const double row_total = s.xi_acc.row(j).sum();
        if (s.from_acc(j) > kMinOccupancy && row_total > 0.0) {
            a.row(j) = s.xi_acc.row(j) / row_total;
        }
    }
    std::vector<GaussianEmission> emissions;
    emissions.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::vector<Eigen::VectorXd> w;
        w.reserve(trials.size());
        for (const auto& g : s.gammas) w.emplace_back(g.col(i));
        double total = 0.0;
        auto [mean, cov] = weighted_moments(trials, w, dim, total);
        if (total <= kMinOccupancy) {
            emissions.push_back(current.emission(i));  // unused state keeps its parameters
        } else {
            emissions.push_back(make_emission(mean, cov, cfg.covariance, cfg.variance_floor));
        }
    }
    return HmmModel(std::move(pi), std::move(a), std::move(emissions));
}

inline Eigen::MatrixXd initial_transitions(int n, double self) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    if (n == 1) {
        a(0, 0) = 1.0;
        return a;
    }
    const double leave = 1.0 - self;
    for (int i = 0; i < n; ++i) {
        a(i, i) = self;
        if (i + 1 < n) {
            // most of the leaving mass goes forward; the rest is spread so that no entry starts at zero
            const double forward = n > 2 ? 0.9 * leave : leave;
            a(i, i + 1) = forward;
            const double rest = leave - forward;
            for (int j = 0; j < n; ++j) {
                if (j != i && j != i + 1) a(i, j) = rest / static_cast<double>(n - 2);
            }
        } else {
            for (int j = 0; j < n; ++j) {
                if (j != i) a(i, j) = leave / static_cast<double>(n - 1);
            }
        }
    }
    return a;
}

inline HmmModel initial_model(const std::vector<Observations>& trials, int n, const TrainConfig& cfg,
                              std::vector<std::string>& warnings) {
    const Eigen::Index dim = trials.front().cols();
    // chunk k of every trial contributes to state k
    std::vector<std::vector<Observations>> pooled(static_cast<std::size_t>(n));
    std::vector<std::vector<Eigen::VectorXd>> pooled_w(static_cast<std::size_t>(n));
    for (const auto& y : trials) {
        const Eigen::Index len = y.rows();
        for (int k = 0; k < n; ++k) {
            const Eigen::Index lo = (len * k) / n;
            const Eigen::Index hi = (len * (k + 1)) / n;
            if (hi <= lo) continue;
            pooled[static_cast<std::size_t>(k)].emplace_back(y.middleRows(lo, hi - lo));
            pooled_w[static_cast<std::size_t>(k)].push_back(Eigen::VectorXd::Ones(hi - lo));
        }
    }
    std::vector<Eigen::VectorXd> ones;
    for (const auto& y : trials) ones.push_back(Eigen::VectorXd::Ones(y.rows()));
    double total = 0.0;
    const auto [global_mean, global_cov] = weighted_moments(trials, ones, dim, total);

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<GaussianEmission> emissions;
    for (int k = 0; k < n; ++k) {
        Eigen::VectorXd mean = global_mean;
        Eigen::MatrixXd cov = global_cov;
        if (!pooled[static_cast<std::size_t>(k)].empty()) {
            std::tie(mean, cov) = weighted_moments(pooled[static_cast<std::size_t>(k)],
                                                   pooled_w[static_cast<std::size_t>(k)], dim, total);
        } else {
            warnings.push_back("state " + std::to_string(k + 1) + " initialised from global moments");
        }
        if (cfg.init_jitter > 0.0) {
            for (Eigen::Index d = 0; d < dim; ++d) {
                mean(d) += cfg.init_jitter * std::sqrt(std::max(global_cov(d, d), cfg.variance_floor)) * n01(rng);
            }
        }
        emissions.push_back(make_emission(mean, cov, cfg.covariance, cfg.variance_floor));
    }
    Eigen::VectorXd pi = Eigen::VectorXd::Constant(n, n > 1 ? 0.1 / (n - 1) : 1.0);
    pi(0) = n > 1 ? 0.9 : 1.0;
    return HmmModel(std::move(pi), initial_transitions(n, cfg.self_transition), std::move(emissions));
}

}  // namespace detail

inline TrainResult train_baum_welch(const std::vector<Observations>& trials, int n_states,
                                    const TrainConfig& cfg = {}) {
    if (trials.empty()) throw ValidationError("training needs at least one trial");
    if (n_states < 1) throw ValidationError("n_states must be >= 1");
    const Eigen::Index dim = trials.front().cols();
    std::vector<std::string> warnings;
    for (std::size_t r = 0; r < trials.size(); ++r) {
        if (trials[r].rows() < 1) throw ValidationError("training trial " + std::to_string(r) + " is empty");
        if (trials[r].cols() != dim) throw ValidationError("training trials disagree on dimension");
        require_finite(trials[r], "training trial");
        if (trials[r].rows() < n_states) {
            warnings.push_back("trial " + std::to_string(r) + " is shorter than the state count");
        }
    }

    HmmModel model = detail::initial_model(trials, n_states, cfg, warnings);
    std::vector<double> trace;
    bool converged = false;
    int it = 0;
    for (;; ++it) {
        const detail::SufficientStats stats = detail::e_step(model, trials);
        if (!std::isfinite(stats.loglik)) throw TrainingError("non-finite training log-likelihood", it);
        trace.push_back(stats.loglik);
        if (it > 0 && stats.loglik - trace[static_cast<std::size_t>(it - 1)] < cfg.tolerance) {
            converged = true;
            break;
        }
        if (it >= cfg.max_iterations) break;
        model = detail::m_step(model, stats, trials, cfg);
    }
    if (cfg.transition_smoothing > 0.0) model = model.smoothed(cfg.transition_smoothing);
    return TrainResult{std::move(model), std::move(trace), it, converged, std::move(warnings)};
}

struct StateCountScore {
    int n_states = 0;
    double score = 0.0;  // mean held-out log-likelihood per timestep
};

struct StateSelection {
    int best = 0;
    std::vector<StateCountScore> scores;
};

// Held-one-out selection of the state count; ties (within 1e-9 relative) go to the smaller count.
inline StateSelection select_num_states(const std::vector<Observations>& trials, std::vector<int> candidates,
                                        const TrainConfig& cfg = {}) {
    if (candidates.empty()) throw ValidationError("select_num_states: no candidates");
    if (trials.empty()) throw ValidationError("select_num_states: no trials");
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    StateSelection sel;
    if (candidates.size() == 1) {
        sel.best = candidates.front();
        sel.scores.push_back({sel.best, 0.0});
        return sel;
    }
    std::optional<double> best_score;
    for (int n : candidates) {
        double acc = 0.0;
        int folds = 0;
        if (trials.size() == 1) {
            const auto fit = train_baum_welch(trials, n, cfg);
            acc = total_loglik(fit.model, trials.front()) / static_cast<double>(trials.front().rows());
            folds = 1;
        } else {
            for (std::size_t hold = 0; hold < trials.size(); ++hold) {
                std::vector<Observations> rest;
                for (std::size_t r = 0; r < trials.size(); ++r) {
                    if (r != hold) rest.push_back(trials[r]);
                }
                const auto fit = train_baum_welch(rest, n, cfg);
                acc += total_loglik(fit.model, trials[hold]) / static_cast<double>(trials[hold].rows());
                ++folds;
            }
        }
        const double score = acc / folds;
        sel.scores.push_back({n, score});
        if (!best_score || score > *best_score + 1e-9 * std::max(1.0, std::abs(*best_score))) {
            best_score = score;
            sel.best = n;
        }
    }
    return sel;
}

}  // namespace hmmev
