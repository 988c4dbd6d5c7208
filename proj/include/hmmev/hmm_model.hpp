#pragma once

#include "hmmev/gaussian.hpp"
#include "hmmev/logmath.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace hmmev {

inline constexpr double kStochasticTolerance = 1e-9;

// Gaussian-emission HMM. trans(j, i) = P(z_{t+1} = i | z_t = j), so rows are
// "from" states and must sum to one. Immutable after construction and safe to
// share between threads.
class HmmModel {
public:
    HmmModel(Eigen::VectorXd pi, Eigen::MatrixXd trans, std::vector<GaussianEmission> emissions)
        : pi_(std::move(pi)), trans_(std::move(trans)), emissions_(std::move(emissions)) {
        const Eigen::Index n = pi_.size();
        if (n < 1) throw ValidationError("model needs at least one state");
        if (trans_.rows() != n || trans_.cols() != n) {
            throw ValidationError("transition matrix must be " + std::to_string(n) + "x" + std::to_string(n));
        }
        if (static_cast<Eigen::Index>(emissions_.size()) != n) {
            throw ValidationError("expected one emission per state");
        }
        check_distribution(pi_, "initial distribution");
        for (Eigen::Index j = 0; j < n; ++j) {
            check_distribution(trans_.row(j).transpose(), "transition row " + std::to_string(j + 1));
        }
        const Eigen::Index d = emissions_.front().dim();
        for (const auto& e : emissions_) {
            if (e.dim() != d) throw ValidationError("emissions disagree on dimension");
        }
        log_pi_ = pi_.unaryExpr([](double p) { return safe_log(p); });
        log_trans_ = trans_.unaryExpr([](double p) { return safe_log(p); });
    }

    [[nodiscard]] int n_states() const { return static_cast<int>(pi_.size()); }
    [[nodiscard]] Eigen::Index dim() const { return emissions_.front().dim(); }
    [[nodiscard]] const Eigen::VectorXd& pi() const { return pi_; }
    [[nodiscard]] const Eigen::MatrixXd& trans() const { return trans_; }
    [[nodiscard]] const Eigen::VectorXd& log_pi() const { return log_pi_; }
    [[nodiscard]] const Eigen::MatrixXd& log_trans() const { return log_trans_; }
    [[nodiscard]] const std::vector<GaussianEmission>& emissions() const { return emissions_; }
    [[nodiscard]] const GaussianEmission& emission(int state) const { return emissions_.at(static_cast<std::size_t>(state)); }

    [[nodiscard]] CovarianceType covariance_type() const { return emissions_.front().covariance_type(); }

    // log b_i(y) for every state.
    [[nodiscard]] Eigen::VectorXd emission_logprobs(const ObsRef& y) const {
        Eigen::VectorXd out(n_states());
        for (int i = 0; i < n_states(); ++i) out(i) = emissions_[static_cast<std::size_t>(i)].log_density(y);
        return out;
    }

    // Mixes every row of A (and pi) with the uniform distribution: (p + eps) / (1 + N eps).
    [[nodiscard]] HmmModel smoothed(double eps) const {
        if (eps <= 0.0) return *this;
        const double n = static_cast<double>(n_states());
        Eigen::VectorXd pi = (pi_.array() + eps) / (1.0 + n * eps);
        Eigen::MatrixXd a = (trans_.array() + eps) / (1.0 + n * eps);
        return HmmModel(std::move(pi), std::move(a), emissions_);
    }

private:
    static void check_distribution(const Eigen::VectorXd& p, const std::string& what) {
        if (!p.allFinite() || (p.array() < 0.0).any()) {
            throw ValidationError(what + " has negative or non-finite entries");
        }
        const double s = p.sum();
        if (std::abs(s - 1.0) > kStochasticTolerance) {
            throw ValidationError(what + " sums to " + std::to_string(s) + ", not 1");
        }
    }

    Eigen::VectorXd pi_;
    Eigen::MatrixXd trans_;
    std::vector<GaussianEmission> emissions_;
    Eigen::VectorXd log_pi_;
    Eigen::MatrixXd log_trans_;
};

// log b_state(y). State indices are zero-based in the C++ API.
inline double emission_logprob(const HmmModel& model, int state, const ObsRef& y) {
    if (state < 0 || state >= model.n_states()) {
        throw ValidationError("state index " + std::to_string(state) + " out of range");
    }
    return model.emission(state).log_density(y);
}

}  // namespace hmmev
