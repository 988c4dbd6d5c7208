#pragma once

#include "hmmev/types.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

namespace hmmev {

inline constexpr double kVarianceFloor = 1e-6;

enum class CovarianceType { Diagonal, Full };

inline std::string_view to_string(CovarianceType c) { return c == CovarianceType::Diagonal ? "diag" : "full"; }

inline CovarianceType covariance_type_from_string(std::string_view s) {
    if (s == "diag") return CovarianceType::Diagonal;
    if (s == "full") return CovarianceType::Full;
    throw ValidationError("unknown covariance type '" + std::string(s) + "'");
}

// Multivariate Gaussian emission density. Immutable once built; the Cholesky factor
// (or inverse standard deviations) and the log normaliser are cached.
class GaussianEmission {
public:
    static GaussianEmission diagonal(Eigen::VectorXd mean, const Eigen::VectorXd& variances,
                                     double floor = kVarianceFloor) {
        if (variances.size() != mean.size()) {
            throw ValidationError("diagonal covariance length does not match mean");
        }
        Eigen::MatrixXd cov = variances.asDiagonal();
        return GaussianEmission(std::move(mean), CovarianceType::Diagonal, std::move(cov), floor);
    }

    static GaussianEmission full(Eigen::VectorXd mean, Eigen::MatrixXd cov, double floor = kVarianceFloor) {
        return GaussianEmission(std::move(mean), CovarianceType::Full, std::move(cov), floor);
    }

    [[nodiscard]] Eigen::Index dim() const { return mean_.size(); }
    [[nodiscard]] const Eigen::VectorXd& mean() const { return mean_; }
    [[nodiscard]] const Eigen::MatrixXd& covariance() const { return cov_; }
    [[nodiscard]] Eigen::VectorXd variances() const { return cov_.diagonal(); }
    [[nodiscard]] CovarianceType covariance_type() const { return type_; }

    [[nodiscard]] double log_density(const ObsRef& y) const {
        if (y.size() != mean_.size()) {
            throw ValidationError("observation dimension " + std::to_string(y.size()) +
                                  " does not match emission dimension " + std::to_string(mean_.size()));
        }
        double quad = 0.0;
        if (type_ == CovarianceType::Diagonal) {
            quad = ((y - mean_).cwiseProduct(inv_std_)).squaredNorm();
        } else {
            quad = chol_.matrixL().solve(y - mean_).squaredNorm();
        }
        return log_norm_ - 0.5 * quad;
    }

    template <class Rng>
    [[nodiscard]] Eigen::VectorXd sample(Rng& rng) const {
        std::normal_distribution<double> n01(0.0, 1.0);
        Eigen::VectorXd z(dim());
        for (Eigen::Index d = 0; d < dim(); ++d) z(d) = n01(rng);
        if (type_ == CovarianceType::Diagonal) {
            return mean_ + z.cwiseQuotient(inv_std_);
        }
        return mean_ + chol_.matrixL() * z;
    }

private:
    GaussianEmission(Eigen::VectorXd mean, CovarianceType type, Eigen::MatrixXd cov, double floor)
        : mean_(std::move(mean)), cov_(std::move(cov)), type_(type) {
        const Eigen::Index d = mean_.size();
        if (d < 1) throw ValidationError("emission must have dimension >= 1");
        if (cov_.rows() != d || cov_.cols() != d) {
            throw ValidationError("covariance shape does not match mean dimension");
        }
        if (!mean_.allFinite() || !cov_.allFinite()) {
            throw ValidationError("emission parameters must be finite");
        }
        // Slack so that a floor-clamped covariance reconstructed from its eigenbasis still passes.
        const double min_allowed = floor * (1.0 - 1e-6);
        if (type_ == CovarianceType::Diagonal) {
            inv_std_.resize(d);
            double log_det = 0.0;
            for (Eigen::Index i = 0; i < d; ++i) {
                const double v = cov_(i, i);
                if (!(v >= min_allowed) || !(v > 0.0)) {
                    throw ValidationError("variance " + std::to_string(v) + " below floor");
                }
                inv_std_(i) = 1.0 / std::sqrt(v);
                log_det += std::log(v);
            }
            log_norm_ = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det);
            return;
        }
        const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
        if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
            throw ValidationError("covariance is not symmetric");
        }
        cov_ = 0.5 * (cov_ + cov_.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov_, Eigen::EigenvaluesOnly);
        if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() >= min_allowed)) {
            throw ValidationError("covariance is not positive definite above the variance floor");
        }
        chol_.compute(cov_);
        if (chol_.info() != Eigen::Success) {
            throw ValidationError("covariance Cholesky factorisation failed");
        }
        const Eigen::MatrixXd l = chol_.matrixL();
        const double log_det = 2.0 * l.diagonal().array().log().sum();
        log_norm_ = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det);
    }

    Eigen::VectorXd mean_;
    Eigen::MatrixXd cov_;
    CovarianceType type_;
    Eigen::VectorXd inv_std_;
    Eigen::LLT<Eigen::MatrixXd> chol_;
    double log_norm_ = 0.0;
};

}  // namespace hmmev
