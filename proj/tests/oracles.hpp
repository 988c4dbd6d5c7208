#pragma once

// Independent reference computations used by the tests. Nothing here calls into the
// forward, Viterbi or density code under test.

#include "hmmev/hmm_model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

// Textbook multivariate normal log-density via explicit inverse and determinant.
inline double gaussian_logpdf(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, const Eigen::VectorXd& y) {
    const Eigen::VectorXd d = y - mean;
    const double quad = d.dot(cov.inverse() * d);
    const double k = static_cast<double>(mean.size());
    return -0.5 * (k * std::log(2.0 * std::numbers::pi) + std::log(cov.determinant()) + quad);
}

inline double emission(const hmmev::HmmModel& m, int state, const Eigen::VectorXd& y) {
    const auto& e = m.emission(state);
    return gaussian_logpdf(e.mean(), e.covariance(), y);
}

// log P(z, y) computed directly from probabilities (no cached logs).
inline double joint(const hmmev::HmmModel& m, const hmmev::Observations& y, const std::vector<int>& z) {
    double lp = std::log(m.pi()(z[0])) + emission(m, z[0], y.row(0).transpose());
    for (std::size_t t = 1; t < z.size(); ++t) {
        lp += std::log(m.trans()(z[t - 1], z[t])) + emission(m, z[t], y.row(static_cast<Eigen::Index>(t)).transpose());
    }
    return lp;
}

// Calls f(path) for every one of the N^T state paths.
template <typename F>
void for_each_path(int n, int len, F&& f) {
    std::vector<int> z(static_cast<std::size_t>(len), 0);
    for (;;) {
        f(z);
        int i = len - 1;
        while (i >= 0 && z[static_cast<std::size_t>(i)] == n - 1) z[static_cast<std::size_t>(i--)] = 0;
        if (i < 0) return;
        ++z[static_cast<std::size_t>(i)];
    }
}

// log sum over all paths of P(z, y).
inline double brute_force_loglik(const hmmev::HmmModel& m, const hmmev::Observations& y) {
    std::vector<double> terms;
    for_each_path(m.n_states(), static_cast<int>(y.rows()), [&](const std::vector<int>& z) { terms.push_back(joint(m, y, z)); });
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : terms) hi = std::max(hi, v);
    if (!std::isfinite(hi)) return hi;
    double s = 0.0;
    for (double v : terms) s += std::exp(v - hi);
    return hi + std::log(s);
}

inline double brute_force_max(const hmmev::HmmModel& m, const hmmev::Observations& y) {
    double best = -std::numeric_limits<double>::infinity();
    for_each_path(m.n_states(), static_cast<int>(y.rows()),
                  [&](const std::vector<int>& z) { best = std::max(best, joint(m, y, z)); });
    return best;
}

// Random model with strictly positive parameters: N states, D dims, optional full covariance.
inline hmmev::HmmModel random_model(std::mt19937_64& rng, int n, int d, bool full) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::normal_distribution<double> g(0.0, 1.5);
    Eigen::VectorXd pi(n);
    for (int i = 0; i < n; ++i) pi(i) = u(rng);
    pi /= pi.sum();
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) a(i, j) = u(rng);
        a.row(i) /= a.row(i).sum();
    }
    std::vector<hmmev::GaussianEmission> em;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd mu(d);
        for (int k = 0; k < d; ++k) mu(k) = g(rng);
        if (full) {
            Eigen::MatrixXd b(d, d);
            for (int r = 0; r < d; ++r) {
                for (int c = 0; c < d; ++c) b(r, c) = g(rng) * 0.5;
            }
            Eigen::MatrixXd cov = b * b.transpose() + 0.3 * Eigen::MatrixXd::Identity(d, d);
            em.push_back(hmmev::GaussianEmission::full(mu, cov));
        } else {
            Eigen::VectorXd v(d);
            for (int k = 0; k < d; ++k) v(k) = 0.2 + u(rng);
            em.push_back(hmmev::GaussianEmission::diagonal(mu, v));
        }
    }
    return hmmev::HmmModel(pi, a, em);
}

inline hmmev::Observations random_observations(std::mt19937_64& rng, int len, int d) {
    std::normal_distribution<double> g(0.0, 2.0);
    hmmev::Observations y(len, d);
    for (int t = 0; t < len; ++t) {
        for (int k = 0; k < d; ++k) y(t, k) = g(rng);
    }
    return y;
}

}  // namespace oracle
