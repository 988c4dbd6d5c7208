#pragma once

#include "hmmev/forward.hpp"

#include <vector>

namespace hmmev {

struct ViterbiResult {
    std::vector<int> path;     // zero-based states, one per timestep
    Eigen::VectorXd log_delta; // max log joint ending in each state at the last step
    double log_prob = kNegInf; // log P(z_hat, y)
};

// Max-product lattice over a whole sequence. The DP values for a prefix never depend on
// later observations, so the best path for any prefix can be read off by backtracking
// from that prefix's last column.
class ViterbiLattice {
public:
    ViterbiLattice(const HmmModel& model, const Observations& y) {
        if (y.rows() < 1) throw ValidationError("viterbi needs at least one observation");
        const int n = model.n_states();
        const Eigen::Index len = y.rows();
        delta_.resize(len, n);
        back_.resize(len, n);
        check_dim(model, row_of(y, 0));
        delta_.row(0) = (model.log_pi() + model.emission_logprobs(row_of(y, 0))).transpose();
        back_.row(0).setConstant(-1);
        for (Eigen::Index t = 1; t < len; ++t) {
            check_dim(model, row_of(y, t));
            const Eigen::VectorXd emit = model.emission_logprobs(row_of(y, t));
            for (int i = 0; i < n; ++i) {
                int best = 0;
                double best_val = delta_(t - 1, 0) + model.log_trans()(0, i);
                for (int j = 1; j < n; ++j) {
                    const double v = delta_(t - 1, j) + model.log_trans()(j, i);
                    if (v > best_val) {  // strict: lowest index wins ties
                        best_val = v;
                        best = j;
                    }
                }
                delta_(t, i) = best_val + emit(i);
                back_(t, i) = best;
            }
        }
    }

    [[nodiscard]] Eigen::Index length() const { return delta_.rows(); }

    // Best path for the prefix y[0..t] (zero-based t, inclusive).
    [[nodiscard]] ViterbiResult prefix(Eigen::Index t) const {
        ViterbiResult r;
        r.log_delta = delta_.row(t).transpose();
        int state = 0;
        for (int i = 1; i < delta_.cols(); ++i) {
            if (delta_(t, i) > delta_(t, state)) state = i;
        }
        r.log_prob = delta_(t, state);
        r.path.assign(static_cast<std::size_t>(t + 1), 0);
        for (Eigen::Index s = t; s >= 0; --s) {
            r.path[static_cast<std::size_t>(s)] = state;
            if (s > 0) state = back_(s, state);
        }
        return r;
    }

private:
    Eigen::MatrixXd delta_;
    Eigen::MatrixXi back_;
};

inline ViterbiResult viterbi(const HmmModel& model, const Observations& y) {
    ViterbiLattice lattice(model, y);
    return lattice.prefix(lattice.length() - 1);
}

// log P(z, y) for an explicit state path.
inline double path_log_prob(const HmmModel& model, const Observations& y, const std::vector<int>& path) {
    if (static_cast<Eigen::Index>(path.size()) != y.rows()) throw ValidationError("path length mismatch");
    double lp = model.log_pi()(path[0]) + emission_logprob(model, path[0], row_of(y, 0));
    for (std::size_t t = 1; t < path.size(); ++t) {
        lp += model.log_trans()(path[t - 1], path[t]) +
              emission_logprob(model, path[t], row_of(y, static_cast<Eigen::Index>(t)));
    }
    return lp;
}

}  // namespace hmmev
