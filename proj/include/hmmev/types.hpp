#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hmmev {

// One observation per row; rows are contiguous so a row can be viewed as a vector.
using Observations = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ObsRef = Eigen::Ref<const Eigen::VectorXd>;

using SkillId = int;

struct ObservationSequence {
    Observations data;
    double dt = 1.0;  // seconds, informational only

    [[nodiscard]] Eigen::Index length() const { return data.rows(); }
    [[nodiscard]] Eigen::Index dim() const { return data.cols(); }
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when an input violates a documented invariant (bad model, bad file, bad shape).
class ValidationError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    TrainingError(const std::string& what, int iteration)
        : Error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}

    [[nodiscard]] int iteration() const { return iteration_; }

private:
    int iteration_;
};

inline auto row_of(const Observations& y, Eigen::Index t) { return y.row(t).transpose(); }

inline void require_finite(const Observations& y, const char* what) {
    if (!y.allFinite()) {
        throw ValidationError(std::string(what) + ": observations contain non-finite values");
    }
}

}  // namespace hmmev
