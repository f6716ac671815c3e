#pragma once

#include <Eigen/Core>

#include <complex>
#include <stdexcept>
#include <string>

namespace erlmix {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Invalid argument or out-of-domain input.
struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// An iterative procedure failed to reach its tolerance within budget.
struct ConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Adaptive quadrature exhausted its budget; carries the partial estimate.
struct QuadratureError : std::runtime_error {
    QuadratureError(const std::string& msg, double partial_estimate)
        : std::runtime_error(msg), partial(partial_estimate) {}
    double partial;
};

/// Time integration failed; carries the time at which it happened.
struct IntegrationError : std::runtime_error {
    IntegrationError(const std::string& msg, double at_time)
        : std::runtime_error(msg), time(at_time) {}
    double time;
};

}  // namespace erlmix
