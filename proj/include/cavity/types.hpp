#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace cavity {

using Complex = std::complex<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

// Invalid input or configuration. The CLI maps this to exit status 2.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A numerical guard tripped during propagation. The CLI maps this to exit status 3.
struct NumericGuard : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace cavity
