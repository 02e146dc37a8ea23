#pragma once

#include <stdexcept>
#include <string>

namespace reshlab {

// Base class for numerical failures (quadrature that cannot reach its
// tolerance, iteration caps, internal consistency violations).  The CLI maps
// these to exit code 3, while std::invalid_argument (bad configs/inputs)
// maps to exit code 2.
struct numerical_error : std::runtime_error {
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

struct quadrature_error : numerical_error {
    quadrature_error(const std::string& what, double achieved_bound)
        : numerical_error(what), achieved(achieved_bound) {}
    double achieved;  // best error bound reached before giving up
};

struct solver_error : numerical_error {
    solver_error(const std::string& what, double last_residual)
        : numerical_error(what), residual(last_residual) {}
    double residual;
};

struct consistency_error : numerical_error {
    explicit consistency_error(const std::string& what) : numerical_error(what) {}
};

}  // namespace reshlab
