#pragma once

// Oracle battery behind `drfermi check`: closed forms against search-based
// oracles and every analytic gradient against central finite differences.

#include "drfermi/classifier.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace drfermi {

enum class Fault { none, ermi_sign };

Fault fault_from_string(const std::string& name);

struct SelfCheckOptions {
    std::uint64_t seed = 0;
    long ball_trials = 200;     ///< random Q matrices per (eps, norm)
    long gradient_points = 20;  ///< random parameter points per gradient
    long sqrt_samples = 1000;
    Fault fault = Fault::none;  ///< deliberately broken implementation, to prove the checks bite
};

struct CheckResult {
    std::string name;
    bool passed = false;
    double residual = 0.0;  ///< worst residual seen
    double tolerance = 0.0;
    long cases = 0;
};

std::vector<CheckResult> run_self_check(const SelfCheckOptions& opts);

/// Central differences of f over the flat parameter vector.
Eigen::VectorXd central_difference(const std::function<double(const ModelParams&)>& f,
                                   const ModelParams& at, double h = 1e-5);

/// ||a - b|| / max(||a||, ||b||, floor).
double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-8);

}  // namespace drfermi
