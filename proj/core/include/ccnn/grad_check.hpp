#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ccnn/tensor.hpp"

namespace ccnn {

struct GradCheckParamResult {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    bool pass = false;
    double tolerance = 0.0;
    std::vector<GradCheckParamResult> per_param;
    std::string summary() const;
};

// Compares the analytic gradient of the scalar-valued computation `f`
// against central finite differences (f(p+h) - f(p-h)) / 2h, entry by
// entry, over every listed parameter. `f` must be deterministic and must
// recompute from the parameters' current values on every call.
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double h = 1e-5, double tol = 1e-4);

}  // namespace ccnn
