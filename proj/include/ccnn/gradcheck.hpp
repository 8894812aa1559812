#pragma once

#include <functional>
#include <span>

#include "ccnn/tensor.hpp"

namespace ccnn {

struct GradCheckReport {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    int64_t checked = 0;
};

/// Central finite differences against reverse-mode gradients. `forward` must
/// rebuild the graph from the current values of `inputs` and return a scalar;
/// every element of every input is perturbed by +-h. The relative error uses
/// a unit floor so near-zero gradients compare absolutely.
GradCheckReport check_gradients(const std::function<Tensor()>& forward, std::span<Tensor> inputs,
                                double h = 1e-5);

}  // namespace ccnn
