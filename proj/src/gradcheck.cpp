#include "ccnn/gradcheck.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace ccnn {

GradCheckReport check_gradients(const std::function<Tensor()>& forward, std::span<Tensor> inputs,
                                double h) {
    Tensor loss = forward();
    if (loss.numel() != 1) throw std::invalid_argument("check_gradients: loss must be scalar");
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (const Tensor& input : inputs) {
        if (!input.has_grad())
            throw std::runtime_error("check_gradients: input did not receive a gradient");
        analytic.push_back(input.grad());
    }

    GradCheckReport report;
    for (size_t t = 0; t < inputs.size(); ++t) {
        Tensor& input = inputs[t];
        for (int64_t i = 0; i < input.numel(); ++i) {
            double saved = input.data()[i];
            input.data()[i] = saved + h;
            double up = forward().item();
            input.data()[i] = saved - h;
            double down = forward().item();
            input.data()[i] = saved;
            double fd = (up - down) / (2.0 * h);
            double ad = analytic[t][static_cast<size_t>(i)];
            double abs_err = std::abs(ad - fd);
            double rel_err = abs_err / std::max({1.0, std::abs(ad), std::abs(fd)});
            report.max_abs_err = std::max(report.max_abs_err, abs_err);
            report.max_rel_err = std::max(report.max_rel_err, rel_err);
            ++report.checked;
        }
    }
    return report;
}

}  // namespace ccnn
