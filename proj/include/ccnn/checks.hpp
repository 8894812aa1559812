#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccnn/graph.hpp"

namespace ccnn {

struct CheckResult {
    std::string name;
    bool ok = false;
    std::string detail;
};

struct SuiteReport {
    std::string suite;
    std::vector<CheckResult> checks;
    int failed() const;
};

std::string suite_json(const SuiteReport& report);

struct RandomGraphOptions {
    int subsample_layers = 2;    // stride-2 layers
    int height = 16;
    bool gpool_classifier = true;  // gpool3d head instead of flatten+linear
};

/// Seeded random CNN for equivalence checks: a stride-1 stem, the requested
/// number of stride-2 conv/pool layers with optional batchnorm (randomized
/// running stats), and a classifier head.
LayerGraph random_toy_graph(uint64_t seed, const RandomGraphOptions& options);

/// Per-layer equality of the checkered graph's submap (0, 0, s) against the
/// traditional graph, evaluation mode.
struct SubsetCheck {
    double max_abs_diff = 0.0;
    int64_t compared = 0;
};
SubsetCheck compare_subset(LayerGraph& cnn, const Tensor& input_bchw);

/// Complete-multisampling route vs stride-1+dilation route, compared at
/// positions whose receptive fields stay inside the unpadded input.
struct DilationCheck {
    double max_abs_diff = 0.0;
    int64_t compared = 0;
};
DilationCheck compare_complete_vs_dilated(LayerGraph& cnn, const Tensor& input_bchw);

SuiteReport run_subset_suite(uint64_t seed, int instances);
SuiteReport run_dilation_suite(uint64_t seed, int instances);
SuiteReport run_gradient_suite(uint64_t seed);
SuiteReport run_coverage_suite();
SuiteReport run_complexity_suite();

}  // namespace ccnn
