#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccnn/graph.hpp"

namespace ccnn {

/// Exact scaling factor mantissa * 2^(half_exponent / 2). All table entries
/// are powers of 2 or sqrt(2), so equality checks are integer checks.
struct Factor {
    int64_t mantissa = 1;
    int half_exponent = 0;

    bool operator==(const Factor&) const = default;
    double to_double() const;
    std::string to_string() const;
};

/// Normalizes so the mantissa is odd (whole powers of two move into the
/// exponent).
Factor make_factor(int64_t mantissa, int half_exponent);

enum class Scheme { traditional, checkered, dilated };
enum class ChannelRule { double_channels, constant, sqrt2 };

struct ComplexityProfile {
    Scheme scheme;
    ChannelRule channel_rule;
    int steps = 0;
    Factor memory_factor;
    Factor compute_factor;
};

/// Spatial resolution after `steps` layers of stride k, dimensionality d,
/// n samples per window: r * (n / k^d)^steps. Throws when a step does not
/// divide exactly.
int64_t resolution_after(int64_t r, int k, int d, int n, int steps);

/// Per-layer memory/compute factors relative to the same scheme at s=0:
///   channels doubled per step: traditional (0.5^s, 1), checkered (1, 2^s),
///     dilated (2^s, 4^s);
///   channels constant: traditional (0.25^s, 0.25^s), checkered
///     (0.5^s, 0.5^s), dilated (1, 1);
///   sqrt2 rule (checkered only): (1 / 2^(s/2), 1).
ComplexityProfile complexity_profile(Scheme scheme, ChannelRule rule, int s);

struct LayerCost {
    int64_t macs = 0;
    int64_t activations = 0;
};

/// Shape-only dry run counting multiply-accumulates and activation elements
/// per layer. Pooling, normalization and elementwise layers count zero MACs.
std::vector<LayerCost> measured_cost(const LayerGraph& g, int batch, int height, int width);

std::string scheme_name(Scheme scheme);
std::string channel_rule_name(ChannelRule rule);

}  // namespace ccnn
