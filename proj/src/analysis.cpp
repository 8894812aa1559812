#include "ccnn/analysis.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ccnn {

double Factor::to_double() const {
    return static_cast<double>(mantissa) * std::pow(2.0, half_exponent / 2.0);
}

std::string Factor::to_string() const {
    std::ostringstream out;
    if (half_exponent % 2 == 0) {
        int exp = half_exponent / 2;
        if (exp >= 0) {
            int64_t value = mantissa;
            for (int i = 0; i < exp; ++i) value *= 2;
            out << value;
        } else {
            if (mantissa != 1) out << mantissa << "/";
            else out << "1/";
            out << (1ll << -exp);
        }
    } else {
        if (mantissa != 1) out << mantissa << "*";
        if (half_exponent > 0)
            out << "2^(" << half_exponent << "/2)";
        else
            out << "1/2^(" << -half_exponent << "/2)";
    }
    return out.str();
}

Factor make_factor(int64_t mantissa, int half_exponent) {
    if (mantissa == 0) return Factor{0, 0};
    while (mantissa % 2 == 0) {
        mantissa /= 2;
        half_exponent += 2;
    }
    return Factor{mantissa, half_exponent};
}

int64_t resolution_after(int64_t r, int k, int d, int n, int steps) {
    if (k < 1) throw std::invalid_argument("resolution_after: k must be >= 1");
    if (d < 1) throw std::invalid_argument("resolution_after: d must be >= 1");
    int64_t window = 1;
    for (int i = 0; i < d; ++i) window *= k;
    if (n < 1 || n > window)
        throw std::invalid_argument("resolution_after: n must be in [1, k^d]");
    if (steps < 0) throw std::invalid_argument("resolution_after: steps must be >= 0");
    for (int t = 0; t < steps; ++t) {
        int64_t kept = r * n;
        if (kept % window != 0)
            throw std::invalid_argument("resolution_after: resolution " + std::to_string(r) +
                                        " not divisible at step " + std::to_string(t + 1));
        r = kept / window;
    }
    return r;
}

ComplexityProfile complexity_profile(Scheme scheme, ChannelRule rule, int s) {
    if (s < 0) throw std::invalid_argument("complexity_profile: steps must be >= 0");
    ComplexityProfile profile;
    profile.scheme = scheme;
    profile.channel_rule = rule;
    profile.steps = s;
    switch (rule) {
        case ChannelRule::double_channels:
            switch (scheme) {
                case Scheme::traditional:
                    profile.memory_factor = make_factor(1, -2 * s);  // 0.5^s
                    profile.compute_factor = make_factor(1, 0);
                    break;
                case Scheme::checkered:
                    profile.memory_factor = make_factor(1, 0);
                    profile.compute_factor = make_factor(1, 2 * s);  // 2^s
                    break;
                case Scheme::dilated:
                    profile.memory_factor = make_factor(1, 2 * s);   // 2^s
                    profile.compute_factor = make_factor(1, 4 * s);  // 4^s
                    break;
            }
            break;
        case ChannelRule::constant:
            switch (scheme) {
                case Scheme::traditional:
                    profile.memory_factor = make_factor(1, -4 * s);  // 0.25^s
                    profile.compute_factor = make_factor(1, -4 * s);
                    break;
                case Scheme::checkered:
                    profile.memory_factor = make_factor(1, -2 * s);  // 0.5^s
                    profile.compute_factor = make_factor(1, -2 * s);
                    break;
                case Scheme::dilated:
                    profile.memory_factor = make_factor(1, 0);
                    profile.compute_factor = make_factor(1, 0);
                    break;
            }
            break;
        case ChannelRule::sqrt2:
            if (scheme != Scheme::checkered)
                throw std::runtime_error("complexity_profile: sqrt2 rule is defined for the "
                                         "checkered scheme only");
            profile.memory_factor = make_factor(1, -s);  // 1 / 2^(s/2)
            profile.compute_factor = make_factor(1, 0);
            break;
    }
    return profile;
}

namespace {

int conv_out_extent(int in, int kernel, int stride, int padding, int dilation) {
    int span = in + 2 * padding - dilation * (kernel - 1) - 1;
    if (span < 0) throw std::invalid_argument("measured_cost: kernel does not fit");
    return span / stride + 1;
}

struct DryShape {
    int channels, submaps, height, width;
};

}  // namespace

std::vector<LayerCost> measured_cost(const LayerGraph& g, int batch, int height, int width) {
    std::vector<LayerCost> costs;
    DryShape s{g.in_channels, 1, height, width};
    auto activations = [&](const DryShape& shape) {
        return static_cast<int64_t>(batch) * shape.channels * shape.submaps * shape.height *
               shape.width;
    };
    for (const Layer& layer : g.layers) {
        LayerCost cost;
        switch (layer.kind) {
            case LayerKind::conv: {
                int out_h, out_w, out_m = s.submaps;
                if (layer.km > 1) {
                    out_h = conv_out_extent(s.height, layer.kernel, 1, layer.padding, 1);
                    out_w = conv_out_extent(s.width, layer.kernel, 1, layer.padding, 1);
                    out_m = s.submaps - layer.km + 1;
                    if (out_m < 1) throw std::invalid_argument("measured_cost: km > submaps");
                } else {
                    out_h = conv_out_extent(s.height, layer.kernel, layer.stride, layer.padding,
                                            layer.dilation);
                    out_w = conv_out_extent(s.width, layer.kernel, layer.stride, layer.padding,
                                            layer.dilation);
                }
                cost.macs = static_cast<int64_t>(batch) * layer.out_channels * out_m * out_h *
                            out_w * s.channels * layer.km * layer.kernel * layer.kernel;
                s = DryShape{layer.out_channels, out_m, out_h, out_w};
                break;
            }
            case LayerKind::checkered_conv:
            case LayerKind::complete_conv: {
                int children = layer.kind == LayerKind::checkered_conv ? 2 : 4;
                int out_h = conv_out_extent(s.height, layer.kernel, 2, layer.padding, 1);
                int out_w = conv_out_extent(s.width, layer.kernel, 2, layer.padding, 1);
                int out_m = s.submaps * children;
                cost.macs = static_cast<int64_t>(batch) * layer.out_channels * out_m * out_h *
                            out_w * s.channels * layer.kernel * layer.kernel;
                s = DryShape{layer.out_channels, out_m, out_h, out_w};
                break;
            }
            case LayerKind::maxpool: {
                int out_h = conv_out_extent(s.height, layer.kernel, layer.stride, 0, layer.dilation);
                int out_w = conv_out_extent(s.width, layer.kernel, layer.stride, 0, layer.dilation);
                s.height = out_h;
                s.width = out_w;
                break;
            }
            case LayerKind::checkered_maxpool:
            case LayerKind::complete_maxpool: {
                int children = layer.kind == LayerKind::checkered_maxpool ? 2 : 4;
                int out_h = conv_out_extent(s.height, layer.kernel, 2, 0, 1);
                int out_w = conv_out_extent(s.width, layer.kernel, 2, 0, 1);
                s = DryShape{s.channels, s.submaps * children, out_h, out_w};
                break;
            }
            case LayerKind::mean_submaps: s.submaps = 1; break;
            case LayerKind::global_pool:
                s = DryShape{s.channels, 1, 1, 1};
                break;
            case LayerKind::linear: {
                int features = s.channels * s.submaps * s.height * s.width;
                if (features != layer.in_features)
                    throw std::invalid_argument("measured_cost: linear expects " +
                                                std::to_string(layer.in_features) +
                                                " features, activation has " +
                                                std::to_string(features));
                cost.macs = static_cast<int64_t>(batch) * layer.in_features * layer.out_features;
                s = DryShape{layer.out_features, 1, 1, 1};
                break;
            }
            case LayerKind::batchnorm:
            case LayerKind::relu:
            case LayerKind::dropout: break;
        }
        cost.activations = activations(s);
        costs.push_back(cost);
    }
    return costs;
}

std::string scheme_name(Scheme scheme) {
    switch (scheme) {
        case Scheme::traditional: return "traditional";
        case Scheme::checkered: return "checkered";
        case Scheme::dilated: return "dilated";
    }
    return "?";
}

std::string channel_rule_name(ChannelRule rule) {
    switch (rule) {
        case ChannelRule::double_channels: return "double";
        case ChannelRule::constant: return "constant";
        case ChannelRule::sqrt2: return "sqrt2";
    }
    return "?";
}

}  // namespace ccnn
