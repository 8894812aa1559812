#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ccnn/tensor.hpp"
#include "ccnn/trace.hpp"

namespace ccnn {

/// Which of the two 2x2 n-rooks samplers a checkered layer applies.
/// `standard` keeps the top-left / bottom-right pair, `complement` the
/// top-right / bottom-left pair.
enum class CheckeredMode { standard, complement };

enum class PoolMode { avg, max };

/// Feature map with a submap dimension: tensor shaped (B, C, M, H, W) plus
/// per-submap provenance. `metas` carries the canonical nonnegative
/// (offset mod stride) bookkeeping; `origins` carries the signed content
/// origins produced by the shift-based subsampling (origin + stride * index
/// is the original-image position of an element, which may start negative
/// at shifted edges).
struct FeatureMap {
    Tensor tensor;
    std::vector<SubmapMeta> metas;
    std::vector<std::array<int, 2>> origins;

    int batch() const { return tensor.dim(0); }
    int channels() const { return tensor.dim(1); }
    int submaps() const { return tensor.dim(2); }
    int height() const { return tensor.dim(3); }
    int width() const { return tensor.dim(4); }
};

/// Wraps a (B, C, H, W) tensor as a fresh single-submap map with meta
/// (0, 0, stride 1).
FeatureMap make_feature_map(const Tensor& input_bchw);

/// Per-submap 2D cross-correlation. weight is (C_out, C_in, kh, kw) or
/// (C_out, C_in, 1, kh, kw); bias (C_out) or undefined. Submap count and
/// offsets are unchanged; step_stride scales by `stride`.
FeatureMap conv2d(const FeatureMap& x, const Tensor& weight, const Tensor& bias, int stride,
                  int padding, int dilation = 1);

/// Stride-2 checkered convolution: each submap yields two children, the
/// plain stride-2 conv and the stride-2 conv of the input shifted down and
/// right by one element (zero-filled at the introduced top/left edge).
/// Children carry offsets (r, c) and (r+s, c+s); the result is re-sorted
/// into canonical order. Parameters are identical to a traditional stride-2
/// conv of the same shape.
FeatureMap checkered_conv(const FeatureMap& x, const Tensor& weight, const Tensor& bias,
                          int padding, CheckeredMode mode = CheckeredMode::standard);

/// Complement-sampler variant: children at offsets (r, c+s) and (r+s, c).
FeatureMap checkered_conv_complement(const FeatureMap& x, const Tensor& weight,
                                     const Tensor& bias, int padding);

/// Complete multisampling: all four window offsets survive, quadrupling the
/// submap count; equivalent to dilating subsequent layers instead of
/// subsampling.
FeatureMap complete_conv(const FeatureMap& x, const Tensor& weight, const Tensor& bias,
                         int padding);

/// Per-submap max pooling (no padding). `dilation` spaces the window taps,
/// which the dilation-equivalent graphs rely on.
FeatureMap maxpool(const FeatureMap& x, int kernel, int stride, int dilation = 1);

/// Submap-doubling max pooling with the same geometry as checkered_conv.
FeatureMap checkered_maxpool(const FeatureMap& x, int kernel = 2,
                             CheckeredMode mode = CheckeredMode::standard);

FeatureMap complete_maxpool(const FeatureMap& x, int kernel = 2);

/// Batch normalization with statistics pooled over (batch, submap, height,
/// width) per channel — the 3D-layer formulation. Training mode updates the
/// running stats in place with the given momentum; evaluation mode
/// normalizes with them.
FeatureMap batchnorm(const FeatureMap& x, const Tensor& gamma, const Tensor& beta, double eps,
                     double momentum, bool training, Tensor& running_mean, Tensor& running_var);

/// Element-wise mean across the submap dimension; meta resets to offsets
/// (0, 0) with the stride preserved.
FeatureMap mean_over_submaps(const FeatureMap& x);

/// Reduces (M, H, W) per channel to one value; returns shape (B, C).
Tensor global_pool3d(const FeatureMap& x, PoolMode mode);

/// 3D cross-correlation treating the submap dimension as depth (no submap
/// padding): weight (C_out, C_in, km, kh, kw), output M' = M - km + 1.
FeatureMap conv3d_submap(const FeatureMap& x, const Tensor& weight, const Tensor& bias,
                         int padding);

FeatureMap relu(const FeatureMap& x);

FeatureMap dropout(const FeatureMap& x, double rate, uint64_t seed, bool training);

}  // namespace ccnn
