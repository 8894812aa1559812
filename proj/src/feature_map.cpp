#include "ccnn/feature_map.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ccnn {

namespace {

int conv_extent(int in, int kernel, int stride, int padding, int dilation) {
    int span = in + 2 * padding - dilation * (kernel - 1) - 1;
    if (span < 0)
        throw std::invalid_argument("conv: kernel does not fit input extent " +
                                    std::to_string(in));
    return span / stride + 1;
}

Tensor make_node(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                 std::function<void(const std::vector<double>&)> backward_fn) {
    Tensor out = Tensor::from_data(std::move(shape), std::move(data));
    out.impl()->parents = std::move(parents);
    out.impl()->backward_fn = std::move(backward_fn);
    return out;
}

struct ConvDims {
    int batch, in_channels, out_channels, submaps;
    int in_h, in_w, kh, kw, out_h, out_w;
    int stride, padding, dilation;
};

// weight normalized to (Co, Ci, kh, kw); x (B, Ci, M, H, W)
Tensor conv5d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding,
              int dilation) {
    if (stride < 1) throw std::invalid_argument("conv: stride must be >= 1");
    const Shape& ws = weight.shape();
    if (ws.size() != 4) throw std::invalid_argument("conv: weight must be 4-d");
    ConvDims d;
    d.batch = x.dim(0);
    d.in_channels = x.dim(1);
    d.submaps = x.dim(2);
    d.in_h = x.dim(3);
    d.in_w = x.dim(4);
    d.out_channels = ws[0];
    d.kh = ws[2];
    d.kw = ws[3];
    d.stride = stride;
    d.padding = padding;
    d.dilation = dilation;
    if (ws[1] != d.in_channels)
        throw std::invalid_argument("conv: weight expects " + std::to_string(ws[1]) +
                                    " input channels, map has " + std::to_string(d.in_channels));
    bool has_bias = bias.defined();
    if (has_bias && bias.numel() != d.out_channels)
        throw std::invalid_argument("conv: bias length mismatch");
    d.out_h = conv_extent(d.in_h, d.kh, stride, padding, dilation);
    d.out_w = conv_extent(d.in_w, d.kw, stride, padding, dilation);

    std::vector<double> out(static_cast<size_t>(d.batch) * d.out_channels * d.submaps * d.out_h *
                            d.out_w);

    const double* xd = x.data();
    const double* wd = weight.data();
    const double* bd = has_bias ? bias.data() : nullptr;
    auto x_at = [&](int b, int ci, int m, int ih, int iw) {
        return xd[(((static_cast<int64_t>(b) * d.in_channels + ci) * d.submaps + m) * d.in_h + ih) *
                      d.in_w +
                  iw];
    };
    size_t o = 0;
    for (int b = 0; b < d.batch; ++b)
        for (int co = 0; co < d.out_channels; ++co)
            for (int m = 0; m < d.submaps; ++m)
                for (int oh = 0; oh < d.out_h; ++oh)
                    for (int ow = 0; ow < d.out_w; ++ow, ++o) {
                        double acc = bd ? bd[co] : 0.0;
                        for (int ci = 0; ci < d.in_channels; ++ci)
                            for (int u = 0; u < d.kh; ++u) {
                                int ih = oh * stride - padding + u * dilation;
                                if (ih < 0 || ih >= d.in_h) continue;
                                for (int v = 0; v < d.kw; ++v) {
                                    int iw = ow * stride - padding + v * dilation;
                                    if (iw < 0 || iw >= d.in_w) continue;
                                    acc += x_at(b, ci, m, ih, iw) *
                                           wd[((static_cast<int64_t>(co) * d.in_channels + ci) *
                                                   d.kh +
                                               u) *
                                                  d.kw +
                                              v];
                                }
                            }
                        out[o] = acc;
                    }

    auto ix = x.impl_ptr();
    auto iw_ = weight.impl_ptr();
    auto ib = has_bias ? bias.impl_ptr() : nullptr;
    std::vector<Tensor> parents = {x, weight};
    if (has_bias) parents.push_back(bias);
    Shape out_shape = {d.batch, d.out_channels, d.submaps, d.out_h, d.out_w};
    return make_node(
        std::move(out_shape), std::move(out), std::move(parents),
        [ix, iw_, ib, d](const std::vector<double>& g) {
            ix->grad.resize(ix->data.size(), 0.0);
            iw_->grad.resize(iw_->data.size(), 0.0);
            if (ib) ib->grad.resize(ib->data.size(), 0.0);
            const double* xd = ix->data.data();
            const double* wd = iw_->data.data();
            size_t o = 0;
            for (int b = 0; b < d.batch; ++b)
                for (int co = 0; co < d.out_channels; ++co)
                    for (int m = 0; m < d.submaps; ++m)
                        for (int oh = 0; oh < d.out_h; ++oh)
                            for (int ow = 0; ow < d.out_w; ++ow, ++o) {
                                double go = g[o];
                                if (go == 0.0) continue;
                                if (ib) ib->grad[static_cast<size_t>(co)] += go;
                                for (int ci = 0; ci < d.in_channels; ++ci)
                                    for (int u = 0; u < d.kh; ++u) {
                                        int ih = oh * d.stride - d.padding + u * d.dilation;
                                        if (ih < 0 || ih >= d.in_h) continue;
                                        for (int v = 0; v < d.kw; ++v) {
                                            int iw = ow * d.stride - d.padding + v * d.dilation;
                                            if (iw < 0 || iw >= d.in_w) continue;
                                            int64_t xi =
                                                (((static_cast<int64_t>(b) * d.in_channels + ci) *
                                                      d.submaps +
                                                  m) *
                                                     d.in_h +
                                                 ih) *
                                                    d.in_w +
                                                iw;
                                            int64_t wi =
                                                ((static_cast<int64_t>(co) * d.in_channels + ci) *
                                                     d.kh +
                                                 u) *
                                                    d.kw +
                                                v;
                                            ix->grad[static_cast<size_t>(xi)] += wd[wi] * go;
                                            iw_->grad[static_cast<size_t>(wi)] += xd[xi] * go;
                                        }
                                    }
                            }
        });
}

// Shifts content down by dr and right by dc, zero-filling the introduced
// top/left edge and dropping the last rows/columns.
Tensor shift_tensor(const Tensor& x, int dr, int dc) {
    int batch = x.dim(0), channels = x.dim(1), submaps = x.dim(2), h = x.dim(3), w = x.dim(4);
    std::vector<double> out(static_cast<size_t>(x.numel()), 0.0);
    const double* xd = x.data();
    int64_t plane = static_cast<int64_t>(h) * w;
    int64_t maps = static_cast<int64_t>(batch) * channels * submaps;
    for (int64_t p = 0; p < maps; ++p)
        for (int i = dr; i < h; ++i)
            for (int j = dc; j < w; ++j)
                out[static_cast<size_t>(p * plane + static_cast<int64_t>(i) * w + j)] =
                    xd[p * plane + static_cast<int64_t>(i - dr) * w + (j - dc)];
    auto ix = x.impl_ptr();
    return make_node(x.shape(), std::move(out), {x},
                     [ix, maps, plane, h, w, dr, dc](const std::vector<double>& g) {
                         ix->grad.resize(ix->data.size(), 0.0);
                         for (int64_t p = 0; p < maps; ++p)
                             for (int i = dr; i < h; ++i)
                                 for (int j = dc; j < w; ++j)
                                     ix->grad[static_cast<size_t>(
                                         p * plane + static_cast<int64_t>(i - dr) * w + (j - dc))] +=
                                         g[static_cast<size_t>(p * plane +
                                                               static_cast<int64_t>(i) * w + j)];
                     });
}

Tensor concat_submaps(const std::vector<Tensor>& parts) {
    int batch = parts[0].dim(0), channels = parts[0].dim(1);
    int h = parts[0].dim(3), w = parts[0].dim(4);
    int total_m = 0;
    for (const Tensor& t : parts) total_m += t.dim(2);
    int64_t plane = static_cast<int64_t>(h) * w;
    std::vector<double> out(static_cast<size_t>(batch) * channels * total_m * plane);
    std::vector<int> part_m(parts.size());
    for (size_t p = 0; p < parts.size(); ++p) part_m[p] = parts[p].dim(2);

    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < channels; ++c) {
            int m_out = 0;
            for (size_t p = 0; p < parts.size(); ++p) {
                const double* src = parts[p].data() +
                                    (static_cast<int64_t>(b) * channels + c) * part_m[p] * plane;
                double* dst = out.data() +
                              ((static_cast<int64_t>(b) * channels + c) * total_m + m_out) * plane;
                std::copy(src, src + static_cast<int64_t>(part_m[p]) * plane, dst);
                m_out += part_m[p];
            }
        }

    std::vector<Tensor> parents = parts;
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const Tensor& t : parts) impls.push_back(t.impl_ptr());
    return make_node({batch, channels, total_m, h, w}, std::move(out), std::move(parents),
                     [impls, part_m, batch, channels, total_m, plane](const std::vector<double>& g) {
                         for (auto& impl : impls) impl->grad.resize(impl->data.size(), 0.0);
                         for (int b = 0; b < batch; ++b)
                             for (int c = 0; c < channels; ++c) {
                                 int m_out = 0;
                                 for (size_t p = 0; p < impls.size(); ++p) {
                                     double* dst = impls[p]->grad.data() +
                                                   (static_cast<int64_t>(b) * channels + c) *
                                                       part_m[p] * plane;
                                     const double* src =
                                         g.data() + ((static_cast<int64_t>(b) * channels + c) *
                                                         total_m +
                                                     m_out) *
                                                        plane;
                                     for (int64_t i = 0; i < part_m[p] * plane; ++i) dst[i] += src[i];
                                     m_out += part_m[p];
                                 }
                             }
                     });
}

Tensor permute_submaps(const Tensor& x, const std::vector<int>& perm) {
    int batch = x.dim(0), channels = x.dim(1), submaps = x.dim(2), h = x.dim(3), w = x.dim(4);
    int64_t plane = static_cast<int64_t>(h) * w;
    std::vector<double> out(static_cast<size_t>(x.numel()));
    const double* xd = x.data();
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < channels; ++c)
            for (int m = 0; m < submaps; ++m) {
                const double* src =
                    xd + ((static_cast<int64_t>(b) * channels + c) * submaps + perm[static_cast<size_t>(m)]) * plane;
                double* dst =
                    out.data() + ((static_cast<int64_t>(b) * channels + c) * submaps + m) * plane;
                std::copy(src, src + plane, dst);
            }
    auto ix = x.impl_ptr();
    return make_node(x.shape(), std::move(out), {x},
                     [ix, perm, batch, channels, submaps, plane](const std::vector<double>& g) {
                         ix->grad.resize(ix->data.size(), 0.0);
                         for (int b = 0; b < batch; ++b)
                             for (int c = 0; c < channels; ++c)
                                 for (int m = 0; m < submaps; ++m) {
                                     double* dst = ix->grad.data() +
                                                   ((static_cast<int64_t>(b) * channels + c) *
                                                        submaps +
                                                    perm[static_cast<size_t>(m)]) *
                                                       plane;
                                     const double* src =
                                         g.data() + ((static_cast<int64_t>(b) * channels + c) *
                                                         submaps +
                                                     m) *
                                                        plane;
                                     for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
                                 }
                     });
}

Tensor maxpool_tensor(const Tensor& x, int kernel, int stride, int dilation) {
    int batch = x.dim(0), channels = x.dim(1), submaps = x.dim(2), h = x.dim(3), w = x.dim(4);
    int out_h = conv_extent(h, kernel, stride, 0, dilation);
    int out_w = conv_extent(w, kernel, stride, 0, dilation);
    int64_t maps = static_cast<int64_t>(batch) * channels * submaps;
    int64_t plane = static_cast<int64_t>(h) * w;
    int64_t out_plane = static_cast<int64_t>(out_h) * out_w;
    std::vector<double> out(static_cast<size_t>(maps * out_plane));
    std::vector<int64_t> argmax(static_cast<size_t>(maps * out_plane));
    const double* xd = x.data();
    for (int64_t p = 0; p < maps; ++p)
        for (int oh = 0; oh < out_h; ++oh)
            for (int ow = 0; ow < out_w; ++ow) {
                int64_t best_index = -1;
                double best = 0.0;
                for (int u = 0; u < kernel; ++u)
                    for (int v = 0; v < kernel; ++v) {
                        int ih = oh * stride + u * dilation;
                        int iw = ow * stride + v * dilation;
                        int64_t xi = p * plane + static_cast<int64_t>(ih) * w + iw;
                        if (best_index < 0 || xd[xi] > best) {
                            best = xd[xi];
                            best_index = xi;
                        }
                    }
                int64_t oi = p * out_plane + static_cast<int64_t>(oh) * out_w + ow;
                out[static_cast<size_t>(oi)] = best;
                argmax[static_cast<size_t>(oi)] = best_index;
            }
    auto ix = x.impl_ptr();
    return make_node({batch, channels, submaps, out_h, out_w}, std::move(out), {x},
                     [ix, argmax = std::move(argmax)](const std::vector<double>& g) {
                         ix->grad.resize(ix->data.size(), 0.0);
                         for (size_t i = 0; i < g.size(); ++i)
                             ix->grad[static_cast<size_t>(argmax[i])] += g[i];
                     });
}

Tensor normalize_conv2d_weight(const Tensor& weight) {
    const Shape& ws = weight.shape();
    if (ws.size() == 4) return weight;
    if (ws.size() == 5 && ws[2] == 1) return reshape(weight, {ws[0], ws[1], ws[3], ws[4]});
    throw std::invalid_argument("conv2d: weight must be (Co, Ci, kh, kw)");
}

std::vector<int> canonical_permutation(const std::vector<SubmapMeta>& metas) {
    std::vector<int> perm(metas.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
        const SubmapMeta& ma = metas[static_cast<size_t>(a)];
        const SubmapMeta& mb = metas[static_cast<size_t>(b)];
        return std::pair{ma.row_offset, ma.col_offset} < std::pair{mb.row_offset, mb.col_offset};
    });
    return perm;
}

struct ChildSpec {
    int shift_r, shift_c;   // applied to the input before the strided op
    int offset_r, offset_c; // sampler offsets within the window
};

// Shared geometry of checkered / complete subsampling ops: run `op` on each
// shifted input, concatenate along the submap axis and re-sort canonically.
FeatureMap multisample(const FeatureMap& x, const std::vector<ChildSpec>& children,
                       const std::function<Tensor(const Tensor&)>& op) {
    std::vector<Tensor> parts;
    std::vector<SubmapMeta> metas;
    std::vector<std::array<int, 2>> origins;
    for (const ChildSpec& spec : children) {
        Tensor shifted = (spec.shift_r || spec.shift_c)
                             ? shift_tensor(x.tensor, spec.shift_r, spec.shift_c)
                             : x.tensor;
        Tensor conv = op(shifted);
        int out_h = conv.dim(3), out_w = conv.dim(4);
        parts.push_back(conv);
        for (size_t m = 0; m < x.metas.size(); ++m) {
            const SubmapMeta& parent = x.metas[m];
            metas.push_back(SubmapMeta{parent.row_offset + parent.step_stride * spec.offset_r,
                                       parent.col_offset + parent.step_stride * spec.offset_c,
                                       parent.step_stride * 2, out_h, out_w});
            origins.push_back({x.origins[m][0] - parent.step_stride * spec.shift_r,
                               x.origins[m][1] - parent.step_stride * spec.shift_c});
        }
    }
    Tensor merged = concat_submaps(parts);
    std::vector<int> perm = canonical_permutation(metas);
    FeatureMap out;
    out.tensor = permute_submaps(merged, perm);
    out.metas.reserve(metas.size());
    out.origins.reserve(origins.size());
    for (int index : perm) {
        out.metas.push_back(metas[static_cast<size_t>(index)]);
        out.origins.push_back(origins[static_cast<size_t>(index)]);
    }
    return out;
}

void require_even_after_padding(const FeatureMap& x, int padding, const char* op) {
    if ((x.height() + 2 * padding) % 2 != 0 || (x.width() + 2 * padding) % 2 != 0)
        throw std::invalid_argument(std::string(op) + ": padded extent must be even, got " +
                                    std::to_string(x.height() + 2 * padding) + "x" +
                                    std::to_string(x.width() + 2 * padding));
}

std::vector<ChildSpec> checkered_children(CheckeredMode mode) {
    if (mode == CheckeredMode::standard)
        return {{0, 0, 0, 0}, {1, 1, 1, 1}};
    return {{0, 1, 0, 1}, {1, 0, 1, 0}};
}

std::vector<ChildSpec> complete_children() {
    return {{0, 0, 0, 0}, {0, 1, 0, 1}, {1, 0, 1, 0}, {1, 1, 1, 1}};
}

}  // namespace

FeatureMap make_feature_map(const Tensor& input_bchw) {
    const Shape& s = input_bchw.shape();
    if (s.size() != 4) throw std::invalid_argument("make_feature_map: expected (B, C, H, W)");
    FeatureMap fm;
    fm.tensor = reshape(input_bchw, {s[0], s[1], 1, s[2], s[3]});
    fm.metas = {SubmapMeta{0, 0, 1, s[2], s[3]}};
    fm.origins = {{0, 0}};
    return fm;
}

FeatureMap conv2d(const FeatureMap& x, const Tensor& weight, const Tensor& bias, int stride,
                  int padding, int dilation) {
    Tensor w = normalize_conv2d_weight(weight);
    FeatureMap out;
    out.tensor = conv5d(x.tensor, w, bias, stride, padding, dilation);
    int out_h = out.tensor.dim(3), out_w = out.tensor.dim(4);
    out.metas = x.metas;
    out.origins = x.origins;
    for (SubmapMeta& meta : out.metas) {
        meta.step_stride *= stride;
        meta.height = out_h;
        meta.width = out_w;
    }
    return out;
}

FeatureMap checkered_conv(const FeatureMap& x, const Tensor& weight, const Tensor& bias,
                          int padding, CheckeredMode mode) {
    require_even_after_padding(x, padding, "checkered_conv");
    Tensor w = normalize_conv2d_weight(weight);
    return multisample(x, checkered_children(mode),
                       [&](const Tensor& input) { return conv5d(input, w, bias, 2, padding, 1); });
}

FeatureMap checkered_conv_complement(const FeatureMap& x, const Tensor& weight, const Tensor& bias,
                                     int padding) {
    return checkered_conv(x, weight, bias, padding, CheckeredMode::complement);
}

FeatureMap complete_conv(const FeatureMap& x, const Tensor& weight, const Tensor& bias,
                         int padding) {
    require_even_after_padding(x, padding, "complete_conv");
    Tensor w = normalize_conv2d_weight(weight);
    return multisample(x, complete_children(),
                       [&](const Tensor& input) { return conv5d(input, w, bias, 2, padding, 1); });
}

FeatureMap maxpool(const FeatureMap& x, int kernel, int stride, int dilation) {
    FeatureMap out;
    out.tensor = maxpool_tensor(x.tensor, kernel, stride, dilation);
    int out_h = out.tensor.dim(3), out_w = out.tensor.dim(4);
    out.metas = x.metas;
    out.origins = x.origins;
    for (SubmapMeta& meta : out.metas) {
        meta.step_stride *= stride;
        meta.height = out_h;
        meta.width = out_w;
    }
    return out;
}

FeatureMap checkered_maxpool(const FeatureMap& x, int kernel, CheckeredMode mode) {
    require_even_after_padding(x, 0, "checkered_maxpool");
    return multisample(x, checkered_children(mode),
                       [&](const Tensor& input) { return maxpool_tensor(input, kernel, 2, 1); });
}

FeatureMap complete_maxpool(const FeatureMap& x, int kernel) {
    require_even_after_padding(x, 0, "complete_maxpool");
    return multisample(x, complete_children(),
                       [&](const Tensor& input) { return maxpool_tensor(input, kernel, 2, 1); });
}

FeatureMap batchnorm(const FeatureMap& x, const Tensor& gamma, const Tensor& beta, double eps,
                     double momentum, bool training, Tensor& running_mean, Tensor& running_var) {
    int batch = x.batch(), channels = x.channels(), submaps = x.submaps();
    int h = x.height(), w = x.width();
    if (gamma.numel() != channels || beta.numel() != channels ||
        running_mean.numel() != channels || running_var.numel() != channels)
        throw std::invalid_argument("batchnorm: parameter length != channel count " +
                                    std::to_string(channels));

    const int64_t plane = static_cast<int64_t>(submaps) * h * w;
    const int64_t reduce_n = static_cast<int64_t>(batch) * plane;
    const double* xd = x.tensor.data();
    auto x_index = [&](int b, int c, int64_t i) {
        return (static_cast<int64_t>(b) * channels + c) * plane + i;
    };

    std::vector<double> mean(static_cast<size_t>(channels), 0.0);
    std::vector<double> inv_std(static_cast<size_t>(channels), 0.0);
    if (training) {
        std::vector<double> var(static_cast<size_t>(channels), 0.0);
        for (int c = 0; c < channels; ++c) {
            double acc = 0.0;
            for (int b = 0; b < batch; ++b)
                for (int64_t i = 0; i < plane; ++i) acc += xd[x_index(b, c, i)];
            mean[static_cast<size_t>(c)] = acc / static_cast<double>(reduce_n);
            double sq = 0.0;
            for (int b = 0; b < batch; ++b)
                for (int64_t i = 0; i < plane; ++i) {
                    double delta = xd[x_index(b, c, i)] - mean[static_cast<size_t>(c)];
                    sq += delta * delta;
                }
            var[static_cast<size_t>(c)] = sq / static_cast<double>(reduce_n);
            inv_std[static_cast<size_t>(c)] = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + eps);
        }
        for (int c = 0; c < channels; ++c) {
            running_mean.data()[c] =
                (1.0 - momentum) * running_mean.data()[c] + momentum * mean[static_cast<size_t>(c)];
            running_var.data()[c] =
                (1.0 - momentum) * running_var.data()[c] + momentum * var[static_cast<size_t>(c)];
        }
    } else {
        for (int c = 0; c < channels; ++c) {
            mean[static_cast<size_t>(c)] = running_mean.data()[c];
            inv_std[static_cast<size_t>(c)] = 1.0 / std::sqrt(running_var.data()[c] + eps);
        }
    }

    std::vector<double> xhat(static_cast<size_t>(x.tensor.numel()));
    std::vector<double> out(static_cast<size_t>(x.tensor.numel()));
    const double* gd = gamma.data();
    const double* bd = beta.data();
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < channels; ++c)
            for (int64_t i = 0; i < plane; ++i) {
                int64_t xi = x_index(b, c, i);
                double norm = (xd[xi] - mean[static_cast<size_t>(c)]) * inv_std[static_cast<size_t>(c)];
                xhat[static_cast<size_t>(xi)] = norm;
                out[static_cast<size_t>(xi)] = gd[c] * norm + bd[c];
            }

    auto ix = x.tensor.impl_ptr();
    auto ig = gamma.impl_ptr();
    auto ibta = beta.impl_ptr();
    std::vector<double> gamma_vals(gamma.data(), gamma.data() + gamma.numel());
    FeatureMap result;
    result.tensor = make_node(
        x.tensor.shape(), std::move(out), {x.tensor, gamma, beta},
        [ix, ig, ibta, xhat = std::move(xhat), inv_std = std::move(inv_std),
         gamma_vals = std::move(gamma_vals), training, batch, channels, plane,
         reduce_n](const std::vector<double>& g) {
            ix->grad.resize(ix->data.size(), 0.0);
            ig->grad.resize(ig->data.size(), 0.0);
            ibta->grad.resize(ibta->data.size(), 0.0);
            auto x_index = [&](int b, int c, int64_t i) {
                return (static_cast<int64_t>(b) * channels + c) * plane + i;
            };
            for (int c = 0; c < channels; ++c) {
                double sum_g = 0.0, sum_gx = 0.0;
                for (int b = 0; b < batch; ++b)
                    for (int64_t i = 0; i < plane; ++i) {
                        int64_t xi = x_index(b, c, i);
                        sum_g += g[static_cast<size_t>(xi)];
                        sum_gx += g[static_cast<size_t>(xi)] * xhat[static_cast<size_t>(xi)];
                    }
                ibta->grad[static_cast<size_t>(c)] += sum_g;
                ig->grad[static_cast<size_t>(c)] += sum_gx;
                double gamma_istd = gamma_vals[static_cast<size_t>(c)] * inv_std[static_cast<size_t>(c)];
                if (training) {
                    double mean_g = sum_g / static_cast<double>(reduce_n);
                    double mean_gx = sum_gx / static_cast<double>(reduce_n);
                    for (int b = 0; b < batch; ++b)
                        for (int64_t i = 0; i < plane; ++i) {
                            int64_t xi = x_index(b, c, i);
                            ix->grad[static_cast<size_t>(xi)] +=
                                gamma_istd * (g[static_cast<size_t>(xi)] - mean_g -
                                              xhat[static_cast<size_t>(xi)] * mean_gx);
                        }
                } else {
                    for (int b = 0; b < batch; ++b)
                        for (int64_t i = 0; i < plane; ++i) {
                            int64_t xi = x_index(b, c, i);
                            ix->grad[static_cast<size_t>(xi)] += gamma_istd * g[static_cast<size_t>(xi)];
                        }
                }
            }
        });
    result.metas = x.metas;
    result.origins = x.origins;
    return result;
}

FeatureMap mean_over_submaps(const FeatureMap& x) {
    int batch = x.batch(), channels = x.channels(), submaps = x.submaps();
    int h = x.height(), w = x.width();
    int64_t plane = static_cast<int64_t>(h) * w;
    std::vector<double> out(static_cast<size_t>(batch) * channels * plane, 0.0);
    const double* xd = x.tensor.data();
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < channels; ++c)
            for (int m = 0; m < submaps; ++m) {
                const double* src =
                    xd + ((static_cast<int64_t>(b) * channels + c) * submaps + m) * plane;
                double* dst = out.data() + (static_cast<int64_t>(b) * channels + c) * plane;
                for (int64_t i = 0; i < plane; ++i) dst[i] += src[i];
            }
    double inv_m = 1.0 / submaps;
    for (double& v : out) v *= inv_m;

    auto ix = x.tensor.impl_ptr();
    FeatureMap result;
    result.tensor =
        make_node({batch, channels, 1, h, w}, std::move(out), {x.tensor},
                  [ix, batch, channels, submaps, plane, inv_m](const std::vector<double>& g) {
                      ix->grad.resize(ix->data.size(), 0.0);
                      for (int b = 0; b < batch; ++b)
                          for (int c = 0; c < channels; ++c)
                              for (int m = 0; m < submaps; ++m) {
                                  double* dst = ix->grad.data() +
                                                ((static_cast<int64_t>(b) * channels + c) * submaps +
                                                 m) *
                                                    plane;
                                  const double* src =
                                      g.data() + (static_cast<int64_t>(b) * channels + c) * plane;
                                  for (int64_t i = 0; i < plane; ++i) dst[i] += inv_m * src[i];
                              }
                  });
    int stride = x.metas.empty() ? 1 : x.metas.front().step_stride;
    result.metas = {SubmapMeta{0, 0, stride, h, w}};
    result.origins = {{0, 0}};
    return result;
}

Tensor global_pool3d(const FeatureMap& x, PoolMode mode) {
    int batch = x.batch(), channels = x.channels();
    int64_t volume = static_cast<int64_t>(x.submaps()) * x.height() * x.width();
    std::vector<double> out(static_cast<size_t>(batch) * channels);
    const double* xd = x.tensor.data();
    std::vector<int64_t> argmax;
    if (mode == PoolMode::max) argmax.resize(out.size());
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < channels; ++c) {
            const double* src = xd + (static_cast<int64_t>(b) * channels + c) * volume;
            size_t oi = static_cast<size_t>(b) * channels + c;
            if (mode == PoolMode::avg) {
                double acc = 0.0;
                for (int64_t i = 0; i < volume; ++i) acc += src[i];
                out[oi] = acc / static_cast<double>(volume);
            } else {
                int64_t best = 0;
                for (int64_t i = 1; i < volume; ++i)
                    if (src[i] > src[best]) best = i;
                out[oi] = src[best];
                argmax[oi] = (static_cast<int64_t>(b) * channels + c) * volume + best;
            }
        }
    auto ix = x.tensor.impl_ptr();
    if (mode == PoolMode::avg) {
        return make_node({batch, channels}, std::move(out), {x.tensor},
                         [ix, volume](const std::vector<double>& g) {
                             ix->grad.resize(ix->data.size(), 0.0);
                             double inv = 1.0 / static_cast<double>(volume);
                             for (size_t oi = 0; oi < g.size(); ++oi) {
                                 double go = g[oi] * inv;
                                 double* dst = ix->grad.data() + static_cast<int64_t>(oi) * volume;
                                 for (int64_t i = 0; i < volume; ++i) dst[i] += go;
                             }
                         });
    }
    return make_node({batch, channels}, std::move(out), {x.tensor},
                     [ix, argmax = std::move(argmax)](const std::vector<double>& g) {
                         ix->grad.resize(ix->data.size(), 0.0);
                         for (size_t oi = 0; oi < g.size(); ++oi)
                             ix->grad[static_cast<size_t>(argmax[oi])] += g[oi];
                     });
}

FeatureMap conv3d_submap(const FeatureMap& x, const Tensor& weight, const Tensor& bias,
                         int padding) {
    const Shape& ws = weight.shape();
    if (ws.size() != 5) throw std::invalid_argument("conv3d_submap: weight must be 5-d");
    int batch = x.batch(), in_channels = x.channels(), submaps = x.submaps();
    int h = x.height(), w = x.width();
    int out_channels = ws[0], km = ws[2], kh = ws[3], kw = ws[4];
    if (ws[1] != in_channels)
        throw std::invalid_argument("conv3d_submap: weight expects " + std::to_string(ws[1]) +
                                    " input channels, map has " + std::to_string(in_channels));
    if (km > submaps)
        throw std::invalid_argument("conv3d_submap: submap kernel extent " + std::to_string(km) +
                                    " exceeds submap count " + std::to_string(submaps));
    bool has_bias = bias.defined();
    int out_m = submaps - km + 1;
    int out_h = conv_extent(h, kh, 1, padding, 1);
    int out_w = conv_extent(w, kw, 1, padding, 1);

    std::vector<double> out(static_cast<size_t>(batch) * out_channels * out_m * out_h * out_w);
    const double* xd = x.tensor.data();
    const double* wd = weight.data();
    const double* bd = has_bias ? bias.data() : nullptr;
    auto x_index = [&](int b, int ci, int m, int ih, int iw) {
        return (((static_cast<int64_t>(b) * in_channels + ci) * submaps + m) * h + ih) * w + iw;
    };
    size_t o = 0;
    for (int b = 0; b < batch; ++b)
        for (int co = 0; co < out_channels; ++co)
            for (int mo = 0; mo < out_m; ++mo)
                for (int oh = 0; oh < out_h; ++oh)
                    for (int ow = 0; ow < out_w; ++ow, ++o) {
                        double acc = bd ? bd[co] : 0.0;
                        for (int ci = 0; ci < in_channels; ++ci)
                            for (int t = 0; t < km; ++t)
                                for (int u = 0; u < kh; ++u) {
                                    int ih = oh - padding + u;
                                    if (ih < 0 || ih >= h) continue;
                                    for (int v = 0; v < kw; ++v) {
                                        int iw = ow - padding + v;
                                        if (iw < 0 || iw >= w) continue;
                                        acc += xd[x_index(b, ci, mo + t, ih, iw)] *
                                               wd[(((static_cast<int64_t>(co) * in_channels + ci) *
                                                        km +
                                                    t) *
                                                       kh +
                                                   u) *
                                                      kw +
                                                  v];
                                    }
                                }
                        out[o] = acc;
                    }

    auto ix = x.tensor.impl_ptr();
    auto iw_ = weight.impl_ptr();
    auto ib = has_bias ? bias.impl_ptr() : nullptr;
    std::vector<Tensor> parents = {x.tensor, weight};
    if (has_bias) parents.push_back(bias);
    FeatureMap result;
    result.tensor = make_node(
        {batch, out_channels, out_m, out_h, out_w}, std::move(out), std::move(parents),
        [ix, iw_, ib, batch, in_channels, out_channels, submaps, h, w, km, kh, kw, out_m, out_h,
         out_w, padding](const std::vector<double>& g) {
            ix->grad.resize(ix->data.size(), 0.0);
            iw_->grad.resize(iw_->data.size(), 0.0);
            if (ib) ib->grad.resize(ib->data.size(), 0.0);
            auto x_index = [&](int b, int ci, int m, int ih, int iw) {
                return (((static_cast<int64_t>(b) * in_channels + ci) * submaps + m) * h + ih) * w +
                       iw;
            };
            size_t o = 0;
            for (int b = 0; b < batch; ++b)
                for (int co = 0; co < out_channels; ++co)
                    for (int mo = 0; mo < out_m; ++mo)
                        for (int oh = 0; oh < out_h; ++oh)
                            for (int ow = 0; ow < out_w; ++ow, ++o) {
                                double go = g[o];
                                if (go == 0.0) continue;
                                if (ib) ib->grad[static_cast<size_t>(co)] += go;
                                for (int ci = 0; ci < in_channels; ++ci)
                                    for (int t = 0; t < km; ++t)
                                        for (int u = 0; u < kh; ++u) {
                                            int ih = oh - padding + u;
                                            if (ih < 0 || ih >= h) continue;
                                            for (int v = 0; v < kw; ++v) {
                                                int iw = ow - padding + v;
                                                if (iw < 0 || iw >= w) continue;
                                                int64_t xi = x_index(b, ci, mo + t, ih, iw);
                                                int64_t wi =
                                                    (((static_cast<int64_t>(co) * in_channels + ci) *
                                                          km +
                                                      t) *
                                                         kh +
                                                     u) *
                                                        kw +
                                                    v;
                                                ix->grad[static_cast<size_t>(xi)] +=
                                                    iw_->data[static_cast<size_t>(wi)] * go;
                                                iw_->grad[static_cast<size_t>(wi)] +=
                                                    ix->data[static_cast<size_t>(xi)] * go;
                                            }
                                        }
                            }
        });
    result.metas.assign(x.metas.begin(), x.metas.begin() + out_m);
    result.origins.assign(x.origins.begin(), x.origins.begin() + out_m);
    for (SubmapMeta& meta : result.metas) {
        meta.height = out_h;
        meta.width = out_w;
    }
    return result;
}

FeatureMap relu(const FeatureMap& x) {
    FeatureMap out;
    out.tensor = relu(x.tensor);
    out.metas = x.metas;
    out.origins = x.origins;
    return out;
}

FeatureMap dropout(const FeatureMap& x, double rate, uint64_t seed, bool training) {
    FeatureMap out;
    out.tensor = dropout(x.tensor, rate, seed, training);
    out.metas = x.metas;
    out.origins = x.origins;
    return out;
}

}  // namespace ccnn
