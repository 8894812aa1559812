#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ccnn/feature_map.hpp"
#include "ccnn/tensor.hpp"

namespace ccnn {

enum class LayerKind {
    conv,
    checkered_conv,
    complete_conv,
    batchnorm,
    relu,
    maxpool,
    checkered_maxpool,
    complete_maxpool,
    dropout,
    mean_submaps,
    global_pool,
    linear,
};

struct Layer {
    LayerKind kind = LayerKind::relu;

    // conv family
    int out_channels = 0;
    int kernel = 1;
    int km = 1;  // submap kernel extent; > 1 means a 3D conv over submaps
    int stride = 1;
    int padding = 0;
    int dilation = 1;
    CheckeredMode cmode = CheckeredMode::standard;

    // batchnorm
    int channels = 0;
    double eps = 1e-5;
    double momentum = 0.1;

    // dropout
    double rate = 0.0;

    // global pool
    PoolMode pool_mode = PoolMode::avg;

    // linear
    int in_features = 0;
    int out_features = 0;

    // parameters and buffers
    Tensor weight, bias;
    Tensor gamma, beta;
    Tensor running_mean, running_var;
};

/// Ordered layer descriptors plus their parameter tensors. The parameter
/// count is a pure function of the descriptors.
struct LayerGraph {
    int in_channels = 1;
    std::vector<Layer> layers;
};

LayerGraph make_graph(int in_channels);

Layer& add_conv(LayerGraph& g, int out_channels, int kernel, int stride, int padding,
                int dilation = 1, int km = 1);
Layer& add_batchnorm(LayerGraph& g, double eps = 1e-5, double momentum = 0.1);
Layer& add_relu(LayerGraph& g);
Layer& add_maxpool(LayerGraph& g, int kernel, int stride, int dilation = 1);
Layer& add_dropout(LayerGraph& g, double rate);
Layer& add_mean_submaps(LayerGraph& g);
Layer& add_global_pool(LayerGraph& g, PoolMode mode);
Layer& add_linear(LayerGraph& g, int in_features, int out_features);

/// Fan-in scaled uniform initialization for every parameter, deterministic
/// in the seed. Batchnorm starts at gamma=1, beta=0, running stats (0, 1).
void init_params(LayerGraph& g, uint64_t seed);

/// Trainable parameter tensors in layer order (running stats excluded).
std::vector<Tensor> parameters(LayerGraph& g);
int64_t parameter_count(const LayerGraph& g);

struct ForwardTrace {
    std::vector<FeatureMap> activations;  // one per layer
};

/// Applies the layers in order and returns the final activation flattened
/// to (B, features). Dropout masks derive from `seed` and the layer index.
Tensor forward(LayerGraph& g, const FeatureMap& input, bool training, uint64_t seed = 0,
               ForwardTrace* trace = nullptr);

/// Replaces every stride-2 conv/pool with its checkered counterpart (the
/// same sampler on every submap) and inserts a mean_submaps before the
/// first linear layer when no submap reduction exists. Parameter tensors
/// are deep-copied, values unchanged.
LayerGraph convert_to_ccnn(const LayerGraph& g, CheckeredMode mode = CheckeredMode::standard);

/// Replaces stride-2 layers with complete multisampling (all four window
/// offsets kept).
LayerGraph convert_to_complete(const LayerGraph& g);

/// Stride-2 layers become stride-1 and the dilation (and padding) of every
/// following conv/pool doubles cumulatively; no submap dimension is used.
LayerGraph dilation_equivalent(const LayerGraph& g);

// ---- serialization ---------------------------------------------------------

/// Line-oriented text form, one layer per line
/// (`conv out=64 k=3 stride=2 pad=1 dil=1`, `bn c=64 eps=1e-05 mom=0.1`,
/// `relu`, `maxpool k=2 stride=2`, `mean_submaps`, `gpool3d mode=avg`,
/// `linear in=64 out=10`, `dropout p=0.2`), preceded by `input c=N`.
std::string save_graph_text(const LayerGraph& g);
LayerGraph load_graph_text(const std::string& text);

/// Little-endian binary blob with a length-prefixed tensor table holding
/// every parameter and buffer.
void save_params(const LayerGraph& g, std::ostream& out);
void load_params(LayerGraph& g, std::istream& in);
void save_params_file(const LayerGraph& g, const std::string& path);
void load_params_file(LayerGraph& g, const std::string& path);

}  // namespace ccnn
