#include "ccnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ccnn {

namespace {

// channel count flowing into layer `index`
int channels_before(const LayerGraph& g, size_t index) {
    for (size_t i = index; i-- > 0;) {
        const Layer& layer = g.layers[i];
        if (layer.kind == LayerKind::conv || layer.kind == LayerKind::checkered_conv ||
            layer.kind == LayerKind::complete_conv)
            return layer.out_channels;
        if (layer.kind == LayerKind::linear) return layer.out_features;
    }
    return g.in_channels;
}

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
    uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

LayerGraph make_graph(int in_channels) {
    if (in_channels < 1) throw std::invalid_argument("graph: in_channels must be >= 1");
    LayerGraph g;
    g.in_channels = in_channels;
    return g;
}

Layer& add_conv(LayerGraph& g, int out_channels, int kernel, int stride, int padding, int dilation,
                int km) {
    Layer layer;
    layer.kind = LayerKind::conv;
    layer.out_channels = out_channels;
    layer.kernel = kernel;
    layer.km = km;
    layer.stride = stride;
    layer.padding = padding;
    layer.dilation = dilation;
    g.layers.push_back(layer);
    return g.layers.back();
}

Layer& add_batchnorm(LayerGraph& g, double eps, double momentum) {
    Layer layer;
    layer.kind = LayerKind::batchnorm;
    layer.channels = channels_before(g, g.layers.size());
    layer.eps = eps;
    layer.momentum = momentum;
    g.layers.push_back(layer);
    return g.layers.back();
}

Layer& add_relu(LayerGraph& g) {
    Layer layer;
    layer.kind = LayerKind::relu;
    g.layers.push_back(layer);
    return g.layers.back();
}

Layer& add_maxpool(LayerGraph& g, int kernel, int stride, int dilation) {
    Layer layer;
    layer.kind = LayerKind::maxpool;
    layer.kernel = kernel;
    layer.stride = stride;
    layer.dilation = dilation;
    g.layers.push_back(layer);
    return g.layers.back();
}

Layer& add_dropout(LayerGraph& g, double rate) {
    Layer layer;
    layer.kind = LayerKind::dropout;
    layer.rate = rate;
    g.layers.push_back(layer);
    return g.layers.back();
}

Layer& add_mean_submaps(LayerGraph& g) {
    Layer layer;
    layer.kind = LayerKind::mean_submaps;
    g.layers.push_back(layer);
    return g.layers.back();
}

Layer& add_global_pool(LayerGraph& g, PoolMode mode) {
    Layer layer;
    layer.kind = LayerKind::global_pool;
    layer.pool_mode = mode;
    g.layers.push_back(layer);
    return g.layers.back();
}

Layer& add_linear(LayerGraph& g, int in_features, int out_features) {
    Layer layer;
    layer.kind = LayerKind::linear;
    layer.in_features = in_features;
    layer.out_features = out_features;
    g.layers.push_back(layer);
    return g.layers.back();
}

void init_params(LayerGraph& g, uint64_t seed) {
    for (size_t i = 0; i < g.layers.size(); ++i) {
        Layer& layer = g.layers[i];
        std::mt19937_64 gen(mix_seed(seed, i));
        switch (layer.kind) {
            case LayerKind::conv:
            case LayerKind::checkered_conv:
            case LayerKind::complete_conv: {
                int in_channels = channels_before(g, i);
                int fan_in = in_channels * layer.km * layer.kernel * layer.kernel;
                double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
                Shape wshape = layer.km > 1
                                   ? Shape{layer.out_channels, in_channels, layer.km, layer.kernel,
                                           layer.kernel}
                                   : Shape{layer.out_channels, in_channels, layer.kernel,
                                           layer.kernel};
                layer.weight = Tensor::uniform(wshape, -bound, bound, gen, true);
                layer.bias = Tensor::uniform({layer.out_channels}, -bound, bound, gen, true);
                break;
            }
            case LayerKind::batchnorm:
                layer.gamma = Tensor::full({layer.channels}, 1.0, true);
                layer.beta = Tensor::zeros({layer.channels}, true);
                layer.running_mean = Tensor::zeros({layer.channels});
                layer.running_var = Tensor::full({layer.channels}, 1.0);
                break;
            case LayerKind::linear: {
                double bound = 1.0 / std::sqrt(static_cast<double>(layer.in_features));
                layer.weight = Tensor::uniform({layer.out_features, layer.in_features}, -bound,
                                               bound, gen, true);
                layer.bias = Tensor::uniform({layer.out_features}, -bound, bound, gen, true);
                break;
            }
            default: break;
        }
    }
}

std::vector<Tensor> parameters(LayerGraph& g) {
    std::vector<Tensor> params;
    for (Layer& layer : g.layers) {
        if (layer.weight.defined()) params.push_back(layer.weight);
        if (layer.bias.defined()) params.push_back(layer.bias);
        if (layer.gamma.defined()) params.push_back(layer.gamma);
        if (layer.beta.defined()) params.push_back(layer.beta);
    }
    return params;
}

int64_t parameter_count(const LayerGraph& g) {
    int64_t count = 0;
    for (const Layer& layer : g.layers) {
        if (layer.weight.defined()) count += layer.weight.numel();
        if (layer.bias.defined()) count += layer.bias.numel();
        if (layer.gamma.defined()) count += layer.gamma.numel();
        if (layer.beta.defined()) count += layer.beta.numel();
    }
    return count;
}

Tensor forward(LayerGraph& g, const FeatureMap& input, bool training, uint64_t seed,
               ForwardTrace* trace) {
    if (input.channels() != g.in_channels)
        throw std::invalid_argument("forward: input has " + std::to_string(input.channels()) +
                                    " channels, graph expects " + std::to_string(g.in_channels));
    FeatureMap current = input;
    for (size_t i = 0; i < g.layers.size(); ++i) {
        Layer& layer = g.layers[i];
        try {
            switch (layer.kind) {
                case LayerKind::conv:
                    current = layer.km > 1
                                  ? conv3d_submap(current, layer.weight, layer.bias, layer.padding)
                                  : conv2d(current, layer.weight, layer.bias, layer.stride,
                                           layer.padding, layer.dilation);
                    break;
                case LayerKind::checkered_conv:
                    current = checkered_conv(current, layer.weight, layer.bias, layer.padding,
                                             layer.cmode);
                    break;
                case LayerKind::complete_conv:
                    current = complete_conv(current, layer.weight, layer.bias, layer.padding);
                    break;
                case LayerKind::batchnorm:
                    current = batchnorm(current, layer.gamma, layer.beta, layer.eps,
                                        layer.momentum, training, layer.running_mean,
                                        layer.running_var);
                    break;
                case LayerKind::relu: current = relu(current); break;
                case LayerKind::maxpool:
                    current = maxpool(current, layer.kernel, layer.stride, layer.dilation);
                    break;
                case LayerKind::checkered_maxpool:
                    current = checkered_maxpool(current, layer.kernel, layer.cmode);
                    break;
                case LayerKind::complete_maxpool:
                    current = complete_maxpool(current, layer.kernel);
                    break;
                case LayerKind::dropout:
                    current = dropout(current, layer.rate, mix_seed(seed, i), training);
                    break;
                case LayerKind::mean_submaps: current = mean_over_submaps(current); break;
                case LayerKind::global_pool: {
                    Tensor pooled = global_pool3d(current, layer.pool_mode);
                    FeatureMap fm;
                    fm.tensor = reshape(pooled, {pooled.dim(0), pooled.dim(1), 1, 1, 1});
                    fm.metas = {SubmapMeta{0, 0, 1, 1, 1}};
                    fm.origins = {{0, 0}};
                    current = fm;
                    break;
                }
                case LayerKind::linear: {
                    int features = current.channels() * current.submaps() * current.height() *
                                   current.width();
                    if (features != layer.in_features)
                        throw std::invalid_argument("expected " +
                                                    std::to_string(layer.in_features) +
                                                    " features, activation has " +
                                                    std::to_string(features));
                    Tensor flat = reshape(current.tensor, {current.batch(), features});
                    Tensor y = linear(flat, layer.weight, layer.bias);
                    FeatureMap fm;
                    fm.tensor = reshape(y, {y.dim(0), y.dim(1), 1, 1, 1});
                    fm.metas = {SubmapMeta{0, 0, 1, 1, 1}};
                    fm.origins = {{0, 0}};
                    current = fm;
                    break;
                }
            }
        } catch (const std::invalid_argument& err) {
            throw std::invalid_argument("layer " + std::to_string(i) + ": " + err.what());
        }
        if (trace) trace->activations.push_back(current);
    }
    int features = current.channels() * current.submaps() * current.height() * current.width();
    return reshape(current.tensor, {current.batch(), features});
}

namespace {

LayerGraph copy_graph(const LayerGraph& g) {
    LayerGraph out;
    out.in_channels = g.in_channels;
    out.layers = g.layers;
    for (Layer& layer : out.layers) {
        if (layer.weight.defined()) layer.weight = layer.weight.clone();
        if (layer.bias.defined()) layer.bias = layer.bias.clone();
        if (layer.gamma.defined()) layer.gamma = layer.gamma.clone();
        if (layer.beta.defined()) layer.beta = layer.beta.clone();
        if (layer.running_mean.defined()) layer.running_mean = layer.running_mean.clone();
        if (layer.running_var.defined()) layer.running_var = layer.running_var.clone();
    }
    return out;
}

bool reduces_submaps(const Layer& layer) {
    return layer.kind == LayerKind::mean_submaps || layer.kind == LayerKind::global_pool;
}

void insert_mean_before_classifier(LayerGraph& g) {
    for (size_t i = 0; i < g.layers.size(); ++i) {
        if (g.layers[i].kind != LayerKind::linear) continue;
        bool reduced = false;
        for (size_t j = 0; j < i; ++j) reduced = reduced || reduces_submaps(g.layers[j]);
        if (!reduced) {
            Layer mean;
            mean.kind = LayerKind::mean_submaps;
            g.layers.insert(g.layers.begin() + static_cast<std::ptrdiff_t>(i), mean);
        }
        return;
    }
}

void require_convertible(const Layer& layer, size_t index) {
    bool strided = layer.kind == LayerKind::conv || layer.kind == LayerKind::maxpool;
    if (strided && layer.stride != 1 && layer.stride != 2)
        throw std::runtime_error("convert: unsupported stride " + std::to_string(layer.stride) +
                                 " at layer " + std::to_string(index));
    if (layer.kind == LayerKind::conv && layer.km > 1 && layer.stride != 1)
        throw std::runtime_error("convert: unsupported strided 3D conv at layer " +
                                 std::to_string(index));
    if (layer.kind == LayerKind::checkered_conv || layer.kind == LayerKind::complete_conv ||
        layer.kind == LayerKind::checkered_maxpool || layer.kind == LayerKind::complete_maxpool)
        throw std::runtime_error("convert: layer " + std::to_string(index) +
                                 " is already multisampled");
}

}  // namespace

LayerGraph convert_to_ccnn(const LayerGraph& g, CheckeredMode mode) {
    LayerGraph out = copy_graph(g);
    for (size_t i = 0; i < out.layers.size(); ++i) {
        Layer& layer = out.layers[i];
        require_convertible(layer, i);
        if (layer.kind == LayerKind::conv && layer.stride == 2) {
            if (layer.dilation != 1)
                throw std::runtime_error("convert: unsupported dilated stride-2 conv at layer " +
                                         std::to_string(i));
            layer.kind = LayerKind::checkered_conv;
            layer.cmode = mode;
        } else if (layer.kind == LayerKind::maxpool && layer.stride == 2) {
            layer.kind = LayerKind::checkered_maxpool;
            layer.cmode = mode;
        }
    }
    insert_mean_before_classifier(out);
    return out;
}

LayerGraph convert_to_complete(const LayerGraph& g) {
    LayerGraph out = copy_graph(g);
    for (size_t i = 0; i < out.layers.size(); ++i) {
        Layer& layer = out.layers[i];
        require_convertible(layer, i);
        if (layer.kind == LayerKind::conv && layer.stride == 2) {
            if (layer.dilation != 1)
                throw std::runtime_error("convert: unsupported dilated stride-2 conv at layer " +
                                         std::to_string(i));
            layer.kind = LayerKind::complete_conv;
        } else if (layer.kind == LayerKind::maxpool && layer.stride == 2) {
            layer.kind = LayerKind::complete_maxpool;
        }
    }
    insert_mean_before_classifier(out);
    return out;
}

LayerGraph dilation_equivalent(const LayerGraph& g) {
    LayerGraph out = copy_graph(g);
    int factor = 1;
    for (size_t i = 0; i < out.layers.size(); ++i) {
        Layer& layer = out.layers[i];
        require_convertible(layer, i);
        if (layer.kind == LayerKind::conv) {
            if (layer.km > 1)
                throw std::runtime_error("convert: unsupported 3D conv at layer " +
                                         std::to_string(i));
            layer.dilation *= factor;
            layer.padding *= factor;
            if (layer.stride == 2) {
                layer.stride = 1;
                factor *= 2;
            }
        } else if (layer.kind == LayerKind::maxpool) {
            layer.dilation *= factor;
            if (layer.stride == 2) {
                layer.stride = 1;
                factor *= 2;
            }
        }
    }
    return out;
}

// ---- serialization ---------------------------------------------------------

namespace {

std::string format_double(double value) {
    std::ostringstream out;
    out.precision(17);
    out << value;
    return out.str();
}

const char* kind_word(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::checkered_conv: return "cconv";
        case LayerKind::complete_conv: return "completeconv";
        case LayerKind::batchnorm: return "bn";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::checkered_maxpool: return "cmaxpool";
        case LayerKind::complete_maxpool: return "completemaxpool";
        case LayerKind::dropout: return "dropout";
        case LayerKind::mean_submaps: return "mean_submaps";
        case LayerKind::global_pool: return "gpool3d";
        case LayerKind::linear: return "linear";
    }
    return "?";
}

}  // namespace

std::string save_graph_text(const LayerGraph& g) {
    std::ostringstream out;
    out << "input c=" << g.in_channels << "\n";
    for (const Layer& layer : g.layers) {
        out << kind_word(layer.kind);
        switch (layer.kind) {
            case LayerKind::conv:
                out << " out=" << layer.out_channels << " k=" << layer.kernel
                    << " stride=" << layer.stride << " pad=" << layer.padding
                    << " dil=" << layer.dilation;
                if (layer.km > 1) out << " km=" << layer.km;
                break;
            case LayerKind::checkered_conv:
            case LayerKind::complete_conv:
                out << " out=" << layer.out_channels << " k=" << layer.kernel
                    << " pad=" << layer.padding;
                if (layer.kind == LayerKind::checkered_conv)
                    out << " mode=" << (layer.cmode == CheckeredMode::standard ? 0 : 1);
                break;
            case LayerKind::batchnorm:
                out << " c=" << layer.channels << " eps=" << format_double(layer.eps)
                    << " mom=" << format_double(layer.momentum);
                break;
            case LayerKind::maxpool:
                out << " k=" << layer.kernel << " stride=" << layer.stride;
                if (layer.dilation != 1) out << " dil=" << layer.dilation;
                break;
            case LayerKind::checkered_maxpool:
                out << " k=" << layer.kernel
                    << " mode=" << (layer.cmode == CheckeredMode::standard ? 0 : 1);
                break;
            case LayerKind::complete_maxpool: out << " k=" << layer.kernel; break;
            case LayerKind::dropout: out << " p=" << format_double(layer.rate); break;
            case LayerKind::global_pool:
                out << " mode=" << (layer.pool_mode == PoolMode::avg ? "avg" : "max");
                break;
            case LayerKind::linear:
                out << " in=" << layer.in_features << " out=" << layer.out_features;
                break;
            default: break;
        }
        out << "\n";
    }
    return out.str();
}

namespace {

struct LineFields {
    std::string kind;
    std::vector<std::pair<std::string, std::string>> fields;

    std::string get(const std::string& key, std::optional<std::string> fallback = {}) const {
        for (const auto& [k, v] : fields)
            if (k == key) return v;
        if (fallback) return *fallback;
        throw std::invalid_argument("graph parse: missing field '" + key + "' for " + kind);
    }
};

LineFields split_line(const std::string& line, int line_number) {
    std::istringstream in(line);
    LineFields out;
    in >> out.kind;
    std::string token;
    while (in >> token) {
        auto eq = token.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("graph parse error at line " + std::to_string(line_number) +
                                        ": expected key=value, got '" + token + "'");
        out.fields.emplace_back(token.substr(0, eq), token.substr(eq + 1));
    }
    return out;
}

}  // namespace

LayerGraph load_graph_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    LayerGraph g;
    bool have_input = false;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        LineFields fields = split_line(line, line_number);
        if (fields.kind == "input") {
            g.in_channels = std::stoi(fields.get("c"));
            have_input = true;
            continue;
        }
        Layer layer;
        if (fields.kind == "conv") {
            layer.kind = LayerKind::conv;
            layer.out_channels = std::stoi(fields.get("out"));
            layer.kernel = std::stoi(fields.get("k"));
            layer.stride = std::stoi(fields.get("stride", "1"));
            layer.padding = std::stoi(fields.get("pad", "0"));
            layer.dilation = std::stoi(fields.get("dil", "1"));
            layer.km = std::stoi(fields.get("km", "1"));
        } else if (fields.kind == "cconv" || fields.kind == "completeconv") {
            layer.kind = fields.kind == "cconv" ? LayerKind::checkered_conv
                                                : LayerKind::complete_conv;
            layer.out_channels = std::stoi(fields.get("out"));
            layer.kernel = std::stoi(fields.get("k"));
            layer.padding = std::stoi(fields.get("pad", "0"));
            layer.stride = 2;
            layer.cmode = std::stoi(fields.get("mode", "0")) == 0 ? CheckeredMode::standard
                                                                  : CheckeredMode::complement;
        } else if (fields.kind == "bn") {
            layer.kind = LayerKind::batchnorm;
            layer.channels = std::stoi(fields.get("c"));
            layer.eps = std::stod(fields.get("eps", "1e-5"));
            layer.momentum = std::stod(fields.get("mom", "0.1"));
        } else if (fields.kind == "relu") {
            layer.kind = LayerKind::relu;
        } else if (fields.kind == "maxpool") {
            layer.kind = LayerKind::maxpool;
            layer.kernel = std::stoi(fields.get("k"));
            layer.stride = std::stoi(fields.get("stride"));
            layer.dilation = std::stoi(fields.get("dil", "1"));
        } else if (fields.kind == "cmaxpool" || fields.kind == "completemaxpool") {
            layer.kind = fields.kind == "cmaxpool" ? LayerKind::checkered_maxpool
                                                   : LayerKind::complete_maxpool;
            layer.kernel = std::stoi(fields.get("k"));
            layer.stride = 2;
            layer.cmode = std::stoi(fields.get("mode", "0")) == 0 ? CheckeredMode::standard
                                                                  : CheckeredMode::complement;
        } else if (fields.kind == "dropout") {
            layer.kind = LayerKind::dropout;
            layer.rate = std::stod(fields.get("p"));
        } else if (fields.kind == "mean_submaps") {
            layer.kind = LayerKind::mean_submaps;
        } else if (fields.kind == "gpool3d") {
            layer.kind = LayerKind::global_pool;
            std::string mode = fields.get("mode", "avg");
            if (mode != "avg" && mode != "max")
                throw std::invalid_argument("graph parse error at line " +
                                            std::to_string(line_number) + ": bad pool mode '" +
                                            mode + "'");
            layer.pool_mode = mode == "avg" ? PoolMode::avg : PoolMode::max;
        } else if (fields.kind == "linear") {
            layer.kind = LayerKind::linear;
            layer.in_features = std::stoi(fields.get("in"));
            layer.out_features = std::stoi(fields.get("out"));
        } else {
            throw std::invalid_argument("graph parse error at line " + std::to_string(line_number) +
                                        ": unknown layer '" + fields.kind + "'");
        }
        g.layers.push_back(layer);
    }
    if (!have_input) throw std::invalid_argument("graph parse: missing 'input c=N' line");
    return g;
}

// ---- parameter blob --------------------------------------------------------

namespace {

constexpr char kParamMagic[8] = {'C', 'C', 'N', 'N', 'P', 'R', 'M', '1'};

void write_u64(std::ostream& out, uint64_t value) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

void write_u32(std::ostream& out, uint32_t value) {
    unsigned char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

void write_f64(std::ostream& out, double value) {
    uint64_t bits;
    std::memcpy(&bits, &value, 8);
    write_u64(out, bits);
}

uint64_t read_u64(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw std::runtime_error("params: truncated stream");
    uint64_t value = 0;
    for (int i = 0; i < 8; ++i) value |= static_cast<uint64_t>(bytes[i]) << (8 * i);
    return value;
}

uint32_t read_u32(std::istream& in) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (!in) throw std::runtime_error("params: truncated stream");
    uint32_t value = 0;
    for (int i = 0; i < 4; ++i) value |= static_cast<uint32_t>(bytes[i]) << (8 * i);
    return value;
}

double read_f64(std::istream& in) {
    uint64_t bits = read_u64(in);
    double value;
    std::memcpy(&value, &bits, 8);
    return value;
}

struct NamedTensor {
    std::string name;
    Tensor* tensor;
};

// The table layout follows the descriptors, so a freshly parsed graph can
// receive parameters.
std::vector<NamedTensor> tensor_table(LayerGraph& g) {
    std::vector<NamedTensor> table;
    for (size_t i = 0; i < g.layers.size(); ++i) {
        Layer& layer = g.layers[i];
        std::string prefix = "layer" + std::to_string(i) + ".";
        switch (layer.kind) {
            case LayerKind::conv:
            case LayerKind::checkered_conv:
            case LayerKind::complete_conv:
            case LayerKind::linear:
                table.push_back({prefix + "weight", &layer.weight});
                table.push_back({prefix + "bias", &layer.bias});
                break;
            case LayerKind::batchnorm:
                table.push_back({prefix + "gamma", &layer.gamma});
                table.push_back({prefix + "beta", &layer.beta});
                table.push_back({prefix + "running_mean", &layer.running_mean});
                table.push_back({prefix + "running_var", &layer.running_var});
                break;
            default: break;
        }
    }
    return table;
}

}  // namespace

void save_params(const LayerGraph& g, std::ostream& out) {
    auto table = tensor_table(const_cast<LayerGraph&>(g));
    out.write(kParamMagic, 8);
    write_u64(out, table.size());
    for (const NamedTensor& entry : table) {
        if (!entry.tensor->defined())
            throw std::runtime_error("params: tensor '" + entry.name +
                                     "' is uninitialized; call init_params first");
        write_u64(out, entry.name.size());
        out.write(entry.name.data(), static_cast<std::streamsize>(entry.name.size()));
        const Shape& shape = entry.tensor->shape();
        write_u32(out, static_cast<uint32_t>(shape.size()));
        for (int d : shape) write_u64(out, static_cast<uint64_t>(d));
        for (int64_t i = 0; i < entry.tensor->numel(); ++i) write_f64(out, entry.tensor->data()[i]);
    }
    if (!out) throw std::runtime_error("params: write failed");
}

void load_params(LayerGraph& g, std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kParamMagic, 8) != 0)
        throw std::runtime_error("params: bad magic");
    uint64_t count = read_u64(in);
    auto table = tensor_table(g);
    if (count != table.size())
        throw std::runtime_error("params: table holds " + std::to_string(count) +
                                 " tensors, graph needs " + std::to_string(table.size()));
    for (NamedTensor& entry : table) {
        uint64_t name_len = read_u64(in);
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        if (!in || name != entry.name)
            throw std::runtime_error("params: expected tensor '" + entry.name + "', found '" +
                                     name + "'");
        uint32_t ndim = read_u32(in);
        Shape shape(ndim);
        for (uint32_t i = 0; i < ndim; ++i) shape[i] = static_cast<int>(read_u64(in));
        int64_t n = shape_numel(shape);
        std::vector<double> data(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) data[static_cast<size_t>(i)] = read_f64(in);
        bool trainable = name.find("running_") == std::string::npos;
        *entry.tensor = Tensor::from_data(std::move(shape), std::move(data), trainable);
    }
}

void save_params_file(const LayerGraph& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("params: cannot open '" + path + "' for writing");
    save_params(g, out);
}

void load_params_file(LayerGraph& g, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("params: cannot open '" + path + "'");
    load_params(g, in);
}

}  // namespace ccnn
