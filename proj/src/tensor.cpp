#include "ccnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace ccnn {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << "(";
    for (size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
    out << ")";
    return out.str();
}

double next_uniform(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

Tensor Tensor::wrap(std::shared_ptr<TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    impl->data.assign(static_cast<size_t>(shape_numel(shape)), value);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return wrap(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
        throw std::invalid_argument("tensor: data length does not match shape " +
                                    shape_string(shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return wrap(std::move(impl));
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, std::mt19937_64& gen,
                       bool requires_grad) {
    std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
    for (double& v : data) v = lo + (hi - lo) * next_uniform(gen);
    return from_data(std::move(shape), std::move(data), requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

int Tensor::dim(int axis) const { return impl_->shape[static_cast<size_t>(axis)]; }

int64_t Tensor::numel() const { return static_cast<int64_t>(impl_->data.size()); }

double* Tensor::data() { return impl_->data.data(); }
const double* Tensor::data() const { return impl_->data.data(); }

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item: tensor is not scalar");
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw std::runtime_error("grad: no gradient present");
    return impl_->grad;
}

std::vector<double>& Tensor::grad_mut() {
    impl_->grad.resize(impl_->data.size(), 0.0);
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_) impl_->grad.assign(impl_->data.size(), 0.0);
}

Tensor Tensor::clone() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    impl->requires_grad = impl_->requires_grad;
    return wrap(std::move(impl));
}

// ---- backward -------------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be a defined scalar");

    // Deterministic post-order over parent edges.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    struct Frame {
        TensorImpl* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.impl(), 0});
    seen.insert(loss.impl());
    while (!stack.empty()) {
        Frame& frame = stack.back();
        if (frame.next_parent < frame.node->parents.size()) {
            TensorImpl* parent = frame.node->parents[frame.next_parent++].impl();
            if (seen.insert(parent).second) stack.push_back({parent, 0});
        } else {
            order.push_back(frame.node);
            stack.pop_back();
        }
    }

    for (TensorImpl* node : order) node->grad.assign(node->data.size(), 0.0);
    loss.impl()->grad[0] = 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = *it;
        if (node->backward_fn) node->backward_fn(node->grad);
    }
}

// ---- op helpers -----------------------------------------------------------

namespace {

Tensor make_node(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                 std::function<void(const std::vector<double>&)> backward_fn) {
    Tensor out = Tensor::from_data(std::move(shape), std::move(data));
    out.impl()->parents = std::move(parents);
    out.impl()->backward_fn = std::move(backward_fn);
    return out;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.data(), a.data() + a.numel());
    for (int64_t i = 0; i < b.numel(); ++i) out[static_cast<size_t>(i)] += b.data()[i];
    auto ia = a.impl_ptr(), ib = b.impl_ptr();
    return make_node(a.shape(), std::move(out), {a, b}, [ia, ib](const std::vector<double>& g) {
        ia->grad.resize(ia->data.size(), 0.0);
        ib->grad.resize(ib->data.size(), 0.0);
        for (size_t i = 0; i < g.size(); ++i) {
            ia->grad[i] += g[i];
            ib->grad[i] += g[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.data(), a.data() + a.numel());
    for (int64_t i = 0; i < b.numel(); ++i) out[static_cast<size_t>(i)] -= b.data()[i];
    auto ia = a.impl_ptr(), ib = b.impl_ptr();
    return make_node(a.shape(), std::move(out), {a, b}, [ia, ib](const std::vector<double>& g) {
        ia->grad.resize(ia->data.size(), 0.0);
        ib->grad.resize(ib->data.size(), 0.0);
        for (size_t i = 0; i < g.size(); ++i) {
            ia->grad[i] += g[i];
            ib->grad[i] -= g[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(static_cast<size_t>(a.numel()));
    for (int64_t i = 0; i < a.numel(); ++i) out[static_cast<size_t>(i)] = a.data()[i] * factor;
    auto ia = a.impl_ptr();
    return make_node(a.shape(), std::move(out), {a}, [ia, factor](const std::vector<double>& g) {
        ia->grad.resize(ia->data.size(), 0.0);
        for (size_t i = 0; i < g.size(); ++i) ia->grad[i] += factor * g[i];
    });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(static_cast<size_t>(a.numel()));
    for (int64_t i = 0; i < a.numel(); ++i)
        out[static_cast<size_t>(i)] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    auto ia = a.impl_ptr();
    return make_node(a.shape(), std::move(out), {a}, [ia](const std::vector<double>& g) {
        ia->grad.resize(ia->data.size(), 0.0);
        for (size_t i = 0; i < g.size(); ++i)
            if (ia->data[i] > 0.0) ia->grad[i] += g[i];
    });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) total += a.data()[i];
    auto ia = a.impl_ptr();
    return make_node({1}, {total}, {a}, [ia](const std::vector<double>& g) {
        ia->grad.resize(ia->data.size(), 0.0);
        for (double& v : ia->grad) v += g[0];
    });
}

Tensor weighted_sum(const Tensor& a, std::span<const double> projection) {
    if (static_cast<int64_t>(projection.size()) != a.numel())
        throw std::invalid_argument("weighted_sum: projection length mismatch");
    double total = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        total += a.data()[i] * projection[static_cast<size_t>(i)];
    auto ia = a.impl_ptr();
    std::vector<double> proj(projection.begin(), projection.end());
    return make_node({1}, {total}, {a}, [ia, proj = std::move(proj)](const std::vector<double>& g) {
        ia->grad.resize(ia->data.size(), 0.0);
        for (size_t i = 0; i < proj.size(); ++i) ia->grad[i] += proj[i] * g[0];
    });
}

Tensor reshape(const Tensor& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw std::invalid_argument("reshape: element count mismatch " +
                                    shape_string(a.shape()) + " -> " + shape_string(new_shape));
    std::vector<double> out(a.data(), a.data() + a.numel());
    auto ia = a.impl_ptr();
    return make_node(std::move(new_shape), std::move(out), {a},
                     [ia](const std::vector<double>& g) {
                         ia->grad.resize(ia->data.size(), 0.0);
                         for (size_t i = 0; i < g.size(); ++i) ia->grad[i] += g[i];
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (x.shape().size() != 2 || weight.shape().size() != 2)
        throw std::invalid_argument("linear: expected 2-d input and weight");
    int batch = x.dim(0), features = x.dim(1);
    int out_features = weight.dim(0);
    if (weight.dim(1) != features)
        throw std::invalid_argument("linear: weight expects " + std::to_string(weight.dim(1)) +
                                    " features, input has " + std::to_string(features));
    bool has_bias = bias.defined();
    if (has_bias && bias.numel() != out_features)
        throw std::invalid_argument("linear: bias length mismatch");

    std::vector<double> out(static_cast<size_t>(batch) * out_features, 0.0);
    for (int b = 0; b < batch; ++b)
        for (int o = 0; o < out_features; ++o) {
            double acc = has_bias ? bias.data()[o] : 0.0;
            const double* xrow = x.data() + static_cast<size_t>(b) * features;
            const double* wrow = weight.data() + static_cast<size_t>(o) * features;
            for (int f = 0; f < features; ++f) acc += xrow[f] * wrow[f];
            out[static_cast<size_t>(b) * out_features + o] = acc;
        }

    auto ix = x.impl_ptr(), iw = weight.impl_ptr();
    auto ib = has_bias ? bias.impl_ptr() : nullptr;
    std::vector<Tensor> parents = {x, weight};
    if (has_bias) parents.push_back(bias);
    return make_node({batch, out_features}, std::move(out), std::move(parents),
                     [ix, iw, ib, batch, features, out_features](const std::vector<double>& g) {
                         ix->grad.resize(ix->data.size(), 0.0);
                         iw->grad.resize(iw->data.size(), 0.0);
                         if (ib) ib->grad.resize(ib->data.size(), 0.0);
                         for (int b = 0; b < batch; ++b)
                             for (int o = 0; o < out_features; ++o) {
                                 double go = g[static_cast<size_t>(b) * out_features + o];
                                 if (go == 0.0) continue;
                                 if (ib) ib->grad[static_cast<size_t>(o)] += go;
                                 size_t xoff = static_cast<size_t>(b) * features;
                                 size_t woff = static_cast<size_t>(o) * features;
                                 for (int f = 0; f < features; ++f) {
                                     ix->grad[xoff + f] += iw->data[woff + f] * go;
                                     iw->grad[woff + f] += ix->data[xoff + f] * go;
                                 }
                             }
                     });
}

Tensor dropout(const Tensor& x, double rate, uint64_t seed, bool training) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("dropout: rate must be in [0, 1)");
    if (!training || rate == 0.0) {
        std::vector<double> out(x.data(), x.data() + x.numel());
        auto ix = x.impl_ptr();
        return make_node(x.shape(), std::move(out), {x}, [ix](const std::vector<double>& g) {
            ix->grad.resize(ix->data.size(), 0.0);
            for (size_t i = 0; i < g.size(); ++i) ix->grad[i] += g[i];
        });
    }
    std::mt19937_64 gen(seed);
    double keep = 1.0 - rate;
    std::vector<double> mask(static_cast<size_t>(x.numel()));
    for (double& m : mask) m = next_uniform(gen) < keep ? 1.0 / keep : 0.0;
    std::vector<double> out(static_cast<size_t>(x.numel()));
    for (int64_t i = 0; i < x.numel(); ++i)
        out[static_cast<size_t>(i)] = x.data()[i] * mask[static_cast<size_t>(i)];
    auto ix = x.impl_ptr();
    return make_node(x.shape(), std::move(out), {x},
                     [ix, mask = std::move(mask)](const std::vector<double>& g) {
                         ix->grad.resize(ix->data.size(), 0.0);
                         for (size_t i = 0; i < g.size(); ++i) ix->grad[i] += mask[i] * g[i];
                     });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    if (logits.shape().size() != 2)
        throw std::invalid_argument("softmax_cross_entropy: logits must be (B, K)");
    int batch = logits.dim(0), classes = logits.dim(1);
    if (static_cast<int>(labels.size()) != batch)
        throw std::invalid_argument("softmax_cross_entropy: label count mismatch");

    std::vector<double> softmax(static_cast<size_t>(batch) * classes);
    double loss = 0.0;
    for (int b = 0; b < batch; ++b) {
        const double* row = logits.data() + static_cast<size_t>(b) * classes;
        int label = labels[static_cast<size_t>(b)];
        if (label < 0 || label >= classes)
            throw std::invalid_argument("softmax_cross_entropy: label out of range");
        double peak = row[0];
        for (int k = 1; k < classes; ++k) peak = std::max(peak, row[k]);
        double denom = 0.0;
        for (int k = 0; k < classes; ++k) denom += std::exp(row[k] - peak);
        double lse = peak + std::log(denom);
        loss += lse - row[label];
        for (int k = 0; k < classes; ++k)
            softmax[static_cast<size_t>(b) * classes + k] = std::exp(row[k] - lse);
    }
    loss /= batch;

    auto il = logits.impl_ptr();
    std::vector<int> labels_copy(labels.begin(), labels.end());
    return make_node({1}, {loss}, {logits},
                     [il, softmax = std::move(softmax), labels_copy = std::move(labels_copy),
                      batch, classes](const std::vector<double>& g) {
                         il->grad.resize(il->data.size(), 0.0);
                         double scale = g[0] / batch;
                         for (int b = 0; b < batch; ++b)
                             for (int k = 0; k < classes; ++k) {
                                 size_t i = static_cast<size_t>(b) * classes + k;
                                 double delta = softmax[i] - (labels_copy[static_cast<size_t>(b)] == k ? 1.0 : 0.0);
                                 il->grad[i] += scale * delta;
                             }
                     });
}

std::vector<int> argmax_rows(const Tensor& logits) {
    int batch = logits.dim(0), classes = logits.dim(1);
    std::vector<int> out(static_cast<size_t>(batch));
    for (int b = 0; b < batch; ++b) {
        const double* row = logits.data() + static_cast<size_t>(b) * classes;
        int best = 0;
        for (int k = 1; k < classes; ++k)
            if (row[k] > row[best]) best = k;
        out[static_cast<size_t>(b)] = best;
    }
    return out;
}

}  // namespace ccnn
