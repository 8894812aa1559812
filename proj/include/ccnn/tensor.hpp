#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ccnn {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor;

/// Node payload shared by tensor handles. Gradients are accumulated into
/// `grad` during backward(); `parents` and `backward_fn` describe the
/// recorded forward operation.
struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until backward() reaches this node
    std::vector<Tensor> parents;
    // Accumulates into the parents' grads given this node's grad.
    std::function<void(const std::vector<double>& grad_out)> backward_fn;
};

/// Shared-handle n-dimensional array of 64-bit floats participating in
/// reverse-mode differentiation. Copying a Tensor copies the handle.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    /// Fan-in style uniform fill from a caller-owned generator; draws are
    /// platform-independent.
    static Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& gen,
                          bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    int dim(int axis) const;
    int64_t numel() const;

    double* data();
    const double* data() const;
    double item() const;  // numel() == 1 only

    bool requires_grad() const;
    void set_requires_grad(bool value);

    bool has_grad() const;
    const std::vector<double>& grad() const;
    std::vector<double>& grad_mut();
    void zero_grad();

    /// Deep copy of the values; drops graph edges, keeps requires_grad.
    Tensor clone() const;

    /// Handle identity (same underlying node).
    bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

    TensorImpl* impl() const { return impl_.get(); }
    std::shared_ptr<TensorImpl> impl_ptr() const { return impl_; }

    static Tensor wrap(std::shared_ptr<TensorImpl> impl);

private:
    std::shared_ptr<TensorImpl> impl_;
};

/// Reverse-mode sweep from a scalar loss. Gradients of every node reachable
/// through parent edges are (re)computed; accumulation order is fixed by a
/// deterministic topological sort.
void backward(const Tensor& loss);

// ---- elementwise / reduction ops -----------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);
/// sum_i a_i * projection_i, as a scalar node (projection is a constant).
Tensor weighted_sum(const Tensor& a, std::span<const double> projection);
Tensor reshape(const Tensor& a, Shape new_shape);

/// y = x @ weight^T + bias; x is (B, F), weight (O, F), bias (O) or empty.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Inverted dropout with a platform-independent seeded mask; identity when
/// not training or rate == 0.
Tensor dropout(const Tensor& x, double rate, uint64_t seed, bool training);

/// Mean softmax cross-entropy over rows of logits (B, K).
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Row-wise argmax of a (B, K) tensor; plain values, no graph.
std::vector<int> argmax_rows(const Tensor& logits);

/// Uniform double in [0, 1) built from the top 53 bits of the generator,
/// identical across platforms.
double next_uniform(std::mt19937_64& gen);

}  // namespace ccnn
