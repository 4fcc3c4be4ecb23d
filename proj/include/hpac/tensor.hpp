#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hpac/error.hpp"

namespace hpac {

struct TensorImpl;
using TensorNode = std::shared_ptr<TensorImpl>;

/// Dense n-dimensional array of f64 values, row-major, with an optional
/// reverse-mode record. Ops attach a backprop closure only when some input
/// requires gradients, so inference builds no graph.
struct TensorImpl {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until backward touches this node
    bool requires_grad = false;
    std::vector<TensorNode> parents;
    std::function<void(const TensorImpl&)> backprop;

    std::size_t size() const { return data.size(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(TensorNode impl) : impl_(std::move(impl)) {}

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor from_data(std::vector<int> shape, std::vector<double> values);
    static Tensor scalar(double value);
    /// Gradient-tracked leaf (a parameter or an attack buffer).
    static Tensor leaf(std::vector<int> shape, std::vector<double> values);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape[std::size_t(i)]; }
    int rank() const { return int(impl_->shape.size()); }
    std::size_t size() const { return impl_->data.size(); }
    double item() const;

    std::span<const double> values() const { return impl_->data; }
    std::span<double> mutable_values() { return impl_->data; }
    bool requires_grad() const { return impl_->requires_grad; }
    /// Gradient buffer; empty span if backward never reached this tensor.
    std::span<const double> grad() const { return impl_->grad; }
    void zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

    TensorNode node() const { return impl_; }

private:
    TensorNode impl_;
};

std::string shape_str(const std::vector<int>& shape);

// Element-wise and linear-algebra ops. All throw ShapeError on mismatch,
// naming the op and both shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& matrix, const Tensor& row);  // [R,C] + [C]
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor matmul(const Tensor& a, const Tensor& b);  // [R,K] x [K,C]
Tensor transpose(const Tensor& a);                // 2-D only

/// Length-preserving 1-D convolution with zero padding. Input [L, Cin],
/// kernels [w, Cin, Cout] with odd w; output [L, Cout].
Tensor conv1d_same(const Tensor& input, const Tensor& kernels);

/// Softmax over the last dimension. mask has last-dim length and broadcasts
/// over leading dimensions; masked-false positions get probability exactly 0,
/// and a fully masked row yields all zeros.
Tensor softmax_lastdim_masked(const Tensor& logits, std::span<const uint8_t> mask);

Tensor relu(const Tensor& a);
Tensor elu(const Tensor& a);
Tensor tanh(const Tensor& a);
/// Natural log with the argument clamped at 1e-12.
Tensor log(const Tensor& a);
Tensor pow_const(const Tensor& a, double exponent);

Tensor concat_lastdim(std::span<const Tensor> parts);
Tensor slice_lastdim(const Tensor& a, int start, int length);
Tensor stack_rows(std::span<const Tensor> rows);  // N tensors [C] -> [N,C]
Tensor slice_rows(const Tensor& a, int start, int length);
/// Zeroes rows of [L,C] where mask is false; identity elsewhere.
Tensor mask_rows(const Tensor& a, std::span<const uint8_t> mask);

Tensor sum(const Tensor& a);   // -> [1]
Tensor mean(const Tensor& a);  // -> [1]
Tensor reshape(const Tensor& a, std::vector<int> shape);

/// Rows of `table` ([V,d]) selected by id; ids outside [0,V) raise DomainError.
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);

/// out[r] = t[r][indices[r]] for [R,C] input; used to pick per-sample
/// true-class probabilities.
Tensor take_per_row(const Tensor& a, std::span<const int> indices);

/// Reverse-mode sweep from a scalar loss. Gradients of leaf tensors
/// accumulate across calls; interior nodes are recomputed each call.
void backward(const Tensor& loss);

}  // namespace hpac
