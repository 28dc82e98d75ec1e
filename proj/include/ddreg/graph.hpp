#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ddreg/errors.hpp"

namespace ddreg::ad {

// Dense tensor shape, (batch, channels, x, y, z) with x fastest. Batch is
// carried for completeness; the pipeline runs batch 1 with gradient
// accumulation.
struct Shape {
    int n = 1, c = 1, x = 1, y = 1, z = 1;

    std::int64_t numel() const {
        return static_cast<std::int64_t>(n) * c * x * y * z;
    }
    std::int64_t spatial() const { return static_cast<std::int64_t>(x) * y * z; }
    bool operator==(const Shape&) const = default;
};

// One vertex of the reverse-mode tape. `backprop` scatters this node's grad
// into its parents' grads; it runs once, in reverse topological order.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // lazily allocated
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;
    bool requires_grad = false;
    const char* op = "";

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(const Shape& shape, const char* op);

// Leaf holding externally owned values (parameters); grads are read back by
// the owner after backward().
NodePtr leaf(const Shape& shape, const std::vector<double>& values, bool requires_grad, const char* op = "leaf");

// Constant input tensor (no gradient).
NodePtr constant(const Shape& shape, std::vector<double> values, const char* op = "const");

// Throws NumericError if any value is non-finite, naming the op.
void check_finite(const Node& n);

// Reverse pass from a scalar root. Seeds d(root)/d(root) = 1.
void backward(const NodePtr& root);

// ---- differentiable ops ----

// 3x3x3 cross-correlation, stride 1, zero padding 1 (shape preserving).
// kernel shape (out_c, in_c, 3, 3, 3), bias shape (out_c).
NodePtr conv3d(const NodePtr& x, const NodePtr& kernel, const NodePtr& bias);

NodePtr leaky_relu(const NodePtr& x, double slope);

// 2x2x2 max pooling, stride 2; spatial dims must be even.
NodePtr maxpool3d(const NodePtr& x);

// Nearest-neighbour x2 upsampling per spatial dim.
NodePtr upsample_nn(const NodePtr& x);

// Channel concatenation of tensors with identical spatial dims.
NodePtr concat_channels(const NodePtr& a, const NodePtr& b);

// Scalar projection sum(x * coeffs); the standard way to turn a tensor op
// into a scalar objective for gradient checks.
NodePtr weighted_sum(const NodePtr& x, const std::vector<double>& coeffs);

}  // namespace ddreg::ad
