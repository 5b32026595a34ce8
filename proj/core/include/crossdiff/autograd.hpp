#pragma once

#include "crossdiff/common.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace crossdiff::ag {

// Reverse-mode autodiff over dense double matrices. Graphs are built
// dynamically per forward pass; parameters are leaf tensors whose gradients
// accumulate across backward calls until zero_grad.

struct Node {
    Mat value;
    Mat grad;  // allocated on first accumulation
    bool requires_grad = false;
    bool has_grad = false;
    std::uint64_t order = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    void accumulate(const Mat& g) {
        if (!requires_grad) return;
        if (!has_grad) {
            grad = g;
            has_grad = true;
        } else {
            grad += g;
        }
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor constant(Mat value);
    static Tensor variable(Mat value);  // leaf with requires_grad

    bool defined() const { return node_ != nullptr; }
    const Mat& value() const { return node_->value; }
    Mat& raw_value() { return node_->value; }  // in-place edits, finite differences
    int rows() const { return static_cast<int>(node_->value.rows()); }
    int cols() const { return static_cast<int>(node_->value.cols()); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const Mat& grad() const;
    void zero_grad();
    std::shared_ptr<Node> node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Thread-local graph recording switch.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev); }
};

// Backpropagate from a scalar (1x1) root.
void backward(const Tensor& root);

// --- primitive ops -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor add_rowwise(const Tensor& a, const Tensor& row);  // row is 1 x cols
Tensor cmul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);

Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor log_op(const Tensor& a);

Tensor softmax_rows(const Tensor& a);
Tensor layer_norm_rows(const Tensor& a, double eps = 1e-5);  // no learned affine

Tensor transpose(const Tensor& a);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, int first, int count);
Tensor slice_rows(const Tensor& a, int first, int count);

Tensor sum_all(const Tensor& a);   // 1x1
Tensor mean_all(const Tensor& a);  // 1x1
Tensor mean_cols(const Tensor& a);  // [N x D] -> [N x 1]
Tensor mean_rows(const Tensor& a);  // [N x D] -> [1 x D]

Tensor clamp(const Tensor& a, double lo, double hi);  // zero gradient outside

// Rows of src sampled at fractional positions by linear interpolation;
// differentiable in both src and pos. Positions are clipped to
// [0, rows-1] inside the op.
Tensor interp_rows(const Tensor& src, const Tensor& pos);

// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& a, double p, Rng& rng);

Tensor mse(const Tensor& a, const Tensor& b);  // mean squared difference, 1x1

}  // namespace crossdiff::ag
