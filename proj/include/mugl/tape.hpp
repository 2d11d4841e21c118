#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "mugl/kinematics.hpp"
#include "mugl/tensor.hpp"

namespace mugl {

class ParameterStore;
class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
    Tape* tape = nullptr;
    std::int32_t id = -1;

    const Tensor& val() const;
    bool valid() const { return tape != nullptr && id >= 0; }
};

/// Dynamic reverse-mode tape. Nodes are appended in execution order, so a
/// reverse sweep over ids is already topologically sorted. One tape per
/// forward pass; gradients of bound parameters are accumulated back into
/// their ParameterStore by backward().
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// New input node. Constants (requires_grad = false) never receive grads.
    Var leaf(Tensor value, bool requires_grad = false);

    /// Leaf carrying a copy of the store entry; after backward() the node's
    /// gradient is added into the store's accumulator.
    Var param(ParameterStore& store, int handle);

    const Tensor& value(Var v) const;
    const Tensor& grad(Var v) const;

    /// Reverse sweep from a scalar node (seeded with 1). Flushes parameter
    /// gradients into their stores.
    void backward(Var loss);

    std::size_t node_count() const { return nodes_.size(); }

    // --- internal plumbing used by the op layer ---
    // Backprop bodies receive the tape and their own node id (to read the
    // upstream gradient) at sweep time.
    using Backprop = std::function<void(Tape&, std::int32_t)>;
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        Backprop backprop; // empty for leaves
    };
    Var emit(Tensor value, bool requires_grad, Backprop backprop);
    Tensor& grad_buffer(std::int32_t id); // allocates zeros on first touch
    bool wants_grad(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    const Tensor& node_value(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].value; }

private:
    // Deque keeps value/grad references stable while new nodes are appended;
    // callers routinely hold `const Tensor&` across op emissions.
    std::deque<Node> nodes_;
    struct Binding {
        ParameterStore* store;
        int handle;
        std::int32_t node;
    };
    std::vector<Binding> bindings_;
};

// ---------------------------------------------------------------------------
// Op layer. All functions append nodes to the operands' tape and return the
// result handle. Shapes are validated up front; every op provides exact
// analytic gradients for all inputs that require them.
// ---------------------------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);

/// y = x W + b with x:(N,I), W:(I,O), b:(O).
Var affine(Var x, Var w, Var b);

/// x:(N,C,T), w:(O,C,K), b:(O). Output length floor((T + 2 pad - K)/stride)+1.
Var conv1d(Var x, Var w, Var b, int stride, int pad);

/// x:(N,C,H,W), w:(O,C,KH,KW), b:(O).
Var conv2d(Var x, Var w, Var b, int stride_h, int stride_w, int pad_h, int pad_w);

Var relu(Var x);
Var leaky_relu(Var x, double slope);
Var sigmoid(Var x);

/// Same storage, new shape (element count preserved).
Var reshape(Var x, std::vector<std::int64_t> shape);

/// (N,A,B) -> (N,B,A).
Var transpose_12(Var x);

/// Row-wise concatenation of (N,Di) blocks into (N, sum Di).
Var concat_cols(const std::vector<Var>& parts);

/// Columns [from, to) of an (N,D) matrix.
Var slice_cols(Var x, std::int64_t from, std::int64_t to);

/// y[n] = m[idx[n]] for m:(K,D); duplicated indices accumulate gradient.
Var gather_rows(Var m, std::vector<std::int64_t> idx);

/// (N,C,T) -> (N,C,factor*T) by repetition.
Var upsample_nearest_1d(Var x, int factor);

/// Running sum along the last axis.
Var cumsum_last(Var x);

/// Hard clamp; gradient passes only strictly inside (lo, hi).
Var clamp(Var x, double lo, double hi);

/// x plus a constant row broadcast over leading dimensions; row length must
/// equal the trailing dimension of x.
Var add_const_rows(Var x, Tensor row);

Var sum_all(Var x);

/// sum(mask (pred-target)^2) / sum(mask); zero-mask input yields zero loss.
Var masked_mse(Var pred, const Tensor& target, const Tensor& mask);

Var mse(Var pred, const Tensor& target);

/// Rows of six values -> rows of nine (row-major 3x3), Gram-Schmidt
/// orthonormalized with the third column completed by cross product.
Var rot6d_to_matrix_rows(Var x6);

/// rot:(M, J*9) row-major per-joint rotations -> (M, J*3) joint positions via
/// the per-joint bone recursion (root pinned at the origin).
Var fk_positions(Var rot9, const KinematicTree& tree, const RestPose& rest);

/// z = mu + exp(logvar/2) * eps with eps a constant draw.
Var gaussian_sample(Var mu, Var logvar, Tensor eps);

/// Diagonal-Gaussian KL to a per-row prior: sum over dims, mean over rows.
Var kl_gaussian(Var mu, Var logvar, Var prior_mu, Var prior_logvar);

/// Two 3x3 convs (pad 1) with the stride on the first, plus a skip that is a
/// strided 1x1 projection whenever channels or stride change; both the inner
/// and final activations are leaky.
struct ResBlock2dWeights {
    Var w1, b1, w2, b2;
    bool projected = false;
    Var wp, bp;
};
Var residual_conv2d_block(Var x, const ResBlock2dWeights& wts, int stride_h, int stride_w,
                          double slope);

} // namespace mugl
