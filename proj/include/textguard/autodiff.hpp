#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "textguard/tensor.hpp"

namespace textguard::autodiff {

using numeric::Tensor;

/// Handle to a node on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over rank-1/2 tensors. A fresh tape is built per
/// forward pass; ops record closures that scatter gradients back to
/// their parents in reverse creation order, so results are fully
/// deterministic. Every backward formula here is covered by a
/// finite-difference check in the test suite.
class Tape {
public:
    /// Constant leaf; gradients never flow into it.
    Var constant(Tensor value);

    /// Trainable leaf bound to external storage. Calling param twice
    /// with the same pointer returns the same node.
    Var param(Tensor* storage);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    /// (m x n) + bias row (n), broadcast over rows.
    Var add_row(Var a, Var bias);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    /// Elementwise product with a constant tensor of equal shape.
    Var mul_const(Var a, Tensor c);
    /// Row-wise scaling of an (m x n) node by a constant mask of length m.
    Var scale_rows(Var a, Tensor row_factors);

    Var sigmoid(Var a);
    Var tanh(Var a);
    Var relu(Var a);
    Var gelu(Var a);

    /// Per-row softmax over positions where mask is 1; masked entries
    /// come out exactly zero. Rows with an empty mask come out all zero.
    Var softmax_rows_masked(Var a, Tensor mask);

    /// Per-row normalization to zero mean / unit variance followed by
    /// gain and bias (both length n).
    Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-10);

    Var transpose(Var a);
    Var slice_rows(Var a, std::size_t r0, std::size_t r1);
    Var slice_cols(Var a, std::size_t c0, std::size_t c1);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);

    /// Embedding lookup: rows of a (V x d) table gathered by index.
    /// Backward scatter-adds, so duplicate indices accumulate.
    Var gather_rows(Var table, std::vector<std::size_t> indices);

    Var mean_all(Var a);

    /// Scalar BCE of probabilities against constant 0/1 targets, with
    /// the same clamping as numeric::binary_cross_entropy.
    Var bce_loss(Var probs, Tensor targets);

    const Tensor& value(Var v) const;
    const Tensor& grad(Var v);

    /// Runs reverse accumulation from a scalar node (size 1).
    void backward(Var loss);

    /// Gradient for a param leaf registered via param(); zero tensor if
    /// the parameter never influenced the loss.
    Tensor grad_for(const Tensor* storage);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool grad_alloc = false;
        std::function<void(Tape&, int)> back;
    };

    int push(Tensor value, bool requires_grad, std::function<void(Tape&, int)> back);
    void accumulate(int id, const Tensor& g);
    Tensor& grad_ref(int id);
    const Node& node(Var v) const;

    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, int> param_nodes_;
    bool ran_backward_ = false;
};

}  // namespace textguard::autodiff
