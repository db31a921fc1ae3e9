#pragma once

#include <functional>
#include <vector>

#include "enroll/rng.h"
#include "enroll/tensor.h"

namespace enroll {

// Handle to a tape node.
struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

// Reverse-mode gradient tape. Primitives record forward results plus a
// closure that pushes gradients back to their parents; replaying the tape
// from the loss node down yields exact gradients for every leaf touched in
// the forward pass. One tape per training batch, single writer.
class Tape {
  public:
    Var leaf(Tensor t);

    const Tensor& val(Var v) const { return nodes_[static_cast<size_t>(v.idx)].value; }
    Tensor& grad(Var v) { return nodes_[static_cast<size_t>(v.idx)].grad; }
    const Tensor& grad(Var v) const { return nodes_[static_cast<size_t>(v.idx)].grad; }
    size_t size() const { return nodes_.size(); }

    // y = W·x + b for a vector x. The building block behind every affine
    // transform in the model.
    Var affine(Var x, Var w, Var b);
    Var matvec(Var w, Var x);         // {m,n}·{n} -> {m}
    Var matmul(Var a, Var b);         // {M,K}·{K,N} -> {M,N}
    Var matmul_nt(Var a, Var b);      // {M,K}·{N,K}ᵀ -> {M,N}
    Var linear(Var x, Var w, Var b);  // row-wise affine: {M,n},{m,n},{m} -> {M,m}
    Var transpose(Var a);

    Var add(Var a, Var b);  // elementwise, same shape
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);

    Var relu(Var a);
    Var sigmoid(Var a);
    Var softmax(Var a);      // rank-1, max-subtracted
    Var row_softmax(Var a);  // rank-2, softmax per row

    Var concat(const std::vector<Var>& parts);  // rank-1 concat
    Var concat_cols(Var a, Var b);              // {M,p},{M,q} -> {M,p+q}
    Var stack_rows(const std::vector<Var>& rows);
    Var gather_rows(Var table, std::vector<size_t> rows);
    Var row(Var table, size_t r);
    Var mean_rows(Var a);  // {M,N} -> {N}
    Var sum_rows(Var a);   // {M,N} -> {N}, the sum of the row vectors
    Var sum(Var a);        // any shape -> {1}, sum of all entries

    // Inverted dropout; identity when rate == 0.
    Var dropout(Var a, Rng& rng, double rate);

    // -ln(pred[gold]) with the probability floored at 1e-12. probs rank-1.
    Var cross_entropy(Var probs, size_t gold);
    // Mean binary cross-entropy over logits, numerically fused.
    Var bce_logits_mean(Var logits, Tensor targets);

    void backward(Var loss);

    // Smallest |input| a relu node has seen on this tape. Gradient-check
    // harnesses use it to reject draws that sit on a kink.
    double min_abs_relu_input() const { return min_abs_relu_input_; }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> backward;
    };

    Var push(Tensor value, std::function<void(Tape&)> backward);
    std::vector<Node> nodes_;
    double min_abs_relu_input_ = 1e300;
};

}  // namespace enroll
