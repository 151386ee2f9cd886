#pragma once

#include <functional>
#include <vector>

#include "seqcomp/rng.hpp"
#include "seqcomp/tensor.hpp"

namespace seqcomp::num {

// Handle into a Graph's node tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Forward values are computed eagerly through the shared
// value-level kernels; each node stores a closure that scatters its output
// gradient into its parents. backward() walks the tape once in reverse, so a
// node's gradient is complete before it is consumed. Single-threaded by
// construction, which keeps every pass bitwise deterministic.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, int self)>;

    Var leaf(Tensor value, bool requires_grad);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_n(const std::vector<Var>& vs);
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var softmax_rows(Var a);
    Var layer_norm(Var x, Var gamma, Var beta);
    Var gelu(Var x);
    Var concat_rows(Var a, Var b);
    Var slice_rows(Var x, int row_begin, int row_end);
    Var concat_cols(Var a, Var b);
    Var reshape(Var x, std::vector<int> new_shape);
    Var add_row_broadcast(Var x, Var bias);
    Var gather(Var x, std::vector<int> indices, std::vector<int> out_shape);
    Var normalize_rows(Var x);
    Var reduce_sum(Var x);
    Var reduce_mean(Var x);
    Var sqrt(Var x);
    Var log(Var x);
    Var clamp_min(Var x, double floor);

    // Broadcast a single-element tensor s across x.
    Var add_scalar(Var x, Var s);
    Var sub_scalar(Var x, Var s);
    Var mul_scalar(Var x, Var s);
    Var div_scalar(Var x, Var s);

    // Inverted dropout; draws the mask immediately from rng. p = 0 is the
    // identity (no node inserted).
    Var dropout(Var x, double p, CounterRng& rng);

    // Mean of squared differences against a constant target.
    Var mse_against(Var pred, const Tensor& target);

    // Escape hatch for modules that own their backward rule (the
    // diversification loss registers its SVD-based gradient through this).
    Var custom(Tensor value, std::vector<Var> parents, BackwardFn back);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

    // Run reverse-mode from a single-element root.
    void backward(Var root);

    // Gradient of the last backward root with respect to v (zeros if v was
    // not reached).
    Tensor grad_of(Var v) const;

    // -- helpers for backward closures --
    std::vector<double>& grads(int id);
    const std::vector<double>& grad_ro(int id) const { return nodes_[id].grad; }
    const Tensor& val(int id) const { return nodes_[id].value; }
    bool needs(int id) const { return nodes_[id].requires_grad; }

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        std::vector<int> parents;
        BackwardFn back;
        bool requires_grad = false;
    };

    Var push(Tensor value, std::vector<int> parents, BackwardFn back);

    std::vector<Node> nodes_;
};

}  // namespace seqcomp::num
