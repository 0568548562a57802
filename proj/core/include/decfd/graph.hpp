#pragma once

#include <cstddef>
#include <functional>
#include <unordered_map>
#include <span>
#include <vector>

#include "decfd/tensor.hpp"

namespace decfd::nn {

using NodeId = std::size_t;

/// Reverse-mode tape. Ops execute eagerly and record a backward closure;
/// backward() replays closures in reverse creation order (a valid topological
/// order by construction) and accumulates gradients into bound Params.
///
/// A Graph is single-threaded for the duration of one forward+backward pass.
class Graph {
public:
    // ---- leaves ----

    /// Constant input. Receives a gradient buffer but nothing reads it.
    NodeId input(Tensor t);

    /// Parameter leaf. After backward(), the node gradient is added onto
    /// p.grad, so gradients accumulate across graphs until zero_grad().
    /// Repeated calls for the same Param within one graph share a node.
    NodeId param(Param& p);

    // ---- elementwise ----
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId scale(NodeId x, double c);
    NodeId add_scalar(NodeId x, double c);
    NodeId neg(NodeId x) { return scale(x, -1.0); }

    /// Multiply every element of x by a scalar-valued node s.
    NodeId scale_by(NodeId x, NodeId s);

    NodeId exp(NodeId x);
    NodeId log(NodeId x);
    NodeId sqrt(NodeId x);
    NodeId square(NodeId x);
    NodeId relu(NodeId x);
    NodeId tanh(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId softplus(NodeId x);

    /// Clamp to [lo, hi]; gradient passes only where lo <= x <= hi.
    NodeId clamp(NodeId x, double lo, double hi);

    // ---- softmax family (max-subtracted for stability) ----
    NodeId softmax(NodeId x);       // rank-1
    NodeId softmax_rows(NodeId x);  // rank-2, per row
    NodeId log_softmax(NodeId x);   // rank-1
    NodeId log_softmax_rows(NodeId x);

    // ---- linear algebra ----

    /// W[m x n] * x[n] + b[m].
    NodeId affine(NodeId x, NodeId W, NodeId b);

    /// X[r x n] * W^T[n x m] + b[m] broadcast over rows.
    NodeId affine_rows(NodeId X, NodeId W, NodeId b);

    NodeId matmul(NodeId A, NodeId B);     // [m x k] * [k x n]
    NodeId matmul_nt(NodeId A, NodeId B);  // [m x k] * [n x k]^T
    NodeId matvec(NodeId M, NodeId v);     // [m x n] * [n]

    // ---- structure ----
    NodeId gather_rows(NodeId M, std::vector<std::size_t> rows);
    NodeId row(NodeId M, std::size_t r);
    NodeId slice_cols(NodeId M, std::size_t col0, std::size_t n);
    NodeId concat(NodeId a, NodeId b);       // rank-1
    NodeId concat_cols(NodeId A, NodeId B);  // rank-2, equal row counts
    NodeId repeat_row(NodeId v, std::size_t n);
    NodeId row_sums(NodeId M);  // [r x c] -> [r]

    // ---- reductions ----
    NodeId sum(NodeId x);
    NodeId mean(NodeId x);
    NodeId dot(NodeId a, NodeId b);
    /// sum_i w[i] * x[i] with constant weights.
    NodeId weighted_sum(NodeId x, Tensor w);

    // ---- fused ----
    NodeId layer_norm_rows(NodeId X, NodeId gain, NodeId bias, double eps);

    /// Numerically stable binary cross-entropy on a logit:
    /// softplus(logit) - target * logit, gradient sigmoid(logit) - target.
    NodeId bce_with_logits(NodeId logit, double target);

    // ---- execution ----
    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
    void backward(NodeId root);
    std::size_t num_nodes() const { return nodes_.size(); }
    void clear();

    /// When enabled, every new node value is scanned for NaN/Inf. Defaults
    /// to on in debug builds, off in release.
    static void set_value_checks(bool enabled);
    static bool value_checks();

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Graph&)> back;  // empty for leaves
    };

    std::vector<Node> nodes_;
    std::vector<std::pair<NodeId, Param*>> bindings_;
    std::unordered_map<const Param*, NodeId> param_nodes_;

    NodeId emplace(Tensor value, std::function<void(Graph&)> back);
    Tensor& grad_buf(NodeId id);
    double* grad_data(NodeId id) { return grad_buf(id).data(); }
};

}  // namespace decfd::nn
