#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "flowrl/tensor.hpp"

namespace flowrl {

// Reverse-mode autodiff tape over row-major [rows, cols] buffers.
//
// A Tape is built per loss evaluation: record ops forward, call backward()
// on a scalar node, read gradients off the parameter tensors. Leaves point
// at external Tensors (no copy); op nodes own their buffers. Parameter
// leaves accumulate into Tensor::grad, so the caller zeroes grads between
// steps and several losses may share one tape.
class Tape {
public:
    using Id = int;

    // Leaves. param() dedupes: one node per underlying tensor.
    Id constant(const Tensor& t);       // referenced, not copied; no gradient
    Id constant_owned(Tensor t);        // copied into the tape
    Id param(Tensor& t);                // gradient accumulates into t.grad

    // y = x * W^T + b with x [B,in], W [out,in], b [out].
    Id linear(Id x, Id w, Id b);
    Id gelu(Id x);
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id scale(Id a, double s);
    Id add_scaled(Id a, Id b, double s);  // a + s*b
    Id concat_cols(std::span<const Id> parts);
    Id repeat_rows(Id a, std::size_t k);  // row b -> rows b*k .. b*k+k-1
    Id reshape(Id a, std::size_t rows, std::size_t cols);
    Id sort_rows(Id a);                   // ascending per row; backward unpermutes
    Id mean_all(Id a);                    // scalar

    // scalar: mean over rows of the squared row-difference norm
    Id squared_error_rows(Id pred, const Tensor& target);
    // scalar: mean over rows of (1/M^2) sum_ij rho^kappa_{tau_i}(target[b,j] - pred[b,i])
    Id quantile_huber_pairing(Id pred, const Tensor& targets, std::span<const double> levels,
                              double kappa);

    // Backpropagate from a scalar loss node. Throws ContractError if the node
    // is not 1x1.
    void backward(Id loss);

    const double* data(Id n) const { return nodes_[n].vdata; }
    std::size_t rows(Id n) const { return nodes_[n].rows; }
    std::size_t cols(Id n) const { return nodes_[n].cols; }
    double scalar(Id n) const;
    // Gradient buffer of a node after backward (empty span if none).
    std::span<const double> grad(Id n) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op {
        Const,
        Param,
        Linear,
        Gelu,
        Scale,
        AddScaled,
        ConcatCols,
        RepeatRows,
        Reshape,
        SortRows,
        MeanAll,
        SquaredErrorRows,
        QuantileHuberPairing,
    };

    struct Node {
        Op op;
        Id a = -1, b = -1, c = -1;
        double s = 0.0;
        std::size_t rows = 0, cols = 0;
        std::vector<double> value;   // owned storage for op nodes
        const double* vdata = nullptr;
        Tensor* pextern = nullptr;   // param leaf target
        bool needs_grad = false;
        std::vector<double> grad;
        std::vector<Id> multi;       // concat inputs
        std::vector<int> perm;       // sort permutation
        std::vector<double> aux_a;   // op-specific constants (targets)
        std::vector<double> aux_b;   // op-specific constants (levels)
    };

    Id push(Node n);
    Node& at(Id i) { return nodes_[i]; }

    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, Id> param_ids_;
};

}  // namespace flowrl
