#pragma once

#include <span>
#include <vector>

#include "flowrl/nn.hpp"
#include "flowrl/tape.hpp"
#include "flowrl/tensor.hpp"

namespace flowrl {

// Time-conditioned vector field v(t, condition, point) -> velocity, realized
// as an MLP over the concatenation [t, condition, point]. The time feature is
// clamped to [0,1] before every forward pass.
struct VectorFieldNet {
    MlpParams net;
    std::size_t cond_dim = 0;
    std::size_t point_dim = 0;

    static VectorFieldNet init(std::size_t cond_dim, std::size_t point_dim,
                               const std::vector<std::size_t>& hidden, Rng& rng);
    void validate() const;
};

// (1-t) * x0 + t * x1. Throws ContractError for t outside [0,1].
std::vector<double> interpolate(std::span<const double> x0, std::span<const double> x1, double t);

// ||v(t, cond, (1-t)x0 + t x1) - (x1 - x0)||^2 for a single sample.
double fm_loss(VectorFieldNet& field, std::span<const double> condition,
               std::span<const double> x0, std::span<const double> x1, double t);

// Batched flow-matching regression loss on the tape: mean over rows of the
// squared residual norm. t holds one time per row.
Tape::Id fm_loss_node(Tape& tape, VectorFieldNet& field, const Tensor& condition,
                      const Tensor& x0, const Tensor& x1, const Tensor& t, bool trainable = true);

// Record one field evaluation v(t, cond, x) on the tape.
Tape::Id field_apply_node(Tape& tape, VectorFieldNet& field, Tape::Id t_col, Tape::Id cond,
                          Tape::Id x, bool trainable);

// Fixed-step forward Euler from x0 at t=0: x += (1/n) v(k/n, cond, x).
// Pure with respect to the (frozen) field.
Tensor euler_sample(const VectorFieldNet& field, const Tensor& condition, const Tensor& x0,
                    int n_steps);
std::vector<double> euler_sample(const VectorFieldNet& field, std::span<const double> condition,
                                 std::span<const double> x0, int n_steps);

// Euler integration recorded on the tape; gradients flow through every step
// (used only where backprop-through-the-sampler is intended).
Tape::Id euler_sample_node(Tape& tape, VectorFieldNet& field, Tape::Id cond, Tape::Id x0,
                           int n_steps, bool trainable);

}  // namespace flowrl
