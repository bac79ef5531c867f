#pragma once

#include <cstddef>
#include <vector>

#include "flowrl/rng.hpp"
#include "flowrl/tape.hpp"
#include "flowrl/tensor.hpp"

namespace flowrl {

// Exact GELU, x * Phi(x) with the Gaussian CDF (not the tanh approximation).
double gelu(double x);

// Dense MLP parameters: weight [out,in] and bias [out] per layer, GELU on
// hidden layers, identity output.
struct MlpParams {
    struct Layer {
        Tensor w;
        Tensor b;
    };
    std::vector<Layer> layers;

    // dims = {in, hidden..., out}; Glorot-uniform weights, zero biases.
    static MlpParams init(const std::vector<std::size_t>& dims, Rng& rng);

    std::size_t in_dim() const;
    std::size_t out_dim() const;
    std::vector<std::size_t> dims() const;
    std::size_t parameter_count() const;

    void zero_grad();

    // Checks layer dimension chaining; throws ShapeError.
    void validate() const;
};

// Batched forward pass on frozen parameters. input [rows, in] -> [rows, out].
Tensor mlp_forward(const MlpParams& params, const Tensor& input);

// Raw-buffer variant for hot loops; Y must hold rows * out_dim doubles.
void mlp_forward_rows(const MlpParams& params, const double* X, std::size_t rows, double* Y);

// Record the forward pass on a tape. With trainable=false the parameters
// enter as constants and receive no gradient.
Tape::Id mlp_apply(Tape& tape, MlpParams& params, Tape::Id input, bool trainable);

// Adam with bias correction.
struct AdamState {
    std::size_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState init(const MlpParams& params, double lr);
};

// One Adam update from the gradients stored on the parameter tensors.
// NaN/Inf in any gradient throws NumericError with parameters untouched.
void adam_step(AdamState& state, MlpParams& params);

// target <- (1 - coeff) * target + coeff * online, elementwise.
void ema_update(MlpParams& target, const MlpParams& online, double coeff);

}  // namespace flowrl
