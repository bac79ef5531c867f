#include "flowrl/nn.hpp"

#include <cmath>

#include "flowrl/errors.hpp"
#include "flowrl/mathutil.hpp"
#include "kernels.hpp"

namespace flowrl {

double gelu(double x) { return x * normal_cdf(x); }

MlpParams MlpParams::init(const std::vector<std::size_t>& dims, Rng& rng) {
    if (dims.size() < 2) throw ContractError("mlp init: need at least input and output dims");
    MlpParams p;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t in = dims[l], out = dims[l + 1];
        Layer layer;
        layer.w = Tensor::zeros({out, in});
        layer.b = Tensor::zeros({out});
        const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        for (double& v : layer.w.data) v = rng.uniform(-bound, bound);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

std::size_t MlpParams::in_dim() const { return layers.front().w.cols(); }
std::size_t MlpParams::out_dim() const { return layers.back().w.rows(); }

std::vector<std::size_t> MlpParams::dims() const {
    std::vector<std::size_t> d;
    d.push_back(in_dim());
    for (const Layer& l : layers) d.push_back(l.w.rows());
    return d;
}

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers) n += l.w.size() + l.b.size();
    return n;
}

void MlpParams::zero_grad() {
    for (Layer& l : layers) {
        l.w.zero_grad();
        l.b.zero_grad();
    }
}

void MlpParams::validate() const {
    if (layers.empty()) throw ShapeError("mlp: no layers");
    for (std::size_t l = 0; l + 1 < layers.size(); ++l)
        if (layers[l].w.rows() != layers[l + 1].w.cols())
            throw ShapeError("mlp: adjacent layer dims do not chain");
    for (const Layer& l : layers)
        if (l.b.size() != l.w.rows()) throw ShapeError("mlp: bias length != out dim");
}

void mlp_forward_rows(const MlpParams& params, const double* X, std::size_t rows, double* Y) {
    thread_local std::vector<double> buf_a, buf_b;
    const double* cur = X;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const Tensor& w = params.layers[l].w;
        const Tensor& b = params.layers[l].b;
        const std::size_t in = w.cols(), out = w.rows();
        const bool last = (l + 1 == params.layers.size());
        std::vector<double>& dst_buf = (l % 2 == 0) ? buf_a : buf_b;
        double* dst = last ? Y : (dst_buf.resize(rows * out), dst_buf.data());
        kernels::fill_rows(dst, rows, out, b.data.data());
        kernels::gemm_acc(cur, rows, in, kernels::transposed(w.data.data(), out, in), out, dst);
        if (!last)
            for (std::size_t i = 0; i < rows * out; ++i) dst[i] = gelu(dst[i]);
        cur = dst;
    }
}

Tensor mlp_forward(const MlpParams& params, const Tensor& input) {
    if (input.cols() != params.in_dim())
        throw ShapeError("mlp_forward: input dim does not match first layer");
    Tensor out = Tensor::zeros({input.rows(), params.out_dim()});
    mlp_forward_rows(params, input.data.data(), input.rows(), out.data.data());
    return out;
}

Tape::Id mlp_apply(Tape& tape, MlpParams& params, Tape::Id input, bool trainable) {
    if (tape.cols(input) != params.in_dim())
        throw ShapeError("mlp_apply: input dim does not match first layer");
    Tape::Id x = input;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        MlpParams::Layer& layer = params.layers[l];
        const Tape::Id w = trainable ? tape.param(layer.w) : tape.constant(layer.w);
        const Tape::Id b = trainable ? tape.param(layer.b) : tape.constant(layer.b);
        x = tape.linear(x, w, b);
        if (l + 1 < params.layers.size()) x = tape.gelu(x);
    }
    return x;
}

AdamState AdamState::init(const MlpParams& params, double lr) {
    AdamState s;
    s.lr = lr;
    s.m.assign(params.parameter_count(), 0.0);
    s.v.assign(params.parameter_count(), 0.0);
    return s;
}

void adam_step(AdamState& state, MlpParams& params) {
    if (state.m.size() != params.parameter_count())
        throw ShapeError("adam_step: state size does not match parameter count");
    // Validate all gradients before touching any parameter.
    for (MlpParams::Layer& l : params.layers) {
        if (!l.w.has_grad()) l.w.engage_grad();
        if (!l.b.has_grad()) l.b.engage_grad();
        if (!all_finite(l.w.grad) || !all_finite(l.b.grad))
            throw NumericError("adam_step: NaN/Inf gradient");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    std::size_t off = 0;
    auto update = [&](Tensor& t) {
        for (std::size_t i = 0; i < t.size(); ++i, ++off) {
            const double g = t.grad[i];
            state.m[off] = state.beta1 * state.m[off] + (1.0 - state.beta1) * g;
            state.v[off] = state.beta2 * state.v[off] + (1.0 - state.beta2) * g * g;
            const double mhat = state.m[off] / bc1;
            const double vhat = state.v[off] / bc2;
            t.data[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    };
    for (MlpParams::Layer& l : params.layers) {
        update(l.w);
        update(l.b);
    }
}

void ema_update(MlpParams& target, const MlpParams& online, double coeff) {
    if (coeff <= 0.0 || coeff > 1.0) throw ContractError("ema_update: coeff must be in (0, 1]");
    if (target.layers.size() != online.layers.size())
        throw ShapeError("ema_update: layer counts differ");
    for (std::size_t l = 0; l < target.layers.size(); ++l) {
        Tensor& tw = target.layers[l].w;
        Tensor& tb = target.layers[l].b;
        const Tensor& ow = online.layers[l].w;
        const Tensor& ob = online.layers[l].b;
        if (tw.shape != ow.shape || tb.shape != ob.shape)
            throw ShapeError("ema_update: layer shapes differ");
        for (std::size_t i = 0; i < tw.size(); ++i)
            tw.data[i] = (1.0 - coeff) * tw.data[i] + coeff * ow.data[i];
        for (std::size_t i = 0; i < tb.size(); ++i)
            tb.data[i] = (1.0 - coeff) * tb.data[i] + coeff * ob.data[i];
    }
}

}  // namespace flowrl
