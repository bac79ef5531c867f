#include "flowrl/flow.hpp"

#include <array>
#include <cmath>

#include "flowrl/errors.hpp"
#include "flowrl/mathutil.hpp"

namespace flowrl {

VectorFieldNet VectorFieldNet::init(std::size_t cond_dim, std::size_t point_dim,
                                    const std::vector<std::size_t>& hidden, Rng& rng) {
    VectorFieldNet f;
    f.cond_dim = cond_dim;
    f.point_dim = point_dim;
    std::vector<std::size_t> dims;
    dims.push_back(1 + cond_dim + point_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(point_dim);
    f.net = MlpParams::init(dims, rng);
    return f;
}

void VectorFieldNet::validate() const {
    net.validate();
    if (net.in_dim() != 1 + cond_dim + point_dim)
        throw ShapeError("vector field: input dim != 1 + cond + point");
    if (net.out_dim() != point_dim) throw ShapeError("vector field: output dim != point dim");
}

std::vector<double> interpolate(std::span<const double> x0, std::span<const double> x1, double t) {
    if (x0.size() != x1.size()) throw ShapeError("interpolate: endpoint dims differ");
    if (t < 0.0 || t > 1.0) throw ContractError("interpolate: t outside [0,1]");
    std::vector<double> xt(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) xt[i] = (1.0 - t) * x0[i] + t * x1[i];
    return xt;
}

namespace {

// Fill [t | cond | x] rows for a batched field forward.
void assemble_rows(double* dst, const double* t, const double* cond, std::size_t cond_dim,
                   const double* x, std::size_t point_dim, std::size_t rows) {
    const std::size_t width = 1 + cond_dim + point_dim;
    for (std::size_t i = 0; i < rows; ++i) {
        double* row = dst + i * width;
        row[0] = clamp(t[i], 0.0, 1.0);
        std::copy_n(cond + i * cond_dim, cond_dim, row + 1);
        std::copy_n(x + i * point_dim, point_dim, row + 1 + cond_dim);
    }
}

}  // namespace

double fm_loss(VectorFieldNet& field, std::span<const double> condition,
               std::span<const double> x0, std::span<const double> x1, double t) {
    if (condition.size() != field.cond_dim) throw ShapeError("fm_loss: condition dim");
    if (x0.size() != field.point_dim || x1.size() != field.point_dim)
        throw ShapeError("fm_loss: point dim");
    const std::vector<double> xt = interpolate(x0, x1, t);
    Tensor input = Tensor::zeros({1, 1 + field.cond_dim + field.point_dim});
    assemble_rows(input.data.data(), &t, condition.data(), field.cond_dim, xt.data(),
                  field.point_dim, 1);
    const Tensor v = mlp_forward(field.net, input);
    double s = 0.0;
    for (std::size_t i = 0; i < field.point_dim; ++i) {
        const double d = v.data[i] - (x1[i] - x0[i]);
        s += d * d;
    }
    return s;
}

Tape::Id fm_loss_node(Tape& tape, VectorFieldNet& field, const Tensor& condition, const Tensor& x0,
                      const Tensor& x1, const Tensor& t, bool trainable) {
    const std::size_t rows = condition.rows();
    if (x0.rows() != rows || x1.rows() != rows || t.rows() != rows)
        throw ShapeError("fm_loss: batch row counts differ");
    if (condition.cols() != field.cond_dim || x0.cols() != field.point_dim ||
        x1.cols() != field.point_dim || t.cols() != 1)
        throw ShapeError("fm_loss: column dims");
    for (double tv : t.data)
        if (tv < 0.0 || tv > 1.0) throw ContractError("fm_loss: t outside [0,1]");

    Tensor input = Tensor::zeros({rows, 1 + field.cond_dim + field.point_dim});
    Tensor target = Tensor::zeros({rows, field.point_dim});
    std::vector<double> xt(rows * field.point_dim);
    for (std::size_t i = 0; i < rows * field.point_dim; ++i) {
        xt[i] = (1.0 - t.data[i / field.point_dim]) * x0.data[i] +
                t.data[i / field.point_dim] * x1.data[i];
        target.data[i] = x1.data[i] - x0.data[i];
    }
    assemble_rows(input.data.data(), t.data.data(), condition.data.data(), field.cond_dim,
                  xt.data(), field.point_dim, rows);
    const Tape::Id in = tape.constant_owned(std::move(input));
    const Tape::Id v = mlp_apply(tape, field.net, in, trainable);
    return tape.squared_error_rows(v, target);
}

Tape::Id field_apply_node(Tape& tape, VectorFieldNet& field, Tape::Id t_col, Tape::Id cond,
                          Tape::Id x, bool trainable) {
    const std::array<Tape::Id, 3> parts = {t_col, cond, x};
    const Tape::Id in = tape.concat_cols(parts);
    return mlp_apply(tape, field.net, in, trainable);
}

Tensor euler_sample(const VectorFieldNet& field, const Tensor& condition, const Tensor& x0,
                    int n_steps) {
    if (n_steps < 1) throw ContractError("euler_sample: n_steps must be >= 1");
    const std::size_t rows = condition.rows();
    if (x0.rows() != rows) throw ShapeError("euler_sample: batch row counts differ");
    if (condition.cols() != field.cond_dim || x0.cols() != field.point_dim)
        throw ShapeError("euler_sample: column dims");

    Tensor x = x0;
    const double h = 1.0 / static_cast<double>(n_steps);
    std::vector<double> input(rows * (1 + field.cond_dim + field.point_dim));
    std::vector<double> vel(rows * field.point_dim);
    std::vector<double> tcol(rows);
    for (int k = 0; k < n_steps; ++k) {
        std::fill(tcol.begin(), tcol.end(), static_cast<double>(k) * h);
        assemble_rows(input.data(), tcol.data(), condition.data.data(), field.cond_dim,
                      x.data.data(), field.point_dim, rows);
        mlp_forward_rows(field.net, input.data(), rows, vel.data());
        for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += h * vel[i];
    }
    return x;
}

std::vector<double> euler_sample(const VectorFieldNet& field, std::span<const double> condition,
                                 std::span<const double> x0, int n_steps) {
    Tensor cond = Tensor::row({condition.begin(), condition.end()});
    Tensor start = Tensor::row({x0.begin(), x0.end()});
    return euler_sample(field, cond, start, n_steps).data;
}

Tape::Id euler_sample_node(Tape& tape, VectorFieldNet& field, Tape::Id cond, Tape::Id x0,
                           int n_steps, bool trainable) {
    if (n_steps < 1) throw ContractError("euler_sample: n_steps must be >= 1");
    const std::size_t rows = tape.rows(cond);
    const double h = 1.0 / static_cast<double>(n_steps);
    Tape::Id x = x0;
    for (int k = 0; k < n_steps; ++k) {
        Tensor tcol = Tensor::zeros({rows, 1});
        std::fill(tcol.data.begin(), tcol.data.end(), static_cast<double>(k) * h);
        const Tape::Id t_node = tape.constant_owned(std::move(tcol));
        const Tape::Id v = field_apply_node(tape, field, t_node, cond, x, trainable);
        x = tape.add_scaled(x, v, h);
    }
    return x;
}

}  // namespace flowrl
