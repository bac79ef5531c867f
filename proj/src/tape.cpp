#include "flowrl/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowrl/errors.hpp"
#include "flowrl/mathutil.hpp"
#include "kernels.hpp"

namespace flowrl {

namespace {

inline double gelu_fwd(double x) { return x * normal_cdf(x); }
inline double gelu_bwd(double x) { return normal_cdf(x) + x * normal_pdf(x); }

}  // namespace

Tape::Id Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::constant(const Tensor& t) {
    Node n;
    n.op = Op::Const;
    n.rows = t.rows();
    n.cols = t.cols();
    n.vdata = t.data.data();
    return push(std::move(n));
}

Tape::Id Tape::constant_owned(Tensor t) {
    Node n;
    n.op = Op::Const;
    n.rows = t.rows();
    n.cols = t.cols();
    n.value = std::move(t.data);
    n.vdata = n.value.data();
    return push(std::move(n));
}

Tape::Id Tape::param(Tensor& t) {
    auto it = param_ids_.find(&t);
    if (it != param_ids_.end()) return it->second;
    Node n;
    n.op = Op::Param;
    n.rows = t.rows();
    n.cols = t.cols();
    n.vdata = t.data.data();
    n.pextern = &t;
    n.needs_grad = true;
    Id id = push(std::move(n));
    param_ids_.emplace(&t, id);
    return id;
}

Tape::Id Tape::linear(Id x, Id w, Id b) {
    const Node& nx = nodes_[x];
    const Node& nw = nodes_[w];
    const Node& nb = nodes_[b];
    const std::size_t in = nw.cols, out = nw.rows;
    if (nx.cols != in) throw ShapeError("linear: input cols != weight in-dim");
    if (nb.rows * nb.cols != out) throw ShapeError("linear: bias length != weight out-dim");
    Node n;
    n.op = Op::Linear;
    n.a = x;
    n.b = w;
    n.c = b;
    n.rows = nx.rows;
    n.cols = out;
    n.value.resize(n.rows * out);
    kernels::fill_rows(n.value.data(), n.rows, out, nb.vdata);
    kernels::gemm_acc(nx.vdata, n.rows, in, kernels::transposed(nw.vdata, out, in), out,
                      n.value.data());
    n.vdata = n.value.data();
    n.needs_grad = nx.needs_grad || nw.needs_grad || nb.needs_grad;
    return push(std::move(n));
}

Tape::Id Tape::gelu(Id x) {
    const Node& nx = nodes_[x];
    Node n;
    n.op = Op::Gelu;
    n.a = x;
    n.rows = nx.rows;
    n.cols = nx.cols;
    n.value.resize(n.rows * n.cols);
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = gelu_fwd(nx.vdata[i]);
    n.vdata = n.value.data();
    n.needs_grad = nx.needs_grad;
    return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) { return add_scaled(a, b, 1.0); }

Tape::Id Tape::sub(Id a, Id b) { return add_scaled(a, b, -1.0); }

Tape::Id Tape::scale(Id a, double s) {
    const Node& na = nodes_[a];
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.s = s;
    n.rows = na.rows;
    n.cols = na.cols;
    n.value.resize(n.rows * n.cols);
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = s * na.vdata[i];
    n.vdata = n.value.data();
    n.needs_grad = na.needs_grad;
    return push(std::move(n));
}

Tape::Id Tape::add_scaled(Id a, Id b, double s) {
    const Node& na = nodes_[a];
    const Node& nb = nodes_[b];
    if (na.rows != nb.rows || na.cols != nb.cols)
        throw ShapeError("add: operand shapes differ");
    Node n;
    n.op = Op::AddScaled;
    n.a = a;
    n.b = b;
    n.s = s;
    n.rows = na.rows;
    n.cols = na.cols;
    n.value.resize(n.rows * n.cols);
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = na.vdata[i] + s * nb.vdata[i];
    n.vdata = n.value.data();
    n.needs_grad = na.needs_grad || nb.needs_grad;
    return push(std::move(n));
}

Tape::Id Tape::concat_cols(std::span<const Id> parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    const std::size_t rows = nodes_[parts[0]].rows;
    std::size_t cols = 0;
    bool ng = false;
    for (Id p : parts) {
        if (nodes_[p].rows != rows) throw ShapeError("concat_cols: row counts differ");
        cols += nodes_[p].cols;
        ng = ng || nodes_[p].needs_grad;
    }
    Node n;
    n.op = Op::ConcatCols;
    n.rows = rows;
    n.cols = cols;
    n.multi.assign(parts.begin(), parts.end());
    n.value.resize(rows * cols);
    std::size_t off = 0;
    for (Id p : parts) {
        const Node& np = nodes_[p];
        for (std::size_t i = 0; i < rows; ++i)
            std::copy_n(np.vdata + i * np.cols, np.cols, n.value.data() + i * cols + off);
        off += np.cols;
    }
    n.vdata = n.value.data();
    n.needs_grad = ng;
    return push(std::move(n));
}

Tape::Id Tape::repeat_rows(Id a, std::size_t k) {
    const Node& na = nodes_[a];
    Node n;
    n.op = Op::RepeatRows;
    n.a = a;
    n.s = static_cast<double>(k);
    n.rows = na.rows * k;
    n.cols = na.cols;
    n.value.resize(n.rows * n.cols);
    for (std::size_t i = 0; i < na.rows; ++i)
        for (std::size_t r = 0; r < k; ++r)
            std::copy_n(na.vdata + i * na.cols, na.cols, n.value.data() + (i * k + r) * na.cols);
    n.vdata = n.value.data();
    n.needs_grad = na.needs_grad;
    return push(std::move(n));
}

Tape::Id Tape::reshape(Id a, std::size_t rows, std::size_t cols) {
    const Node& na = nodes_[a];
    if (rows * cols != na.rows * na.cols) throw ShapeError("reshape: element count changes");
    Node n;
    n.op = Op::Reshape;
    n.a = a;
    n.rows = rows;
    n.cols = cols;
    n.vdata = na.vdata;  // shares the input buffer
    n.needs_grad = na.needs_grad;
    return push(std::move(n));
}

Tape::Id Tape::sort_rows(Id a) {
    const Node& na = nodes_[a];
    Node n;
    n.op = Op::SortRows;
    n.a = a;
    n.rows = na.rows;
    n.cols = na.cols;
    n.value.resize(n.rows * n.cols);
    n.perm.resize(n.rows * n.cols);
    std::vector<int> idx(na.cols);
    for (std::size_t i = 0; i < na.rows; ++i) {
        const double* src = na.vdata + i * na.cols;
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int l, int r) { return src[l] < src[r]; });
        for (std::size_t j = 0; j < na.cols; ++j) {
            n.perm[i * na.cols + j] = idx[j];
            n.value[i * na.cols + j] = src[idx[j]];
        }
    }
    n.vdata = n.value.data();
    n.needs_grad = na.needs_grad;
    return push(std::move(n));
}

Tape::Id Tape::mean_all(Id a) {
    const Node& na = nodes_[a];
    Node n;
    n.op = Op::MeanAll;
    n.a = a;
    n.rows = 1;
    n.cols = 1;
    const std::size_t count = na.rows * na.cols;
    double s = 0.0;
    for (std::size_t i = 0; i < count; ++i) s += na.vdata[i];
    n.value = {s / static_cast<double>(count)};
    n.vdata = n.value.data();
    n.needs_grad = na.needs_grad;
    return push(std::move(n));
}

Tape::Id Tape::squared_error_rows(Id pred, const Tensor& target) {
    const Node& np = nodes_[pred];
    if (np.rows != target.rows() || np.cols != target.cols())
        throw ShapeError("squared_error_rows: prediction/target shapes differ");
    Node n;
    n.op = Op::SquaredErrorRows;
    n.a = pred;
    n.rows = 1;
    n.cols = 1;
    n.aux_a = target.data;
    double s = 0.0;
    for (std::size_t i = 0; i < n.aux_a.size(); ++i) {
        const double d = np.vdata[i] - n.aux_a[i];
        s += d * d;
    }
    n.value = {s / static_cast<double>(np.rows)};
    n.vdata = n.value.data();
    n.needs_grad = np.needs_grad;
    return push(std::move(n));
}

Tape::Id Tape::quantile_huber_pairing(Id pred, const Tensor& targets,
                                      std::span<const double> levels, double kappa) {
    const Node& np = nodes_[pred];
    const std::size_t batch = np.rows, m = np.cols;
    if (targets.rows() != batch || targets.cols() != m)
        throw ShapeError("quantile_huber_pairing: target shape differs from prediction");
    if (levels.size() != m) throw ShapeError("quantile_huber_pairing: level count != M");
    if (kappa <= 0.0) throw ContractError("quantile_huber_pairing: kappa must be positive");
    Node n;
    n.op = Op::QuantileHuberPairing;
    n.a = pred;
    n.rows = 1;
    n.cols = 1;
    n.s = kappa;
    n.aux_a = targets.data;
    n.aux_b.assign(levels.begin(), levels.end());
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* z = np.vdata + b * m;
        const double* tz = n.aux_a.data() + b * m;
        double row = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double tau = n.aux_b[i];
            for (std::size_t j = 0; j < m; ++j) {
                const double u = tz[j] - z[i];
                const double w = std::abs(tau - (u < 0.0 ? 1.0 : 0.0));
                const double au = std::abs(u);
                const double lk = au <= kappa ? 0.5 * u * u : kappa * (au - 0.5 * kappa);
                row += w * lk;
            }
        }
        total += row / static_cast<double>(m * m);
    }
    n.value = {total / static_cast<double>(batch)};
    n.vdata = n.value.data();
    n.needs_grad = np.needs_grad;
    return push(std::move(n));
}

double Tape::scalar(Id n) const {
    const Node& node = nodes_[n];
    if (node.rows != 1 || node.cols != 1) throw ContractError("scalar: node is not 1x1");
    return node.vdata[0];
}

std::span<const double> Tape::grad(Id n) const {
    const Node& node = nodes_[n];
    return {node.grad.data(), node.grad.size()};
}

void Tape::backward(Id loss) {
    Node& ln = nodes_[loss];
    if (ln.rows != 1 || ln.cols != 1) throw ContractError("backward: loss must be a scalar");
    if (!std::isfinite(ln.vdata[0])) throw NumericError("backward: loss is not finite");

    for (Node& n : nodes_)
        if (n.needs_grad) n.grad.assign(n.rows * n.cols, 0.0);
    if (!ln.needs_grad) return;  // loss does not depend on any parameter
    ln.grad[0] = 1.0;

    for (Id id = loss; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.needs_grad || n.grad.empty()) continue;
        const double* g = n.grad.data();
        switch (n.op) {
            case Op::Const:
            case Op::Param:
                break;
            case Op::Linear: {
                Node& nx = nodes_[n.a];
                Node& nw = nodes_[n.b];
                Node& nb = nodes_[n.c];
                const std::size_t in = nw.cols, out = nw.rows;
                if (nx.needs_grad)
                    kernels::gemm_acc(g, n.rows, out, nw.vdata, in, nx.grad.data());
                if (nw.needs_grad)
                    kernels::outer_acc(g, nx.vdata, n.rows, out, in, nw.grad.data());
                if (nb.needs_grad) kernels::colsum_acc(g, n.rows, out, nb.grad.data());
                break;
            }
            case Op::Gelu: {
                Node& nx = nodes_[n.a];
                if (nx.needs_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i)
                        nx.grad[i] += g[i] * gelu_bwd(nx.vdata[i]);
                break;
            }
            case Op::Scale: {
                Node& na = nodes_[n.a];
                if (na.needs_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i) na.grad[i] += n.s * g[i];
                break;
            }
            case Op::AddScaled: {
                Node& na = nodes_[n.a];
                Node& nb = nodes_[n.b];
                if (na.needs_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i) na.grad[i] += g[i];
                if (nb.needs_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i) nb.grad[i] += n.s * g[i];
                break;
            }
            case Op::ConcatCols: {
                std::size_t off = 0;
                for (Id p : n.multi) {
                    Node& np = nodes_[p];
                    if (np.needs_grad)
                        for (std::size_t i = 0; i < n.rows; ++i)
                            for (std::size_t j = 0; j < np.cols; ++j)
                                np.grad[i * np.cols + j] += g[i * n.cols + off + j];
                    off += np.cols;
                }
                break;
            }
            case Op::RepeatRows: {
                Node& na = nodes_[n.a];
                if (na.needs_grad) {
                    const std::size_t k = static_cast<std::size_t>(n.s);
                    for (std::size_t i = 0; i < na.rows; ++i)
                        for (std::size_t r = 0; r < k; ++r)
                            for (std::size_t j = 0; j < na.cols; ++j)
                                na.grad[i * na.cols + j] += g[(i * k + r) * na.cols + j];
                }
                break;
            }
            case Op::Reshape: {
                Node& na = nodes_[n.a];
                if (na.needs_grad)
                    for (std::size_t i = 0; i < n.grad.size(); ++i) na.grad[i] += g[i];
                break;
            }
            case Op::SortRows: {
                Node& na = nodes_[n.a];
                if (na.needs_grad)
                    for (std::size_t i = 0; i < n.rows; ++i)
                        for (std::size_t j = 0; j < n.cols; ++j)
                            na.grad[i * n.cols + n.perm[i * n.cols + j]] += g[i * n.cols + j];
                break;
            }
            case Op::MeanAll: {
                Node& na = nodes_[n.a];
                if (na.needs_grad) {
                    const double gi = g[0] / static_cast<double>(na.rows * na.cols);
                    for (std::size_t i = 0; i < na.grad.size(); ++i) na.grad[i] += gi;
                }
                break;
            }
            case Op::SquaredErrorRows: {
                Node& np = nodes_[n.a];
                if (np.needs_grad) {
                    const double gi = 2.0 * g[0] / static_cast<double>(np.rows);
                    for (std::size_t i = 0; i < np.grad.size(); ++i)
                        np.grad[i] += gi * (np.vdata[i] - n.aux_a[i]);
                }
                break;
            }
            case Op::QuantileHuberPairing: {
                Node& np = nodes_[n.a];
                if (np.needs_grad) {
                    const std::size_t batch = np.rows, m = np.cols;
                    const double kappa = n.s;
                    const double gi = g[0] / static_cast<double>(batch * m * m);
                    for (std::size_t b = 0; b < batch; ++b) {
                        const double* z = np.vdata + b * m;
                        const double* tz = n.aux_a.data() + b * m;
                        for (std::size_t i = 0; i < m; ++i) {
                            const double tau = n.aux_b[i];
                            double acc = 0.0;
                            for (std::size_t j = 0; j < m; ++j) {
                                const double u = tz[j] - z[i];
                                const double w = std::abs(tau - (u < 0.0 ? 1.0 : 0.0));
                                acc += w * clamp(u, -kappa, kappa);
                            }
                            np.grad[b * m + i] -= gi * acc;  // d u / d z = -1
                        }
                    }
                }
                break;
            }
        }
    }

    // Flush parameter-leaf gradients into their tensors.
    for (Node& n : nodes_) {
        if (n.op != Op::Param || n.grad.empty()) continue;
        Tensor& t = *n.pextern;
        if (!t.has_grad()) t.engage_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            if (!std::isfinite(n.grad[i])) throw NumericError("backward: NaN/Inf gradient");
            t.grad[i] += n.grad[i];
        }
    }
}

}  // namespace flowrl
