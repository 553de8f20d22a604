#include "leosinr/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace leosinr::ad {

namespace {
constexpr double kForbiddenThreshold = -1e8;
}

Var Graph::push(Node&& n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Graph::constant(size_t rows, size_t cols, std::span<const double> values) {
    if (values.size() != rows * cols) throw ShapeError("constant: value count mismatch");
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.value.assign(values.begin(), values.end());
    return push(std::move(n));
}

Var Graph::param(size_t rows, size_t cols, std::span<const double> values) {
    Var v = constant(rows, cols, values);
    nodes_[v.id].is_param = true;
    return v;
}

Var Graph::affine(Var x, Var w, Var b) {
    const Node& xn = nodes_[x.id];
    const Node& wn = nodes_[w.id];
    const Node& bn = nodes_[b.id];
    if (xn.cols != wn.rows) throw ShapeError("affine: x.cols != w.rows");
    if (bn.rows != 1 || bn.cols != wn.cols) throw ShapeError("affine: bias must be 1 x w.cols");
    Node n;
    n.op = Op::kAffine;
    n.inputs = {x.id, w.id, b.id};
    n.rows = xn.rows;
    n.cols = wn.cols;
    n.value.resize(n.rows * n.cols);
    for (size_t i = 0; i < n.rows; ++i) {
        for (size_t j = 0; j < n.cols; ++j) {
            double s = bn.value[j];
            for (size_t k = 0; k < xn.cols; ++k)
                s += xn.value[i * xn.cols + k] * wn.value[k * wn.cols + j];
            n.value[i * n.cols + j] = s;
        }
    }
    return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
    const Node& an = nodes_[a.id];
    const Node& bn = nodes_[b.id];
    if (an.cols != bn.rows) throw ShapeError("matmul: inner dimensions differ");
    Node n;
    n.op = Op::kMatmul;
    n.inputs = {a.id, b.id};
    n.rows = an.rows;
    n.cols = bn.cols;
    n.value.resize(n.rows * n.cols);
    for (size_t i = 0; i < n.rows; ++i)
        for (size_t j = 0; j < n.cols; ++j) {
            double s = 0.0;
            for (size_t k = 0; k < an.cols; ++k)
                s += an.value[i * an.cols + k] * bn.value[k * bn.cols + j];
            n.value[i * n.cols + j] = s;
        }
    return push(std::move(n));
}

Var Graph::matmul_nt(Var a, Var b) {
    const Node& an = nodes_[a.id];
    const Node& bn = nodes_[b.id];
    if (an.cols != bn.cols) throw ShapeError("matmul_nt: inner dimensions differ");
    Node n;
    n.op = Op::kMatmulNt;
    n.inputs = {a.id, b.id};
    n.rows = an.rows;
    n.cols = bn.rows;
    n.value.resize(n.rows * n.cols);
    for (size_t i = 0; i < n.rows; ++i)
        for (size_t j = 0; j < n.cols; ++j) {
            double s = 0.0;
            for (size_t k = 0; k < an.cols; ++k)
                s += an.value[i * an.cols + k] * bn.value[j * bn.cols + k];
            n.value[i * n.cols + j] = s;
        }
    return push(std::move(n));
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Node& xn = nodes_[x.id];
    const Node& gn = nodes_[gamma.id];
    const Node& bn = nodes_[beta.id];
    if (gn.rows != 1 || gn.cols != xn.cols || bn.rows != 1 || bn.cols != xn.cols)
        throw ShapeError("layer_norm: gamma/beta must be 1 x x.cols");
    Node n;
    n.op = Op::kLayerNorm;
    n.inputs = {x.id, gamma.id, beta.id};
    n.rows = xn.rows;
    n.cols = xn.cols;
    n.scalar = eps;
    n.value.resize(n.rows * n.cols);
    n.aux.resize(n.rows * n.cols + n.rows);  // normalized values, then 1/stddev per row
    const size_t c = n.cols;
    for (size_t i = 0; i < n.rows; ++i) {
        double mean = 0.0;
        for (size_t j = 0; j < c; ++j) mean += xn.value[i * c + j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (size_t j = 0; j < c; ++j) {
            const double d = xn.value[i * c + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv_std = 1.0 / std::sqrt(var + eps);
        n.aux[n.rows * c + i] = inv_std;
        for (size_t j = 0; j < c; ++j) {
            const double xhat = (xn.value[i * c + j] - mean) * inv_std;
            n.aux[i * c + j] = xhat;
            n.value[i * c + j] = gn.value[j] * xhat + bn.value[j];
        }
    }
    return push(std::move(n));
}

Var Graph::leaky_relu(Var x, double slope) {
    const Node& xn = nodes_[x.id];
    Node n;
    n.op = Op::kLeakyRelu;
    n.inputs = {x.id};
    n.rows = xn.rows;
    n.cols = xn.cols;
    n.scalar = slope;
    n.value.resize(xn.value.size());
    for (size_t i = 0; i < xn.value.size(); ++i) {
        const double v = xn.value[i];
        n.value[i] = v >= 0.0 ? v : slope * v;
    }
    return push(std::move(n));
}

Var Graph::masked_softmax(Var logits, std::span<const double> additive_mask) {
    const Node& ln = nodes_[logits.id];
    if (additive_mask.size() != ln.value.size())
        throw ShapeError("masked_softmax: mask shape mismatch");
    Node n;
    n.op = Op::kMaskedSoftmax;
    n.inputs = {logits.id};
    n.rows = ln.rows;
    n.cols = ln.cols;
    n.aux.assign(additive_mask.begin(), additive_mask.end());
    n.value.assign(ln.value.size(), 0.0);
    const size_t c = n.cols;
    for (size_t i = 0; i < n.rows; ++i) {
        double max_logit = -std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < c; ++j)
            if (n.aux[i * c + j] > kForbiddenThreshold)
                max_logit = std::max(max_logit, ln.value[i * c + j]);
        if (!std::isfinite(max_logit)) continue;  // fully masked row stays zero
        double denom = 0.0;
        for (size_t j = 0; j < c; ++j) {
            if (n.aux[i * c + j] > kForbiddenThreshold) {
                const double e = std::exp(ln.value[i * c + j] - max_logit);
                n.value[i * c + j] = e;
                denom += e;
            }
        }
        for (size_t j = 0; j < c; ++j) n.value[i * c + j] /= denom;
    }
    return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
    const Node& an = nodes_[a.id];
    const Node& bn = nodes_[b.id];
    if (an.rows != bn.rows || an.cols != bn.cols) throw ShapeError("add: shape mismatch");
    Node n;
    n.op = Op::kAdd;
    n.inputs = {a.id, b.id};
    n.rows = an.rows;
    n.cols = an.cols;
    n.value.resize(an.value.size());
    for (size_t i = 0; i < an.value.size(); ++i) n.value[i] = an.value[i] + bn.value[i];
    return push(std::move(n));
}

Var Graph::subtract(Var a, Var b) {
    const Node& an = nodes_[a.id];
    const Node& bn = nodes_[b.id];
    if (an.rows != bn.rows || an.cols != bn.cols) throw ShapeError("subtract: shape mismatch");
    Node n;
    n.op = Op::kSubtract;
    n.inputs = {a.id, b.id};
    n.rows = an.rows;
    n.cols = an.cols;
    n.value.resize(an.value.size());
    for (size_t i = 0; i < an.value.size(); ++i) n.value[i] = an.value[i] - bn.value[i];
    return push(std::move(n));
}

Var Graph::scale(Var x, double s) {
    const Node& xn = nodes_[x.id];
    Node n;
    n.op = Op::kScale;
    n.inputs = {x.id};
    n.rows = xn.rows;
    n.cols = xn.cols;
    n.scalar = s;
    n.value.resize(xn.value.size());
    for (size_t i = 0; i < xn.value.size(); ++i) n.value[i] = s * xn.value[i];
    return push(std::move(n));
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const size_t r = nodes_[parts[0].id].rows;
    size_t total_cols = 0;
    for (Var p : parts) {
        if (nodes_[p.id].rows != r) throw ShapeError("concat_cols: row count mismatch");
        total_cols += nodes_[p.id].cols;
    }
    Node n;
    n.op = Op::kConcatCols;
    n.rows = r;
    n.cols = total_cols;
    n.value.resize(r * total_cols);
    for (Var p : parts) n.inputs.push_back(p.id);
    size_t col_off = 0;
    for (Var p : parts) {
        const Node& pn = nodes_[p.id];
        for (size_t i = 0; i < r; ++i)
            for (size_t j = 0; j < pn.cols; ++j)
                n.value[i * total_cols + col_off + j] = pn.value[i * pn.cols + j];
        col_off += pn.cols;
    }
    return push(std::move(n));
}

Var Graph::masked_mse(Var pred, std::span<const double> labels, std::span<const double> mask) {
    const Node& pn = nodes_[pred.id];
    if (labels.size() != pn.value.size() || mask.size() != pn.value.size())
        throw ShapeError("masked_mse: label/mask shape mismatch");
    double mask_sum = 0.0;
    for (double m : mask) mask_sum += m;
    if (mask_sum <= 0.0) throw NumericalError("masked_mse: all entries masked out");
    Node n;
    n.op = Op::kMaskedMse;
    n.inputs = {pred.id};
    n.rows = 1;
    n.cols = 1;
    n.scalar = mask_sum;
    n.aux.resize(2 * pn.value.size());
    std::copy(labels.begin(), labels.end(), n.aux.begin());
    std::copy(mask.begin(), mask.end(), n.aux.begin() + static_cast<long>(pn.value.size()));
    double s = 0.0;
    for (size_t i = 0; i < pn.value.size(); ++i) {
        const double d = pn.value[i] - labels[i];
        s += mask[i] * d * d;
    }
    n.value = {s / mask_sum};
    return push(std::move(n));
}

void Graph::backprop_node(int id) {
    Node& n = nodes_[id];
    const std::vector<double>& g = n.grad;
    switch (n.op) {
        case Op::kLeaf:
            break;
        case Op::kAffine: {
            Node& xn = nodes_[n.inputs[0]];
            Node& wn = nodes_[n.inputs[1]];
            Node& bn = nodes_[n.inputs[2]];
            for (size_t i = 0; i < n.rows; ++i)
                for (size_t k = 0; k < xn.cols; ++k) {
                    double s = 0.0;
                    for (size_t j = 0; j < n.cols; ++j)
                        s += g[i * n.cols + j] * wn.value[k * wn.cols + j];
                    xn.grad[i * xn.cols + k] += s;
                }
            for (size_t k = 0; k < wn.rows; ++k)
                for (size_t j = 0; j < wn.cols; ++j) {
                    double s = 0.0;
                    for (size_t i = 0; i < n.rows; ++i)
                        s += xn.value[i * xn.cols + k] * g[i * n.cols + j];
                    wn.grad[k * wn.cols + j] += s;
                }
            for (size_t j = 0; j < n.cols; ++j) {
                double s = 0.0;
                for (size_t i = 0; i < n.rows; ++i) s += g[i * n.cols + j];
                bn.grad[j] += s;
            }
            break;
        }
        case Op::kMatmul: {
            Node& an = nodes_[n.inputs[0]];
            Node& bn = nodes_[n.inputs[1]];
            for (size_t i = 0; i < an.rows; ++i)
                for (size_t k = 0; k < an.cols; ++k) {
                    double s = 0.0;
                    for (size_t j = 0; j < n.cols; ++j)
                        s += g[i * n.cols + j] * bn.value[k * bn.cols + j];
                    an.grad[i * an.cols + k] += s;
                }
            for (size_t k = 0; k < bn.rows; ++k)
                for (size_t j = 0; j < bn.cols; ++j) {
                    double s = 0.0;
                    for (size_t i = 0; i < n.rows; ++i)
                        s += an.value[i * an.cols + k] * g[i * n.cols + j];
                    bn.grad[k * bn.cols + j] += s;
                }
            break;
        }
        case Op::kMatmulNt: {
            Node& an = nodes_[n.inputs[0]];
            Node& bn = nodes_[n.inputs[1]];
            // C = A B^T: dA = G B, dB = G^T A
            for (size_t i = 0; i < an.rows; ++i)
                for (size_t k = 0; k < an.cols; ++k) {
                    double s = 0.0;
                    for (size_t j = 0; j < n.cols; ++j)
                        s += g[i * n.cols + j] * bn.value[j * bn.cols + k];
                    an.grad[i * an.cols + k] += s;
                }
            for (size_t j = 0; j < bn.rows; ++j)
                for (size_t k = 0; k < bn.cols; ++k) {
                    double s = 0.0;
                    for (size_t i = 0; i < n.rows; ++i)
                        s += g[i * n.cols + j] * an.value[i * an.cols + k];
                    bn.grad[j * bn.cols + k] += s;
                }
            break;
        }
        case Op::kLayerNorm: {
            Node& xn = nodes_[n.inputs[0]];
            Node& gn = nodes_[n.inputs[1]];
            Node& bn = nodes_[n.inputs[2]];
            const size_t c = n.cols;
            for (size_t i = 0; i < n.rows; ++i) {
                const double inv_std = n.aux[n.rows * c + i];
                double mean_gh = 0.0, mean_gh_xhat = 0.0;
                for (size_t j = 0; j < c; ++j) {
                    const double gh = g[i * c + j] * gn.value[j];
                    mean_gh += gh;
                    mean_gh_xhat += gh * n.aux[i * c + j];
                }
                mean_gh /= static_cast<double>(c);
                mean_gh_xhat /= static_cast<double>(c);
                for (size_t j = 0; j < c; ++j) {
                    const double gh = g[i * c + j] * gn.value[j];
                    const double xhat = n.aux[i * c + j];
                    xn.grad[i * c + j] += inv_std * (gh - mean_gh - xhat * mean_gh_xhat);
                    gn.grad[j] += g[i * c + j] * xhat;
                    bn.grad[j] += g[i * c + j];
                }
            }
            break;
        }
        case Op::kLeakyRelu: {
            Node& xn = nodes_[n.inputs[0]];
            for (size_t i = 0; i < n.value.size(); ++i)
                xn.grad[i] += (xn.value[i] >= 0.0 ? 1.0 : n.scalar) * g[i];
            break;
        }
        case Op::kMaskedSoftmax: {
            Node& ln = nodes_[n.inputs[0]];
            const size_t c = n.cols;
            for (size_t i = 0; i < n.rows; ++i) {
                double dot = 0.0;
                for (size_t j = 0; j < c; ++j) dot += g[i * c + j] * n.value[i * c + j];
                for (size_t j = 0; j < c; ++j) {
                    if (n.aux[i * c + j] > kForbiddenThreshold)
                        ln.grad[i * c + j] += n.value[i * c + j] * (g[i * c + j] - dot);
                }
            }
            break;
        }
        case Op::kAdd: {
            Node& an = nodes_[n.inputs[0]];
            Node& bn = nodes_[n.inputs[1]];
            for (size_t i = 0; i < g.size(); ++i) {
                an.grad[i] += g[i];
                bn.grad[i] += g[i];
            }
            break;
        }
        case Op::kSubtract: {
            Node& an = nodes_[n.inputs[0]];
            Node& bn = nodes_[n.inputs[1]];
            for (size_t i = 0; i < g.size(); ++i) {
                an.grad[i] += g[i];
                bn.grad[i] -= g[i];
            }
            break;
        }
        case Op::kScale: {
            Node& xn = nodes_[n.inputs[0]];
            for (size_t i = 0; i < g.size(); ++i) xn.grad[i] += n.scalar * g[i];
            break;
        }
        case Op::kConcatCols: {
            size_t col_off = 0;
            for (int in : n.inputs) {
                Node& pn = nodes_[in];
                for (size_t i = 0; i < n.rows; ++i)
                    for (size_t j = 0; j < pn.cols; ++j)
                        pn.grad[i * pn.cols + j] += g[i * n.cols + col_off + j];
                col_off += pn.cols;
            }
            break;
        }
        case Op::kMaskedMse: {
            Node& pn = nodes_[n.inputs[0]];
            const size_t sz = pn.value.size();
            const double* labels = n.aux.data();
            const double* mask = n.aux.data() + sz;
            const double scale = 2.0 * g[0] / n.scalar;
            for (size_t i = 0; i < sz; ++i)
                pn.grad[i] += scale * mask[i] * (pn.value[i] - labels[i]);
            break;
        }
    }
}

std::vector<Var> Graph::backward(Var loss) {
    Node& ln = nodes_[loss.id];
    if (ln.rows != 1 || ln.cols != 1) throw ShapeError("backward: loss must be scalar");

    // reachability sweep so that disconnected parameters can be reported
    std::vector<char> reachable(nodes_.size(), 0);
    reachable[loss.id] = 1;
    for (int id = loss.id; id >= 0; --id) {
        if (!reachable[id]) continue;
        for (int in : nodes_[id].inputs) reachable[in] = 1;
    }

    for (Node& n : nodes_) n.grad.assign(n.value.size(), 0.0);
    ln.grad[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        if (reachable[id]) backprop_node(id);
    }

    std::vector<Var> disconnected;
    for (int id = 0; id < static_cast<int>(nodes_.size()); ++id)
        if (nodes_[id].is_param && !reachable[id]) disconnected.push_back(Var{id});
    return disconnected;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double l2) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size())
        throw ShapeError("adam_step: parameter/gradient/state size mismatch");
    state.step_count += 1;
    const double b1 = state.cfg.beta1;
    const double b2 = state.cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
    for (size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i] + l2 * params[i];
        state.first_moment[i] = b1 * state.first_moment[i] + (1.0 - b1) * g;
        state.second_moment[i] = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
        const double m_hat = state.first_moment[i] / bc1;
        const double v_hat = state.second_moment[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.cfg.epsilon);
    }
}

double lr_at_epoch(long epoch, const LrSchedule& s) {
    if (epoch < 0) throw ConfigError("lr_at_epoch: epoch must be >= 0");
    if (epoch < s.warmup_epochs) {
        const double t = static_cast<double>(epoch) / static_cast<double>(s.warmup_epochs);
        return s.lr_min + (s.lr_max - s.lr_min) * t;
    }
    const long tau = (epoch - s.warmup_epochs) % s.cycle_epochs;
    const double phase = kPi * static_cast<double>(tau) / static_cast<double>(s.cycle_epochs);
    return s.lr_min + 0.5 * (s.lr_max - s.lr_min) * (1.0 + std::cos(phase));
}

long annealing_cycle_of_epoch(long epoch, const LrSchedule& s) {
    if (epoch < s.warmup_epochs) return -1;
    return (epoch - s.warmup_epochs) / s.cycle_epochs;
}

}  // namespace leosinr::ad
