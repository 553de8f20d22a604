#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "leosinr/common.hpp"

namespace leosinr::ad {

/// Handle into a Graph's tape.
struct Var {
    int id = -1;
};

/// Define-by-run reverse-mode tape over 2-D double tensors. Values are
/// computed eagerly as nodes are recorded; backward() runs one reverse
/// sweep. A graph is built for a single forward/backward pass and thrown
/// away; parameters live outside and are re-registered each step.
class Graph {
public:
    Var constant(size_t rows, size_t cols, std::span<const double> values);
    Var param(size_t rows, size_t cols, std::span<const double> values);

    /// x (n x d) * w (d x m) + b (1 x m, broadcast over rows).
    Var affine(Var x, Var w, Var b);
    Var matmul(Var a, Var b);
    /// a (n x d) * b^T with b stored (m x d); the attention score layout.
    Var matmul_nt(Var a, Var b);
    /// Normalization over the last axis; gamma/beta are 1 x cols.
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
    Var leaky_relu(Var x, double slope = 0.01);
    /// Row-wise softmax under an additive mask (0 = allowed, <= -1e8 or
    /// -inf = forbidden). Forbidden entries get exactly zero weight and a
    /// fully forbidden row yields an all-zero row.
    Var masked_softmax(Var logits, std::span<const double> additive_mask);
    Var add(Var a, Var b);
    Var subtract(Var a, Var b);
    Var scale(Var x, double s);
    /// Column-wise concatenation of equal-height blocks (head merge).
    Var concat_cols(const std::vector<Var>& parts);
    /// Sum of mask*(pred-label)^2 over sum of mask; scalar output.
    Var masked_mse(Var pred, std::span<const double> labels, std::span<const double> mask);

    size_t rows(Var v) const { return nodes_[v.id].rows; }
    size_t cols(Var v) const { return nodes_[v.id].cols; }
    const std::vector<double>& value(Var v) const { return nodes_[v.id].value; }
    const std::vector<double>& grad(Var v) const { return nodes_[v.id].grad; }

    /// Populates grads of every node reachable from `loss` (must be 1x1).
    /// Parameters that do not influence the loss keep zero grads and are
    /// reported back so the caller can warn.
    std::vector<Var> backward(Var loss);

    size_t size() const { return nodes_.size(); }

private:
    enum class Op {
        kLeaf,
        kAffine,
        kMatmul,
        kMatmulNt,
        kLayerNorm,
        kLeakyRelu,
        kMaskedSoftmax,
        kAdd,
        kSubtract,
        kScale,
        kConcatCols,
        kMaskedMse,
    };

    struct Node {
        Op op = Op::kLeaf;
        std::vector<int> inputs;
        size_t rows = 0, cols = 0;
        std::vector<double> value;
        std::vector<double> grad;
        std::vector<double> aux;  // mask copies, labels, cached statistics
        double scalar = 0.0;      // slope / scale / eps / mask sum
        bool is_param = false;
    };

    Var push(Node&& n);
    void backprop_node(int id);

    std::vector<Node> nodes_;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    long step_count = 0;
    AdamConfig cfg;

    explicit AdamState(size_t n_params, AdamConfig c = {})
        : first_moment(n_params, 0.0), second_moment(n_params, 0.0), cfg(c) {}
};

/// One Adam update. L2 is gradient-coupled weight decay: the effective
/// gradient is grad + l2 * param, fed through the moment estimates.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double l2);

struct LrSchedule {
    long warmup_epochs = 40;   // T_w
    long cycle_epochs = 100;   // T_c
    double lr_min = 1e-4;
    double lr_max = 5e-3;
};

/// Linear ramp lr_min -> lr_max over [0, T_w), then cosine annealing with
/// warm restarts in fixed cycles of T_c epochs.
double lr_at_epoch(long epoch, const LrSchedule& s);

/// Cycle index an epoch belongs to; -1 while still in warmup.
long annealing_cycle_of_epoch(long epoch, const LrSchedule& s);

class EarlyStopper {
public:
    explicit EarlyStopper(long patience_cycles = 4) : patience_(patience_cycles) {}

    /// Called once per completed annealing cycle with that cycle's loss.
    /// Returns true while training should continue.
    bool update(double cycle_loss) {
        if (cycle_loss < best_loss_) {
            best_loss_ = cycle_loss;
            cycles_since_improvement_ = 0;
        } else {
            ++cycles_since_improvement_;
        }
        return cycles_since_improvement_ < patience_;
    }

    double best_loss() const { return best_loss_; }
    long cycles_since_improvement() const { return cycles_since_improvement_; }

private:
    long patience_;
    double best_loss_ = std::numeric_limits<double>::infinity();
    long cycles_since_improvement_ = 0;
};

}  // namespace leosinr::ad
