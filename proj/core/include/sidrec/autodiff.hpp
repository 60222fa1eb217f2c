#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace sidrec::ad {

// Named parameter matrices with parallel gradient buffers. Column vectors
// are stored as n x 1 matrices. Flat indexing (checkpoints, finite
// differences) walks entries in registration order, column-major within
// each matrix.
class ParamStore {
  public:
    int add(std::string name, int rows, int cols);

    int count() const { return static_cast<int>(values_.size()); }
    int scalar_count() const;

    Eigen::MatrixXd& value(int id) { return values_[id]; }
    const Eigen::MatrixXd& value(int id) const { return values_[id]; }
    Eigen::MatrixXd& grad(int id) { return grads_[id]; }
    const Eigen::MatrixXd& grad(int id) const { return grads_[id]; }
    const std::string& name(int id) const { return names_[id]; }

    void zero_grads();

    double get_flat(int index) const;
    void set_flat(int index, double v);
    double get_flat_grad(int index) const;

    std::vector<double> flatten() const;
    void unflatten(std::span<const double> flat);

  private:
    std::pair<int, int> locate(int index) const;  // (entry, offset)

    std::vector<std::string> names_;
    std::vector<Eigen::MatrixXd> values_;
    std::vector<Eigen::MatrixXd> grads_;
};

// Numerically shared kernel: log softmax over the `valid` subset of logits,
// evaluated at `pick` (which must be a member of `valid`). Both the plain
// forward path and the tape use this exact function, so the two routes agree
// bit-for-bit.
double masked_log_softmax_pick_value(const Eigen::VectorXd& logits, std::span<const int> valid,
                                     int pick);

// Softmax probabilities over the valid subset (same max-subtraction
// algorithm as above), in `valid` order.
void masked_softmax_probs(const Eigen::VectorXd& logits, std::span<const int> valid,
                          std::vector<double>& probs);

using NodeRef = std::int32_t;

// Reverse-mode tape over vector-valued nodes. Values live in one arena so a
// reset keeps capacity across training steps. Nodes are immutable once
// appended; backward() accumulates parameter gradients into the bound
// ParamStore.
class Tape {
  public:
    explicit Tape(ParamStore* params) : params_(params) {}

    void reset();

    NodeRef constant(double v);
    NodeRef constant_vec(const Eigen::VectorXd& v);
    NodeRef zeros(int n);

    NodeRef param_row(int pid, int row);  // matrix row as a column vector
    NodeRef param_col(int pid);           // whole n x 1 parameter
    NodeRef matvec(int pid, NodeRef x);

    NodeRef add(NodeRef a, NodeRef b);
    NodeRef sub(NodeRef a, NodeRef b);
    NodeRef mul(NodeRef a, NodeRef b);  // elementwise
    NodeRef affine(NodeRef a, double scale, double shift);
    NodeRef sigmoid(NodeRef a);
    NodeRef tanh(NodeRef a);
    NodeRef exp(NodeRef a);
    NodeRef softplus(NodeRef a);  // log(1 + exp(x)), overflow-safe
    NodeRef concat(NodeRef a, NodeRef b);
    NodeRef pick_diff(NodeRef a, int i, int j);  // scalar a[i] - a[j]
    NodeRef min(NodeRef a, NodeRef b);           // elementwise, a wins ties
    NodeRef clamp(NodeRef a, double lo, double hi);

    // Scalar node: log softmax over the valid subset of `logits`, at `pick`.
    NodeRef masked_log_softmax_pick(NodeRef logits, std::span<const int> valid, int pick);

    double scalar(NodeRef n) const;
    Eigen::VectorXd vec(NodeRef n) const;
    int size(NodeRef n) const { return static_cast<int>(nodes_[n].len); }

    // Accumulates d(seed * node)/d(theta) into the ParamStore gradients.
    // `n` must be a scalar node.
    void backward(NodeRef n, double seed = 1.0);

  private:
    enum class Op : std::uint8_t {
        Const, ParamRow, ParamCol, MatVec, Add, Sub, Mul, Affine, Sigmoid,
        Tanh, Exp, Softplus, Concat, PickDiff, MaskedPick, Min, Clamp,
    };

    struct Node {
        Op op;
        NodeRef a = -1;
        NodeRef b = -1;
        std::int32_t pid = -1;
        std::int32_t i = 0;
        std::int32_t j = 0;
        double s0 = 0.0;
        double s1 = 0.0;
        std::uint32_t off = 0;
        std::uint32_t len = 0;
        std::uint32_t aux_off = 0;
        std::uint32_t aux_len = 0;
    };

    NodeRef push(Node node);                    // allocates the value segment
    Eigen::Map<Eigen::VectorXd> val(NodeRef n);
    Eigen::Map<const Eigen::VectorXd> cval(NodeRef n) const;
    Eigen::Map<Eigen::VectorXd> gval(NodeRef n);

    ParamStore* params_;
    std::vector<Node> nodes_;
    std::vector<double> vals_;
    std::vector<double> grads_;
    std::vector<int> aux_;
    mutable std::vector<double> scratch_;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    int worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Central finite differences over every parameter scalar. `loss` must
// compute the loss value and accumulate gradients into `params` (which is
// zeroed before the analytic call). Relative error uses a floor so that
// noise on near-zero gradients does not register.
GradCheckReport grad_check(ParamStore& params, const std::function<double()>& loss, double eps);

}  // namespace sidrec::ad
