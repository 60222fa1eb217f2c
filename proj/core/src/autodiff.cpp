#include "sidrec/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <limits>

#include "sidrec/errors.hpp"

namespace sidrec::ad {

// ---------------------------------------------------------------------------
// ParamStore

int ParamStore::add(std::string name, int rows, int cols) {
    names_.push_back(std::move(name));
    values_.emplace_back(Eigen::MatrixXd::Zero(rows, cols));
    grads_.emplace_back(Eigen::MatrixXd::Zero(rows, cols));
    return static_cast<int>(values_.size()) - 1;
}

int ParamStore::scalar_count() const {
    int n = 0;
    for (const auto& m : values_) n += static_cast<int>(m.size());
    return n;
}

void ParamStore::zero_grads() {
    for (auto& g : grads_) g.setZero();
}

std::pair<int, int> ParamStore::locate(int index) const {
    for (int e = 0; e < count(); ++e) {
        const int n = static_cast<int>(values_[e].size());
        if (index < n) return {e, index};
        index -= n;
    }
    throw Error("ParamStore: flat index out of range");
}

double ParamStore::get_flat(int index) const {
    const auto [e, off] = locate(index);
    return values_[e].data()[off];
}

void ParamStore::set_flat(int index, double v) {
    const auto [e, off] = locate(index);
    values_[e].data()[off] = v;
}

double ParamStore::get_flat_grad(int index) const {
    const auto [e, off] = locate(index);
    return grads_[e].data()[off];
}

std::vector<double> ParamStore::flatten() const {
    std::vector<double> out;
    out.reserve(scalar_count());
    for (const auto& m : values_) out.insert(out.end(), m.data(), m.data() + m.size());
    return out;
}

void ParamStore::unflatten(std::span<const double> flat) {
    if (static_cast<int>(flat.size()) != scalar_count()) {
        throw Error("ParamStore::unflatten: size mismatch");
    }
    std::size_t k = 0;
    for (auto& m : values_) {
        std::copy(flat.begin() + k, flat.begin() + k + m.size(), m.data());
        k += m.size();
    }
}

// ---------------------------------------------------------------------------
// Shared numeric kernels

double masked_log_softmax_pick_value(const Eigen::VectorXd& logits, std::span<const int> valid,
                                     int pick) {
    double m = -std::numeric_limits<double>::infinity();
    for (int c : valid) m = std::max(m, logits[c]);
    double sum = 0.0;
    for (int c : valid) sum += std::exp(logits[c] - m);
    return logits[pick] - m - std::log(sum);
}

void masked_softmax_probs(const Eigen::VectorXd& logits, std::span<const int> valid,
                          std::vector<double>& probs) {
    double m = -std::numeric_limits<double>::infinity();
    for (int c : valid) m = std::max(m, logits[c]);
    double sum = 0.0;
    probs.resize(valid.size());
    for (std::size_t k = 0; k < valid.size(); ++k) {
        probs[k] = std::exp(logits[valid[k]] - m);
        sum += probs[k];
    }
    for (auto& p : probs) p /= sum;
}

// ---------------------------------------------------------------------------
// Tape

void Tape::reset() {
    nodes_.clear();
    vals_.clear();
    grads_.clear();
    aux_.clear();
}

NodeRef Tape::push(Node node) {
    node.off = static_cast<std::uint32_t>(vals_.size());
    vals_.resize(vals_.size() + node.len);
    nodes_.push_back(node);
    return static_cast<NodeRef>(nodes_.size()) - 1;
}

Eigen::Map<Eigen::VectorXd> Tape::val(NodeRef n) {
    return {vals_.data() + nodes_[n].off, nodes_[n].len};
}

Eigen::Map<const Eigen::VectorXd> Tape::cval(NodeRef n) const {
    return {vals_.data() + nodes_[n].off, nodes_[n].len};
}

Eigen::Map<Eigen::VectorXd> Tape::gval(NodeRef n) {
    return {grads_.data() + nodes_[n].off, nodes_[n].len};
}

double Tape::scalar(NodeRef n) const {
    assert(nodes_[n].len == 1);
    return vals_[nodes_[n].off];
}

Eigen::VectorXd Tape::vec(NodeRef n) const { return cval(n); }

NodeRef Tape::constant(double v) {
    const NodeRef n = push({.op = Op::Const, .len = 1});
    vals_[nodes_[n].off] = v;
    return n;
}

NodeRef Tape::constant_vec(const Eigen::VectorXd& v) {
    const NodeRef n = push({.op = Op::Const, .len = static_cast<std::uint32_t>(v.size())});
    val(n) = v;
    return n;
}

NodeRef Tape::zeros(int n) {
    const NodeRef r = push({.op = Op::Const, .len = static_cast<std::uint32_t>(n)});
    val(r).setZero();
    return r;
}

NodeRef Tape::param_row(int pid, int row) {
    const auto& p = params_->value(pid);
    const NodeRef n =
        push({.op = Op::ParamRow, .pid = pid, .i = row, .len = static_cast<std::uint32_t>(p.cols())});
    val(n) = p.row(row).transpose();
    return n;
}

NodeRef Tape::param_col(int pid) {
    const auto& p = params_->value(pid);
    const NodeRef n = push({.op = Op::ParamCol, .pid = pid, .len = static_cast<std::uint32_t>(p.rows())});
    val(n) = p.col(0);
    return n;
}

NodeRef Tape::matvec(int pid, NodeRef x) {
    const auto& p = params_->value(pid);
    assert(p.cols() == nodes_[x].len);
    const NodeRef n =
        push({.op = Op::MatVec, .a = x, .pid = pid, .len = static_cast<std::uint32_t>(p.rows())});
    val(n).noalias() = p * cval(x);
    return n;
}

NodeRef Tape::add(NodeRef a, NodeRef b) {
    const NodeRef n = push({.op = Op::Add, .a = a, .b = b, .len = nodes_[a].len});
    val(n) = cval(a) + cval(b);
    return n;
}

NodeRef Tape::sub(NodeRef a, NodeRef b) {
    const NodeRef n = push({.op = Op::Sub, .a = a, .b = b, .len = nodes_[a].len});
    val(n) = cval(a) - cval(b);
    return n;
}

NodeRef Tape::mul(NodeRef a, NodeRef b) {
    const NodeRef n = push({.op = Op::Mul, .a = a, .b = b, .len = nodes_[a].len});
    val(n) = cval(a).cwiseProduct(cval(b));
    return n;
}

NodeRef Tape::affine(NodeRef a, double scale, double shift) {
    const NodeRef n = push({.op = Op::Affine, .a = a, .s0 = scale, .s1 = shift, .len = nodes_[a].len});
    val(n) = scale * cval(a).array() + shift;
    return n;
}

NodeRef Tape::sigmoid(NodeRef a) {
    const NodeRef n = push({.op = Op::Sigmoid, .a = a, .len = nodes_[a].len});
    auto out = val(n);
    const auto in = cval(a);
    for (int k = 0; k < in.size(); ++k) out[k] = 1.0 / (1.0 + std::exp(-in[k]));
    return n;
}

NodeRef Tape::tanh(NodeRef a) {
    const NodeRef n = push({.op = Op::Tanh, .a = a, .len = nodes_[a].len});
    auto out = val(n);
    const auto in = cval(a);
    for (int k = 0; k < in.size(); ++k) out[k] = std::tanh(in[k]);
    return n;
}

NodeRef Tape::exp(NodeRef a) {
    const NodeRef n = push({.op = Op::Exp, .a = a, .len = nodes_[a].len});
    auto out = val(n);
    const auto in = cval(a);
    for (int k = 0; k < in.size(); ++k) out[k] = std::exp(in[k]);
    return n;
}

NodeRef Tape::softplus(NodeRef a) {
    const NodeRef n = push({.op = Op::Softplus, .a = a, .len = nodes_[a].len});
    auto out = val(n);
    const auto in = cval(a);
    for (int k = 0; k < in.size(); ++k) {
        const double x = in[k];
        out[k] = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }
    return n;
}

NodeRef Tape::concat(NodeRef a, NodeRef b) {
    const NodeRef n = push({.op = Op::Concat, .a = a, .b = b, .len = nodes_[a].len + nodes_[b].len});
    val(n) << cval(a), cval(b);
    return n;
}

NodeRef Tape::pick_diff(NodeRef a, int i, int j) {
    const NodeRef n = push({.op = Op::PickDiff, .a = a, .i = i, .j = j, .len = 1});
    vals_[nodes_[n].off] = cval(a)[i] - cval(a)[j];
    return n;
}

NodeRef Tape::min(NodeRef a, NodeRef b) {
    const NodeRef n = push({.op = Op::Min, .a = a, .b = b, .len = nodes_[a].len});
    val(n) = cval(a).cwiseMin(cval(b));
    return n;
}

NodeRef Tape::clamp(NodeRef a, double lo, double hi) {
    const NodeRef n = push({.op = Op::Clamp, .a = a, .s0 = lo, .s1 = hi, .len = nodes_[a].len});
    auto out = val(n);
    const auto in = cval(a);
    for (int k = 0; k < in.size(); ++k) out[k] = std::clamp(in[k], lo, hi);
    return n;
}

NodeRef Tape::masked_log_softmax_pick(NodeRef logits, std::span<const int> valid, int pick) {
    Node node{.op = Op::MaskedPick, .a = logits, .i = pick, .len = 1};
    node.aux_off = static_cast<std::uint32_t>(aux_.size());
    node.aux_len = static_cast<std::uint32_t>(valid.size());
    aux_.insert(aux_.end(), valid.begin(), valid.end());
    const NodeRef n = push(node);
    vals_[nodes_[n].off] = masked_log_softmax_pick_value(cval(logits), valid, pick);
    return n;
}

void Tape::backward(NodeRef root, double seed) {
    assert(nodes_[root].len == 1);
    grads_.assign(vals_.size(), 0.0);
    grads_[nodes_[root].off] = seed;

    for (NodeRef n = root; n >= 0; --n) {
        const Node& node = nodes_[n];
        const auto gy = gval(n);
        switch (node.op) {
            case Op::Const:
                break;
            case Op::ParamRow:
                params_->grad(node.pid).row(node.i) += gy.transpose();
                break;
            case Op::ParamCol:
                params_->grad(node.pid).col(0) += gy;
                break;
            case Op::MatVec: {
                const auto& p = params_->value(node.pid);
                gval(node.a).noalias() += p.transpose() * gy;
                params_->grad(node.pid).noalias() += gy * cval(node.a).transpose();
                break;
            }
            case Op::Add:
                gval(node.a) += gy;
                gval(node.b) += gy;
                break;
            case Op::Sub:
                gval(node.a) += gy;
                gval(node.b) -= gy;
                break;
            case Op::Mul:
                gval(node.a) += gy.cwiseProduct(cval(node.b));
                gval(node.b) += gy.cwiseProduct(cval(node.a));
                break;
            case Op::Affine:
                gval(node.a) += node.s0 * gy;
                break;
            case Op::Sigmoid: {
                const auto y = cval(n);
                gval(node.a).array() += gy.array() * y.array() * (1.0 - y.array());
                break;
            }
            case Op::Tanh: {
                const auto y = cval(n);
                gval(node.a).array() += gy.array() * (1.0 - y.array().square());
                break;
            }
            case Op::Exp:
                gval(node.a).array() += gy.array() * cval(n).array();
                break;
            case Op::Softplus: {
                const auto x = cval(node.a);
                auto ga = gval(node.a);
                for (int k = 0; k < x.size(); ++k) {
                    ga[k] += gy[k] / (1.0 + std::exp(-x[k]));
                }
                break;
            }
            case Op::Concat:
                gval(node.a) += gy.head(nodes_[node.a].len);
                gval(node.b) += gy.tail(nodes_[node.b].len);
                break;
            case Op::PickDiff: {
                auto ga = gval(node.a);
                ga[node.i] += gy[0];
                ga[node.j] -= gy[0];
                break;
            }
            case Op::MaskedPick: {
                const std::span<const int> valid(aux_.data() + node.aux_off, node.aux_len);
                masked_softmax_probs(cval(node.a), valid, scratch_);
                auto ga = gval(node.a);
                ga[node.i] += gy[0];
                for (std::size_t k = 0; k < valid.size(); ++k) {
                    ga[valid[k]] -= gy[0] * scratch_[k];
                }
                break;
            }
            case Op::Min: {
                const auto a = cval(node.a);
                const auto b = cval(node.b);
                auto ga = gval(node.a);
                auto gb = gval(node.b);
                for (int k = 0; k < a.size(); ++k) {
                    if (a[k] <= b[k]) ga[k] += gy[k];
                    else gb[k] += gy[k];
                }
                break;
            }
            case Op::Clamp: {
                const auto x = cval(node.a);
                auto ga = gval(node.a);
                for (int k = 0; k < x.size(); ++k) {
                    if (x[k] > node.s0 && x[k] < node.s1) ga[k] += gy[k];
                }
                break;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Finite-difference check

GradCheckReport grad_check(ParamStore& params, const std::function<double()>& loss, double eps) {
    params.zero_grads();
    loss();
    const int n = params.scalar_count();
    std::vector<double> analytic(n);
    for (int i = 0; i < n; ++i) analytic[i] = params.get_flat_grad(i);

    GradCheckReport report;
    for (int i = 0; i < n; ++i) {
        const double saved = params.get_flat(i);
        params.set_flat(i, saved + eps);
        params.zero_grads();
        const double up = loss();
        params.set_flat(i, saved - eps);
        params.zero_grads();
        const double down = loss();
        params.set_flat(i, saved);
        const double numeric = (up - down) / (2.0 * eps);
        const double denom = std::max({1e-3, std::abs(analytic[i]), std::abs(numeric)});
        const double rel = std::abs(analytic[i] - numeric) / denom;
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    params.zero_grads();
    return report;
}

}  // namespace sidrec::ad
