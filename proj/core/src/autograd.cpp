#include "crossdiff/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace crossdiff::ag {

namespace {

thread_local bool g_grad_enabled = true;
thread_local std::uint64_t g_order = 0;

std::shared_ptr<Node> new_node(Mat value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->order = ++g_order;
    return n;
}

// Builds an op node; drops the tape when recording is off or no parent
// needs gradients.
Tensor make_op(Mat value, std::vector<Tensor> parents, std::function<void(Node&)> backprop) {
    auto n = new_node(std::move(value));
    bool needs = false;
    if (g_grad_enabled)
        for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs) {
        n->requires_grad = true;
        n->backprop = std::move(backprop);
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
    }
    return Tensor(n);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ArgumentError(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
}

}  // namespace

Tensor Tensor::constant(Mat value) {
    return Tensor(new_node(std::move(value)));
}

Tensor Tensor::variable(Mat value) {
    auto n = new_node(std::move(value));
    n->requires_grad = true;
    return Tensor(n);
}

const Mat& Tensor::grad() const {
    if (!node_ || !node_->has_grad)
        throw ArgumentError("Tensor::grad: no gradient accumulated");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_) return;
    node_->has_grad = false;
    node_->grad.resize(0, 0);
}

bool grad_enabled() {
    return g_grad_enabled;
}

void set_grad_enabled(bool on) {
    g_grad_enabled = on;
}

void backward(const Tensor& root) {
    if (!root.defined() || root.rows() != 1 || root.cols() != 1)
        throw ArgumentError("backward: root must be a defined 1x1 tensor");
    if (!root.requires_grad()) throw ArgumentError("backward: root does not require gradients");

    // Collect the reachable recorded subgraph, then replay in reverse
    // creation order (a valid topological order for a dynamic tape).
    std::vector<Node*> nodes;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.node().get()};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        nodes.push_back(n);
        for (const auto& p : n->parents)
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(nodes.begin(), nodes.end(), [](Node* a, Node* b) { return a->order > b->order; });

    root.node()->accumulate(Mat::Ones(1, 1));
    for (Node* n : nodes)
        if (n->backprop && n->has_grad) n->backprop(*n);
}

// --- primitive ops -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw ArgumentError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                            std::to_string(b.rows()) + ")");
    Mat v = a.value() * b.value();
    auto an = a.node(), bn = b.node();
    return make_op(std::move(v), {a, b}, [an, bn](Node& n) {
        an->accumulate(n.grad * bn->value.transpose());
        bn->accumulate(an->value.transpose() * n.grad);
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    auto an = a.node(), bn = b.node();
    return make_op(a.value() + b.value(), {a, b}, [an, bn](Node& n) {
        an->accumulate(n.grad);
        bn->accumulate(n.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    auto an = a.node(), bn = b.node();
    return make_op(a.value() - b.value(), {a, b}, [an, bn](Node& n) {
        an->accumulate(n.grad);
        bn->accumulate(-n.grad);
    });
}

Tensor add_rowwise(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw ArgumentError("add_rowwise: row must be 1 x cols of a");
    Mat v = a.value().rowwise() + row.value().row(0);
    auto an = a.node(), rn = row.node();
    return make_op(std::move(v), {a, row}, [an, rn](Node& n) {
        an->accumulate(n.grad);
        rn->accumulate(n.grad.colwise().sum());
    });
}

Tensor cmul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "cmul");
    auto an = a.node(), bn = b.node();
    return make_op(a.value().cwiseProduct(b.value()), {a, b}, [an, bn](Node& n) {
        an->accumulate(n.grad.cwiseProduct(bn->value));
        bn->accumulate(n.grad.cwiseProduct(an->value));
    });
}

Tensor scale(const Tensor& a, double s) {
    auto an = a.node();
    return make_op(s * a.value(), {a}, [an, s](Node& n) { an->accumulate(s * n.grad); });
}

Tensor add_scalar(const Tensor& a, double c) {
    auto an = a.node();
    return make_op(a.value().array() + c, {a}, [an](Node& n) { an->accumulate(n.grad); });
}

Tensor neg(const Tensor& a) {
    return scale(a, -1.0);
}

Tensor sigmoid(const Tensor& a) {
    Mat y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    auto an = a.node();
    return make_op(y, {a}, [an](Node& n) {
        an->accumulate(n.grad.cwiseProduct((n.value.array() * (1.0 - n.value.array())).matrix()));
    });
}

Tensor tanh_op(const Tensor& a) {
    Mat y = a.value().array().tanh().matrix();
    auto an = a.node();
    return make_op(y, {a}, [an](Node& n) {
        an->accumulate(n.grad.cwiseProduct((1.0 - n.value.array().square()).matrix()));
    });
}

Tensor relu(const Tensor& a) {
    Mat y = a.value().cwiseMax(0.0);
    auto an = a.node();
    return make_op(y, {a}, [an](Node& n) {
        an->accumulate(n.grad.cwiseProduct((an->value.array() > 0.0).cast<double>().matrix()));
    });
}

Tensor log_op(const Tensor& a) {
    Mat y = a.value().array().log().matrix();
    auto an = a.node();
    return make_op(y, {a}, [an](Node& n) {
        an->accumulate(n.grad.cwiseQuotient(an->value));
    });
}

Tensor softmax_rows(const Tensor& a) {
    Mat y = a.value();
    for (int i = 0; i < y.rows(); ++i) {
        Eigen::RowVectorXd row = y.row(i);
        const double m = row.maxCoeff();
        row = (row.array() - m).exp();
        y.row(i) = row / row.sum();
    }
    auto an = a.node();
    return make_op(y, {a}, [an](Node& n) {
        Mat dx(n.value.rows(), n.value.cols());
        for (int i = 0; i < n.value.rows(); ++i) {
            const double dot = n.grad.row(i).dot(n.value.row(i));
            dx.row(i) = (n.value.row(i).array() * (n.grad.row(i).array() - dot)).matrix();
        }
        an->accumulate(dx);
    });
}

Tensor layer_norm_rows(const Tensor& a, double eps) {
    const int cols = a.cols();
    Mat y(a.rows(), cols);
    Vec inv_std(a.rows());
    for (int i = 0; i < a.rows(); ++i) {
        const double mu = a.value().row(i).mean();
        const double var = (a.value().row(i).array() - mu).square().mean();
        inv_std(i) = 1.0 / std::sqrt(var + eps);
        y.row(i) = (a.value().row(i).array() - mu) * inv_std(i);
    }
    auto an = a.node();
    return make_op(y, {a}, [an, inv_std, cols](Node& n) {
        Mat dx(n.value.rows(), cols);
        for (int i = 0; i < n.value.rows(); ++i) {
            const auto g = n.grad.row(i).array();
            const auto yr = n.value.row(i).array();
            const double gm = g.mean();
            const double gym = (g * yr).mean();
            dx.row(i) = (inv_std(i) * (g - gm - yr * gym)).matrix();
        }
        an->accumulate(dx);
    });
}

Tensor transpose(const Tensor& a) {
    auto an = a.node();
    return make_op(a.value().transpose(), {a}, [an](Node& n) { an->accumulate(n.grad.transpose()); });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ArgumentError("concat_cols: no parts");
    const int rows = parts.front().rows();
    int cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ArgumentError("concat_cols: row counts differ");
        cols += p.cols();
    }
    Mat v(rows, cols);
    int at = 0;
    std::vector<int> offsets, widths;
    for (const auto& p : parts) {
        v.middleCols(at, p.cols()) = p.value();
        offsets.push_back(at);
        widths.push_back(p.cols());
        at += p.cols();
    }
    std::vector<std::shared_ptr<Node>> ns;
    for (const auto& p : parts) ns.push_back(p.node());
    return make_op(std::move(v), parts, [ns, offsets, widths](Node& n) {
        for (size_t i = 0; i < ns.size(); ++i) ns[i]->accumulate(n.grad.middleCols(offsets[i], widths[i]));
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ArgumentError("concat_rows: no parts");
    const int cols = parts.front().cols();
    int rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw ArgumentError("concat_rows: column counts differ");
        rows += p.rows();
    }
    Mat v(rows, cols);
    int at = 0;
    std::vector<int> offsets, heights;
    for (const auto& p : parts) {
        v.middleRows(at, p.rows()) = p.value();
        offsets.push_back(at);
        heights.push_back(p.rows());
        at += p.rows();
    }
    std::vector<std::shared_ptr<Node>> ns;
    for (const auto& p : parts) ns.push_back(p.node());
    return make_op(std::move(v), parts, [ns, offsets, heights](Node& n) {
        for (size_t i = 0; i < ns.size(); ++i) ns[i]->accumulate(n.grad.middleRows(offsets[i], heights[i]));
    });
}

Tensor slice_cols(const Tensor& a, int first, int count) {
    if (first < 0 || count < 0 || first + count > a.cols()) throw ArgumentError("slice_cols: range out of bounds");
    auto an = a.node();
    const int rows = a.rows(), cols = a.cols();
    return make_op(a.value().middleCols(first, count), {a}, [an, first, count, rows, cols](Node& n) {
        Mat g = Mat::Zero(rows, cols);
        g.middleCols(first, count) = n.grad;
        an->accumulate(g);
    });
}

Tensor slice_rows(const Tensor& a, int first, int count) {
    if (first < 0 || count < 0 || first + count > a.rows()) throw ArgumentError("slice_rows: range out of bounds");
    auto an = a.node();
    const int rows = a.rows(), cols = a.cols();
    return make_op(a.value().middleRows(first, count), {a}, [an, first, count, rows, cols](Node& n) {
        Mat g = Mat::Zero(rows, cols);
        g.middleRows(first, count) = n.grad;
        an->accumulate(g);
    });
}

Tensor sum_all(const Tensor& a) {
    Mat v(1, 1);
    v(0, 0) = a.value().sum();
    auto an = a.node();
    const int rows = a.rows(), cols = a.cols();
    return make_op(std::move(v), {a}, [an, rows, cols](Node& n) {
        an->accumulate(Mat::Constant(rows, cols, n.grad(0, 0)));
    });
}

Tensor mean_all(const Tensor& a) {
    return scale(sum_all(a), 1.0 / (static_cast<double>(a.rows()) * a.cols()));
}

Tensor mean_cols(const Tensor& a) {
    Mat v = a.value().rowwise().mean();
    auto an = a.node();
    const int cols = a.cols();
    return make_op(std::move(v), {a}, [an, cols](Node& n) {
        an->accumulate((n.grad / cols).replicate(1, cols));
    });
}

Tensor mean_rows(const Tensor& a) {
    Mat v = a.value().colwise().mean();
    auto an = a.node();
    const int rows = a.rows();
    return make_op(std::move(v), {a}, [an, rows](Node& n) {
        an->accumulate((n.grad / rows).replicate(rows, 1));
    });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    Mat v = a.value().cwiseMax(lo).cwiseMin(hi);
    auto an = a.node();
    return make_op(std::move(v), {a}, [an, lo, hi](Node& n) {
        const Mat pass = ((an->value.array() > lo) && (an->value.array() < hi)).cast<double>();
        an->accumulate(n.grad.cwiseProduct(pass));
    });
}

Tensor interp_rows(const Tensor& src, const Tensor& pos) {
    if (pos.cols() != 1) throw ArgumentError("interp_rows: positions must be a column vector");
    const int n_src = src.rows();
    const int n_out = pos.rows();
    const int cols = src.cols();
    std::vector<int> lo(n_out), hi(n_out);
    std::vector<double> w(n_out);
    Mat v(n_out, cols);
    for (int i = 0; i < n_out; ++i) {
        double p = std::clamp(pos.value()(i, 0), 0.0, static_cast<double>(n_src - 1));
        lo[i] = static_cast<int>(std::floor(p));
        if (lo[i] >= n_src - 1) lo[i] = n_src - 2 >= 0 ? n_src - 2 : 0;
        hi[i] = std::min(lo[i] + 1, n_src - 1);
        w[i] = p - lo[i];
        v.row(i) = (1.0 - w[i]) * src.value().row(lo[i]) + w[i] * src.value().row(hi[i]);
    }
    auto sn = src.node(), pn = pos.node();
    return make_op(std::move(v), {src, pos}, [sn, pn, lo, hi, w, n_src, cols](Node& n) {
        Mat dsrc = Mat::Zero(n_src, cols);
        Mat dpos = Mat::Zero(static_cast<int>(lo.size()), 1);
        for (size_t i = 0; i < lo.size(); ++i) {
            dsrc.row(lo[i]) += (1.0 - w[i]) * n.grad.row(i);
            dsrc.row(hi[i]) += w[i] * n.grad.row(i);
            dpos(static_cast<int>(i), 0) =
                n.grad.row(i).dot(sn->value.row(hi[i]) - sn->value.row(lo[i]));
        }
        sn->accumulate(dsrc);
        pn->accumulate(dpos);
    });
}

Tensor dropout(const Tensor& a, double p, Rng& rng) {
    if (p <= 0.0) return a;
    if (p >= 1.0) throw ArgumentError("dropout: p must be < 1");
    std::bernoulli_distribution keep(1.0 - p);
    Mat mask(a.rows(), a.cols());
    const double inv = 1.0 / (1.0 - p);
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) mask(i, j) = keep(rng) ? inv : 0.0;
    auto an = a.node();
    return make_op(a.value().cwiseProduct(mask), {a}, [an, mask](Node& n) {
        an->accumulate(n.grad.cwiseProduct(mask));
    });
}

Tensor mse(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse");
    Tensor d = sub(a, b);
    return mean_all(cmul(d, d));
}

}  // namespace crossdiff::ag
