#include "gapnp/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace gapnp::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
    return ConstMap(t.storage().data(), static_cast<Eigen::Index>(rows),
                    static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
    return MutMap(t.storage().data(), static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cols));
}

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " +
                             shape_string(t.shape()));
    }
}

void require_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite input");
}

Graph& graph_of(Var v) {
    if (v.graph == nullptr) throw ContractError("variable is not attached to a graph");
    return *v.graph;
}

Graph& graph_of(Var a, Var b) {
    if (a.graph != b.graph) throw ContractError("operands belong to different graphs");
    return graph_of(a);
}

// Unary elementwise op: value = f(x), local derivative computed from (x, y).
template <class F, class D>
Var unary(Var x, F f, D dfdx) {
    Graph& g = graph_of(x);
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    const std::size_t xi = x.id;
    return g.record(std::move(out), {x}, [xi, dfdx](Graph& gr, std::size_t self) {
        const Tensor* gy = gr.grad_if_any(self);
        if (!gy) return;
        const Tensor& xv = gr.value(xi);
        const Tensor& yv = gr.value(self);
        Tensor& gx = gr.grad_buffer(xi);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*gy)[i] * dfdx(xv[i], yv[i]);
    });
}

enum class Broadcast { none, scalar_a, scalar_b };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Broadcast::none;
    if (b.size() == 1) return Broadcast::scalar_b;
    if (a.size() == 1) return Broadcast::scalar_a;
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
}

// Binary elementwise op with scalar broadcast. da/db give local partials.
template <class F, class DA, class DB>
Var binary(Var a, Var b, const char* name, F f, DA dfda, DB dfdb) {
    Graph& g = graph_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const Broadcast kind = broadcast_kind(av, bv, name);
    const Shape out_shape = kind == Broadcast::scalar_a ? bv.shape() : av.shape();
    Tensor out(out_shape);
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = kind == Broadcast::scalar_a ? av[0] : av[i];
        const double y = kind == Broadcast::scalar_b ? bv[0] : bv[i];
        out[i] = f(x, y);
    }
    const std::size_t ai = a.id;
    const std::size_t bi = b.id;
    return g.record(std::move(out), {a, b}, [ai, bi, kind, dfda, dfdb](Graph& gr, std::size_t self) {
        const Tensor* gy = gr.grad_if_any(self);
        if (!gy) return;
        const Tensor& av = gr.value(ai);
        const Tensor& bv = gr.value(bi);
        const std::size_t n = gy->size();
        auto x_at = [&](std::size_t i) { return kind == Broadcast::scalar_a ? av[0] : av[i]; };
        auto y_at = [&](std::size_t i) { return kind == Broadcast::scalar_b ? bv[0] : bv[i]; };
        if (gr.requires_grad(ai)) {
            Tensor& ga = gr.grad_buffer(ai);
            for (std::size_t i = 0; i < n; ++i) {
                ga[kind == Broadcast::scalar_a ? 0 : i] += (*gy)[i] * dfda(x_at(i), y_at(i));
            }
        }
        if (gr.requires_grad(bi)) {
            Tensor& gb = gr.grad_buffer(bi);
            for (std::size_t i = 0; i < n; ++i) {
                gb[kind == Broadcast::scalar_b ? 0 : i] += (*gy)[i] * dfdb(x_at(i), y_at(i));
            }
        }
    });
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// ParameterSet

void ParameterSet::add(const std::string& name, Tensor value) {
    if (contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
    params_.emplace(name, std::move(value));
}

Tensor& ParameterSet::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& ParameterSet::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.size();
    return n;
}

// ---------------------------------------------------------------------------
// Graph

const Tensor& Var::value() const { return graph_of(*this).value(id); }

Var Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Graph::variable(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = track_gradients_;
    return push(std::move(n));
}

Var Graph::parameter(const ParameterSet& params, const std::string& name) {
    if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return Var{this, it->second};
    Node n;
    n.external = &params.get(name);
    n.requires_grad = track_gradients_;
    n.param_name = name;
    Var v = push(std::move(n));
    param_nodes_.emplace(name, v.id);
    return v;
}

const Tensor& Graph::value(Var v) const { return value(v.id); }

const Tensor& Graph::value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.external ? *n.external : n.value;
}

Var Graph::record(Tensor value, const std::vector<Var>& parents, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    for (const Var& p : parents) {
        if (p.graph != this) throw ContractError("operand belongs to a different graph");
        n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
    return push(std::move(n));
}

Tensor& Graph::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor(value(id).shape());
        n.has_grad = true;
    }
    return n.grad;
}

const Tensor* Graph::grad_if_any(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.has_grad ? &n.grad : nullptr;
}

Tensor Graph::grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.has_grad ? n.grad : Tensor(value(v.id).shape());
}

void Graph::backward(Var loss) {
    if (loss.graph != this) throw ContractError("backward: loss belongs to a different graph");
    if (backward_done_) throw ContractError("backward: graph was already differentiated");
    if (value(loss.id).size() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " +
                            shape_string(value(loss.id).shape()));
    }
    backward_done_ = true;
    grad_buffer(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.backward && n.has_grad) n.backward(*this, i);
    }
}

Gradients Graph::parameter_gradients() const {
    Gradients out;
    for (const auto& [name, id] : param_nodes_) out.emplace(name, grad(Var{const_cast<Graph*>(this), id}));
    return out;
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(Var a, Var b) {
    Graph& g = graph_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_matrix(av, "matmul");
    require_matrix(bv, "matmul");
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (bv.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions differ for " + shape_string(av.shape()) +
                             " and " + shape_string(bv.shape()));
    }
    Tensor out({m, n});
    as_matrix(out, m, n).noalias() = as_matrix(av, m, k) * as_matrix(bv, k, n);
    const std::size_t ai = a.id, bi = b.id;
    return g.record(std::move(out), {a, b}, [ai, bi, m, k, n](Graph& gr, std::size_t self) {
        const Tensor* gy = gr.grad_if_any(self);
        if (!gy) return;
        auto gm = as_matrix(*gy, m, n);
        if (gr.requires_grad(ai)) {
            as_matrix(gr.grad_buffer(ai), m, k).noalias() +=
                gm * as_matrix(gr.value(bi), k, n).transpose();
        }
        if (gr.requires_grad(bi)) {
            as_matrix(gr.grad_buffer(bi), k, n).noalias() +=
                as_matrix(gr.value(ai), m, k).transpose() * gm;
        }
    });
}

Var bmm(Var a, Var b, bool transpose_b) {
    Graph& g = graph_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0)) {
        throw DimensionError("bmm: incompatible shapes " + shape_string(av.shape()) + " and " +
                             shape_string(bv.shape()));
    }
    const std::size_t batch = av.dim(0), m = av.dim(1), k = av.dim(2);
    const std::size_t bk = transpose_b ? bv.dim(2) : bv.dim(1);
    const std::size_t n = transpose_b ? bv.dim(1) : bv.dim(2);
    if (bk != k) {
        throw DimensionError("bmm: inner dimensions differ for " + shape_string(av.shape()) +
                             " and " + shape_string(bv.shape()));
    }
    Tensor out({batch, m, n});
    const std::size_t a_stride = m * k, b_stride = k * n, o_stride = m * n;
    for (std::size_t i = 0; i < batch; ++i) {
        ConstMap am(av.storage().data() + i * a_stride, m, k);
        MutMap om(out.storage().data() + i * o_stride, m, n);
        if (transpose_b) {
            ConstMap bm(bv.storage().data() + i * b_stride, n, k);
            om.noalias() = am * bm.transpose();
        } else {
            ConstMap bm(bv.storage().data() + i * b_stride, k, n);
            om.noalias() = am * bm;
        }
    }
    const std::size_t ai = a.id, bi = b.id;
    return g.record(std::move(out), {a, b},
                    [=](Graph& gr, std::size_t self) {
                        const Tensor* gy = gr.grad_if_any(self);
                        if (!gy) return;
                        const Tensor& avv = gr.value(ai);
                        const Tensor& bvv = gr.value(bi);
                        const bool need_a = gr.requires_grad(ai);
                        const bool need_b = gr.requires_grad(bi);
                        Tensor* ga = need_a ? &gr.grad_buffer(ai) : nullptr;
                        Tensor* gb = need_b ? &gr.grad_buffer(bi) : nullptr;
                        for (std::size_t i = 0; i < batch; ++i) {
                            ConstMap gm(gy->storage().data() + i * o_stride, m, n);
                            ConstMap am(avv.storage().data() + i * a_stride, m, k);
                            if (transpose_b) {
                                ConstMap bm(bvv.storage().data() + i * b_stride, n, k);
                                if (ga) MutMap(ga->storage().data() + i * a_stride, m, k).noalias() += gm * bm;
                                if (gb) MutMap(gb->storage().data() + i * b_stride, n, k).noalias() += gm.transpose() * am;
                            } else {
                                ConstMap bm(bvv.storage().data() + i * b_stride, k, n);
                                if (ga) MutMap(ga->storage().data() + i * a_stride, m, k).noalias() += gm * bm.transpose();
                                if (gb) MutMap(gb->storage().data() + i * b_stride, k, n).noalias() += am.transpose() * gm;
                            }
                        }
                    });
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(Var a, Var b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Var add_bias(Var x, Var bias) {
    Graph& g = graph_of(x, bias);
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    require_matrix(xv, "add_bias");
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    if (bv.size() != cols) {
        throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " does not match " +
                             shape_string(xv.shape()));
    }
    Tensor out = xv;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
    const std::size_t xi = x.id, bi = bias.id;
    return g.record(std::move(out), {x, bias}, [xi, bi, rows, cols](Graph& gr, std::size_t self) {
        const Tensor* gy = gr.grad_if_any(self);
        if (!gy) return;
        if (gr.requires_grad(xi)) {
            Tensor& gx = gr.grad_buffer(xi);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*gy)[i];
        }
        if (gr.requires_grad(bi)) {
            Tensor& gb = gr.grad_buffer(bi);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) gb[c] += (*gy)[r * cols + c];
        }
    });
}

Var scale(Var x, double c) {
    return unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var add_scalar(Var x, double c) {
    return unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var neg(Var x) { return scale(x, -1.0); }

Var square(Var x) {
    return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var tanh(Var x) {
    return unary(x, [](double v) { return std::tanh(v); },
                 [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var x) {
    return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
                 [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var x) {
    return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
    const Tensor& xv = x.value();
    require_finite(xv, "log");
    for (double v : xv.data()) {
        if (!(v > 0.0)) throw NumericError("log: argument must be positive, got " + std::to_string(v));
    }
    return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var softplus(Var x) {
    require_finite(x.value(), "softplus");
    return unary(x, stable_softplus, [](double v, double) { return sigmoid(v); });
}

Var elementwise(Elementwise op, const std::vector<Var>& args) {
    const bool binary_op = op == Elementwise::add || op == Elementwise::mul;
    if (args.size() != (binary_op ? 2u : 1u)) {
        throw ContractError("elementwise: wrong number of operands");
    }
    switch (op) {
        case Elementwise::add: return add(args[0], args[1]);
        case Elementwise::mul: return mul(args[0], args[1]);
        case Elementwise::tanh: return tanh(args[0]);
        case Elementwise::relu: return relu(args[0]);
        case Elementwise::exp: return exp(args[0]);
        case Elementwise::log: return log(args[0]);
        case Elementwise::softplus: return softplus(args[0]);
    }
    throw ContractError("elementwise: unknown op");
}

// ---------------------------------------------------------------------------
// Softmax and reductions

Var softmax(Var x) {
    Graph& g = graph_of(x);
    const Tensor& xv = x.value();
    const std::size_t n = xv.shape().back();
    const std::size_t groups = xv.size() / n;
    Tensor out(xv.shape());
    for (std::size_t r = 0; r < groups; ++r) {
        const double* in = xv.storage().data() + r * n;
        double* o = out.storage().data() + r * n;
        const double mx = *std::max_element(in, in + n);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            o[i] = std::exp(in[i] - mx);
            total += o[i];
        }
        for (std::size_t i = 0; i < n; ++i) o[i] /= total;
    }
    const std::size_t xi = x.id;
    return g.record(std::move(out), {x}, [xi, n, groups](Graph& gr, std::size_t self) {
        const Tensor* gy = gr.grad_if_any(self);
        if (!gy) return;
        const Tensor& y = gr.value(self);
        Tensor& gx = gr.grad_buffer(xi);
        for (std::size_t r = 0; r < groups; ++r) {
            const std::size_t off = r * n;
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += (*gy)[off + i] * y[off + i];
            for (std::size_t i = 0; i < n; ++i) gx[off + i] += y[off + i] * ((*gy)[off + i] - dot);
        }
    });
}

Var reduce(Reduction op, Var x, std::size_t axis) {
    Graph& g = graph_of(x);
    const Tensor& xv = x.value();
    if (xv.rank() > 2 || axis >= xv.rank()) {
        throw DimensionError("reduce: axis " + std::to_string(axis) + " invalid for shape " +
                             shape_string(xv.shape()));
    }
    const std::size_t rows = xv.rows(), cols = xv.cols();
    // A rank-1 tensor reduces along its only axis, which is the column axis of the 1 x n view.
    const bool along_rows = xv.rank() == 2 && axis == 0;
    const std::size_t extent = along_rows ? rows : cols;
    const double w = op == Reduction::mean ? 1.0 / static_cast<double>(extent) : 1.0;
    Tensor out(Shape{along_rows ? cols : rows});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[along_rows ? c : r] += w * xv[r * cols + c];
    const std::size_t xi = x.id;
    return g.record(std::move(out), {x}, [xi, rows, cols, along_rows, w](Graph& gr, std::size_t self) {
        const Tensor* gy = gr.grad_if_any(self);
        if (!gy) return;
        Tensor& gx = gr.grad_buffer(xi);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += w * (*gy)[along_rows ? c : r];
    });
}

Var sum(Var x, std::size_t axis) { return reduce(Reduction::sum, x, axis); }
Var mean(Var x, std::size_t axis) { return reduce(Reduction::mean, x, axis); }

Var sum_all(Var x) { return reduce(Reduction::sum, reshape(x, {x.value().size()}), 0); }
Var mean_all(Var x) { return reduce(Reduction::mean, reshape(x, {x.value().size()}), 0); }

// ---------------------------------------------------------------------------
// Layout

Var reshape(Var x, Shape shape) {
    Graph& g = graph_of(x);
    Tensor out = x.value().reshaped(std::move(shape));
    const std::size_t xi = x.id;
    return g.record(std::move(out), {x}, [xi](Graph& gr, std::size_t self) {
        const Tensor* gy = gr.grad_if_any(self);
        if (!gy) return;
        Tensor& gx = gr.grad_buffer(xi);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*gy)[i];
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no operands");
    Graph& g = graph_of(parts.front());
    const std::size_t rows = parts.front().value().rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const Var& p : parts) {
        const Tensor& t = p.value();
        require_matrix(t, "concat_cols");
        if (t.dim(0) != rows) {
            throw DimensionError("concat_cols: row count mismatch " +
                                 shape_string(parts.front().shape()) + " vs " + shape_string(t.shape()));
        }
        widths.push_back(t.dim(1));
        total += t.dim(1);
    }
    Tensor out({rows, total});
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const Tensor& t = parts[p].value();
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(t.storage().data() + r * widths[p], widths[p],
                        out.storage().data() + r * total + offset);
        offset += widths[p];
    }
    std::vector<std::size_t> ids;
    for (const Var& p : parts) ids.push_back(p.id);
    return g.record(std::move(out), parts, [ids, widths, rows, total](Graph& gr, std::size_t self) {
        const Tensor* gy = gr.grad_if_any(self);
        if (!gy) return;
        std::size_t offset = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
            if (gr.requires_grad(ids[p])) {
                Tensor& gp = gr.grad_buffer(ids[p]);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < widths[p]; ++c)
                        gp[r * widths[p] + c] += (*gy)[r * total + offset + c];
            }
            offset += widths[p];
        }
    });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
    Graph& g = graph_of(x);
    const Tensor& xv = x.value();
    require_matrix(xv, "slice_cols");
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    if (begin >= end || end > cols) {
        throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") invalid for " + shape_string(xv.shape()));
    }
    const std::size_t w = end - begin;
    Tensor out({rows, w});
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(xv.storage().data() + r * cols + begin, w, out.storage().data() + r * w);
    const std::size_t xi = x.id;
    return g.record(std::move(out), {x}, [xi, rows, cols, begin, w](Graph& gr, std::size_t self) {
        const Tensor* gy = gr.grad_if_any(self);
        if (!gy) return;
        Tensor& gx = gr.grad_buffer(xi);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) gx[r * cols + begin + c] += (*gy)[r * w + c];
    });
}

Var swap_axes12(Var x) {
    Graph& g = graph_of(x);
    const Tensor& xv = x.value();
    if (xv.rank() != 4) throw DimensionError("swap_axes12: expected rank 4, got " + shape_string(xv.shape()));
    const std::size_t a = xv.dim(0), b = xv.dim(1), c = xv.dim(2), d = xv.dim(3);
    Tensor out({a, c, b, d});
    auto src_index = [=](std::size_t i, std::size_t j, std::size_t k) { return ((i * b + j) * c + k) * d; };
    auto dst_index = [=](std::size_t i, std::size_t j, std::size_t k) { return ((i * c + k) * b + j) * d; };
    for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j)
            for (std::size_t k = 0; k < c; ++k)
                std::copy_n(xv.storage().data() + src_index(i, j, k), d,
                            out.storage().data() + dst_index(i, j, k));
    const std::size_t xi = x.id;
    return g.record(std::move(out), {x}, [=](Graph& gr, std::size_t self) {
        const Tensor* gy = gr.grad_if_any(self);
        if (!gy) return;
        Tensor& gx = gr.grad_buffer(xi);
        for (std::size_t i = 0; i < a; ++i)
            for (std::size_t j = 0; j < b; ++j)
                for (std::size_t k = 0; k < c; ++k)
                    for (std::size_t l = 0; l < d; ++l)
                        gx[src_index(i, j, k) + l] += (*gy)[dst_index(i, j, k) + l];
    });
}

}  // namespace gapnp::ad
