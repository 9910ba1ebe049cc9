#pragma once

// Define-by-run reverse-mode automatic differentiation over dense tensors.
//
// A Graph records every operation as a node in construction order, so the
// node index order is already a topological order. backward() walks it in
// reverse exactly once.

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gapnp/tensor.hpp"

namespace gapnp::ad {

/// Named, ordered collection of trainable tensors.
class ParameterSet {
public:
    void add(const std::string& name, Tensor value);
    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;

    std::map<std::string, Tensor>& items() { return params_; }
    const std::map<std::string, Tensor>& items() const { return params_; }

    /// Total number of scalar parameters.
    std::size_t scalar_count() const;

private:
    std::map<std::string, Tensor> params_;
};

using Gradients = std::map<std::string, Tensor>;

class Graph;

/// Handle to a node inside a Graph.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    /// With track_gradients = false parameters are plain constants and no
    /// backward closures are stored (inference mode).
    explicit Graph(bool track_gradients = true) : track_gradients_(track_gradients) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Leaf that never receives a gradient.
    Var constant(Tensor value);
    /// Leaf that receives a gradient (used for probes and input sensitivities).
    Var variable(Tensor value);
    /// Leaf bound to a named parameter. The tensor is referenced, not copied,
    /// and must outlive the graph. Repeated requests return the same node.
    Var parameter(const ParameterSet& params, const std::string& name);

    const Tensor& value(Var v) const;
    const Tensor& value(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Gradient of the last backward() loss with respect to v (zeros if unreached).
    Tensor grad(Var v) const;

    /// Populates gradients of a scalar loss. A graph may be differentiated once.
    void backward(Var loss);
    bool backward_done() const { return backward_done_; }

    /// Gradients of every parameter leaf, keyed by parameter name.
    Gradients parameter_gradients() const;

    std::size_t size() const { return nodes_.size(); }
    bool tracks_gradients() const { return track_gradients_; }

    // Used by operation implementations.
    Var record(Tensor value, const std::vector<Var>& parents, BackwardFn fn);
    Tensor& grad_buffer(std::size_t id);
    const Tensor* grad_if_any(std::size_t id) const;

private:
    struct Node {
        Tensor value;
        const Tensor* external = nullptr;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        BackwardFn backward;
        std::string param_name;
    };

    Var push(Node node);

    std::deque<Node> nodes_;  // stable addresses: value() references survive later ops
    std::map<std::string, std::size_t> param_nodes_;
    bool backward_done_ = false;
    bool track_gradients_ = true;
};

// Linear algebra.
Var matmul(Var a, Var b);
/// Batched product over the leading axis: [B,m,k] x [B,k,n] -> [B,m,n].
/// With transpose_b the second operand is [B,n,k].
Var bmm(Var a, Var b, bool transpose_b = false);

// Elementwise. Binary ops require equal shapes or a one-element operand.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// x[n x d] + bias[d] broadcast over rows.
Var add_bias(Var x, Var bias);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
Var neg(Var x);
Var square(Var x);
Var tanh(Var x);
Var relu(Var x);
Var exp(Var x);
Var log(Var x);
Var softplus(Var x);

enum class Elementwise { add, mul, tanh, relu, exp, log, softplus };
/// Dispatches to the matching op; unary ops take one argument, binary two.
Var elementwise(Elementwise op, const std::vector<Var>& args);

/// Max-stabilized softmax along the last axis.
Var softmax(Var x);

enum class Reduction { sum, mean };
/// Reduces one axis of a rank-2 tensor; the axis is dropped from the result
/// (a reduced rank-1 tensor becomes shape [1]).
Var reduce(Reduction op, Var x, std::size_t axis);
Var sum(Var x, std::size_t axis);
Var mean(Var x, std::size_t axis);
Var sum_all(Var x);
Var mean_all(Var x);

// Layout.
Var reshape(Var x, Shape shape);
/// Concatenates rank-2 tensors with equal row counts along columns.
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
/// [a,b,c,d] -> [a,c,b,d].
Var swap_axes12(Var x);

}  // namespace gapnp::ad
