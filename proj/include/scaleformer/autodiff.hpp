#pragma once

// Reverse-mode automatic differentiation over rank-3 tensors.
//
// A Graph is a tape: every operation appends a node holding its forward value
// and a closure that pushes vector-Jacobian products into its parents. Node ids
// are assigned in creation order, which is a valid topological order, so
// backward() simply walks the tape in reverse. Gradients accumulate (+=), which
// is what makes a parameter reused at several places (e.g. every scale of the
// refinement loop) receive the sum of its contributions.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scaleformer/tensor.hpp"

namespace scaleformer {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

// Named registry of trainable tensors. References returned by add() stay valid
// for the lifetime of the set.
class ParameterSet {
public:
    Parameter& add(std::string name, Tensor value);
    Parameter& at(std::string_view name);
    const Parameter& at(std::string_view name) const;
    bool contains(std::string_view name) const;

    std::size_t size() const { return params_.size(); }
    // Total number of scalar entries across all tensors.
    std::size_t scalar_count() const;
    void zero_grad();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::deque<Parameter> params_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

namespace ad {

class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
class Var {
public:
    Var() = default;

    Graph& graph() const { return *graph_; }
    std::size_t id() const { return id_; }
    bool valid() const { return graph_ != nullptr; }
    const Tensor& value() const;
    const Shape& shape() const;

private:
    friend class Graph;
    Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    // With record_grad=false no backward closures are kept (inference mode).
    explicit Graph(bool record_grad = true) : record_grad_(record_grad) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    // One node per parameter per graph; repeated calls return the same node.
    Var param(Parameter& p);
    Var record(Tensor value, std::initializer_list<Var> parents, const char* tag, BackwardFn fn);
    Var record(Tensor value, std::span<const Var> parents, const char* tag, BackwardFn fn);

    // Seeds d(root)/d(root) = seed and accumulates into every parameter's grad.
    void backward(Var root, double seed = 1.0);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    const Tensor& value(Var v) const { return nodes_[v.id()].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
    // Upstream gradient of a node during/after backward (zeros if never reached).
    Tensor grad(Var v) const;
    // Accumulator of a node, allocated on first use.
    Tensor& grad_ref(std::size_t id);
    const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }
    const char* tag(Var v) const { return nodes_[v.id()].tag; }
    std::size_t size() const { return nodes_.size(); }
    bool recording() const { return record_grad_; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        const char* tag = "";
        std::vector<std::size_t> parents;
        BackwardFn backward;
        Parameter* param = nullptr;
        bool requires_grad = false;
    };

    bool record_grad_;
    std::deque<Node> nodes_;
    std::map<const Parameter*, std::size_t> param_nodes_;
};

// Elementwise binary ops broadcast dimensions of extent 1.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var x);
Var scale(Var x, double k);
Var shift(Var x, double k);

// (B|1, L, K) x (B|1, K, N) -> (B, L, N)
Var matmul(Var a, Var b);
// Swaps the last two axes.
Var transpose(Var x);

Var exp(Var x);
Var log(Var x);
Var sqrt(Var x);
Var pow(Var x, double exponent);
Var sin(Var x);
Var cos(Var x);
Var tanh(Var x);
Var relu(Var x);
Var sigmoid(Var x);
Var softplus(Var x);
Var abs(Var x);
Var erf(Var x);
Var clamp(Var x, double lo, double hi);

Var softmax(Var x);  // over the last axis
Var sum(Var x, int axis);
Var mean(Var x, int axis);
Var sum_all(Var x);
Var mean_all(Var x);
Var concat(std::span<const Var> parts, int axis);
Var concat(std::initializer_list<Var> parts, int axis);
Var slice(Var x, int axis, std::size_t begin, std::size_t end);
Var broadcast_to(Var x, Shape shape);
// Normalizes over the last axis, then applies gain and bias of shape (1, 1, W).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var dropout(Var x, double rate, std::mt19937_64& rng);
// Same value, no gradient flows back.
Var detach(Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var x) { return neg(x); }
inline Var operator*(Var x, double k) { return scale(x, k); }
inline Var operator*(double k, Var x) { return scale(x, k); }
inline Var operator/(Var x, double k) { return scale(x, 1.0 / k); }
inline Var operator+(Var x, double k) { return shift(x, k); }
inline Var operator+(double k, Var x) { return shift(x, k); }
inline Var operator-(Var x, double k) { return shift(x, -k); }
inline Var operator-(double k, Var x) { return shift(neg(x), k); }

// Central finite-difference check of a scalar function of `params`.
// Returns max over coordinates of |analytic - numeric| / max(1, |numeric|).
double grad_check(const std::function<Var(Graph&)>& f, ParameterSet& params, double h = 1e-6);

}  // namespace ad
}  // namespace scaleformer
