#include "scaleformer/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <cblas.h>

#include "scaleformer/error.hpp"

namespace scaleformer {

Parameter& ParameterSet::add(std::string name, Tensor value) {
    if (index_.contains(name)) {
        throw ConfigError("duplicate parameter name '" + name + "'");
    }
    index_.emplace(name, params_.size());
    Tensor grad(value.shape(), 0.0);
    params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad)});
    return params_.back();
}

Parameter& ParameterSet::at(std::string_view name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
    return params_[it->second];
}

const Parameter& ParameterSet::at(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
    return params_[it->second];
}

bool ParameterSet::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) {
        if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape(), 0.0);
        std::fill(p.grad.data().begin(), p.grad.data().end(), 0.0);
    }
}

namespace ad {

const Tensor& Var::value() const { return graph_->value(id_); }
const Shape& Var::shape() const { return graph_->value(id_).shape(); }

Var Graph::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.tag = "const";
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Graph::param(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
    Node n;
    n.value = p.value;
    n.tag = "param";
    n.param = &p;
    n.requires_grad = record_grad_;
    nodes_.push_back(std::move(n));
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::initializer_list<Var> parents, const char* tag, BackwardFn fn) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), tag,
                  std::move(fn));
}

Var Graph::record(Tensor value, std::span<const Var> parents, const char* tag, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.tag = tag;
    n.parents.reserve(parents.size());
    bool needs = false;
    for (const auto& p : parents) {
        if (p.graph_ != this) throw Error(std::string(tag) + ": operand belongs to another graph");
        n.parents.push_back(p.id_);
        needs = needs || nodes_[p.id_].requires_grad;
    }
    n.requires_grad = record_grad_ && needs;
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_ref(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape(), 0.0);
    return n.grad;
}

Tensor Graph::grad(Var v) const {
    const auto& n = nodes_[v.id()];
    if (n.grad.shape() != n.value.shape()) return Tensor(n.value.shape(), 0.0);
    return n.grad;
}

void Graph::backward(Var root, double seed) {
    if (root.graph_ != this) throw Error("backward: root belongs to another graph");
    if (nodes_[root.id_].value.size() != 1) {
        throw ShapeError("backward: root must be scalar, got " + nodes_[root.id_].value.shape().str());
    }
    for (auto& n : nodes_) n.grad = Tensor();
    if (!nodes_[root.id_].requires_grad) return;
    grad_ref(root.id_)[0] = seed;
    for (std::size_t id = root.id_ + 1; id-- > 0;) {
        auto& n = nodes_[id];
        if (!n.requires_grad || n.grad.size() == 0) continue;
        if (n.backward) n.backward(*this, id);
        if (n.param != nullptr) {
            auto& pg = n.param->grad;
            if (pg.shape() != n.value.shape()) pg = Tensor(n.value.shape(), 0.0);
            for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
        }
    }
}

namespace {

struct Strides {
    std::size_t b, l, w;
};

Strides broadcast_strides(const Shape& s) {
    return {s.b == 1 ? 0 : s.l * s.w, s.l == 1 ? 0 : s.w, s.w == 1 ? std::size_t{0} : std::size_t{1}};
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    Shape out;
    for (int ax = 0; ax < 3; ++ax) {
        if (a[ax] == b[ax] || b[ax] == 1) {
            out[ax] = a[ax];
        } else if (a[ax] == 1) {
            out[ax] = b[ax];
        } else {
            throw ShapeError(std::string(op) + ": cannot broadcast " + a.str() + " with " + b.str());
        }
    }
    return out;
}

// Calls f(out_index, a_index, b_index) over the broadcast output.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, F&& f) {
    const auto sa = broadcast_strides(a);
    const auto sb = broadcast_strides(b);
    std::size_t o = 0;
    for (std::size_t bi = 0; bi < out.b; ++bi) {
        for (std::size_t li = 0; li < out.l; ++li) {
            const std::size_t ab = bi * sa.b + li * sa.l;
            const std::size_t bb = bi * sb.b + li * sb.l;
            for (std::size_t wi = 0; wi < out.w; ++wi) f(o++, ab + wi * sa.w, bb + wi * sb.w);
        }
    }
}

enum class BinOp { add, sub, mul, div };

Var binary(Var a, Var b, BinOp op, const char* tag) {
    auto& g = a.graph();
    const Shape out_shape = broadcast_shape(a.shape(), b.shape(), tag);
    Tensor out(out_shape);
    const auto& av = a.value().data();
    const auto& bv = b.value().data();
    auto& ov = out.data();
    if (a.shape() == b.shape()) {
        const std::size_t n = ov.size();
        switch (op) {
            case BinOp::add: for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i]; break;
            case BinOp::sub: for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] - bv[i]; break;
            case BinOp::mul: for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i]; break;
            case BinOp::div: for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] / bv[i]; break;
        }
    } else {
        for_each_broadcast(out_shape, a.shape(), b.shape(), [&](std::size_t o, std::size_t i, std::size_t j) {
            switch (op) {
                case BinOp::add: ov[o] = av[i] + bv[j]; break;
                case BinOp::sub: ov[o] = av[i] - bv[j]; break;
                case BinOp::mul: ov[o] = av[i] * bv[j]; break;
                case BinOp::div: ov[o] = av[i] / bv[j]; break;
            }
        });
    }
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return g.record(std::move(out), {a, b}, tag, [ia, ib, op](Graph& gr, std::size_t self) {
        const auto& go = gr.grad_ref(self).data();
        const auto& oshape = gr.value(self).shape();
        const auto& av = gr.value(ia).data();
        const auto& bv = gr.value(ib).data();
        const bool need_a = gr.requires_grad(ia);
        const bool need_b = gr.requires_grad(ib);
        double* ga = need_a ? gr.grad_ref(ia).data().data() : nullptr;
        double* gb = need_b ? gr.grad_ref(ib).data().data() : nullptr;
        if (gr.value(ia).shape() == gr.value(ib).shape()) {
            const std::size_t n = go.size();
            switch (op) {
                case BinOp::add:
                    if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += go[i];
                    if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] += go[i];
                    break;
                case BinOp::sub:
                    if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += go[i];
                    if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] -= go[i];
                    break;
                case BinOp::mul:
                    if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] * bv[i];
                    if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] += go[i] * av[i];
                    break;
                case BinOp::div:
                    if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += go[i] / bv[i];
                    if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] -= go[i] * av[i] / (bv[i] * bv[i]);
                    break;
            }
            return;
        }
        for_each_broadcast(oshape, gr.value(ia).shape(), gr.value(ib).shape(),
                           [&](std::size_t o, std::size_t i, std::size_t j) {
                               const double d = go[o];
                               switch (op) {
                                   case BinOp::add:
                                       if (ga) ga[i] += d;
                                       if (gb) gb[j] += d;
                                       break;
                                   case BinOp::sub:
                                       if (ga) ga[i] += d;
                                       if (gb) gb[j] -= d;
                                       break;
                                   case BinOp::mul:
                                       if (ga) ga[i] += d * bv[j];
                                       if (gb) gb[j] += d * av[i];
                                       break;
                                   case BinOp::div:
                                       if (ga) ga[i] += d / bv[j];
                                       if (gb) gb[j] -= d * av[i] / (bv[j] * bv[j]);
                                       break;
                               }
                           });
    });
}

// Elementwise op with derivative expressed through (x, y).
template <class Fwd, class Deriv>
Var unary(Var x, const char* tag, Fwd fwd, Deriv deriv) {
    Tensor out(x.shape());
    const auto& xv = x.value().data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = fwd(xv[i]);
    const std::size_t ix = x.id();
    return x.graph().record(std::move(out), {x}, tag, [ix, deriv](Graph& gr, std::size_t self) {
        const auto& go = gr.grad_ref(self).data();
        const auto& xv = gr.value(ix).data();
        const auto& yv = gr.value(self).data();
        auto& gx = gr.grad_ref(ix).data();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * deriv(xv[i], yv[i]);
    });
}

int blas_int(std::size_t n) { return static_cast<int>(n); }

// C(LxN) += A(LxK) B(KxN)
void gemm_nn(const double* A, const double* B, double* C, std::size_t L, std::size_t K, std::size_t N) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, blas_int(L), blas_int(N), blas_int(K), 1.0, A,
                blas_int(K), B, blas_int(N), 1.0, C, blas_int(N));
}

// C(LxK) += G(LxN) B(KxN)^T
void gemm_nt(const double* G, const double* B, double* C, std::size_t L, std::size_t N, std::size_t K) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, blas_int(L), blas_int(K), blas_int(N), 1.0, G,
                blas_int(N), B, blas_int(N), 1.0, C, blas_int(K));
}

// C(KxN) += A(LxK)^T G(LxN)
void gemm_tn(const double* A, const double* G, double* C, std::size_t L, std::size_t K, std::size_t N) {
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, blas_int(K), blas_int(N), blas_int(L), 1.0, A,
                blas_int(K), G, blas_int(N), 1.0, C, blas_int(N));
}

void check_axis(int axis, const char* op) {
    if (axis < 0 || axis > 2) throw ShapeError(std::string(op) + ": axis must be 0, 1 or 2");
}

std::size_t offset(const Shape& s, std::size_t b, std::size_t l, std::size_t w) {
    return (b * s.l + l) * s.w + w;
}

}  // namespace

Var add(Var a, Var b) { return binary(a, b, BinOp::add, "add"); }
Var sub(Var a, Var b) { return binary(a, b, BinOp::sub, "sub"); }
Var mul(Var a, Var b) { return binary(a, b, BinOp::mul, "mul"); }
Var div(Var a, Var b) { return binary(a, b, BinOp::div, "div"); }

Var neg(Var x) {
    return unary(x, "neg", [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Var scale(Var x, double k) {
    return unary(x, "scale", [k](double v) { return k * v; }, [k](double, double) { return k; });
}

Var shift(Var x, double k) {
    return unary(x, "shift", [k](double v) { return v + k; }, [](double, double) { return 1.0; });
}

Var matmul(Var a, Var b) {
    const Shape sa = a.shape();
    const Shape sb = b.shape();
    if (sa.w != sb.l) throw ShapeError("matmul: inner dims differ " + sa.str() + " x " + sb.str());
    if (sa.b != sb.b && sa.b != 1 && sb.b != 1) {
        throw ShapeError("matmul: batch mismatch " + sa.str() + " x " + sb.str());
    }
    const std::size_t B = std::max(sa.b, sb.b);
    const std::size_t L = sa.l, K = sa.w, N = sb.w;
    Tensor out(Shape{B, L, N}, 0.0);
    const double* A = a.value().data().data();
    const double* Bm = b.value().data().data();
    // A shared right operand lets the whole batch go through one product.
    const bool fold = sb.b == 1;
    if (fold) {
        gemm_nn(A, Bm, out.data().data(), B * L, K, N);
    } else {
        for (std::size_t bi = 0; bi < B; ++bi) {
            const double* ab = A + (sa.b == 1 ? 0 : bi * L * K);
            gemm_nn(ab, Bm + bi * K * N, out.data().data() + bi * L * N, L, K, N);
        }
    }
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return a.graph().record(std::move(out), {a, b}, "matmul", [ia, ib, sa, sb, B, L, K, N, fold](Graph& gr, std::size_t self) {
        const double* G = gr.grad_ref(self).data().data();
        const double* A = gr.value(ia).data().data();
        const double* Bm = gr.value(ib).data().data();
        const bool need_a = gr.requires_grad(ia);
        const bool need_b = gr.requires_grad(ib);
        double* gA = need_a ? gr.grad_ref(ia).data().data() : nullptr;
        double* gB = need_b ? gr.grad_ref(ib).data().data() : nullptr;
        if (fold) {
            if (gA) gemm_nt(G, Bm, gA, B * L, N, K);
            if (gB) gemm_tn(A, G, gB, B * L, K, N);
            return;
        }
        for (std::size_t bi = 0; bi < B; ++bi) {
            const std::size_t oa = sa.b == 1 ? 0 : bi * L * K;
            const std::size_t ob = sb.b == 1 ? 0 : bi * K * N;
            const double* gb = G + bi * L * N;
            if (gA) gemm_nt(gb, Bm + ob, gA + oa, L, N, K);
            if (gB) gemm_tn(A + oa, gb, gB + ob, L, K, N);
        }
    });
}

Var transpose(Var x) {
    const Shape s = x.shape();
    Tensor out(Shape{s.b, s.w, s.l});
    const auto& xv = x.value();
    for (std::size_t b = 0; b < s.b; ++b)
        for (std::size_t l = 0; l < s.l; ++l)
            for (std::size_t w = 0; w < s.w; ++w) out(b, w, l) = xv(b, l, w);
    const std::size_t ix = x.id();
    return x.graph().record(std::move(out), {x}, "transpose", [ix, s](Graph& gr, std::size_t self) {
        const auto& go = gr.grad_ref(self);
        auto& gx = gr.grad_ref(ix);
        for (std::size_t b = 0; b < s.b; ++b)
            for (std::size_t l = 0; l < s.l; ++l)
                for (std::size_t w = 0; w < s.w; ++w) gx(b, l, w) += go(b, w, l);
    });
}

Var exp(Var x) {
    return unary(x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
    for (double v : x.value().data()) {
        if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
    }
    return unary(x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var sqrt(Var x) {
    for (double v : x.value().data()) {
        if (v < 0.0 || std::isnan(v)) throw DomainError("sqrt of negative value " + std::to_string(v));
    }
    return unary(x, "sqrt", [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Var pow(Var x, double p) {
    const bool integral = std::floor(p) == p;
    for (double v : x.value().data()) {
        if (v < 0.0 && !integral) throw DomainError("pow: negative base with non-integer exponent");
        if (v == 0.0 && p < 0.0) throw DomainError("pow: zero base with negative exponent");
    }
    return unary(
        x, "pow", [p](double v) { return std::pow(v, p); },
        [p](double v, double) { return p == 0.0 ? 0.0 : p * std::pow(v, p - 1.0); });
}

Var sin(Var x) {
    return unary(x, "sin", [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

Var cos(Var x) {
    return unary(x, "cos", [](double v) { return std::cos(v); }, [](double v, double) { return -std::sin(v); });
}

Var tanh(Var x) {
    return unary(x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var x) {
    return unary(x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
                 [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

namespace {
double sigmoid_scalar(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}
}  // namespace

Var sigmoid(Var x) {
    return unary(x, "sigmoid", sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var x) {
    return unary(
        x, "softplus", [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
        [](double v, double) { return sigmoid_scalar(v); });
}

Var abs(Var x) {
    return unary(x, "abs", [](double v) { return std::abs(v); },
                 [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var erf(Var x) {
    return unary(x, "erf", [](double v) { return std::erf(v); },
                 [](double v, double) { return 2.0 * std::numbers::inv_sqrtpi * std::exp(-v * v); });
}

Var clamp(Var x, double lo, double hi) {
    return unary(x, "clamp", [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
                 [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Var softmax(Var x) {
    const Shape s = x.shape();
    Tensor out(s);
    const auto& xv = x.value().data();
    auto& ov = out.data();
    const std::size_t rows = s.b * s.l;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * s.w;
        double* yr = ov.data() + r * s.w;
        const double mx = *std::max_element(xr, xr + s.w);
        double z = 0.0;
        for (std::size_t j = 0; j < s.w; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            z += yr[j];
        }
        for (std::size_t j = 0; j < s.w; ++j) yr[j] /= z;
    }
    const std::size_t ix = x.id();
    return x.graph().record(std::move(out), {x}, "softmax", [ix, rows, s](Graph& gr, std::size_t self) {
        const auto& go = gr.grad_ref(self).data();
        const auto& yv = gr.value(self).data();
        auto& gx = gr.grad_ref(ix).data();
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t o = r * s.w;
            double dot = 0.0;
            for (std::size_t j = 0; j < s.w; ++j) dot += go[o + j] * yv[o + j];
            for (std::size_t j = 0; j < s.w; ++j) gx[o + j] += yv[o + j] * (go[o + j] - dot);
        }
    });
}

Var sum(Var x, int axis) {
    check_axis(axis, "sum");
    const Shape s = x.shape();
    Shape os = s;
    os[axis] = 1;
    Tensor out(os, 0.0);
    const auto& xv = x.value();
    for (std::size_t b = 0; b < s.b; ++b)
        for (std::size_t l = 0; l < s.l; ++l)
            for (std::size_t w = 0; w < s.w; ++w)
                out(axis == 0 ? 0 : b, axis == 1 ? 0 : l, axis == 2 ? 0 : w) += xv(b, l, w);
    const std::size_t ix = x.id();
    return x.graph().record(std::move(out), {x}, "sum", [ix, s, axis](Graph& gr, std::size_t self) {
        const auto& go = gr.grad_ref(self);
        auto& gx = gr.grad_ref(ix);
        for (std::size_t b = 0; b < s.b; ++b)
            for (std::size_t l = 0; l < s.l; ++l)
                for (std::size_t w = 0; w < s.w; ++w)
                    gx(b, l, w) += go(axis == 0 ? 0 : b, axis == 1 ? 0 : l, axis == 2 ? 0 : w);
    });
}

Var mean(Var x, int axis) {
    check_axis(axis, "mean");
    const double n = static_cast<double>(x.shape()[axis]);
    return scale(sum(x, axis), 1.0 / n);
}

Var sum_all(Var x) {
    double total = 0.0;
    for (double v : x.value().data()) total += v;
    const std::size_t ix = x.id();
    return x.graph().record(Tensor::scalar(total), {x}, "sum_all", [ix](Graph& gr, std::size_t self) {
        const double d = gr.grad_ref(self)[0];
        for (double& g : gr.grad_ref(ix).data()) g += d;
    });
}

Var mean_all(Var x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.value().size())); }

Var concat(std::span<const Var> parts, int axis) {
    check_axis(axis, "concat");
    if (parts.empty()) throw ShapeError("concat: no operands");
    Shape os = parts.front().shape();
    os[axis] = 0;
    for (const auto& p : parts) {
        const Shape& ps = p.shape();
        for (int ax = 0; ax < 3; ++ax) {
            if (ax != axis && ps[ax] != os[ax]) {
                throw ShapeError("concat: incompatible shapes " + parts.front().shape().str() + " and " + ps.str());
            }
        }
        os[axis] += ps[axis];
    }
    Tensor out(os);
    std::vector<std::size_t> ids;
    std::vector<std::size_t> starts;
    std::size_t start = 0;
    for (const auto& p : parts) {
        const Shape& ps = p.shape();
        const auto& pv = p.value();
        for (std::size_t b = 0; b < ps.b; ++b)
            for (std::size_t l = 0; l < ps.l; ++l)
                for (std::size_t w = 0; w < ps.w; ++w)
                    out(b + (axis == 0 ? start : 0), l + (axis == 1 ? start : 0), w + (axis == 2 ? start : 0)) =
                        pv(b, l, w);
        ids.push_back(p.id());
        starts.push_back(start);
        start += ps[axis];
    }
    auto& g = parts.front().graph();
    return g.record(std::move(out), parts, "concat", [ids, starts, axis](Graph& gr, std::size_t self) {
        const auto& go = gr.grad_ref(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!gr.requires_grad(ids[k])) continue;
            auto& gp = gr.grad_ref(ids[k]);
            const Shape ps = gp.shape();
            const std::size_t st = starts[k];
            for (std::size_t b = 0; b < ps.b; ++b)
                for (std::size_t l = 0; l < ps.l; ++l)
                    for (std::size_t w = 0; w < ps.w; ++w)
                        gp(b, l, w) += go(b + (axis == 0 ? st : 0), l + (axis == 1 ? st : 0), w + (axis == 2 ? st : 0));
        }
    });
}

Var concat(std::initializer_list<Var> parts, int axis) {
    return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var slice(Var x, int axis, std::size_t begin, std::size_t end) {
    check_axis(axis, "slice");
    const Shape s = x.shape();
    if (begin >= end || end > s[axis]) {
        throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + s.str());
    }
    Shape os = s;
    os[axis] = end - begin;
    Tensor out(os);
    const auto& xv = x.value();
    const std::size_t ob = axis == 0 ? begin : 0, ol = axis == 1 ? begin : 0, ow = axis == 2 ? begin : 0;
    for (std::size_t b = 0; b < os.b; ++b)
        for (std::size_t l = 0; l < os.l; ++l)
            std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>(offset(s, b + ob, l + ol, ow)), os.w,
                        out.data().begin() + static_cast<std::ptrdiff_t>(offset(os, b, l, 0)));
    const std::size_t ix = x.id();
    return x.graph().record(std::move(out), {x}, "slice", [ix, os, ob, ol, ow](Graph& gr, std::size_t self) {
        const auto& go = gr.grad_ref(self);
        auto& gx = gr.grad_ref(ix);
        for (std::size_t b = 0; b < os.b; ++b)
            for (std::size_t l = 0; l < os.l; ++l)
                for (std::size_t w = 0; w < os.w; ++w) gx(b + ob, l + ol, w + ow) += go(b, l, w);
    });
}

Var broadcast_to(Var x, Shape shape) {
    const Shape s = x.shape();
    if (broadcast_shape(s, shape, "broadcast_to") != shape) {
        throw ShapeError("broadcast_to: " + s.str() + " does not broadcast to " + shape.str());
    }
    Tensor out(shape);
    const auto& xv = x.value().data();
    auto& ov = out.data();
    for_each_broadcast(shape, shape, s, [&](std::size_t o, std::size_t, std::size_t j) { ov[o] = xv[j]; });
    const std::size_t ix = x.id();
    return x.graph().record(std::move(out), {x}, "broadcast", [ix, s, shape](Graph& gr, std::size_t self) {
        const auto& go = gr.grad_ref(self).data();
        auto& gx = gr.grad_ref(ix).data();
        for_each_broadcast(shape, shape, s, [&](std::size_t o, std::size_t, std::size_t j) { gx[j] += go[o]; });
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Shape s = x.shape();
    const Shape expect{1, 1, s.w};
    if (gain.shape() != expect || bias.shape() != expect) {
        throw ShapeError("layer_norm: gain/bias must be " + expect.str());
    }
    const std::size_t rows = s.b * s.l;
    const std::size_t W = s.w;
    std::vector<double> xhat(s.size());
    std::vector<double> inv_std(rows);
    Tensor out(s);
    const auto& xv = x.value().data();
    const auto& gv = gain.value().data();
    const auto& bv = bias.value().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * W;
        double mu = 0.0;
        for (std::size_t j = 0; j < W; ++j) mu += xr[j];
        mu /= static_cast<double>(W);
        double var = 0.0;
        for (std::size_t j = 0; j < W; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(W);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[r] = inv;
        for (std::size_t j = 0; j < W; ++j) {
            const double h = (xr[j] - mu) * inv;
            xhat[r * W + j] = h;
            out.data()[r * W + j] = h * gv[j] + bv[j];
        }
    }
    const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
    return x.graph().record(
        std::move(out), {x, gain, bias}, "layer_norm",
        [ix, ig, ib, rows, W, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& gr, std::size_t self) {
            const auto& go = gr.grad_ref(self).data();
            const auto& gv = gr.value(ig).data();
            double* gx = gr.requires_grad(ix) ? gr.grad_ref(ix).data().data() : nullptr;
            double* gg = gr.requires_grad(ig) ? gr.grad_ref(ig).data().data() : nullptr;
            double* gb = gr.requires_grad(ib) ? gr.grad_ref(ib).data().data() : nullptr;
            std::vector<double> dxhat(W);
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t o = r * W;
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t j = 0; j < W; ++j) {
                    const double d = go[o + j];
                    if (gg) gg[j] += d * xhat[o + j];
                    if (gb) gb[j] += d;
                    dxhat[j] = d * gv[j];
                    m1 += dxhat[j];
                    m2 += dxhat[j] * xhat[o + j];
                }
                if (!gx) continue;
                m1 /= static_cast<double>(W);
                m2 /= static_cast<double>(W);
                for (std::size_t j = 0; j < W; ++j) gx[o + j] += inv_std[r] * (dxhat[j] - m1 - xhat[o + j] * m2);
            }
        });
}

Var dropout(Var x, double rate, std::mt19937_64& rng) {
    if (rate <= 0.0) return x;
    if (rate >= 1.0) throw DomainError("dropout rate must be < 1");
    std::bernoulli_distribution keep(1.0 - rate);
    const double k = 1.0 / (1.0 - rate);
    Tensor mask(x.shape());
    for (double& m : mask.data()) m = keep(rng) ? k : 0.0;
    auto& g = x.graph();
    return mul(x, g.constant(std::move(mask)));
}

Var detach(Var x) { return x.graph().constant(x.value()); }

double grad_check(const std::function<Var(Graph&)>& f, ParameterSet& params, double h) {
    params.zero_grad();
    {
        Graph g;
        Var y = f(g);
        g.backward(y);
    }
    double worst = 0.0;
    for (auto& p : params) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value[i];
            p.value[i] = saved + h;
            double fp = 0.0, fm = 0.0;
            {
                Graph g(false);
                fp = f(g).value().item();
            }
            p.value[i] = saved - h;
            {
                Graph g(false);
                fm = f(g).value().item();
            }
            p.value[i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double err = std::abs(p.grad[i] - numeric) / std::max(1.0, std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace ad
}  // namespace scaleformer
