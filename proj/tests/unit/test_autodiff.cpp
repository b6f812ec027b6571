#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "scaleformer/autodiff.hpp"
#include "scaleformer/error.hpp"

using namespace scaleformer;
using ad::Graph;
using ad::Var;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(s);
    for (double& v : t.data()) v = u(rng);
    return t;
}

// Central differences on every parameter entry, independent of ad::grad_check.
double fd_error(const std::function<Var(Graph&)>& f, ParameterSet& ps, double h = 1e-6) {
    ps.zero_grad();
    {
        Graph g;
        g.backward(f(g));
    }
    double worst = 0.0;
    for (auto& p : ps) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double x = p.value[i];
            p.value[i] = x + h;
            Graph gp(false);
            const double fp = f(gp).value()[0];
            p.value[i] = x - h;
            Graph gm(false);
            const double fm = f(gm).value()[0];
            p.value[i] = x;
            const double num = (fp - fm) / (2.0 * h);
            worst = std::max(worst, std::abs(p.grad[i] - num) / std::max(1.0, std::abs(num)));
        }
    }
    return worst;
}

struct Unary {
    const char* name;
    std::function<Var(Var)> op;
    double lo, hi;
};

// Projects an arbitrary output onto a scalar with fixed random weights.
Var project(Graph& g, Var y, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return ad::sum_all(y * g.constant(random_tensor(y.shape(), rng)));
}

}  // namespace

TEST(Autodiff, UnaryPrimitivesFiniteDifference) {
    const std::vector<Unary> ops = {
        {"neg", [](Var x) { return -x; }, -1, 1},
        {"scale", [](Var x) { return x * 2.5; }, -1, 1},
        {"shift", [](Var x) { return x + 0.7; }, -1, 1},
        {"exp", [](Var x) { return ad::exp(x); }, -1, 1},
        {"log", [](Var x) { return ad::log(x); }, 0.5, 2},
        {"sqrt", [](Var x) { return ad::sqrt(x); }, 0.5, 2},
        {"pow", [](Var x) { return ad::pow(x, 1.7); }, 0.5, 2},
        {"sin", [](Var x) { return ad::sin(x); }, -2, 2},
        {"cos", [](Var x) { return ad::cos(x); }, -2, 2},
        {"tanh", [](Var x) { return ad::tanh(x); }, -2, 2},
        {"relu", [](Var x) { return ad::relu(x); }, 0.1, 1},
        {"relu_neg", [](Var x) { return ad::relu(x); }, -1, -0.1},
        {"sigmoid", [](Var x) { return ad::sigmoid(x); }, -3, 3},
        {"softplus", [](Var x) { return ad::softplus(x); }, -3, 3},
        {"abs", [](Var x) { return ad::abs(x); }, 0.1, 1},
        {"abs_neg", [](Var x) { return ad::abs(x); }, -1, -0.1},
        {"erf", [](Var x) { return ad::erf(x); }, -2, 2},
        {"clamp", [](Var x) { return ad::clamp(x, -0.5, 0.5); }, -0.4, 0.4},
        {"softmax", [](Var x) { return ad::softmax(x); }, -2, 2},
        {"transpose", [](Var x) { return ad::transpose(x); }, -1, 1},
        {"sum0", [](Var x) { return ad::sum(x, 0); }, -1, 1},
        {"sum1", [](Var x) { return ad::sum(x, 1); }, -1, 1},
        {"sum2", [](Var x) { return ad::sum(x, 2); }, -1, 1},
        {"mean1", [](Var x) { return ad::mean(x, 1); }, -1, 1},
        {"mean_all", [](Var x) { return ad::mean_all(x); }, -1, 1},
        {"slice", [](Var x) { return ad::slice(x, 1, 1, 3); }, -1, 1},
        {"broadcast", [](Var x) { return ad::broadcast_to(ad::mean(x, 0), Shape{3, 4, 5}); }, -1, 1},
        {"self_mul", [](Var x) { return x * x; }, -1, 1},
        {"self_div", [](Var x) { return (x + 3.0) / (x * x + 1.0); }, -1, 1},
    };
    for (const auto& u : ops) {
        std::mt19937_64 rng(11);
        ParameterSet ps;
        Parameter& x = ps.add("x", random_tensor(Shape{2, 4, 5}, rng, u.lo, u.hi));
        const double err = fd_error([&](Graph& g) { return project(g, u.op(g.param(x)), 5); }, ps);
        EXPECT_LT(err, 1e-6) << u.name;
    }
}

TEST(Autodiff, BinaryPrimitivesWithBroadcast) {
    const Shape shapes[][2] = {
        {{2, 3, 4}, {2, 3, 4}}, {{2, 3, 4}, {1, 3, 4}}, {{2, 3, 4}, {1, 1, 4}},
        {{2, 3, 4}, {2, 3, 1}}, {{1, 3, 1}, {2, 1, 4}}, {{2, 3, 4}, {1, 1, 1}},
    };
    const std::function<Var(Var, Var)> ops[] = {
        [](Var a, Var b) { return a + b; }, [](Var a, Var b) { return a - b; },
        [](Var a, Var b) { return a * b; }, [](Var a, Var b) { return a / b; },
    };
    for (const auto& sh : shapes) {
        for (std::size_t k = 0; k < 4; ++k) {
            std::mt19937_64 rng(k);
            ParameterSet ps;
            Parameter& a = ps.add("a", random_tensor(sh[0], rng));
            Parameter& b = ps.add("b", random_tensor(sh[1], rng, 0.5, 1.5));
            const double err =
                fd_error([&](Graph& g) { return project(g, ops[k](g.param(a), g.param(b)), 9); }, ps);
            EXPECT_LT(err, 1e-6) << "op " << k << " " << sh[0].str() << " " << sh[1].str();
        }
    }
}

TEST(Autodiff, MatmulBatchedAndShared) {
    for (const Shape rhs : {Shape{3, 4, 2}, Shape{1, 4, 2}}) {
        for (const Shape lhs : {Shape{3, 5, 4}, Shape{1, 5, 4}}) {
            std::mt19937_64 rng(2);
            ParameterSet ps;
            Parameter& a = ps.add("a", random_tensor(lhs, rng));
            Parameter& b = ps.add("b", random_tensor(rhs, rng));
            EXPECT_LT(fd_error([&](Graph& g) { return project(g, ad::matmul(g.param(a), g.param(b)), 3); }, ps), 1e-6);
        }
    }
}

TEST(Autodiff, MatmulValues) {
    Graph g(false);
    Var a = g.constant(Tensor(Shape{1, 2, 3}, {1, 2, 3, 4, 5, 6}));
    Var b = g.constant(Tensor(Shape{1, 3, 2}, {7, 8, 9, 10, 11, 12}));
    EXPECT_EQ(ad::matmul(a, b).value().data(), (std::vector<double>{58, 64, 139, 154}));
    EXPECT_THROW(ad::matmul(a, a), ShapeError);
}

TEST(Autodiff, StructuralPrimitives) {
    std::mt19937_64 rng(4);
    ParameterSet ps;
    Parameter& a = ps.add("a", random_tensor(Shape{2, 3, 4}, rng));
    Parameter& b = ps.add("b", random_tensor(Shape{2, 2, 4}, rng));
    Parameter& c = ps.add("c", random_tensor(Shape{2, 3, 1}, rng));
    EXPECT_LT(fd_error([&](Graph& g) { return project(g, ad::concat({g.param(a), g.param(b)}, 1), 1); }, ps), 1e-6);
    EXPECT_LT(fd_error([&](Graph& g) { return project(g, ad::concat({g.param(a), g.param(c)}, 2), 1); }, ps), 1e-6);
    EXPECT_LT(fd_error([&](Graph& g) { return project(g, ad::slice(g.param(a), 2, 1, 3), 1); }, ps), 1e-6);
}

TEST(Autodiff, LayerNorm) {
    std::mt19937_64 rng(8);
    ParameterSet ps;
    Parameter& x = ps.add("x", random_tensor(Shape{2, 3, 6}, rng));
    Parameter& gain = ps.add("g", random_tensor(Shape{1, 1, 6}, rng, 0.5, 1.5));
    Parameter& bias = ps.add("b", random_tensor(Shape{1, 1, 6}, rng));
    auto f = [&](Graph& g) { return project(g, ad::layer_norm(g.param(x), g.param(gain), g.param(bias)), 6); };
    EXPECT_LT(fd_error(f, ps), 1e-6);

    Graph g(false);
    const Tensor y = ad::layer_norm(g.constant(x.value), g.constant(Tensor(Shape{1, 1, 6}, 1.0)),
                                    g.constant(Tensor(Shape{1, 1, 6}, 0.0)), 0.0)
                         .value();
    for (std::size_t r = 0; r < 6; ++r) {
        double m = 0.0, s = 0.0;
        for (std::size_t j = 0; j < 6; ++j) m += y[r * 6 + j];
        for (std::size_t j = 0; j < 6; ++j) s += y[r * 6 + j] * y[r * 6 + j];
        EXPECT_NEAR(m / 6.0, 0.0, 1e-12);
        EXPECT_NEAR(s / 6.0, 1.0, 1e-12);
    }
}

TEST(Autodiff, DropoutWithFixedMask) {
    std::mt19937_64 rng(1);
    ParameterSet ps;
    Parameter& x = ps.add("x", random_tensor(Shape{2, 5, 5}, rng));
    auto f = [&](Graph& g) {
        std::mt19937_64 mask_rng(99);
        return project(g, ad::dropout(g.param(x), 0.3, mask_rng), 2);
    };
    EXPECT_LT(fd_error(f, ps), 1e-6);

    Graph g(false);
    std::mt19937_64 mask_rng(99);
    const Tensor y = ad::dropout(g.constant(Tensor(Shape{1, 200, 50}, 1.0)), 0.3, mask_rng).value();
    std::size_t kept = 0;
    for (double v : y.data()) {
        if (v != 0.0) {
            EXPECT_NEAR(v, 1.0 / 0.7, 1e-15);
            ++kept;
        }
    }
    EXPECT_NEAR(static_cast<double>(kept) / 10000.0, 0.7, 0.03);
}

TEST(Autodiff, ReusedParameterAccumulates) {
    ParameterSet ps;
    Parameter& w = ps.add("w", Tensor::scalar(3.0));
    ps.zero_grad();
    Graph g;
    Var a = g.param(w);
    Var b = g.param(w);
    EXPECT_EQ(a.id(), b.id());
    g.backward(a * b + ad::sin(a));  // d/dw (w^2 + sin w) = 2w + cos w
    EXPECT_NEAR(w.grad[0], 6.0 + std::cos(3.0), 1e-14);
}

TEST(Autodiff, DetachBlocksGradient) {
    ParameterSet ps;
    Parameter& w = ps.add("w", Tensor::scalar(2.0));
    ps.zero_grad();
    Graph g;
    Var a = g.param(w);
    g.backward(a * ad::detach(a));  // treated as w * const
    EXPECT_DOUBLE_EQ(w.grad[0], 2.0);
}

TEST(Autodiff, SoftmaxRowsSumToOne) {
    std::mt19937_64 rng(3);
    Graph g(false);
    const Tensor y = ad::softmax(g.constant(random_tensor(Shape{3, 4, 7}, rng, -50, 50))).value();
    for (std::size_t r = 0; r < 12; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < 7; ++j) {
            EXPECT_GE(y[r * 7 + j], 0.0);
            s += y[r * 7 + j];
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Autodiff, ReductionsKeepDims) {
    Graph g(false);
    Var x = g.constant(Tensor(Shape{2, 3, 4}, 1.0));
    EXPECT_EQ(ad::sum(x, 0).shape(), (Shape{1, 3, 4}));
    EXPECT_EQ(ad::mean(x, 1).shape(), (Shape{2, 1, 4}));
    EXPECT_EQ(ad::sum(x, 2).value()[0], 4.0);
    EXPECT_EQ(ad::sum_all(x).value().item(), 24.0);
}

TEST(Autodiff, BackwardNeedsScalarRoot) {
    Graph g;
    Var x = g.constant(Tensor(Shape{1, 2, 1}, 1.0));
    EXPECT_THROW(g.backward(x), ShapeError);
    EXPECT_THROW(ad::broadcast_to(x, Shape{1, 3, 1}), ShapeError);
    EXPECT_THROW(ad::slice(x, 1, 1, 3), ShapeError);
}

TEST(Autodiff, LibraryGradCheckAgreesWithOracle) {
    std::mt19937_64 rng(6);
    ParameterSet ps;
    Parameter& x = ps.add("x", random_tensor(Shape{1, 3, 3}, rng, 0.5, 1.5));
    auto f = [&](Graph& g) { return ad::sum_all(ad::log(ad::matmul(g.param(x), g.param(x)))); };
    EXPECT_LT(ad::grad_check(f, ps), 1e-6);
    EXPECT_LT(fd_error(f, ps), 1e-6);
}
