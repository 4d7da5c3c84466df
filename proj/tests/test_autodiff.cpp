#include <doctest.h>

#include <cmath>

#include "laplab/autodiff.hpp"
#include "laplab/error.hpp"
#include "support.hpp"

using namespace laplab;
using namespace laplab::ad;
using laplab::testing::random_graph_case;
using laplab::testing::random_tensor;

TEST_CASE("gradients match central differences on random architectures") {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        auto c = random_graph_case(seed);
        const auto rep = finite_diff_check(c.graph, c.bindings, 1e-5, 1e-6);
        INFO("seed " << seed << " (" << c.description << ") worst leaf " << rep.worst_leaf << "[" << rep.worst_index
                     << "] analytic " << rep.worst_analytic << " numeric " << rep.worst_numeric);
        CHECK(rep.passed);
        CHECK(rep.coordinates > 0);
    }
}

TEST_CASE("linear graph has exact finite differences") {
    Graph g;
    const auto x = g.input("x");
    const auto w = g.param("w");
    const auto b = g.constant("b");
    const auto y = g.dense(x, w, b);
    g.set_output(y);
    Bindings bind{{x, Tensor({1, 3}, {0.5, -1.25, 2.0})}, {w, Tensor({1, 3}, {1.5, 0.25, -0.75})}, {b, Tensor({1}, 0.0)}};
    const auto rep = finite_diff_check(g, bind, 1e-5, 1e-10);
    CHECK(rep.max_rel_error < 1e-10);
    CHECK(g.value(y)[0] == doctest::Approx(0.5 * 1.5 - 1.25 * 0.25 - 2.0 * 0.75).epsilon(1e-15));
    CHECK(g.grad(w)[1] == -1.25);
    CHECK(g.grad(b)[0] == 0.0);  // constants get zero gradient
}

namespace {

// Straight-line evaluation of relu(relu(x W1^T + b1) W2^T + b2) W3^T + b3
// followed by mean softmax cross-entropy, without the graph.
double mlp_reference(const Tensor& x, const std::vector<Tensor>& w, const std::vector<Tensor>& b,
                     const std::vector<int>& y) {
    const std::size_t n = x.dim(0);
    std::vector<std::vector<double>> h(n);
    for (std::size_t i = 0; i < n; ++i) h[i].assign(x.data().begin() + i * x.dim(1), x.data().begin() + (i + 1) * x.dim(1));
    for (std::size_t l = 0; l < 3; ++l) {
        const std::size_t out = w[l].dim(0), in = w[l].dim(1);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> next(out);
            for (std::size_t o = 0; o < out; ++o) {
                double s = b[l][o];
                for (std::size_t k = 0; k < in; ++k) s += w[l][o * in + k] * h[i][k];
                next[o] = l < 2 ? std::max(0.0, s) : s;
            }
            h[i] = next;
        }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double m = h[i][0];
        for (double v : h[i]) m = std::max(m, v);
        double z = 0.0;
        for (double v : h[i]) z += std::exp(v - m);
        total += std::log(z) + m - h[i][y[i]];
    }
    return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("graph MLP matches a straight-line evaluator") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 100);
        const std::vector<std::size_t> dims{5, 7, 6, 4};
        const std::size_t n = 6;
        Graph g;
        const auto x = g.input("x");
        const auto yl = g.constant("y");
        Bindings bind;
        bind[x] = random_tensor({n, dims[0]}, rng);
        std::vector<Tensor> ws, bs;
        NodeId h = x;
        for (std::size_t l = 0; l < 3; ++l) {
            const auto w = g.param("w" + std::to_string(l));
            const auto b = g.param("b" + std::to_string(l));
            ws.push_back(random_tensor({dims[l + 1], dims[l]}, rng));
            bs.push_back(random_tensor({dims[l + 1]}, rng));
            bind[w] = ws.back();
            bind[b] = bs.back();
            h = g.dense(h, w, b);
            if (l < 2) h = g.relu(h);
        }
        g.softmax_cross_entropy(h, yl);
        std::vector<int> y(n);
        Tensor yt({n});
        for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(rng.below(4)), yt[i] = y[i];
        bind[yl] = yt;
        const double got = g.forward(bind)[0];
        CHECK(std::abs(got - mlp_reference(bind[x], ws, bs, y)) <= 1e-12);
    }
}

TEST_CASE("batch gradient is the sum of per-example gradients") {
    for (const auto red : {Reduction::Sum, Reduction::Mean}) {
        Rng rng(7);
        const std::size_t n = 5;
        Graph g;
        const auto x = g.input("x");
        const auto w1 = g.param("w1");
        const auto b1 = g.param("b1");
        const auto w2 = g.param("w2");
        const auto b2 = g.param("b2");
        const auto y = g.constant("y");
        g.softmax_cross_entropy(g.dense(g.relu(g.dense(x, w1, b1)), w2, b2), y, red);
        Bindings bind{{w1, random_tensor({6, 4}, rng)}, {b1, random_tensor({6}, rng)},
                      {w2, random_tensor({3, 6}, rng)}, {b2, random_tensor({3}, rng)}};
        const Tensor xs = random_tensor({n, 4}, rng);
        const Tensor ys({n}, {0, 2, 1, 1, 0});
        bind[x] = xs;
        bind[y] = ys;
        g.forward(bind);
        g.backward();
        const auto whole = g.leaf_gradients();

        Bindings acc;
        for (std::size_t i = 0; i < n; ++i) {
            auto one = bind;
            one[x] = Tensor({1, 4}, std::vector<double>(xs.data().begin() + 4 * i, xs.data().begin() + 4 * (i + 1)));
            one[y] = Tensor({1}, ys[i]);
            g.forward(one);
            g.backward();
            for (auto leaf : {w1, b1, w2, b2}) {
                if (!acc.count(leaf)) acc[leaf] = Tensor(g.grad(leaf).shape());
                acc[leaf] += g.grad(leaf);
            }
        }
        const double div = red == Reduction::Mean ? static_cast<double>(n) : 1.0;
        for (auto leaf : {w1, b1, w2, b2})
            for (std::size_t k = 0; k < acc[leaf].numel(); ++k)
                CHECK(std::abs(whole.at(leaf)[k] - acc[leaf][k] / div) <= 1e-12);
    }
}

TEST_CASE("conv2d, pooling and relu on hand-computed inputs") {
    Graph g;
    const auto x = g.input("x");
    const auto w = g.param("w");
    const auto b = g.param("b");
    const auto y = g.conv2d(x, w, b, 1, 0);
    const auto p = g.avg_pool2(y);
    const auto r = g.relu(g.flatten(p));
    g.set_output(r);
    Tensor xs({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    g.bind(x, xs);
    g.bind(w, Tensor({1, 1, 2, 2}, 1.0));
    g.bind(b, Tensor({1}, -20.0));
    g.forward();
    // Window sums 12, 16, 24, 28 minus 20 -> -8, -4, 4, 8; the 2x2 pool
    // averages them to 0, and relu(0) = 0.
    CHECK(g.value(y) == Tensor({1, 1, 2, 2}, {-8, -4, 4, 8}));
    CHECK(g.value(p)[0] == 0.0);
    g.backward();
    // Subgradient of relu at exactly zero is 0.
    CHECK(g.grad(w).abs_max() == 0.0);
}

TEST_CASE("avg_pool2 floors odd sizes") {
    Graph g;
    const auto x = g.input("x");
    const auto p = g.avg_pool2(x);
    const auto f = g.flatten(p);
    const auto t = g.constant("t");
    g.squared_error(f, t, Reduction::Sum);
    g.bind(x, Tensor({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
    g.bind(t, Tensor({1, 1}, 0.0));
    g.forward();
    CHECK(g.value(p).shape() == Shape{1, 1, 1, 1});
    CHECK(g.value(p)[0] == 3.0);
    CHECK(g.value(g.output())[0] == 9.0);
}

TEST_CASE("cross-entropy of equal logits is log K") {
    Graph g;
    const auto z = g.input("z");
    const auto y = g.constant("y");
    g.softmax_cross_entropy(z, y);
    g.bind(z, Tensor({2, 5}, 3.0));
    g.bind(y, Tensor({2}, {0, 4}));
    CHECK(g.forward()[0] == doctest::Approx(std::log(5.0)).epsilon(1e-14));
    CHECK(g.per_example_loss(g.output()).size() == 2);
}

TEST_CASE("shape mismatches and non-finite values name the node") {
    Graph g;
    const auto x = g.input("x");
    const auto w = g.param("w");
    const auto b = g.param("b");
    const auto d = g.dense(x, w, b);
    const auto t = g.constant("t");
    g.squared_error(d, t);
    g.bind(x, Tensor({2, 3}, 1.0));
    g.bind(w, Tensor({4, 2}, 1.0));
    g.bind(b, Tensor({4}, 0.0));
    g.bind(t, Tensor({2, 4}, 0.0));
    try {
        g.forward();
        FAIL("expected a shape error");
    } catch (const ShapeError& e) {
        CHECK(e.node() == static_cast<long>(d));
    }

    Graph h;
    const auto a = h.input("a");
    const auto s = h.scale(h.scale(a, 1e200), 1e200);
    const auto z = h.constant("z");
    h.squared_error(s, z);
    h.bind(a, Tensor({1, 1}, 1.0));
    h.bind(z, Tensor({1, 1}, 0.0));
    try {
        h.forward();
        FAIL("expected a non-finite error");
    } catch (const NonFiniteError& e) {
        CHECK(e.node() == static_cast<long>(s));
    }
}

TEST_CASE("backward requires a forward pass and unbound leaves are rejected") {
    Graph g;
    const auto x = g.input("x");
    const auto t = g.constant("t");
    g.squared_error(x, t);
    CHECK_THROWS(g.backward());
    g.bind(x, Tensor({1, 2}, 1.0));
    CHECK_THROWS(g.forward());
    g.bind(t, Tensor({1, 2}, {0.0, 3.0}));
    CHECK(g.forward()[0] == 5.0);  // (1 - 0)^2 + (1 - 3)^2, mean over one example
    g.backward();
    CHECK(g.grad(x) == Tensor({1, 2}, {2.0, -4.0}));
}
