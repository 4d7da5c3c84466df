// Shared fixtures for the unit and acceptance tests.
#ifndef LAPLAB_TESTS_SUPPORT_HPP
#define LAPLAB_TESTS_SUPPORT_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "laplab/autodiff.hpp"
#include "laplab/random.hpp"
#include "laplab/tensor.hpp"

namespace laplab::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

struct GraphCase {
    ad::Graph graph;
    ad::Bindings bindings;
    std::string description;
};

// A small random architecture over every primitive: either an MLP with an
// optional residual add/scale, or a CNN with random kernel, stride, padding
// and pooling; cross-entropy (mean or sum) or squared-error loss.
inline GraphCase random_graph_case(std::uint64_t seed) {
    Rng rng(seed);
    GraphCase c;
    auto& g = c.graph;
    const std::size_t n = 1 + rng.below(3);
    const std::size_t classes = 2 + rng.below(3);
    const bool cnn = rng.coin();
    const bool squared = rng.below(4) == 0;
    const auto red = rng.coin() ? ad::Reduction::Mean : ad::Reduction::Sum;

    auto param = [&](const std::string& name, const Shape& shape, double scale) {
        const auto id = g.param(name);
        c.bindings[id] = random_tensor(shape, rng, -scale, scale);
        return id;
    };

    const auto x = g.input("x");
    ad::NodeId h = x;
    std::size_t features = 0;
    if (cnn) {
        const std::size_t ch = 1 + rng.below(2);
        const std::size_t size = 5 + rng.below(3);
        c.bindings[x] = random_tensor({n, ch, size, size}, rng);
        const std::size_t k = 1 + rng.below(3);
        const std::size_t stride = 1 + rng.below(2);
        const std::size_t pad = rng.below(2);
        const std::size_t out = 2 + rng.below(2);
        h = g.conv2d(h, param("cw", {out, ch, k, k}, 0.6), param("cb", {out}, 0.3), stride, pad);
        h = g.relu(h);
        std::size_t s = (size + 2 * pad - k) / stride + 1;
        if (s >= 2 && rng.coin()) {
            h = g.avg_pool2(h);
            s /= 2;
        }
        h = g.flatten(h);
        features = out * s * s;
        c.description = "cnn k" + std::to_string(k) + " s" + std::to_string(stride) + " p" + std::to_string(pad);
    } else {
        const std::size_t in = 2 + rng.below(5);
        c.bindings[x] = random_tensor({n, in}, rng);
        const std::size_t hidden = 2 + rng.below(5);
        ad::NodeId a = g.relu(g.dense(h, param("w1", {hidden, in}, 0.8), param("b1", {hidden}, 0.3)));
        if (rng.coin()) {
            const auto side = g.dense(h, param("w1s", {hidden, in}, 0.8), param("b1s", {hidden}, 0.3));
            a = g.add(a, g.scale(side, rng.uniform(-1.5, 1.5)));
        }
        h = a;
        features = hidden;
        c.description = "mlp hidden " + std::to_string(hidden);
    }
    const auto logits = g.dense(h, param("wo", {classes, features}, 0.8), param("bo", {classes}, 0.3));
    if (squared) {
        const auto target = g.constant("target");
        c.bindings[target] = random_tensor({n, classes}, rng);
        g.squared_error(logits, target, red);
        c.description += ", squared error";
    } else {
        const auto labels = g.constant("labels");
        Tensor y({n});
        for (auto& v : y.data()) v = static_cast<double>(rng.below(classes));
        c.bindings[labels] = y;
        g.softmax_cross_entropy(logits, labels, red);
        c.description += ", cross-entropy";
    }
    return c;
}

// Scratch directory unique to the calling test.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("laplab_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace laplab::testing

#endif  // LAPLAB_TESTS_SUPPORT_HPP
