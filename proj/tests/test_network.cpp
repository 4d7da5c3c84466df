#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "laplab/network.hpp"
#include "support.hpp"

using namespace laplab;
using laplab::testing::random_tensor;
using laplab::testing::scratch_dir;

TEST_CASE("desk CNN has four parameterized layers with ordinals 1..4") {
    const auto spec = NetSpec::desk_cnn(1, 16, 2);
    CHECK(spec.depth() == 4);
    const auto net = Network::build(spec, 3);
    REQUIRE(net.depth() == 4);
    CHECK(net.layer(1).weight.shape() == Shape{8, 1, 3, 3});
    CHECK(net.layer(2).weight.shape() == Shape{16, 8, 3, 3});
    CHECK(net.layer(3).weight.shape() == Shape{64, 256});
    CHECK(net.layer(4).weight.shape() == Shape{2, 64});
    for (std::size_t l = 1; l <= 4; ++l) {
        CHECK(net.layer(l).ordinal == l);
        CHECK(net.layer(l).weight.norm2() > 0.0);
        CHECK(net.layer(l).bias.abs_max() == 0.0);
    }
    CHECK_THROWS(net.layer(0));
    CHECK_THROWS(net.layer(5));
}

TEST_CASE("initialization respects the Kaiming-uniform bound and is seeded") {
    const auto spec = NetSpec::desk_cnn(1, 16, 2);
    const auto a = Network::build(spec, 11);
    const auto b = Network::build(spec, 11);
    const auto c = Network::build(spec, 12);
    CHECK(weights_bit_identical(a, b));
    CHECK_FALSE(weights_bit_identical(a, c));
    const std::size_t fan_in[] = {9, 72, 256, 64};
    for (std::size_t l = 1; l <= 4; ++l) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in[l - 1]));
        CHECK(a.layer(l).weight.abs_max() <= bound);
        // The sample spread should use most of the interval.
        CHECK(a.layer(l).weight.abs_max() > 0.8 * bound);
    }
}

TEST_CASE("spec validation names the offending layer") {
    NetSpec s;
    s.input_shape = {1, 8, 8};
    s.num_classes = 3;
    s.layers = {LayerSpec::conv2d(4, 3), LayerSpec::dense(3)};
    try {
        s.validate();
        FAIL("expected SpecError");
    } catch (const SpecError& e) {
        CHECK(e.layer() == 1);
    }
    s.layers = {LayerSpec::conv2d(4, 9)};
    CHECK_THROWS_AS(s.validate(), SpecError);
    s.layers = {LayerSpec::flatten(), LayerSpec::dense(2)};
    CHECK_THROWS_AS(s.validate(), SpecError);  // output 2 != 3 classes
    s.layers = {LayerSpec::flatten(), LayerSpec::dense(3)};
    CHECK(s.validate().back() == Shape{3});
}

TEST_CASE("logits agree with the training graph") {
    const auto spec = NetSpec::desk_cnn(1, 8, 3);
    const auto net = Network::build(spec, 5);
    Rng rng(1);
    const Tensor x = random_tensor({4, 1, 8, 8}, rng, 0.0, 1.0);
    NetGraph g(spec);
    const std::vector<int> y{0, 1, 2, 0};
    g.forward(net, x, y);
    CHECK(bit_identical(g.logits(), net.logits(x)));
}

TEST_CASE("argmax resolves ties to the lowest class") {
    const Tensor z({3, 3}, {1, 1, 0, 0, 2, 2, 5, -1, 5});
    CHECK(argmax_rows(z) == std::vector<int>{0, 1, 0});
}

TEST_CASE("checkpoint round trip preserves outputs bit-exactly") {
    const auto dir = scratch_dir("ckpt_roundtrip");
    const auto spec = NetSpec::desk_cnn(1, 16, 2);
    const auto net = Network::build(spec, 9);
    save_checkpoint(net, dir / "a.lapc");
    const auto back = load_checkpoint(dir / "a.lapc", spec);
    CHECK(weights_bit_identical(net, back));
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        const Tensor x = random_tensor({1, 1, 16, 16}, rng, 0.0, 1.0);
        CHECK(bit_identical(net.logits(x), back.logits(x)));
    }
    const auto names = read_checkpoint(dir / "a.lapc");
    REQUIRE(names.size() == 8);
    CHECK(names[0].name == "conv1.weight");
    CHECK(names[7].name == "dense4.bias");
}

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

CheckpointError::Code load_error(const std::filesystem::path& p, const NetSpec& spec) {
    try {
        load_checkpoint(p, spec);
    } catch (const CheckpointError& e) {
        return e.code();
    }
    FAIL("expected a checkpoint error");
    return CheckpointError::Code::Io;
}

}  // namespace

TEST_CASE("malformed checkpoints produce distinct errors") {
    using Code = CheckpointError::Code;
    const auto dir = scratch_dir("ckpt_errors");
    const auto spec = NetSpec::desk_cnn(1, 16, 2);
    save_checkpoint(Network::build(spec, 1), dir / "good.lapc");
    const auto good = slurp(dir / "good.lapc");
    CHECK(good.substr(0, 4) == "LAPC");

    CHECK(load_error(dir / "missing.lapc", spec) == Code::Io);

    auto bad = good;
    bad[0] = 'X';
    spit(dir / "magic.lapc", bad);
    CHECK(load_error(dir / "magic.lapc", spec) == Code::BadMagic);

    bad = good;
    bad[4] = 2;  // version field, little-endian
    spit(dir / "version.lapc", bad);
    CHECK(load_error(dir / "version.lapc", spec) == Code::VersionMismatch);

    spit(dir / "short.lapc", good.substr(0, good.size() - 9));
    CHECK(load_error(dir / "short.lapc", spec) == Code::Truncated);
    spit(dir / "header_only.lapc", good.substr(0, 6));
    CHECK(load_error(dir / "header_only.lapc", spec) == Code::Truncated);

    CHECK(load_error(dir / "good.lapc", NetSpec::desk_cnn(1, 16, 3)) == Code::Mismatch);
}
