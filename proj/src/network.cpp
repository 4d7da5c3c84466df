#include "laplab/network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "laplab/random.hpp"

namespace laplab {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::AvgPool2: return "avgpool2";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

std::vector<Shape> NetSpec::validate() const {
    if (input_shape.empty() || input_shape.size() == 2 || input_shape.size() > 3)
        throw SpecError("input shape must be (D) or (C, H, W), got " + shape_str(input_shape), -1);
    for (auto d : input_shape)
        if (d == 0) throw SpecError("input shape has a zero dimension", -1);
    if (num_classes < 1) throw SpecError("num_classes must be >= 1", -1);

    std::vector<Shape> shapes;
    Shape cur = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& ls = layers[i];
        const long li = static_cast<long>(i);
        switch (ls.kind) {
            case LayerKind::Dense:
                if (cur.size() != 1) throw SpecError("dense needs a flat input, got " + shape_str(cur), li);
                if (ls.out == 0) throw SpecError("dense width must be positive", li);
                cur = {ls.out};
                break;
            case LayerKind::Conv2d: {
                if (cur.size() != 3) throw SpecError("conv2d needs a (C, H, W) input, got " + shape_str(cur), li);
                if (ls.out == 0 || ls.kernel == 0 || ls.stride == 0)
                    throw SpecError("conv2d needs positive channels, kernel and stride", li);
                if (cur[1] + 2 * ls.padding < ls.kernel || cur[2] + 2 * ls.padding < ls.kernel)
                    throw SpecError("conv2d kernel exceeds padded input " + shape_str(cur), li);
                const auto oh = (cur[1] + 2 * ls.padding - ls.kernel) / ls.stride + 1;
                const auto ow = (cur[2] + 2 * ls.padding - ls.kernel) / ls.stride + 1;
                cur = {ls.out, oh, ow};
                break;
            }
            case LayerKind::Relu: break;
            case LayerKind::AvgPool2:
                if (cur.size() != 3 || cur[1] < 2 || cur[2] < 2)
                    throw SpecError("avgpool2 needs (C, H, W) with H, W >= 2, got " + shape_str(cur), li);
                cur = {cur[0], cur[1] / 2, cur[2] / 2};
                break;
            case LayerKind::Flatten: cur = {shape_numel(cur)}; break;
        }
        shapes.push_back(cur);
    }
    if (cur != Shape{num_classes})
        throw SpecError("network output " + shape_str(cur) + " does not match num_classes " + std::to_string(num_classes),
                        static_cast<long>(layers.size()) - 1);
    if (depth() == 0) throw SpecError("network has no parameterized layer", -1);
    return shapes;
}

std::size_t NetSpec::depth() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.parameterized() ? 1 : 0;
    return n;
}

NetSpec NetSpec::desk_cnn(std::size_t channels, std::size_t size, std::size_t num_classes) {
    NetSpec s;
    s.input_shape = {channels, size, size};
    s.num_classes = num_classes;
    s.layers = {LayerSpec::conv2d(8, 3, 1, 1), LayerSpec::relu(),    LayerSpec::avg_pool2(),
                LayerSpec::conv2d(16, 3, 1, 1), LayerSpec::relu(),   LayerSpec::avg_pool2(),
                LayerSpec::flatten(),           LayerSpec::dense(64), LayerSpec::relu(),
                LayerSpec::dense(num_classes)};
    return s;
}

NetSpec NetSpec::mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t num_classes) {
    NetSpec s;
    s.input_shape = {in};
    s.num_classes = num_classes;
    for (auto h : hidden) {
        s.layers.push_back(LayerSpec::dense(h));
        s.layers.push_back(LayerSpec::relu());
    }
    s.layers.push_back(LayerSpec::dense(num_classes));
    return s;
}

Network Network::build(const NetSpec& spec, std::uint64_t init_seed) {
    Network net;
    net.spec_ = spec;
    Shape cur = spec.input_shape;
    const auto shapes = spec.validate();
    std::size_t ordinal = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& ls = spec.layers[i];
        if (ls.parameterized()) {
            ++ordinal;
            ParamLayer p;
            p.ordinal = ordinal;
            p.kind = ls.kind;
            std::size_t fan_in = 0;
            if (ls.kind == LayerKind::Dense) {
                p.name = "dense" + std::to_string(ordinal);
                fan_in = cur[0];
                p.weight = Tensor({ls.out, cur[0]});
            } else {
                p.name = "conv" + std::to_string(ordinal);
                fan_in = cur[0] * ls.kernel * ls.kernel;
                p.weight = Tensor({ls.out, cur[0], ls.kernel, ls.kernel});
                p.stride = ls.stride;
                p.padding = ls.padding;
            }
            p.bias = Tensor({ls.out}, 0.0);
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            Rng rng(sub_seed(init_seed, ordinal));
            for (auto& v : p.weight.data()) v = rng.uniform(-bound, bound);
            net.params_.push_back(std::move(p));
        }
        cur = shapes[i];
    }
    return net;
}

ParamLayer& Network::layer(std::size_t ordinal) {
    if (ordinal < 1 || ordinal > params_.size())
        throw InvalidArgument("layer ordinal " + std::to_string(ordinal) + " outside 1.." + std::to_string(params_.size()));
    return params_[ordinal - 1];
}

const ParamLayer& Network::layer(std::size_t ordinal) const {
    return const_cast<Network*>(this)->layer(ordinal);
}

Tensor Network::logits(const Tensor& x) const {
    NetGraph g(spec_);
    std::vector<int> labels(x.dim(0), 0);
    g.forward(*this, x, labels);
    return g.logits();
}

bool weights_bit_identical(const Network& a, const Network& b) {
    if (a.depth() != b.depth()) return false;
    for (std::size_t l = 1; l <= a.depth(); ++l)
        if (!bit_identical(a.layer(l).weight, b.layer(l).weight) || !bit_identical(a.layer(l).bias, b.layer(l).bias))
            return false;
    return true;
}

// ---- NetGraph ---------------------------------------------------------------

NetGraph::NetGraph(const NetSpec& spec, LossKind loss) : spec_(spec), loss_kind_(loss) {
    spec_.validate();
    x_ = graph_.input("x");
    labels_ = graph_.constant("labels");
    ad::NodeId cur = x_;
    std::size_t ordinal = 0;
    for (const auto& ls : spec_.layers) {
        switch (ls.kind) {
            case LayerKind::Dense:
            case LayerKind::Conv2d: {
                ++ordinal;
                const auto w = graph_.param("w" + std::to_string(ordinal));
                const auto b = graph_.param("b" + std::to_string(ordinal));
                weights_.push_back(w);
                biases_.push_back(b);
                cur = ls.kind == LayerKind::Dense ? graph_.dense(cur, w, b) : graph_.conv2d(cur, w, b, ls.stride, ls.padding);
                break;
            }
            case LayerKind::Relu: cur = graph_.relu(cur); break;
            case LayerKind::AvgPool2: cur = graph_.avg_pool2(cur); break;
            case LayerKind::Flatten: cur = graph_.flatten(cur); break;
        }
    }
    logits_ = cur;
    loss_ = loss == LossKind::CrossEntropy ? graph_.softmax_cross_entropy(logits_, labels_)
                                           : graph_.squared_error(logits_, labels_);
}

double NetGraph::forward(const Network& net, const Tensor& x, std::span<const int> labels) {
    if (net.depth() != weights_.size()) throw ShapeError("network depth does not match graph");
    Shape expect = spec_.input_shape;
    expect.insert(expect.begin(), x.rank() > 0 ? x.dim(0) : 0);
    if (x.shape() != expect)
        throw ShapeError("input batch " + shape_str(x.shape()) + " does not match " + shape_str(expect),
                         static_cast<long>(x_));
    if (labels.size() != x.dim(0)) throw ShapeError("label count does not match batch", static_cast<long>(labels_));
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        graph_.bind(weights_[l], net.layer(l + 1).weight);
        graph_.bind(biases_[l], net.layer(l + 1).bias);
    }
    graph_.bind(x_, x);
    const std::size_t N = x.dim(0);
    if (loss_kind_ == LossKind::CrossEntropy) {
        Tensor y({N});
        for (std::size_t i = 0; i < N; ++i) y[i] = labels[i];
        graph_.bind(labels_, std::move(y));
    } else {
        const std::size_t K = spec_.num_classes;
        Tensor y({N, K}, 0.0);
        for (std::size_t i = 0; i < N; ++i) {
            if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= K)
                throw ShapeError("label outside class range", static_cast<long>(labels_));
            y[i * K + static_cast<std::size_t>(labels[i])] = 1.0;
        }
        graph_.bind(labels_, std::move(y));
    }
    return graph_.forward()[0];
}

void NetGraph::backward() { graph_.backward(); }

const Tensor& NetGraph::weight_grad(std::size_t ordinal) const { return graph_.grad(weights_.at(ordinal - 1)); }
const Tensor& NetGraph::bias_grad(std::size_t ordinal) const { return graph_.grad(biases_.at(ordinal - 1)); }

std::vector<int> argmax_rows(const Tensor& logits) {
    const std::size_t N = logits.dim(0), K = logits.dim(1);
    std::vector<int> out(N, 0);
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (logits[i * K + k] > logits[i * K + best]) best = k;
        out[i] = static_cast<int>(best);
    }
    return out;
}

// ---- checkpoints ------------------------------------------------------------

namespace {

template <typename T>
void put_le(std::string& buf, T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

void put_tensor(std::string& buf, const std::string& name, const Tensor& t) {
    put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(name.size()));
    buf += name;
    put_le<std::uint8_t>(buf, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) put_le<std::uint64_t>(buf, d);
    for (double v : t.data()) put_le<std::uint64_t>(buf, std::bit_cast<std::uint64_t>(v));
}

class Reader {
public:
    explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        std::make_unsigned_t<T> u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(u);
    }
    std::string get_bytes(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw CheckpointError(CheckpointError::Code::Truncated, "checkpoint truncated");
    }
    std::string bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
    std::string buf(kCheckpointMagic, 4);
    put_le<std::uint32_t>(buf, kCheckpointVersion);
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(net.depth()));
    for (const auto& l : net.layers()) {
        put_tensor(buf, l.name + ".weight", l.weight);
        put_tensor(buf, l.name + ".bias", l.bias);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Code::Io, "cannot open " + path.string() + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw CheckpointError(CheckpointError::Code::Io, "write failed: " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(CheckpointError::Code::Io, "cannot open " + path.string());
    Reader r(std::string(std::istreambuf_iterator<char>(in), {}));
    const auto magic = r.get_bytes(4);
    if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0)
        throw CheckpointError(CheckpointError::Code::BadMagic, "bad magic in " + path.string());
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw CheckpointError(CheckpointError::Code::VersionMismatch,
                              "checkpoint version " + std::to_string(version) + " unsupported");
    const auto layers = r.get<std::uint32_t>();
    std::vector<NamedTensor> out;
    for (std::uint32_t i = 0; i < 2 * layers; ++i) {
        NamedTensor nt;
        const auto len = r.get<std::uint16_t>();
        nt.name = r.get_bytes(len);
        const auto rank = r.get<std::uint8_t>();
        Shape shape(rank);
        std::size_t count = 1;
        for (auto& d : shape) {
            d = r.get<std::uint64_t>();
            if (d == 0) throw CheckpointError(CheckpointError::Code::Mismatch, "zero dimension in " + nt.name);
            count *= d;
        }
        if (rank == 0 || count > r.remaining() / 8)
            throw CheckpointError(rank == 0 ? CheckpointError::Code::Mismatch : CheckpointError::Code::Truncated,
                                  "tensor " + nt.name + " payload truncated or malformed");
        std::vector<double> data(count);
        for (auto& v : data) v = std::bit_cast<double>(r.get<std::uint64_t>());
        nt.value = Tensor(std::move(shape), std::move(data));
        out.push_back(std::move(nt));
    }
    return out;
}

Network load_checkpoint(const std::filesystem::path& path, const NetSpec& spec) {
    auto tensors = read_checkpoint(path);
    Network net = Network::build(spec, 0);
    if (tensors.size() != 2 * net.depth())
        throw CheckpointError(CheckpointError::Code::Mismatch,
                              "checkpoint holds " + std::to_string(tensors.size() / 2) + " layers, spec has " +
                                  std::to_string(net.depth()));
    for (std::size_t l = 1; l <= net.depth(); ++l) {
        auto& p = net.layer(l);
        auto& w = tensors[2 * (l - 1)];
        auto& b = tensors[2 * (l - 1) + 1];
        if (w.name != p.name + ".weight" || b.name != p.name + ".bias" || w.value.shape() != p.weight.shape() ||
            b.value.shape() != p.bias.shape())
            throw CheckpointError(CheckpointError::Code::Mismatch, "checkpoint layer " + std::to_string(l) + " (" +
                                                                       w.name + ") does not match spec layer " + p.name);
        p.weight = std::move(w.value);
        p.bias = std::move(b.value);
    }
    return net;
}

}  // namespace laplab
