#ifndef LAPLAB_NETWORK_HPP
#define LAPLAB_NETWORK_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "laplab/autodiff.hpp"
#include "laplab/error.hpp"
#include "laplab/tensor.hpp"

namespace laplab {

enum class LayerKind { Dense, Conv2d, Relu, AvgPool2, Flatten };

const char* layer_kind_name(LayerKind k);

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    std::size_t out = 0;  // output features / channels for parameterized layers
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    static LayerSpec dense(std::size_t out) { return {LayerKind::Dense, out, 0, 1, 0}; }
    static LayerSpec conv2d(std::size_t out, std::size_t kernel, std::size_t stride = 1, std::size_t padding = 0) {
        return {LayerKind::Conv2d, out, kernel, stride, padding};
    }
    static LayerSpec relu() { return {LayerKind::Relu}; }
    static LayerSpec avg_pool2() { return {LayerKind::AvgPool2}; }
    static LayerSpec flatten() { return {LayerKind::Flatten}; }

    bool parameterized() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }
    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

class SpecError : public InvalidArgument {
public:
    SpecError(const std::string& what, long layer)
        : InvalidArgument(layer >= 0 ? "layer " + std::to_string(layer) + ": " + what : what), layer_(layer) {}
    long layer() const { return layer_; }

private:
    long layer_;
};

// Declarative architecture. input_shape excludes the batch dimension:
// (C, H, W) for image inputs or (D) for flat inputs.
struct NetSpec {
    Shape input_shape;
    std::size_t num_classes = 0;
    std::vector<LayerSpec> layers;

    // Shape after each layer (batch dimension excluded). Throws SpecError
    // naming the first layer whose input shape it cannot accept.
    std::vector<Shape> validate() const;
    std::size_t depth() const;

    // conv 1->8 k3, conv 8->16 k3, dense ->64, dense ->classes, with ReLU and
    // 2x2 average pooling after each conv. Padding 1 keeps spatial sizes even.
    static NetSpec desk_cnn(std::size_t channels, std::size_t size, std::size_t num_classes);
    static NetSpec mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t num_classes);

    friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

struct ParamLayer {
    std::string name;
    std::size_t ordinal = 0;  // 1..L in forward order
    LayerKind kind = LayerKind::Dense;
    Tensor weight;  // dense (out, in); conv2d (out_ch, in_ch, kH, kW)
    Tensor bias;
    std::size_t stride = 1;
    std::size_t padding = 0;
};

class Network {
public:
    // Kaiming-uniform weights with bound sqrt(6 / fan_in); zero biases.
    static Network build(const NetSpec& spec, std::uint64_t init_seed);

    const NetSpec& spec() const { return spec_; }
    std::size_t depth() const { return params_.size(); }

    ParamLayer& layer(std::size_t ordinal);
    const ParamLayer& layer(std::size_t ordinal) const;
    std::span<ParamLayer> layers() { return params_; }
    std::span<const ParamLayer> layers() const { return params_; }

    Network clone() const { return *this; }

    // Logits for a batch (N, input_shape...).
    Tensor logits(const Tensor& x) const;

private:
    NetSpec spec_;
    std::vector<ParamLayer> params_;
};

bool weights_bit_identical(const Network& a, const Network& b);

enum class LossKind { CrossEntropy, SquaredError };

// A Network's architecture lowered onto an autodiff graph. The graph is built
// once; each forward() rebinds the current weights of the given network, so one
// NetGraph serves any network sharing the spec (clones, perturbed copies).
// SquaredError compares logits against one-hot targets.
class NetGraph {
public:
    explicit NetGraph(const NetSpec& spec, LossKind loss = LossKind::CrossEntropy);

    // Mean loss over the batch.
    double forward(const Network& net, const Tensor& x, std::span<const int> labels);
    void backward();

    const Tensor& logits() const { return graph_.value(logits_); }
    const std::vector<double>& losses() const { return graph_.per_example_loss(loss_); }
    const Tensor& input_grad() const { return graph_.grad(x_); }
    const Tensor& weight_grad(std::size_t ordinal) const;
    const Tensor& bias_grad(std::size_t ordinal) const;

    ad::Graph& graph() { return graph_; }
    ad::NodeId input_node() const { return x_; }
    ad::NodeId loss_node() const { return loss_; }

private:
    NetSpec spec_;
    LossKind loss_kind_;
    ad::Graph graph_;
    ad::NodeId x_ = 0, labels_ = 0, logits_ = 0, loss_ = 0;
    std::vector<ad::NodeId> weights_, biases_;
};

// Predicted classes; ties resolve to the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);

// ---- checkpoints ----------------------------------------------------------

class CheckpointError : public Error {
public:
    enum class Code { Io, BadMagic, VersionMismatch, Truncated, Mismatch };
    CheckpointError(Code code, const std::string& what) : Error(what), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

inline constexpr char kCheckpointMagic[4] = {'L', 'A', 'P', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor value;
};

// Layout (little-endian): "LAPC" | u32 version | u32 layer count L | 2L
// records (weight then bias per ordinal): u16 name length, name bytes, u8
// rank, u64 dims, f64 payload row-major.
void save_checkpoint(const Network& net, const std::filesystem::path& path);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);
// The architecture is not stored; the tensors are checked against `spec`.
Network load_checkpoint(const std::filesystem::path& path, const NetSpec& spec);

}  // namespace laplab

#endif  // LAPLAB_NETWORK_HPP
