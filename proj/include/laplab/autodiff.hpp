#ifndef LAPLAB_AUTODIFF_HPP
#define LAPLAB_AUTODIFF_HPP

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "laplab/tensor.hpp"

namespace laplab::ad {

using NodeId = std::size_t;

enum class LeafKind { Input, Param, Constant };

enum class Op {
    Leaf,
    Dense,
    Conv2d,
    Relu,
    AvgPool2,
    Flatten,
    SoftmaxCrossEntropy,
    SquaredError,
    Add,
    Scale,
};

enum class Reduction { Mean, Sum };

const char* op_name(Op op);

using Bindings = std::map<NodeId, Tensor>;

// A static computation graph evaluated in reverse mode. Nodes are appended in
// topological order: every node's inputs have smaller ids. The last loss node
// added becomes the output unless set_output() says otherwise.
//
// Layout conventions:
//   dense   x (N, in), w (out, in), b (out)            -> (N, out)
//   conv2d  x (N, C, H, W), w (O, C, kH, kW), b (O)    -> (N, O, H', W')
//   avg_pool2 halves H and W (floor), 2x2 window, stride 2
//   softmax_cross_entropy  logits (N, K), labels (N) holding class indices
//   squared_error  pred and target of equal shape (N, ...); per-example loss
//                  is the sum of squared differences
class Graph {
public:
    NodeId input(std::string name);
    NodeId param(std::string name);
    NodeId constant(std::string name);

    NodeId dense(NodeId x, NodeId w, NodeId b);
    NodeId conv2d(NodeId x, NodeId w, NodeId b, std::size_t stride, std::size_t padding);
    NodeId relu(NodeId x);
    NodeId avg_pool2(NodeId x);
    NodeId flatten(NodeId x);
    NodeId softmax_cross_entropy(NodeId logits, NodeId labels, Reduction red = Reduction::Mean);
    NodeId squared_error(NodeId pred, NodeId target, Reduction red = Reduction::Mean);
    NodeId add(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);

    void set_output(NodeId id);
    NodeId output() const { return output_; }

    void bind(NodeId leaf, Tensor value);
    void bind(const Bindings& bindings);
    Tensor& bound(NodeId leaf);

    // Evaluates every node; returns the scalar output. Throws ShapeError or
    // NonFiniteError naming the offending node.
    const Tensor& forward();
    const Tensor& forward(const Bindings& bindings);

    // Reverse sweep from the output. Fills gradients for every node; leaves of
    // kind Constant receive zero gradients.
    void backward();
    Bindings leaf_gradients() const;

    const Tensor& value(NodeId id) const;
    const Tensor& grad(NodeId id) const;
    // Per-example losses of the most recent forward through a loss node.
    const std::vector<double>& per_example_loss(NodeId loss_node) const;

    std::size_t size() const { return nodes_.size(); }
    Op op(NodeId id) const { return nodes_.at(id).op; }
    LeafKind leaf_kind(NodeId id) const;
    const std::string& name(NodeId id) const { return nodes_.at(id).name; }
    std::vector<NodeId> leaves() const;
    bool has_forward() const { return forward_done_; }

private:
    struct Node {
        Op op = Op::Leaf;
        LeafKind leaf = LeafKind::Input;
        std::vector<NodeId> inputs;
        std::string name;
        std::size_t stride = 1;
        std::size_t padding = 0;
        double factor = 1.0;
        Reduction reduction = Reduction::Mean;
        bool bound = false;
        Tensor value;
        Tensor grad;
        std::vector<double> losses;
        std::vector<double> cache;
    };

    NodeId push(Node node);
    NodeId add_leaf(std::string name, LeafKind kind);
    void check_id(NodeId id) const;
    void eval_node(NodeId id);
    void backprop_node(NodeId id);

    std::vector<Node> nodes_;
    NodeId output_ = 0;
    bool has_output_ = false;
    bool forward_done_ = false;
};

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    NodeId worst_leaf = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coordinates = 0;
    bool passed = true;
};

// Central-difference check of every Input and Param leaf coordinate against
// backward(). Relative error is |a - b| / max(|a|, |b|, 1e-12).
FiniteDiffReport finite_diff_check(Graph& graph, const Bindings& bindings, double step, double tolerance);

}  // namespace laplab::ad

#endif  // LAPLAB_AUTODIFF_HPP
