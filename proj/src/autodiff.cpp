#include "laplab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "laplab/error.hpp"

namespace laplab::ad {

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Dense: return "dense";
        case Op::Conv2d: return "conv2d";
        case Op::Relu: return "relu";
        case Op::AvgPool2: return "avg_pool2";
        case Op::Flatten: return "flatten";
        case Op::SoftmaxCrossEntropy: return "softmax_cross_entropy";
        case Op::SquaredError: return "squared_error";
        case Op::Add: return "add";
        case Op::Scale: return "scale";
    }
    return "?";
}

namespace {

// Prepares `t` to hold `shape`, reusing its storage when the shape matches.
void reset(Tensor& t, const Shape& shape) {
    if (t.shape() == shape)
        t.fill(0.0);
    else
        t = Tensor(shape, 0.0);
}

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

}  // namespace

void Graph::check_id(NodeId id) const {
    if (id >= nodes_.size()) throw InvalidArgument("unknown node id " + std::to_string(id));
}

NodeId Graph::push(Node node) {
    for (auto in : node.inputs) check_id(in);
    nodes_.push_back(std::move(node));
    forward_done_ = false;
    return nodes_.size() - 1;
}

NodeId Graph::add_leaf(std::string name, LeafKind kind) {
    Node n;
    n.op = Op::Leaf;
    n.leaf = kind;
    n.name = std::move(name);
    return push(std::move(n));
}

NodeId Graph::input(std::string name) { return add_leaf(std::move(name), LeafKind::Input); }
NodeId Graph::param(std::string name) { return add_leaf(std::move(name), LeafKind::Param); }
NodeId Graph::constant(std::string name) { return add_leaf(std::move(name), LeafKind::Constant); }

NodeId Graph::dense(NodeId x, NodeId w, NodeId b) {
    Node n;
    n.op = Op::Dense;
    n.inputs = {x, w, b};
    return push(std::move(n));
}

NodeId Graph::conv2d(NodeId x, NodeId w, NodeId b, std::size_t stride, std::size_t padding) {
    if (stride == 0) throw InvalidArgument("conv2d stride must be positive");
    Node n;
    n.op = Op::Conv2d;
    n.inputs = {x, w, b};
    n.stride = stride;
    n.padding = padding;
    return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
    Node n;
    n.op = Op::Relu;
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::avg_pool2(NodeId x) {
    Node n;
    n.op = Op::AvgPool2;
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::flatten(NodeId x) {
    Node n;
    n.op = Op::Flatten;
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::softmax_cross_entropy(NodeId logits, NodeId labels, Reduction red) {
    Node n;
    n.op = Op::SoftmaxCrossEntropy;
    n.inputs = {logits, labels};
    n.reduction = red;
    auto id = push(std::move(n));
    output_ = id;
    has_output_ = true;
    return id;
}

NodeId Graph::squared_error(NodeId pred, NodeId target, Reduction red) {
    Node n;
    n.op = Op::SquaredError;
    n.inputs = {pred, target};
    n.reduction = red;
    auto id = push(std::move(n));
    output_ = id;
    has_output_ = true;
    return id;
}

NodeId Graph::add(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Add;
    n.inputs = {a, b};
    return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double c) {
    Node n;
    n.op = Op::Scale;
    n.inputs = {a};
    n.factor = c;
    return push(std::move(n));
}

void Graph::set_output(NodeId id) {
    check_id(id);
    output_ = id;
    has_output_ = true;
    forward_done_ = false;
}

LeafKind Graph::leaf_kind(NodeId id) const {
    const auto& n = nodes_.at(id);
    if (n.op != Op::Leaf) throw InvalidArgument("node " + std::to_string(id) + " is not a leaf");
    return n.leaf;
}

std::vector<NodeId> Graph::leaves() const {
    std::vector<NodeId> out;
    for (NodeId i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].op == Op::Leaf) out.push_back(i);
    return out;
}

void Graph::bind(NodeId leaf, Tensor value) {
    check_id(leaf);
    auto& n = nodes_[leaf];
    if (n.op != Op::Leaf) throw InvalidArgument("cannot bind non-leaf node " + std::to_string(leaf));
    n.value = std::move(value);
    n.bound = true;
    forward_done_ = false;
}

void Graph::bind(const Bindings& bindings) {
    for (const auto& [id, t] : bindings) bind(id, t);
}

Tensor& Graph::bound(NodeId leaf) {
    check_id(leaf);
    auto& n = nodes_[leaf];
    if (n.op != Op::Leaf || !n.bound) throw InvalidArgument("node " + std::to_string(leaf) + " is not a bound leaf");
    forward_done_ = false;
    return n.value;
}

const Tensor& Graph::value(NodeId id) const {
    check_id(id);
    return nodes_[id].value;
}

const Tensor& Graph::grad(NodeId id) const {
    check_id(id);
    return nodes_[id].grad;
}

const std::vector<double>& Graph::per_example_loss(NodeId loss_node) const {
    check_id(loss_node);
    const auto& n = nodes_[loss_node];
    if (n.op != Op::SoftmaxCrossEntropy && n.op != Op::SquaredError)
        throw InvalidArgument("node " + std::to_string(loss_node) + " is not a loss node");
    return n.losses;
}

const Tensor& Graph::forward(const Bindings& bindings) {
    bind(bindings);
    return forward();
}

const Tensor& Graph::forward() {
    if (!has_output_) throw InvalidArgument("graph has no output node");
    for (NodeId id = 0; id <= output_; ++id) {
        auto& n = nodes_[id];
        if (n.op == Op::Leaf) {
            if (!n.bound) throw InvalidArgument("leaf '" + n.name + "' (node " + std::to_string(id) + ") is unbound");
            if (n.leaf != LeafKind::Constant && !n.value.all_finite())
                throw NonFiniteError("non-finite value bound to leaf '" + n.name + "'", static_cast<long>(id));
            continue;
        }
        eval_node(id);
        if (!n.value.all_finite())
            throw NonFiniteError(std::string("non-finite result of ") + op_name(n.op), static_cast<long>(id));
    }
    forward_done_ = true;
    const auto& out = nodes_[output_].value;
    if (out.numel() != 1) throw ShapeError("output is not a scalar: " + shape_str(out.shape()), static_cast<long>(output_));
    return out;
}

void Graph::eval_node(NodeId id) {
    auto& n = nodes_[id];
    const long nid = static_cast<long>(id);
    auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };

    switch (n.op) {
        case Op::Leaf: break;

        case Op::Dense: {
            const Tensor& x = in(0);
            const Tensor& w = in(1);
            const Tensor& b = in(2);
            if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || w.dim(1) != x.dim(1) || b.dim(0) != w.dim(0))
                throw ShapeError("dense expects x (N, in), w (out, in), b (out); got " + shape_str(x.shape()) + ", " +
                                     shape_str(w.shape()) + ", " + shape_str(b.shape()),
                                 nid);
            const std::size_t N = x.dim(0), I = x.dim(1), O = w.dim(0);
            reset(n.value, {N, O});
            const double* xp = x.data().data();
            const double* wp = w.data().data();
            double* yp = n.value.data().data();
            for (std::size_t s = 0; s < N; ++s)
                for (std::size_t o = 0; o < O; ++o) {
                    double acc = b[o];
                    const double* wr = wp + o * I;
                    const double* xr = xp + s * I;
                    for (std::size_t i = 0; i < I; ++i) acc += wr[i] * xr[i];
                    yp[s * O + o] = acc;
                }
            break;
        }

        case Op::Conv2d: {
            const Tensor& x = in(0);
            const Tensor& w = in(1);
            const Tensor& b = in(2);
            if (x.rank() != 4 || w.rank() != 4 || b.rank() != 1 || w.dim(1) != x.dim(1) || b.dim(0) != w.dim(0))
                throw ShapeError("conv2d expects x (N, C, H, W), w (O, C, kH, kW), b (O); got " + shape_str(x.shape()) +
                                     ", " + shape_str(w.shape()) + ", " + shape_str(b.shape()),
                                 nid);
            const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const std::size_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
            const std::size_t s = n.stride, p = n.padding;
            if (H + 2 * p < KH || W + 2 * p < KW)
                throw ShapeError("conv2d kernel larger than padded input", nid);
            const std::size_t OH = conv_out(H, KH, s, p), OW = conv_out(W, KW, s, p);
            reset(n.value, {N, O, OH, OW});
            const double* xp = x.data().data();
            const double* wp = w.data().data();
            double* yp = n.value.data().data();
            // Each output element accumulates bias, then (in-channel, ky, kx) in row-major order.
            for (std::size_t e = 0; e < N; ++e)
                for (std::size_t o = 0; o < O; ++o) {
                    double* yo = yp + ((e * O + o) * OH) * OW;
                    for (std::size_t k = 0; k < OH * OW; ++k) yo[k] = b[o];
                    for (std::size_t c = 0; c < C; ++c) {
                        const double* xc = xp + ((e * C + c) * H) * W;
                        for (std::size_t ky = 0; ky < KH; ++ky)
                            for (std::size_t kx = 0; kx < KW; ++kx) {
                                const double wv = wp[((o * C + c) * KH + ky) * KW + kx];
                                for (std::size_t oy = 0; oy < OH; ++oy) {
                                    const long iy = static_cast<long>(oy * s + ky) - static_cast<long>(p);
                                    if (iy < 0 || iy >= static_cast<long>(H)) continue;
                                    const double* xr = xc + static_cast<std::size_t>(iy) * W;
                                    double* yr = yo + oy * OW;
                                    for (std::size_t ox = 0; ox < OW; ++ox) {
                                        const long ix = static_cast<long>(ox * s + kx) - static_cast<long>(p);
                                        if (ix < 0 || ix >= static_cast<long>(W)) continue;
                                        yr[ox] += wv * xr[ix];
                                    }
                                }
                            }
                    }
                }
            break;
        }

        case Op::Relu: {
            const Tensor& x = in(0);
            reset(n.value, x.shape());
            for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] = x[i] > 0.0 ? x[i] : 0.0;
            break;
        }

        case Op::AvgPool2: {
            const Tensor& x = in(0);
            if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2)
                throw ShapeError("avg_pool2 expects (N, C, H, W) with H, W >= 2; got " + shape_str(x.shape()), nid);
            const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const std::size_t OH = H / 2, OW = W / 2;
            reset(n.value, {N, C, OH, OW});
            for (std::size_t nc = 0; nc < N * C; ++nc) {
                const double* xp = x.data().data() + nc * H * W;
                double* yp = n.value.data().data() + nc * OH * OW;
                for (std::size_t oy = 0; oy < OH; ++oy)
                    for (std::size_t ox = 0; ox < OW; ++ox) {
                        const double* r0 = xp + (2 * oy) * W + 2 * ox;
                        const double* r1 = r0 + W;
                        yp[oy * OW + ox] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
                    }
            }
            break;
        }

        case Op::Flatten: {
            const Tensor& x = in(0);
            const std::size_t N = x.dim(0);
            n.value = x.reshaped({N, x.numel() / N});
            break;
        }

        case Op::SoftmaxCrossEntropy: {
            const Tensor& z = in(0);
            const Tensor& y = in(1);
            if (z.rank() != 2 || y.rank() != 1 || y.dim(0) != z.dim(0))
                throw ShapeError("softmax_cross_entropy expects logits (N, K) and labels (N); got " +
                                     shape_str(z.shape()) + ", " + shape_str(y.shape()),
                                 nid);
            const std::size_t N = z.dim(0), K = z.dim(1);
            n.losses.assign(N, 0.0);
            n.cache.assign(N * K, 0.0);  // softmax probabilities
            double total = 0.0;
            for (std::size_t e = 0; e < N; ++e) {
                const double lab = y[e];
                if (!(lab >= 0.0) || lab >= static_cast<double>(K) || lab != std::floor(lab))
                    throw ShapeError("label " + std::to_string(lab) + " outside [0, " + std::to_string(K) + ")", nid);
                const double* zr = z.data().data() + e * K;
                double m = zr[0];
                for (std::size_t k = 1; k < K; ++k) m = std::max(m, zr[k]);
                double se = 0.0;
                for (std::size_t k = 0; k < K; ++k) se += std::exp(zr[k] - m);
                const double lse = m + std::log(se);
                for (std::size_t k = 0; k < K; ++k) n.cache[e * K + k] = std::exp(zr[k] - lse);
                n.losses[e] = lse - zr[static_cast<std::size_t>(lab)];
                total += n.losses[e];
            }
            if (n.reduction == Reduction::Mean) total /= static_cast<double>(N);
            n.value = Tensor::scalar(total);
            break;
        }

        case Op::SquaredError: {
            const Tensor& p = in(0);
            const Tensor& t = in(1);
            if (p.shape() != t.shape())
                throw ShapeError("squared_error shapes differ: " + shape_str(p.shape()) + " vs " + shape_str(t.shape()),
                                 nid);
            const std::size_t N = p.dim(0), per = p.numel() / N;
            n.losses.assign(N, 0.0);
            double total = 0.0;
            for (std::size_t e = 0; e < N; ++e) {
                double s = 0.0;
                for (std::size_t k = 0; k < per; ++k) {
                    const double d = p[e * per + k] - t[e * per + k];
                    s += d * d;
                }
                n.losses[e] = s;
                total += s;
            }
            if (n.reduction == Reduction::Mean) total /= static_cast<double>(N);
            n.value = Tensor::scalar(total);
            break;
        }

        case Op::Add: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            if (a.shape() != b.shape())
                throw ShapeError("add shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()), nid);
            n.value = a;
            n.value += b;
            break;
        }

        case Op::Scale: {
            n.value = in(0);
            n.value *= n.factor;
            break;
        }
    }
}

void Graph::backward() {
    if (!forward_done_) throw InvalidArgument("backward called before forward");
    for (NodeId id = 0; id <= output_; ++id) reset(nodes_[id].grad, nodes_[id].value.shape());
    for (NodeId id = output_ + 1; id < nodes_.size(); ++id) nodes_[id].grad = Tensor();
    nodes_[output_].grad.fill(1.0);
    for (NodeId id = output_ + 1; id-- > 0;) {
        if (nodes_[id].op != Op::Leaf) backprop_node(id);
    }
    for (auto& n : nodes_)
        if (n.op == Op::Leaf && n.leaf == LeafKind::Constant && !n.grad.empty()) n.grad.fill(0.0);
}

void Graph::backprop_node(NodeId id) {
    auto& n = nodes_[id];
    const Tensor& g = n.grad;
    auto in = [&](std::size_t k) -> Node& { return nodes_[n.inputs[k]]; };

    switch (n.op) {
        case Op::Leaf: break;

        case Op::Dense: {
            const Tensor& x = in(0).value;
            const Tensor& w = in(1).value;
            Tensor& gx = in(0).grad;
            Tensor& gw = in(1).grad;
            Tensor& gb = in(2).grad;
            const std::size_t N = x.dim(0), I = x.dim(1), O = w.dim(0);
            const double* xp = x.data().data();
            const double* wp = w.data().data();
            const double* gp = g.data().data();
            for (std::size_t s = 0; s < N; ++s)
                for (std::size_t o = 0; o < O; ++o) {
                    const double go = gp[s * O + o];
                    gb[o] += go;
                    double* gwr = gw.data().data() + o * I;
                    double* gxr = gx.data().data() + s * I;
                    const double* wr = wp + o * I;
                    const double* xr = xp + s * I;
                    for (std::size_t i = 0; i < I; ++i) {
                        gwr[i] += go * xr[i];
                        gxr[i] += go * wr[i];
                    }
                }
            break;
        }

        case Op::Conv2d: {
            const Tensor& x = in(0).value;
            const Tensor& w = in(1).value;
            Tensor& gx = in(0).grad;
            Tensor& gw = in(1).grad;
            Tensor& gb = in(2).grad;
            const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const std::size_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
            const std::size_t s = n.stride, p = n.padding;
            const std::size_t OH = g.dim(2), OW = g.dim(3);
            const double* xp = x.data().data();
            const double* wp = w.data().data();
            const double* gp = g.data().data();
            double* gxp = gx.data().data();
            double* gwp = gw.data().data();
            for (std::size_t e = 0; e < N; ++e)
                for (std::size_t o = 0; o < O; ++o) {
                    const double* go = gp + ((e * O + o) * OH) * OW;
                    double bsum = 0.0;
                    for (std::size_t k = 0; k < OH * OW; ++k) bsum += go[k];
                    gb[o] += bsum;
                    for (std::size_t c = 0; c < C; ++c) {
                        const double* xc = xp + ((e * C + c) * H) * W;
                        double* gxc = gxp + ((e * C + c) * H) * W;
                        for (std::size_t ky = 0; ky < KH; ++ky)
                            for (std::size_t kx = 0; kx < KW; ++kx) {
                                const std::size_t widx = ((o * C + c) * KH + ky) * KW + kx;
                                const double wv = wp[widx];
                                double wacc = 0.0;
                                for (std::size_t oy = 0; oy < OH; ++oy) {
                                    const long iy = static_cast<long>(oy * s + ky) - static_cast<long>(p);
                                    if (iy < 0 || iy >= static_cast<long>(H)) continue;
                                    const double* xr = xc + static_cast<std::size_t>(iy) * W;
                                    double* gxr = gxc + static_cast<std::size_t>(iy) * W;
                                    const double* gr = go + oy * OW;
                                    for (std::size_t ox = 0; ox < OW; ++ox) {
                                        const long ix = static_cast<long>(ox * s + kx) - static_cast<long>(p);
                                        if (ix < 0 || ix >= static_cast<long>(W)) continue;
                                        wacc += gr[ox] * xr[ix];
                                        gxr[ix] += wv * gr[ox];
                                    }
                                }
                                gwp[widx] += wacc;
                            }
                    }
                }
            break;
        }

        case Op::Relu: {
            const Tensor& x = in(0).value;
            Tensor& gx = in(0).grad;
            // Subgradient 0 at exactly 0.
            for (std::size_t i = 0; i < x.numel(); ++i)
                if (x[i] > 0.0) gx[i] += g[i];
            break;
        }

        case Op::AvgPool2: {
            const Tensor& x = in(0).value;
            Tensor& gx = in(0).grad;
            const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const std::size_t OH = H / 2, OW = W / 2;
            for (std::size_t nc = 0; nc < N * C; ++nc) {
                double* gxp = gx.data().data() + nc * H * W;
                const double* gp = g.data().data() + nc * OH * OW;
                for (std::size_t oy = 0; oy < OH; ++oy)
                    for (std::size_t ox = 0; ox < OW; ++ox) {
                        const double v = 0.25 * gp[oy * OW + ox];
                        double* r0 = gxp + (2 * oy) * W + 2 * ox;
                        double* r1 = r0 + W;
                        r0[0] += v;
                        r0[1] += v;
                        r1[0] += v;
                        r1[1] += v;
                    }
            }
            break;
        }

        case Op::Flatten: {
            Tensor& gx = in(0).grad;
            for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g[i];
            break;
        }

        case Op::SoftmaxCrossEntropy: {
            const Tensor& z = in(0).value;
            const Tensor& y = in(1).value;
            Tensor& gz = in(0).grad;
            const std::size_t N = z.dim(0), K = z.dim(1);
            double scale = g[0];
            if (n.reduction == Reduction::Mean) scale /= static_cast<double>(N);
            for (std::size_t e = 0; e < N; ++e) {
                const auto lab = static_cast<std::size_t>(y[e]);
                for (std::size_t k = 0; k < K; ++k) {
                    const double pk = n.cache[e * K + k] - (k == lab ? 1.0 : 0.0);
                    gz[e * K + k] += scale * pk;
                }
            }
            break;
        }

        case Op::SquaredError: {
            const Tensor& p = in(0).value;
            const Tensor& t = in(1).value;
            Tensor& gp = in(0).grad;
            Tensor& gt = in(1).grad;
            const std::size_t N = p.dim(0);
            double scale = 2.0 * g[0];
            if (n.reduction == Reduction::Mean) scale /= static_cast<double>(N);
            for (std::size_t i = 0; i < p.numel(); ++i) {
                const double d = scale * (p[i] - t[i]);
                gp[i] += d;
                gt[i] -= d;
            }
            break;
        }

        case Op::Add: {
            in(0).grad += g;
            in(1).grad += g;
            break;
        }

        case Op::Scale: {
            Tensor& gx = in(0).grad;
            for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += n.factor * g[i];
            break;
        }
    }
}

Bindings Graph::leaf_gradients() const {
    if (!forward_done_) throw InvalidArgument("no gradients: forward/backward not run");
    Bindings out;
    for (NodeId i = 0; i <= output_; ++i)
        if (nodes_[i].op == Op::Leaf) out.emplace(i, nodes_[i].grad);
    return out;
}

FiniteDiffReport finite_diff_check(Graph& graph, const Bindings& bindings, double step, double tolerance) {
    if (!(step > 0.0)) throw InvalidArgument("finite_diff_check: step must be positive");
    graph.bind(bindings);
    graph.forward();
    graph.backward();
    const Bindings analytic = graph.leaf_gradients();

    FiniteDiffReport rep;
    for (const auto& [leaf, ga] : analytic) {
        if (graph.leaf_kind(leaf) == LeafKind::Constant) continue;
        Tensor& v = graph.bound(leaf);
        for (std::size_t i = 0; i < v.numel(); ++i) {
            const double orig = v[i];
            v[i] = orig + step;
            const double fp = graph.forward()[0];
            graph.bound(leaf)[i] = orig - step;
            const double fm = graph.forward()[0];
            graph.bound(leaf)[i] = orig;
            const double num = (fp - fm) / (2.0 * step);
            const double a = ga[i];
            const double denom = std::max({std::abs(a), std::abs(num), 1e-12});
            const double rel = std::abs(a - num) / denom;
            ++rep.coordinates;
            if (rel > rep.max_rel_error || rep.coordinates == 1) {
                rep.max_rel_error = rel;
                rep.worst_leaf = leaf;
                rep.worst_index = i;
                rep.worst_analytic = a;
                rep.worst_numeric = num;
            }
        }
    }
    rep.passed = rep.max_rel_error <= tolerance;
    // Leave the graph evaluated at the original bindings.
    graph.forward();
    graph.backward();
    return rep;
}

}  // namespace laplab::ad
