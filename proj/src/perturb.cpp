#include "laplab/perturb.hpp"

#include <cmath>

#include "laplab/attacks.hpp"
#include "laplab/error.hpp"
#include "laplab/random.hpp"

namespace laplab {

const char* perturb_mode_name(PerturbMode m) {
    switch (m) {
        case PerturbMode::None: return "none";
        case PerturbMode::LapJoint: return "lap-joint";
        case PerturbMode::LapSeq: return "lap-seq";
        case PerturbMode::LapRandom: return "lap-random";
        case PerturbMode::LapInf: return "lap-inf";
        case PerturbMode::AwpOriginal: return "awp-original";
        case PerturbMode::AwpModified: return "awp-modified";
    }
    return "?";
}

std::optional<PerturbMode> parse_perturb_mode(const std::string& s) {
    for (auto m : {PerturbMode::None, PerturbMode::LapJoint, PerturbMode::LapSeq, PerturbMode::LapRandom,
                   PerturbMode::LapInf, PerturbMode::AwpOriginal, PerturbMode::AwpModified})
        if (s == perturb_mode_name(m)) return m;
    return std::nullopt;
}

double layer_lambda(std::size_t l, std::size_t L, double beta, double gamma) {
    if (l < 1 || l > L) throw InvalidArgument("layer ordinal " + std::to_string(l) + " outside 1.." + std::to_string(L));
    if (!(beta >= 0.0)) throw InvalidArgument("beta must be >= 0");
    if (!(gamma > 0.0)) throw InvalidArgument("gamma must be > 0");
    const double ratio = std::log(static_cast<double>(l)) / std::log(static_cast<double>(L + 1));
    return beta * (1.0 - std::pow(ratio, gamma));
}

PerturbSchedule::PerturbSchedule(PerturbMode mode, double beta, double gamma, std::size_t depth)
    : mode_(mode), beta_(beta), gamma_(gamma) {
    if (depth < 1) throw InvalidArgument("schedule depth must be >= 1");
    lambdas_.resize(depth);
    for (std::size_t l = 1; l <= depth; ++l)
        lambdas_[l - 1] = is_awp() ? beta : layer_lambda(l, depth, beta, gamma);
    if (is_awp() && !(beta >= 0.0)) throw InvalidArgument("beta must be >= 0");
}

bool PerturbSchedule::is_lap() const {
    return mode_ == PerturbMode::LapJoint || mode_ == PerturbMode::LapSeq || mode_ == PerturbMode::LapRandom ||
           mode_ == PerturbMode::LapInf;
}

WeightDelta WeightDelta::zeros_like(const Network& net) {
    WeightDelta d;
    for (const auto& l : net.layers()) d.layers.emplace_back(l.weight.shape(), 0.0);
    return d;
}

WeightDelta WeightDelta::weight_grads_of(const NetGraph& g, const Network& net) {
    WeightDelta d;
    for (std::size_t l = 1; l <= net.depth(); ++l) d.layers.push_back(g.weight_grad(l));
    return d;
}

WeightDelta compute_nu(const WeightDelta& grads, const Network& net, const PerturbSchedule& schedule,
                       std::uint64_t seed) {
    if (grads.depth() != net.depth() || schedule.depth() != net.depth())
        throw ShapeError("gradient/schedule depth does not match network depth");
    WeightDelta nu = WeightDelta::zeros_like(net);
    if (schedule.mode() == PerturbMode::None) return nu;
    for (std::size_t l = 1; l <= net.depth(); ++l) {
        const Tensor& w = net.layer(l).weight;
        const Tensor* g = &grads[l];
        if (g->shape() != w.shape())
            throw ShapeError("gradient for layer " + std::to_string(l) + " has shape " + shape_str(g->shape()) +
                             ", weight " + shape_str(w.shape()));
        const double lam = schedule.lambda(l);
        Tensor noise;
        if (schedule.mode() == PerturbMode::LapRandom) {
            noise = Tensor(w.shape());
            Rng rng(sub_seed(seed, l));
            for (auto& v : noise.data()) v = rng.normal();
            g = &noise;
        }
        const double gnorm = g->norm2();
        if (lam == 0.0 || gnorm == 0.0) continue;
        const double wnorm = w.norm2();
        Tensor& out = nu[l];
        if (schedule.mode() == PerturbMode::LapInf) {
            const double mag = lam * wnorm / std::sqrt(static_cast<double>(w.numel()));
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] = mag * sign((*g)[i]);
        } else {
            const double s = lam * wnorm / gnorm;
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] = s * (*g)[i];
        }
    }
    return nu;
}

namespace {

// Smallest adjustment of d so that (w + d) - d == w holds in floating point.
// Not always possible: when |d| dwarfs |w| the sum has no room for w's low bits.
double realizable(double w, double d) {
    for (int i = 0; i < 3; ++i) {
        const double s = w + d;
        if (s - d == w) return d;
        d = s - w;
    }
    return d;
}

}  // namespace

void apply(Network& net, WeightDelta& nu) {
    if (nu.depth() != net.depth()) throw ShapeError("weight delta depth does not match network");
    nu.applied_to.clear();
    for (std::size_t l = 1; l <= net.depth(); ++l) {
        Tensor& w = net.layer(l).weight;
        nu.applied_to.push_back(w);
        Tensor& d = nu[l];
        if (d.shape() != w.shape()) throw ShapeError("weight delta for layer " + std::to_string(l) + " has wrong shape");
        for (std::size_t i = 0; i < w.numel(); ++i) {
            d[i] = realizable(w[i], d[i]);
            w[i] += d[i];
        }
    }
}

void subtract(Network& net, const WeightDelta& nu) {
    if (nu.depth() != net.depth()) throw ShapeError("weight delta depth does not match network");
    for (std::size_t l = 1; l <= net.depth(); ++l) {
        Tensor& w = net.layer(l).weight;
        const Tensor& d = nu[l];
        if (d.shape() != w.shape()) throw ShapeError("weight delta for layer " + std::to_string(l) + " has wrong shape");
        const Tensor* base = nu.applied_to.size() == nu.depth() ? &nu.applied_to[l - 1] : nullptr;
        if (base && base->shape() != w.shape()) base = nullptr;
        for (std::size_t i = 0; i < w.numel(); ++i) {
            if (base && w[i] == (*base)[i] + d[i])
                w[i] = (*base)[i];
            else
                w[i] -= d[i];
        }
    }
}

}  // namespace laplab
