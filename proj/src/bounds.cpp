#include "laplab/bounds.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "laplab/error.hpp"
#include "laplab/random.hpp"

namespace laplab {

std::string BoundReport::to_json() const {
    nlohmann::ordered_json j;
    j["empirical_loss"] = empirical_loss;
    j["worst_case_gap"] = worst_case_gap;
    j["complexity_term"] = complexity_term;
    j["total_bound"] = total_bound;
    j["n"] = n;
    j["delta"] = delta;
    j["kl_proxy"] = kl_proxy;
    j["empirical_ce"] = empirical_ce;
    j["worst_case_gap_ce"] = worst_case_gap_ce;
    return j.dump(2);
}

double kl_proxy(const PerturbSchedule& schedule) {
    double s = 0.0;
    for (std::size_t l = 1; l <= schedule.depth(); ++l) {
        const double lam = schedule.lambda(l);
        if (lam == 0.0) throw InvalidArgument("kl proxy diverges: lambda is zero at ordinal " + std::to_string(l));
        s += 1.0 / (2.0 * lam * lam);
    }
    return s;
}

BoundReport lap_bound(double emp_loss, double worst_gap, const PerturbSchedule& schedule, std::size_t n, double delta) {
    if (n < 1) throw InvalidArgument("bound needs n >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must be in (0, 1)");
    if (!(worst_gap >= 0.0)) throw InvalidArgument("worst-case gap must be >= 0");
    BoundReport r;
    r.empirical_loss = emp_loss;
    r.worst_case_gap = worst_gap;
    r.n = n;
    r.delta = delta;
    r.kl_proxy = kl_proxy(schedule);
    const double nn = static_cast<double>(n);
    r.complexity_term = 4.0 * std::sqrt((r.kl_proxy + std::log(2.0 * nn / delta)) / nn);
    r.total_bound = r.empirical_loss + r.worst_case_gap + r.complexity_term;
    return r;
}

namespace {

constexpr std::size_t kBatch = 250;

double batch_loss(NetGraph& g, const Network& net, const Tensor& x, std::span<const int> y, GapLoss loss) {
    const double ce = g.forward(net, x, y);
    if (loss == GapLoss::CrossEntropy) return ce * static_cast<double>(y.size());
    const auto pred = argmax_rows(g.logits());
    double wrong = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) wrong += pred[i] != y[i] ? 1.0 : 0.0;
    return wrong;
}

template <class Fn>
void for_batches(const Dataset& data, Fn&& fn) {
    const std::size_t n = data.size();
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < n; start += kBatch) {
        idx.clear();
        for (std::size_t i = start; i < std::min(n, start + kBatch); ++i) idx.push_back(i);
        fn(data.gather_images(idx), data.gather_labels(idx));
    }
}

WeightDelta dataset_weight_grads(const Network& net, const Dataset& data) {
    NetGraph g(net.spec());
    WeightDelta total = WeightDelta::zeros_like(net);
    for_batches(data, [&](const Tensor& x, const std::vector<int>& y) {
        g.forward(net, x, y);
        g.backward();
        for (std::size_t l = 1; l <= net.depth(); ++l) {
            Tensor gl = g.weight_grad(l);
            gl *= static_cast<double>(y.size());
            total[l] += gl;
        }
    });
    return total;
}

}  // namespace

double dataset_loss(const Network& net, const Dataset& data, GapLoss loss) {
    NetGraph g(net.spec());
    double s = 0.0;
    for_batches(data, [&](const Tensor& x, const std::vector<int>& y) { s += batch_loss(g, net, x, y, loss); });
    return s / static_cast<double>(data.size());
}

double measure_worst_gap(const Network& net, const Dataset& data, const PerturbSchedule& schedule, std::size_t tries,
                         std::uint64_t seed, GapLoss loss) {
    if (tries < 1) throw InvalidArgument("worst-gap probe needs tries >= 1");
    const double base = dataset_loss(net, data, loss);
    WeightDelta nu = compute_nu(dataset_weight_grads(net, data), net, schedule, seed);

    auto probe = [&](WeightDelta d) {
        Network p = net.clone();
        apply(p, d);
        return dataset_loss(p, data, loss);
    };
    double best = probe(nu);
    for (std::size_t t = 1; t < tries; ++t) {
        Rng rng(sub_seed(seed, 0x9a9, t));
        WeightDelta r = WeightDelta::zeros_like(net);
        for (std::size_t l = 1; l <= net.depth(); ++l) {
            const double target = nu[l].norm2();
            if (target == 0.0) continue;
            for (auto& v : r[l].data()) v = rng.normal();
            r[l] *= target / r[l].norm2();
        }
        best = std::max(best, probe(r));
    }
    return std::max(0.0, best - base);
}

}  // namespace laplab
