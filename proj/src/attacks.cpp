#include "laplab/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "laplab/parallel.hpp"
#include "laplab/random.hpp"

namespace laplab {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

const char* attack_variant_name(AttackVariant v) {
    switch (v) {
        case AttackVariant::None: return "none";
        case AttackVariant::VFgsm: return "V-FGSM";
        case AttackVariant::RFgsm: return "R-FGSM";
        case AttackVariant::NFgsm: return "N-FGSM";
        case AttackVariant::Pgd: return "PGD";
    }
    return "?";
}

std::optional<AttackVariant> parse_attack_variant(const std::string& s) {
    for (auto v : {AttackVariant::None, AttackVariant::VFgsm, AttackVariant::RFgsm, AttackVariant::NFgsm, AttackVariant::Pgd})
        if (s == attack_variant_name(v)) return v;
    return std::nullopt;
}

AttackConfig AttackConfig::for_variant(AttackVariant v, double eps) {
    switch (v) {
        case AttackVariant::None: return none();
        case AttackVariant::VFgsm: return v_fgsm(eps);
        case AttackVariant::RFgsm: return r_fgsm(eps);
        case AttackVariant::NFgsm: return n_fgsm(eps);
        case AttackVariant::Pgd: return pgd(eps, 10, 1);
    }
    return none();
}

void AttackConfig::validate() const {
    if (!(epsilon >= 0.0)) throw InvalidArgument("attack epsilon must be >= 0");
    if (!(alpha >= 0.0)) throw InvalidArgument("attack alpha must be >= 0");
    if (restarts < 1) throw InvalidArgument("attack restarts must be >= 1");
    if (is_fgsm() && init_scale != 0.0 && init_scale != 1.0 && init_scale != 2.0)
        throw InvalidArgument("FGSM init_scale must be 0, 1 or 2");
    if (!(init_scale >= 0.0)) throw InvalidArgument("attack init_scale must be >= 0");
}

namespace {

void clamp_to_box(const Tensor& x, Tensor& delta) {
    for (std::size_t i = 0; i < delta.numel(); ++i) delta[i] = std::clamp(x[i] + delta[i], 0.0, 1.0) - x[i];
}

Tensor shifted(const Tensor& x, const Tensor& delta) { return x + delta; }

}  // namespace

Tensor fgsm_init(const Tensor& x, const AttackConfig& cfg, std::uint64_t seed) {
    Tensor eta(x.shape(), 0.0);
    const double r = cfg.init_scale * cfg.epsilon;
    if (r > 0.0) {
        Rng rng(seed);
        for (auto& v : eta.data()) v = rng.uniform(-r, r);
    }
    if (cfg.clamp_input) clamp_to_box(x, eta);
    return eta;
}

Tensor fgsm_step(const Tensor& x, const Tensor& eta, const Tensor& grad_x, const AttackConfig& cfg) {
    Tensor delta(x.shape());
    const bool eps_clamp = cfg.variant != AttackVariant::NFgsm;
    for (std::size_t i = 0; i < delta.numel(); ++i) {
        double d = eta[i] + cfg.alpha * sign(grad_x[i]);
        if (eps_clamp) d = std::clamp(d, -cfg.epsilon, cfg.epsilon);
        delta[i] = d;
    }
    if (cfg.clamp_input) clamp_to_box(x, delta);
    return delta;
}

Tensor fgsm(const Network& net, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg,
            std::uint64_t seed) {
    cfg.validate();
    if (!cfg.is_fgsm()) throw InvalidArgument("fgsm called with non-FGSM variant");
    const Tensor eta = fgsm_init(x, cfg, seed);
    NetGraph g(net.spec());
    g.forward(net, shifted(x, eta), labels);
    g.backward();
    return fgsm_step(x, eta, g.input_grad(), cfg);
}

Tensor pgd(const Network& net, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t N = x.dim(0), per = x.numel() / N;
    const double eps = cfg.epsilon;
    NetGraph g(net.spec());
    Tensor best(x.shape(), 0.0);
    std::vector<double> best_loss(N, -1.0);

    for (std::size_t r = 0; r < cfg.restarts; ++r) {
        Tensor delta(x.shape(), 0.0);
        const double init = cfg.init_scale * eps;
        if (init > 0.0)
            for (std::size_t i = 0; i < N; ++i) {
                Rng rng(sub_seed(seed, i, r));
                for (std::size_t k = 0; k < per; ++k) delta[i * per + k] = rng.uniform(-init, init);
            }
        for (auto& v : delta.data()) v = std::clamp(v, -eps, eps);
        if (cfg.clamp_input) clamp_to_box(x, delta);

        for (std::size_t s = 0; s < cfg.steps; ++s) {
            g.forward(net, shifted(x, delta), labels);
            g.backward();
            const Tensor& gx = g.input_grad();
            for (std::size_t k = 0; k < delta.numel(); ++k)
                delta[k] = std::clamp(delta[k] + cfg.alpha * sign(gx[k]), -eps, eps);
            if (cfg.clamp_input) clamp_to_box(x, delta);
        }

        if (cfg.restarts == 1) return delta;
        g.forward(net, shifted(x, delta), labels);
        const auto& losses = g.losses();
        for (std::size_t i = 0; i < N; ++i)
            if (r == 0 || losses[i] > best_loss[i]) {
                best_loss[i] = losses[i];
                std::copy_n(delta.data().begin() + static_cast<std::ptrdiff_t>(i * per), per,
                            best.data().begin() + static_cast<std::ptrdiff_t>(i * per));
            }
    }
    return best;
}

Tensor attack(const Network& net, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg,
              std::uint64_t seed) {
    switch (cfg.variant) {
        case AttackVariant::None: return Tensor(x.shape(), 0.0);
        case AttackVariant::Pgd: return pgd(net, x, labels, cfg, seed);
        default: return fgsm(net, x, labels, cfg, seed);
    }
}

namespace {

struct BatchOutcome {
    std::size_t correct = 0;
    double loss_sum = 0.0;
};

std::vector<BatchOutcome> run_batches(const Network& net, const Dataset& data, const AttackConfig& cfg,
                                      std::uint64_t seed, std::size_t batch_size) {
    if (data.size() == 0) throw InvalidArgument("cannot evaluate on an empty dataset");
    if (batch_size == 0) throw InvalidArgument("batch size must be positive");
    cfg.validate();
    const std::size_t n = data.size();
    const std::size_t batches = (n + batch_size - 1) / batch_size;
    std::vector<BatchOutcome> out(batches);
    parallel_for(batches, [&](std::size_t b) {
        const std::size_t lo = b * batch_size, hi = std::min(n, lo + batch_size);
        std::vector<std::size_t> idx(hi - lo);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = lo + i;
        const Tensor x = data.gather_images(idx);
        const auto y = data.gather_labels(idx);
        const Tensor delta = attack(net, x, y, cfg, sub_seed(seed, b));
        NetGraph g(net.spec());
        g.forward(net, x + delta, y);
        const auto pred = argmax_rows(g.logits());
        for (std::size_t i = 0; i < y.size(); ++i) {
            out[b].correct += pred[i] == y[i] ? 1 : 0;
            out[b].loss_sum += g.losses()[i];
        }
    });
    return out;
}

}  // namespace

double evaluate(const Network& net, const Dataset& data, const AttackConfig& cfg, std::uint64_t seed,
                std::size_t batch_size) {
    std::size_t correct = 0;
    for (const auto& o : run_batches(net, data, cfg, seed, batch_size)) correct += o.correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

double mean_loss(const Network& net, const Dataset& data, const AttackConfig& cfg, std::uint64_t seed,
                 std::size_t batch_size) {
    double s = 0.0;
    for (const auto& o : run_batches(net, data, cfg, seed, batch_size)) s += o.loss_sum;
    return s / static_cast<double>(data.size());
}

}  // namespace laplab
