#include "laplab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "laplab/random.hpp"

namespace laplab {

void LrSchedule::validate() const {
    if (kind == Kind::Cyclic) {
        if (!(max_lr >= 0.0)) throw InvalidArgument("cyclic max_lr must be >= 0");
        if (!(peak_epoch > 0.0) || !(total_epochs > peak_epoch))
            throw InvalidArgument("cyclic schedule needs 0 < peak_epoch < total_epochs");
    } else {
        if (!(initial_lr >= 0.0)) throw InvalidArgument("piecewise initial_lr must be >= 0");
        if (!(decay > 0.0)) throw InvalidArgument("piecewise decay must be > 0");
        if (!std::is_sorted(milestones.begin(), milestones.end()))
            throw InvalidArgument("piecewise milestones must be sorted");
    }
}

double lr_at(double t, const LrSchedule& s) {
    if (!(t >= 0.0)) throw InvalidArgument("lr_at: t must be >= 0");
    if (s.kind == LrSchedule::Kind::Cyclic) {
        if (t <= s.peak_epoch) return s.max_lr * t / s.peak_epoch;
        if (t >= s.total_epochs) return 0.0;
        return s.max_lr * (s.total_epochs - t) / (s.total_epochs - s.peak_epoch);
    }
    double lr = s.initial_lr;
    for (double m : s.milestones)
        if (t >= m) lr /= s.decay;
    return lr;
}

SgdState SgdState::zeros(const Network& net) {
    SgdState st;
    for (const auto& l : net.layers()) {
        st.weight_velocity.emplace_back(l.weight.shape(), 0.0);
        st.bias_velocity.emplace_back(l.bias.shape(), 0.0);
    }
    return st;
}

void sgd_update(Network& net, const NetGraph& grads, SgdState& state, const SgdConfig& cfg, double lr) {
    auto step = [&](Tensor& w, const Tensor& g, Tensor& v) {
        for (std::size_t i = 0; i < w.numel(); ++i) {
            v[i] = cfg.momentum * v[i] + (g[i] + cfg.weight_decay * w[i]);
            w[i] -= lr * v[i];
        }
    };
    for (std::size_t l = 1; l <= net.depth(); ++l) {
        auto& p = net.layer(l);
        step(p.weight, grads.weight_grad(l), state.weight_velocity.at(l - 1));
        step(p.bias, grads.bias_grad(l), state.bias_velocity.at(l - 1));
    }
}

StepResult train_step(Network& net, const Tensor& x, std::span<const int> labels, const AttackConfig& attack_cfg,
                      const PerturbSchedule& schedule, SgdState& opt, const SgdConfig& sgd, double lr,
                      std::uint64_t seed) {
    if (schedule.mode() != PerturbMode::None && schedule.depth() != net.depth())
        throw ShapeError("perturbation schedule depth does not match network");
    NetGraph g(net.spec());
    StepResult res;
    const auto input_seed = sub_seed(seed, 0);
    const auto nu_seed = sub_seed(seed, 1);

    // Passes that produce delta through the attacks module.
    auto attack_delta = [&]() -> Tensor {
        switch (attack_cfg.variant) {
            case AttackVariant::None: return Tensor(x.shape(), 0.0);
            case AttackVariant::Pgd: res.passes += attack_cfg.steps * attack_cfg.restarts + (attack_cfg.restarts > 1 ? attack_cfg.restarts : 0); break;
            default: res.passes += 1; break;
        }
        return attack(net, x, labels, attack_cfg, input_seed);
    };

    auto update_at = [&](const Tensor& delta) {
        res.loss = g.forward(net, x + delta, labels);
        g.backward();
        ++res.passes;
        sgd_update(net, g, opt, sgd, lr);
    };

    switch (schedule.mode()) {
        case PerturbMode::None: {
            update_at(attack_delta());
            break;
        }
        case PerturbMode::LapJoint:
        case PerturbMode::LapRandom:
        case PerturbMode::LapInf: {
            Tensor delta(x.shape(), 0.0);
            WeightDelta grads;
            if (attack_cfg.is_fgsm() || attack_cfg.variant == AttackVariant::None) {
                // One backward at (x + eta, w) serves both perturbations.
                const Tensor eta = attack_cfg.is_fgsm() ? fgsm_init(x, attack_cfg, input_seed) : Tensor(x.shape(), 0.0);
                g.forward(net, x + eta, labels);
                g.backward();
                ++res.passes;
                if (attack_cfg.is_fgsm()) delta = fgsm_step(x, eta, g.input_grad(), attack_cfg);
                grads = WeightDelta::weight_grads_of(g, net);
            } else {
                delta = attack_delta();
                g.forward(net, x + delta, labels);
                g.backward();
                ++res.passes;
                grads = WeightDelta::weight_grads_of(g, net);
            }
            WeightDelta nu = compute_nu(grads, net, schedule, nu_seed);
            apply(net, nu);
            update_at(delta);
            break;
        }
        case PerturbMode::LapSeq:
        case PerturbMode::AwpOriginal:
        case PerturbMode::AwpModified: {
            const Tensor delta = attack_delta();
            g.forward(net, x + delta, labels);
            g.backward();
            ++res.passes;
            WeightDelta nu = compute_nu(WeightDelta::weight_grads_of(g, net), net, schedule, nu_seed);
            apply(net, nu);
            update_at(delta);
            if (schedule.mode() == PerturbMode::AwpOriginal) subtract(net, nu);
            break;
        }
    }
    return res;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (!(sgd.momentum >= 0.0 && sgd.momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
    if (!(sgd.weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be >= 0");
    lr.validate();
}

std::optional<CoEvent> detect_co(std::span<const MetricsRecord> history) {
    double peak = 0.0;
    for (const auto& r : history) {
        peak = std::max(peak, r.pgd_acc);
        if (r.pgd_acc < 0.25 * peak && r.pgd_acc < 0.05 && r.fgsm_acc >= 0.5) return CoEvent{r.epoch, peak};
    }
    return std::nullopt;
}

RunHistory train(Network& net, const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg,
                 const AttackConfig& attack_cfg, const PerturbSchedule& schedule, const EpochHook& hook) {
    cfg.validate();
    attack_cfg.validate();
    if (train_set.size() == 0) throw InvalidArgument("training set is empty");
    const double eps = cfg.eval.epsilon.value_or(attack_cfg.epsilon);
    const auto fgsm_eval = AttackConfig::v_fgsm(eps);
    const auto pgd_eval = AttackConfig::pgd(eps, cfg.eval.pgd_steps, cfg.eval.pgd_restarts);

    SgdState opt = SgdState::zeros(net);
    const std::size_t n = train_set.size();
    const std::size_t nb = (n + cfg.batch_size - 1) / cfg.batch_size;
    std::vector<std::size_t> order(n);
    RunHistory hist;
    std::size_t global_step = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(sub_seed(cfg.seed, 101, epoch));
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double loss_sum = 0.0;
        double lr = 0.0;
        for (std::size_t b = 0; b < nb; ++b, ++global_step) {
            const std::size_t lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
            const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
            Tensor x = train_set.gather_images(idx);
            if (cfg.augment && x.rank() == 4) x = augment(x, sub_seed(cfg.seed, 102, global_step));
            const auto y = train_set.gather_labels(idx);
            lr = lr_at(static_cast<double>(epoch - 1) + static_cast<double>(b + 1) / static_cast<double>(nb), cfg.lr);
            const auto res = train_step(net, x, y, attack_cfg, schedule, opt, cfg.sgd, lr, sub_seed(cfg.seed, 103, global_step));
            loss_sum += res.loss * static_cast<double>(hi - lo);
        }

        MetricsRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = loss_sum / static_cast<double>(n);
        const auto eval_seed = sub_seed(cfg.seed, 104, epoch);
        rec.natural_acc = evaluate(net, test_set, AttackConfig::none(), eval_seed);
        rec.fgsm_acc = evaluate(net, test_set, fgsm_eval, eval_seed);
        rec.pgd_acc = evaluate(net, test_set, pgd_eval, eval_seed);
        rec.epoch_wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        hist.records.push_back(rec);
        if (hook) hook(rec, net);
    }
    hist.co_event = detect_co(hist.records);
    if (cfg.eval.final_eval)
        hist.final_pgd_acc = evaluate(net, test_set,
                                      AttackConfig::pgd(eps, cfg.eval.final_pgd_steps, cfg.eval.final_pgd_restarts),
                                      sub_seed(cfg.seed, 105));
    return hist;
}

std::string metrics_jsonl(const RunHistory& history) {
    std::string out;
    for (std::size_t i = 0; i < history.records.size(); ++i) {
        const auto& r = history.records[i];
        nlohmann::ordered_json j;
        j["epoch"] = r.epoch;
        j["lr"] = r.lr;
        j["train_loss"] = r.train_loss;
        j["nat_acc"] = r.natural_acc;
        j["fgsm_acc"] = r.fgsm_acc;
        j["pgd_acc"] = r.pgd_acc;
        j["wall_s"] = r.epoch_wall_seconds;
        if (i + 1 == history.records.size() && history.final_pgd_acc) j["pgd50_10_acc"] = *history.final_pgd_acc;
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace laplab
