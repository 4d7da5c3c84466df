#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "laplab/trainer.hpp"
#include "support.hpp"

using namespace laplab;

namespace {

Dataset synth(std::size_t n, std::uint64_t seed) {
    SyntheticOptions o;
    o.n = n;
    o.seed = seed;
    return gen_synthetic(o);
}

MetricsRecord rec(std::size_t epoch, double fgsm, double pgd) {
    MetricsRecord r;
    r.epoch = epoch;
    r.fgsm_acc = fgsm;
    r.pgd_acc = pgd;
    return r;
}

}  // namespace

TEST_CASE("learning-rate schedules") {
    const auto c = LrSchedule::cyclic(0.2, 15, 30);
    CHECK(lr_at(0.0, c) == 0.0);
    CHECK(lr_at(7.5, c) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(lr_at(15.0, c) == 0.2);
    CHECK(lr_at(22.5, c) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(lr_at(30.0, c) == 0.0);
    CHECK(lr_at(45.0, c) == 0.0);
    const auto p = LrSchedule::piecewise(0.1, {100, 150}, 10);
    CHECK(lr_at(0.0, p) == 0.1);
    CHECK(lr_at(99.9, p) == 0.1);
    CHECK(lr_at(100.0, p) == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(lr_at(199.0, p) == doctest::Approx(0.001).epsilon(1e-15));
    CHECK_THROWS_AS(lr_at(-1.0, c), InvalidArgument);
    CHECK_THROWS_AS(LrSchedule::cyclic(0.2, 30, 30).validate(), InvalidArgument);
    CHECK_THROWS_AS(LrSchedule::piecewise(0.1, {150, 100}, 10).validate(), InvalidArgument);
}

TEST_CASE("catastrophic-overfitting detector") {
    const double pgd[] = {.30, .32, .31, .02, .01};
    const double fgsm[] = {.6, .65, .7, .95, .98};
    std::vector<MetricsRecord> h;
    for (std::size_t i = 0; i < 5; ++i) h.push_back(rec(i + 1, fgsm[i], pgd[i]));
    const auto ev = detect_co(h);
    REQUIRE(ev.has_value());
    CHECK(ev->epoch == 4);
    CHECK(ev->peak_pgd_acc == 0.32);

    std::vector<MetricsRecord> rising;
    for (std::size_t i = 0; i < 6; ++i) rising.push_back(rec(i + 1, 0.6, 0.1 + 0.05 * static_cast<double>(i)));
    CHECK_FALSE(detect_co(rising).has_value());

    std::vector<MetricsRecord> both;
    const double f2[] = {.6, .65, .7, .3, .2};
    for (std::size_t i = 0; i < 5; ++i) both.push_back(rec(i + 1, f2[i], pgd[i]));
    CHECK_FALSE(detect_co(both).has_value());
}

TEST_CASE("plain step is FGSM followed by one SGD update") {
    const auto data = synth(32, 1);
    const auto eps = 16.0 / 255.0;
    const auto cfg = AttackConfig::v_fgsm(eps);
    auto a = Network::build(NetSpec::desk_cnn(1, 16, 2), 3);
    auto b = a.clone();
    auto sa = SgdState::zeros(a), sb = SgdState::zeros(b);
    const auto res = train_step(a, data.images, data.labels, cfg, PerturbSchedule::none(4), sa, SgdConfig{}, 0.1, 9);
    CHECK(res.passes == 2);

    const auto delta = fgsm(b, data.images, data.labels, cfg, sub_seed(9, 0));
    NetGraph g(b.spec());
    const double loss = g.forward(b, data.images + delta, data.labels);
    g.backward();
    sgd_update(b, g, sb, SgdConfig{}, 0.1);
    CHECK(res.loss == loss);
    CHECK(weights_bit_identical(a, b));
}

TEST_CASE("zero-strength weight perturbation is the plain step") {
    const auto data = synth(64, 2);
    const auto cfg = AttackConfig::v_fgsm(32.0 / 255.0);
    for (const auto mode : {PerturbMode::AwpOriginal, PerturbMode::LapJoint, PerturbMode::LapSeq}) {
        auto plain = Network::build(NetSpec::desk_cnn(1, 16, 2), 4);
        auto pert = plain.clone();
        auto sp = SgdState::zeros(plain), sq = SgdState::zeros(pert);
        const PerturbSchedule zero(mode, 0.0, 0.3, 4);
        for (std::uint64_t step = 0; step < 5; ++step) {
            train_step(plain, data.images, data.labels, cfg, PerturbSchedule::none(4), sp, SgdConfig{}, 0.05, step);
            train_step(pert, data.images, data.labels, cfg, zero, sq, SgdConfig{}, 0.05, step);
        }
        CHECK(weights_bit_identical(plain, pert));
    }
}

TEST_CASE("pass counts per mode") {
    const auto data = synth(16, 3);
    const auto cfg = AttackConfig::v_fgsm(16.0 / 255.0);
    auto net = Network::build(NetSpec::desk_cnn(1, 16, 2), 5);
    auto st = SgdState::zeros(net);
    auto passes = [&](PerturbMode m) {
        return train_step(net, data.images, data.labels, cfg, PerturbSchedule(m, 0.01, 0.3, 4), st, SgdConfig{}, 0.01,
                          1)
            .passes;
    };
    CHECK(passes(PerturbMode::None) == 2);
    CHECK(passes(PerturbMode::LapJoint) == 2);
    CHECK(passes(PerturbMode::LapRandom) == 2);
    CHECK(passes(PerturbMode::LapInf) == 2);
    CHECK(passes(PerturbMode::LapSeq) == 3);
    CHECK(passes(PerturbMode::AwpOriginal) == 3);
    CHECK(passes(PerturbMode::AwpModified) == 3);
}

TEST_CASE("momentum and weight decay act on the perturbed weights") {
    // Two-class linear model on a single scalar input: logits z = w x + b.
    auto net = Network::build(NetSpec::mlp(1, {}, 2), 0);
    net.layer(1).weight = Tensor({2, 1}, {0.7, -0.4});
    net.layer(1).bias = Tensor({2}, {0.1, -0.2});
    const Tensor x({1, 1}, 1.5);
    const std::vector<int> y{1};
    const double beta = 0.2, lr = 0.3;
    const SgdConfig sgd{0.9, 0.01};
    auto st = SgdState::zeros(net);

    double w[2] = {0.7, -0.4}, b[2] = {0.1, -0.2}, vw[2] = {0, 0}, vb[2] = {0, 0};
    auto grads = [&](const double* ww, double* gw, double* gb) {
        const double z0 = ww[0] * 1.5 + b[0], z1 = ww[1] * 1.5 + b[1];
        const double m = std::max(z0, z1);
        const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
        const double p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
        gb[0] = p0, gb[1] = p1 - 1.0;
        gw[0] = gb[0] * 1.5, gw[1] = gb[1] * 1.5;
    };
    for (int step = 0; step < 2; ++step) {
        train_step(net, x, y, AttackConfig::none(), PerturbSchedule(PerturbMode::LapJoint, beta, 0.3, 1), st, sgd, lr,
                   static_cast<std::uint64_t>(step));
        double gw[2], gb[2];
        grads(w, gw, gb);
        const double gn = std::hypot(gw[0], gw[1]), wn = std::hypot(w[0], w[1]);
        const double wp[2] = {w[0] + beta * gw[0] / gn * wn, w[1] + beta * gw[1] / gn * wn};
        grads(wp, gw, gb);
        for (int k = 0; k < 2; ++k) {
            vw[k] = 0.9 * vw[k] + gw[k] + 0.01 * wp[k];
            vb[k] = 0.9 * vb[k] + gb[k] + 0.01 * b[k];
            w[k] = wp[k] - lr * vw[k];
            b[k] = b[k] - lr * vb[k];
        }
        for (int k = 0; k < 2; ++k) {
            CHECK(net.layer(1).weight[k] == doctest::Approx(w[k]).epsilon(1e-14));
            CHECK(net.layer(1).bias[k] == doctest::Approx(b[k]).epsilon(1e-14));
        }
    }
}

TEST_CASE("training runs are reproducible") {
    const auto tr = synth(120, 6), te = synth(60, 7);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 32;
    cfg.lr = LrSchedule::cyclic(0.05, 1, 2);
    cfg.seed = 3;
    cfg.eval.pgd_steps = 2;
    cfg.eval.final_pgd_steps = 2;
    cfg.eval.final_pgd_restarts = 2;
    const auto attack = AttackConfig::v_fgsm(16.0 / 255.0);
    const PerturbSchedule sched(PerturbMode::LapJoint, 0.03, 0.3, 4);
    auto a = Network::build(NetSpec::desk_cnn(1, 16, 2), 1);
    auto b = a.clone();
    std::size_t hook_calls = 0;
    const auto ha = train(a, tr, te, cfg, attack, sched, [&](const MetricsRecord&, const Network&) { ++hook_calls; });
    const auto hb = train(b, tr, te, cfg, attack, sched);
    CHECK(hook_calls == 2);
    CHECK(weights_bit_identical(a, b));
    REQUIRE(ha.records.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(ha.records[i].train_loss == hb.records[i].train_loss);
        CHECK(ha.records[i].pgd_acc == hb.records[i].pgd_acc);
        CHECK(ha.records[i].lr == hb.records[i].lr);
    }
    CHECK(ha.records[1].lr == 0.0);
    REQUIRE(ha.final_pgd_acc.has_value());
    CHECK(*ha.final_pgd_acc == *hb.final_pgd_acc);

    const auto text = metrics_jsonl(ha);
    const auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
    for (const char* key : {"epoch", "lr", "train_loss", "nat_acc", "fgsm_acc", "pgd_acc", "wall_s"})
        CHECK(first.contains(key));
    CHECK_FALSE(first.contains("pgd50_10_acc"));
    const auto last = nlohmann::json::parse(text.substr(text.find('\n') + 1));
    CHECK(last["pgd50_10_acc"].get<double>() == *ha.final_pgd_acc);

    cfg.epochs = 0;
    CHECK_THROWS_AS(train(a, tr, te, cfg, attack, sched), InvalidArgument);
}

TEST_CASE("desk CNN learns noisy bars-vs-checkers with standard training") {
    SyntheticOptions o;
    o.noise_std = 0.5;
    o.n = 2000;
    o.seed = 31;
    const auto tr = gen_synthetic(o);
    o.n = 500;
    o.seed = 32;
    const auto te = gen_synthetic(o);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.lr = LrSchedule::cyclic(0.05, 5, 10);
    cfg.seed = 1;
    cfg.eval.pgd_steps = 1;
    cfg.eval.final_eval = false;
    auto net = Network::build(NetSpec::desk_cnn(1, 16, 2), 1);
    const auto h = train(net, tr, te, cfg, AttackConfig::none(), PerturbSchedule::none(4));
    MESSAGE("natural test accuracy after 10 epochs: " << h.records.back().natural_acc);
    CHECK(h.records.back().natural_acc >= 0.9);
}
