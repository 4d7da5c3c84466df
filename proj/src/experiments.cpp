#include "laplab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "laplab/error.hpp"
#include "laplab/random.hpp"

namespace laplab {

CoFixture CoFixture::standard() {
    CoFixture fx;
    fx.data.kind = SyntheticKind::BarsVsCheckers;
    fx.data.size = 16;
    fx.data.noise_std = 0.3;
    fx.data.seed = 7;
    fx.epsilon = 64.0 / 255.0;
    fx.train.epochs = 30;
    fx.train.batch_size = 128;
    fx.train.lr = LrSchedule::cyclic(0.2, 15, 30);
    fx.train.augment = true;
    fx.train.eval.final_eval = false;
    fx.landscape.half_width = 1.0;
    fx.landscape.resolution = 21;
    fx.landscape.seed = 11;
    return fx;
}

FixtureData fixture_data(const CoFixture& fx, std::uint64_t seed) {
    SyntheticOptions o = fx.data;
    o.n = fx.n_train;
    o.seed = sub_seed(fx.data.seed, seed, 1);
    FixtureData d{gen_synthetic(o), {}};
    o.n = fx.n_test;
    o.seed = sub_seed(fx.data.seed, seed, 2);
    d.test = gen_synthetic(o);
    return d;
}

CoRun run_fixture(const CoFixture& fx, const FixtureData& data, const PerturbSchedule& schedule, std::uint64_t seed,
                  const EpochHook& hook) {
    const auto shape = data.train.image_shape();
    Network net = Network::build(NetSpec::desk_cnn(shape[0], shape[1], data.train.num_classes), seed);
    TrainConfig cfg = fx.train;
    cfg.seed = seed;

    std::optional<Network> peak, collapse;
    std::size_t peak_epoch = 0;
    double peak_pgd = -1.0;
    std::vector<MetricsRecord> seen;
    auto track = [&](const MetricsRecord& r, const Network& n) {
        seen.push_back(r);
        if (!collapse) {
            if (r.pgd_acc > peak_pgd) {
                peak_pgd = r.pgd_acc;
                peak.emplace(n.clone());
                peak_epoch = r.epoch;
            }
            if (detect_co(seen)) collapse.emplace(n.clone());
        }
        if (hook) hook(r, n);
    };
    RunHistory h = train(net, data.train, data.test, cfg, AttackConfig::v_fgsm(fx.epsilon), schedule, track);
    return CoRun{std::move(h), std::move(net), std::move(peak), peak_epoch, std::move(collapse)};
}

bool PruneOutcome::pass() const {
    return fgsm_drop_front() >= 0.10 && largest_front.pgd_acc >= base.pgd_acc &&
           std::abs(natural_shift_smallest()) < 0.05 && fgsm_drop_back() < fgsm_drop_front();
}

PruneOutcome prune_experiment(const Network& net, const Dataset& test, double eps, double rate, std::uint64_t seed) {
    const ParadoxOptions po{10, 1, seed};
    const std::size_t L = net.depth();
    PruneOutcome out;
    out.rate = rate;
    out.base = paradox_report(net, test, eps, po);
    out.largest_front = paradox_report(prune(net, {1, 2, PruneSelection::Largest, rate, seed}), test, eps, po);
    out.smallest_front = paradox_report(prune(net, {1, 2, PruneSelection::Smallest, rate, seed}), test, eps, po);
    out.largest_back = paradox_report(prune(net, {3, L, PruneSelection::Largest, rate, seed}), test, eps, po);
    return out;
}

double SharpeningOutcome::variance_ratio(std::size_t ordinal) const {
    return variance_after.at(ordinal - 1) / variance_before.at(ordinal - 1);
}

double SharpeningOutcome::sharpness_ratio(std::size_t ordinal) const {
    return sharpness_after.at(ordinal - 1) / sharpness_before.at(ordinal - 1);
}

SharpeningOutcome sharpening(const CoFixture& fx, const Network& before, const Network& after, const Dataset& test) {
    std::vector<std::size_t> idx(std::min(fx.probe_examples, test.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const Tensor x = test.gather_images(idx);
    const auto y = test.gather_labels(idx);
    SharpeningOutcome out;
    for (std::size_t l = 1; l <= before.depth(); ++l) {
        out.variance_before.push_back(singular_spectrum(before, l).variance);
        out.variance_after.push_back(singular_spectrum(after, l).variance);
        out.sharpness_before.push_back(landscape_layer(before, x, y, l, fx.landscape).sharpness());
        out.sharpness_after.push_back(landscape_layer(after, x, y, l, fx.landscape).sharpness());
    }
    return out;
}

double perturbation_retention(const Network& net, const Dataset& data, double eps, const PerturbSchedule& schedule,
                              std::uint64_t seed) {
    constexpr std::size_t kBatch = 250;
    NetGraph g(net.spec());
    std::size_t kept = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0, b = 0; start < data.size(); start += kBatch, ++b) {
        idx.clear();
        for (std::size_t i = start; i < std::min(data.size(), start + kBatch); ++i) idx.push_back(i);
        const Tensor x = data.gather_images(idx);
        const auto y = data.gather_labels(idx);
        const Tensor xa = x + attack(net, x, y, AttackConfig::v_fgsm(eps), sub_seed(seed, b));

        g.forward(net, xa, y);
        g.backward();
        WeightDelta nu = compute_nu(WeightDelta::weight_grads_of(g, net), net, schedule, sub_seed(seed, b, 1));
        Network p = net.clone();
        apply(p, nu);

        g.forward(p, xa, y);
        const std::vector<double> adv = g.losses();
        g.forward(p, x, y);
        const auto& clean = g.losses();
        for (std::size_t i = 0; i < y.size(); ++i) kept += adv[i] >= clean[i] ? 1 : 0;
    }
    return static_cast<double>(kept) / static_cast<double>(data.size());
}

std::optional<double> select_beta(std::span<const BetaTrial> trials) {
    std::optional<BetaTrial> best;
    for (const auto& t : trials) {
        if (t.collapsed) continue;
        if (!best || t.final_pgd > best->final_pgd || (t.final_pgd == best->final_pgd && t.beta < best->beta)) best = t;
    }
    if (!best) return std::nullopt;
    return best->beta;
}

namespace {

double final_pgd(const CoRun& r) { return r.history.records.empty() ? 0.0 : r.history.records.back().pgd_acc; }

EpochHook printer(bool verbose, const char* tag, std::uint64_t seed) {
    if (!verbose) return {};
    return [tag, seed](const MetricsRecord& r, const Network&) {
        std::fprintf(stderr, "[%s seed %llu] epoch %2zu lr %.3f loss %.4f nat %.3f fgsm %.3f pgd %.3f\n", tag,
                     static_cast<unsigned long long>(seed), r.epoch, r.lr, r.train_loss, r.natural_acc, r.fgsm_acc,
                     r.pgd_acc);
    };
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

}  // namespace

SeedReport co_repro_seed(const CoFixture& fx, std::uint64_t seed, bool verbose) {
    const auto data = fixture_data(fx, seed);
    const std::size_t L = 4;
    SeedReport r{seed, run_fixture(fx, data, PerturbSchedule::none(L), seed, printer(verbose, "V-FGSM", seed)),
                 run_fixture(fx, data, PerturbSchedule(PerturbMode::LapJoint, fx.lap_beta, fx.lap_gamma, L), seed,
                             printer(verbose, "lap-joint", seed)),
                 std::nullopt, std::nullopt, 0.0};
    if (r.vfgsm.collapse_net) {
        r.prune = prune_experiment(*r.vfgsm.collapse_net, data.test, fx.epsilon, fx.prune_rate, seed);
        r.sharp = sharpening(fx, *r.vfgsm.peak_net, *r.vfgsm.collapse_net, data.test);
    }
    r.retention = perturbation_retention(r.lap.final_net, data.test, fx.epsilon,
                                         PerturbSchedule(PerturbMode::LapJoint, fx.nu_beta, fx.lap_gamma, L), seed);
    return r;
}

std::vector<Verdict> co_repro_verdicts(const CoFixture& fx, std::span<const SeedReport> reports) {
    const std::size_t n = reports.size();
    std::vector<Verdict> out;

    std::size_t collapsed = 0;
    std::string per_seed;
    for (const auto& r : reports) {
        const bool c = r.vfgsm.collapse_net.has_value();
        collapsed += c ? 1 : 0;
        per_seed += " seed " + std::to_string(r.seed) + ":";
        if (c) {
            const auto& e = *r.vfgsm.history.co_event;
            const auto& rec = r.vfgsm.history.records.at(e.epoch - 1);
            per_seed += " epoch " + std::to_string(e.epoch) + fmt(" fgsm %.3f pgd %.3f", rec.fgsm_acc, rec.pgd_acc);
        } else {
            per_seed += fmt(" none (final pgd %.3f)", final_pgd(r.vfgsm));
        }
    }
    const std::size_t need = (2 * n + 2) / 3;
    out.push_back({"collapse", n > 0 && collapsed >= need,
                   std::to_string(collapsed) + "/" + std::to_string(n) + " seeds collapsed;" + per_seed});

    bool mit = n > 0;
    std::string md = fmt("beta %.3f;", fx.lap_beta);
    for (const auto& r : reports) {
        const double gain = final_pgd(r.lap) - final_pgd(r.vfgsm);
        const bool c = r.lap.history.co_event.has_value();
        mit = mit && !c && gain >= 0.10;
        md += " seed " + std::to_string(r.seed) + fmt(": pgd %.3f vs %.3f", final_pgd(r.lap), final_pgd(r.vfgsm)) +
              (c ? " collapsed" : "");
    }
    out.push_back({"mitigation", mit, md});

    auto over_collapsed = [&](const char* id, auto&& check) {
        bool ok = collapsed > 0;
        std::string d;
        for (const auto& r : reports) {
            if (!r.prune) continue;
            const auto [pass, text] = check(r);
            ok = ok && pass;
            d += " seed " + std::to_string(r.seed) + ": " + text + ";";
        }
        if (collapsed == 0) d = " no collapsed checkpoint";
        out.push_back({id, ok, d.substr(1)});
    };
    over_collapsed("pruning", [](const SeedReport& r) {
        const auto& p = *r.prune;
        return std::pair{p.pass(), fmt("fgsm drop 1-2 %.3f, 3-4 %.3f", p.fgsm_drop_front(), p.fgsm_drop_back()) +
                                       fmt(", pgd %.3f -> %.3f", p.base.pgd_acc, p.largest_front.pgd_acc) +
                                       fmt(", smallest nat shift %.3f", p.natural_shift_smallest())};
    });
    over_collapsed("spectrum", [](const SeedReport& r) {
        const double v = r.sharp->variance_ratio(1);
        return std::pair{v >= 1.5, fmt("ordinal-1 variance ratio %.3f", v)};
    });
    over_collapsed("landscape", [](const SeedReport& r) {
        const double a = r.sharp->sharpness_ratio(1), b = r.sharp->sharpness_ratio(4);
        return std::pair{a >= 2.0 && b < a, fmt("ratio ordinal 1 %.3f, ordinal 4 %.3f", a, b)};
    });

    bool ret = n > 0;
    std::string rd;
    for (const auto& r : reports) {
        ret = ret && r.retention >= 0.9;
        rd += " seed " + std::to_string(r.seed) + fmt(": %.3f", r.retention);
    }
    out.push_back({"retention", ret, rd.empty() ? rd : rd.substr(1)});
    return out;
}

namespace {

nlohmann::ordered_json run_json(const CoRun& r) {
    nlohmann::ordered_json j;
    j["final_pgd_acc"] = final_pgd(r);
    j["peak_epoch"] = r.peak_epoch;
    if (r.history.co_event) {
        j["co_event"] = {{"epoch", r.history.co_event->epoch}, {"peak_pgd_acc", r.history.co_event->peak_pgd_acc}};
    } else {
        j["co_event"] = nullptr;
    }
    auto& recs = j["epochs"] = nlohmann::ordered_json::array();
    for (const auto& m : r.history.records)
        recs.push_back({{"epoch", m.epoch}, {"nat_acc", m.natural_acc}, {"fgsm_acc", m.fgsm_acc}, {"pgd_acc", m.pgd_acc}});
    return j;
}

nlohmann::ordered_json paradox_json(const ParadoxReport& p) {
    return {{"nat_acc", p.natural_acc}, {"fgsm_acc", p.fgsm_acc}, {"pgd_acc", p.pgd_acc}, {"paradox", p.paradox}};
}

}  // namespace

std::string seed_report_json(const SeedReport& r) {
    nlohmann::ordered_json j;
    j["seed"] = r.seed;
    j["vfgsm"] = run_json(r.vfgsm);
    j["lap_joint"] = run_json(r.lap);
    if (r.prune) {
        j["prune"] = {{"rate", r.prune->rate},
                      {"base", paradox_json(r.prune->base)},
                      {"largest_1_2", paradox_json(r.prune->largest_front)},
                      {"smallest_1_2", paradox_json(r.prune->smallest_front)},
                      {"largest_3_4", paradox_json(r.prune->largest_back)}};
    }
    if (r.sharp) {
        j["spectrum_variance"] = {{"pre", r.sharp->variance_before}, {"post", r.sharp->variance_after}};
        j["landscape_sharpness"] = {{"pre", r.sharp->sharpness_before}, {"post", r.sharp->sharpness_after}};
    }
    j["retention"] = r.retention;
    return j.dump(2);
}

}  // namespace laplab
