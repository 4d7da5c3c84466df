#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "config.hpp"
#include "laplab/bounds.hpp"
#include "laplab/error.hpp"
#include "laplab/experiments.hpp"
#include "laplab/parallel.hpp"

namespace fs = std::filesystem;
using namespace laplab;
using namespace laplab::cli;

namespace {

constexpr const char* kVersion = "laplab 0.1.0";

struct Flags {
    std::string config;
    std::string seed;
    std::string out;
    std::string checkpoint;
    bool quiet = false;
};

// Runtime failure after the configuration was accepted; exit code 2.
class RunError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::uint64_t parse_seed(const std::string& s) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || s[0] == '-') throw ConfigError("--seed: expected a non-negative integer, got '" + s + "'");
    return v;
}

// "a..b" (inclusive) or a single seed.
std::vector<std::uint64_t> parse_seed_range(const std::string& s) {
    const auto dots = s.find("..");
    if (dots == std::string::npos) return {parse_seed(s)};
    const auto lo = parse_seed(s.substr(0, dots)), hi = parse_seed(s.substr(dots + 2));
    if (hi < lo) throw ConfigError("--seed: empty range '" + s + "'");
    if (hi - lo >= 1000) throw ConfigError("--seed: range too long");
    std::vector<std::uint64_t> out;
    for (auto v = lo; v <= hi; ++v) out.push_back(v);
    return out;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw RunError("cannot write " + p.string());
    out << text;
    if (!out) throw RunError("write failed for " + p.string());
}

struct Context {
    ExperimentConfig cfg;
    Splits data;
    NetSpec spec;
    std::uint64_t seed = 0;
    fs::path out;
};

Context prepare(const Flags& f, bool need_checkpoint) {
    if (f.config.empty()) throw ConfigError("--config is required");
    if (need_checkpoint && f.checkpoint.empty()) throw ConfigError("--checkpoint is required");
    Context c;
    c.cfg = load_config(f.config);
    c.seed = f.seed.empty() ? c.cfg.train.seed : parse_seed(f.seed);
    c.cfg.train.seed = c.seed;
    c.out = f.out.empty() ? fs::path(c.cfg.out_dir) / c.cfg.run_name : fs::path(f.out);
    try {
        c.data = load_splits(c.cfg.dataset);
        c.spec = model_spec(c.cfg.model, c.data.train);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (c.spec.input_shape.size() == 1) {
        if (c.cfg.train.augment) throw ConfigError("train.augment: needs image-shaped model inputs");
        c.data.train = c.data.train.flattened();
        c.data.test = c.data.test.flattened();
    }
    fs::create_directories(c.out);
    return c;
}

void write_manifest(const Context& c, const std::string& command) {
    Json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["compiler"] = __VERSION__;
    m["threads"] = thread_count();
    m["seed"] = c.seed;
    m["config"] = c.cfg.resolved();
    m["netspec"] = netspec_json(c.spec);
    write_text(c.out / "manifest.json", m.dump(2) + "\n");
}

Network load_net(const Context& c, const Flags& f) { return load_checkpoint(f.checkpoint, c.spec); }

PerturbSchedule schedule_of(const Context& c) {
    return PerturbSchedule(c.cfg.perturb_mode, c.cfg.beta, c.cfg.gamma, c.spec.depth());
}

void emit(const Flags& f, const fs::path& p, const Json& j) {
    write_text(p, j.dump(2) + "\n");
    if (!f.quiet) std::cout << j.dump(2) << "\n";
}

EpochHook epoch_printer(bool quiet) {
    if (quiet) return {};
    return [](const MetricsRecord& r, const Network&) {
        std::fprintf(stderr, "epoch %3zu lr %.4f loss %.4f nat %.3f fgsm %.3f pgd %.3f (%.1fs)\n", r.epoch, r.lr,
                     r.train_loss, r.natural_acc, r.fgsm_acc, r.pgd_acc, r.epoch_wall_seconds);
    };
}

void cmd_train(const Flags& f) {
    Context c = prepare(f, false);
    write_manifest(c, "train");
    Network net = Network::build(c.spec, c.seed);
    const RunHistory h = train(net, c.data.train, c.data.test, c.cfg.train, c.cfg.attack, schedule_of(c), epoch_printer(f.quiet));
    write_text(c.out / "metrics.jsonl", metrics_jsonl(h));
    save_checkpoint(net, c.out / "checkpoint.lapc");
    Json s;
    s["epochs"] = h.records.size();
    s["final_nat_acc"] = h.records.back().natural_acc;
    s["final_pgd_acc"] = h.records.back().pgd_acc;
    if (h.final_pgd_acc) s["pgd50_10_acc"] = *h.final_pgd_acc;
    s["co_event"] = h.co_event ? Json{{"epoch", h.co_event->epoch}, {"peak_pgd_acc", h.co_event->peak_pgd_acc}} : Json();
    s["checkpoint"] = (c.out / "checkpoint.lapc").string();
    emit(f, c.out / "summary.json", s);
}

void cmd_attack_eval(const Flags& f) {
    Context c = prepare(f, true);
    write_manifest(c, "attack-eval");
    const Network net = load_net(c, f);
    Json j;
    j["variant"] = attack_variant_name(c.cfg.attack.variant);
    j["epsilon"] = c.cfg.attack.epsilon;
    j["n"] = c.data.test.size();
    j["natural_accuracy"] = evaluate(net, c.data.test, AttackConfig::none(), c.seed);
    j["accuracy"] = evaluate(net, c.data.test, c.cfg.attack, c.seed);
    emit(f, c.out / "attack.json", j);
}

Dataset probe_subset(const Context& c) {
    std::vector<std::size_t> idx(std::min(c.cfg.probe.examples, c.data.test.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return c.data.test.subset(idx);
}

void cmd_landscape(const Flags& f) {
    Context c = prepare(f, true);
    write_manifest(c, "landscape");
    const Network net = load_net(c, f);
    const Dataset d = probe_subset(c);
    Json j;
    const auto gi = landscape_input(net, d.images, d.labels, c.cfg.probe.landscape);
    write_text(c.out / "landscape_input.csv", gi.to_csv());
    j["input"] = gi.sharpness();
    for (std::size_t l = 1; l <= net.depth(); ++l) {
        const auto g = landscape_layer(net, d.images, d.labels, l, c.cfg.probe.landscape);
        write_text(c.out / ("landscape_layer" + std::to_string(l) + ".csv"), g.to_csv());
        j["layer" + std::to_string(l)] = g.sharpness();
    }
    emit(f, c.out / "landscape.json", Json{{"sharpness", j}});
}

void cmd_svd(const Flags& f) {
    Context c = prepare(f, true);
    write_manifest(c, "svd");
    const Network net = load_net(c, f);
    std::vector<SpectrumReport> reps;
    Json j = Json::array();
    for (std::size_t l = 1; l <= net.depth(); ++l) {
        reps.push_back(singular_spectrum(net, l));
        j.push_back({{"ordinal", l}, {"variance", reps.back().variance}, {"sigma_max", reps.back().singular_values.front()}});
    }
    write_text(c.out / "spectra.csv", spectra_csv(reps));
    emit(f, c.out / "spectra.json", j);
}

Json paradox_json(const ParadoxReport& p) {
    return {{"nat_acc", p.natural_acc}, {"fgsm_acc", p.fgsm_acc}, {"pgd_acc", p.pgd_acc}, {"paradox", p.paradox}};
}

void cmd_prune_eval(const Flags& f) {
    Context c = prepare(f, true);
    const Network net = load_net(c, f);
    PruneSpec ps = c.cfg.probe.prune;
    ps.seed = ps.seed == 0 ? c.seed : ps.seed;
    try {
        ps.validate(net.depth());
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("probe.prune: ") + e.what());
    }
    write_manifest(c, "prune-eval");
    const ParadoxOptions po{c.cfg.train.eval.pgd_steps, c.cfg.train.eval.pgd_restarts, c.seed};
    const double eps = c.cfg.attack.epsilon;
    Json j;
    j["epsilon"] = eps;
    j["prune"] = {{"selection", prune_selection_name(ps.selection)}, {"lo", ps.lo}, {"hi", ps.hi}, {"rate", ps.rate}};
    j["before"] = paradox_json(paradox_report(net, c.data.test, eps, po));
    j["after"] = paradox_json(paradox_report(prune(net, ps), c.data.test, eps, po));
    emit(f, c.out / "prune.json", j);
}

void cmd_bound(const Flags& f) {
    Context c = prepare(f, true);
    if (c.cfg.perturb_mode == PerturbMode::None || c.cfg.beta == 0.0)
        throw ConfigError("perturb: the bound needs a nonzero perturbation strength");
    write_manifest(c, "bound");
    const Network net = load_net(c, f);
    const auto sched = schedule_of(c);
    const Dataset& d = c.data.train;
    const auto& p = c.cfg.probe;
    BoundReport r = lap_bound(dataset_loss(net, d, GapLoss::ZeroOne),
                              measure_worst_gap(net, d, sched, p.bound_tries, c.seed, GapLoss::ZeroOne), sched, d.size(),
                              p.bound_delta);
    r.empirical_ce = dataset_loss(net, d, GapLoss::CrossEntropy);
    r.worst_case_gap_ce = measure_worst_gap(net, d, sched, p.bound_tries, c.seed, GapLoss::CrossEntropy);
    emit(f, c.out / "bound.json", Json::parse(r.to_json()));
}

CoFixture fixture_from(const ExperimentConfig& cfg) {
    if (cfg.dataset.kind != "bars-vs-checkers" && cfg.dataset.kind != "gaussian-blobs")
        throw ConfigError("dataset.kind: co-repro needs a synthetic dataset");
    if (cfg.model.kind != "desk-cnn") throw ConfigError("model.kind: co-repro trains the desk CNN");
    if (cfg.attack.variant != AttackVariant::VFgsm) throw ConfigError("attack.variant: co-repro trains with V-FGSM");
    if (cfg.perturb_mode != PerturbMode::LapJoint) throw ConfigError("perturb.mode: co-repro compares against lap-joint");
    CoFixture fx = CoFixture::standard();
    fx.data = cfg.dataset.synthetic;
    fx.n_train = cfg.dataset.n_train;
    fx.n_test = cfg.dataset.n_test;
    fx.epsilon = cfg.attack.epsilon;
    fx.train = cfg.train;
    fx.lap_beta = cfg.beta;
    fx.lap_gamma = cfg.gamma;
    fx.prune_rate = cfg.probe.prune.rate;
    fx.probe_examples = cfg.probe.examples;
    fx.landscape = cfg.probe.landscape;
    return fx;
}

void write_co_artifacts(const CoFixture& fx, const SeedReport& r, const fs::path& dir) {
    fs::create_directories(dir);
    write_text(dir / "vfgsm_metrics.jsonl", metrics_jsonl(r.vfgsm.history));
    write_text(dir / "lap_metrics.jsonl", metrics_jsonl(r.lap.history));
    write_text(dir / "report.json", seed_report_json(r) + "\n");
    save_checkpoint(r.vfgsm.final_net, dir / "vfgsm_final.lapc");
    save_checkpoint(r.lap.final_net, dir / "lap_final.lapc");
    if (!r.vfgsm.collapse_net) return;
    const Network& pre = *r.vfgsm.peak_net;
    const Network& post = *r.vfgsm.collapse_net;
    save_checkpoint(pre, dir / "pre_co.lapc");
    save_checkpoint(post, dir / "post_co.lapc");
    for (const auto& [name, net] : {std::pair{"pre", &pre}, std::pair{"post", &post}}) {
        std::vector<SpectrumReport> reps;
        for (std::size_t l = 1; l <= net->depth(); ++l) reps.push_back(singular_spectrum(*net, l));
        write_text(dir / (std::string("spectra_") + name + ".csv"), spectra_csv(reps));
    }
    const auto data = fixture_data(fx, r.seed);
    std::vector<std::size_t> idx(std::min(fx.probe_examples, data.test.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const Tensor x = data.test.gather_images(idx);
    const auto y = data.test.gather_labels(idx);
    for (std::size_t l : {std::size_t{1}, pre.depth()}) {
        const std::string s = std::to_string(l);
        write_text(dir / ("landscape_layer" + s + "_pre.csv"), landscape_layer(pre, x, y, l, fx.landscape).to_csv());
        write_text(dir / ("landscape_layer" + s + "_post.csv"), landscape_layer(post, x, y, l, fx.landscape).to_csv());
    }
}

void cmd_co_repro(const Flags& f) {
    CoFixture fx = CoFixture::standard();
    Json resolved;
    if (!f.config.empty()) {
        const auto cfg = load_config(f.config);
        fx = fixture_from(cfg);
        resolved = cfg.resolved();
    }
    const auto seeds = parse_seed_range(f.seed.empty() ? "1..3" : f.seed);
    const fs::path out = f.out.empty() ? fs::path("runs/co-repro") : fs::path(f.out);
    fs::create_directories(out);
    Json m{{"command", "co-repro"}, {"version", kVersion}, {"compiler", __VERSION__}, {"threads", thread_count()},
           {"seeds", seeds}, {"config", resolved.is_null() ? Json("standard fixture") : resolved},
           {"netspec", netspec_json(NetSpec::desk_cnn(1, fx.data.size, 2))}};
    write_text(out / "manifest.json", m.dump(2) + "\n");

    std::vector<SeedReport> reports;
    for (auto s : seeds) {
        reports.push_back(co_repro_seed(fx, s, !f.quiet));
        write_co_artifacts(fx, reports.back(), out / ("seed" + std::to_string(s)));
    }
    Json v = Json::array();
    for (const auto& verdict : co_repro_verdicts(fx, reports)) {
        std::cout << (verdict.pass ? "PASS " : "FAIL ") << verdict.id << ": " << verdict.detail << "\n";
        v.push_back({{"id", verdict.id}, {"pass", verdict.pass}, {"detail", verdict.detail}});
    }
    write_text(out / "verdicts.json", v.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Layer-aware adversarial weight perturbation lab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    Flags flags;
    auto add_common = [&](CLI::App* sub, bool checkpoint) {
        sub->add_option("--config", flags.config, "Experiment config (JSON)");
        sub->add_option("--seed", flags.seed, "Seed (co-repro accepts a range a..b)");
        sub->add_option("--out", flags.out, "Output directory");
        if (checkpoint) sub->add_option("--checkpoint", flags.checkpoint, "Checkpoint to analyse");
        sub->add_flag("--quiet", flags.quiet, "Suppress progress output");
    };
    struct Cmd {
        const char* name;
        const char* help;
        bool checkpoint;
        void (*fn)(const Flags&);
    };
    const Cmd cmds[] = {
        {"train", "Train a network; writes metrics JSONL and a checkpoint", false, cmd_train},
        {"attack-eval", "Accuracy of a checkpoint under the configured attack", true, cmd_attack_eval},
        {"landscape", "Loss landscape grids for the input and every layer", true, cmd_landscape},
        {"svd", "Singular spectra of every layer", true, cmd_svd},
        {"prune-eval", "Accuracy before and after weight removal", true, cmd_prune_eval},
        {"bound", "PAC-Bayes bound quantities", true, cmd_bound},
        {"co-repro", "Catastrophic-overfitting pipeline and verdicts", false, cmd_co_repro},
    };
    for (const auto& c : cmds) add_common(app.add_subcommand(c.name, c.help), c.checkpoint);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    try {
        for (const auto& c : cmds)
            if (app.got_subcommand(c.name)) c.fn(flags);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
