// Acceptance suite: one PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <string>

#include "laplab/bounds.hpp"
#include "laplab/experiments.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace laplab;
using laplab::testing::gram_oracle;
using laplab::testing::random_graph_case;
using laplab::testing::random_tensor;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const std::string& id, const Outcome& o, double seconds) {
    std::printf("%s %s %s (%.1f s)\n", id.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds);
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

void run(const std::string& id, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    report(id, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[200];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

Outcome gradients() {
    std::size_t ok = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 1001; seed <= 1050; ++seed) {
        auto c = random_graph_case(seed);
        const auto rep = ad::finite_diff_check(c.graph, c.bindings, 1e-5, 1e-6);
        ok += rep.passed ? 1 : 0;
        worst = std::max(worst, rep.max_rel_error);
    }
    return {ok == 50, fmt("finite differences: %.0f/50 random graphs within 1e-6, worst relative error %.2e", ok, worst)};
}

Outcome lambda_schedule() {
    constexpr double kLambda5 = 0.008054424142054634;  // mpmath, 40 digits
    bool mono = true;
    for (std::size_t L : {2u, 4u, 17u})
        for (std::size_t l = 1; l < L; ++l) mono = mono && layer_lambda(l + 1, L, 0.05, 0.3) < layer_lambda(l, L, 0.05, 0.3);
    const bool first = layer_lambda(1, 17, 0.05, 0.3) == 0.05 && layer_lambda(1, 4, 0.1, 0.3) == 0.1;
    const double l5 = layer_lambda(5, 17, 0.05, 0.3);
    const double err = std::abs(l5 - kLambda5);
    return {first && mono && err <= 1e-9,
            std::string("lambda_1 = beta: ") + (first ? "yes" : "no") + ", strictly decreasing: " + (mono ? "yes" : "no") +
                fmt(", lambda_5(L=17) = %.16f (|diff| %.1e)", l5, err)};
}

Outcome svd_oracle() {
    Rng rng(77);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        Matrix m(1 + rng.below(32), 1 + rng.below(32));
        for (auto& v : m.data) v = rng.normal();
        const auto got = singular_values(m);
        const auto want = gram_oracle(m);
        if (got.size() != want.size()) return {false, "spectrum length mismatch"};
        for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]) / want[i]);
    }
    return {worst <= 1e-8, fmt("100 random matrices, worst relative deviation %.2e", worst)};
}

Outcome bound_arithmetic() {
    constexpr double kComplexity = 0.5454779149787250;  // mpmath, 40 digits
    const auto r = lap_bound(0.0, 0.0, PerturbSchedule(PerturbMode::AwpOriginal, 0.5, 1.0, 4), 1000, 0.05);
    double kl_err = 0.0;
    for (double lam : {0.01, 0.2, 0.5, 1.0})
        for (std::size_t L : {1u, 4u, 17u}) {
            const double want = static_cast<double>(L) / (2.0 * lam * lam);
            kl_err = std::max(kl_err, std::abs(kl_proxy(PerturbSchedule(PerturbMode::AwpOriginal, lam, 1.0, L)) - want) / want);
        }
    const double err = std::abs(r.complexity_term - kComplexity);
    return {err <= 1e-6 && kl_err <= 1e-12,
            fmt("complexity %.10f (|diff| %.1e), constant-lambda kl relative error %.1e", r.complexity_term, err, kl_err)};
}

Outcome awp_identities() {
    SyntheticOptions o;
    o.n = 64;
    o.seed = 5;
    const auto data = gen_synthetic(o);
    auto plain = Network::build(NetSpec::desk_cnn(1, 16, 2), 8);
    auto awp = plain.clone();
    auto sp = SgdState::zeros(plain), sa = SgdState::zeros(awp);
    const auto cfg = AttackConfig::v_fgsm(8.0 / 255.0);
    for (std::uint64_t step = 0; step < 5; ++step) {
        train_step(plain, data.images, data.labels, cfg, PerturbSchedule::none(4), sp, SgdConfig{}, 0.1, step);
        train_step(awp, data.images, data.labels, cfg, PerturbSchedule(PerturbMode::AwpOriginal, 0.0, 0.3, 4), sa,
                   SgdConfig{}, 0.1, step);
    }
    const bool same = weights_bit_identical(plain, awp);

    bool restored = true;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        WeightDelta g = WeightDelta::zeros_like(plain);
        Rng rng(seed);
        for (auto& t : g.layers)
            for (auto& v : t.data()) v = rng.normal();
        auto nu = compute_nu(g, plain, PerturbSchedule(PerturbMode::AwpOriginal, 0.05, 0.3, 4));
        auto moved = plain.clone();
        apply(moved, nu);
        subtract(moved, nu);
        restored = restored && weights_bit_identical(moved, plain);
    }
    return {same && restored, std::string("beta=0 awp-original over 5 steps bit-identical: ") + (same ? "yes" : "no") +
                                  ", apply/subtract restores weights on 20 draws: " + (restored ? "yes" : "no")};
}

Outcome persistence() {
    const auto dir = laplab::testing::scratch_dir("acceptance_ckpt");
    const auto spec = NetSpec::desk_cnn(1, 16, 2);
    const auto net = Network::build(spec, 12);
    save_checkpoint(net, dir / "a.lapc");
    const auto back = load_checkpoint(dir / "a.lapc", spec);
    Rng rng(3);
    std::size_t same = 0;
    for (int i = 0; i < 100; ++i) {
        const Tensor x = random_tensor({1, 1, 16, 16}, rng, 0.0, 1.0);
        same += bit_identical(net.logits(x), back.logits(x)) ? 1 : 0;
    }

    std::ifstream in(dir / "a.lapc", std::ios::binary);
    const std::string good{std::istreambuf_iterator<char>(in), {}};
    auto code_of = [&](const std::string& bytes, const NetSpec& s) -> int {
        {
            std::ofstream out(dir / "b.lapc", std::ios::binary);
            out << bytes;
        }
        try {
            load_checkpoint(bytes.empty() ? dir / "missing.lapc" : dir / "b.lapc", s);
        } catch (const CheckpointError& e) {
            return static_cast<int>(e.code());
        }
        return -1;
    };
    std::string magic = good, version = good;
    magic[0] = 'X';
    version[4] = 2;
    using Code = CheckpointError::Code;
    const std::map<int, int> got{{static_cast<int>(Code::Io), code_of("", spec)},
                                 {static_cast<int>(Code::BadMagic), code_of(magic, spec)},
                                 {static_cast<int>(Code::VersionMismatch), code_of(version, spec)},
                                 {static_cast<int>(Code::Truncated), code_of(good.substr(0, good.size() - 5), spec)},
                                 {static_cast<int>(Code::Mismatch), code_of(good, NetSpec::desk_cnn(1, 16, 3))}};
    bool distinct = true;
    for (const auto& [want, have] : got) distinct = distinct && want == have;
    return {same == 100 && distinct,
            fmt("%.0f/100 inputs bit-identical after round trip", same) +
                (distinct ? ", five malformed files give five distinct errors" : ", malformed-file errors wrong")};
}

}  // namespace

int main() {
    run("AC-1", gradients);
    run("AC-2", lambda_schedule);

    const CoFixture fx = CoFixture::standard();
    std::vector<SeedReport> reports;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto s0 = std::chrono::steady_clock::now();
        reports.push_back(co_repro_seed(fx, seed, false));
        std::printf("   seed %llu pipeline finished in %.1f s\n", static_cast<unsigned long long>(seed),
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count());
        std::fflush(stdout);
    }
    const double pipeline = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::map<std::string, Outcome> verdicts;
    for (const auto& v : co_repro_verdicts(fx, reports)) verdicts[v.id] = {v.pass, v.detail};
    const std::string eps = fmt("eps %.0f/255: ", fx.epsilon * 255.0);
    report("AC-3", {verdicts["collapse"].pass, eps + verdicts["collapse"].detail}, pipeline);
    report("AC-4", verdicts["mitigation"], 0.0);
    report("AC-5", verdicts["pruning"], 0.0);
    report("AC-6", verdicts["spectrum"], 0.0);
    report("AC-7", verdicts["landscape"], 0.0);

    run("AC-8", svd_oracle);
    run("AC-9", bound_arithmetic);
    run("AC-10", awp_identities);
    run("AC-11", persistence);
    report("AC-12", verdicts["retention"], 0.0);

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
