#ifndef LAPLAB_EXPERIMENTS_HPP
#define LAPLAB_EXPERIMENTS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "laplab/diagnostics.hpp"
#include "laplab/perturb.hpp"
#include "laplab/trainer.hpp"

namespace laplab {

// The catastrophic-overfitting pipeline: one V-FGSM training run per seed,
// checkpoints around the collapse, then the pruning, spectrum and landscape
// probes on those checkpoints.
struct CoFixture {
    SyntheticOptions data;
    std::size_t n_train = 2000;
    std::size_t n_test = 500;
    double epsilon = 64.0 / 255.0;
    TrainConfig train;
    double lap_beta = 0.05;
    double lap_gamma = 0.3;
    double prune_rate = 0.15;
    std::size_t probe_examples = 200;  // test examples used by landscapes
    LandscapeOptions landscape;
    double nu_beta = 0.05;  // weight perturbation strength for the retention probe

    // The recorded acceptance fixture.
    static CoFixture standard();
};

struct FixtureData {
    Dataset train;
    Dataset test;
};

// Train and test splits for a seed; both derive from (data.seed, seed).
FixtureData fixture_data(const CoFixture& fx, std::uint64_t seed);

struct CoRun {
    RunHistory history;
    Network final_net;
    std::optional<Network> peak_net;  // best PGD epoch up to the collapse (or the whole run)
    std::size_t peak_epoch = 0;
    std::optional<Network> collapse_net;  // weights at the detection epoch
};

// Trains a desk CNN initialised from `seed` with V-FGSM under `schedule`.
CoRun run_fixture(const CoFixture& fx, const FixtureData& data, const PerturbSchedule& schedule, std::uint64_t seed,
                  const EpochHook& hook = {});

struct PruneOutcome {
    double rate = 0.0;
    ParadoxReport base;
    ParadoxReport largest_front;   // largest weights of ordinals 1-2
    ParadoxReport smallest_front;  // smallest weights of ordinals 1-2
    ParadoxReport largest_back;    // largest weights of ordinals 3-4

    double fgsm_drop_front() const { return base.fgsm_acc - largest_front.fgsm_acc; }
    double fgsm_drop_back() const { return base.fgsm_acc - largest_back.fgsm_acc; }
    double natural_shift_smallest() const { return smallest_front.natural_acc - base.natural_acc; }
    bool pass() const;
};

PruneOutcome prune_experiment(const Network& net, const Dataset& test, double eps, double rate, std::uint64_t seed);

struct SharpeningOutcome {
    std::vector<double> variance_before, variance_after;    // per ordinal
    std::vector<double> sharpness_before, sharpness_after;  // per ordinal
    double variance_ratio(std::size_t ordinal) const;
    double sharpness_ratio(std::size_t ordinal) const;
};

// Spectra of every layer and weight landscapes of every layer for the
// pre-collapse and post-collapse checkpoints. Landscapes use the first
// fx.probe_examples test examples and the same direction seed for both.
SharpeningOutcome sharpening(const CoFixture& fx, const Network& before, const Network& after, const Dataset& test);

// Fraction of examples whose V-FGSM perturbation, computed at w, still raises
// the loss at w + nu: loss(w + nu, x + delta) >= loss(w + nu, x). nu is the
// lap-joint perturbation from the batch gradient at (x + delta, w).
double perturbation_retention(const Network& net, const Dataset& data, double eps, const PerturbSchedule& schedule,
                              std::uint64_t seed);

struct BetaTrial {
    double beta = 0.0;
    bool collapsed = false;
    double final_pgd = 0.0;
};

// Selects the strength with the highest final PGD accuracy among runs that
// did not collapse (smallest beta on ties); nullopt when all collapsed.
std::optional<double> select_beta(std::span<const BetaTrial> trials);

// Summary of a complete co-repro run for one seed.
struct SeedReport {
    std::uint64_t seed = 0;
    CoRun vfgsm;
    CoRun lap;
    std::optional<PruneOutcome> prune;
    std::optional<SharpeningOutcome> sharp;
    double retention = 0.0;
};

SeedReport co_repro_seed(const CoFixture& fx, std::uint64_t seed, bool verbose);

struct Verdict {
    std::string id;
    bool pass = false;
    std::string detail;
};

// Collapse, mitigation, pruning, spectrum, landscape and retention verdicts
// over the given seeds.
std::vector<Verdict> co_repro_verdicts(const CoFixture& fx, std::span<const SeedReport> reports);

std::string seed_report_json(const SeedReport& r);

}  // namespace laplab

#endif  // LAPLAB_EXPERIMENTS_HPP
