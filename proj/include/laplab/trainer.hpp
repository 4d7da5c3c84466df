#ifndef LAPLAB_TRAINER_HPP
#define LAPLAB_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "laplab/attacks.hpp"
#include "laplab/data.hpp"
#include "laplab/network.hpp"
#include "laplab/perturb.hpp"

namespace laplab {

struct LrSchedule {
    enum class Kind { Cyclic, Piecewise };
    Kind kind = Kind::Cyclic;
    // cyclic: triangular 0 -> max_lr at peak_epoch -> 0 at total_epochs
    double max_lr = 0.2;
    double peak_epoch = 15.0;
    double total_epochs = 30.0;
    // piecewise: initial_lr divided by `decay` at each passed milestone
    double initial_lr = 0.1;
    std::vector<double> milestones;
    double decay = 10.0;

    static LrSchedule cyclic(double max_lr, double peak_epoch, double total_epochs) {
        LrSchedule s;
        s.kind = Kind::Cyclic;
        s.max_lr = max_lr;
        s.peak_epoch = peak_epoch;
        s.total_epochs = total_epochs;
        return s;
    }
    static LrSchedule piecewise(double initial_lr, std::vector<double> milestones, double decay) {
        LrSchedule s;
        s.kind = Kind::Piecewise;
        s.initial_lr = initial_lr;
        s.milestones = std::move(milestones);
        s.decay = decay;
        return s;
    }
    void validate() const;
};

// Learning rate at fractional epoch t >= 0; past the horizon it holds the
// final value.
double lr_at(double t, const LrSchedule& schedule);

struct SgdConfig {
    double momentum = 0.9;
    double weight_decay = 5e-4;
};

// Momentum buffers for every weight and bias.
struct SgdState {
    std::vector<Tensor> weight_velocity;
    std::vector<Tensor> bias_velocity;
    static SgdState zeros(const Network& net);
};

// v <- momentum * v + (grad + weight_decay * w); w <- w - lr * v.
void sgd_update(Network& net, const NetGraph& grads, SgdState& state, const SgdConfig& cfg, double lr);

struct StepResult {
    double loss = 0.0;          // loss of the update pass
    std::size_t passes = 0;     // forward/backward passes performed
};

// One training step on (x, labels) following the schedule's mode:
//   none          attack at w, update at (x+delta, w)
//   lap-joint/random/inf  one pass at (x+eta, w) yields the input step and nu;
//                 update from (x+delta, w+nu); nu is kept
//   lap-seq       delta at w, nu from a pass at (x+delta, w), update from
//                 (x+delta, w+nu); nu is kept
//   awp-original  as lap-seq but nu is removed after the update
//   awp-modified  as lap-seq with uniform strengths
StepResult train_step(Network& net, const Tensor& x, std::span<const int> labels, const AttackConfig& attack_cfg,
                      const PerturbSchedule& schedule, SgdState& opt, const SgdConfig& sgd, double lr,
                      std::uint64_t seed);

struct EvalProtocol {
    std::size_t pgd_steps = 10;
    std::size_t pgd_restarts = 1;
    std::size_t final_pgd_steps = 50;
    std::size_t final_pgd_restarts = 10;
    bool final_eval = true;
    // Evaluation budget; defaults to the training attack's epsilon.
    std::optional<double> epsilon;
};

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 128;
    LrSchedule lr = LrSchedule::cyclic(0.2, 15, 30);
    SgdConfig sgd;
    std::uint64_t seed = 0;
    bool augment = true;
    EvalProtocol eval;

    void validate() const;
};

struct MetricsRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double natural_acc = 0.0;
    double fgsm_acc = 0.0;
    double pgd_acc = 0.0;
    double epoch_wall_seconds = 0.0;
};

struct CoEvent {
    std::size_t epoch = 0;
    double peak_pgd_acc = 0.0;
};

struct RunHistory {
    std::vector<MetricsRecord> records;
    std::optional<CoEvent> co_event;
    std::optional<double> final_pgd_acc;  // PGD-50-10 on the test split
    std::string checkpoint;               // path of the final checkpoint, when saved
};

// First epoch e with pgd(e) < 0.25 * max_{e' <= e} pgd(e'), pgd(e) < 0.05 and
// fgsm(e) >= 0.5.
std::optional<CoEvent> detect_co(std::span<const MetricsRecord> history);

// Called after each epoch's evaluation with the record and current weights.
using EpochHook = std::function<void(const MetricsRecord&, const Network&)>;

// Trains `net` in place. Evaluation attacks use the training epsilon: natural,
// V-FGSM and PGD (eval.pgd_steps, eval.pgd_restarts) after every epoch, then
// PGD (final_pgd_steps, final_pgd_restarts) once at the end.
RunHistory train(Network& net, const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg,
                 const AttackConfig& attack_cfg, const PerturbSchedule& schedule, const EpochHook& hook = {});

// JSON-lines encoding of metrics (keys epoch, lr, train_loss, nat_acc,
// fgsm_acc, pgd_acc, wall_s; the final line adds pgd50_10_acc).
std::string metrics_jsonl(const RunHistory& history);

}  // namespace laplab

#endif  // LAPLAB_TRAINER_HPP
