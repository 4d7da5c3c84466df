#ifndef LAPLAB_PERTURB_HPP
#define LAPLAB_PERTURB_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "laplab/network.hpp"
#include "laplab/tensor.hpp"

namespace laplab {

enum class PerturbMode { None, LapJoint, LapSeq, LapRandom, LapInf, AwpOriginal, AwpModified };

const char* perturb_mode_name(PerturbMode m);
std::optional<PerturbMode> parse_perturb_mode(const std::string& s);

// beta * (1 - (ln l / ln(L + 1))^gamma) for 1 <= l <= L.
double layer_lambda(std::size_t l, std::size_t L, double beta, double gamma);

// Per-ordinal perturbation strengths. LAP modes use the layer-aware decay;
// AWP modes perturb every layer with the same strength beta.
class PerturbSchedule {
public:
    PerturbSchedule() = default;
    PerturbSchedule(PerturbMode mode, double beta, double gamma, std::size_t depth);

    static PerturbSchedule none(std::size_t depth) { return {PerturbMode::None, 0.0, 1.0, depth}; }

    PerturbMode mode() const { return mode_; }
    double beta() const { return beta_; }
    double gamma() const { return gamma_; }
    std::size_t depth() const { return lambdas_.size(); }
    const std::vector<double>& lambdas() const { return lambdas_; }
    double lambda(std::size_t l) const { return lambdas_.at(l - 1); }

    bool is_lap() const;
    bool is_awp() const { return mode_ == PerturbMode::AwpOriginal || mode_ == PerturbMode::AwpModified; }
    // Whether the perturbation stays in the weights after the update.
    bool accumulates() const { return mode_ != PerturbMode::None && mode_ != PerturbMode::AwpOriginal; }

private:
    PerturbMode mode_ = PerturbMode::None;
    double beta_ = 0.0;
    double gamma_ = 1.0;
    std::vector<double> lambdas_;
};

// One tensor per ordinal, shaped like that layer's weight. Biases are never
// perturbed.
struct WeightDelta {
    std::vector<Tensor> layers;
    // Weights as they were before the last apply(); empty until then.
    std::vector<Tensor> applied_to;

    static WeightDelta zeros_like(const Network& net);
    static WeightDelta weight_grads_of(const NetGraph& g, const Network& net);
    const Tensor& operator[](std::size_t ordinal) const { return layers.at(ordinal - 1); }
    Tensor& operator[](std::size_t ordinal) { return layers.at(ordinal - 1); }
    std::size_t depth() const { return layers.size(); }
};

// Per ordinal l, with layer-wise L2 norms:
//   L2 modes:  nu_l = lambda_l * g_l / ||g_l|| * ||w_l||
//   lap-random: g_l replaced by a standard-normal tensor drawn from `seed`
//   lap-inf:   nu_l = lambda_l * sign(g_l) * ||w_l|| / sqrt(numel(w_l))
// A layer with zero gradient (or zero lambda) gets nu_l = 0.
WeightDelta compute_nu(const WeightDelta& grads, const Network& net, const PerturbSchedule& schedule,
                       std::uint64_t seed = 0);

// Adds nu to the weights. Each entry of nu is first nudged (by at most a few
// ulps) to the increment the addition realizes, and the old weights are kept
// in nu. subtract() puts back the kept value for every entry still sitting at
// w + nu, so apply-then-subtract is bit-exact even where w + nu dropped low
// bits of w (|nu| much larger than |w|). Other entries get w - nu.
void apply(Network& net, WeightDelta& nu);
void subtract(Network& net, const WeightDelta& nu);

}  // namespace laplab

#endif  // LAPLAB_PERTURB_HPP
