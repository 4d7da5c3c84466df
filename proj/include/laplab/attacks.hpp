#ifndef LAPLAB_ATTACKS_HPP
#define LAPLAB_ATTACKS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "laplab/data.hpp"
#include "laplab/network.hpp"
#include "laplab/tensor.hpp"

namespace laplab {

enum class AttackVariant { None, VFgsm, RFgsm, NFgsm, Pgd };

const char* attack_variant_name(AttackVariant v);
std::optional<AttackVariant> parse_attack_variant(const std::string& s);

struct AttackConfig {
    AttackVariant variant = AttackVariant::None;
    double epsilon = 0.0;     // L-infinity budget in pixel units
    double alpha = 0.0;       // step size
    double init_scale = 0.0;  // uniform init on [-init_scale*eps, init_scale*eps]
    std::size_t steps = 0;    // PGD iterations
    std::size_t restarts = 1; // PGD restarts
    bool clamp_input = true;  // keep x + delta inside [0, 1]

    // V: alpha = eps, no init. R: alpha = 1.25 eps, init eps. N: alpha = eps,
    // init 2 eps, no eps-clamp. PGD: alpha = eps / 4, init eps.
    static AttackConfig none() { return {}; }
    static AttackConfig v_fgsm(double eps) { return {AttackVariant::VFgsm, eps, eps, 0.0, 0, 1, true}; }
    static AttackConfig r_fgsm(double eps) { return {AttackVariant::RFgsm, eps, 1.25 * eps, 1.0, 0, 1, true}; }
    static AttackConfig n_fgsm(double eps) { return {AttackVariant::NFgsm, eps, eps, 2.0, 0, 1, true}; }
    static AttackConfig pgd(double eps, std::size_t steps, std::size_t restarts) {
        return {AttackVariant::Pgd, eps, eps / 4.0, 1.0, steps, restarts, true};
    }
    static AttackConfig for_variant(AttackVariant v, double eps);

    bool is_fgsm() const {
        return variant == AttackVariant::VFgsm || variant == AttackVariant::RFgsm || variant == AttackVariant::NFgsm;
    }
    void validate() const;
};

// Uniform noise initialisation eta for the FGSM family (zero for V-FGSM);
// with clamp_input, x + eta is kept inside [0, 1].
Tensor fgsm_init(const Tensor& x, const AttackConfig& cfg, std::uint64_t seed);

// delta = eta + alpha * sign(grad), sign(0) = 0; eps-clamped for V and R
// variants; x + delta clamped into [0, 1] when clamp_input.
Tensor fgsm_step(const Tensor& x, const Tensor& eta, const Tensor& grad_x, const AttackConfig& cfg);

Tensor fgsm(const Network& net, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg,
            std::uint64_t seed);

// Per restart r and example i the initial point is drawn from an independent
// sub-seed of (seed, i, r). The highest-loss restart wins per example, first
// restart on ties.
Tensor pgd(const Network& net, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg, std::uint64_t seed);

// Dispatches on cfg.variant; variant None yields a zero perturbation.
Tensor attack(const Network& net, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg,
              std::uint64_t seed);

// Fraction of examples classified correctly at x + delta. Batches run in
// parallel with seeds derived from (seed, batch index).
double evaluate(const Network& net, const Dataset& data, const AttackConfig& cfg, std::uint64_t seed,
                std::size_t batch_size = 250);

// Mean cross-entropy at x + delta over the dataset.
double mean_loss(const Network& net, const Dataset& data, const AttackConfig& cfg, std::uint64_t seed,
                 std::size_t batch_size = 250);

double sign(double v);

}  // namespace laplab

#endif  // LAPLAB_ATTACKS_HPP
