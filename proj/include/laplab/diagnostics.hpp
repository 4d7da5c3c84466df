#ifndef LAPLAB_DIAGNOSTICS_HPP
#define LAPLAB_DIAGNOSTICS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "laplab/attacks.hpp"
#include "laplab/data.hpp"
#include "laplab/network.hpp"
#include "laplab/svd.hpp"

namespace laplab {

// ---- loss landscapes ----------------------------------------------------------

// values(i, j) holds the change in mean batch loss at offset (a[i], b[j])
// along two random directions. subject_ordinal is 0 for input-space grids.
struct LandscapeGrid {
    std::size_t subject_ordinal = 0;
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> values;  // row-major, a.size() x b.size()
    std::uint64_t direction_seed = 0;

    double at(std::size_t i, std::size_t j) const { return values[i * b.size() + j]; }
    // Mean |delta loss| over the grid.
    double sharpness() const;
    // CSV with header "a,b,delta_loss".
    std::string to_csv() const;
};

struct LandscapeOptions {
    double half_width = 1.0;
    std::size_t resolution = 21;  // odd, >= 3
    std::uint64_t seed = 0;
    LossKind loss = LossKind::CrossEntropy;
};

// Input-space grid: x + a d1 + b d2 with d1, d2 independent unit-L2-norm
// Gaussian directions over the whole batch tensor.
LandscapeGrid landscape_input(const Network& net, const Tensor& x, std::span<const int> labels,
                              const LandscapeOptions& opt);

// Weight-space grid for layer `ordinal`: directions rescaled to ||w_l|| so an
// axis offset of 1.0 is a 100% relative change. Other layers are untouched; the
// probe runs on a copy.
LandscapeGrid landscape_layer(const Network& net, const Tensor& x, std::span<const int> labels, std::size_t ordinal,
                              const LandscapeOptions& opt);

// ---- singular spectra -----------------------------------------------------------

struct SpectrumReport {
    std::size_t ordinal = 0;
    std::vector<double> singular_values;  // descending
    double variance = 0.0;                // population variance of the values
};

// Weight matrix of a layer: conv kernels (O, C, kH, kW) as (O, C*kH*kW),
// dense weights as-is.
Matrix layer_matrix(const Network& net, std::size_t ordinal);
SpectrumReport singular_spectrum(const Network& net, std::size_t ordinal);
// CSV with header "ordinal,rank,sigma" (rank starts at 1).
std::string spectra_csv(std::span<const SpectrumReport> reports);

// ---- weight removal -------------------------------------------------------------

enum class PruneSelection { Random, Smallest, Largest };

std::optional<PruneSelection> parse_prune_selection(const std::string& s);
const char* prune_selection_name(PruneSelection s);

struct PruneSpec {
    std::size_t lo = 1;
    std::size_t hi = 1;
    PruneSelection selection = PruneSelection::Largest;
    double rate = 0.0;
    std::uint64_t seed = 0;

    void validate(std::size_t depth) const;
};

// Zeroes round(rate * count) weights across ordinals [lo, hi] (biases kept) in a
// copy of `net`. Magnitude ties resolve by flat index across the range.
Network prune(const Network& net, const PruneSpec& spec);

// ---- paradox ----------------------------------------------------------------------

struct ParadoxReport {
    double natural_acc = 0.0;
    double fgsm_acc = 0.0;
    double pgd_acc = 0.0;
    bool paradox = false;  // fgsm >= 0.5 and pgd <= 0.05
};

struct ParadoxOptions {
    std::size_t pgd_steps = 10;
    std::size_t pgd_restarts = 1;
    std::uint64_t seed = 0;
};

ParadoxReport paradox_report(const Network& net, const Dataset& data, double eps, const ParadoxOptions& opt = {});

}  // namespace laplab

#endif  // LAPLAB_DIAGNOSTICS_HPP
