#include "laplab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "laplab/random.hpp"

namespace laplab {

// ---- landscapes ---------------------------------------------------------------------

double LandscapeGrid::sharpness() const {
    if (values.empty()) return 0.0;
    double s = 0.0;
    for (double v : values) s += std::abs(v);
    return s / static_cast<double>(values.size());
}

std::string LandscapeGrid::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "a,b,delta_loss\n";
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) os << a[i] << ',' << b[j] << ',' << at(i, j) << '\n';
    return os.str();
}

namespace {

std::vector<double> axis(double half_width, std::size_t resolution) {
    if (resolution < 3 || resolution % 2 == 0) throw InvalidArgument("landscape resolution must be odd and >= 3");
    if (!(half_width >= 0.0)) throw InvalidArgument("landscape half_width must be >= 0");
    std::vector<double> out(resolution);
    const double span = static_cast<double>(resolution - 1);
    for (std::size_t i = 0; i < resolution; ++i)
        out[i] = half_width * (2.0 * static_cast<double>(i) - span) / span;  // exactly 0 at the centre
    return out;
}

Tensor random_direction(const Shape& shape, Rng& rng, double norm) {
    Tensor d(shape);
    for (auto& v : d.data()) v = rng.normal();
    const double n = d.norm2();
    if (n > 0.0) d *= norm / n;
    return d;
}

}  // namespace

LandscapeGrid landscape_input(const Network& net, const Tensor& x, std::span<const int> labels,
                              const LandscapeOptions& opt) {
    LandscapeGrid grid;
    grid.a = axis(opt.half_width, opt.resolution);
    grid.b = grid.a;
    grid.direction_seed = opt.seed;
    Rng rng(sub_seed(opt.seed, 0));
    const Tensor d1 = random_direction(x.shape(), rng, 1.0);
    const Tensor d2 = random_direction(x.shape(), rng, 1.0);

    NetGraph g(net.spec(), opt.loss);
    const double base = g.forward(net, x, labels);
    grid.values.assign(opt.resolution * opt.resolution, 0.0);
    Tensor probe(x.shape());
    for (std::size_t i = 0; i < grid.a.size(); ++i)
        for (std::size_t j = 0; j < grid.b.size(); ++j) {
            for (std::size_t k = 0; k < x.numel(); ++k) probe[k] = x[k] + grid.a[i] * d1[k] + grid.b[j] * d2[k];
            grid.values[i * grid.b.size() + j] = g.forward(net, probe, labels) - base;
        }
    return grid;
}

LandscapeGrid landscape_layer(const Network& net, const Tensor& x, std::span<const int> labels, std::size_t ordinal,
                              const LandscapeOptions& opt) {
    const Tensor& w = net.layer(ordinal).weight;  // range check
    LandscapeGrid grid;
    grid.subject_ordinal = ordinal;
    grid.a = axis(opt.half_width, opt.resolution);
    grid.b = grid.a;
    grid.direction_seed = opt.seed;
    Rng rng(sub_seed(opt.seed, ordinal));
    const double wn = w.norm2();
    const Tensor d1 = random_direction(w.shape(), rng, wn);
    const Tensor d2 = random_direction(w.shape(), rng, wn);

    Network probe = net.clone();
    NetGraph g(net.spec(), opt.loss);
    const double base = g.forward(net, x, labels);
    grid.values.assign(opt.resolution * opt.resolution, 0.0);
    Tensor& pw = probe.layer(ordinal).weight;
    for (std::size_t i = 0; i < grid.a.size(); ++i)
        for (std::size_t j = 0; j < grid.b.size(); ++j) {
            for (std::size_t k = 0; k < w.numel(); ++k) pw[k] = w[k] + grid.a[i] * d1[k] + grid.b[j] * d2[k];
            grid.values[i * grid.b.size() + j] = g.forward(probe, x, labels) - base;
        }
    return grid;
}

// ---- spectra ----------------------------------------------------------------------------

Matrix layer_matrix(const Network& net, std::size_t ordinal) {
    const Tensor& w = net.layer(ordinal).weight;
    const std::size_t rows = w.dim(0);
    Matrix m(rows, w.numel() / rows);
    std::copy(w.data().begin(), w.data().end(), m.data.begin());
    return m;
}

SpectrumReport singular_spectrum(const Network& net, std::size_t ordinal) {
    SpectrumReport r;
    r.ordinal = ordinal;
    r.singular_values = singular_values(layer_matrix(net, ordinal));
    const double n = static_cast<double>(r.singular_values.size());
    const double mean = std::accumulate(r.singular_values.begin(), r.singular_values.end(), 0.0) / n;
    double var = 0.0;
    for (double s : r.singular_values) var += (s - mean) * (s - mean);
    r.variance = var / n;
    return r;
}

std::string spectra_csv(std::span<const SpectrumReport> reports) {
    std::ostringstream os;
    os.precision(17);
    os << "ordinal,rank,sigma\n";
    for (const auto& r : reports)
        for (std::size_t i = 0; i < r.singular_values.size(); ++i)
            os << r.ordinal << ',' << i + 1 << ',' << r.singular_values[i] << '\n';
    return os.str();
}

// ---- pruning --------------------------------------------------------------------------------

std::optional<PruneSelection> parse_prune_selection(const std::string& s) {
    if (s == "random") return PruneSelection::Random;
    if (s == "smallest") return PruneSelection::Smallest;
    if (s == "largest") return PruneSelection::Largest;
    return std::nullopt;
}

const char* prune_selection_name(PruneSelection s) {
    switch (s) {
        case PruneSelection::Random: return "random";
        case PruneSelection::Smallest: return "smallest";
        case PruneSelection::Largest: return "largest";
    }
    return "?";
}

void PruneSpec::validate(std::size_t depth) const {
    if (lo < 1 || lo > hi || hi > depth)
        throw InvalidArgument("prune ordinal range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                              "] invalid for depth " + std::to_string(depth));
    if (!(rate >= 0.0 && rate <= 1.0)) throw InvalidArgument("prune rate must be in [0, 1]");
}

Network prune(const Network& net, const PruneSpec& spec) {
    spec.validate(net.depth());
    Network out = net.clone();
    std::vector<double*> slots;
    for (std::size_t l = spec.lo; l <= spec.hi; ++l)
        for (auto& v : out.layer(l).weight.data()) slots.push_back(&v);
    const auto count = static_cast<std::size_t>(std::llround(spec.rate * static_cast<double>(slots.size())));
    if (count == 0) return out;

    std::vector<std::size_t> order(slots.size());
    std::iota(order.begin(), order.end(), 0);
    switch (spec.selection) {
        case PruneSelection::Random: {
            Rng rng(spec.seed);
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
            break;
        }
        case PruneSelection::Smallest:
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return std::abs(*slots[a]) < std::abs(*slots[b]); });
            break;
        case PruneSelection::Largest:
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return std::abs(*slots[a]) > std::abs(*slots[b]); });
            break;
    }
    for (std::size_t i = 0; i < count; ++i) *slots[order[i]] = 0.0;
    return out;
}

// ---- paradox ------------------------------------------------------------------------------------

ParadoxReport paradox_report(const Network& net, const Dataset& data, double eps, const ParadoxOptions& opt) {
    ParadoxReport r;
    r.natural_acc = evaluate(net, data, AttackConfig::none(), opt.seed);
    r.fgsm_acc = evaluate(net, data, AttackConfig::v_fgsm(eps), opt.seed);
    r.pgd_acc = evaluate(net, data, AttackConfig::pgd(eps, opt.pgd_steps, opt.pgd_restarts), opt.seed);
    r.paradox = r.fgsm_acc >= 0.5 && r.pgd_acc <= 0.05;
    return r;
}

}  // namespace laplab
