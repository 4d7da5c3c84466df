#include "laplab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "laplab/random.hpp"

namespace laplab {

Tensor Dataset::gather_images(std::span<const std::size_t> idx) const {
    const std::size_t per = images.numel() / images.dim(0);
    Shape shape = images.shape();
    shape[0] = idx.size();
    Tensor out(shape);
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * per), per,
                    out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> idx) const {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels.at(idx[i]);
    return out;
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
    if (idx.empty()) throw InvalidArgument("empty subset");
    return {gather_images(idx), gather_labels(idx), num_classes};
}

Dataset Dataset::flattened() const {
    Dataset d = *this;
    d.images = images.reshaped({images.dim(0), images.numel() / images.dim(0)});
    return d;
}

void Dataset::validate() const {
    if (labels.empty()) throw InvalidArgument("dataset is empty");
    if (images.dim(0) != labels.size()) throw InvalidArgument("image and label counts differ");
    for (double v : images.data())
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("pixel value outside [0, 1]");
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= num_classes) throw InvalidArgument("label outside class range");
}

std::optional<SyntheticKind> parse_synthetic_kind(const std::string& s) {
    if (s == "bars-vs-checkers") return SyntheticKind::BarsVsCheckers;
    if (s == "gaussian-blobs") return SyntheticKind::GaussianBlobs;
    return std::nullopt;
}

Dataset gen_synthetic(const SyntheticOptions& opt) {
    if (opt.n < 2) throw InvalidArgument("synthetic dataset needs n >= 2");
    if (opt.size < 8) throw InvalidArgument("synthetic image size must be >= 8");
    if (!(opt.noise_std >= 0.0)) throw InvalidArgument("noise_std must be >= 0");
    if (!(opt.amplitude >= 0.0 && opt.class_offset >= 0.0 && opt.amplitude + 0.5 * opt.class_offset <= 0.5))
        throw InvalidArgument("synthetic amplitude + class_offset / 2 must lie in [0, 0.5]");
    const std::size_t K = opt.kind == SyntheticKind::BarsVsCheckers ? 2 : opt.classes;
    if (K < 2) throw InvalidArgument("synthetic dataset needs at least 2 classes");

    const std::size_t S = opt.size;
    Dataset d;
    d.num_classes = K;
    d.images = Tensor({opt.n, 1, S, S});
    d.labels.resize(opt.n);
    Rng rng(opt.seed);
    for (std::size_t i = 0; i < opt.n; ++i) {
        const int label = static_cast<int>(i % K);
        d.labels[i] = label;
        double* img = d.images.data().data() + i * S * S;
        if (opt.kind == SyntheticKind::BarsVsCheckers) {
            const double shift = label == 0 ? 0.5 * opt.class_offset : -0.5 * opt.class_offset;
            const std::size_t width = 1 + rng.below(2);
            const std::size_t px = rng.below(2 * width), py = rng.below(2 * width);
            const bool vertical = rng.coin();
            for (std::size_t y = 0; y < S; ++y)
                for (std::size_t x = 0; x < S; ++x) {
                    const std::size_t cx = (x + px) / width, cy = (y + py) / width;
                    bool on;
                    if (label == 0)
                        on = ((vertical ? cx : cy) % 2) == 0;
                    else
                        on = ((cx + cy) % 2) == 0;
                    img[y * S + x] = 0.5 + (on ? opt.amplitude : -opt.amplitude) + shift;
                }
        } else {
            const double sector = 2.0 * std::numbers::pi / static_cast<double>(K);
            const double angle = (static_cast<double>(label) + rng.uniform(0.2, 0.8)) * sector;
            const double radius = rng.uniform(0.15, 0.35) * static_cast<double>(S);
            const double c = 0.5 * static_cast<double>(S - 1);
            const double mx = c + radius * std::cos(angle), my = c + radius * std::sin(angle);
            const double sigma = 0.12 * static_cast<double>(S);
            for (std::size_t y = 0; y < S; ++y)
                for (std::size_t x = 0; x < S; ++x) {
                    const double dx = static_cast<double>(x) - mx, dy = static_cast<double>(y) - my;
                    const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                    img[y * S + x] = 0.5 - opt.amplitude + 2.0 * opt.amplitude * g;
                }
        }
        for (std::size_t k = 0; k < S * S; ++k)
            img[k] = std::clamp(img[k] + opt.noise_std * rng.normal(), 0.0, 1.0);
    }
    return d;
}

// ---- IDX --------------------------------------------------------------------

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IdxError(IdxError::Code::Io, "cannot open " + p.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t be32(const std::string& b, std::size_t off, const std::filesystem::path& p) {
    if (b.size() < off + 4) throw IdxError(IdxError::Code::Truncated, "truncated IDX header in " + p.string());
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(b[off + i]);
    return v;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<std::size_t> num_classes) {
    const auto ib = slurp(images);
    const auto lb = slurp(labels);
    if (be32(ib, 0, images) != 0x00000803u) throw IdxError(IdxError::Code::BadMagic, "bad IDX image magic in " + images.string());
    if (be32(lb, 0, labels) != 0x00000801u) throw IdxError(IdxError::Code::BadMagic, "bad IDX label magic in " + labels.string());
    const std::size_t n = be32(ib, 4, images), h = be32(ib, 8, images), w = be32(ib, 12, images);
    const std::size_t nl = be32(lb, 4, labels);
    if (n != nl)
        throw IdxError(IdxError::Code::CountMismatch,
                       "image count " + std::to_string(n) + " but label count " + std::to_string(nl));
    if (n == 0 || h == 0 || w == 0) throw IdxError(IdxError::Code::Truncated, "IDX file declares an empty dataset");
    if (ib.size() < 16 + n * h * w) throw IdxError(IdxError::Code::Truncated, "IDX image payload truncated");
    if (lb.size() < 8 + n) throw IdxError(IdxError::Code::Truncated, "IDX label payload truncated");

    Dataset d;
    d.images = Tensor({n, 1, h, w});
    for (std::size_t i = 0; i < n * h * w; ++i) d.images[i] = static_cast<unsigned char>(ib[16 + i]) / 255.0;
    d.labels.resize(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const int l = static_cast<unsigned char>(lb[8 + i]);
        if (num_classes && static_cast<std::size_t>(l) >= *num_classes)
            throw IdxError(IdxError::Code::LabelRange,
                           "label " + std::to_string(l) + " >= num_classes " + std::to_string(*num_classes));
        d.labels[i] = l;
        max_label = std::max(max_label, l);
    }
    d.num_classes = num_classes ? *num_classes : static_cast<std::size_t>(max_label) + 1;
    return d;
}

Dataset load_csv(const std::filesystem::path& path, std::size_t channels, std::optional<std::size_t> num_classes) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("label,", 0) != 0)
        throw InvalidArgument(path.string() + ": expected header starting with \"label,\"");
    const auto pixels = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    if (channels == 0 || pixels % channels != 0) throw InvalidArgument("pixel count not divisible by channels");
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(pixels / channels))));
    if (side * side * channels != pixels) throw InvalidArgument("pixel count is not channels * side^2");

    std::vector<double> vals;
    std::vector<int> labels;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            double v = 0.0;
            try {
                v = std::stod(cell);
            } catch (const std::exception&) {
                throw InvalidArgument(path.string() + ":" + std::to_string(row) + ": bad number '" + cell + "'");
            }
            if (col == 0) {
                if (v < 0 || v != std::floor(v)) throw InvalidArgument(path.string() + ":" + std::to_string(row) + ": bad label");
                labels.push_back(static_cast<int>(v));
            } else {
                if (!(v >= 0.0 && v <= 1.0))
                    throw InvalidArgument(path.string() + ":" + std::to_string(row) + ": pixel outside [0, 1]");
                vals.push_back(v);
            }
            ++col;
        }
        if (col != pixels + 1) throw InvalidArgument(path.string() + ":" + std::to_string(row) + ": wrong column count");
    }
    if (labels.empty()) throw InvalidArgument(path.string() + ": no rows");
    Dataset d;
    d.images = Tensor({labels.size(), channels, side, side}, std::move(vals));
    const int max_label = *std::max_element(labels.begin(), labels.end());
    d.num_classes = num_classes ? *num_classes : static_cast<std::size_t>(max_label) + 1;
    d.labels = std::move(labels);
    d.validate();
    return d;
}

// ---- augmentation -------------------------------------------------------------

namespace {

std::size_t reflect(long i, std::size_t n) {
    const long m = static_cast<long>(n);
    if (i < 0) i = -i;
    if (i >= m) i = 2 * m - 2 - i;
    return static_cast<std::size_t>(std::clamp(i, 0L, m - 1));
}

void crop_flip_one(const double* src, double* dst, std::size_t C, std::size_t H, std::size_t W, std::size_t dy,
                   std::size_t dx, bool flip) {
    const long pad = static_cast<long>(kAugmentPad);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const std::size_t xo = flip ? W - 1 - x : x;
                const auto sy = reflect(static_cast<long>(y + dy) - pad, H);
                const auto sx = reflect(static_cast<long>(xo + dx) - pad, W);
                dst[(c * H + y) * W + x] = src[(c * H + sy) * W + sx];
            }
}

}  // namespace

Tensor crop_flip(const Tensor& batch, std::size_t dy, std::size_t dx, bool flip) {
    if (batch.rank() != 4) throw ShapeError("crop_flip expects (N, C, H, W)");
    if (dy > 2 * kAugmentPad || dx > 2 * kAugmentPad) throw InvalidArgument("crop offset out of range");
    const std::size_t N = batch.dim(0), C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
    Tensor out(batch.shape());
    for (std::size_t i = 0; i < N; ++i)
        crop_flip_one(batch.data().data() + i * C * H * W, out.data().data() + i * C * H * W, C, H, W, dy, dx, flip);
    return out;
}

Tensor augment(const Tensor& batch, std::uint64_t seed) {
    if (batch.rank() != 4) throw ShapeError("augment expects (N, C, H, W)");
    const std::size_t N = batch.dim(0), C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
    Tensor out(batch.shape());
    Rng rng(seed);
    for (std::size_t i = 0; i < N; ++i) {
        const auto dy = rng.below(2 * kAugmentPad + 1);
        const auto dx = rng.below(2 * kAugmentPad + 1);
        const bool flip = rng.coin();
        crop_flip_one(batch.data().data() + i * C * H * W, out.data().data() + i * C * H * W, C, H, W, dy, dx, flip);
    }
    return out;
}

}  // namespace laplab
