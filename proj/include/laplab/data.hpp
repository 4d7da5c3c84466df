#ifndef LAPLAB_DATA_HPP
#define LAPLAB_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "laplab/error.hpp"
#include "laplab/tensor.hpp"

namespace laplab {

// Images (N, C, H, W) in [0, 1]; labels in [0, num_classes).
struct Dataset {
    Tensor images;
    std::vector<int> labels;
    std::size_t num_classes = 0;

    std::size_t size() const { return labels.size(); }
    Shape image_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }

    Tensor gather_images(std::span<const std::size_t> idx) const;
    std::vector<int> gather_labels(std::span<const std::size_t> idx) const;
    Dataset subset(std::span<const std::size_t> idx) const;
    // Images flattened to (N, C*H*W) for networks with flat inputs.
    Dataset flattened() const;

    // Throws InvalidArgument if a value or label is out of range.
    void validate() const;
};

enum class SyntheticKind { BarsVsCheckers, GaussianBlobs };

std::optional<SyntheticKind> parse_synthetic_kind(const std::string& s);

struct SyntheticOptions {
    SyntheticKind kind = SyntheticKind::BarsVsCheckers;
    std::size_t n = 2000;
    std::size_t size = 16;
    double noise_std = 0.3;
    std::uint64_t seed = 0;
    // Pattern contrast around mid-grey; pixels are 0.5 +/- amplitude before noise.
    double amplitude = 0.4;
    // bars-vs-checkers: mean brightness of class 0 minus class 1.
    double class_offset = 0.0;
    // Class count for gaussian-blobs (bars-vs-checkers is always 2).
    std::size_t classes = 2;
};

// bars-vs-checkers: class 0 holds horizontal or vertical stripes, class 1 a
// checkerboard; both with random width (1 or 2 pixels) and phase. Labels
// alternate 0, 1, 0, ... so classes are balanced.
// gaussian-blobs: class k places a bright blob at a random position inside
// angular sector k around the image centre.
Dataset gen_synthetic(const SyntheticOptions& opt);

class IdxError : public Error {
public:
    enum class Code { Io, BadMagic, CountMismatch, Truncated, LabelRange };
    IdxError(Code code, const std::string& what) : Error(what), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

// IDX image file (magic 0x00000803, dims N, H, W big-endian, u8 pixels scaled
// by 1/255) and label file (magic 0x00000801). When num_classes is given a
// label >= num_classes is a LabelRange error; otherwise it is max label + 1.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<std::size_t> num_classes = std::nullopt);

// CSV with header "label,p0,p1,...", pixels already in [0, 1]. Rows are
// reshaped to (channels, side, side) with side = sqrt(pixels / channels).
Dataset load_csv(const std::filesystem::path& path, std::size_t channels = 1,
                 std::optional<std::size_t> num_classes = std::nullopt);

// Reflect-pad by kAugmentPad, crop back at offset (dy, dx), optionally flip
// horizontally. Offsets range over [0, 2 * kAugmentPad].
inline constexpr std::size_t kAugmentPad = 2;
Tensor crop_flip(const Tensor& batch, std::size_t dy, std::size_t dx, bool flip);

// Per image: random crop offset and a fair-coin horizontal flip.
Tensor augment(const Tensor& batch, std::uint64_t seed);

}  // namespace laplab

#endif  // LAPLAB_DATA_HPP
