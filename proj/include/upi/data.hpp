#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "upi/tensor.hpp"

namespace upi {

// IDX container, the MNIST distribution format: 4-byte big-endian magic
// (0x00000801 rank-1 labels, 0x00000803 rank-3 images, unsigned byte
// elements only), big-endian 32-bit extents, then the raw payload.
struct IdxArray {
    std::vector<std::size_t> dims;
    std::vector<std::uint8_t> bytes;

    std::size_t count() const;
};

// Accepts raw IDX bytes or a gzip stream wrapping them (detected by the
// 1f 8b prefix). Each defect gets its own error class: unknown magic word,
// recognizable frame with a non-byte element type, truncated header or
// payload, trailing bytes, zero extents.
IdxArray parse_idx_raw(std::span<const std::uint8_t> raw);

// parse_idx_raw, then widen the payload to reals in [0, 255].
Tensor parse_idx(std::span<const std::uint8_t> raw);

// Inverse of parse_idx_raw on well-formed input; always emits the
// uncompressed form, so serialize(parse(b)) == b for uncompressed b.
std::vector<std::uint8_t> serialize_idx(const IdxArray& a);

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> compressed);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

// Byte values over 256, so pixels land in [0, 255/256] and perturbation
// budgets quoted as n/256 correspond to exactly n raw byte units.
Tensor scale_pixels(const Tensor& raw);

// Labeled inputs, all the same shape, values in [0, 1].
struct Dataset {
    std::vector<Tensor> images;
    std::vector<std::size_t> labels;
    std::size_t class_count = 0;

    std::size_t size() const { return images.size(); }
    void validate() const;
};

// images: rank-3 IDX (count, height, width); labels: rank-1 of same count.
// Pixels come out scaled to [0, 255/256].
Dataset make_image_dataset(const IdxArray& images, const IdxArray& labels,
                           std::size_t class_count);

Dataset load_idx_dataset(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path,
                         std::size_t class_count);

// Seeded class-stratified sample without replacement; count must be
// satisfiable per class (counts differ by at most one across classes).
Dataset subset(const Dataset& d, std::size_t count, std::uint64_t seed);

Dataset take(const Dataset& d, std::span<const std::size_t> indices);

std::vector<std::size_t> stratified_indices(const std::vector<std::size_t>& labels,
                                            std::size_t class_count, std::size_t count,
                                            std::uint64_t seed);

// k seeded Gaussian clusters in d dimensions with unit-separated means,
// spread = within-cluster standard deviation before rescaling, the whole
// cloud affinely mapped into [0,1]. Labels balanced within one.
Dataset synthetic_blobs(std::size_t n, std::size_t d, std::size_t k, double spread,
                        std::uint64_t seed);

}  // namespace upi
