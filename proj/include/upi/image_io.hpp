#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "upi/attack.hpp"
#include "upi/interpret.hpp"
#include "upi/network.hpp"

namespace upi {

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major

    std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
    std::uint8_t& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
};

// Binary PGM (P5, maxval 255).
std::string encode_pgm(const GrayImage& img);
GrayImage decode_pgm(const std::string& bytes);
void write_pgm(const GrayImage& img, const std::string& path);
GrayImage read_pgm(const std::string& path);

struct AffineMap {
    double lo = 0.0;
    double hi = 1.0;
};

// Accepts rank 2 (H,W) or rank 3 (1,H,W); anything else is not an image.
GrayImage quantize_minmax(const Tensor& t, AffineMap* out_map = nullptr);

// Writes path as PGM plus a "<path>.map.txt" sidecar recording the affine
// range and the tensor shape, so import recovers the values within half a
// quantization step. Pixel = round-half-up of 255 (v - lo) / (hi - lo);
// a constant tensor (lo == hi) maps to all-128.
void export_perturbation_image(const Perturbation& delta, const std::string& path);
Tensor import_perturbation_image(const std::string& path);

// One composite PGM with four labeled tiles: the input, the clamped
// perturbed input, and the two saliency maps as |values|, each tile min-max
// normalized on its own.
void export_interpretation_panel(const Network& net, const Interpreter& interpreter,
                                 const Tensor& x, const Perturbation& delta,
                                 const std::string& path);

}  // namespace upi
