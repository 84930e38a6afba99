#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "illcond/diffcore/tensor.hpp"

namespace illcond::harness {

using diffcore::Tensor;

/// `count` grayscale side x side images as rows of a [count, side*side]
/// tensor in [0, 1]: 1-3 anisotropic Gaussian blobs plus faint strokes.
Tensor generate_synthetic_dataset(std::uint64_t seed, std::size_t count, std::size_t side);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;  // row-major, [0, 1]
};

/// Binary (P5) or ASCII (P2) PGM with maxval <= 255.
GrayImage read_pgm(const std::filesystem::path& path);
/// Binary P5, values rounded to the nearest of 256 levels.
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// Center-crop to a square, then area-average down (or up) to side x side.
std::vector<double> resample_square(const GrayImage& image, std::size_t side);

/// Every *.pgm file in `dir`, sorted by name, as a [count, side*side] tensor.
Tensor load_image_dir(const std::filesystem::path& dir, std::size_t side);

}  // namespace illcond::harness
