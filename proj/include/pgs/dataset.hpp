#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pgs/image.hpp"
#include "pgs/rng.hpp"

namespace pgs {

/// Smooth ramp from `low` at the left edge to `high` at the right edge.
ImageTensor flat_ramp(std::size_t height, std::size_t width, double low = 0.1, double high = 0.9);

/// Procedural clean image: gradient background, shapes, sinusoid texture,
/// light blur. Values stay inside [0.05, 0.95].
ImageTensor synth_clean(SeededRng& rng, std::size_t height, std::size_t width, std::size_t channels = 1);

/// Writes `count` procedural images as img_NNN.pgm (or .ppm for 3 channels).
std::vector<std::filesystem::path> generate_dataset(const std::filesystem::path& dir, std::size_t count,
                                                    std::size_t height, std::size_t width, std::size_t channels,
                                                    std::uint64_t seed);

std::vector<ImageTensor> load_dataset(const std::filesystem::path& dir);

/// Random square crop.
ImageTensor random_crop(const ImageTensor& img, std::size_t size, SeededRng& rng);

}  // namespace pgs
