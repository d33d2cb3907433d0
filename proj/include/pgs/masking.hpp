#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pgs/image.hpp"
#include "pgs/rng.hpp"

namespace pgs {

enum class MaskFill { NeighborMean, Zero, RandomNeighbor };

MaskFill parse_mask_fill(const std::string& name);
std::string to_string(MaskFill fill);

/// s^2 masked copies of an image. Copy k blinds cell offset (k / s, k % s)
/// in every s x s cell, so the blindspot sets partition the pixel grid.
/// Partial cells at the right/bottom edge behave like a reflect-pad then crop.
struct MaskedVolume {
  std::vector<ImageTensor> copies;
  std::vector<std::pair<std::size_t, std::size_t>> blindspot_index;
  std::size_t cell_size = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t copy_count() const noexcept { return cell_size * cell_size; }
  /// Index of the copy in which (row, col) is a blindspot.
  std::size_t copy_of(std::size_t row, std::size_t col) const noexcept {
    return (row % cell_size) * cell_size + col % cell_size;
  }
  bool is_blindspot(std::size_t copy, std::size_t row, std::size_t col) const noexcept {
    return copy_of(row, col) == copy;
  }
};

/// `rng` is only consulted for MaskFill::RandomNeighbor.
MaskedVolume build_masked_volume(const ImageTensor& y, std::size_t cell_size,
                                 MaskFill fill = MaskFill::NeighborMean, SeededRng* rng = nullptr);

/// Gathers each pixel from the copy in which it was a blindspot.
ImageTensor map_blindspots(std::span<const ImageTensor> volume_outputs, const MaskedVolume& vol);

}  // namespace pgs
