#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pgs {

/// Dense H x W x C image of 32-bit samples, row-major and channel-last.
///
/// The shape is fixed at construction. Element access through `at` is
/// bounds-checked; `data()` exposes the contiguous buffer for bulk kernels.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(std::size_t height, std::size_t width, std::size_t channels, float fill = 0.0f);
  ImageTensor(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t pixels() const noexcept { return height_ * width_; }
  bool empty() const noexcept { return data_.empty(); }

  float& at(std::size_t row, std::size_t col, std::size_t ch = 0);
  float at(std::size_t row, std::size_t col, std::size_t ch = 0) const;

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }

  bool same_shape(const ImageTensor& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  /// Copies one channel out as a single-channel image.
  ImageTensor channel(std::size_t ch) const;
  /// Copies the window [row, row+h) x [col, col+w).
  ImageTensor crop(std::size_t row, std::size_t col, std::size_t h, std::size_t w) const;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t index(std::size_t row, std::size_t col, std::size_t ch) const;

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<float> data_;
};

/// Stacks single-channel planes into one multi-channel image.
ImageTensor merge_channels(std::span<const ImageTensor> planes);

}  // namespace pgs
