#include "pgs/image.hpp"

#include <string>

#include "pgs/error.hpp"

namespace pgs {

ImageTensor::ImageTensor(std::size_t height, std::size_t width, std::size_t channels, float fill)
    : height_(height), width_(width), channels_(channels), data_(height * width * channels, fill) {}

ImageTensor::ImageTensor(std::size_t height, std::size_t width, std::size_t channels,
                         std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (data_.size() != height * width * channels) {
    fail(ErrorKind::ShapeMismatch, "buffer of " + std::to_string(data_.size()) +
                                       " samples does not match " + std::to_string(height) + "x" +
                                       std::to_string(width) + "x" + std::to_string(channels));
  }
}

std::size_t ImageTensor::index(std::size_t row, std::size_t col, std::size_t ch) const {
  if (row >= height_ || col >= width_ || ch >= channels_) {
    fail(ErrorKind::InvalidArgument, "pixel (" + std::to_string(row) + ", " + std::to_string(col) +
                                         ", " + std::to_string(ch) + ") out of bounds");
  }
  return (row * width_ + col) * channels_ + ch;
}

float& ImageTensor::at(std::size_t row, std::size_t col, std::size_t ch) {
  return data_[index(row, col, ch)];
}

float ImageTensor::at(std::size_t row, std::size_t col, std::size_t ch) const {
  return data_[index(row, col, ch)];
}

ImageTensor ImageTensor::channel(std::size_t ch) const {
  require(ch < channels_, ErrorKind::InvalidArgument, "channel index out of range");
  ImageTensor out(height_, width_, 1);
  auto dst = out.data();
  for (std::size_t i = 0; i < pixels(); ++i) dst[i] = data_[i * channels_ + ch];
  return out;
}

ImageTensor ImageTensor::crop(std::size_t row, std::size_t col, std::size_t h, std::size_t w) const {
  require(row + h <= height_ && col + w <= width_, ErrorKind::InvalidArgument,
          "crop window exceeds image");
  ImageTensor out(h, w, channels_);
  auto dst = out.data();
  for (std::size_t r = 0; r < h; ++r) {
    const float* src = data_.data() + ((row + r) * width_ + col) * channels_;
    std::copy(src, src + w * channels_, dst.data() + r * w * channels_);
  }
  return out;
}

ImageTensor merge_channels(std::span<const ImageTensor> planes) {
  require(!planes.empty(), ErrorKind::InvalidArgument, "no planes to merge");
  const auto h = planes[0].height();
  const auto w = planes[0].width();
  ImageTensor out(h, w, planes.size());
  auto dst = out.data();
  for (std::size_t c = 0; c < planes.size(); ++c) {
    require(planes[c].height() == h && planes[c].width() == w && planes[c].channels() == 1,
            ErrorKind::ShapeMismatch, "planes must be single-channel and equally sized");
    auto src = planes[c].data();
    for (std::size_t i = 0; i < h * w; ++i) dst[i * planes.size() + c] = src[i];
  }
  return out;
}

}  // namespace pgs
