#include "pgs/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "pgs/error.hpp"
#include "pgs/io.hpp"

namespace pgs {

namespace {

void box_blur3(std::vector<double>& plane, std::size_t h, std::size_t w) {
  std::vector<double> out(plane.size());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double s = 0.0;
      int n = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const long rr = static_cast<long>(r) + dr;
          const long cc = static_cast<long>(c) + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) continue;
          s += plane[static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc)];
          ++n;
        }
      }
      out[r * w + c] = s / n;
    }
  }
  plane.swap(out);
}

std::vector<double> synth_plane(SeededRng& rng, std::size_t h, std::size_t w) {
  const double pi = std::numbers::pi;
  std::vector<double> p(h * w);
  const double g0 = 0.2 + 0.6 * rng.uniform();
  const double gx = (rng.uniform() - 0.5) * 0.6;
  const double gy = (rng.uniform() - 0.5) * 0.6;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      p[r * w + c] = g0 + gx * (double(c) / double(w) - 0.5) + gy * (double(r) / double(h) - 0.5);
    }
  }
  const std::size_t shapes = 4 + rng.below(6);
  for (std::size_t s = 0; s < shapes; ++s) {
    const double level = 0.1 + 0.8 * rng.uniform();
    const double cy = rng.uniform() * double(h);
    const double cx = rng.uniform() * double(w);
    const double ry = (0.05 + 0.2 * rng.uniform()) * double(h);
    const double rx = (0.05 + 0.2 * rng.uniform()) * double(w);
    const bool disc = rng.uniform() < 0.5;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const double dy = (double(r) - cy) / ry;
        const double dx = (double(c) - cx) / rx;
        const bool inside = disc ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (inside) p[r * w + c] = level;
      }
    }
  }
  const double amp = 0.03 + 0.07 * rng.uniform();
  const double fy = 2.0 + 10.0 * rng.uniform();
  const double fx = 2.0 + 10.0 * rng.uniform();
  const double phase = 2.0 * pi * rng.uniform();
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      p[r * w + c] += amp * std::sin(2.0 * pi * (fy * double(r) / double(h) + fx * double(c) / double(w)) + phase);
    }
  }
  box_blur3(p, h, w);
  for (auto& v : p) v = std::clamp(v, 0.05, 0.95);
  return p;
}

}  // namespace

ImageTensor flat_ramp(std::size_t height, std::size_t width, double low, double high) {
  ImageTensor img(height, width, 1);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const double t = width > 1 ? double(c) / double(width - 1) : 0.0;
      img.at(r, c) = static_cast<float>(low + (high - low) * t);
    }
  }
  return img;
}

ImageTensor synth_clean(SeededRng& rng, std::size_t height, std::size_t width, std::size_t channels) {
  require(height > 0 && width > 0 && (channels == 1 || channels == 3), ErrorKind::InvalidArgument,
          "synthetic images need positive size and 1 or 3 channels");
  const auto base = synth_plane(rng, height, width);
  ImageTensor img(height, width, channels);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    const double tint = channels == 1 ? 0.0 : (rng.uniform() - 0.5) * 0.2;
    for (std::size_t i = 0; i < height * width; ++i) {
      img.data()[i * channels + ch] = static_cast<float>(std::clamp(base[i] + tint, 0.05, 0.95));
    }
  }
  return img;
}

std::vector<std::filesystem::path> generate_dataset(const std::filesystem::path& dir, std::size_t count,
                                                    std::size_t height, std::size_t width, std::size_t channels,
                                                    std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const SeededRng root(seed);
  std::vector<std::filesystem::path> out;
  for (std::size_t i = 0; i < count; ++i) {
    auto rng = root.fork(i);
    const auto img = synth_clean(rng, height, width, channels);
    char name[32];
    std::snprintf(name, sizeof name, "img_%03zu.%s", i, channels == 1 ? "pgm" : "ppm");
    out.push_back(dir / name);
    save_image(img, out.back(), true);
  }
  return out;
}

std::vector<ImageTensor> load_dataset(const std::filesystem::path& dir) {
  std::vector<ImageTensor> out;
  for (const auto& p : list_images(dir)) out.push_back(load_image(p));
  if (out.empty()) fail(ErrorKind::InvalidArgument, "dataset is empty: " + dir.string());
  return out;
}

ImageTensor random_crop(const ImageTensor& img, std::size_t size, SeededRng& rng) {
  require(img.height() >= size && img.width() >= size, ErrorKind::InvalidArgument, "crop larger than image");
  const auto r = rng.below(img.height() - size + 1);
  const auto c = rng.below(img.width() - size + 1);
  return img.crop(r, c, size, size);
}

}  // namespace pgs
