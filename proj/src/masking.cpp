#include "pgs/masking.hpp"

#include "pgs/error.hpp"
#include "pgs/instrument.hpp"

namespace pgs {

namespace instrument {
Counters& counters() noexcept {
  static Counters c;
  return c;
}
}  // namespace instrument

MaskFill parse_mask_fill(const std::string& name) {
  if (name == "mean") return MaskFill::NeighborMean;
  if (name == "zero") return MaskFill::Zero;
  if (name == "random") return MaskFill::RandomNeighbor;
  fail(ErrorKind::InvalidArgument, "unknown mask fill '" + name + "' (mean|zero|random)");
}

std::string to_string(MaskFill fill) {
  switch (fill) {
    case MaskFill::NeighborMean: return "mean";
    case MaskFill::Zero: return "zero";
    case MaskFill::RandomNeighbor: return "random";
  }
  return "mean";
}

namespace {

float fill_value(const ImageTensor& y, std::size_t row, std::size_t col, std::size_t ch, MaskFill fill,
                 SeededRng* rng) {
  if (fill == MaskFill::Zero) return 0.0f;
  const auto h = static_cast<long>(y.height());
  const auto w = static_cast<long>(y.width());
  float vals[8];
  int count = 0;
  for (long dr = -1; dr <= 1; ++dr) {
    for (long dc = -1; dc <= 1; ++dc) {
      if (dr == 0 && dc == 0) continue;
      const long r = static_cast<long>(row) + dr;
      const long c = static_cast<long>(col) + dc;
      if (r < 0 || c < 0 || r >= h || c >= w) continue;
      vals[count++] = y.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ch);
    }
  }
  if (count == 0) return y.at(row, col, ch);
  if (fill == MaskFill::RandomNeighbor) {
    require(rng != nullptr, ErrorKind::InvalidArgument, "random-neighbor fill needs an rng");
    return vals[rng->below(static_cast<std::uint64_t>(count))];
  }
  double s = 0.0;
  for (int i = 0; i < count; ++i) s += vals[i];
  return static_cast<float>(s / count);
}

}  // namespace

MaskedVolume build_masked_volume(const ImageTensor& y, std::size_t cell_size, MaskFill fill, SeededRng* rng) {
  require(cell_size >= 2, ErrorKind::InvalidArgument, "cell_size must be >= 2");
  require(!y.empty(), ErrorKind::InvalidArgument, "cannot mask an empty image");
  instrument::counters().masker_builds.fetch_add(1, std::memory_order_relaxed);

  MaskedVolume vol;
  vol.cell_size = cell_size;
  vol.height = y.height();
  vol.width = y.width();
  vol.channels = y.channels();
  const auto copies = cell_size * cell_size;
  vol.copies.assign(copies, y);
  for (std::size_t k = 0; k < copies; ++k) {
    const auto oy = k / cell_size;
    const auto ox = k % cell_size;
    vol.blindspot_index.emplace_back(oy, ox);
    auto& copy = vol.copies[k];
    for (std::size_t r = oy; r < y.height(); r += cell_size) {
      for (std::size_t c = ox; c < y.width(); c += cell_size) {
        for (std::size_t ch = 0; ch < y.channels(); ++ch) copy.at(r, c, ch) = fill_value(y, r, c, ch, fill, rng);
      }
    }
  }
  return vol;
}

ImageTensor map_blindspots(std::span<const ImageTensor> volume_outputs, const MaskedVolume& vol) {
  require(volume_outputs.size() == vol.copy_count(), ErrorKind::ShapeMismatch,
          "one output per masked copy is required");
  for (const auto& out : volume_outputs) {
    require(out.height() == vol.height && out.width() == vol.width && out.channels() == vol.channels,
            ErrorKind::ShapeMismatch, "output shape differs from the masked source");
  }
  instrument::counters().mapper_calls.fetch_add(1, std::memory_order_relaxed);
  ImageTensor result(vol.height, vol.width, vol.channels);
  auto dst = result.data();
  const auto c = vol.channels;
  for (std::size_t r = 0; r < vol.height; ++r) {
    for (std::size_t col = 0; col < vol.width; ++col) {
      const auto src = volume_outputs[vol.copy_of(r, col)].data();
      const auto base = (r * vol.width + col) * c;
      for (std::size_t ch = 0; ch < c; ++ch) dst[base + ch] = src[base + ch];
    }
  }
  return result;
}

}  // namespace pgs
