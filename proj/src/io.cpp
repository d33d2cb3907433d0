#include "pgs/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "pgs/error.hpp"

namespace pgs {

namespace {

constexpr char kRawMagic[4] = {'P', 'G', 'T', '1'};
constexpr std::size_t kMaxElements = std::size_t{1} << 31;

class HeaderReader {
 public:
  HeaderReader(const std::vector<unsigned char>& bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

  std::size_t pos() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::uint64_t read_uint(const char* field) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
      fail(ErrorKind::MalformedHeader, std::string("expected integer for ") + field);
    }
    std::uint64_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > std::numeric_limits<std::uint32_t>::max()) {
        fail(ErrorKind::DimensionOverflow, std::string(field) + " does not fit 32 bits");
      }
      ++pos_;
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void consume_single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      fail(ErrorKind::MalformedHeader, "missing whitespace before raster");
    }
    ++pos_;
  }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_;
};

std::size_t checked_elements(std::uint64_t h, std::uint64_t w, std::uint64_t c) {
  if (h == 0 || w == 0 || c == 0) fail(ErrorKind::MalformedHeader, "zero dimension");
  const unsigned __int128 n = static_cast<unsigned __int128>(h) * w * c;
  if (n > kMaxElements) fail(ErrorKind::DimensionOverflow, "image has too many samples");
  return static_cast<std::size_t>(n);
}

std::uint32_t read_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

void write_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

// Parses everything after the two-byte magic.
ImageTensor decode_netpbm(const std::vector<unsigned char>& bytes, std::size_t channels) {
  HeaderReader hr(bytes, 2);
  if (bytes.size() < 3 || !(std::isspace(bytes[2]) || bytes[2] == '#')) {
    fail(ErrorKind::MalformedHeader, "magic must be followed by whitespace");
  }
  const auto w = hr.read_uint("width");
  const auto h = hr.read_uint("height");
  const auto maxval = hr.read_uint("maxval");
  if (maxval == 0 || maxval > 255) {
    fail(ErrorKind::MalformedHeader, "only 8-bit Netpbm (maxval 1..255) is supported");
  }
  hr.consume_single_whitespace();
  const auto n = checked_elements(h, w, channels);
  const auto offset = hr.pos();
  if (bytes.size() - offset < n) {
    fail(ErrorKind::TruncatedPayload, "raster has " + std::to_string(bytes.size() - offset) +
                                          " of " + std::to_string(n) + " bytes");
  }
  std::vector<float> data(n);
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<float>(bytes[offset + i]) * scale;
  return ImageTensor(h, w, channels, std::move(data));
}

ImageTensor decode_raw(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 16) fail(ErrorKind::MalformedHeader, "raw tensor header shorter than 16 bytes");
  const auto h = read_u32le(bytes.data() + 4);
  const auto w = read_u32le(bytes.data() + 8);
  const auto c = read_u32le(bytes.data() + 12);
  const auto n = checked_elements(h, w, c);
  if ((bytes.size() - 16) / 4 < n) {
    fail(ErrorKind::TruncatedPayload, "raw tensor payload shorter than " + std::to_string(n) + " floats");
  }
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = std::bit_cast<float>(read_u32le(bytes.data() + 16 + 4 * i));
  }
  return ImageTensor(h, w, c, std::move(data));
}

std::uint8_t quantize(float v, bool clamp) {
  float x = std::isnan(v) ? 0.0f : v;
  if (clamp) x = std::clamp(x, 0.0f, 1.0f);
  const float q = std::round(x * 255.0f);
  return static_cast<std::uint8_t>(std::clamp(q, 0.0f, 255.0f));
}

}  // namespace

ImageFormat format_for_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".pgm") return ImageFormat::Pgm;
  if (ext == ".ppm") return ImageFormat::Ppm;
  if (ext == ".pgt") return ImageFormat::RawTensor;
  fail(ErrorKind::InvalidArgument, "unsupported image extension '" + ext + "'");
}

ImageTensor decode_image(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 2) fail(ErrorKind::MalformedHeader, "file too short for a magic number");
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kRawMagic, 4) == 0) return decode_raw(bytes);
  if (bytes[0] == 'P' && bytes[1] == '5') return decode_netpbm(bytes, 1);
  if (bytes[0] == 'P' && bytes[1] == '6') return decode_netpbm(bytes, 3);
  fail(ErrorKind::MalformedHeader, "unrecognized magic number");
}

ImageTensor load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::Io, "read failed for '" + path.string() + "'");
  return decode_image(bytes);
}

std::vector<unsigned char> encode_image(const ImageTensor& img, ImageFormat format, bool clamp) {
  std::vector<unsigned char> out;
  auto src = img.data();
  if (format == ImageFormat::RawTensor) {
    out.reserve(16 + 4 * src.size());
    out.insert(out.end(), kRawMagic, kRawMagic + 4);
    write_u32le(out, static_cast<std::uint32_t>(img.height()));
    write_u32le(out, static_cast<std::uint32_t>(img.width()));
    write_u32le(out, static_cast<std::uint32_t>(img.channels()));
    for (float v : src) write_u32le(out, std::bit_cast<std::uint32_t>(v));
    return out;
  }
  const std::size_t want = format == ImageFormat::Pgm ? 1 : 3;
  if (img.channels() != want) {
    fail(ErrorKind::ShapeMismatch, std::string(format == ImageFormat::Pgm ? "PGM" : "PPM") +
                                       " needs " + std::to_string(want) + " channel(s)");
  }
  const auto header = std::string(format == ImageFormat::Pgm ? "P5" : "P6") + "\n" +
                      std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  out.assign(header.begin(), header.end());
  out.reserve(out.size() + src.size());
  for (float v : src) out.push_back(quantize(v, clamp));
  return out;
}

void save_image(const ImageTensor& img, const std::filesystem::path& path, bool clamp) {
  const auto bytes = encode_image(img, format_for_path(path), clamp);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) fail(ErrorKind::Io, "not a directory: '" + dir.string() + "'");
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pgt") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace pgs
