#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pgs/image.hpp"

namespace pgs {

enum class ImageFormat { Pgm, Ppm, RawTensor };

/// Format implied by the file extension: .pgm, .ppm, or .pgt (raw tensor).
ImageFormat format_for_path(const std::filesystem::path& path);

/// Loads P5/P6 (8-bit, scaled to [0,1]) or a raw `PGT1` tensor (verbatim).
/// The format is detected from the magic bytes, not the extension.
ImageTensor load_image(const std::filesystem::path& path);
ImageTensor decode_image(const std::vector<unsigned char>& bytes);

/// With `clamp`, Netpbm samples are clipped to [0,1] before quantization;
/// without it, out-of-range values still saturate at the format limits.
/// The raw tensor format stores floats bit-exactly and ignores `clamp`.
void save_image(const ImageTensor& img, const std::filesystem::path& path, bool clamp = true);
std::vector<unsigned char> encode_image(const ImageTensor& img, ImageFormat format, bool clamp = true);

/// Regular files in `dir` whose extension is .pgm, .ppm or .pgt, sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace pgs
