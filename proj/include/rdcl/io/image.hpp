#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rdcl/core/tensor.hpp"

namespace rdcl::io {

/// Reads an 8-bit PNG (any colour type, converted to RGB) or a binary PPM
/// (P6, maxval <= 255) into a [3,H,W] tensor in [0,1]. Throws DataError.
Tensor read_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG; values are clamped to [0,1] and rounded.
/// The file is written to a temporary name and renamed, so a failure
/// leaves nothing behind. Throws DataError.
void write_png(const std::filesystem::path& path, const Tensor& image);

/// Writes a single-channel [1,H,W] tensor in [0,1] as 8-bit grayscale PNG.
void write_gray_png(const std::filesystem::path& path, const Tensor& gray);

/// Writes bytes atomically (temporary file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Quantises [0,1] floats to 8-bit values, as stored on disk.
std::uint8_t to_byte(float v);

/// Image files in `dir` with a .png or .ppm extension, sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Pads on the bottom and right by edge replication to multiples of `align`.
Tensor pad_replicate(const Tensor& image, int align);
/// Top-left [C,h,w] window.
Tensor crop(const Tensor& image, int height, int width);
/// [C,h,w] window at (top, left).
Tensor crop_at(const Tensor& image, int top, int left, int height, int width);

}  // namespace rdcl::io
