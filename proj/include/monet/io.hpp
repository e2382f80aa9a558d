#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "monet/tensor.hpp"

namespace monet {

/// Writes via a sibling temporary file and rename, so readers never observe a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

/// 8-bit PNG (gray, RGB or RGBA) as [H, W, 3] doubles in [0, 1].
Tensor read_png_rgb(const std::filesystem::path& path);
/// 8-bit PNG as one byte per pixel; colour input is converted to luminance.
std::vector<std::uint8_t> read_png_gray(const std::filesystem::path& path, int& width,
                                        int& height);

void write_png_rgb(const std::filesystem::path& path, const Tensor& image);
void write_png_gray(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
                    int width, int height);

/// Bilinear resampling of an [H, W, C] tensor to [size, size, C]
/// (pixel-centre alignment).
Tensor resize_bilinear(const Tensor& image, int size);

}  // namespace monet
