#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "blocksr/image.hpp"

namespace blocksr {

/// Decodes an 8-bit grayscale or RGB PNG. Palette and gray+alpha inputs are
/// expanded; alpha is dropped.
RasterImage decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const RasterImage& image);

RasterImage read_png(const std::filesystem::path& path);
void write_png(const RasterImage& image, const std::filesystem::path& path);

}  // namespace blocksr
