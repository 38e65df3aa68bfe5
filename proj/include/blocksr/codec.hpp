#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "blocksr/image.hpp"

namespace blocksr {

/// Block-average compressed image: one rounded mean per step x step block and
/// channel. Means are plane-major; each plane is a row-major grid of
/// ceil(orig_height/step) x ceil(orig_width/step) entries.
struct BlockAverageImage {
  int orig_width = 0;
  int orig_height = 0;
  int channels = 1;
  int step = 4;
  std::vector<Intensity> means;

  int grid_width() const noexcept { return (orig_width + step - 1) / step; }
  int grid_height() const noexcept { return (orig_height + step - 1) / step; }
  std::size_t payload_size() const noexcept {
    return static_cast<std::size_t>(channels) * grid_width() * grid_height();
  }
  Intensity mean(int c, int bx, int by) const {
    return means[(static_cast<std::size_t>(c) * grid_height() + by) * grid_width() + bx];
  }

  /// The means grid as a small raster (one pixel per block).
  RasterImage grid() const;
  /// Builds a block image from a means raster; the original size defaults to
  /// the grid size times the step.
  static BlockAverageImage from_grid(const RasterImage& grid, int step, int orig_width = 0,
                                     int orig_height = 0);

  /// Throws if the header fields or payload size are inconsistent.
  void validate() const;

  friend bool operator==(const BlockAverageImage&, const BlockAverageImage&) = default;
};

BlockAverageImage compress(const RasterImage& image, int step);

/// Block-constant raster at the original size.
RasterImage expand(const BlockAverageImage& b);

inline constexpr std::size_t kLabHeaderSize = 11;

void write_lab(const BlockAverageImage& b, std::ostream& sink);
BlockAverageImage read_lab(std::istream& source);

std::vector<std::uint8_t> encode_lab(const BlockAverageImage& b);
BlockAverageImage decode_lab(std::span<const std::uint8_t> bytes);

}  // namespace blocksr
