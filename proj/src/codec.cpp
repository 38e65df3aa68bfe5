#include "blocksr/codec.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "blocksr/error.hpp"

namespace blocksr {

namespace {

constexpr std::array<char, 4> kMagic = {'L', 'A', 'B', '1'};
constexpr std::uint8_t kVersion = 1;

}  // namespace

RasterImage BlockAverageImage::grid() const {
  validate();
  return RasterImage(grid_width(), grid_height(), channels, means);
}

BlockAverageImage BlockAverageImage::from_grid(const RasterImage& grid, int step, int orig_width,
                                               int orig_height) {
  BlockAverageImage b;
  b.step = step;
  b.channels = grid.channels();
  b.orig_width = orig_width > 0 ? orig_width : grid.width() * step;
  b.orig_height = orig_height > 0 ? orig_height : grid.height() * step;
  b.means = grid.data();
  b.validate();
  if (b.grid_width() != grid.width() || b.grid_height() != grid.height()) {
    throw Error(ErrorCode::kShapeMismatch, "means grid does not match the original size");
  }
  return b;
}

void BlockAverageImage::validate() const {
  require_supported_step(step);
  if (channels != 1 && channels != 3) {
    throw Error(ErrorCode::kInvalidHeader, "channels must be 1 or 3");
  }
  if (orig_width < 1 || orig_height < 1 || orig_width > 0xFFFF || orig_height > 0xFFFF) {
    throw Error(ErrorCode::kInvalidHeader, "original dimensions must be within 1..65535");
  }
  if (means.size() != payload_size()) {
    throw Error(ErrorCode::kShapeMismatch, "means payload has " + std::to_string(means.size()) +
                                               " entries, expected " +
                                               std::to_string(payload_size()));
  }
}

BlockAverageImage compress(const RasterImage& image, int step) {
  require_supported_step(step);
  if (image.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot compress an empty image");
  BlockAverageImage b;
  b.orig_width = image.width();
  b.orig_height = image.height();
  b.channels = image.channels();
  b.step = step;
  b.means.resize(b.payload_size());
  const int gw = b.grid_width();
  const int gh = b.grid_height();
  for (int c = 0; c < image.channels(); ++c) {
    for (int by = 0; by < gh; ++by) {
      for (int bx = 0; bx < gw; ++bx) {
        const int x1 = std::min(image.width(), (bx + 1) * step);
        const int y1 = std::min(image.height(), (by + 1) * step);
        long sum = 0;
        long count = 0;
        for (int y = by * step; y < y1; ++y)
          for (int x = bx * step; x < x1; ++x, ++count) sum += image.at(c, x, y);
        b.means[(static_cast<std::size_t>(c) * gh + by) * gw + bx] =
            static_cast<Intensity>((2 * sum + count) / (2 * count));
      }
    }
  }
  return b;
}

RasterImage expand(const BlockAverageImage& b) {
  b.validate();
  RasterImage out(b.orig_width, b.orig_height, b.channels);
  for (int c = 0; c < b.channels; ++c)
    for (int y = 0; y < b.orig_height; ++y)
      for (int x = 0; x < b.orig_width; ++x) out.at(c, x, y) = b.mean(c, x / b.step, y / b.step);
  return out;
}

std::vector<std::uint8_t> encode_lab(const BlockAverageImage& b) {
  b.validate();
  std::vector<std::uint8_t> out;
  out.reserve(kLabHeaderSize + b.means.size());
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(b.orig_width & 0xFF));
  out.push_back(static_cast<std::uint8_t>(b.orig_width >> 8));
  out.push_back(static_cast<std::uint8_t>(b.orig_height & 0xFF));
  out.push_back(static_cast<std::uint8_t>(b.orig_height >> 8));
  out.push_back(static_cast<std::uint8_t>(b.channels));
  out.push_back(static_cast<std::uint8_t>(b.step));
  out.insert(out.end(), b.means.begin(), b.means.end());
  return out;
}

namespace {

// Validates the fixed header and returns the block image with an empty payload.
BlockAverageImage decode_header(std::span<const std::uint8_t> bytes) {
  const std::size_t probe = std::min(bytes.size(), kMagic.size());
  if (!std::equal(kMagic.begin(), kMagic.begin() + probe, bytes.begin(),
                  [](char m, std::uint8_t b) { return static_cast<std::uint8_t>(m) == b; }) ||
      bytes.empty()) {
    throw Error(ErrorCode::kBadMagic, "not a .lab stream (bad magic)");
  }
  if (bytes.size() < kLabHeaderSize) {
    throw Error(ErrorCode::kTruncated, "truncated .lab header");
  }
  if (bytes[4] != kVersion) {
    throw Error(ErrorCode::kInvalidHeader, "unsupported .lab version " + std::to_string(bytes[4]));
  }
  BlockAverageImage b;
  b.orig_width = bytes[5] | (bytes[6] << 8);
  b.orig_height = bytes[7] | (bytes[8] << 8);
  b.channels = bytes[9];
  b.step = bytes[10];
  if (b.channels != 1 && b.channels != 3) {
    throw Error(ErrorCode::kInvalidHeader, "invalid channel count " + std::to_string(b.channels));
  }
  if (b.step < 2 || b.step > 4) {
    throw Error(ErrorCode::kInvalidHeader, "invalid step " + std::to_string(b.step));
  }
  if (b.orig_width == 0 || b.orig_height == 0) {
    throw Error(ErrorCode::kInvalidHeader, "zero image dimension");
  }
  return b;
}

}  // namespace

BlockAverageImage decode_lab(std::span<const std::uint8_t> bytes) {
  BlockAverageImage b = decode_header(bytes);
  const std::size_t payload = b.payload_size();
  if (bytes.size() < kLabHeaderSize + payload) {
    throw Error(ErrorCode::kTruncated, "truncated .lab payload");
  }
  if (bytes.size() > kLabHeaderSize + payload) {
    throw Error(ErrorCode::kInvalidHeader, "trailing bytes after .lab payload");
  }
  b.means.assign(bytes.begin() + kLabHeaderSize, bytes.end());
  return b;
}

void write_lab(const BlockAverageImage& b, std::ostream& sink) {
  const auto bytes = encode_lab(b);
  sink.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw Error(ErrorCode::kIo, "failed writing .lab stream");
}

BlockAverageImage read_lab(std::istream& source) {
  std::vector<std::uint8_t> bytes(kLabHeaderSize);
  source.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  bytes.resize(static_cast<std::size_t>(source.gcount()));
  const std::size_t payload = decode_header(bytes).payload_size();
  bytes.resize(kLabHeaderSize + payload);
  source.read(reinterpret_cast<char*>(bytes.data() + kLabHeaderSize),
              static_cast<std::streamsize>(payload));
  bytes.resize(kLabHeaderSize + static_cast<std::size_t>(source.gcount()));
  return decode_lab(bytes);
}

}  // namespace blocksr
