#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace blocksr {

using Intensity = std::uint8_t;

/// 8-bit raster with 1 or 3 channel planes stored plane-major, each plane
/// row-major. Channels are independent intensity planes (no color management).
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int width, int height, int channels, Intensity fill = 0);
  RasterImage(int width, int height, int channels, std::vector<Intensity> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  Intensity at(int c, int x, int y) const {
    return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x];
  }
  Intensity& at(int c, int x, int y) {
    return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x];
  }

  std::span<const Intensity> plane(int c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }
  std::span<Intensity> plane(int c) {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  const std::vector<Intensity>& data() const noexcept { return data_; }

  bool same_shape(const RasterImage& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<Intensity> data_;
};

/// Unconstrained real-valued grid, used for transform coefficients and other
/// intermediate quantities that may leave the intensity range.
struct RealGrid {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  RealGrid() = default;
  RealGrid(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Normalized intensity plane, every value finite and within [0, 1].
class RealPlane {
 public:
  RealPlane() = default;
  RealPlane(int width, int height, double fill = 0.0);
  /// Values are clamped to [0, 1]; non-finite values become 0.
  RealPlane(int width, int height, std::vector<double> values);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return values_.size(); }
  double at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const double> values() const noexcept { return values_; }

  static RealPlane from_channel(const RasterImage& image, int channel);
  /// Writes the plane back to 8-bit, rounding half away from zero.
  void store_channel(RasterImage& image, int channel) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

/// Rounds half away from zero and saturates to 0..255.
Intensity quantize(double value);

/// Parameters of the low-resolution observation B = S F M I + noise, where the
/// geometric transform M is the identity and the blur F is a step x step box.
struct ObservationParams {
  int step = 4;
  double noise_sigma = 0.0;
  /// Color each block by the mean of its central q x q square instead of the
  /// whole block.
  bool central_square = false;
};

RasterImage forward_observe(const RasterImage& image, const ObservationParams& params,
                            std::uint64_t seed = 0);

/// L2 norm of forward_observe(candidate) - observation over all channels.
double reconstruction_residual(const RasterImage& candidate, const RasterImage& observation,
                               int step);

enum class ResizeMethod { kNearest, kBilinear, kAreaAverage };

RasterImage resize_to(const RasterImage& image, int target_width, int target_height,
                      ResizeMethod method);

/// Squared L2 distance (sum of squared intensity differences, no square root).
double l2_distance(const RasterImage& a, const RasterImage& b);

/// PSNR in dB against a 255 peak; +infinity for identical images.
double psnr(const RasterImage& a, const RasterImage& b);

/// Nearest-neighbor block expansion by an integer factor.
RasterImage expand_blocks(const RasterImage& image, int step);

void require_supported_step(int step);

}  // namespace blocksr
