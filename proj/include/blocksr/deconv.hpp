#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "blocksr/image.hpp"

namespace blocksr {

/// Linear-motion point spread function. Taps are row-major, nonnegative and
/// sum to 1; the kernel center is (rows/2, cols/2) and both sizes are odd.
struct MotionKernel {
  int length = 0;
  double theta = 0.0;
  int rows = 1;
  int cols = 1;
  std::vector<double> taps{1.0};

  double at(int r, int c) const { return taps[static_cast<std::size_t>(r) * cols + c]; }
};

/// Anti-aliased segment of length max(L, 1) through the center at `theta`
/// degrees counterclockwise from horizontal. Weights fall off with the
/// perpendicular distance to the segment; theta is taken modulo 180.
MotionKernel motion_psf(int length, double theta);

/// Convolves the kernel with a 3x3 Gaussian (sigma 0.5) and renormalizes.
MotionKernel soften_kernel(const MotionKernel& kernel);

enum class Source { kDVC, kOFC };
enum class NoiseMode { kNo, kYes, kDarkOnly, kLightOnly, kAuto };

std::string to_string(Source source);
std::string to_string(NoiseMode noise);
std::optional<Source> parse_source(std::string_view text);
std::optional<NoiseMode> parse_noise(std::string_view text);

struct DeconvSettings {
  double gamma = 1.0;
  int length = 0;
  int theta = 0;
  Source source = Source::kDVC;
  int amount = 100;
  NoiseMode noise = NoiseMode::kNo;

  /// Throws a ParseError of kind kRange naming the offending field.
  void validate() const;

  friend bool operator==(const DeconvSettings&, const DeconvSettings&) = default;
};

/// Richardson-Lucy iteration count for an amount in percent.
int rl_iterations(int amount);

/// 3x3 median prefilter selected by the noise mode (replicated borders).
RealPlane noise_prefilter(const RealPlane& plane, NoiseMode noise);

/// Same-size convolution with replicated borders.
RealGrid convolve(const RealGrid& plane, const MotionKernel& kernel);

RealPlane richardson_lucy(const RealPlane& observed, const MotionKernel& kernel, int iterations);

/// Magnify by gamma (bilinear), prefilter, then Richardson-Lucy per channel.
RasterImage deconvolve(const RasterImage& image, const DeconvSettings& settings);

/// Blurs with motion_psf(L, theta), the forward model the deconvolution inverts.
RasterImage motion_blur(const RasterImage& image, int length, double theta);

struct SweepCell {
  int length = 0;
  int theta = 0;
  RasterImage preview;
  std::optional<double> objective;
};

/// Rows are lengths, columns thetas, cells stored row-major.
struct SweepGrid {
  std::vector<int> lengths;
  std::vector<int> thetas;
  std::vector<SweepCell> cells;

  const SweepCell& cell(std::size_t row, std::size_t col) const {
    return cells[row * thetas.size() + col];
  }
};

using CellScorer = std::function<double(const RasterImage&)>;

/// Deconvolves once per (L, theta) cell with the remaining settings taken from
/// `fixed`. When a scorer is given each cell carries its score. Cells are
/// evaluated concurrently and stored in grid order.
SweepGrid sweep(const RasterImage& image, double gamma, const std::vector<int>& lengths,
                const std::vector<int>& thetas, const DeconvSettings& fixed,
                const CellScorer& scorer = {});

/// Integer range lo..hi inclusive with the given stride.
std::vector<int> int_range(int lo, int hi, int stride = 1);

}  // namespace blocksr
