#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "blocksr/image.hpp"

namespace blocksr {

/// Biorthogonal filter bank given by its symmetric low-pass filters; the
/// high-pass filters follow from g[n] = (-1)^n f[n] and g~[n] = (-1)^n h[n].
struct WaveletFilterPair {
  std::string name;
  std::vector<double> analysis_low;   // full, odd length, symmetric
  std::vector<double> synthesis_low;  // full, odd length, symmetric

  /// Builds the full filters from half filters listed center tap first.
  static WaveletFilterPair from_half(std::string name, const std::vector<double>& analysis_half,
                                     const std::vector<double>& synthesis_half);

  /// Throws unless both filters are odd, symmetric, and a random signal
  /// survives one analysis/synthesis level within 1e-6.
  void validate() const;
};

/// The 9/7 pair of JPEG 2000, normalized so that each low-pass sums to sqrt(2).
WaveletFilterPair villasenor1();

/// Parses `name; a0 a1 ...; s0 s1 ...` lines (half filters, center tap first).
/// Each pair is validated as it is read.
std::vector<WaveletFilterPair> parse_filter_text(std::string_view text);
std::vector<WaveletFilterPair> load_filter_file(const std::filesystem::path& path);

/// Built-in pairs plus those of the filter file (BLOCKSR_FILTER_FILE overrides
/// the compiled-in location). Loaded once.
const std::vector<WaveletFilterPair>& registered_bases();
const WaveletFilterPair& find_basis(std::string_view name);

/// Largest level count the transform supports for this size (0 if odd).
int max_levels(int width, int height);

/// Separable 2-D transform in the usual nested layout: after each level the
/// low band occupies the top-left quarter of the previous region.
RealGrid dwt2(const RealGrid& plane, const WaveletFilterPair& basis, int levels);
RealGrid dwt2(const RealPlane& plane, const WaveletFilterPair& basis, int levels);
RealGrid idwt2(const RealGrid& coeffs, const WaveletFilterPair& basis, int levels);
/// Exact adjoint of idwt2 (differs from dwt2 because the bank is biorthogonal).
RealGrid idwt2_adjoint(const RealGrid& image, const WaveletFilterPair& basis, int levels);

/// Keeps the round(percent/100 * N) largest-magnitude coefficients of each
/// channel. levels <= 0 selects min(3, max_levels).
RasterImage topk_approx(const RasterImage& image, const WaveletFilterPair& basis, double percent,
                        int levels = 0);

struct DecayRow {
  std::size_t rank = 0;
  double magnitude = 0.0;
  double cumulative = 0.0;
};

/// Coefficient magnitudes over all channels in descending order with running
/// sums. levels <= 0 selects the full depth.
std::vector<DecayRow> decay_curve(const RasterImage& image, const WaveletFilterPair& basis,
                                  int levels = 0);
std::string decay_csv(const std::vector<DecayRow>& rows);

struct SparseProblem {
  /// Pixel values at unknown positions are ignored.
  RasterImage observed;
  /// One entry per pixel, nonzero where the pixel is known (shared by channels).
  std::vector<std::uint8_t> mask;
  WaveletFilterPair basis = villasenor1();
  double mu = 0.1;
  int iterations = 500;
  /// levels <= 0 selects the full depth.
  int levels = 0;
};

struct InpaintResult {
  RasterImage image;
  /// Objective ||M Psi s - y||^2 + mu ||s||_1 per channel and iteration,
  /// starting with the initial point.
  std::vector<std::vector<double>> objective;
};

/// L1 inpainting by monotone accelerated iterative soft thresholding in the
/// synthesis coefficients, with the step taken from a power-iteration estimate
/// of ||M Psi||^2. Known pixels are re-imposed on the output.
InpaintResult ista_inpaint(const SparseProblem& problem);

/// Bernoulli mask with the given fraction of known pixels.
std::vector<std::uint8_t> random_mask(int width, int height, double fraction, std::uint64_t seed);

/// Largest normalized absolute inner product between two distinct columns.
double coherence(const Eigen::MatrixXd& theta);

/// Smallest delta with (1 - delta)|x|^2 <= |Phi x|^2 <= (1 + delta)|x|^2 for all
/// k-sparse x, by enumerating every k-column support (at most 16 columns).
double estimate_rip_delta(const Eigen::MatrixXd& phi, int k);

}  // namespace blocksr
