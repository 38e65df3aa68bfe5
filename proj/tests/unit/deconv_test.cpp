#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "blocksr/deconv.hpp"
#include "blocksr/error.hpp"
#include "oracles.hpp"

namespace blocksr {
namespace {

double tap_sum(const MotionKernel& k) { return std::accumulate(k.taps.begin(), k.taps.end(), 0.0); }

// Vertical bars of width 6 on a flat surround.
RasterImage bar_chart() {
  RasterImage img(48, 48, 1, 60);
  for (int y = 8; y < 40; ++y)
    for (int x = 8; x < 40; ++x) img.at(0, x, y) = (x / 6) % 2 ? 200 : 40;
  return img;
}

DeconvSettings settings(int length, int theta, int amount) {
  DeconvSettings d;
  d.length = length;
  d.theta = theta;
  d.amount = amount;
  return d;
}

TEST(MotionPsf, ZeroLengthIsIdentity) {
  for (int length : {0, 1}) {
    const MotionKernel k = motion_psf(length, 37.0);
    EXPECT_EQ(k.rows, 1);
    EXPECT_EQ(k.cols, 1);
    EXPECT_EQ(k.taps, std::vector<double>{1.0});
  }
}

TEST(MotionPsf, HorizontalLine) {
  const MotionKernel k = motion_psf(5, 0.0);
  EXPECT_EQ(k.rows, 1);
  EXPECT_EQ(k.cols, 5);
  for (double t : k.taps) EXPECT_NEAR(t, 0.2, 1e-12);
}

TEST(MotionPsf, VerticalLine) {
  const MotionKernel k = motion_psf(5, 90.0);
  EXPECT_EQ(k.rows, 5);
  EXPECT_EQ(k.cols, 1);
  for (double t : k.taps) EXPECT_NEAR(t, 0.2, 1e-12);
}

TEST(MotionPsf, MatchesPrintedMatrix) {
  const MotionKernel k = motion_psf(13, 105.0);
  ASSERT_EQ(k.rows, 13);
  ASSERT_EQ(k.cols, 5);
  double printed_sum = 0;
  for (int r = 0; r < 13; ++r)
    for (int c = 0; c < 5; ++c) {
      EXPECT_NEAR(k.at(r, c), oracle::kPrintedMotion13x105[r][c], 0.002) << r << "," << c;
      printed_sum += oracle::kPrintedMotion13x105[r][c];
    }
  EXPECT_NEAR(printed_sum, 1.0001, 1e-9);
  EXPECT_NEAR(tap_sum(k), 1.0, 1e-12);
  EXPECT_NEAR(k.at(0, 0), 0.0384, 0.002);
  EXPECT_NEAR(k.at(6, 2), 0.0755, 0.002);
}

TEST(MotionPsf, AngleIsPeriodic) {
  const MotionKernel a = motion_psf(9, 30.0);
  const MotionKernel b = motion_psf(9, 210.0);
  EXPECT_EQ(a.taps, b.taps);
  EXPECT_EQ(motion_psf(7, 0.0).taps, motion_psf(7, 180.0).taps);
}

TEST(MotionPsf, NormalizedAndOddForEveryGridCell) {
  for (int length = 0; length <= 20; ++length)
    for (int theta = 0; theta < 180; theta += 5) {
      const MotionKernel k = motion_psf(length, theta);
      EXPECT_NEAR(tap_sum(k), 1.0, 1e-12);
      EXPECT_EQ(k.rows % 2, 1);
      EXPECT_EQ(k.cols % 2, 1);
      for (double t : k.taps) EXPECT_GE(t, 0.0);
    }
}

TEST(SoftenKernel, GrowsByOneAndStaysNormalized) {
  const MotionKernel k = soften_kernel(motion_psf(5, 0.0));
  EXPECT_EQ(k.rows, 3);
  EXPECT_EQ(k.cols, 7);
  EXPECT_NEAR(tap_sum(k), 1.0, 1e-12);
}

TEST(RlIterations, FromAmount) {
  EXPECT_EQ(rl_iterations(0), 1);
  EXPECT_EQ(rl_iterations(25), 1);
  EXPECT_EQ(rl_iterations(100), 4);
  EXPECT_EQ(rl_iterations(300), 12);
}

TEST(Convolve, IdentityKernel) {
  RealGrid g(3, 2);
  std::iota(g.values.begin(), g.values.end(), 0.0);
  EXPECT_EQ(convolve(g, motion_psf(0, 0)).values, g.values);
}

TEST(Convolve, ReplicatedBorders) {
  RealGrid g(3, 1);
  g.values = {0.0, 3.0, 6.0};
  const RealGrid out = convolve(g, motion_psf(3, 0.0));
  EXPECT_NEAR(out.values[0], (0.0 + 0.0 + 3.0) / 3, 1e-12);
  EXPECT_NEAR(out.values[1], 3.0, 1e-12);
  EXPECT_NEAR(out.values[2], (3.0 + 6.0 + 6.0) / 3, 1e-12);
}

TEST(RichardsonLucy, ConservesFluxOnInteriorSupport) {
  const MotionKernel k = motion_psf(5, 45.0);
  RealGrid sharp(32, 32);
  for (int y = 10; y < 22; ++y)
    for (int x = 10; x < 22; ++x) sharp.at(x, y) = ((x + y) % 3) * 0.3;
  const RealPlane observed(32, 32, convolve(sharp, k).values);
  const double before = std::accumulate(observed.values().begin(), observed.values().end(), 0.0);
  for (int iterations = 1; iterations <= 12; ++iterations) {
    const RealPlane x = richardson_lucy(observed, k, iterations);
    const double after = std::accumulate(x.values().begin(), x.values().end(), 0.0);
    EXPECT_NEAR(after, before, 0.01 * before) << iterations;
  }
}

TEST(NoisePrefilter, ModesSelectPixels) {
  std::vector<double> v(5 * 5, 0.5);
  v[12] = 1.0;  // bright outlier
  v[6] = 0.0;   // dark outlier
  const RealPlane p(5, 5, v);
  EXPECT_EQ(noise_prefilter(p, NoiseMode::kNo).values()[12], 1.0);
  EXPECT_EQ(noise_prefilter(p, NoiseMode::kYes).values()[12], 0.5);
  EXPECT_EQ(noise_prefilter(p, NoiseMode::kYes).values()[6], 0.5);
  EXPECT_EQ(noise_prefilter(p, NoiseMode::kDarkOnly).values()[6], 0.5);
  EXPECT_EQ(noise_prefilter(p, NoiseMode::kDarkOnly).values()[12], 1.0);
  EXPECT_EQ(noise_prefilter(p, NoiseMode::kLightOnly).values()[12], 0.5);
  EXPECT_EQ(noise_prefilter(p, NoiseMode::kLightOnly).values()[6], 0.0);
}

TEST(Deconvolve, IdentityKernelIsFixedPoint) {
  const RasterImage img = oracle::random_image(16, 16, 3, 2);
  EXPECT_EQ(deconvolve(img, settings(0, 0, 100)), img);
}

TEST(Deconvolve, OutputSizeFollowsGamma) {
  DeconvSettings d = settings(3, 45, 25);
  d.gamma = 2.25;
  const RasterImage out = deconvolve(oracle::random_image(32, 32, 1, 1), d);
  EXPECT_EQ(out.width(), 72);
  EXPECT_EQ(out.height(), 72);
}

TEST(Deconvolve, TrueKernelRecoversDetail) {
  const RasterImage sharp = bar_chart();
  const RasterImage blurred = motion_blur(sharp, 9, 45.0);
  const RasterImage restored = deconvolve(blurred, settings(9, 45, 300));
  EXPECT_GE(psnr(restored, sharp), psnr(blurred, sharp) + 3.0);
}

TEST(Deconvolve, WrongAngleIsWorse) {
  const RasterImage sharp = bar_chart();
  const RasterImage blurred = motion_blur(sharp, 9, 45.0);
  EXPECT_LT(psnr(deconvolve(blurred, settings(9, 135, 300)), sharp),
            psnr(deconvolve(blurred, settings(9, 45, 300)), sharp));
}

TEST(DeconvSettings, ValidateNamesField) {
  const auto field_of = [](DeconvSettings d) {
    try {
      d.validate();
    } catch (const ParseError& e) {
      EXPECT_EQ(e.code(), ErrorCode::kRange);
      return e.field();
    }
    return std::string("none");
  };
  DeconvSettings d;
  EXPECT_EQ(field_of(d), "none");
  d.gamma = 5;
  EXPECT_EQ(field_of(d), "gamma");
  d = {};
  d.length = 21;
  EXPECT_EQ(field_of(d), "L");
  d = {};
  d.theta = -5;
  EXPECT_EQ(field_of(d), "theta");
  d = {};
  d.amount = 110;
  EXPECT_EQ(field_of(d), "amount");
}

TEST(SourceAndNoise, NamesRoundTrip) {
  for (Source s : {Source::kDVC, Source::kOFC}) EXPECT_EQ(parse_source(to_string(s)), s);
  for (NoiseMode n : {NoiseMode::kNo, NoiseMode::kYes, NoiseMode::kDarkOnly, NoiseMode::kLightOnly,
                      NoiseMode::kAuto}) {
    EXPECT_EQ(parse_noise(to_string(n)), n);
  }
  EXPECT_EQ(parse_noise("lo"), NoiseMode::kLightOnly);
  EXPECT_FALSE(parse_source("VHS").has_value());
}

TEST(Sweep, SingleCellEqualsDeconvolve) {
  const RasterImage img = oracle::random_image(16, 16, 1, 3);
  DeconvSettings fixed = settings(0, 0, 50);
  const SweepGrid g = sweep(img, 2.0, {7}, {30}, fixed);
  ASSERT_EQ(g.cells.size(), 1u);
  fixed.gamma = 2.0;
  fixed.length = 7;
  fixed.theta = 30;
  EXPECT_EQ(g.cells[0].preview, deconvolve(img, fixed));
  EXPECT_FALSE(g.cells[0].objective.has_value());
}

TEST(Sweep, GridOrderAndScores) {
  const RasterImage img = oracle::random_image(12, 12, 1, 4);
  const std::vector<int> lengths{3, 5};
  const std::vector<int> thetas{0, 45, 90};
  int calls = 0;
  const SweepGrid g = sweep(img, 1.0, lengths, thetas, settings(0, 0, 25), [&](const RasterImage& r) {
    return static_cast<double>(r.at(0, 0, 0)) + 0 * calls;
  });
  ASSERT_EQ(g.cells.size(), 6u);
  for (std::size_t r = 0; r < lengths.size(); ++r)
    for (std::size_t c = 0; c < thetas.size(); ++c) {
      EXPECT_EQ(g.cell(r, c).length, lengths[r]);
      EXPECT_EQ(g.cell(r, c).theta, thetas[c]);
      ASSERT_TRUE(g.cell(r, c).objective.has_value());
      EXPECT_EQ(*g.cell(r, c).objective, g.cell(r, c).preview.at(0, 0, 0));
    }
}

TEST(Sweep, ArgminAtTrueKernel) {
  const RasterImage sharp = bar_chart();
  const RasterImage blurred = motion_blur(sharp, 9, 45.0);
  const SweepGrid g = sweep(blurred, 1.0, int_range(5, 13, 2), int_range(0, 175, 15), settings(0, 0, 300),
                            [&](const RasterImage& r) { return l2_distance(r, sharp); });
  const SweepCell* best = &g.cells.front();
  for (const SweepCell& c : g.cells)
    if (*c.objective < *best->objective) best = &c;
  EXPECT_EQ(best->length, 9);
  EXPECT_EQ(best->theta, 45);
}

TEST(IntRange, Inclusive) {
  EXPECT_EQ(int_range(0, 10, 5), (std::vector<int>{0, 5, 10}));
  EXPECT_EQ(int_range(3, 2), std::vector<int>{});
  EXPECT_THROW(int_range(0, 1, 0), Error);
}

}  // namespace
}  // namespace blocksr
