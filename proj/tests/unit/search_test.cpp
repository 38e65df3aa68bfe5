#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "blocksr/codec.hpp"
#include "blocksr/error.hpp"
#include "blocksr/search.hpp"
#include "oracles.hpp"

namespace blocksr {
namespace {

// Independent evaluation of squared distance + lambda * R for same-size images.
double hand_objective(const RasterImage& a, const RasterImage& b, double lambda) {
  double se = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = double(a.data()[i]) - double(b.data()[i]);
    se += d * d;
  }
  double contrasts = 0.0;
  for (int c = 0; c < a.channels(); ++c)
    for (int ty = 0; ty < a.height() / 8; ++ty)
      for (int tx = 0; tx < a.width() / 8; ++tx) {
        int lo = 255, hi = 0;
        for (int i = 0; i < 64; ++i) {
          const int v = a.at(c, tx * 8 + i % 8, ty * 8 + i / 8);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        if (hi + lo > 0) contrasts += double(hi - lo) / double(hi + lo);
      }
  return se + lambda / contrasts;
}

SearchConfig tiny_config() {
  SearchConfig cfg;
  cfg.p_values = {0, 100, 255};
  cfg.gammas = {1.0, 2.0};
  cfg.lengths = {0, 5};
  cfg.thetas = {0, 90};
  cfg.sources = {Source::kDVC};
  cfg.amounts = {100};
  cfg.noises = {NoiseMode::kNo};
  cfg.max_occurrences = 2;
  return cfg;
}

TEST(Regularizer, SingleFullContrastWindow) {
  RasterImage img(8, 8, 1, 0);
  img.at(0, 7, 0) = 255;
  EXPECT_EQ(contrast_regularizer(img), 1.0);
}

TEST(Regularizer, SixteenWindowsOfOneThird) {
  RasterImage img(32, 32, 1, 200);
  for (int y = 0; y < 32; y += 8)
    for (int x = 0; x < 32; x += 8) img.at(0, x + 5, y + 7) = 100;
  EXPECT_EQ(contrast_regularizer(img), 0.1875);
}

TEST(Regularizer, FlatImageIsInfinite) {
  EXPECT_EQ(contrast_regularizer(RasterImage(16, 16, 3, 40)), std::numeric_limits<double>::infinity());
  EXPECT_EQ(contrast_regularizer(RasterImage(8, 8, 1, 0)), std::numeric_limits<double>::infinity());
}

TEST(Regularizer, ChannelsAreSummed) {
  RasterImage img(8, 8, 3, 0);
  img.at(0, 0, 0) = 255;
  img.at(2, 0, 0) = 255;
  EXPECT_EQ(contrast_regularizer(img), 0.5);
}

TEST(Regularizer, RejectsIndivisibleSize) {
  EXPECT_THROW(contrast_regularizer(RasterImage(12, 8, 1, 9)), Error);
  EXPECT_THROW(contrast_regularizer(RasterImage(8, 8, 1, 9), 0), Error);
}

TEST(Objective, IdenticalImages) {
  RasterImage ref(32, 32, 1, 0);
  for (int y = 0; y < 32; y += 8)
    for (int x = 0; x < 32; x += 8) ref.at(0, x, y) = 255;
  EXPECT_EQ(objective(ref, ref, 0.0).total, 0.0);
  const ObjectiveBreakdown o = objective(ref, ref, 1.0);
  EXPECT_EQ(o.fidelity, 0.0);
  EXPECT_EQ(o.total, 1.0 / 16.0);
}

TEST(Objective, ZeroLambdaIgnoresInfiniteRegularizer) {
  const RasterImage flat(8, 8, 1, 3);
  const ObjectiveBreakdown o = objective(flat, flat, 0.0);
  EXPECT_TRUE(std::isinf(o.regularizer));
  EXPECT_EQ(o.regularizer_term, 0.0);
  EXPECT_EQ(o.total, 0.0);
  EXPECT_TRUE(std::isinf(objective(flat, flat, 0.5).total));
}

TEST(Objective, RandomPairMatchesHandComputation) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const RasterImage a = oracle::random_image(32, 32, 3, seed);
    const RasterImage b = oracle::random_image(32, 32, 3, seed + 100);
    for (double lambda : {0.0, 0.1, 3.0}) {
      const ObjectiveBreakdown o = objective(a, b, lambda);
      EXPECT_NEAR(o.total, hand_objective(a, b, lambda), 1e-9 * o.total);
      EXPECT_NEAR(o.total - o.fidelity, lambda * o.regularizer, 1e-9 * o.total);
    }
  }
}

TEST(Objective, LargerCandidateIsAreaAveraged) {
  const RasterImage ref = oracle::random_image(16, 16, 1, 4);
  const RasterImage big = expand_blocks(ref, 2);
  EXPECT_EQ(objective(big, ref, 0.0).fidelity, 0.0);
  EXPECT_THROW(objective(RasterImage(16, 16, 3, 0), ref, 0.0), Error);
  EXPECT_THROW(objective(ref, ref, -1.0), Error);
}

TEST(SearchConfigTest, TripleGrid) {
  SearchConfig cfg;
  cfg.p_values = {5, 0, 5};
  const auto grid = cfg.triple_grid();
  ASSERT_EQ(grid.size(), 8u);
  EXPECT_EQ(grid.front(), (ThresholdTriple{0, 0, 0}));
  EXPECT_EQ(grid[1], (ThresholdTriple{0, 0, 5}));
  EXPECT_EQ(grid.back(), (ThresholdTriple{5, 5, 5}));
  cfg.triples = {{1, 2, 3}};
  EXPECT_EQ(cfg.triple_grid(), cfg.triples);
  EXPECT_EQ(SearchConfig{}.triple_grid().size(), 52u * 52u * 52u);
}

TEST(SearchConfigTest, Validation) {
  EXPECT_NO_THROW(SearchConfig{}.validate());
  SearchConfig cfg;
  cfg.lambda = -0.1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.lengths.clear();
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.amounts = {30};
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.gammas = {9.0};
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.p_values = {256};
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Optimize, ExpandedReferenceKeepsIdentity) {
  const BlockAverageImage input = compress(oracle::rectangles(32, 3), 4);
  SearchConfig cfg = tiny_config();
  cfg.lambda = 0.0;
  const SearchState s = optimize(input, expand(input), cfg);
  EXPECT_EQ(s.objective.fidelity, 0.0);
  EXPECT_EQ(s.objective.total, 0.0);
  for (const Stage& stage : s.spec.stages) {
    const auto* interp = std::get_if<CondInterp>(&stage);
    ASSERT_NE(interp, nullptr) << serialize(s.spec);
    // Either a rejected triple (identity) or the presmoothing pass.
    const ThresholdTriple t = interp->t;
    EXPECT_TRUE(t == (ThresholdTriple{0, 0, 0}) || t == (ThresholdTriple{255, 255, 255}));
  }
  EXPECT_EQ(run(s.spec, input).metrics, expand(input)) << serialize(s.spec);
}

TEST(Optimize, TraceIsNonIncreasing) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const RasterImage reference = oracle::rectangles(32, seed + 20);
    const SearchConfig cfg = tiny_config();
    const SearchState s = optimize(compress(reference, 4), reference, cfg);
    ASSERT_FALSE(s.trace.empty());
    for (std::size_t i = 1; i < s.trace.size(); ++i)
      EXPECT_LE(s.trace[i].objective.total, s.trace[i - 1].objective.total) << seed;
    EXPECT_LE(s.occurrences, cfg.max_occurrences);
    EXPECT_EQ(s.trace.back().objective.total, s.objective.total);
  }
}

TEST(Optimize, StateMatchesRerun) {
  const RasterImage reference = oracle::rectangles(32, 9);
  const BlockAverageImage input = compress(reference, 4);
  const SearchConfig cfg = tiny_config();
  const SearchState s = optimize(input, reference, cfg);
  const RunResult r = run(s.spec, input);
  EXPECT_EQ(r.output, s.image);
  EXPECT_NEAR(objective(r.output, reference, cfg.lambda).total, s.objective.total, 1e-9);
  EXPECT_EQ(optimize(input, reference, cfg).spec, s.spec);
}

TEST(Optimize, RecoversPlantedThresholds) {
  const BlockAverageImage input = compress(oracle::rectangles(32, 14), 4);
  const PipelineSpec planted{"p", {level1(60, 0, 255), level1(255, 255, 255)}};
  const RasterImage reference = run(planted, input).metrics;
  SearchConfig cfg;
  cfg.lambda = 0.0;
  cfg.triples = {{0, 0, 0}, {60, 0, 255}, {255, 0, 60}};
  cfg.gammas = {1.0};
  cfg.lengths = {0};
  cfg.thetas = {0};
  cfg.sources = {Source::kDVC};
  cfg.amounts = {0};
  cfg.noises = {NoiseMode::kNo};
  cfg.max_occurrences = 1;
  const SearchState s = optimize(input, reference, cfg);
  ASSERT_GE(s.spec.stages.size(), 2u);
  EXPECT_EQ(s.spec.stages[0], Stage{level1(60, 0, 255)}) << serialize(s.spec);
  EXPECT_EQ(s.objective.fidelity, 0.0);
}

TEST(Optimize, ProgressCanStop) {
  const RasterImage reference = oracle::rectangles(32, 5);
  int calls = 0;
  const SearchState s = optimize(compress(reference, 4), reference, tiny_config(),
                                 [&](const SearchState&) { return ++calls < 1; });
  EXPECT_EQ(calls, 1);
  EXPECT_TRUE(s.cancelled);
}

TEST(Optimize, RejectsMismatchedReference) {
  const BlockAverageImage input = compress(oracle::rectangles(32, 5), 4);
  EXPECT_THROW(optimize(input, RasterImage(24, 24, 1, 0), tiny_config()), Error);
  SearchConfig cfg = tiny_config();
  cfg.thetas.clear();
  EXPECT_THROW(optimize(input, expand(input), cfg), Error);
}

TEST(TraceCsv, Format) {
  std::vector<TraceRow> trace(2);
  trace[0].objective = {4.0, 0.5, 0.05, 4.05};
  trace[1].iteration = 1;
  trace[1].objective = {2.0, 0.25, 0.025, 2.025};
  EXPECT_EQ(trace_csv(trace), "iteration,fidelity,R,total\n0,4,0.5,4.05\n1,2,0.25,2.025\n");
}

}  // namespace
}  // namespace blocksr
