#include "blocksr/interp.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#include "blocksr/error.hpp"

namespace blocksr {

void ThresholdTriple::validate() const {
  const auto check = [](int value, const char* name) {
    if (value < 0 || value > 255) {
      throw ParseError(ErrorCode::kRange,
                       std::string(name) + " must be within 0..255, got " + std::to_string(value),
                       0, 0, name);
    }
  };
  check(p2, "p2");
  check(p3, "p3");
  check(p4, "p4");
}

namespace {

struct BlockGrid {
  int block = 0;
  int split = 0;
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<int> reps;  // rounded cell means, plane-major

  int rep(int c, int bx, int by) const {
    return reps[(static_cast<std::size_t>(c) * height + by) * width + bx];
  }
};

BlockGrid make_grid(const RasterImage& image, int block, ThresholdTriple t, EdgePolicy edges) {
  t.validate();
  if (block < 2) {
    throw Error(ErrorCode::kUnsupportedStep, "block size must be >= 2");
  }
  if (image.empty()) throw Error(ErrorCode::kInvalidArgument, "empty image");
  if (edges == EdgePolicy::kStrict &&
      (image.width() % block != 0 || image.height() % block != 0)) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                    " is not organized in " + std::to_string(block) + "x" +
                    std::to_string(block) + " blocks");
  }
  BlockGrid g;
  g.block = block;
  g.split = (block + 1) / 2;
  g.width = (image.width() + block - 1) / block;
  g.height = (image.height() + block - 1) / block;
  g.channels = image.channels();
  g.reps.resize(static_cast<std::size_t>(g.channels) * g.width * g.height);
  for (int c = 0; c < g.channels; ++c) {
    for (int by = 0; by < g.height; ++by) {
      for (int bx = 0; bx < g.width; ++bx) {
        const int x1 = std::min(image.width(), (bx + 1) * block);
        const int y1 = std::min(image.height(), (by + 1) * block);
        long sum = 0;
        long count = 0;
        for (int y = by * block; y < y1; ++y)
          for (int x = bx * block; x < x1; ++x, ++count) sum += image.at(c, x, y);
        g.reps[(static_cast<std::size_t>(c) * g.height + by) * g.width + bx] =
            static_cast<int>((2 * sum + count) / (2 * count));
      }
    }
  }
  return g;
}

bool gate(int threshold, int a, int b) { return threshold > 0 && std::abs(a - b) <= threshold; }

std::uint8_t decide(const BlockGrid& g, ThresholdTriple t, int c, int bx, int by) {
  const int b = g.rep(c, bx, by);
  const bool right = bx + 1 < g.width;
  const bool below = by + 1 < g.height;
  std::uint8_t bits = 0;
  if (right && gate(t.p2, b, g.rep(c, bx + 1, by))) bits |= 1;
  if (below && gate(t.p3, b, g.rep(c, bx, by + 1))) bits |= 2;
  if (right && below && gate(t.p4, b, g.rep(c, bx + 1, by + 1))) bits |= 4;
  return bits;
}

void fill(RasterImage& out, int c, int x0, int y0, int x1, int y1, int value) {
  x1 = std::min(x1, out.width());
  y1 = std::min(y1, out.height());
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) out.at(c, x, y) = static_cast<Intensity>(value);
}

int average(int a, int b) { return (a + b + 1) / 2; }

}  // namespace

DecisionMask conditional_decisions(const RasterImage& image, int block, ThresholdTriple t,
                                   EdgePolicy edges) {
  const BlockGrid g = make_grid(image, block, t, edges);
  DecisionMask mask{g.width, g.height, g.channels, {}};
  mask.bits.resize(g.reps.size());
  for (int c = 0; c < g.channels; ++c)
    for (int by = 0; by < g.height; ++by)
      for (int bx = 0; bx < g.width; ++bx)
        mask.bits[(static_cast<std::size_t>(c) * g.height + by) * g.width + bx] =
            decide(g, t, c, bx, by);
  return mask;
}

RasterImage conditional_pass(const RasterImage& image, int block, ThresholdTriple t,
                             EdgePolicy edges) {
  const BlockGrid g = make_grid(image, block, t, edges);
  RasterImage out = image;
  const int s = g.split;
  for (int c = 0; c < g.channels; ++c) {
    for (int by = 0; by < g.height; ++by) {
      for (int bx = 0; bx < g.width; ++bx) {
        const std::uint8_t bits = decide(g, t, c, bx, by);
        if (bits == 0) continue;
        const int b = g.rep(c, bx, by);
        const int x0 = bx * block;
        const int y0 = by * block;
        if (bits & 1) fill(out, c, x0 + s, y0, x0 + block, y0 + s, average(b, g.rep(c, bx + 1, by)));
        if (bits & 2) fill(out, c, x0, y0 + s, x0 + s, y0 + block, average(b, g.rep(c, bx, by + 1)));
        if (bits & 4)
          fill(out, c, x0 + s, y0 + s, x0 + block, y0 + block,
               average(b, g.rep(c, bx + 1, by + 1)));
      }
    }
  }
  return out;
}

RasterImage level1_pass(const RasterImage& image, int step, ThresholdTriple t) {
  if (step < 2 || step % 2 != 0) {
    throw Error(ErrorCode::kUnsupportedStep,
                "LEVEL 1 needs an even step, got " + std::to_string(step));
  }
  return conditional_pass(image, step, t, EdgePolicy::kStrict);
}

RasterImage level2_pass(const RasterImage& image, ThresholdTriple t) {
  return conditional_pass(image, 2, t, EdgePolicy::kStrict);
}

RasterImage level1_step3_pass(const RasterImage& image, ThresholdTriple t) {
  return conditional_pass(image, 3, t, EdgePolicy::kStrict);
}

}  // namespace blocksr
