#pragma once

#include <compare>
#include <cstdint>
#include <vector>

#include "blocksr/image.hpp"

namespace blocksr {

/// Gates for the right (p2), below (p3) and diagonal (p4) neighbor averages.
/// 0 never interpolates, 255 always does.
struct ThresholdTriple {
  int p2 = 0;
  int p3 = 0;
  int p4 = 0;

  void validate() const;
  static constexpr ThresholdTriple always() { return {255, 255, 255}; }

  friend auto operator<=>(const ThresholdTriple&, const ThresholdTriple&) = default;
};

enum class Geometry { kEvenStep, kStep3 };

struct InterpLevel {
  int level = 1;
  Geometry geometry = Geometry::kEvenStep;

  friend bool operator==(const InterpLevel&, const InterpLevel&) = default;
};

/// kStrict rejects images whose size is not a multiple of the block size;
/// kPartialBlocks treats the ragged right/bottom blocks as truncated blocks.
enum class EdgePolicy { kStrict, kPartialBlocks };

/// Which quadrants of each block take a neighbor average. One byte per block
/// and channel: bit 0 = B2 (right), bit 1 = B3 (below), bit 2 = B4 (diagonal).
struct DecisionMask {
  int grid_width = 0;
  int grid_height = 0;
  int channels = 0;
  std::vector<std::uint8_t> bits;

  std::uint8_t at(int c, int bx, int by) const {
    return bits[(static_cast<std::size_t>(c) * grid_height + by) * grid_width + bx];
  }
};

/// One conditional interpolation pass over `block` x `block` cells. Each cell
/// splits at s = ceil(block/2): B1 (top-left s x s) is kept, B2/B3/B4 take the
/// rounded average of the cell with its right/below/diagonal neighbor when the
/// representative difference is within p2/p3/p4. Representatives are rounded
/// cell means read from the input, so the result does not depend on order.
RasterImage conditional_pass(const RasterImage& image, int block, ThresholdTriple t,
                             EdgePolicy edges = EdgePolicy::kStrict);

DecisionMask conditional_decisions(const RasterImage& image, int block, ThresholdTriple t,
                                   EdgePolicy edges = EdgePolicy::kStrict);

/// LEVEL 1 on even step x step blocks (quadrants of size step/2).
RasterImage level1_pass(const RasterImage& image, int step, ThresholdTriple t);

/// LEVEL 2 on 2x2 cells, i.e. level1_pass at step 2.
RasterImage level2_pass(const RasterImage& image, ThresholdTriple t);

/// LEVEL 1 on 3x3 blocks: B1 is 2x2, B2 is the 2-pixel right column, B3 the
/// 2-pixel bottom row and B4 the corner pixel.
RasterImage level1_step3_pass(const RasterImage& image, ThresholdTriple t);

}  // namespace blocksr
