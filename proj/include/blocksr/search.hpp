#pragma once

#include <functional>
#include <string>
#include <vector>

#include "blocksr/pipeline.hpp"

namespace blocksr {

/// R = 1 / sum of Michelson contrasts (max - min) / (max + min) over the
/// window x window tiles of every channel. Returns +infinity when the sum is 0.
double contrast_regularizer(const RasterImage& image, int window = 8);

struct ObjectiveBreakdown {
  double fidelity = 0.0;
  double regularizer = 0.0;
  double regularizer_term = 0.0;
  double total = 0.0;
};

/// fidelity = squared L2 distance between the area-averaged candidate and the
/// reference; total = fidelity + lambda * R. With lambda = 0 the regularizer
/// term is 0 even when R is infinite.
ObjectiveBreakdown objective(const RasterImage& candidate, const RasterImage& reference,
                             double lambda);

struct SearchConfig {
  double lambda = 0.1;
  /// Stop once the total objective is at or below this value.
  double threshold = 0.0;
  int max_occurrences = 4;
  double min_relative_improvement = 1e-3;

  /// Threshold values combined into (p2, p3, p4) triples, unless `triples` is
  /// nonempty, in which case it is used as given.
  std::vector<int> p_values = int_range(0, 255, 5);
  std::vector<ThresholdTriple> triples;
  /// Magnification candidates, tried on the first occurrence only.
  std::vector<double> gammas{1.0, 2.0, 2.25, 3.0, 3.5, 4.0};
  std::vector<int> lengths = int_range(0, 20);
  std::vector<int> thetas = int_range(0, 175, 5);
  std::vector<Source> sources{Source::kDVC, Source::kOFC};
  std::vector<int> amounts = int_range(0, 300, 25);
  std::vector<NoiseMode> noises{NoiseMode::kNo, NoiseMode::kYes, NoiseMode::kDarkOnly,
                                NoiseMode::kLightOnly, NoiseMode::kAuto};

  void validate() const;
  std::vector<ThresholdTriple> triple_grid() const;
};

struct TraceRow {
  int iteration = 0;
  ObjectiveBreakdown objective;
};

struct SearchState {
  PipelineSpec spec;
  ObjectiveBreakdown objective;
  int iteration = 0;
  int occurrences = 0;
  RasterImage image;
  std::vector<TraceRow> trace;
  bool cancelled = false;
};

/// Called after every committed step; returning false stops the search.
using SearchProgress = std::function<bool(const SearchState&)>;

/// Greedy alternating grid search. Each occurrence first picks the best
/// conditional interpolation (followed by the presmoothing pass), then the best
/// deconvolution; every choice includes a no-op, so the objective never
/// increases. Ties go to the earliest candidate in lexicographic order, with
/// the no-op first. A final threshold search ends with the LEVEL 2 pass.
SearchState optimize(const BlockAverageImage& input, const RasterImage& reference,
                     const SearchConfig& cfg, const SearchProgress& progress = {});

/// CSV with header iteration,fidelity,R,total.
std::string trace_csv(const std::vector<TraceRow>& trace);

}  // namespace blocksr
