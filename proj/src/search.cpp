#include "blocksr/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "blocksr/error.hpp"
#include "blocksr/parallel.hpp"
#include "blocksr/ranges.hpp"

namespace blocksr {

double contrast_regularizer(const RasterImage& image, int window) {
  if (window < 1) throw Error(ErrorCode::kInvalidArgument, "window must be >= 1");
  if (image.empty() || image.width() % window != 0 || image.height() % window != 0) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                    " is not divisible into " + std::to_string(window) + "x" +
                    std::to_string(window) + " windows");
  }
  // Compensated sum, so repeated equal contrasts add up without drift.
  double total = 0.0;
  double carry = 0.0;
  const auto add = [&](double v) {
    const double t = total + v;
    carry += std::abs(total) >= std::abs(v) ? (total - t) + v : (v - t) + total;
    total = t;
  };
  for (int c = 0; c < image.channels(); ++c) {
    for (int wy = 0; wy < image.height(); wy += window) {
      for (int wx = 0; wx < image.width(); wx += window) {
        int lo = 255;
        int hi = 0;
        for (int y = wy; y < wy + window; ++y)
          for (int x = wx; x < wx + window; ++x) {
            lo = std::min<int>(lo, image.at(c, x, y));
            hi = std::max<int>(hi, image.at(c, x, y));
          }
        if (hi + lo > 0) add(static_cast<double>(hi - lo) / (hi + lo));
      }
    }
  }
  total += carry;
  return total > 0.0 ? 1.0 / total : std::numeric_limits<double>::infinity();
}

ObjectiveBreakdown objective(const RasterImage& candidate, const RasterImage& reference,
                             double lambda) {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "lambda must be >= 0");
  if (candidate.channels() != reference.channels()) {
    throw Error(ErrorCode::kShapeMismatch, "candidate and reference channel counts differ");
  }
  const RasterImage resized = resize_to(candidate, reference.width(), reference.height(),
                                        ResizeMethod::kAreaAverage);
  ObjectiveBreakdown o;
  o.fidelity = l2_distance(resized, reference);
  o.regularizer = contrast_regularizer(resized);
  o.regularizer_term = lambda == 0.0 ? 0.0 : lambda * o.regularizer;
  o.total = o.fidelity + o.regularizer_term;
  return o;
}

void SearchConfig::validate() const {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "lambda must be >= 0");
  if (max_occurrences < 0) throw Error(ErrorCode::kInvalidArgument, "max_occurrences must be >= 0");
  const auto require = [](bool nonempty, const char* name) {
    if (!nonempty) throw Error(ErrorCode::kInvalidArgument, std::string(name) + " grid is empty");
  };
  require(!triples.empty() || !p_values.empty(), "threshold");
  require(!gammas.empty(), "gamma");
  require(!lengths.empty(), "L");
  require(!thetas.empty(), "theta");
  require(!sources.empty(), "source");
  require(!amounts.empty(), "amount");
  require(!noises.empty(), "noise");
  for (const auto& t : triple_grid()) t.validate();
  DeconvSettings probe;
  for (double g : gammas) {
    probe.gamma = g;
    probe.validate();
  }
  probe.gamma = 1.0;
  for (int l : lengths) {
    probe.length = l;
    probe.validate();
  }
  for (int t : thetas) {
    probe.theta = t;
    probe.validate();
  }
  for (int a : amounts) {
    probe.amount = a;
    probe.validate();
  }
}

std::vector<ThresholdTriple> SearchConfig::triple_grid() const {
  if (!triples.empty()) return triples;
  std::vector<int> p = p_values;
  std::sort(p.begin(), p.end());
  p.erase(std::unique(p.begin(), p.end()), p.end());
  std::vector<ThresholdTriple> out;
  out.reserve(p.size() * p.size() * p.size());
  for (int a : p)
    for (int b : p)
      for (int c : p) out.push_back({a, b, c});
  return out;
}

namespace {

using Candidate = std::vector<Stage>;

struct Choice {
  std::size_t index = 0;
  ObjectiveBreakdown objective;
};

// Evaluates every candidate (index 0 is the no-op) and returns the first one
// with the smallest total.
Choice best_candidate(const std::vector<Candidate>& candidates, const RasterImage& current,
                      const RasterImage& reference, int step, double lambda,
                      const ObjectiveBreakdown& current_objective) {
  std::vector<ObjectiveBreakdown> scores(candidates.size());
  scores[0] = current_objective;
  parallel_for(candidates.size() - 1, [&](std::size_t k) {
    const std::size_t i = k + 1;
    RasterImage image = current;
    for (const Stage& stage : candidates[i]) image = apply_stage(image, stage, step);
    scores[i] = objective(image, reference, lambda);
  });
  Choice best{0, scores[0]};
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i].total < best.objective.total) best = {i, scores[i]};
  return best;
}

std::vector<Candidate> interp_candidates(const SearchConfig& cfg, bool final_round) {
  std::vector<Candidate> out{{}};
  for (const ThresholdTriple& t : cfg.triple_grid()) {
    Candidate c{level1(t.p2, t.p3, t.p4), level1(255, 255, 255)};
    if (final_round) c.push_back(level2(255, 255, 255));
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<Candidate> deconv_candidates(const SearchConfig& cfg, bool allow_gamma) {
  std::vector<double> gammas = allow_gamma ? cfg.gammas : std::vector<double>{1.0};
  std::sort(gammas.begin(), gammas.end());
  gammas.erase(std::unique(gammas.begin(), gammas.end()), gammas.end());
  std::vector<int> lengths = cfg.lengths;
  std::sort(lengths.begin(), lengths.end());
  std::vector<int> thetas = cfg.thetas;
  std::sort(thetas.begin(), thetas.end());
  std::vector<int> amounts = cfg.amounts;
  std::sort(amounts.begin(), amounts.end());

  std::vector<Candidate> out{{}};
  for (double gamma : gammas) {
    bool identity_kernel_done = false;
    for (int length : lengths) {
      for (int theta : thetas) {
        // Every L <= 1 kernel is the identity; later copies could only tie.
        if (length <= 1) {
          if (identity_kernel_done) continue;
          identity_kernel_done = true;
        }
        for (Source source : cfg.sources)
          for (int amount : amounts)
            for (NoiseMode noise : cfg.noises) {
              Candidate c;
              if (gamma > 1.0) c.push_back(Magnify{gamma});
              DeconvSettings d;
              d.length = length;
              d.theta = theta;
              d.source = source;
              d.amount = amount;
              d.noise = noise;
              c.push_back(Deconvolve{d});
              out.push_back(std::move(c));
            }
      }
    }
  }
  return out;
}

}  // namespace

SearchState optimize(const BlockAverageImage& input, const RasterImage& reference,
                     const SearchConfig& cfg, const SearchProgress& progress) {
  input.validate();
  cfg.validate();
  if (reference.width() != input.orig_width || reference.height() != input.orig_height ||
      reference.channels() != input.channels) {
    throw Error(ErrorCode::kShapeMismatch, "reference must match the original image size");
  }
  const int step = input.step;

  SearchState state;
  state.spec.name = "search";
  state.image = expand(input);
  state.objective = objective(state.image, reference, cfg.lambda);
  state.trace.push_back({0, state.objective});

  const auto report = [&] {
    if (progress && !progress(state)) state.cancelled = true;
    return !state.cancelled;
  };
  const auto commit = [&](const Candidate& stages, const ObjectiveBreakdown& o) {
    for (const Stage& s : stages) {
      state.image = apply_stage(state.image, s, step);
      state.spec.stages.push_back(s);
    }
    state.objective = o;
  };
  if (!report()) return state;

  const std::vector<Candidate> interp = interp_candidates(cfg, false);
  while (state.objective.total > cfg.threshold && state.occurrences < cfg.max_occurrences) {
    const double before = state.objective.total;
    ++state.occurrences;

    Choice c = best_candidate(interp, state.image, reference, step, cfg.lambda, state.objective);
    commit(interp[c.index], c.objective);
    if (!report()) return state;

    // Magnification is only offered with the first deconvolution.
    const std::vector<Candidate> deconv = deconv_candidates(cfg, state.occurrences == 1);
    c = best_candidate(deconv, state.image, reference, step, cfg.lambda, state.objective);
    commit(deconv[c.index], c.objective);

    ++state.iteration;
    state.trace.push_back({state.iteration, state.objective});
    if (!report()) return state;

    const double gain = before - state.objective.total;
    if (!(gain > cfg.min_relative_improvement * std::abs(before))) break;
  }

  const std::vector<Candidate> last = interp_candidates(cfg, true);
  const Choice c = best_candidate(last, state.image, reference, step, cfg.lambda, state.objective);
  commit(last[c.index], c.objective);
  ++state.iteration;
  state.trace.push_back({state.iteration, state.objective});
  report();
  return state;
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  out << "iteration,fidelity,R,total\n";
  for (const TraceRow& row : trace) {
    out << row.iteration << ',' << format_real(row.objective.fidelity) << ','
        << format_real(row.objective.regularizer) << ',' << format_real(row.objective.total) << '\n';
  }
  return out.str();
}

}  // namespace blocksr
