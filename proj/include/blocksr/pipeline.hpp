#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "blocksr/codec.hpp"
#include "blocksr/deconv.hpp"
#include "blocksr/interp.hpp"

namespace blocksr {

struct CondInterp {
  int level = 1;
  Geometry geometry = Geometry::kEvenStep;
  ThresholdTriple t;

  friend bool operator==(const CondInterp&, const CondInterp&) = default;
};

struct Magnify {
  double gamma = 1.0;

  friend bool operator==(const Magnify&, const Magnify&) = default;
};

/// Deconvolution stage. Magnification is a separate stage, so settings.gamma
/// must be 1 inside a pipeline.
struct Deconvolve {
  DeconvSettings settings;

  friend bool operator==(const Deconvolve&, const Deconvolve&) = default;
};

using Stage = std::variant<CondInterp, Magnify, Deconvolve>;

struct PipelineSpec {
  std::string name;
  std::vector<Stage> stages;

  /// Checks every stage and the ordering rule: at most one Magnify with
  /// gamma > 1, placed before the first Deconvolve.
  void validate() const;

  /// Product of all magnification factors.
  double gamma() const;

  friend bool operator==(const PipelineSpec&, const PipelineSpec&) = default;
};

inline CondInterp level1(int p2, int p3, int p4) { return {1, Geometry::kEvenStep, {p2, p3, p4}}; }
inline CondInterp level2(int p2, int p3, int p4) { return {2, Geometry::kEvenStep, {p2, p3, p4}}; }

/// Applies one stage. LEVEL 1 passes use `step` blocks (the input granularity),
/// LEVEL 2 passes use 2x2 cells; ragged edges after magnification are handled
/// as partial blocks.
RasterImage apply_stage(const RasterImage& image, const Stage& stage, int step);

struct RunResult {
  RasterImage output;
  /// Output area-averaged back to the original input size.
  RasterImage metrics;
};

RunResult run(const PipelineSpec& spec, const BlockAverageImage& input);
/// Same as run() but starting from an already expanded raster.
RasterImage run_stages(const PipelineSpec& spec, const RasterImage& expanded, int step);

std::string serialize_stage(const Stage& stage);
std::string serialize(const PipelineSpec& spec);

/// Parses one stage line (no comment). Errors carry `line` and a 1-based column.
Stage parse_stage(std::string_view text, int line = 1);
PipelineSpec parse_pipeline(std::string_view text);

using MatrixRow = std::array<std::string, 3>;

/// Converts the parameter-matrix layout (threshold rows, presmooth rows,
/// (gamma, L, theta) rows each followed by a (source, amount, noise) row) into
/// a stage list. Degree and percent signs are accepted.
PipelineSpec import_parameter_matrix(const std::vector<MatrixRow>& rows, std::string name = {});

/// Reads matrix rows from CSV text: three comma- or whitespace-separated cells
/// per line, blank lines and '#' comments ignored.
std::vector<MatrixRow> parse_matrix_csv(std::string_view text);

PipelineSpec load_pipeline(const std::filesystem::path& path);

/// Preset names (file stems of *.txt) in `dir`, sorted.
std::vector<std::string> list_presets(const std::filesystem::path& dir);
std::filesystem::path preset_path(const std::filesystem::path& dir, const std::string& name);

/// Directory with the shipped presets; BLOCKSR_PRESET_DIR overrides the
/// compiled-in default.
std::filesystem::path default_preset_dir();

/// Reads a whole file into a string.
std::string read_text_file(const std::filesystem::path& path);

}  // namespace blocksr
