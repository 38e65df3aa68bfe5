#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "blocksr/codec.hpp"
#include "blocksr/deconv.hpp"
#include "blocksr/error.hpp"
#include "blocksr/pipeline.hpp"
#include "blocksr/png_io.hpp"
#include "blocksr/ranges.hpp"
#include "blocksr/search.hpp"
#include "blocksr/service.hpp"
#include "blocksr/sparsity.hpp"

namespace blocksr::cli {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) { return format_real(v); }

std::string fixed4(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 4);
  return std::string(buf, r.ptr);
}

bool has_ext(const std::string& path, const char* ext) {
  return fs::path(path).extension() == ext;
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path);
}

// Writes to `path`, or to `out` when the path is empty or "-".
void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    write_file(path, text);
  }
}

BlockAverageImage read_lab_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_lab(f);
}

/// A .lab file, a means grid PNG (grid = true) or a full-size PNG compressed at `step`.
BlockAverageImage read_block_input(const std::string& path, int step, bool grid) {
  if (has_ext(path, ".lab")) return read_lab_file(path);
  const RasterImage png = read_png(path);
  return grid ? BlockAverageImage::from_grid(png, step) : compress(png, step);
}

void require_output(const std::string& path) {
  if (path.empty()) throw Error(ErrorCode::kInvalidArgument, "an output path is required (--out)");
}

Source source_of(const std::string& s) {
  if (const auto v = parse_source(s)) return *v;
  throw ParseError(ErrorCode::kRange, "unknown source '" + s + "'", 0, 0, "source");
}

NoiseMode noise_of(const std::string& s) {
  if (const auto v = parse_noise(s)) return *v;
  throw ParseError(ErrorCode::kRange, "unknown noise mode '" + s + "'", 0, 0, "noise");
}

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Tiles equally sized images into a grid with `gap` white pixels between cells.
RasterImage tile(const std::vector<RasterImage>& cells, std::size_t cols, int gap = 2) {
  if (cells.empty()) return {};
  const int w = cells.front().width();
  const int h = cells.front().height();
  const int ch = cells.front().channels();
  const std::size_t rows = (cells.size() + cols - 1) / cols;
  RasterImage sheet(static_cast<int>(cols) * (w + gap) - gap, static_cast<int>(rows) * (h + gap) - gap,
                    ch, 255);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const int x0 = static_cast<int>(i % cols) * (w + gap);
    const int y0 = static_cast<int>(i / cols) * (h + gap);
    for (int c = 0; c < ch; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) sheet.at(c, x0 + x, y0 + y) = cells[i].at(c, x, y);
  }
  return sheet;
}

Eigen::MatrixXd read_matrix(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    line = line.substr(0, line.find('#'));
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream cells(line);
    std::vector<double> row;
    std::string cell;
    while (cells >> cell) row.push_back(parse_real_list(cell, "matrix").front());
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorCode::kInvalidArgument, path + " holds no matrix");
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size()) {
      throw Error(ErrorCode::kShapeMismatch, path + ": row " + std::to_string(r + 1) + " has " +
                                                 std::to_string(rows[r].size()) + " entries");
    }
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

/// Gaussian matrix of shape "RxC" drawn with the given seed.
Eigen::MatrixXd random_matrix(const std::string& shape, std::uint64_t seed) {
  const std::size_t x = shape.find('x');
  if (x == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "--random expects RxC");
  const auto r = parse_int_list(shape.substr(0, x), "random");
  const auto c = parse_int_list(shape.substr(x + 1), "random");
  if (r.size() != 1 || c.size() != 1 || r[0] < 1 || c[0] < 1) {
    throw Error(ErrorCode::kInvalidArgument, "--random expects RxC with positive sizes");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Eigen::MatrixXd m(r[0], c[0]);
  for (int j = 0; j < c[0]; ++j)
    for (int i = 0; i < r[0]; ++i) m(i, j) = d(rng);
  return m;
}

struct DeconvFlags {
  double gamma = 1.0;
  int length = 0;
  int theta = 0;
  std::string source = "DVC";
  int amount = 100;
  std::string noise = "NO";

  void add(CLI::App* app, bool with_kernel) {
    app->add_option("--gamma", gamma, "Magnification factor applied first")->capture_default_str();
    if (with_kernel) {
      app->add_option("--L", length, "Motion length in pixels (0..20)")->capture_default_str();
      app->add_option("--theta", theta, "Motion angle in degrees (0..180)")->capture_default_str();
    }
    app->add_option("--source", source, "Source camera: DVC or OFC")->capture_default_str();
    app->add_option("--amount", amount, "Amount in percent, a multiple of 25 (0..300)")
        ->capture_default_str();
    app->add_option("--noise", noise, "Noise prefilter: NO, YES, DO, LO or AUTO")->capture_default_str();
  }

  DeconvSettings settings() const {
    DeconvSettings d;
    d.gamma = gamma;
    d.length = length;
    d.theta = theta;
    d.source = source_of(source);
    d.amount = amount;
    d.noise = noise_of(noise);
    d.validate();
    return d;
  }
};

struct Cli {
  std::ostream& out;
  std::ostream& err;
  CLI::App app{"Block-average image codec, conditional interpolation, motion deconvolution and "
               "sparse wavelet tools.",
               "blocksr"};
  std::vector<std::pair<CLI::App*, std::function<void()>>> commands;

  // Shared option storage; each subcommand binds the fields it needs.
  std::string input, output, out_path, reference, spec_path, preset, name, basis = "villasenor-1";
  std::string format = "png";
  std::uint64_t seed = 0;
  int step = 4;
  bool grid = false;
  DeconvFlags deconv;

  Cli(std::ostream& o, std::ostream& e) : out(o), err(e) {
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");
    add_compress();
    add_expand();
    add_interp();
    add_psf();
    add_deconv();
    add_sweep();
    add_pipeline_run();
    add_pipeline_import();
    add_search();
    add_wavelet_topk();
    add_wavelet_decay();
    add_inpaint();
    add_coherence();
    add_rip();
    add_serve();
    add_fig_sweep();
    add_fig_decay();
    add_fig_topk();
  }

  CLI::App* command(const char* name, const char* help, std::function<void()> action) {
    CLI::App* sub = app.add_subcommand(name, help);
    commands.emplace_back(sub, std::move(action));
    return sub;
  }

  void add_output(CLI::App* sub, const char* help = "Output file") {
    sub->add_option("--out,-o", out_path, help);
  }

  void add_format(CLI::App* sub, const char* help) {
    sub->add_option("--format", format, help)->check(CLI::IsMember({"png", "csv"}))->capture_default_str();
  }

  void add_seed(CLI::App* sub) {
    sub->add_option("--seed", seed, "Random seed")->capture_default_str();
  }

  // input [output]; the output may also be given with --out.
  void add_io(CLI::App* sub, const char* in_help, const char* out_help) {
    sub->add_option("input", input, in_help)->required();
    sub->add_option("output", output, out_help);
    add_output(sub, out_help);
  }

  std::string output_path() const {
    const std::string& p = !output.empty() ? output : out_path;
    require_output(p);
    return p;
  }

  void add_compress() {
    auto* sub = command("compress", "Block-average a PNG into a .lab file", [this] {
      const BlockAverageImage b = compress(read_png(input), step);
      const auto bytes = encode_lab(b);
      write_file(output_path(), std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    });
    add_io(sub, "Input PNG", "Output .lab file");
    sub->add_option("--step", step, "Block size (2, 3 or 4)")->check(CLI::Range(2, 4))->capture_default_str();
  }

  void add_expand() {
    auto* sub = command("expand", "Expand a .lab file to a block-constant PNG",
                        [this] { write_png(expand(read_lab_file(input)), output_path()); });
    add_io(sub, "Input .lab file", "Output PNG");
  }

  int level = 1;
  bool step3 = false;
  int p2 = 255, p3 = 255, p4 = 255;

  void add_interp() {
    auto* sub = command("interp", "Apply one conditional interpolation pass", [this] {
      RasterImage image;
      int block = step;
      if (has_ext(input, ".lab")) {
        const BlockAverageImage b = read_lab_file(input);
        image = expand(b);
        block = b.step;
      } else {
        image = read_png(input);
      }
      const CondInterp stage{level, step3 ? Geometry::kStep3 : Geometry::kEvenStep, {p2, p3, p4}};
      stage.t.validate();
      write_png(apply_stage(image, stage, block), output_path());
    });
    add_io(sub, "Input .lab file or block-constant PNG", "Output PNG");
    sub->add_option("--level", level, "1: blocks of the input step, 2: 2x2 cells")
        ->check(CLI::IsMember({1, 2}))
        ->capture_default_str();
    sub->add_flag("--step3", step3, "Use the 3x3 block geometry (LEVEL 1 only)");
    sub->add_option("--step", step, "Block size of a PNG input (ignored for .lab)")
        ->check(CLI::Range(2, 4))
        ->capture_default_str();
    sub->add_option("--p2", p2, "Right-neighbor threshold (0..255)")->capture_default_str();
    sub->add_option("--p3", p3, "Below-neighbor threshold (0..255)")->capture_default_str();
    sub->add_option("--p4", p4, "Diagonal-neighbor threshold (0..255)")->capture_default_str();
  }

  bool print = false;
  bool soften = false;

  void add_psf() {
    auto* sub = command("psf", "Print or save a motion blur kernel", [this] {
      MotionKernel k = motion_psf(deconv.length, deconv.theta);
      if (soften) k = soften_kernel(k);
      std::ostringstream text;
      for (int r = 0; r < k.rows; ++r) {
        for (int c = 0; c < k.cols; ++c) {
          if (format == "csv") {
            text << (c ? "," : "") << fmt(k.at(r, c));
          } else {
            text << (c ? " " : "") << fixed4(k.at(r, c));
          }
        }
        text << '\n';
      }
      if (print || out_path.empty()) out << text.str();
      if (!out_path.empty()) {
        if (format == "png") {
          // Scaled so the largest tap is white.
          const double peak = *std::max_element(k.taps.begin(), k.taps.end());
          RasterImage img(k.cols, k.rows, 1);
          for (int r = 0; r < k.rows; ++r)
            for (int c = 0; c < k.cols; ++c) img.at(0, c, r) = quantize(255.0 * k.at(r, c) / peak);
          write_png(img, out_path);
        } else {
          write_file(out_path, text.str());
        }
      }
    });
    sub->add_option("--L", deconv.length, "Motion length in pixels")->capture_default_str();
    sub->add_option("--theta", deconv.theta, "Motion angle in degrees")->capture_default_str();
    sub->add_flag("--print", print, "Print the matrix to stdout (4 decimals, or full precision with --format csv)");
    sub->add_flag("--soften", soften, "Apply the 3x3 Gaussian used for the OFC source");
    add_output(sub, "Write the kernel to this file (PNG image or CSV text)");
    sub->add_option("--format", format, "File format for --out: png or csv (csv also switches --print to full precision)")
        ->check(CLI::IsMember({"png", "csv"}))
        ->capture_default_str();
  }

  void add_deconv() {
    auto* sub = command("deconv", "Magnify and deconvolve a motion-blurred image", [this] {
      write_png(deconvolve(read_png(input), deconv.settings()), output_path());
    });
    add_io(sub, "Input PNG", "Output PNG");
    deconv.add(sub, true);
  }

  std::string lengths_text = "0..20";
  std::string thetas_text = "0..175:5";
  double lambda = 0.1;

  void run_sweep(const std::string& image_path, const std::string& csv_path) {
    const RasterImage image = has_ext(input, ".lab") ? expand(read_lab_file(input)) : read_png(input);
    DeconvSettings fixed = deconv.settings();
    const std::vector<int> lengths = parse_int_list(lengths_text, "L");
    const std::vector<int> thetas = parse_int_list(thetas_text, "theta", 5);
    DeconvSettings probe = fixed;
    for (int l : lengths) {
      probe.length = l;
      probe.validate();
    }
    for (int t : thetas) {
      probe.theta = t;
      probe.validate();
    }
    CellScorer scorer;
    RasterImage ref;
    if (!reference.empty()) {
      ref = read_png(reference);
      scorer = [&](const RasterImage& img) { return objective(img, ref, lambda).total; };
    }
    const SweepGrid grid = sweep(image, fixed.gamma, lengths, thetas, fixed, scorer);
    if (!image_path.empty()) {
      std::vector<RasterImage> previews;
      for (const SweepCell& c : grid.cells) previews.push_back(c.preview);
      write_png(tile(previews, grid.thetas.size()), image_path);
    }
    if (!csv_path.empty()) {
      std::ostringstream csv;
      csv << "row,col,L,theta,objective\n";
      for (std::size_t r = 0; r < grid.lengths.size(); ++r)
        for (std::size_t c = 0; c < grid.thetas.size(); ++c) {
          const SweepCell& cell = grid.cell(r, c);
          csv << r << ',' << c << ',' << cell.length << ',' << cell.theta << ','
              << (cell.objective ? fmt(*cell.objective) : "") << '\n';
        }
      emit(csv.str(), csv_path, out);
    }
  }

  void add_sweep_flags(CLI::App* sub) {
    sub->add_option("input", input, "Input .lab file or PNG")->required();
    sub->add_option("--L", lengths_text, "Motion lengths: list or range a..b[:stride]")->capture_default_str();
    sub->add_option("--theta", thetas_text, "Angles: list or range a..b[:stride] (stride defaults to 5)")
        ->capture_default_str();
    deconv.add(sub, false);
    sub->add_option("--reference", reference, "Reference PNG; scores each cell with the search objective");
    sub->add_option("--lambda", lambda, "Regularizer weight for the scores")->capture_default_str();
  }

  void add_sweep() {
    auto* sub = command("sweep", "Deconvolve over a grid of motion lengths and angles", [this] {
      if (format == "png") {
        require_output(out_path);
        run_sweep(out_path, "");
      } else {
        run_sweep("", out_path.empty() ? "-" : out_path);
      }
    });
    add_sweep_flags(sub);
    add_output(sub, "Output file: tiled grid PNG (rows L, columns theta) or CSV of cell scores (stdout when omitted)");
    add_format(sub, "png or csv");
  }

  void add_fig_sweep() {
    auto* sub = command("fig-sweep", "Write the motion deconvolution grid and its scores to a directory", [this] {
      require_output(out_path);
      fs::create_directories(out_path);
      run_sweep((fs::path(out_path) / "sweep.png").string(), (fs::path(out_path) / "sweep.csv").string());
    });
    add_sweep_flags(sub);
    add_output(sub, "Output directory (sweep.png, sweep.csv)");
  }

  std::string metrics_path;

  void add_pipeline_run() {
    auto* sub = command("pipeline-run", "Run a pipeline file or preset on an input", [this] {
      if (spec_path.empty() == preset.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "give exactly one of --spec and --preset");
      }
      const PipelineSpec spec =
          load_pipeline(spec_path.empty() ? preset_path(default_preset_dir(), preset) : fs::path(spec_path));
      const RunResult r = run(spec, read_block_input(input, step, grid));
      write_png(r.output, output_path());
      if (!metrics_path.empty()) write_png(r.metrics, metrics_path);
    });
    sub->add_option("--spec", spec_path, "Pipeline text file");
    sub->add_option("--preset", preset, "Name of a shipped preset");
    add_io(sub, "Input .lab file or PNG", "Output PNG");
    sub->add_option("--step", step, "Block size used for a PNG input")->check(CLI::Range(2, 4))->capture_default_str();
    sub->add_flag("--grid", grid, "The PNG input is the means grid rather than a full-size image");
    sub->add_option("--metrics", metrics_path, "Also write the output area-averaged to the input size");
  }

  void add_pipeline_import() {
    auto* sub = command("pipeline-import", "Convert a parameter-matrix CSV into pipeline text", [this] {
      const std::string stem = name.empty() ? fs::path(input).stem().string() : name;
      emit(serialize(import_parameter_matrix(parse_matrix_csv(read_text_file(input)), stem)), out_path, out);
    });
    sub->add_option("input", input, "Matrix CSV (three cells per row)")->required();
    sub->add_option("--name", name, "Pipeline name (defaults to the file stem)");
    add_output(sub, "Output pipeline file (stdout when omitted)");
  }

  SearchConfig search_cfg;
  std::string p_text = "0..255:5";
  std::vector<std::string> triples_text;
  std::string gammas_text = "1,2,2.25,3,3.5,4";
  std::string search_lengths = "0..20";
  std::string search_thetas = "0..175:5";
  std::string sources_text = "DVC,OFC";
  std::string amounts_text = "0..300:25";
  std::string noises_text = "NO,YES,DO,LO,AUTO";
  std::string trace_path, image_path;
  bool verbose = false;

  void add_search() {
    auto* sub = command("search", "Greedy parameter search against a reference image", [this] {
      SearchConfig cfg = search_cfg;
      cfg.p_values = parse_int_list(p_text, "p");
      for (const std::string& t : triples_text) {
        const auto v = parse_int_list(t, "triple");
        if (v.size() != 3) throw Error(ErrorCode::kInvalidArgument, "--triple expects p2,p3,p4");
        cfg.triples.push_back({v[0], v[1], v[2]});
      }
      cfg.gammas = parse_real_list(gammas_text, "gamma");
      cfg.lengths = parse_int_list(search_lengths, "L");
      cfg.thetas = parse_int_list(search_thetas, "theta", 5);
      cfg.amounts = parse_int_list(amounts_text, "amount", 25);
      cfg.sources.clear();
      for (const auto& s : split_names(sources_text)) cfg.sources.push_back(source_of(s));
      cfg.noises.clear();
      for (const auto& s : split_names(noises_text)) cfg.noises.push_back(noise_of(s));

      const BlockAverageImage lr = read_block_input(input, step, grid);
      const RasterImage ref = read_png(reference);
      std::size_t reported = 0;
      SearchState state = optimize(lr, ref, cfg, [&](const SearchState& s) {
        for (; verbose && reported < s.trace.size(); ++reported) {
          err << "iteration " << s.trace[reported].iteration << " total "
              << fmt(s.trace[reported].objective.total) << '\n';
        }
        return true;
      });
      state.spec.name = name.empty() ? "search" : name;
      emit(serialize(state.spec), out_path, out);
      if (!trace_path.empty()) write_file(trace_path, trace_csv(state.trace));
      if (!image_path.empty()) write_png(state.image, image_path);
    });
    sub->add_option("--input", input, "Low-resolution .lab file or PNG")->required();
    sub->add_option("--reference", reference, "Reference PNG at the original size")->required();
    sub->add_option("--step", step, "Block size used for a PNG input")->check(CLI::Range(2, 4))->capture_default_str();
    sub->add_flag("--grid", grid, "The PNG input is the means grid rather than a full-size image");
    sub->add_option("--lambda", search_cfg.lambda, "Regularizer weight")->capture_default_str();
    sub->add_option("--threshold", search_cfg.threshold, "Stop once the objective is at or below this")
        ->capture_default_str();
    sub->add_option("--max-occurrences", search_cfg.max_occurrences, "Maximum interp/deconv rounds")
        ->capture_default_str();
    sub->add_option("--min-improvement", search_cfg.min_relative_improvement,
                    "Stop when a round improves the objective by less than this fraction")
        ->capture_default_str();
    sub->add_option("--p", p_text, "Threshold values combined into (p2,p3,p4) triples")->capture_default_str();
    sub->add_option("--triple", triples_text, "Explicit p2,p3,p4 triple (repeatable; replaces --p)");
    sub->add_option("--gamma", gammas_text, "Magnification candidates")->capture_default_str();
    sub->add_option("--L", search_lengths, "Motion length candidates")->capture_default_str();
    sub->add_option("--theta", search_thetas, "Angle candidates")->capture_default_str();
    sub->add_option("--source", sources_text, "Source candidates")->capture_default_str();
    sub->add_option("--amount", amounts_text, "Amount candidates")->capture_default_str();
    sub->add_option("--noise", noises_text, "Noise mode candidates")->capture_default_str();
    sub->add_option("--name", name, "Name written into the pipeline text");
    add_output(sub, "Output pipeline file (stdout when omitted)");
    sub->add_option("--trace", trace_path, "Write the objective trace as CSV");
    sub->add_option("--image", image_path, "Write the final image as PNG");
    sub->add_flag("--verbose,-v", verbose, "Report progress on stderr");
  }

  double percent = 11.0;
  int levels = 0;

  void add_wavelet_topk() {
    auto* sub = command("wavelet-topk", "Keep the largest wavelet coefficients and reconstruct", [this] {
      const RasterImage image = read_png(input);
      const RasterImage approx = topk_approx(image, find_basis(basis), percent, levels);
      write_png(approx, output_path());
      err << "psnr " << fmt(psnr(image, approx)) << '\n';
    });
    add_io(sub, "Input PNG", "Output PNG");
    sub->add_option("--basis", basis, "Wavelet basis name")->capture_default_str();
    sub->add_option("--percent", percent, "Percentage of coefficients kept")->capture_default_str();
    sub->add_option("--levels", levels, "Decomposition levels (0: min(3, maximum))")->capture_default_str();
  }

  void add_wavelet_decay() {
    auto* sub = command("wavelet-decay", "Sorted coefficient magnitudes and running sums as CSV", [this] {
      emit(decay_csv(decay_curve(read_png(input), find_basis(basis), levels)), out_path, out);
    });
    sub->add_option("input", input, "Input PNG")->required();
    sub->add_option("--basis", basis, "Wavelet basis name")->capture_default_str();
    sub->add_option("--levels", levels, "Decomposition levels (0: full depth)")->capture_default_str();
    add_output(sub, "Output CSV (stdout when omitted)");
  }

  double fraction = 0.6;
  double mu = 0.1;
  int iterations = 500;
  std::string masked_path;

  void add_inpaint() {
    auto* sub = command("inpaint", "Recover an image from a random subset of its pixels", [this] {
      SparseProblem p;
      p.observed = read_png(input);
      p.mask = random_mask(p.observed.width(), p.observed.height(), fraction, seed);
      p.basis = find_basis(basis);
      p.mu = mu;
      p.iterations = iterations;
      p.levels = levels;
      const InpaintResult r = ista_inpaint(p);
      write_png(r.image, output_path());
      if (!masked_path.empty()) {
        RasterImage masked = p.observed;
        for (int c = 0; c < masked.channels(); ++c)
          for (std::size_t i = 0; i < masked.plane_size(); ++i)
            if (!p.mask[i]) masked.plane(c)[i] = 0;
        write_png(masked, masked_path);
      }
      err << "psnr " << fmt(psnr(p.observed, r.image)) << '\n';
    });
    add_io(sub, "Input PNG (the ground truth; pixels are hidden at random)", "Output PNG");
    sub->add_option("--fraction", fraction, "Fraction of known pixels")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    add_seed(sub);
    sub->add_option("--basis", basis, "Wavelet basis name")->capture_default_str();
    sub->add_option("--mu", mu, "L1 weight")->capture_default_str();
    sub->add_option("--iterations", iterations, "Iteration count")->capture_default_str();
    sub->add_option("--levels", levels, "Decomposition levels (0: full depth)")->capture_default_str();
    sub->add_option("--masked", masked_path, "Also write the observation with unknown pixels set to 0");
  }

  std::string random_shape;
  int sparsity = 2;

  Eigen::MatrixXd matrix_input() const {
    if (input.empty() == random_shape.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "give exactly one of a matrix file and --random");
    }
    return input.empty() ? random_matrix(random_shape, seed) : read_matrix(input);
  }

  void add_matrix_input(CLI::App* sub) {
    sub->add_option("input", input, "Matrix file (rows of comma- or space-separated numbers)");
    sub->add_option("--random", random_shape, "Use a Gaussian matrix of shape RxC instead");
    add_seed(sub);
    add_output(sub, "Write the value to this file (stdout when omitted)");
  }

  void add_coherence() {
    auto* sub = command("coherence", "Largest normalized inner product between two columns",
                        [this] { emit(fmt(coherence(matrix_input())) + '\n', out_path, out); });
    add_matrix_input(sub);
  }

  void add_rip() {
    auto* sub = command("rip", "Restricted isometry constant by enumerating supports",
                        [this] { emit(fmt(estimate_rip_delta(matrix_input(), sparsity)) + '\n', out_path, out); });
    add_matrix_input(sub);
    sub->add_option("--k", sparsity, "Sparsity level")->capture_default_str();
  }

  ServiceOptions service;
  long ttl_seconds = 3600;
  std::string preset_dir, ui_dir;

  void add_serve() {
    auto* sub = command("serve", "Start the HTTP service", [this] {
      service.ttl = std::chrono::seconds(ttl_seconds);
      service.preset_dir = preset_dir.empty() ? default_preset_dir() : fs::path(preset_dir);
      service.ui_dir = ui_dir;
      Service server(service);
      const int port = server.bind();
      out << "listening on " << service.host << ':' << port << std::endl;
      server.serve();
    });
    sub->add_option("--host", service.host, "Address to bind")->capture_default_str();
    sub->add_option("--port", service.port, "TCP port (0 picks a free port)")->capture_default_str();
    sub->add_option("--ttl", ttl_seconds, "Idle session lifetime in seconds")->capture_default_str();
    sub->add_option("--max-upload", service.max_upload, "Largest accepted request body in bytes")
        ->capture_default_str();
    sub->add_option("--preset-dir", preset_dir, "Directory of preset pipeline files");
    sub->add_option("--ui-dir", ui_dir, "Directory of static UI files served at /");
  }

  void add_fig_decay() {
    auto* sub = command("fig-decay", "Coefficient decay of every registered basis as one CSV", [this] {
      const RasterImage image = read_png(input);
      std::vector<std::vector<DecayRow>> curves;
      std::ostringstream csv;
      csv << "rank";
      for (const WaveletFilterPair& b : registered_bases()) {
        curves.push_back(decay_curve(image, b, levels));
        csv << ',' << b.name << ',' << b.name << "_cumulative";
      }
      csv << '\n';
      for (std::size_t i = 0; i < curves.front().size(); ++i) {
        csv << curves.front()[i].rank;
        for (const auto& curve : curves) csv << ',' << fmt(curve[i].magnitude) << ',' << fmt(curve[i].cumulative);
        csv << '\n';
      }
      emit(csv.str(), out_path, out);
    });
    sub->add_option("input", input, "Input PNG")->required();
    sub->add_option("--levels", levels, "Decomposition levels (0: full depth)")->capture_default_str();
    add_output(sub, "Output CSV (stdout when omitted)");
  }

  std::string percents_text = "6..23";

  void add_fig_topk() {
    auto* sub = command("fig-topk", "Top-k approximations over a range of percentages", [this] {
      require_output(out_path);
      fs::create_directories(out_path);
      const RasterImage image = read_png(input);
      const WaveletFilterPair& b = find_basis(basis);
      std::vector<RasterImage> cells;
      std::ostringstream csv;
      csv << "percent,psnr\n";
      for (int p : parse_int_list(percents_text, "percent")) {
        cells.push_back(topk_approx(image, b, p, levels));
        csv << p << ',' << fmt(psnr(image, cells.back())) << '\n';
      }
      write_png(tile(cells, 3), fs::path(out_path) / "topk.png");
      write_file((fs::path(out_path) / "topk.csv").string(), csv.str());
    });
    sub->add_option("input", input, "Input PNG")->required();
    sub->add_option("--basis", basis, "Wavelet basis name")->capture_default_str();
    sub->add_option("--percent", percents_text, "Percentages (three per row in the grid)")->capture_default_str();
    sub->add_option("--levels", levels, "Decomposition levels (0: min(3, maximum))")->capture_default_str();
    add_output(sub, "Output directory (topk.png, topk.csv)");
  }

  int dispatch() {
    for (auto& [sub, action] : commands) {
      if (app.got_subcommand(sub)) {
        action();
        return 0;
      }
    }
    return 2;
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Cli cli(out, err);
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    cli.app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    return cli.app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << cli.app.help();
    return 2;
  }
  try {
    return cli.dispatch();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace blocksr::cli
