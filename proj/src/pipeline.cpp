#include "blocksr/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "blocksr/error.hpp"
#include "blocksr/ranges.hpp"

#ifndef BLOCKSR_PRESET_DIR
#define BLOCKSR_PRESET_DIR "presets"
#endif

namespace blocksr {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void range_error(const std::string& field, const std::string& message, int line = 0,
                              int column = 0) {
  throw ParseError(ErrorCode::kRange, field + " " + message, line, column, field);
}

void validate_gamma(double gamma) {
  if (!(gamma >= 1.0 && gamma <= 4.0)) range_error("gamma", "must be within 1..4");
}

std::optional<int> to_int(std::string_view s) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> to_real(std::string_view s) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

struct Token {
  std::string_view text;
  int column;  // 1-based
};

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) tokens.push_back({line.substr(start, i - start), static_cast<int>(start) + 1});
  }
  return tokens;
}

// key=value arguments of one stage line, checked against the allowed keys.
class Arguments {
 public:
  Arguments(const std::vector<Token>& tokens, std::vector<std::string> allowed,
            std::vector<std::string> optional, int line, int end_column)
      : line_(line), end_column_(end_column) {
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const Token& tok = tokens[i];
      const auto eq = tok.text.find('=');
      if (eq == std::string_view::npos || eq == 0) {
        throw ParseError(ErrorCode::kSyntax, "expected key=value, got '" + std::string(tok.text) + "'",
                         line, tok.column);
      }
      const std::string key(tok.text.substr(0, eq));
      const bool known = std::find(allowed.begin(), allowed.end(), key) != allowed.end() ||
                         std::find(optional.begin(), optional.end(), key) != optional.end();
      if (!known) {
        throw ParseError(ErrorCode::kSyntax, "unknown parameter '" + key + "'", line, tok.column,
                         key);
      }
      if (values_.count(key) != 0) {
        throw ParseError(ErrorCode::kSyntax, "duplicate parameter '" + key + "'", line, tok.column,
                         key);
      }
      values_[key] = {tok.text.substr(eq + 1), tok.column + static_cast<int>(eq) + 1};
    }
    for (const auto& key : allowed) {
      if (values_.count(key) == 0) {
        throw ParseError(ErrorCode::kSyntax, "missing parameter '" + key + "'", line, end_column,
                         key);
      }
    }
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  Token raw(const std::string& key) const { return values_.at(key); }

  int integer(const std::string& key, int lo, int hi) const {
    const Token tok = raw(key);
    const auto v = to_int(tok.text);
    if (!v) {
      throw ParseError(ErrorCode::kSyntax,
                       key + " expects an integer, got '" + std::string(tok.text) + "'", line_,
                       tok.column, key);
    }
    if (*v < lo || *v > hi) {
      range_error(key, "=" + std::to_string(*v) + " is outside " + std::to_string(lo) + ".." +
                           std::to_string(hi),
                  line_, tok.column);
    }
    return *v;
  }

  double real(const std::string& key) const {
    const Token tok = raw(key);
    const auto v = to_real(tok.text);
    if (!v) {
      throw ParseError(ErrorCode::kSyntax,
                       key + " expects a number, got '" + std::string(tok.text) + "'", line_,
                       tok.column, key);
    }
    return *v;
  }

  int line() const { return line_; }
  int end_column() const { return end_column_; }

 private:
  int line_;
  int end_column_;
  std::map<std::string, Token> values_;
};

ThresholdTriple parse_triple(const Arguments& args) {
  return {args.integer("p2", 0, 255), args.integer("p3", 0, 255), args.integer("p4", 0, 255)};
}

}  // namespace

void PipelineSpec::validate() const {
  bool magnified = false;
  bool deconvolved = false;
  for (const Stage& stage : stages) {
    std::visit(overloaded{
                   [&](const CondInterp& s) {
                     s.t.validate();
                     if (s.level != 1 && s.level != 2) range_error("level", "must be 1 or 2");
                     if (s.level == 2 && s.geometry != Geometry::kEvenStep) {
                       throw Error(ErrorCode::kGeometryMismatch,
                                   "LEVEL 2 runs on 2x2 cells only");
                     }
                   },
                   [&](const Magnify& s) {
                     validate_gamma(s.gamma);
                     if (s.gamma > 1.0) {
                       if (magnified) range_error("gamma", "only one magnification is allowed");
                       if (deconvolved) {
                         range_error("gamma", "magnification must precede the first deconvolution");
                       }
                       magnified = true;
                     }
                   },
                   [&](const Deconvolve& s) {
                     s.settings.validate();
                     if (s.settings.gamma != 1.0) {
                       range_error("gamma", "deconvolution stages magnify through a magnify stage");
                     }
                     deconvolved = true;
                   },
               },
               stage);
  }
}

double PipelineSpec::gamma() const {
  double g = 1.0;
  for (const Stage& stage : stages)
    if (const auto* m = std::get_if<Magnify>(&stage)) g *= m->gamma;
  return g;
}

RasterImage apply_stage(const RasterImage& image, const Stage& stage, int step) {
  return std::visit(
      overloaded{
          [&](const CondInterp& s) -> RasterImage {
            s.t.validate();
            if (s.level == 2) return conditional_pass(image, 2, s.t, EdgePolicy::kPartialBlocks);
            if (s.geometry == Geometry::kStep3) {
              if (step != 3) {
                throw Error(ErrorCode::kGeometryMismatch,
                            "step3 geometry needs step 3, input step is " + std::to_string(step));
              }
              return conditional_pass(image, 3, s.t, EdgePolicy::kPartialBlocks);
            }
            if (step % 2 != 0) {
              throw Error(ErrorCode::kGeometryMismatch,
                          "even-step LEVEL 1 needs an even step, input step is " +
                              std::to_string(step));
            }
            return conditional_pass(image, step, s.t, EdgePolicy::kPartialBlocks);
          },
          [&](const Magnify& s) -> RasterImage {
            validate_gamma(s.gamma);
            return resize_to(image, static_cast<int>(std::lround(s.gamma * image.width())),
                             static_cast<int>(std::lround(s.gamma * image.height())),
                             ResizeMethod::kBilinear);
          },
          [&](const Deconvolve& s) -> RasterImage { return deconvolve(image, s.settings); },
      },
      stage);
}

RasterImage run_stages(const PipelineSpec& spec, const RasterImage& expanded, int step) {
  spec.validate();
  RasterImage image = expanded;
  for (const Stage& stage : spec.stages) image = apply_stage(image, stage, step);
  return image;
}

RunResult run(const PipelineSpec& spec, const BlockAverageImage& input) {
  input.validate();
  RunResult result;
  result.output = run_stages(spec, expand(input), input.step);
  result.metrics = resize_to(result.output, input.orig_width, input.orig_height,
                             ResizeMethod::kAreaAverage);
  return result;
}

std::string serialize_stage(const Stage& stage) {
  return std::visit(
      overloaded{
          [](const CondInterp& s) {
            std::string out = (s.level == 2 ? "interp2" : "interp1");
            out += " p2=" + std::to_string(s.t.p2) + " p3=" + std::to_string(s.t.p3) +
                   " p4=" + std::to_string(s.t.p4);
            if (s.geometry == Geometry::kStep3) out += " geom=step3";
            return out;
          },
          [](const Magnify& s) { return "magnify gamma=" + format_real(s.gamma); },
          [](const Deconvolve& s) {
            const DeconvSettings& d = s.settings;
            return "deconv L=" + std::to_string(d.length) + " theta=" + std::to_string(d.theta) +
                   " source=" + to_string(d.source) + " amount=" + std::to_string(d.amount) +
                   " noise=" + to_string(d.noise);
          },
      },
      stage);
}

std::string serialize(const PipelineSpec& spec) {
  std::string out;
  if (!spec.name.empty()) out += "# name: " + spec.name + "\n";
  for (const Stage& stage : spec.stages) out += serialize_stage(stage) + "\n";
  return out;
}

Stage parse_stage(std::string_view text, int line) {
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw ParseError(ErrorCode::kSyntax, "empty stage", line, 1);
  const std::string_view keyword = tokens[0].text;
  const int end = static_cast<int>(text.size()) + 1;

  if (keyword == "interp1" || keyword == "interp2") {
    const bool level1_stage = keyword == "interp1";
    Arguments args(tokens, {"p2", "p3", "p4"},
                   level1_stage ? std::vector<std::string>{"geom"} : std::vector<std::string>{},
                   line, end);
    CondInterp s;
    s.level = level1_stage ? 1 : 2;
    s.t = parse_triple(args);
    if (args.has("geom")) {
      const Token g = args.raw("geom");
      if (g.text == "step3") {
        s.geometry = Geometry::kStep3;
      } else if (g.text != "even") {
        throw ParseError(ErrorCode::kSyntax, "geom must be 'even' or 'step3'", line, g.column,
                         "geom");
      }
    }
    return s;
  }
  if (keyword == "magnify") {
    Arguments args(tokens, {"gamma"}, {}, line, end);
    const double gamma = args.real("gamma");
    if (!(gamma >= 1.0 && gamma <= 4.0)) {
      range_error("gamma", "=" + format_real(gamma) + " is outside 1..4", line,
                  args.raw("gamma").column);
    }
    return Magnify{gamma};
  }
  if (keyword == "deconv") {
    Arguments args(tokens, {"L", "theta", "source", "amount", "noise"}, {}, line, end);
    DeconvSettings d;
    d.length = args.integer("L", 0, 20);
    d.theta = args.integer("theta", 0, 175);
    d.amount = args.integer("amount", 0, 300);
    if (d.amount % 25 != 0) {
      range_error("amount", "=" + std::to_string(d.amount) + " is not a multiple of 25", line,
                  args.raw("amount").column);
    }
    const Token source = args.raw("source");
    const auto src = parse_source(source.text);
    if (!src) {
      throw ParseError(ErrorCode::kSyntax, "source must be DVC or OFC", line, source.column,
                       "source");
    }
    d.source = *src;
    const Token noise = args.raw("noise");
    const auto nm = parse_noise(noise.text);
    if (!nm) {
      throw ParseError(ErrorCode::kSyntax, "noise must be NO, YES, DO, LO or AUTO", line,
                       noise.column, "noise");
    }
    d.noise = *nm;
    return Deconvolve{d};
  }
  throw ParseError(ErrorCode::kSyntax, "unknown stage '" + std::string(keyword) + "'", line,
                   tokens[0].column);
}

PipelineSpec parse_pipeline(std::string_view text) {
  PipelineSpec spec;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    const std::size_t hash = line.find('#');
    if (hash != std::string_view::npos) {
      std::string_view comment = line.substr(hash + 1);
      while (!comment.empty() && std::isspace(static_cast<unsigned char>(comment.front())))
        comment.remove_prefix(1);
      constexpr std::string_view kNameTag = "name:";
      if (comment.substr(0, kNameTag.size()) == kNameTag && spec.name.empty()) {
        std::string_view name = comment.substr(kNameTag.size());
        while (!name.empty() && std::isspace(static_cast<unsigned char>(name.front())))
          name.remove_prefix(1);
        while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back())))
          name.remove_suffix(1);
        spec.name = std::string(name);
      }
      line = line.substr(0, hash);
    }
    if (tokenize(line).empty()) continue;
    spec.stages.push_back(parse_stage(line, line_no));
  }
  spec.validate();
  return spec;
}

namespace {

std::string clean_cell(std::string_view cell) {
  std::string s(cell);
  for (const std::string_view junk : {"°", "^{\\circ}", "\\%", "%"}) {
    for (std::size_t at = s.find(junk); at != std::string::npos; at = s.find(junk))
      s.erase(at, junk.size());
  }
  const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool is_source_row(const MatrixRow& row) {
  return std::any_of(row.begin(), row.end(),
                     [](const std::string& cell) { return parse_source(clean_cell(cell)).has_value(); });
}

std::optional<ThresholdTriple> triple_of(const MatrixRow& row) {
  ThresholdTriple t;
  int* fields[] = {&t.p2, &t.p3, &t.p4};
  for (int i = 0; i < 3; ++i) {
    const auto v = to_int(clean_cell(row[i]));
    if (!v) return std::nullopt;
    *fields[i] = *v;
  }
  return t;
}

[[noreturn]] void matrix_error(std::size_t row, const std::string& message) {
  throw ParseError(ErrorCode::kSyntax, message, static_cast<int>(row) + 1, 1);
}

}  // namespace

PipelineSpec import_parameter_matrix(const std::vector<MatrixRow>& rows, std::string name) {
  PipelineSpec spec;
  spec.name = std::move(name);
  const std::size_t n = rows.size();
  const auto is_presmooth = [&](std::size_t i) {
    const auto t = triple_of(rows[i]);
    return t && *t == ThresholdTriple::always();
  };
  bool have_deconv = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (i + 1 < n && is_source_row(rows[i + 1]) && !is_source_row(rows[i])) {
      const auto gamma = to_real(clean_cell(rows[i][0]));
      const auto length = to_int(clean_cell(rows[i][1]));
      const auto theta = to_int(clean_cell(rows[i][2]));
      if (!gamma || !length || !theta) matrix_error(i, "expected a (gamma, L, theta) row");
      DeconvSettings d;
      d.length = *length;
      d.theta = *theta % 180;
      bool have_amount = false;
      bool have_noise = false;
      for (const std::string& raw : rows[i + 1]) {
        const std::string cell = clean_cell(raw);
        if (const auto src = parse_source(cell)) {
          d.source = *src;
        } else if (const auto noise = parse_noise(cell); noise && !have_noise) {
          d.noise = *noise;
          have_noise = true;
        } else if (const auto amount = to_int(cell); amount && !have_amount) {
          d.amount = *amount;
          have_amount = true;
        } else {
          matrix_error(i + 1, "unrecognized source-row cell '" + cell + "'");
        }
      }
      if (!have_amount || !have_noise) matrix_error(i + 1, "source row needs amount and noise");
      if (*gamma != 1.0) spec.stages.push_back(Magnify{*gamma});
      spec.stages.push_back(Deconvolve{d});
      have_deconv = true;
      ++i;
      continue;
    }
    const auto t = triple_of(rows[i]);
    if (!t) matrix_error(i, "row fits no position of the parameter matrix");
    t->validate();
    // The last of two closing presmooth rows is the LEVEL 2 pass.
    if (have_deconv && i == n - 1 && n >= 2 && is_presmooth(i) && is_presmooth(i - 1)) {
      spec.stages.push_back(CondInterp{2, Geometry::kEvenStep, *t});
    } else {
      spec.stages.push_back(CondInterp{1, Geometry::kEvenStep, *t});
    }
  }
  spec.validate();
  return spec;
}

std::vector<MatrixRow> parse_matrix_csv(std::string_view text) {
  std::vector<MatrixRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::replace(line.begin(), line.end(), '&', ' ');
    std::replace(line.begin(), line.end(), ';', ' ');
    const auto tokens = tokenize(line);
    if (tokens.empty()) continue;
    if (tokens.size() != 3) {
      throw ParseError(ErrorCode::kSyntax,
                       "expected 3 cells, got " + std::to_string(tokens.size()), line_no, 1);
    }
    rows.push_back({std::string(tokens[0].text), std::string(tokens[1].text),
                    std::string(tokens[2].text)});
  }
  return rows;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

PipelineSpec load_pipeline(const std::filesystem::path& path) {
  PipelineSpec spec = parse_pipeline(read_text_file(path));
  if (spec.name.empty()) spec.name = path.stem().string();
  return spec;
}

std::vector<std::string> list_presets(const std::filesystem::path& dir) {
  std::vector<std::string> names;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      names.push_back(entry.path().stem().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::filesystem::path preset_path(const std::filesystem::path& dir, const std::string& name) {
  const bool safe = !name.empty() && std::all_of(name.begin(), name.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_';
  });
  if (!safe) throw Error(ErrorCode::kInvalidArgument, "invalid preset name '" + name + "'");
  return dir / (name + ".txt");
}

std::filesystem::path default_preset_dir() {
  if (const char* env = std::getenv("BLOCKSR_PRESET_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return BLOCKSR_PRESET_DIR;
}

}  // namespace blocksr
