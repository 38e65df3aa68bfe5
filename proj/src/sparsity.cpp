#include "blocksr/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "blocksr/error.hpp"
#include "blocksr/ranges.hpp"

#ifndef BLOCKSR_FILTER_FILE
#define BLOCKSR_FILTER_FILE "data/filters.txt"
#endif

namespace blocksr {

namespace {

// Centered filter: tap(n) for n in [-center, center].
struct Centered {
  std::vector<double> taps;
  int center = 0;

  double operator()(int n) const { return taps[n + center]; }
  int lo() const { return -center; }
  int hi() const { return center; }
};

struct Bank {
  Centered h;   // analysis low
  Centered g;   // analysis high, support of f
  Centered f;   // synthesis low
  Centered gs;  // synthesis high, support of h
};

int alternate(int n) { return (n & 1) ? -1 : 1; }

Bank make_bank(const WaveletFilterPair& p) {
  Bank b;
  b.h = {p.analysis_low, static_cast<int>(p.analysis_low.size()) / 2};
  b.f = {p.synthesis_low, static_cast<int>(p.synthesis_low.size()) / 2};
  b.g = b.f;
  for (int n = b.f.lo(); n <= b.f.hi(); ++n) b.g.taps[n + b.g.center] = alternate(n) * b.f(n);
  b.gs = b.h;
  for (int n = b.h.lo(); n <= b.h.hi(); ++n) b.gs.taps[n + b.gs.center] = alternate(n) * b.h(n);
  return b;
}

// Whole-sample symmetric extension of index p into [0, n).
int reflect(int p, int n) {
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  p %= period;
  if (p < 0) p += period;
  return p < n ? p : period - p;
}

// One analysis level: x (length n, even) -> [low | high].
void analyze(const Bank& b, const double* x, double* out, int n) {
  const int half = n / 2;
  for (int k = 0; k < half; ++k) {
    double lo = 0.0;
    for (int t = b.h.lo(); t <= b.h.hi(); ++t) lo += b.h(t) * x[reflect(2 * k + t, n)];
    double hi = 0.0;
    for (int t = b.g.lo(); t <= b.g.hi(); ++t) hi += b.g(t) * x[reflect(2 * k + 1 + t, n)];
    out[k] = lo;
    out[half + k] = hi;
  }
}

// One synthesis level: [low | high] -> y (length n).
void synthesize(const Bank& b, const double* c, double* y, int n) {
  const int half = n / 2;
  for (int m = 0; m < n; ++m) {
    double acc = 0.0;
    for (int j = b.f.lo(); j <= b.f.hi(); ++j) {
      const int q = reflect(m - j, n);
      if ((q & 1) == 0) acc += b.f(j) * c[q / 2];
    }
    for (int j = b.gs.lo(); j <= b.gs.hi(); ++j) {
      const int q = reflect(m - j, n);
      if (q & 1) acc += b.gs(j) * c[half + (q - 1) / 2];
    }
    y[m] = acc;
  }
}

// Transpose of synthesize.
void synthesize_adjoint(const Bank& b, const double* y, double* c, int n) {
  const int half = n / 2;
  std::fill(c, c + n, 0.0);
  for (int m = 0; m < n; ++m) {
    for (int j = b.f.lo(); j <= b.f.hi(); ++j) {
      const int q = reflect(m - j, n);
      if ((q & 1) == 0) c[q / 2] += b.f(j) * y[m];
    }
    for (int j = b.gs.lo(); j <= b.gs.hi(); ++j) {
      const int q = reflect(m - j, n);
      if (q & 1) c[half + (q - 1) / 2] += b.gs(j) * y[m];
    }
  }
}

using LineOp = void (*)(const Bank&, const double*, double*, int);

// Applies a 1-D operator to every row, then every column, of the top-left
// w x h region.
void apply_region(RealGrid& g, const Bank& b, int w, int h, LineOp op) {
  std::vector<double> in(std::max(w, h));
  std::vector<double> out(std::max(w, h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) in[x] = g.at(x, y);
    op(b, in.data(), out.data(), w);
    for (int x = 0; x < w; ++x) g.at(x, y) = out[x];
  }
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) in[y] = g.at(x, y);
    op(b, in.data(), out.data(), h);
    for (int y = 0; y < h; ++y) g.at(x, y) = out[y];
  }
}

void check_levels(int width, int height, int levels) {
  if (levels < 0 || levels > max_levels(width, height)) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::to_string(width) + "x" + std::to_string(height) + " does not support " +
                    std::to_string(levels) + " levels");
  }
}

std::vector<double> symmetric_from_half(const std::vector<double>& half) {
  std::vector<double> full(half.rbegin(), half.rend());
  full.insert(full.end(), half.begin() + 1, half.end());
  return full;
}

RealGrid channel_grid(const RasterImage& image, int c) {
  RealGrid g(image.width(), image.height());
  const auto plane = image.plane(c);
  std::copy(plane.begin(), plane.end(), g.values.begin());
  return g;
}

int resolve_levels(int levels, int width, int height, int fallback) {
  if (levels > 0) return levels;
  return std::min(fallback, max_levels(width, height));
}

double l1(const RealGrid& g) {
  double s = 0.0;
  for (double v : g.values) s += std::abs(v);
  return s;
}

}  // namespace

WaveletFilterPair WaveletFilterPair::from_half(std::string name,
                                               const std::vector<double>& analysis_half,
                                               const std::vector<double>& synthesis_half) {
  if (analysis_half.empty() || synthesis_half.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "filter " + name + " has an empty tap list");
  }
  WaveletFilterPair p{std::move(name), symmetric_from_half(analysis_half),
                      symmetric_from_half(synthesis_half)};
  p.validate();
  return p;
}

void WaveletFilterPair::validate() const {
  for (const auto* taps : {&analysis_low, &synthesis_low}) {
    if (taps->empty() || taps->size() % 2 == 0) {
      throw Error(ErrorCode::kInvalidArgument, "filter " + name + " must have odd length");
    }
    if (!std::equal(taps->begin(), taps->end(), taps->rbegin())) {
      throw Error(ErrorCode::kInvalidArgument, "filter " + name + " must be symmetric");
    }
  }
  const Bank b = make_bank(*this);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int n : {32, 34}) {
    std::vector<double> x(n), c(n), y(n);
    for (double& v : x) v = dist(rng);
    analyze(b, x.data(), c.data(), n);
    synthesize(b, c.data(), y.data(), n);
    double err = 0.0;
    for (int i = 0; i < n; ++i) err = std::max(err, std::abs(x[i] - y[i]));
    if (!(err <= 1e-6)) {
      std::ostringstream msg;
      msg << "filter " << name << " fails perfect reconstruction (max error " << err << ")";
      throw Error(ErrorCode::kInvalidArgument, msg.str());
    }
  }
}

WaveletFilterPair villasenor1() {
  return WaveletFilterPair::from_half(
      "villasenor-1",
      {0.852698679009403, 0.377402855612654, -0.110624404418423, -0.023849465019380,
       0.037828455506995},
      {0.788485616405664, 0.418092273222212, -0.040689417609558, -0.064538882628938});
}

std::vector<WaveletFilterPair> parse_filter_text(std::string_view text) {
  std::vector<WaveletFilterPair> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::string> parts;
    std::stringstream fields(line);
    for (std::string part; std::getline(fields, part, ';');) parts.push_back(part);
    if (parts.size() != 3) {
      throw ParseError(ErrorCode::kSyntax, "expected 'name; analysis taps; synthesis taps'",
                       line_no, 1);
    }
    std::istringstream name_in(parts[0]);
    std::string name;
    name_in >> name;
    const auto taps = [&](const std::string& s, const char* field) {
      std::istringstream tin(s);
      std::vector<double> v;
      for (double t; tin >> t;) v.push_back(t);
      if (!tin.eof() || v.empty()) {
        throw ParseError(ErrorCode::kSyntax, std::string("bad ") + field + " taps", line_no, 1,
                         field);
      }
      return v;
    };
    if (name.empty()) throw ParseError(ErrorCode::kSyntax, "missing filter name", line_no, 1);
    out.push_back(WaveletFilterPair::from_half(name, taps(parts[1], "analysis"),
                                               taps(parts[2], "synthesis")));
  }
  return out;
}

std::vector<WaveletFilterPair> load_filter_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open filter file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_filter_text(buf.str());
}

const std::vector<WaveletFilterPair>& registered_bases() {
  static const std::vector<WaveletFilterPair> bases = [] {
    std::vector<WaveletFilterPair> all{villasenor1()};
    const char* env = std::getenv("BLOCKSR_FILTER_FILE");
    const std::filesystem::path path = (env != nullptr && *env != '\0') ? env : BLOCKSR_FILTER_FILE;
    if (std::filesystem::exists(path)) {
      for (auto& p : load_filter_file(path)) {
        const bool duplicate = std::any_of(all.begin(), all.end(),
                                           [&](const auto& q) { return q.name == p.name; });
        if (!duplicate) all.push_back(std::move(p));
      }
    }
    return all;
  }();
  return bases;
}

const WaveletFilterPair& find_basis(std::string_view name) {
  for (const auto& b : registered_bases())
    if (b.name == name) return b;
  throw Error(ErrorCode::kInvalidArgument, "unknown wavelet basis '" + std::string(name) + "'");
}

int max_levels(int width, int height) {
  int levels = 0;
  while (width > 1 && height > 1 && width % 2 == 0 && height % 2 == 0) {
    width /= 2;
    height /= 2;
    ++levels;
  }
  return levels;
}

RealGrid dwt2(const RealGrid& plane, const WaveletFilterPair& basis, int levels) {
  check_levels(plane.width, plane.height, levels);
  const Bank b = make_bank(basis);
  RealGrid g = plane;
  for (int l = 0; l < levels; ++l) apply_region(g, b, plane.width >> l, plane.height >> l, analyze);
  return g;
}

RealGrid dwt2(const RealPlane& plane, const WaveletFilterPair& basis, int levels) {
  RealGrid g(plane.width(), plane.height());
  std::copy(plane.values().begin(), plane.values().end(), g.values.begin());
  return dwt2(g, basis, levels);
}

RealGrid idwt2(const RealGrid& coeffs, const WaveletFilterPair& basis, int levels) {
  check_levels(coeffs.width, coeffs.height, levels);
  const Bank b = make_bank(basis);
  RealGrid g = coeffs;
  for (int l = levels - 1; l >= 0; --l)
    apply_region(g, b, coeffs.width >> l, coeffs.height >> l, synthesize);
  return g;
}

RealGrid idwt2_adjoint(const RealGrid& image, const WaveletFilterPair& basis, int levels) {
  check_levels(image.width, image.height, levels);
  const Bank b = make_bank(basis);
  RealGrid g = image;
  for (int l = 0; l < levels; ++l)
    apply_region(g, b, image.width >> l, image.height >> l, synthesize_adjoint);
  return g;
}

RasterImage topk_approx(const RasterImage& image, const WaveletFilterPair& basis, double percent,
                        int levels) {
  if (!(percent > 0.0 && percent <= 100.0)) {
    throw Error(ErrorCode::kInvalidArgument, "percent must be within (0, 100]");
  }
  if (image.empty()) throw Error(ErrorCode::kInvalidArgument, "empty image");
  levels = resolve_levels(levels, image.width(), image.height(), 3);
  RasterImage out(image.width(), image.height(), image.channels());
  for (int c = 0; c < image.channels(); ++c) {
    RealGrid coeffs = dwt2(channel_grid(image, c), basis, levels);
    const std::size_t n = coeffs.values.size();
    const auto k = static_cast<std::size_t>(std::lround(percent / 100.0 * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(coeffs.values[a]) > std::abs(coeffs.values[b]);
    });
    for (std::size_t i = k; i < n; ++i) coeffs.values[order[i]] = 0.0;
    const RealGrid rec = idwt2(coeffs, basis, levels);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < n; ++i) dst[i] = quantize(rec.values[i]);
  }
  return out;
}

std::vector<DecayRow> decay_curve(const RasterImage& image, const WaveletFilterPair& basis,
                                  int levels) {
  if (image.empty()) throw Error(ErrorCode::kInvalidArgument, "empty image");
  levels = levels > 0 ? levels : max_levels(image.width(), image.height());
  std::vector<double> mags;
  for (int c = 0; c < image.channels(); ++c) {
    const RealGrid coeffs = dwt2(channel_grid(image, c), basis, levels);
    for (double v : coeffs.values) mags.push_back(std::abs(v));
  }
  std::stable_sort(mags.begin(), mags.end(), std::greater<>());
  std::vector<DecayRow> rows(mags.size());
  double running = 0.0;
  for (std::size_t i = 0; i < mags.size(); ++i) {
    running += mags[i];
    rows[i] = {i + 1, mags[i], running};
  }
  return rows;
}

std::string decay_csv(const std::vector<DecayRow>& rows) {
  std::ostringstream out;
  out << "rank,magnitude,cumulative\n";
  for (const auto& r : rows)
    out << r.rank << ',' << format_real(r.magnitude) << ',' << format_real(r.cumulative) << '\n';
  return out.str();
}

std::vector<std::uint8_t> random_mask(int width, int height, double fraction, std::uint64_t seed) {
  if (width < 1 || height < 1) throw Error(ErrorCode::kInvalidArgument, "mask size must be >= 1");
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "mask fraction must be within [0, 1]");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * height);
  for (auto& m : mask) m = u(rng) < fraction ? 1 : 0;
  return mask;
}

InpaintResult ista_inpaint(const SparseProblem& p) {
  const RasterImage& obs = p.observed;
  if (obs.empty()) throw Error(ErrorCode::kInvalidArgument, "empty observation");
  if (p.mask.size() != obs.plane_size()) {
    throw Error(ErrorCode::kShapeMismatch, "mask size does not match the image");
  }
  const std::size_t known = static_cast<std::size_t>(std::count_if(
      p.mask.begin(), p.mask.end(), [](std::uint8_t m) { return m != 0; }));
  if (known == 0) throw Error(ErrorCode::kInvalidArgument, "mask has no known pixels");
  if (!(p.mu > 0.0)) throw Error(ErrorCode::kInvalidArgument, "mu must be > 0");
  if (p.iterations < 0) throw Error(ErrorCode::kInvalidArgument, "iterations must be >= 0");
  p.basis.validate();
  const int levels = p.levels > 0 ? p.levels : max_levels(obs.width(), obs.height());
  check_levels(obs.width(), obs.height(), levels);
  const std::size_t n = obs.plane_size();

  const auto masked = [&](RealGrid g) {
    for (std::size_t i = 0; i < n; ++i)
      if (!p.mask[i]) g.values[i] = 0.0;
    return g;
  };
  const auto synth = [&](const RealGrid& s) { return idwt2(s, p.basis, levels); };
  const auto adjoint = [&](const RealGrid& r) { return idwt2_adjoint(r, p.basis, levels); };

  // Lipschitz constant of the data term gradient: 2 * ||M Psi||^2.
  double norm_sq = 0.0;
  {
    std::mt19937_64 rng(0);
    std::normal_distribution<double> gauss;
    RealGrid v(obs.width(), obs.height());
    for (double& x : v.values) x = gauss(rng);
    for (int it = 0; it < 100; ++it) {
      RealGrid w = adjoint(masked(synth(v)));
      double norm = 0.0;
      for (double x : w.values) norm += x * x;
      norm = std::sqrt(norm);
      if (norm == 0.0) break;
      norm_sq = norm;
      for (std::size_t i = 0; i < n; ++i) v.values[i] = w.values[i] / norm;
    }
  }
  const double lipschitz = 2.0 * 1.02 * std::max(norm_sq, 1e-12);
  const double shrink = p.mu / lipschitz;

  InpaintResult result;
  result.image = RasterImage(obs.width(), obs.height(), obs.channels());
  for (int c = 0; c < obs.channels(); ++c) {
    const auto plane = obs.plane(c);
    RealGrid y(obs.width(), obs.height());
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (p.mask[i]) {
        y.values[i] = plane[i];
        mean += plane[i];
      }
    mean /= static_cast<double>(known);
    RealGrid start = y;
    for (std::size_t i = 0; i < n; ++i)
      if (!p.mask[i]) start.values[i] = mean;

    const auto cost = [&](const RealGrid& s) {
      const RealGrid r = synth(s);
      double data = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (p.mask[i]) data += (r.values[i] - y.values[i]) * (r.values[i] - y.values[i]);
      return data + p.mu * l1(s);
    };

    RealGrid s = dwt2(start, p.basis, levels);
    RealGrid z = s;
    double t = 1.0;
    std::vector<double> trace{cost(s)};
    for (int it = 0; it < p.iterations; ++it) {
      RealGrid residual = synth(z);
      for (std::size_t i = 0; i < n; ++i)
        residual.values[i] = p.mask[i] ? residual.values[i] - y.values[i] : 0.0;
      const RealGrid grad = adjoint(residual);
      RealGrid u = z;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = z.values[i] - 2.0 * grad.values[i] / lipschitz;
        u.values[i] = std::copysign(std::max(std::abs(v) - shrink, 0.0), v);
      }
      const double cost_u = cost(u);
      const bool accept = cost_u <= trace.back();
      const RealGrid next = accept ? u : s;
      const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
      for (std::size_t i = 0; i < n; ++i) {
        z.values[i] = next.values[i] + (t / t_next) * (u.values[i] - next.values[i]) +
                      ((t - 1.0) / t_next) * (next.values[i] - s.values[i]);
      }
      s = next;
      t = t_next;
      trace.push_back(accept ? cost_u : trace.back());
    }

    const RealGrid rec = synth(s);
    auto dst = result.image.plane(c);
    for (std::size_t i = 0; i < n; ++i) dst[i] = p.mask[i] ? plane[i] : quantize(rec.values[i]);
    result.objective.push_back(std::move(trace));
  }
  return result;
}

double coherence(const Eigen::MatrixXd& theta) {
  if (theta.cols() < 2) throw Error(ErrorCode::kInvalidArgument, "coherence needs >= 2 columns");
  const Eigen::VectorXd norms = theta.colwise().norm();
  for (Eigen::Index j = 0; j < norms.size(); ++j)
    if (norms(j) == 0.0) {
      throw Error(ErrorCode::kInvalidArgument, "column " + std::to_string(j) + " is zero");
    }
  const Eigen::MatrixXd normalized = theta * norms.cwiseInverse().asDiagonal();
  Eigen::MatrixXd gram = (normalized.transpose() * normalized).cwiseAbs();
  gram.diagonal().setZero();
  return std::min(1.0, gram.maxCoeff());
}

double estimate_rip_delta(const Eigen::MatrixXd& phi, int k) {
  const int n = static_cast<int>(phi.cols());
  if (n > 16) throw Error(ErrorCode::kInvalidArgument, "RIP enumeration supports <= 16 columns");
  if (k < 1 || k > n) throw Error(ErrorCode::kInvalidArgument, "k must be within 1..columns");
  const Eigen::MatrixXd gram = phi.transpose() * phi;
  std::vector<int> support(k);
  std::iota(support.begin(), support.end(), 0);
  double delta = 0.0;
  Eigen::MatrixXd sub(k, k);
  while (true) {
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) sub(i, j) = gram(support[i], support[j]);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sub, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    delta = std::max({delta, 1.0 - ev.minCoeff(), ev.maxCoeff() - 1.0});
    // Next combination in lexicographic order.
    int i = k - 1;
    while (i >= 0 && support[i] == n - k + i) --i;
    if (i < 0) break;
    ++support[i];
    for (int j = i + 1; j < k; ++j) support[j] = support[j - 1] + 1;
  }
  return delta;
}

}  // namespace blocksr
