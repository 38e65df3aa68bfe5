#include "blocksr/deconv.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>

#include "blocksr/error.hpp"
#include "blocksr/parallel.hpp"

namespace blocksr {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kDivisionGuard = 1e-6;

// Drops symmetric pairs of all-zero border rows and columns.
void trim_borders(MotionKernel& k) {
  const auto row_zero = [&](int r) {
    for (int c = 0; c < k.cols; ++c)
      if (k.at(r, c) != 0.0) return false;
    return true;
  };
  const auto col_zero = [&](int c) {
    for (int r = 0; r < k.rows; ++r)
      if (k.at(r, c) != 0.0) return false;
    return true;
  };
  int top = 0;
  while (k.rows - 2 * top > 1 && row_zero(top) && row_zero(k.rows - 1 - top)) ++top;
  int left = 0;
  while (k.cols - 2 * left > 1 && col_zero(left) && col_zero(k.cols - 1 - left)) ++left;
  if (top == 0 && left == 0) return;
  const int rows = k.rows - 2 * top;
  const int cols = k.cols - 2 * left;
  std::vector<double> taps(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) taps[static_cast<std::size_t>(r) * cols + c] = k.at(r + top, c + left);
  k.rows = rows;
  k.cols = cols;
  k.taps = std::move(taps);
}

void normalize(MotionKernel& k) {
  double sum = 0.0;
  for (double v : k.taps) sum += v;
  for (double& v : k.taps) v /= sum;
}

struct Tap {
  int dy;
  int dx;
  double weight;
};

std::vector<Tap> sparse_taps(const MotionKernel& k) {
  std::vector<Tap> taps;
  for (int r = 0; r < k.rows; ++r)
    for (int c = 0; c < k.cols; ++c)
      if (k.at(r, c) > 0.0) taps.push_back({r - k.rows / 2, c - k.cols / 2, k.at(r, c)});
  return taps;
}

// Working buffer with a replicated border of `pad` pixels on every side.
class PaddedPlane {
 public:
  PaddedPlane(int width, int height, int pad)
      : width_(width), height_(height), pad_(pad), stride_(width + 2 * pad),
        data_(static_cast<std::size_t>(stride_) * (height + 2 * pad)) {}

  void load(const std::vector<double>& values) {
    for (int y = -pad_; y < height_ + pad_; ++y) {
      const int sy = std::clamp(y, 0, height_ - 1);
      double* row = &data_[static_cast<std::size_t>(y + pad_) * stride_];
      const double* src = &values[static_cast<std::size_t>(sy) * width_];
      for (int x = -pad_; x < width_ + pad_; ++x) row[x + pad_] = src[std::clamp(x, 0, width_ - 1)];
    }
  }

  // out(y, x) = sum_t w_t * in(y + sign*dy_t, x + sign*dx_t)
  void apply(const std::vector<Tap>& taps, int sign, std::vector<double>& out) const {
    std::fill(out.begin(), out.end(), 0.0);
    for (const Tap& t : taps) {
      const int oy = sign * t.dy;
      const int ox = sign * t.dx;
      for (int y = 0; y < height_; ++y) {
        const double* src = &data_[static_cast<std::size_t>(y + oy + pad_) * stride_ + ox + pad_];
        double* dst = &out[static_cast<std::size_t>(y) * width_];
        for (int x = 0; x < width_; ++x) dst[x] += t.weight * src[x];
      }
    }
  }

 private:
  int width_;
  int height_;
  int pad_;
  int stride_;
  std::vector<double> data_;
};

int kernel_pad(const MotionKernel& k) { return std::max(k.rows / 2, k.cols / 2); }

double median9(std::array<double, 9> v) {
  std::nth_element(v.begin(), v.begin() + 4, v.end());
  return v[4];
}

}  // namespace

MotionKernel motion_psf(int length, double theta) {
  if (length < 0) {
    throw Error(ErrorCode::kInvalidArgument, "motion length must be >= 0");
  }
  if (!std::isfinite(theta)) throw Error(ErrorCode::kInvalidArgument, "theta must be finite");
  double wrapped = std::fmod(theta, 180.0);
  if (wrapped < 0) wrapped += 180.0;

  MotionKernel k;
  k.length = length;
  k.theta = wrapped;
  if (length <= 1) return k;

  const double len = length;
  const double half = (len - 1.0) / 2.0;
  const double phi = wrapped * std::numbers::pi / 180.0;
  const double cosphi = std::cos(phi);
  const double sinphi = std::sin(phi);
  const double xsign = cosphi > 0 ? 1.0 : (cosphi < 0 ? -1.0 : 0.0);
  constexpr double line_width = 1.0;

  // Quarter-plane grid covering one half of the segment.
  const int sx = static_cast<int>(std::trunc(half * cosphi + line_width * xsign - len * kEps));
  const int sy = static_cast<int>(std::trunc(half * sinphi + line_width - len * kEps));
  const int nx = std::abs(sx) + 1;
  const int ny = sy + 1;
  std::vector<double> quarter(static_cast<std::size_t>(nx) * ny);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const double x = ix * (xsign == 0.0 ? 1.0 : xsign);
      const double y = iy;
      double dist = y * cosphi - x * sinphi;
      const double rad = std::hypot(x, y);
      if (rad >= half && std::abs(dist) <= line_width) {
        // Near the segment end: distance to the end point instead of the line.
        const double along = half - std::abs((x + dist * sinphi) / cosphi);
        dist = std::sqrt(dist * dist + along * along);
      }
      quarter[static_cast<std::size_t>(iy) * nx + ix] = std::max(0.0, line_width + kEps - std::abs(dist));
    }
  }

  // Mirror the quarter through the center to get the full symmetric kernel.
  k.rows = 2 * ny - 1;
  k.cols = 2 * nx - 1;
  k.taps.assign(static_cast<std::size_t>(k.rows) * k.cols, 0.0);
  const auto q = [&](int iy, int ix) { return quarter[static_cast<std::size_t>(iy) * nx + ix]; };
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      k.taps[static_cast<std::size_t>(ny - 1 - iy) * k.cols + (nx - 1 - ix)] = q(iy, ix);
      k.taps[static_cast<std::size_t>(ny - 1 + iy) * k.cols + (nx - 1 + ix)] = q(iy, ix);
    }
  }
  // Rows grow downward, so lines rising to the right need a vertical flip.
  if (cosphi > 0) {
    for (int r = 0; r < k.rows / 2; ++r)
      for (int c = 0; c < k.cols; ++c)
        std::swap(k.taps[static_cast<std::size_t>(r) * k.cols + c],
                  k.taps[static_cast<std::size_t>(k.rows - 1 - r) * k.cols + c]);
  }
  trim_borders(k);
  normalize(k);
  return k;
}

MotionKernel soften_kernel(const MotionKernel& kernel) {
  std::array<double, 9> g{};
  double total = 0.0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * 0.25));
      g[(dy + 1) * 3 + dx + 1] = v;
      total += v;
    }
  for (double& v : g) v /= total;

  MotionKernel out = kernel;
  out.rows = kernel.rows + 2;
  out.cols = kernel.cols + 2;
  out.taps.assign(static_cast<std::size_t>(out.rows) * out.cols, 0.0);
  for (int r = 0; r < kernel.rows; ++r)
    for (int c = 0; c < kernel.cols; ++c)
      for (int gy = 0; gy < 3; ++gy)
        for (int gx = 0; gx < 3; ++gx)
          out.taps[static_cast<std::size_t>(r + gy) * out.cols + c + gx] +=
              kernel.at(r, c) * g[gy * 3 + gx];
  normalize(out);
  return out;
}

std::string to_string(Source source) { return source == Source::kDVC ? "DVC" : "OFC"; }

std::string to_string(NoiseMode noise) {
  switch (noise) {
    case NoiseMode::kNo: return "NO";
    case NoiseMode::kYes: return "YES";
    case NoiseMode::kDarkOnly: return "DO";
    case NoiseMode::kLightOnly: return "LO";
    case NoiseMode::kAuto: return "AUTO";
  }
  return "NO";
}

namespace {

std::string upper(std::string_view text) {
  std::string s(text);
  for (char& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return s;
}

}  // namespace

std::optional<Source> parse_source(std::string_view text) {
  const std::string s = upper(text);
  if (s == "DVC") return Source::kDVC;
  if (s == "OFC") return Source::kOFC;
  return std::nullopt;
}

std::optional<NoiseMode> parse_noise(std::string_view text) {
  const std::string s = upper(text);
  if (s == "NO") return NoiseMode::kNo;
  if (s == "YES") return NoiseMode::kYes;
  if (s == "DO") return NoiseMode::kDarkOnly;
  if (s == "LO") return NoiseMode::kLightOnly;
  if (s == "AUTO") return NoiseMode::kAuto;
  return std::nullopt;
}

void DeconvSettings::validate() const {
  const auto fail = [](const std::string& field, const std::string& message) {
    throw ParseError(ErrorCode::kRange, field + " " + message, 0, 0, field);
  };
  if (!(gamma >= 1.0 && gamma <= 4.0)) fail("gamma", "must be within 1..4");
  if (length < 0 || length > 20) fail("L", "must be within 0..20");
  if (theta < 0 || theta > 175) fail("theta", "must be within 0..175");
  if (amount < 0 || amount > 300 || amount % 25 != 0) {
    fail("amount", "must be a multiple of 25 within 0..300");
  }
}

int rl_iterations(int amount) {
  return std::max(1, static_cast<int>(std::lround(amount / 25.0)));
}

RealPlane noise_prefilter(const RealPlane& plane, NoiseMode noise) {
  if (noise == NoiseMode::kNo || plane.size() == 0) return plane;
  const int w = plane.width();
  const int h = plane.height();
  double mean = 0.0;
  for (double v : plane.values()) mean += v;
  mean /= static_cast<double>(plane.size());

  std::vector<double> out(plane.values().begin(), plane.values().end());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = plane.at(x, y);
      if (noise == NoiseMode::kDarkOnly && !(v < mean)) continue;
      if (noise == NoiseMode::kLightOnly && !(v > mean)) continue;
      std::array<double, 9> window{};
      int i = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          window[i++] = plane.at(std::clamp(x + dx, 0, w - 1), std::clamp(y + dy, 0, h - 1));
      out[static_cast<std::size_t>(y) * w + x] = median9(window);
    }
  }
  return RealPlane(w, h, std::move(out));
}

RealGrid convolve(const RealGrid& plane, const MotionKernel& kernel) {
  RealGrid out(plane.width, plane.height);
  if (plane.values.empty()) return out;
  PaddedPlane padded(plane.width, plane.height, kernel_pad(kernel));
  padded.load(plane.values);
  padded.apply(sparse_taps(kernel), -1, out.values);
  return out;
}

RealPlane richardson_lucy(const RealPlane& observed, const MotionKernel& kernel, int iterations) {
  const int w = observed.width();
  const int h = observed.height();
  if (observed.size() == 0) return observed;
  const std::vector<Tap> taps = sparse_taps(kernel);
  PaddedPlane padded(w, h, kernel_pad(kernel));
  const std::vector<double> y(observed.values().begin(), observed.values().end());
  std::vector<double> x = y;
  std::vector<double> work(y.size());
  for (int it = 0; it < iterations; ++it) {
    padded.load(x);
    padded.apply(taps, -1, work);  // h * x
    for (std::size_t i = 0; i < work.size(); ++i) work[i] = y[i] / std::max(work[i], kDivisionGuard);
    padded.load(work);
    padded.apply(taps, +1, work);  // flipped h * ratio
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i] * work[i], 0.0, 1.0);
  }
  return RealPlane(w, h, std::move(x));
}

namespace {

RasterImage deconvolve_with(const RasterImage& magnified, const MotionKernel& kernel,
                            const DeconvSettings& s) {
  RasterImage out(magnified.width(), magnified.height(), magnified.channels());
  const int iterations = rl_iterations(s.amount);
  for (int c = 0; c < magnified.channels(); ++c) {
    const RealPlane observed = noise_prefilter(RealPlane::from_channel(magnified, c), s.noise);
    richardson_lucy(observed, kernel, iterations).store_channel(out, c);
  }
  return out;
}

MotionKernel settings_kernel(const DeconvSettings& s) {
  MotionKernel k = motion_psf(s.length, s.theta);
  return s.source == Source::kOFC ? soften_kernel(k) : k;
}

RasterImage magnify(const RasterImage& image, double gamma) {
  if (gamma == 1.0) return image;
  return resize_to(image, static_cast<int>(std::lround(gamma * image.width())),
                   static_cast<int>(std::lround(gamma * image.height())), ResizeMethod::kBilinear);
}

}  // namespace

RasterImage deconvolve(const RasterImage& image, const DeconvSettings& settings) {
  settings.validate();
  if (image.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot deconvolve an empty image");
  return deconvolve_with(magnify(image, settings.gamma), settings_kernel(settings), settings);
}

RasterImage motion_blur(const RasterImage& image, int length, double theta) {
  const MotionKernel k = motion_psf(length, theta);
  RasterImage out(image.width(), image.height(), image.channels());
  for (int c = 0; c < image.channels(); ++c) {
    const RealPlane plane = RealPlane::from_channel(image, c);
    RealGrid grid(plane.width(), plane.height());
    grid.values.assign(plane.values().begin(), plane.values().end());
    const RealGrid blurred = convolve(grid, k);
    RealPlane(blurred.width, blurred.height, blurred.values).store_channel(out, c);
  }
  return out;
}

SweepGrid sweep(const RasterImage& image, double gamma, const std::vector<int>& lengths,
                const std::vector<int>& thetas, const DeconvSettings& fixed,
                const CellScorer& scorer) {
  if (lengths.empty() || thetas.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "sweep ranges must be nonempty");
  }
  if (image.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot sweep an empty image");
  DeconvSettings base = fixed;
  base.gamma = gamma;
  base.validate();
  const RasterImage magnified = magnify(image, gamma);

  SweepGrid grid;
  grid.lengths = lengths;
  grid.thetas = thetas;
  grid.cells.resize(lengths.size() * thetas.size());
  parallel_for(grid.cells.size(), [&](std::size_t i) {
    DeconvSettings s = base;
    s.length = lengths[i / thetas.size()];
    s.theta = thetas[i % thetas.size()];
    s.validate();
    SweepCell& cell = grid.cells[i];
    cell.length = s.length;
    cell.theta = s.theta;
    cell.preview = deconvolve_with(magnified, settings_kernel(s), s);
    if (scorer) cell.objective = scorer(cell.preview);
  });
  return grid;
}

std::vector<int> int_range(int lo, int hi, int stride) {
  if (stride <= 0) throw Error(ErrorCode::kInvalidArgument, "range stride must be positive");
  std::vector<int> out;
  for (int v = lo; v <= hi; v += stride) out.push_back(v);
  return out;
}

}  // namespace blocksr
