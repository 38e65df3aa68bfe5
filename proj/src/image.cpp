#include "blocksr/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "blocksr/error.hpp"

namespace blocksr {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kUnsupportedStep: return "unsupported step";
    case ErrorCode::kDimensionMismatch: return "dimension not divisible";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kTruncated: return "truncated stream";
    case ErrorCode::kInvalidHeader: return "invalid header";
    case ErrorCode::kSyntax: return "syntax error";
    case ErrorCode::kRange: return "value out of range";
    case ErrorCode::kGeometryMismatch: return "stage/geometry mismatch";
    case ErrorCode::kIo: return "i/o error";
  }
  return "error";
}

namespace {

std::string located(const std::string& message, int line, int column) {
  if (line <= 0) return message;
  return "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message;
}

void check_shape(int width, int height, int channels) {
  if (width < 0 || height < 0) {
    throw Error(ErrorCode::kInvalidArgument, "negative image dimensions");
  }
  if (channels != 1 && channels != 3) {
    throw Error(ErrorCode::kInvalidArgument,
                "channels must be 1 or 3, got " + std::to_string(channels));
  }
}

}  // namespace

ParseError::ParseError(ErrorCode code, const std::string& message, int line, int column,
                       std::string field)
    : Error(code, located(message, line, column)),
      message_(message),
      line_(line),
      column_(column),
      field_(std::move(field)) {}

RasterImage::RasterImage(int width, int height, int channels, Intensity fill)
    : width_(width), height_(height), channels_(channels) {
  check_shape(width, height, channels);
  data_.assign(plane_size() * channels, fill);
}

RasterImage::RasterImage(int width, int height, int channels, std::vector<Intensity> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  check_shape(width, height, channels);
  if (data_.size() != plane_size() * channels) {
    throw Error(ErrorCode::kShapeMismatch, "pixel buffer does not match " +
                                               std::to_string(width) + "x" +
                                               std::to_string(height) + "x" +
                                               std::to_string(channels));
  }
}

RealPlane::RealPlane(int width, int height, double fill)
    : RealPlane(width, height,
                std::vector<double>(static_cast<std::size_t>(width) * height, fill)) {}

RealPlane::RealPlane(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::kShapeMismatch, "real plane buffer size mismatch");
  }
  for (double& v : values_) {
    v = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
  }
}

RealPlane RealPlane::from_channel(const RasterImage& image, int channel) {
  auto src = image.plane(channel);
  std::vector<double> values(src.size());
  std::transform(src.begin(), src.end(), values.begin(),
                 [](Intensity v) { return v / 255.0; });
  return RealPlane(image.width(), image.height(), std::move(values));
}

void RealPlane::store_channel(RasterImage& image, int channel) const {
  auto dst = image.plane(channel);
  for (std::size_t i = 0; i < values_.size(); ++i) dst[i] = quantize(values_[i] * 255.0);
}

Intensity quantize(double value) {
  if (!(value > 0.0)) return 0;
  if (value >= 255.0) return 255;
  return static_cast<Intensity>(std::floor(value + 0.5));
}

void require_supported_step(int step) {
  if (step < 2 || step > 4) {
    throw Error(ErrorCode::kUnsupportedStep,
                "step must be 2, 3 or 4, got " + std::to_string(step));
  }
}

RasterImage forward_observe(const RasterImage& image, const ObservationParams& params,
                            std::uint64_t seed) {
  require_supported_step(params.step);
  const int step = params.step;
  if (image.width() % step != 0 || image.height() % step != 0) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                    " is not divisible by step " + std::to_string(step));
  }
  if (params.noise_sigma < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "noise sigma must be >= 0");
  }

  const int ow = image.width() / step;
  const int oh = image.height() / step;
  // Sub-window averaged per block: the whole block, or its centered q x q square.
  const int side = params.central_square ? std::max(1, step / 2) : step;
  const int offset = (step - side) / 2;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, params.noise_sigma > 0 ? params.noise_sigma : 1.0);

  RasterImage out(ow, oh, image.channels());
  for (int c = 0; c < image.channels(); ++c) {
    for (int by = 0; by < oh; ++by) {
      for (int bx = 0; bx < ow; ++bx) {
        long sum = 0;
        for (int y = 0; y < side; ++y)
          for (int x = 0; x < side; ++x)
            sum += image.at(c, bx * step + offset + x, by * step + offset + y);
        const int count = side * side;
        if (params.noise_sigma > 0.0) {
          out.at(c, bx, by) = quantize(static_cast<double>(sum) / count + noise(rng));
        } else {
          // Integer round-half-up of sum/count, exact for nonnegative sums.
          out.at(c, bx, by) = static_cast<Intensity>((2 * sum + count) / (2 * count));
        }
      }
    }
  }
  return out;
}

double reconstruction_residual(const RasterImage& candidate, const RasterImage& observation,
                               int step) {
  require_supported_step(step);
  if (candidate.channels() != observation.channels() ||
      candidate.width() != observation.width() * step ||
      candidate.height() != observation.height() * step) {
    throw Error(ErrorCode::kShapeMismatch,
                "candidate must be the observation size times the step");
  }
  const RasterImage observed = forward_observe(candidate, ObservationParams{step, 0.0, false});
  return std::sqrt(l2_distance(observed, observation));
}

namespace {

// Row-stochastic overlap weights mapping `src` samples onto `dst` samples when
// each destination pixel integrates its footprint on the source grid.
struct AreaWeights {
  std::vector<int> first;
  std::vector<std::vector<double>> weights;
};

AreaWeights area_weights(int src, int dst) {
  AreaWeights w;
  w.first.resize(dst);
  w.weights.resize(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int d = 0; d < dst; ++d) {
    const double lo = d * scale;
    const double hi = (d + 1) * scale;
    const int s0 = static_cast<int>(std::floor(lo));
    const int s1 = std::min(src, static_cast<int>(std::ceil(hi)));
    w.first[d] = s0;
    double total = 0.0;
    for (int s = s0; s < s1; ++s) {
      const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
      w.weights[d].push_back(std::max(0.0, overlap));
      total += w.weights[d].back();
    }
    for (double& v : w.weights[d]) v /= total;
  }
  return w;
}

RasterImage resize_area(const RasterImage& image, int tw, int th) {
  const AreaWeights wx = area_weights(image.width(), tw);
  const AreaWeights wy = area_weights(image.height(), th);
  RasterImage out(tw, th, image.channels());
  std::vector<double> rows(static_cast<std::size_t>(tw) * image.height());
  for (int c = 0; c < image.channels(); ++c) {
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < tw; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < wx.weights[x].size(); ++k)
          acc += wx.weights[x][k] * image.at(c, wx.first[x] + static_cast<int>(k), y);
        rows[static_cast<std::size_t>(y) * tw + x] = acc;
      }
    }
    for (int y = 0; y < th; ++y) {
      for (int x = 0; x < tw; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < wy.weights[y].size(); ++k)
          acc += wy.weights[y][k] * rows[static_cast<std::size_t>(wy.first[y] + k) * tw + x];
        out.at(c, x, y) = quantize(acc);
      }
    }
  }
  return out;
}

RasterImage resize_bilinear(const RasterImage& image, int tw, int th) {
  RasterImage out(tw, th, image.channels());
  const double sx = static_cast<double>(image.width()) / tw;
  const double sy = static_cast<double>(image.height()) / th;
  for (int y = 0; y < th; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height() - 1);
    const double ay = fy - y0;
    for (int x = 0; x < tw; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width() - 1);
      const double ax = fx - x0;
      for (int c = 0; c < image.channels(); ++c) {
        const double top = (1 - ax) * image.at(c, x0, y0) + ax * image.at(c, x1, y0);
        const double bottom = (1 - ax) * image.at(c, x0, y1) + ax * image.at(c, x1, y1);
        out.at(c, x, y) = quantize((1 - ay) * top + ay * bottom);
      }
    }
  }
  return out;
}

RasterImage resize_nearest(const RasterImage& image, int tw, int th) {
  RasterImage out(tw, th, image.channels());
  for (int y = 0; y < th; ++y) {
    const int sy = std::min(image.height() - 1,
                            static_cast<int>(std::floor((y + 0.5) * image.height() / th)));
    for (int x = 0; x < tw; ++x) {
      const int sx = std::min(image.width() - 1,
                              static_cast<int>(std::floor((x + 0.5) * image.width() / tw)));
      for (int c = 0; c < image.channels(); ++c) out.at(c, x, y) = image.at(c, sx, sy);
    }
  }
  return out;
}

}  // namespace

RasterImage resize_to(const RasterImage& image, int target_width, int target_height,
                      ResizeMethod method) {
  if (target_width < 1 || target_height < 1) {
    throw Error(ErrorCode::kInvalidArgument, "resize target must be at least 1x1");
  }
  if (image.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot resize an empty image");
  if (target_width == image.width() && target_height == image.height()) return image;
  switch (method) {
    case ResizeMethod::kNearest: return resize_nearest(image, target_width, target_height);
    case ResizeMethod::kBilinear: return resize_bilinear(image, target_width, target_height);
    case ResizeMethod::kAreaAverage: return resize_area(image, target_width, target_height);
  }
  return image;
}

double l2_distance(const RasterImage& a, const RasterImage& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::kShapeMismatch, "l2_distance needs equal shapes");
  double sum = 0.0;
  const auto& da = a.data();
  const auto& db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = static_cast<double>(da[i]) - db[i];
    sum += d * d;
  }
  return sum;
}

double psnr(const RasterImage& a, const RasterImage& b) {
  const double sse = l2_distance(a, b);
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(a.data().size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

RasterImage expand_blocks(const RasterImage& image, int step) {
  if (step < 1) throw Error(ErrorCode::kInvalidArgument, "expansion factor must be >= 1");
  RasterImage out(image.width() * step, image.height() * step, image.channels());
  for (int c = 0; c < image.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) out.at(c, x, y) = image.at(c, x / step, y / step);
  return out;
}

}  // namespace blocksr
