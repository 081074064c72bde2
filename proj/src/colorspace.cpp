#include "colornet/colorspace.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>
#include <thread>

#include "colornet/error.hpp"

namespace colornet {

namespace {

struct NameEntry {
  std::string_view name;
  ColorSpace space;
};

constexpr std::array<NameEntry, 18> kNames = {{
    {"SRGB", ColorSpace::SRGB},
    {"RGB", ColorSpace::RGB_LINEAR},
    {"RGB_LINEAR", ColorSpace::RGB_LINEAR},
    {"LINEAR", ColorSpace::RGB_LINEAR},
    {"HSV", ColorSpace::HSV},
    {"XYZ", ColorSpace::XYZ},
    {"LAB", ColorSpace::LAB},
    {"LCH", ColorSpace::LCH},
    {"YUV", ColorSpace::YUV},
    {"YIQ", ColorSpace::YIQ},
    {"YCBCR", ColorSpace::YCBCR},
    {"YCC", ColorSpace::YCBCR},
    {"YPBPR", ColorSpace::YPBPR},
    {"HED", ColorSpace::HED},
    {"CMYK", ColorSpace::CMYK},
    {"CIELAB", ColorSpace::LAB},
    {"CIEXYZ", ColorSpace::XYZ},
    {"CIELCH", ColorSpace::LCH},
}};

void require_space(const PlanarImage& img, ColorSpace expected,
                   std::string_view op) {
  if (img.space() != expected) {
    std::ostringstream os;
    os << op << ": expected a " << to_string(expected) << " image, got "
       << to_string(img.space());
    throw UsageError(os.str());
  }
}

double wrap_degrees(double h) {
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  return h;
}

// Cube-root companding with the linear toe below (6/29)^3.
double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  constexpr double delta3 = delta * delta * delta;
  if (t > delta3) return std::cbrt(t);
  return t / (3.0 * delta * delta) + 4.0 / 29.0;
}

// lab_f(s) - lab_f(t) without cancelling the shared offset or cube root.
double lab_f_diff(double s, double t) {
  constexpr double delta = 6.0 / 29.0;
  constexpr double delta3 = delta * delta * delta;
  if (s <= delta3 && t <= delta3) return (s - t) / (3.0 * delta * delta);
  if (s > delta3 && t > delta3) {
    const double cs = std::cbrt(s), ct = std::cbrt(t);
    return (s - t) / (cs * cs + cs * ct + ct * ct);
  }
  return lab_f(s) - lab_f(t);
}

PlanarImage apply_affine(const PlanarImage& img, const ConversionMatrix& m,
                         ColorSpace out_space) {
  PlanarImage out(out_space, img.height(), img.width());
  const auto r = img.plane(0);
  const auto g = img.plane(1);
  const auto b = img.plane(2);
  for (std::size_t c = 0; c < 3; ++c) {
    auto dst = out.plane(c);
    const auto& row = m.coefficients[c];
    const double off = m.offset[c];
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = row[0] * r[i] + row[1] * g[i] + row[2] * b[i] + off;
    }
  }
  return out;
}

ConversionMatrix make_ypbpr(double kr, double kb, Vec3 offset) {
  const double kg = 1.0 - kr - kb;
  ConversionMatrix m;
  m.coefficients[0] = {kr, kg, kb};
  m.coefficients[1] = {-0.5 * kr / (1.0 - kb), -0.5 * kg / (1.0 - kb), 0.5};
  m.coefficients[2] = {0.5, -0.5 * kg / (1.0 - kr), -0.5 * kb / (1.0 - kr)};
  m.offset = offset;
  return m;
}

}  // namespace

std::string_view to_string(ColorSpace space) {
  switch (space) {
    case ColorSpace::SRGB: return "sRGB";
    case ColorSpace::RGB_LINEAR: return "RGB";
    case ColorSpace::HSV: return "HSV";
    case ColorSpace::XYZ: return "XYZ";
    case ColorSpace::LAB: return "LAB";
    case ColorSpace::LCH: return "LCH";
    case ColorSpace::YUV: return "YUV";
    case ColorSpace::YIQ: return "YIQ";
    case ColorSpace::YCBCR: return "YCbCr";
    case ColorSpace::YPBPR: return "YPbPr";
    case ColorSpace::HED: return "HED";
    case ColorSpace::CMYK: return "CMYK";
  }
  return "?";
}

std::optional<ColorSpace> parse_color_space(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char ch) {
    return static_cast<char>(std::toupper(ch));
  });
  std::erase(upper, '-');
  for (const auto& e : kNames) {
    if (e.name == upper) return e.space;
  }
  return std::nullopt;
}

ColorSpace color_space_from_string(std::string_view name) {
  if (auto s = parse_color_space(name)) return *s;
  std::ostringstream os;
  os << "unknown color space '" << name << "' (expected one of:";
  for (auto s : kAllColorSpaces) os << ' ' << to_string(s);
  os << ')';
  throw UsageError(os.str());
}

std::vector<ColorSpace> default_branch_spaces() {
  return {ColorSpace::RGB_LINEAR, ColorSpace::LAB,   ColorSpace::HSV,
          ColorSpace::YUV,        ColorSpace::YCBCR, ColorSpace::HED,
          ColorSpace::YIQ};
}

std::vector<ColorSpace> comparison_spaces() {
  return {ColorSpace::RGB_LINEAR, ColorSpace::HSV,   ColorSpace::YUV,
          ColorSpace::LAB,        ColorSpace::YIQ,   ColorSpace::XYZ,
          ColorSpace::YPBPR,      ColorSpace::YCBCR, ColorSpace::HED,
          ColorSpace::LCH};
}

Vec3 ConversionMatrix::apply(const Vec3& v) const {
  Vec3 out{};
  for (std::size_t i = 0; i < 3; ++i) {
    out[i] = coefficients[i][0] * v[0] + coefficients[i][1] * v[1] +
             coefficients[i][2] * v[2] + offset[i];
  }
  return out;
}

double ConversionMatrix::determinant() const {
  const auto& a = coefficients;
  return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
         a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
         a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
}

ConversionMatrix ConversionMatrix::inverse() const {
  const double det = determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-12) {
    throw DomainError("conversion matrix is singular");
  }
  const auto& a = coefficients;
  ConversionMatrix inv;
  auto& b = inv.coefficients;
  b[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
  b[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det;
  b[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det;
  b[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det;
  b[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
  b[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det;
  b[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det;
  b[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det;
  b[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det;
  // x = A^-1 (y - o)  =>  offset' = -A^-1 o
  for (std::size_t i = 0; i < 3; ++i) {
    inv.offset[i] = -(b[i][0] * offset[0] + b[i][1] * offset[1] +
                      b[i][2] * offset[2]);
  }
  return inv;
}

double ConversionMatrix::condition_number() const {
  auto norm_inf = [](const std::array<std::array<double, 3>, 3>& m) {
    double best = 0.0;
    for (const auto& row : m) {
      best = std::max(best, std::abs(row[0]) + std::abs(row[1]) + std::abs(row[2]));
    }
    return best;
  };
  return norm_inf(coefficients) * norm_inf(inverse().coefficients);
}

const ConversionMatrix& xyz_matrix() {
  static const ConversionMatrix m{
      {{{0.489989, 0.310008, 0.2}, {0.176962, 0.81240, 0.010}, {0.0, 0.01, 0.99}}},
      {0.0, 0.0, 0.0}};
  return m;
}

const ConversionMatrix& opponent_matrix(ColorSpace target) {
  static const ConversionMatrix yuv = [] {
    constexpr double kr = 0.299, kg = 0.587, kb = 0.114;
    constexpr double u_scale = 0.492, v_scale = 0.877;
    ConversionMatrix m;
    m.coefficients[0] = {kr, kg, kb};
    m.coefficients[1] = {-u_scale * kr, -u_scale * kg, u_scale * (1.0 - kb)};
    m.coefficients[2] = {v_scale * (1.0 - kr), -v_scale * kg, -v_scale * kb};
    return m;
  }();
  static const ConversionMatrix yiq{{{{0.299, 0.587, 0.114},
                                      {0.595716, -0.274453, -0.321263},
                                      {0.211456, -0.522591, 0.311135}}},
                                    {0.0, 0.0, 0.0}};
  static const ConversionMatrix ypbpr = make_ypbpr(0.299, 0.114, {0.0, 0.0, 0.0});
  static const ConversionMatrix ycbcr = make_ypbpr(0.299, 0.114, {0.0, 0.5, 0.5});
  switch (target) {
    case ColorSpace::YUV: return yuv;
    case ColorSpace::YIQ: return yiq;
    case ColorSpace::YPBPR: return ypbpr;
    case ColorSpace::YCBCR: return ycbcr;
    default: break;
  }
  throw UsageError(std::string("rgb_to_opponent: ") + std::string(to_string(target)) +
                   " is not an opponent space (expected YUV, YIQ, YCbCr or YPbPr)");
}

const ConversionMatrix& hed_stain_matrix() {
  static const ConversionMatrix m{
      {{{0.65, 0.70, 0.29}, {0.07, 0.99, 0.11}, {0.27, 0.57, 0.78}}},
      {0.0, 0.0, 0.0}};
  return m;
}

ChromaIntermediates chroma_intermediates(double r, double g, double b) {
  ChromaIntermediates ci;
  ci.cmax = std::max({r, g, b});
  ci.cmin = std::min({r, g, b});
  ci.delta = ci.cmax - ci.cmin;
  return ci;
}

PlanarImage::PlanarImage(ColorSpace space, std::size_t height, std::size_t width)
    : space_(space),
      height_(height),
      width_(width),
      values_(channel_count(space) * height * width, 0.0) {}

PlanarImage::PlanarImage(ColorSpace space, std::size_t height, std::size_t width,
                         std::vector<double> values)
    : space_(space), height_(height), width_(width), values_(std::move(values)) {
  if (values_.size() != channel_count(space) * height * width) {
    throw UsageError("PlanarImage: value count does not match channels*height*width");
  }
}

std::span<double> PlanarImage::plane(std::size_t c) {
  return std::span<double>(values_).subspan(c * plane_size(), plane_size());
}

std::span<const double> PlanarImage::plane(std::size_t c) const {
  return std::span<const double>(values_).subspan(c * plane_size(), plane_size());
}

PlanarImage srgb_linearize(const PlanarImage& img) {
  require_space(img, ColorSpace::SRGB, "srgb_linearize");
  PlanarImage out(ColorSpace::RGB_LINEAR, img.height(), img.width());
  for (std::size_t c = 0; c < 3; ++c) {
    const auto src = img.plane(c);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double v = src[i];
      if (!(v >= 0.0 && v <= 1.0)) {
        std::ostringstream os;
        os << "srgb_linearize: value " << v << " outside [0,1] in channel " << c
           << " at pixel " << i << " (row " << i / img.width() << ", col "
           << i % img.width() << ")";
        throw DomainError(os.str());
      }
      dst[i] = std::pow(v, kLinearizationGamma);
    }
  }
  return out;
}

PlanarImage rgb_to_hsv(const PlanarImage& img) {
  require_space(img, ColorSpace::RGB_LINEAR, "rgb_to_hsv");
  PlanarImage out(ColorSpace::HSV, img.height(), img.width());
  const auto r = img.plane(0);
  const auto g = img.plane(1);
  const auto b = img.plane(2);
  auto h = out.plane(0);
  auto s = out.plane(1);
  auto v = out.plane(2);
  for (std::size_t i = 0; i < r.size(); ++i) {
    const auto ci = chroma_intermediates(r[i], g[i], b[i]);
    double hue = 0.0;
    if (ci.delta > 0.0) {
      if (ci.cmax == r[i]) {
        const double q = (g[i] - b[i]) / ci.delta;
        hue = 60.0 * (q - 6.0 * std::floor(q / 6.0));
      } else if (ci.cmax == g[i]) {
        hue = 60.0 * ((b[i] - r[i]) / ci.delta + 2.0);
      } else {
        hue = 60.0 * ((r[i] - g[i]) / ci.delta + 4.0);
      }
    }
    h[i] = wrap_degrees(hue);
    s[i] = ci.cmax == 0.0 ? 0.0 : ci.delta / ci.cmax;
    v[i] = ci.cmax;
  }
  return out;
}

PlanarImage rgb_to_xyz(const PlanarImage& img) {
  require_space(img, ColorSpace::RGB_LINEAR, "rgb_to_xyz");
  return apply_affine(img, xyz_matrix(), ColorSpace::XYZ);
}

PlanarImage xyz_to_lab(const PlanarImage& img) {
  require_space(img, ColorSpace::XYZ, "xyz_to_lab");
  PlanarImage out(ColorSpace::LAB, img.height(), img.width());
  const auto x = img.plane(0);
  const auto y = img.plane(1);
  const auto z = img.plane(2);
  auto L = out.plane(0);
  auto a = out.plane(1);
  auto bb = out.plane(2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= 0.0 && y[i] >= 0.0 && z[i] >= 0.0)) {
      std::ostringstream os;
      os << "xyz_to_lab: negative or non-finite tristimulus (" << x[i] << ", "
         << y[i] << ", " << z[i] << ") at pixel " << i;
      throw DomainError(os.str());
    }
    const double tx = x[i] / kD65White[0];
    const double ty = y[i] / kD65White[1];
    const double tz = z[i] / kD65White[2];
    L[i] = 116.0 * lab_f(ty) - 16.0;
    a[i] = 500.0 * lab_f_diff(tx, ty);
    bb[i] = 200.0 * lab_f_diff(ty, tz);
  }
  return out;
}

PlanarImage lab_to_lch(const PlanarImage& img) {
  require_space(img, ColorSpace::LAB, "lab_to_lch");
  PlanarImage out(ColorSpace::LCH, img.height(), img.width());
  const auto L = img.plane(0);
  const auto a = img.plane(1);
  const auto b = img.plane(2);
  auto lo = out.plane(0);
  auto co = out.plane(1);
  auto ho = out.plane(2);
  for (std::size_t i = 0; i < L.size(); ++i) {
    lo[i] = L[i];
    co[i] = std::hypot(a[i], b[i]);
    if (a[i] == 0.0 && b[i] == 0.0) {
      ho[i] = 0.0;
    } else {
      ho[i] = wrap_degrees(std::atan2(b[i], a[i]) * (180.0 / std::numbers::pi));
    }
  }
  return out;
}

PlanarImage rgb_to_opponent(const PlanarImage& img, ColorSpace target) {
  const auto& m = opponent_matrix(target);
  require_space(img, ColorSpace::RGB_LINEAR, "rgb_to_opponent");
  return apply_affine(img, m, target);
}

PlanarImage rgb_to_hed(const PlanarImage& img) {
  require_space(img, ColorSpace::RGB_LINEAR, "rgb_to_hed");
  static const ConversionMatrix inv = hed_stain_matrix().inverse();
  PlanarImage out(ColorSpace::HED, img.height(), img.width());
  std::array<std::span<const double>, 3> src = {img.plane(0), img.plane(1), img.plane(2)};
  std::array<std::span<double>, 3> dst = {out.plane(0), out.plane(1), out.plane(2)};
  const auto& m = inv.coefficients;
  for (std::size_t i = 0; i < src[0].size(); ++i) {
    Vec3 od{};
    for (std::size_t c = 0; c < 3; ++c) {
      od[c] = -std::log10(std::max(src[c][i], kHedEpsilon));
    }
    // Row vector convention: stains = od * inv(stain_matrix).
    for (std::size_t j = 0; j < 3; ++j) {
      dst[j][i] = od[0] * m[0][j] + od[1] * m[1][j] + od[2] * m[2][j];
    }
  }
  return out;
}

PlanarImage rgb_to_cmyk(const PlanarImage& img) {
  require_space(img, ColorSpace::RGB_LINEAR, "rgb_to_cmyk");
  PlanarImage out(ColorSpace::CMYK, img.height(), img.width());
  const auto r = img.plane(0);
  const auto g = img.plane(1);
  const auto b = img.plane(2);
  auto c = out.plane(0);
  auto m = out.plane(1);
  auto y = out.plane(2);
  auto k = out.plane(3);
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double mx = std::max({r[i], g[i], b[i]});
    k[i] = 1.0 - mx;
    if (mx <= 0.0) {
      c[i] = m[i] = y[i] = 0.0;
    } else {
      // (1 - v - K) / (1 - K) with 1 - K = max
      c[i] = (mx - r[i]) / mx;
      m[i] = (mx - g[i]) / mx;
      y[i] = (mx - b[i]) / mx;
    }
  }
  return out;
}

PlanarImage convert(const PlanarImage& img, ColorSpace target) {
  if (img.space() == target) return img;
  if (img.space() != ColorSpace::SRGB && img.space() != ColorSpace::RGB_LINEAR) {
    throw UsageError(std::string("convert: source must be sRGB or linear RGB, got ") +
                     std::string(to_string(img.space())));
  }
  if (target == ColorSpace::SRGB) {
    throw UsageError("convert: cannot convert linear RGB back to sRGB");
  }
  const PlanarImage linear =
      img.space() == ColorSpace::SRGB ? srgb_linearize(img) : img;
  switch (target) {
    case ColorSpace::RGB_LINEAR: return linear;
    case ColorSpace::HSV: return rgb_to_hsv(linear);
    case ColorSpace::XYZ: return rgb_to_xyz(linear);
    case ColorSpace::LAB: return xyz_to_lab(rgb_to_xyz(linear));
    case ColorSpace::LCH: return lab_to_lch(xyz_to_lab(rgb_to_xyz(linear)));
    case ColorSpace::YUV:
    case ColorSpace::YIQ:
    case ColorSpace::YCBCR:
    case ColorSpace::YPBPR: return rgb_to_opponent(linear, target);
    case ColorSpace::HED: return rgb_to_hed(linear);
    case ColorSpace::CMYK: return rgb_to_cmyk(linear);
    case ColorSpace::SRGB: break;
  }
  throw UsageError("convert: unknown target color space");
}

std::vector<PlanarImage> convert_batch(std::span<const PlanarImage> batch,
                                       ColorSpace target, unsigned threads) {
  std::vector<PlanarImage> out(batch.size());
  if (batch.empty()) return out;
  for (const auto& img : batch) {
    if (!img.same_shape(batch.front()) || img.space() != batch.front().space()) {
      throw UsageError("convert_batch: images differ in dimensions or color space");
    }
  }
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, batch.size() / 64 + 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) out[i] = convert(batch[i], target);
    return out;
  }
  // Each worker owns a contiguous slice of the output; no shared writes.
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (batch.size() + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(batch.size(), begin + chunk);
        for (std::size_t i = begin; i < end; ++i) out[i] = convert(batch[i], target);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

PlanarImage normalize_for_network(const PlanarImage& img, const ChannelStats& stats) {
  if (stats.mean.size() != img.channels() || stats.std.size() != img.channels()) {
    std::ostringstream os;
    os << "normalize_for_network: stats have " << stats.mean.size()
       << " channels, image has " << img.channels();
    throw UsageError(os.str());
  }
  PlanarImage out = img;
  for (std::size_t c = 0; c < img.channels(); ++c) {
    const double mean = stats.mean[c];
    const double scale = 1.0 / std::max(stats.std[c], kStdFloor);
    for (double& v : out.plane(c)) v = (v - mean) * scale;
  }
  return out;
}

ChannelStats compute_channel_stats(std::span<const PlanarImage> images) {
  ChannelStats stats;
  if (images.empty()) return stats;
  const std::size_t channels = images.front().channels();
  stats.mean.assign(channels, 0.0);
  stats.std.assign(channels, 0.0);
  std::size_t count = 0;
  for (const auto& img : images) {
    if (img.channels() != channels || img.space() != images.front().space()) {
      throw UsageError("compute_channel_stats: images differ in color space");
    }
    count += img.plane_size();
    for (std::size_t c = 0; c < channels; ++c) {
      for (double v : img.plane(c)) stats.mean[c] += v;
    }
  }
  if (count == 0) return stats;
  for (double& m : stats.mean) m /= static_cast<double>(count);
  for (const auto& img : images) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (double v : img.plane(c)) {
        const double d = v - stats.mean[c];
        stats.std[c] += d * d;
      }
    }
  }
  for (double& s : stats.std) s = std::sqrt(s / static_cast<double>(count));
  return stats;
}

}  // namespace colornet
