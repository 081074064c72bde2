#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace colornet {

enum class ColorSpace : std::uint8_t {
  SRGB,
  RGB_LINEAR,
  HSV,
  XYZ,
  LAB,
  LCH,
  YUV,
  YIQ,
  YCBCR,
  YPBPR,
  HED,
  CMYK,
};

inline constexpr std::array<ColorSpace, 12> kAllColorSpaces = {
    ColorSpace::SRGB,  ColorSpace::RGB_LINEAR, ColorSpace::HSV,
    ColorSpace::XYZ,   ColorSpace::LAB,        ColorSpace::LCH,
    ColorSpace::YUV,   ColorSpace::YIQ,        ColorSpace::YCBCR,
    ColorSpace::YPBPR, ColorSpace::HED,        ColorSpace::CMYK};

constexpr std::size_t channel_count(ColorSpace space) {
  return space == ColorSpace::CMYK ? 4 : 3;
}

/// Short display name ("RGB" for linear RGB, "sRGB", "HSV", ...).
std::string_view to_string(ColorSpace space);
/// Case-insensitive; accepts the display names plus a few aliases
/// ("rgb_linear", "linear", "ycbcr", ...).
std::optional<ColorSpace> parse_color_space(std::string_view name);
/// Like parse_color_space but throws UsageError listing the valid names.
ColorSpace color_space_from_string(std::string_view name);

/// The seven branches of the default fused model.
std::vector<ColorSpace> default_branch_spaces();
/// The ten spaces of the single-space comparison.
std::vector<ColorSpace> comparison_spaces();

using Vec3 = std::array<double, 3>;

/// Affine per-pixel map: out = coefficients * in + offset.
struct ConversionMatrix {
  std::array<std::array<double, 3>, 3> coefficients{};
  Vec3 offset{};

  Vec3 apply(const Vec3& v) const;
  /// Inverse affine map. Throws DomainError when singular.
  ConversionMatrix inverse() const;
  double determinant() const;
  /// Infinity-norm condition number.
  double condition_number() const;
};

/// RGB (linear) to XYZ, entries as published (not the sRGB/D65 matrix).
const ConversionMatrix& xyz_matrix();
/// BT.601-family opponent maps. `target` must be YUV, YIQ, YCBCR or YPBPR.
const ConversionMatrix& opponent_matrix(ColorSpace target);
/// Stain OD vectors as rows (hematoxylin, eosin, DAB), columns R, G, B.
const ConversionMatrix& hed_stain_matrix();

inline constexpr double kLinearizationGamma = 2.2;
inline constexpr Vec3 kD65White = {0.95047, 1.0, 1.08883};
inline constexpr double kHedEpsilon = 1e-6;
inline constexpr double kStdFloor = 1e-6;

struct ChromaIntermediates {
  double cmax = 0.0;
  double cmin = 0.0;
  double delta = 0.0;
};

ChromaIntermediates chroma_intermediates(double r, double g, double b);

/// One image as channel-planar doubles, tagged with its color space.
/// Planes are stored back to back: value(c, y, x) = data[(c * h + y) * w + x].
class PlanarImage {
 public:
  PlanarImage() = default;
  PlanarImage(ColorSpace space, std::size_t height, std::size_t width);
  PlanarImage(ColorSpace space, std::size_t height, std::size_t width,
              std::vector<double> values);

  ColorSpace space() const { return space_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channel_count(space_); }
  std::size_t plane_size() const { return height_ * width_; }
  bool empty() const { return values_.empty(); }

  std::span<double> plane(std::size_t c);
  std::span<const double> plane(std::size_t c) const;
  std::span<double> data() { return values_; }
  std::span<const double> data() const { return values_; }

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return values_[(c * height_ + y) * width_ + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values_[(c * height_ + y) * width_ + x];
  }

  bool same_shape(const PlanarImage& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const PlanarImage&, const PlanarImage&) = default;

 private:
  ColorSpace space_ = ColorSpace::SRGB;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
};

/// Per-channel normalization statistics of one color space.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;

  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

// Single-stage kernels. Each checks the input tag and throws UsageError on a
// mismatch.
PlanarImage srgb_linearize(const PlanarImage& img);
PlanarImage rgb_to_hsv(const PlanarImage& img);
PlanarImage rgb_to_xyz(const PlanarImage& img);
PlanarImage xyz_to_lab(const PlanarImage& img);
PlanarImage lab_to_lch(const PlanarImage& img);
PlanarImage rgb_to_opponent(const PlanarImage& img, ColorSpace target);
PlanarImage rgb_to_hed(const PlanarImage& img);
PlanarImage rgb_to_cmyk(const PlanarImage& img);

/// Runs the conversion chain from an sRGB (or already linear RGB) image to
/// `target`. Converting to the source's own space returns a copy.
PlanarImage convert(const PlanarImage& img, ColorSpace target);

/// Maps `convert` over a batch. All images must share dimensions and tag.
/// `threads` == 0 picks hardware concurrency; results do not depend on it.
std::vector<PlanarImage> convert_batch(std::span<const PlanarImage> batch,
                                       ColorSpace target,
                                       unsigned threads = 0);

/// (v - mean_c) / max(std_c, 1e-6), tag preserved.
PlanarImage normalize_for_network(const PlanarImage& img,
                                  const ChannelStats& stats);

/// Population mean/std per channel over every pixel of every image.
ChannelStats compute_channel_stats(std::span<const PlanarImage> images);

}  // namespace colornet
