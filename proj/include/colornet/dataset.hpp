#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "colornet/colorspace.hpp"

namespace colornet {

/// Images plus integer class labels. All images share dimensions and tag.
struct LabeledBatch {
  std::vector<PlanarImage> images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  /// Throws UsageError if counts differ, labels fall outside
  /// [0, num_classes), or images disagree on shape or tag.
  void validate(int num_classes) const;
  LabeledBatch select(std::span<const std::size_t> indices) const;
  void append(const LabeledBatch& other);

  friend bool operator==(const LabeledBatch&, const LabeledBatch&) = default;
};

struct DatasetSplit {
  std::string name;
  LabeledBatch train;
  LabeledBatch test;
  int num_classes = 0;
  /// Normalization statistics per color space, computed on `train` only.
  std::map<ColorSpace, ChannelStats> stats;

  /// Returns (and caches) the train-split stats for `space`.
  const ChannelStats& stats_for(ColorSpace space);
};

struct AugmentationConfig {
  double horizontal_flip = 0.5;
  double shift_fraction = 0.125;
  bool enabled = true;

  void validate() const;
};

enum class CifarKind { CIFAR10, CIFAR100 };

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;

std::size_t cifar_record_size(CifarKind kind);

/// Parses CIFAR binary records. CIFAR-100 keeps the fine label. Errors name
/// `source` and the byte offset of the offending record.
LabeledBatch parse_cifar_records(std::span<const std::uint8_t> bytes, CifarKind kind,
                                 const std::string& source = "<memory>");
LabeledBatch read_cifar_file(const std::filesystem::path& path, CifarKind kind);
/// Inverse of parse_cifar_records. Images must be 32x32 sRGB with values
/// that are exact multiples of 1/255.
std::vector<std::uint8_t> encode_cifar_records(const LabeledBatch& batch, CifarKind kind);

/// Reads data_batch_{1..5}.bin and test_batch.bin from `dir` (or from its
/// cifar-10-batches-bin subdirectory).
DatasetSplit load_cifar10(const std::filesystem::path& dir);
/// Reads train.bin and test.bin (fine labels, 100 classes).
DatasetSplit load_cifar100(const std::filesystem::path& dir);

/// Class-stratified choice of `n` indices. Per-class quotas are proportional
/// with largest-remainder rounding; chosen indices keep their original order.
std::vector<std::size_t> stratified_indices(std::span<const int> labels, int num_classes,
                                            std::size_t n, std::uint64_t seed);

DatasetSplit load_subset(const DatasetSplit& split, std::size_t train_n, std::size_t test_n,
                         std::uint64_t seed);

/// Splits `fraction` of the training set (stratified) off as a held-out set.
/// Returns (remaining split, held-out batch).
std::pair<DatasetSplit, LabeledBatch> split_heldout(const DatasetSplit& split,
                                                    double fraction, std::uint64_t seed);

/// Generative constants of the synthetic color-separation dataset.
///
/// Every image is one flat color plus i.i.d. Gaussian noise in sRGB. A color
/// is drawn as (hue, saturation, luminance) with hue uniform on [0, 360).
/// Value is solved from luminance Y = 0.299 R + 0.587 G + 0.114 B, so
///   V = Y / (1 - S (1 - w(H)))
/// where w(H) is the luminance of the fully saturated hue.
///
/// Classes 0 and 1 share the luminance law (log-uniform) and differ only in
/// saturation. Classes 2 and 3 share the saturation law and differ only in
/// luminance, by a narrow gap.
struct SynthRecipe {
  std::size_t side = 16;
  double noise_sigma = 0.006;
  double pair_a_luma_lo = 0.03;
  double pair_a_luma_hi = 0.4;
  double class0_sat_lo = 0.30;
  double class0_sat_hi = 0.45;
  double class1_sat_lo = 0.50;
  double class1_sat_hi = 0.65;
  double pair_b_sat_lo = 0.05;
  double pair_b_sat_hi = 0.80;
  double class2_luma_lo = 0.18;
  double class2_luma_hi = 0.1985;
  double class3_luma_lo = 0.2015;
  double class3_luma_hi = 0.22;
};

inline constexpr int kSynthClasses = 4;

/// Luminance of the fully saturated, full-value color of hue `h` (degrees).
double synth_hue_luminance(double h);
/// HSV (degrees, [0,1], [0,1]) to linear RGB.
Vec3 hsv_to_rgb(double h, double s, double v);

/// Synthetic 4-class split. Train and test draw from independent streams
/// derived from `seed`, so the train set does not depend on `test_per_class`.
DatasetSplit synth_colorsep(std::size_t n_per_class, std::uint64_t seed,
                            std::size_t test_per_class, const SynthRecipe& recipe = {});
inline DatasetSplit synth_colorsep(std::size_t n_per_class, std::uint64_t seed) {
  return synth_colorsep(n_per_class, seed, n_per_class);
}

PlanarImage flip_horizontal(const PlanarImage& img);
/// Translates content by (dx, dy) pixels, replicating edge pixels into the
/// uncovered border. Positive dx moves content right.
PlanarImage shift_image(const PlanarImage& img, int dx, int dy);

LabeledBatch augment(const LabeledBatch& batch, const AugmentationConfig& cfg,
                     std::uint64_t seed);

/// Index order of one epoch, split into batches; the last may be short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t shuffle_seed);
std::vector<LabeledBatch> batches(const LabeledBatch& data, std::size_t batch_size,
                                  std::uint64_t shuffle_seed);

/// Converts every image of the batch to `space` and returns per-channel stats.
ChannelStats compute_space_stats(const LabeledBatch& batch, ColorSpace space);

/// FNV-1a over labels, shapes and raw pixel bytes of both splits.
std::uint64_t dataset_fingerprint(const DatasetSplit& split);

}  // namespace colornet
