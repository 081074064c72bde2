#include "colornet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "colornet/error.hpp"
#include "colornet/rng.hpp"

namespace colornet {

namespace fs = std::filesystem;

void LabeledBatch::validate(int num_classes) const {
  if (images.size() != labels.size()) {
    std::ostringstream os;
    os << "batch has " << images.size() << " images but " << labels.size() << " labels";
    throw UsageError(os.str());
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      std::ostringstream os;
      os << "label " << labels[i] << " at index " << i << " outside [0, " << num_classes << ")";
      throw UsageError(os.str());
    }
    if (!images[i].same_shape(images.front()) || images[i].space() != images.front().space()) {
      std::ostringstream os;
      os << "image " << i << " differs in shape or color space from image 0";
      throw UsageError(os.str());
    }
  }
}

LabeledBatch LabeledBatch::select(std::span<const std::size_t> indices) const {
  LabeledBatch out;
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    out.images.push_back(images.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

void LabeledBatch::append(const LabeledBatch& other) {
  images.insert(images.end(), other.images.begin(), other.images.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

const ChannelStats& DatasetSplit::stats_for(ColorSpace space) {
  auto it = stats.find(space);
  if (it == stats.end()) {
    it = stats.emplace(space, compute_space_stats(train, space)).first;
  }
  return it->second;
}

void AugmentationConfig::validate() const {
  if (!(horizontal_flip >= 0.0 && horizontal_flip <= 1.0)) {
    throw UsageError("augmentation: horizontal_flip must lie in [0,1]");
  }
  if (!(shift_fraction >= 0.0 && shift_fraction <= 0.5)) {
    throw UsageError("augmentation: shift_fraction must lie in [0,0.5]");
  }
}

std::size_t cifar_record_size(CifarKind kind) {
  return (kind == CifarKind::CIFAR10 ? 1 : 2) + kCifarPixels;
}

LabeledBatch parse_cifar_records(std::span<const std::uint8_t> bytes, CifarKind kind,
                                 const std::string& source) {
  const std::size_t rec = cifar_record_size(kind);
  const int num_classes = kind == CifarKind::CIFAR10 ? 10 : 100;
  if (bytes.empty()) throw DataError(source + ": empty file");
  if (bytes.size() % rec != 0) {
    std::ostringstream os;
    os << source << ": truncated record at byte offset " << (bytes.size() / rec) * rec
       << " (file size " << bytes.size() << " is not a multiple of " << rec << ")";
    throw DataError(os.str());
  }
  const std::size_t n = bytes.size() / rec;
  LabeledBatch out;
  out.images.reserve(n);
  out.labels.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t offset = r * rec;
    const std::uint8_t* p = bytes.data() + offset;
    const int label = kind == CifarKind::CIFAR10 ? p[0] : p[1];
    if (label >= num_classes) {
      std::ostringstream os;
      os << source << ": label " << label << " >= " << num_classes << " at byte offset " << offset;
      throw DataError(os.str());
    }
    p += rec - kCifarPixels;
    std::vector<double> values(kCifarPixels);
    for (std::size_t i = 0; i < kCifarPixels; ++i) values[i] = p[i] / 255.0;
    out.images.emplace_back(ColorSpace::SRGB, kCifarSide, kCifarSide, std::move(values));
    out.labels.push_back(label);
  }
  return out;
}

LabeledBatch read_cifar_file(const fs::path& path, CifarKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_cifar_records(bytes, kind, path.string());
}

std::vector<std::uint8_t> encode_cifar_records(const LabeledBatch& batch, CifarKind kind) {
  const int num_classes = kind == CifarKind::CIFAR10 ? 10 : 100;
  batch.validate(num_classes);
  std::vector<std::uint8_t> out;
  out.reserve(batch.size() * cifar_record_size(kind));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& img = batch.images[i];
    if (img.space() != ColorSpace::SRGB || img.height() != kCifarSide ||
        img.width() != kCifarSide) {
      throw UsageError("encode_cifar_records: images must be 32x32 sRGB");
    }
    if (kind == CifarKind::CIFAR100) out.push_back(0);
    out.push_back(static_cast<std::uint8_t>(batch.labels[i]));
    for (double v : img.data()) {
      const double scaled = std::round(v * 255.0);
      if (!(scaled >= 0.0 && scaled <= 255.0)) {
        throw UsageError("encode_cifar_records: pixel value outside [0,1]");
      }
      out.push_back(static_cast<std::uint8_t>(scaled));
    }
  }
  return out;
}

namespace {

fs::path locate(const fs::path& dir, const std::string& probe, const std::string& subdir) {
  if (fs::exists(dir / probe)) return dir;
  if (fs::exists(dir / subdir / probe)) return dir / subdir;
  throw DataError("missing " + (dir / probe).string());
}

}  // namespace

DatasetSplit load_cifar10(const fs::path& dir) {
  const fs::path root = locate(dir, "test_batch.bin", "cifar-10-batches-bin");
  DatasetSplit split;
  split.name = "cifar10";
  split.num_classes = 10;
  for (int i = 1; i <= 5; ++i) {
    const fs::path p = root / ("data_batch_" + std::to_string(i) + ".bin");
    if (!fs::exists(p)) throw DataError("missing " + p.string());
    split.train.append(read_cifar_file(p, CifarKind::CIFAR10));
  }
  split.test = read_cifar_file(root / "test_batch.bin", CifarKind::CIFAR10);
  return split;
}

DatasetSplit load_cifar100(const fs::path& dir) {
  const fs::path root = locate(dir, "test.bin", "cifar-100-binary");
  DatasetSplit split;
  split.name = "cifar100";
  split.num_classes = 100;
  if (!fs::exists(root / "train.bin")) throw DataError("missing " + (root / "train.bin").string());
  split.train = read_cifar_file(root / "train.bin", CifarKind::CIFAR100);
  split.test = read_cifar_file(root / "test.bin", CifarKind::CIFAR100);
  return split;
}

std::vector<std::size_t> stratified_indices(std::span<const int> labels, int num_classes,
                                            std::size_t n, std::uint64_t seed) {
  if (n > labels.size()) {
    std::ostringstream os;
    os << "requested " << n << " samples but only " << labels.size() << " are available";
    throw UsageError(os.str());
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw UsageError("label out of range");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  // Largest-remainder apportionment of n over class sizes.
  std::vector<std::size_t> quota(by_class.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const double exact = labels.empty() ? 0.0
                                        : static_cast<double>(n) * by_class[c].size() /
                                              static_cast<double>(labels.size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n && k < remainders.size(); ++k) {
    const std::size_t c = remainders[k].second;
    if (quota[c] < by_class[c].size()) {
      ++quota[c];
      ++assigned;
    }
  }
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    Rng rng(derive_seed(seed, "class" + std::to_string(c)));
    auto members = by_class[c];
    rng.shuffle(members);
    chosen.insert(chosen.end(), members.begin(), members.begin() + quota[c]);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

DatasetSplit load_subset(const DatasetSplit& split, std::size_t train_n, std::size_t test_n,
                         std::uint64_t seed) {
  DatasetSplit out;
  out.name = split.name;
  out.num_classes = split.num_classes;
  const auto tr = stratified_indices(split.train.labels, split.num_classes, train_n,
                                     derive_seed(seed, "train"));
  const auto te = stratified_indices(split.test.labels, split.num_classes, test_n,
                                     derive_seed(seed, "test"));
  out.train = split.train.select(tr);
  out.test = split.test.select(te);
  return out;
}

std::pair<DatasetSplit, LabeledBatch> split_heldout(const DatasetSplit& split,
                                                    double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw UsageError("held-out fraction must lie in (0,1)");
  }
  const auto n = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(split.train.size())));
  const auto held = stratified_indices(split.train.labels, split.num_classes, n,
                                       derive_seed(seed, "heldout"));
  std::vector<std::size_t> rest;
  rest.reserve(split.train.size() - held.size());
  std::size_t h = 0;
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    if (h < held.size() && held[h] == i) {
      ++h;
    } else {
      rest.push_back(i);
    }
  }
  DatasetSplit remaining;
  remaining.name = split.name;
  remaining.num_classes = split.num_classes;
  remaining.train = split.train.select(rest);
  remaining.test = split.test;
  return {std::move(remaining), split.train.select(held)};
}

Vec3 hsv_to_rgb(double h, double s, double v) {
  const double hh = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
  const int sector = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

double synth_hue_luminance(double h) {
  const Vec3 rgb = hsv_to_rgb(h, 1.0, 1.0);
  const auto& luma = opponent_matrix(ColorSpace::YUV).coefficients[0];
  return luma[0] * rgb[0] + luma[1] * rgb[1] + luma[2] * rgb[2];
}

namespace {

LabeledBatch synth_draw(std::size_t n_per_class, Rng& rng, const SynthRecipe& r) {
  LabeledBatch out;
  const std::size_t side = r.side;
  for (int c = 0; c < kSynthClasses; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const double h = rng.uniform(0.0, 360.0);
      double s = 0.0;
      double y = 0.0;
      if (c < 2) {
        y = std::exp(rng.uniform(std::log(r.pair_a_luma_lo), std::log(r.pair_a_luma_hi)));
        s = c == 0 ? rng.uniform(r.class0_sat_lo, r.class0_sat_hi)
                   : rng.uniform(r.class1_sat_lo, r.class1_sat_hi);
      } else {
        s = rng.uniform(r.pair_b_sat_lo, r.pair_b_sat_hi);
        y = c == 2 ? rng.uniform(r.class2_luma_lo, r.class2_luma_hi)
                   : rng.uniform(r.class3_luma_lo, r.class3_luma_hi);
      }
      const double v = y / (1.0 - s * (1.0 - synth_hue_luminance(h)));
      const Vec3 rgb = hsv_to_rgb(h, s, v);
      PlanarImage img(ColorSpace::SRGB, side, side);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double base = std::pow(std::clamp(rgb[ch], 0.0, 1.0), 1.0 / kLinearizationGamma);
        for (double& px : img.plane(ch)) {
          px = std::clamp(base + r.noise_sigma * rng.normal(), 0.0, 1.0);
        }
      }
      out.images.push_back(std::move(img));
      out.labels.push_back(c);
    }
  }
  return out;
}

}  // namespace

DatasetSplit synth_colorsep(std::size_t n_per_class, std::uint64_t seed,
                            std::size_t test_per_class, const SynthRecipe& recipe) {
  DatasetSplit split;
  split.name = "synth_colorsep";
  split.num_classes = kSynthClasses;
  Rng train_rng(derive_seed(seed, "synth-train"));
  Rng test_rng(derive_seed(seed, "synth-test"));
  split.train = synth_draw(n_per_class, train_rng, recipe);
  split.test = synth_draw(test_per_class, test_rng, recipe);
  return split;
}

PlanarImage flip_horizontal(const PlanarImage& img) {
  PlanarImage out = img;
  const std::size_t w = img.width();
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t y = 0; y < img.height(); ++y) {
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y, w - 1 - x);
    }
  }
  return out;
}

PlanarImage shift_image(const PlanarImage& img, int dx, int dy) {
  PlanarImage out = img;
  const auto h = static_cast<long>(img.height());
  const auto w = static_cast<long>(img.width());
  if (h == 0 || w == 0) return out;
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (long y = 0; y < h; ++y) {
      const long sy = std::clamp(y - dy, 0L, h - 1);
      for (long x = 0; x < w; ++x) {
        const long sx = std::clamp(x - dx, 0L, w - 1);
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
            img.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
      }
    }
  }
  return out;
}

LabeledBatch augment(const LabeledBatch& batch, const AugmentationConfig& cfg,
                     std::uint64_t seed) {
  cfg.validate();
  if (!cfg.enabled) return batch;
  for (const auto& img : batch.images) {
    if (img.space() != ColorSpace::SRGB && img.space() != ColorSpace::RGB_LINEAR) {
      throw UsageError("augment: images must be sRGB or linear RGB");
    }
  }
  Rng rng(seed);
  LabeledBatch out;
  out.labels = batch.labels;
  out.images.reserve(batch.size());
  for (const auto& img : batch.images) {
    const bool flip = rng.bernoulli(cfg.horizontal_flip);
    const auto max_dx = static_cast<long>(std::floor(cfg.shift_fraction * img.width()));
    const auto max_dy = static_cast<long>(std::floor(cfg.shift_fraction * img.height()));
    const long dx = static_cast<long>(rng.below(static_cast<std::uint64_t>(2 * max_dx + 1))) - max_dx;
    const long dy = static_cast<long>(rng.below(static_cast<std::uint64_t>(2 * max_dy + 1))) - max_dy;
    PlanarImage res = flip ? flip_horizontal(img) : img;
    if (dx != 0 || dy != 0) res = shift_image(res, static_cast<int>(dx), static_cast<int>(dy));
    out.images.push_back(std::move(res));
  }
  return out;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t shuffle_seed) {
  if (batch_size == 0) throw UsageError("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(shuffle_seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<long>(i),
                     order.begin() + static_cast<long>(std::min(n, i + batch_size)));
  }
  return out;
}

std::vector<LabeledBatch> batches(const LabeledBatch& data, std::size_t batch_size,
                                  std::uint64_t shuffle_seed) {
  std::vector<LabeledBatch> out;
  for (const auto& idx : batch_indices(data.size(), batch_size, shuffle_seed)) {
    out.push_back(data.select(idx));
  }
  return out;
}

ChannelStats compute_space_stats(const LabeledBatch& batch, ColorSpace space) {
  const auto converted = convert_batch(batch.images, space, 1);
  return compute_channel_stats(converted);
}

std::uint64_t dataset_fingerprint(const DatasetSplit& split) {
  Fnv1a64 h;
  const auto feed = [&h](const LabeledBatch& b) {
    const std::uint64_t n = b.size();
    h.update(&n, sizeof n);
    for (std::size_t i = 0; i < b.size(); ++i) {
      const std::int32_t label = b.labels[i];
      h.update(&label, sizeof label);
      const auto& img = b.images[i];
      const std::uint64_t dims[3] = {static_cast<std::uint64_t>(img.space()), img.height(),
                                     img.width()};
      h.update(dims, sizeof dims);
      h.update(img.data().data(), img.data().size_bytes());
    }
  };
  const std::int32_t k = split.num_classes;
  h.update(&k, sizeof k);
  feed(split.train);
  feed(split.test);
  return h.digest();
}

}  // namespace colornet
