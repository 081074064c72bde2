#include "colornet/planar_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <iterator>

#include <json.hpp>

#include "colornet/checkpoint.hpp"
#include "colornet/error.hpp"

namespace colornet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'L', 'R', 'N', 'P', 'L', 'N', 'R'};

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_planar(const LabeledBatch& batch) {
  if (!batch.labels.empty() && batch.labels.size() != batch.images.size()) {
    throw UsageError("encode_planar: label count differs from image count");
  }
  json header;
  header["count"] = batch.images.size();
  if (!batch.images.empty()) {
    const auto& f = batch.images.front();
    for (const auto& img : batch.images) {
      if (!img.same_shape(f) || img.space() != f.space()) {
        throw UsageError("encode_planar: images differ in shape or color space");
      }
    }
    header["space"] = std::string(to_string(f.space()));
    header["height"] = f.height();
    header["width"] = f.width();
    header["channels"] = f.channels();
  }
  header["labels"] = batch.labels;
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le(out, kPlanarVersion, 4);
  put_le(out, text.size(), 8);
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& img : batch.images) {
    for (double v : img.data()) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  }
  return out;
}

LabeledBatch decode_planar(std::span<const std::uint8_t> bytes, const std::string& source) {
  constexpr std::size_t fixed = sizeof(kMagic) + 4 + 8;
  if (bytes.size() < fixed || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError(source + ": not a planar image container");
  }
  const auto version = static_cast<std::uint32_t>(get_le(bytes.data() + 8, 4));
  if (version != kPlanarVersion) {
    throw DataError(source + ": planar container version " + std::to_string(version) +
                    " is not supported");
  }
  const std::uint64_t hlen = get_le(bytes.data() + 12, 8);
  if (hlen > bytes.size() - fixed) throw DataError(source + ": truncated header");
  LabeledBatch out;
  try {
    const json header =
        json::parse(bytes.begin() + fixed, bytes.begin() + static_cast<long>(fixed + hlen));
    const auto count = header.at("count").get<std::size_t>();
    out.labels = header.at("labels").get<std::vector<int>>();
    if (count == 0) return out;
    const ColorSpace space = color_space_from_string(header.at("space").get<std::string>());
    const auto h = header.at("height").get<std::size_t>();
    const auto w = header.at("width").get<std::size_t>();
    if (header.at("channels").get<std::size_t>() != channel_count(space)) {
      throw DataError(source + ": channel count does not match color space");
    }
    const std::size_t per = channel_count(space) * h * w;
    if (bytes.size() - fixed - hlen != count * per * 8) {
      throw DataError(source + ": payload size does not match header");
    }
    const std::uint8_t* p = bytes.data() + fixed + hlen;
    for (std::size_t i = 0; i < count; ++i) {
      std::vector<double> values(per);
      for (auto& v : values) {
        v = std::bit_cast<double>(get_le(p, 8));
        p += 8;
      }
      out.images.emplace_back(space, h, w, std::move(values));
    }
  } catch (const json::exception& e) {
    throw DataError(source + ": malformed header: " + e.what());
  } catch (const UsageError& e) {
    throw DataError(source + ": " + e.what());
  }
  return out;
}

void write_planar(const fs::path& path, const LabeledBatch& batch) {
  write_file_bytes(path, encode_planar(batch));
}

LabeledBatch read_planar(const fs::path& path) {
  return decode_planar(read_file_bytes(path), path.string());
}

PlanarImage decode_ppm(std::span<const std::uint8_t> bytes, const std::string& source) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* what) {
    skip_space();
    std::size_t v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) throw DataError(source + ": missing PPM " + what);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw DataError(source + ": not a binary PPM (P6) file");
  }
  pos = 2;
  const std::size_t w = read_int("width");
  const std::size_t h = read_int("height");
  const std::size_t maxval = read_int("maxval");
  if (w == 0 || h == 0) throw DataError(source + ": empty PPM image");
  if (maxval == 0 || maxval > 255) throw DataError(source + ": only 8-bit PPM is supported");
  ++pos;  // single whitespace before the raster
  if (bytes.size() < pos + 3 * w * h) {
    throw DataError(source + ": truncated PPM raster at byte offset " + std::to_string(bytes.size()));
  }
  PlanarImage img(ColorSpace::SRGB, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        img.at(c, y, x) = bytes[pos++] / static_cast<double>(maxval);
      }
    }
  }
  return img;
}

PlanarImage read_ppm(const fs::path& path) {
  return decode_ppm(read_file_bytes(path), path.string());
}

void write_ppm(const fs::path& path, const PlanarImage& img) {
  if (img.space() != ColorSpace::SRGB && img.space() != ColorSpace::RGB_LINEAR) {
    throw UsageError("write_ppm: image must be sRGB or linear RGB");
  }
  const std::string head =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
    }
  }
  write_file_bytes(path, out);
}

LabeledBatch read_image_input(const fs::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".ppm") {
    LabeledBatch b;
    b.images.push_back(read_ppm(path));
    return b;
  }
  if (ext == ".bin") return read_cifar_file(path, CifarKind::CIFAR10);
  if (ext == ".cpl") return read_planar(path);
  throw UsageError("unsupported input '" + path.string() + "' (expected .ppm, .bin or .cpl)");
}

}  // namespace colornet
