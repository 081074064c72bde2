#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "colornet/dataset.hpp"

namespace colornet {

/// Planar image container (".cpl"):
///   8 bytes   magic "CLRNPLNR"
///   u32 LE    format version
///   u64 LE    header length
///   header    JSON {space, count, height, width, channels, labels}
///   payload   f64 LE values, image after image, each in planar order
inline constexpr std::uint32_t kPlanarVersion = 1;

std::vector<std::uint8_t> encode_planar(const LabeledBatch& batch);
LabeledBatch decode_planar(std::span<const std::uint8_t> bytes,
                           const std::string& source = "<memory>");
void write_planar(const std::filesystem::path& path, const LabeledBatch& batch);
LabeledBatch read_planar(const std::filesystem::path& path);

/// Binary PPM (P6, maxval <= 255) as an sRGB image scaled to [0,1].
PlanarImage read_ppm(const std::filesystem::path& path);
PlanarImage decode_ppm(std::span<const std::uint8_t> bytes, const std::string& source = "<memory>");
/// sRGB or linear RGB image written as 8-bit P6 (values rounded).
void write_ppm(const std::filesystem::path& path, const PlanarImage& img);

/// Reads a PPM image, a CIFAR-10 binary batch (.bin) or a planar container
/// (.cpl), chosen by extension. PPM input has no label, so `labels` stays
/// empty.
LabeledBatch read_image_input(const std::filesystem::path& path);

}  // namespace colornet
