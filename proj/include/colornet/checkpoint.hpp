#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "colornet/network.hpp"

namespace colornet {

/// Container layout:
///   8 bytes   magic "CLRNCKPT"
///   u32 LE    format version
///   u64 LE    manifest length in bytes
///   manifest  UTF-8 JSON (topology, spaces, stats, seed, schedule, parameter table)
///   payload   f32 LE parameter arrays in manifest order
inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json train_config_to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json stats_to_json(const ChannelStats& stats);
ChannelStats stats_from_json(const nlohmann::json& j);

std::vector<std::uint8_t> serialize_branch(const BranchModel& model);
/// Throws DataError on malformed input or a version other than
/// kCheckpointVersion.
BranchModel deserialize_branch(std::span<const std::uint8_t> bytes,
                               const std::string& source = "<memory>");

void save_branch(const BranchModel& model, const std::filesystem::path& path);
BranchModel load_branch(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace colornet
