#include "colornet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "colornet/error.hpp"

namespace colornet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'L', 'R', 'N', 'C', 'K', 'P', 'T'};

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

json train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["lr_milestones"] = cfg.lr_milestones;
  j["momentum"] = cfg.momentum;
  j["weight_decay"] = cfg.weight_decay;
  j["dropout"] = cfg.effective_dropout();
  j["augment"] = cfg.augment;
  j["flip_probability"] = cfg.augmentation.horizontal_flip;
  j["shift_fraction"] = cfg.augmentation.shift_fraction;
  j["seed"] = cfg.seed;
  j["filters1"] = cfg.filters1;
  j["filters2"] = cfg.filters2;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.lr_milestones = j.value("lr_milestones", cfg.lr_milestones);
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  if (j.contains("dropout")) cfg.dropout_rate = j.at("dropout").get<double>();
  cfg.augment = j.value("augment", cfg.augment);
  cfg.augmentation.enabled = cfg.augment;
  cfg.augmentation.horizontal_flip = j.value("flip_probability", cfg.augmentation.horizontal_flip);
  cfg.augmentation.shift_fraction = j.value("shift_fraction", cfg.augmentation.shift_fraction);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.filters1 = j.value("filters1", cfg.filters1);
  cfg.filters2 = j.value("filters2", cfg.filters2);
  return cfg;
}

json stats_to_json(const ChannelStats& stats) {
  return json{{"mean", stats.mean}, {"std", stats.std}};
}

ChannelStats stats_from_json(const json& j) {
  ChannelStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  return s;
}

std::vector<std::uint8_t> serialize_branch(const BranchModel& model) {
  const auto& topo = model.net.topology();
  json manifest;
  manifest["format"] = "colornet-branch";
  manifest["format_version"] = kCheckpointVersion;
  manifest["layers"] = CompactCnn<float>::layer_names();
  manifest["topology"] = {{"in_channels", topo.in_channels}, {"height", topo.height},
                          {"width", topo.width},             {"num_classes", topo.num_classes},
                          {"filters1", topo.filters1},       {"filters2", topo.filters2},
                          {"dropout", topo.dropout}};
  json spaces = json::array();
  json stats = json::array();
  for (std::size_t i = 0; i < model.spaces.size(); ++i) {
    spaces.push_back(std::string(to_string(model.spaces[i])));
    stats.push_back(stats_to_json(model.stats.at(i)));
  }
  manifest["spaces"] = spaces;
  manifest["stats"] = stats;
  manifest["seed"] = model.seed;
  manifest["schedule"] = train_config_to_json(model.config);
  json params = json::array();
  std::size_t offset = 0;
  for (const auto* p : model.net.parameters()) {
    params.push_back({{"name", p->name}, {"shape", p->shape}, {"offset", offset},
                      {"count", p->count()}});
    offset += p->count();
  }
  manifest["parameters"] = params;
  manifest["parameter_dtype"] = "float32-le";

  const std::string text = manifest.dump(1);
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le(out, kCheckpointVersion, 4);
  put_le(out, text.size(), 8);
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset * 4);
  for (const auto* p : model.net.parameters()) {
    for (float v : p->value) put_le(out, std::bit_cast<std::uint32_t>(v), 4);
  }
  return out;
}

BranchModel deserialize_branch(std::span<const std::uint8_t> bytes, const std::string& source) {
  constexpr std::size_t header = sizeof(kMagic) + 4 + 8;
  if (bytes.size() < header || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError(source + ": not a colornet checkpoint");
  }
  const auto version = static_cast<std::uint32_t>(get_le(bytes.data() + 8, 4));
  if (version != kCheckpointVersion) {
    throw DataError(source + ": checkpoint format version " + std::to_string(version) +
                    " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t mlen = get_le(bytes.data() + 12, 8);
  if (mlen > bytes.size() - header) throw DataError(source + ": truncated manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.begin() + header, bytes.begin() + static_cast<long>(header + mlen));
  } catch (const json::exception& e) {
    throw DataError(source + ": malformed manifest: " + e.what());
  }
  try {
    if (manifest.at("format_version").get<std::uint32_t>() != kCheckpointVersion) {
      throw DataError(source + ": manifest version disagrees with header");
    }
    BranchModel model;
    for (const auto& s : manifest.at("spaces")) {
      model.spaces.push_back(color_space_from_string(s.get<std::string>()));
    }
    for (const auto& s : manifest.at("stats")) model.stats.push_back(stats_from_json(s));
    model.seed = manifest.at("seed").get<std::uint64_t>();
    model.config = train_config_from_json(manifest.at("schedule"));
    const auto& t = manifest.at("topology");
    Topology topo;
    topo.in_channels = t.at("in_channels").get<std::size_t>();
    topo.height = t.at("height").get<std::size_t>();
    topo.width = t.at("width").get<std::size_t>();
    topo.num_classes = t.at("num_classes").get<std::size_t>();
    topo.filters1 = t.at("filters1").get<std::size_t>();
    topo.filters2 = t.at("filters2").get<std::size_t>();
    topo.dropout = t.at("dropout").get<double>();
    model.net = CompactCnn<float>(topo, 0);

    const std::uint8_t* payload = bytes.data() + header + mlen;
    const std::size_t payload_size = bytes.size() - header - mlen;
    const auto params = model.net.parameters();
    const auto& table = manifest.at("parameters");
    if (table.size() != params.size()) throw DataError(source + ": parameter table mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& entry = table[i];
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = entry.at("count").get<std::size_t>();
      if (entry.at("name").get<std::string>() != params[i]->name || count != params[i]->count()) {
        throw DataError(source + ": parameter " + params[i]->name + " does not match topology");
      }
      if ((offset + count) * 4 > payload_size) {
        throw DataError(source + ": truncated parameter data for " + params[i]->name);
      }
      for (std::size_t k = 0; k < count; ++k) {
        params[i]->value[k] = std::bit_cast<float>(
            static_cast<std::uint32_t>(get_le(payload + (offset + k) * 4, 4)));
      }
    }
    if (model.spaces.empty() || model.stats.size() != model.spaces.size()) {
      throw DataError(source + ": spaces and stats disagree");
    }
    return model;
  } catch (const json::exception& e) {
    throw DataError(source + ": malformed manifest: " + e.what());
  } catch (const UsageError& e) {
    throw DataError(source + ": " + e.what());
  }
}

void save_branch(const BranchModel& model, const fs::path& path) {
  write_file_bytes(path, serialize_branch(model));
}

BranchModel load_branch(const fs::path& path) {
  return deserialize_branch(read_file_bytes(path), path.string());
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

void write_text_file(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace colornet
