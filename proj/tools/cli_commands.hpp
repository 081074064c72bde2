#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "colornet/dataset.hpp"
#include "colornet/fusion.hpp"

namespace colornet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Environment variable that sets the default output directory.
inline constexpr const char* kOutputDirEnv = "COLORNET_OUTPUT_DIR";

struct DataOptions {
  std::string kind = "synth";  // synth, cifar10, cifar100
  std::string dir;
  std::size_t train_size = 0;  // 0 keeps the full split
  std::size_t test_size = 0;
  std::size_t synth_per_class = 200;
  std::size_t synth_test_per_class = 200;
  std::size_t synth_side = 16;
  std::uint64_t data_seed = 1;
};

struct TrainOptions {
  DataOptions data;
  TrainConfig train;
  std::string spaces = "RGB,LAB,HSV,YUV,YCbCr,HED,YIQ";
  std::string fusion = "average";
  double heldout_fraction = 0.1;
  HeadConfig head;
  unsigned jobs = 1;
  bool init_only = false;
  std::filesystem::path out;
};

struct EvaluateOptions {
  DataOptions data;
  std::filesystem::path model;
  std::filesystem::path out;
};

struct AblateOptions {
  DataOptions data;
  TrainConfig train;
  std::string subsets;  // "HSV;YUV;HSV+YUV"; empty: every comparison space alone
  bool weighted = false;
  bool early = false;
  double heldout_fraction = 0.1;
  HeadConfig head;
  unsigned jobs = 1;
  std::filesystem::path out;
};

struct ConvertOptions {
  std::filesystem::path input;
  std::string target;
  std::filesystem::path output;
  unsigned threads = 0;
  std::filesystem::path out;
};

struct ReportOptions {
  std::filesystem::path run;
};

DatasetSplit load_dataset(const DataOptions& opts);
/// "HSV,YUV" or "HSV+YUV" into spaces. Throws UsageError on unknown names.
std::vector<ColorSpace> parse_space_list(const std::string& text);
/// "HSV;YUV;HSV+YUV" into subsets.
std::vector<std::vector<ColorSpace>> parse_subsets(const std::string& text);

void cmd_convert(const ConvertOptions& opts);
void cmd_train(const TrainOptions& opts, const std::string& resolved_config);
void cmd_evaluate(const EvaluateOptions& opts, const std::string& resolved_config);
void cmd_ablate(const AblateOptions& opts, const std::string& resolved_config);
void cmd_report(const ReportOptions& opts);

/// Parses arguments, runs one subcommand and maps errors to exit codes.
int run(int argc, char** argv);

}  // namespace colornet::cli
