#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "colornet/analytics.hpp"
#include "colornet/network.hpp"

namespace colornet {

enum class FusionKind { AVERAGE, WEIGHTED_DENSE };

std::string_view to_string(FusionKind kind);
FusionKind fusion_kind_from_string(std::string_view name);

/// AVERAGE has no parameters. WEIGHTED_DENSE maps the concatenated branch
/// probabilities x (length branches * classes) to softmax(W x + b), with W
/// stored row-major as classes x (branches * classes).
struct FusionHead {
  FusionKind kind = FusionKind::AVERAGE;
  std::size_t num_branches = 0;
  std::size_t num_classes = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  std::size_t param_count() const { return weight.size() + bias.size(); }
};

/// WEIGHTED_DENSE head with W = [I I ... I] and zero bias. Its argmax
/// matches average fusion.
FusionHead identity_head(std::size_t num_branches, std::size_t num_classes);

struct HeadConfig {
  int epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

/// Mean of the branch score matrices.
ScoreMatrix average_fusion(std::span<const ScoreMatrix> scores);
ScoreMatrix apply_head(const FusionHead& head, std::span<const ScoreMatrix> scores);
/// Softmax cross-entropy + Nesterov SGD on the head alone, starting from `init`.
FusionHead train_head(std::span<const ScoreMatrix> scores, std::span<const int> labels,
                      const HeadConfig& cfg, const FusionHead& init);

struct FusionModel {
  std::vector<BranchModel> branches;
  FusionHead head;

  std::size_t num_classes() const;
  std::vector<ColorSpace> spaces() const;
  std::size_t param_count() const;
};

/// Seed of the branch for `space` under master seed `master`.
std::uint64_t branch_seed(std::uint64_t master, ColorSpace space);

/// Trains one branch per space (each with its own stats and derived seed),
/// up to `jobs` at a time. Results do not depend on `jobs`. `logs`, when
/// given, receives one training log per branch.
FusionModel train_all_branches(const DatasetSplit& split, std::span<const ColorSpace> spaces,
                               const TrainConfig& cfg, unsigned jobs = 1,
                               std::vector<std::vector<EpochLog>>* logs = nullptr);

std::vector<ScoreMatrix> branch_scores(const FusionModel& model,
                                       std::span<const PlanarImage> images);
ScoreMatrix fused_scores(const FusionModel& model, std::span<const PlanarImage> images);

/// Fits a WEIGHTED_DENSE head on held-out data. Branches are not modified.
FusionModel train_fusion_head(FusionModel model, const LabeledBatch& heldout,
                              const HeadConfig& cfg);

/// Concatenates the normalized conversions of `img`, in the order of
/// `spaces`, into a (1, sum of channels, h, w) tensor.
Tensor4<double> early_fusion_assemble(const PlanarImage& img, std::span<const ColorSpace> spaces,
                                      std::span<const ChannelStats> stats);

/// Directory with one checkpoint per branch plus head.json.
void save_fusion(const FusionModel& model, const std::filesystem::path& dir);
FusionModel load_fusion(const std::filesystem::path& dir);

struct AblationRow {
  std::string subset;
  std::string fusion_kind;
  double accuracy = 0.0;
  std::size_t params = 0;
  double wall_time = 0.0;
};

struct AblationOptions {
  bool weighted = true;
  bool early = false;
  unsigned jobs = 1;
  /// Share of the training split reserved for the weighted head. Branches
  /// never see it. Ignored when `weighted` is false.
  double heldout_fraction = 0.1;
  HeadConfig head;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  /// Test-set reports of every trained model, keyed by row label.
  std::vector<EvalReport> reports;
  /// Number of single-space branches actually trained.
  std::size_t branches_trained = 0;
};

std::string subset_label(std::span<const ColorSpace> subset);

/// For each subset: singletons give one "single" row; larger subsets give
/// "average", plus "weighted" and "early" rows when enabled. A space that
/// appears in several subsets is trained once.
AblationResult ablate_subsets(const DatasetSplit& split,
                              const std::vector<std::vector<ColorSpace>>& subsets,
                              const TrainConfig& cfg, const AblationOptions& opts = {});

std::string ablation_csv(const AblationResult& result, bool include_time);
nlohmann::json ablation_json(const AblationResult& result, bool include_time);

}  // namespace colornet
