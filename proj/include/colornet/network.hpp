#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "colornet/colorspace.hpp"
#include "colornet/dataset.hpp"
#include "colornet/layers.hpp"

namespace colornet {

/// Rows are samples, columns are classes.
using ScoreMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Topology {
  std::size_t in_channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t num_classes = 10;
  std::size_t filters1 = 32;
  std::size_t filters2 = 64;
  double dropout = 0.25;

  friend bool operator==(const Topology&, const Topology&) = default;
};

/// conv3x3(f1) relu conv3x3(f1) relu maxpool2 dropout
/// conv3x3(f2) relu conv3x3(f2) relu maxpool2 dropout flatten dense(classes)
template <typename T>
class CompactCnn {
 public:
  CompactCnn() = default;
  /// He-uniform weights drawn from `seed`, zero biases.
  CompactCnn(const Topology& topo, std::uint64_t seed);

  Tensor4<T> forward(const Tensor4<T>& x, bool training, Rng* dropout_rng);
  void backward(const Tensor4<T>& grad_logits);

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  void zero_grad();
  std::size_t param_count() const;
  const Topology& topology() const { return topo_; }

  static std::vector<std::string> layer_names();

  /// Copy with parameters converted to another scalar type.
  template <typename U>
  CompactCnn<U> cast() const {
    CompactCnn<U> out(topo_, 0);
    auto dst = out.parameters();
    auto src = parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
      for (std::size_t j = 0; j < src[i]->count(); ++j) {
        dst[i]->value[j] = static_cast<U>(src[i]->value[j]);
      }
    }
    return out;
  }

 private:
  Topology topo_;
  Conv2d<T> conv1_, conv2_, conv3_, conv4_;
  Relu<T> relu1_, relu2_, relu3_, relu4_;
  MaxPool2<T> pool1_, pool2_;
  Dropout<T> drop1_, drop2_;
  Dense<T> dense_;
};

struct TrainConfig {
  int epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  /// Fractions of `epochs` at which the learning rate is divided by 10.
  std::vector<double> lr_milestones{0.25, 0.5};
  double momentum = 0.9;
  double weight_decay = 1e-4;
  /// Unset: 0.2 without augmentation, 0.25 with it.
  std::optional<double> dropout_rate;
  bool augment = false;
  AugmentationConfig augmentation;
  std::uint64_t seed = 0;
  std::size_t filters1 = 32;
  std::size_t filters2 = 64;

  /// Throws UsageError listing every invalid field.
  void validate() const;
  double effective_dropout() const;
  double lr_at(int epoch) const;
};

struct EpochLog {
  int epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
};

/// One trained CNN bound to its input color space(s). A branch normally has
/// one space; early fusion stacks several spaces channel-wise.
struct BranchModel {
  std::vector<ColorSpace> spaces;
  std::vector<ChannelStats> stats;
  std::uint64_t seed = 0;
  TrainConfig config;
  CompactCnn<float> net;

  ColorSpace space() const { return spaces.front(); }
  /// "HSV", or "HSV+YUV" for stacked inputs.
  std::string id() const;
  std::size_t num_classes() const { return net.topology().num_classes; }
  std::size_t param_count() const { return net.param_count(); }
};

template <typename T>
struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<std::vector<T>> velocity;
};

/// Nesterov SGD:
///   d = g + wd * p   (wd skipped for parameters with decay == false)
///   v <- mu * v - lr * d
///   p <- p + mu * v - lr * d
template <typename T>
void sgd_nesterov_step(std::span<Parameter<T>* const> params, OptimizerState<T>& state);

/// Converts, normalizes and stacks images into a network input tensor.
/// Images must be sRGB or linear RGB, or already tagged with the single
/// space of `spaces`.
Tensor4<float> prepare_inputs(std::span<const PlanarImage> images,
                              std::span<const ColorSpace> spaces,
                              std::span<const ChannelStats> stats);

struct TrainResult {
  BranchModel model;
  std::vector<EpochLog> log;
};

/// Trains one CNN on `split` converted into `spaces`. Deterministic given
/// cfg.seed. Stats come from split.stats when present, else from split.train.
TrainResult train_branch(std::span<const ColorSpace> spaces, const DatasetSplit& split,
                         const TrainConfig& cfg);
TrainResult train_branch(ColorSpace space, const DatasetSplit& split, const TrainConfig& cfg);

/// Softmax probabilities in evaluation mode.
ScoreMatrix predict_scores(const BranchModel& model, std::span<const PlanarImage> images);
ScoreMatrix predict_scores(const BranchModel& model, const Tensor4<float>& inputs);

/// Fresh model with the topology and initialization `train_branch` would use.
BranchModel init_branch(std::span<const ColorSpace> spaces, std::vector<ChannelStats> stats,
                        std::size_t height, std::size_t width, std::size_t num_classes,
                        const TrainConfig& cfg);

std::vector<int> argmax_rows(const ScoreMatrix& scores);
double accuracy(const ScoreMatrix& scores, std::span<const int> labels);

}  // namespace colornet
