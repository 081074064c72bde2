#include "colornet/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "colornet/error.hpp"

namespace colornet {

template <typename T>
CompactCnn<T>::CompactCnn(const Topology& topo, std::uint64_t seed)
    : topo_(topo),
      conv1_("conv1", topo.in_channels, topo.filters1),
      conv2_("conv2", topo.filters1, topo.filters1),
      conv3_("conv3", topo.filters1, topo.filters2),
      conv4_("conv4", topo.filters2, topo.filters2),
      drop1_(topo.dropout),
      drop2_(topo.dropout),
      dense_("dense", topo.filters2 * (topo.height / 2 / 2) * (topo.width / 2 / 2),
             topo.num_classes) {
  if (topo.height < 4 || topo.width < 4) throw UsageError("CompactCnn: input must be at least 4x4");
  if (topo.num_classes < 2) throw UsageError("CompactCnn: need at least 2 classes");
  Rng rng(seed);
  for (auto* p : parameters()) {
    if (!p->decay) continue;  // biases stay zero
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < p->shape.size(); ++d) fan_in *= p->shape[d];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : p->value) v = static_cast<T>(rng.uniform(-bound, bound));
  }
}

template <typename T>
Tensor4<T> CompactCnn<T>::forward(const Tensor4<T>& x, bool training, Rng* dropout_rng) {
  if (x.c != topo_.in_channels || x.h != topo_.height || x.w != topo_.width) {
    std::ostringstream os;
    os << "CompactCnn: input (" << x.c << ',' << x.h << ',' << x.w << ") does not match topology ("
       << topo_.in_channels << ',' << topo_.height << ',' << topo_.width << ')';
    throw UsageError(os.str());
  }
  Tensor4<T> h = relu1_.forward(conv1_.forward(x));
  h = relu2_.forward(conv2_.forward(h));
  h = drop1_.forward(pool1_.forward(h), training, dropout_rng);
  h = relu3_.forward(conv3_.forward(h));
  h = relu4_.forward(conv4_.forward(h));
  h = drop2_.forward(pool2_.forward(h), training, dropout_rng);
  return dense_.forward(h);
}

template <typename T>
void CompactCnn<T>::backward(const Tensor4<T>& grad_logits) {
  Tensor4<T> g = dense_.backward(grad_logits);
  g = pool2_.backward(drop2_.backward(g));
  g = conv4_.backward(relu4_.backward(g));
  g = conv3_.backward(relu3_.backward(g));
  g = pool1_.backward(drop1_.backward(g));
  g = conv2_.backward(relu2_.backward(g));
  conv1_.backward(relu1_.backward(g));
}

template <typename T>
std::vector<Parameter<T>*> CompactCnn<T>::parameters() {
  return {&conv1_.weight, &conv1_.bias, &conv2_.weight, &conv2_.bias, &conv3_.weight,
          &conv3_.bias,   &conv4_.weight, &conv4_.bias, &dense_.weight, &dense_.bias};
}

template <typename T>
std::vector<const Parameter<T>*> CompactCnn<T>::parameters() const {
  return {&conv1_.weight, &conv1_.bias, &conv2_.weight, &conv2_.bias, &conv3_.weight,
          &conv3_.bias,   &conv4_.weight, &conv4_.bias, &dense_.weight, &dense_.bias};
}

template <typename T>
void CompactCnn<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
std::size_t CompactCnn<T>::param_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->count();
  return n;
}

template <typename T>
std::vector<std::string> CompactCnn<T>::layer_names() {
  return {"conv", "conv", "maxpool", "dropout", "conv", "conv", "maxpool", "dropout", "dense"};
}

template class CompactCnn<float>;
template class CompactCnn<double>;

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (epochs < 1) problems.push_back("epochs must be >= 1");
  if (batch_size < 1) problems.push_back("batch_size must be >= 1");
  if (!(learning_rate > 0.0 && std::isfinite(learning_rate))) {
    problems.push_back("learning_rate must be positive");
  }
  for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
    const double m = lr_milestones[i];
    if (!(m > 0.0 && m < 1.0)) problems.push_back("lr_milestones must lie in (0,1)");
    if (i > 0 && !(m > lr_milestones[i - 1])) {
      problems.push_back("lr_milestones must be strictly increasing");
    }
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) problems.push_back("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) problems.push_back("weight_decay must be >= 0");
  if (dropout_rate && !(*dropout_rate >= 0.0 && *dropout_rate < 1.0)) {
    problems.push_back("dropout must lie in [0,1)");
  }
  if (filters1 < 1 || filters2 < 1) problems.push_back("filter counts must be >= 1");
  if (!(augmentation.horizontal_flip >= 0.0 && augmentation.horizontal_flip <= 1.0)) {
    problems.push_back("flip_probability must lie in [0,1]");
  }
  if (!(augmentation.shift_fraction >= 0.0 && augmentation.shift_fraction <= 0.5)) {
    problems.push_back("shift_fraction must lie in [0,0.5]");
  }
  if (!problems.empty()) {
    std::string msg = "invalid training configuration:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw UsageError(msg);
  }
}

double TrainConfig::effective_dropout() const {
  if (dropout_rate) return *dropout_rate;
  return augment ? 0.25 : 0.2;
}

double TrainConfig::lr_at(int epoch) const {
  double lr = learning_rate;
  for (double m : lr_milestones) {
    if (epoch >= static_cast<int>(std::floor(m * epochs))) lr /= 10.0;
  }
  return lr;
}

std::string BranchModel::id() const {
  std::string s;
  for (std::size_t i = 0; i < spaces.size(); ++i) {
    if (i) s += '+';
    s += to_string(spaces[i]);
  }
  return s;
}

template <typename T>
void sgd_nesterov_step(std::span<Parameter<T>* const> params, OptimizerState<T>& state) {
  if (state.velocity.size() != params.size()) {
    state.velocity.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.velocity[i].assign(params[i]->count(), T(0));
    }
  }
  const T lr = static_cast<T>(state.learning_rate);
  const T mu = static_cast<T>(state.momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& v = state.velocity[i];
    if (v.size() != p.count() || p.grad.size() != p.count()) {
      throw UsageError("sgd_nesterov_step: buffer shape mismatch for " + p.name);
    }
    const T wd = p.decay ? static_cast<T>(state.weight_decay) : T(0);
    for (std::size_t j = 0; j < p.count(); ++j) {
      const T d = p.grad[j] + wd * p.value[j];
      v[j] = mu * v[j] - lr * d;
      p.value[j] += mu * v[j] - lr * d;
    }
  }
}

template void sgd_nesterov_step(std::span<Parameter<float>* const>, OptimizerState<float>&);
template void sgd_nesterov_step(std::span<Parameter<double>* const>, OptimizerState<double>&);

Tensor4<float> prepare_inputs(std::span<const PlanarImage> images,
                              std::span<const ColorSpace> spaces,
                              std::span<const ChannelStats> stats) {
  if (spaces.empty()) throw UsageError("prepare_inputs: no color spaces given");
  if (stats.size() != spaces.size()) {
    throw UsageError("prepare_inputs: need one stats entry per color space");
  }
  std::size_t channels = 0;
  for (auto s : spaces) channels += channel_count(s);
  if (images.empty()) return Tensor4<float>(0, channels, 0, 0);
  const std::size_t h = images.front().height();
  const std::size_t w = images.front().width();
  Tensor4<float> out(images.size(), channels, h, w);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    if (img.height() != h || img.width() != w) {
      throw UsageError("prepare_inputs: images differ in dimensions");
    }
    const bool source = img.space() == ColorSpace::SRGB || img.space() == ColorSpace::RGB_LINEAR;
    const bool pre_converted = spaces.size() == 1 && img.space() == spaces[0];
    if (!source && !pre_converted) {
      throw UsageError(std::string("prepare_inputs: image is ") +
                       std::string(to_string(img.space())) + " but the model expects " +
                       std::string(to_string(spaces[0])));
    }
    float* dst = out.values.data() + i * out.sample_size();
    for (std::size_t s = 0; s < spaces.size(); ++s) {
      const PlanarImage norm = normalize_for_network(convert(img, spaces[s]), stats[s]);
      for (double v : norm.data()) *dst++ = static_cast<float>(v);
    }
  }
  return out;
}

namespace {

Tensor4<float> gather(const Tensor4<float>& all, std::span<const std::size_t> idx) {
  Tensor4<float> out(idx.size(), all.c, all.h, all.w);
  const std::size_t ss = all.sample_size();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(all.values.begin() + static_cast<long>(idx[i] * ss), ss,
                out.values.begin() + static_cast<long>(i * ss));
  }
  return out;
}

std::vector<ChannelStats> stats_for_spaces(const DatasetSplit& split,
                                           std::span<const ColorSpace> spaces) {
  std::vector<ChannelStats> stats;
  for (auto s : spaces) {
    auto it = split.stats.find(s);
    stats.push_back(it != split.stats.end() ? it->second : compute_space_stats(split.train, s));
  }
  return stats;
}

ScoreMatrix scores_of(CompactCnn<float>& net, const Tensor4<float>& inputs) {
  constexpr std::size_t chunk = 256;
  const std::size_t k = net.topology().num_classes;
  ScoreMatrix scores(static_cast<long>(inputs.n), static_cast<long>(k));
  for (std::size_t start = 0; start < inputs.n; start += chunk) {
    const std::size_t end = std::min(inputs.n, start + chunk);
    Tensor4<float> part(end - start, inputs.c, inputs.h, inputs.w);
    std::copy(inputs.values.begin() + static_cast<long>(start * inputs.sample_size()),
              inputs.values.begin() + static_cast<long>(end * inputs.sample_size()),
              part.values.begin());
    const auto probs = softmax_rows(net.forward(part, false, nullptr));
    for (std::size_t i = 0; i < part.n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        scores(static_cast<long>(start + i), static_cast<long>(j)) = probs[i * k + j];
      }
    }
  }
  return scores;
}

}  // namespace

BranchModel init_branch(std::span<const ColorSpace> spaces, std::vector<ChannelStats> stats,
                        std::size_t height, std::size_t width, std::size_t num_classes,
                        const TrainConfig& cfg) {
  if (spaces.empty()) throw UsageError("init_branch: no color spaces given");
  BranchModel model;
  model.spaces.assign(spaces.begin(), spaces.end());
  model.stats = std::move(stats);
  model.seed = cfg.seed;
  model.config = cfg;
  Topology topo;
  topo.in_channels = 0;
  for (auto s : spaces) topo.in_channels += channel_count(s);
  topo.height = height;
  topo.width = width;
  topo.num_classes = num_classes;
  topo.filters1 = cfg.filters1;
  topo.filters2 = cfg.filters2;
  topo.dropout = cfg.effective_dropout();
  model.net = CompactCnn<float>(topo, cfg.seed);
  return model;
}

TrainResult train_branch(std::span<const ColorSpace> spaces, const DatasetSplit& split,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (split.train.empty()) throw UsageError("train_branch: empty training set");
  split.train.validate(split.num_classes);
  const auto& first = split.train.images.front();

  TrainResult result;
  result.model = init_branch(spaces, stats_for_spaces(split, spaces), first.height(),
                             first.width(), static_cast<std::size_t>(split.num_classes), cfg);
  BranchModel& model = result.model;
  const std::string id = model.id();

  const Tensor4<float> test_x = prepare_inputs(split.test.images, model.spaces, model.stats);
  Tensor4<float> train_x;
  if (!cfg.augment) train_x = prepare_inputs(split.train.images, model.spaces, model.stats);

  OptimizerState<float> opt;
  opt.momentum = cfg.momentum;
  opt.weight_decay = cfg.weight_decay;
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
  auto params = model.net.parameters();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.learning_rate = cfg.lr_at(epoch);
    if (cfg.augment) {
      const auto aug = augment(split.train, cfg.augmentation,
                               derive_seed(cfg.seed, "augment" + std::to_string(epoch)));
      train_x = prepare_inputs(aug.images, model.spaces, model.stats);
    }
    double loss_sum = 0.0;
    const auto order = batch_indices(split.train.size(), cfg.batch_size,
                                     derive_seed(cfg.seed, "shuffle" + std::to_string(epoch)));
    for (const auto& idx : order) {
      const Tensor4<float> xb = gather(train_x, idx);
      std::vector<int> yb(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = split.train.labels[idx[i]];
      const Tensor4<float> logits = model.net.forward(xb, true, &dropout_rng);
      const auto loss = softmax_cross_entropy(logits, yb);
      if (!std::isfinite(loss.loss)) {
        throw NumericError(id + ": training loss became non-finite in epoch " +
                               std::to_string(epoch + 1),
                           epoch + 1);
      }
      loss_sum += loss.loss * static_cast<double>(idx.size());
      model.net.zero_grad();
      model.net.backward(loss.grad);
      sgd_nesterov_step<float>(params, opt);
    }
    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.learning_rate = opt.learning_rate;
    entry.train_loss = loss_sum / static_cast<double>(split.train.size());
    entry.test_accuracy =
        split.test.empty() ? 0.0 : accuracy(scores_of(model.net, test_x), split.test.labels);
    result.log.push_back(entry);
  }
  return result;
}

TrainResult train_branch(ColorSpace space, const DatasetSplit& split, const TrainConfig& cfg) {
  const ColorSpace spaces[] = {space};
  return train_branch(spaces, split, cfg);
}

ScoreMatrix predict_scores(const BranchModel& model, const Tensor4<float>& inputs) {
  // Forward passes write layer caches, so inference runs on a private copy.
  CompactCnn<float> net = model.net;
  return scores_of(net, inputs);
}

ScoreMatrix predict_scores(const BranchModel& model, std::span<const PlanarImage> images) {
  return predict_scores(model, prepare_inputs(images, model.spaces, model.stats));
}

std::vector<int> argmax_rows(const ScoreMatrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (long i = 0; i < scores.rows(); ++i) {
    long best = 0;
    for (long j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > scores(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const ScoreMatrix& scores, std::span<const int> labels) {
  if (static_cast<std::size_t>(scores.rows()) != labels.size()) {
    throw UsageError("accuracy: score rows and label count differ");
  }
  if (labels.empty()) return 0.0;
  const auto pred = argmax_rows(scores);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace colornet
