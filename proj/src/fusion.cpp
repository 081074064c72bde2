#include "colornet/fusion.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <sstream>
#include <thread>

#include "colornet/checkpoint.hpp"
#include "colornet/error.hpp"

namespace colornet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint32_t kHeadVersion = 1;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void check_same_shape(std::span<const ScoreMatrix> scores, const char* op) {
  if (scores.empty()) throw UsageError(std::string(op) + ": no score matrices");
  for (const auto& s : scores) {
    if (s.rows() != scores.front().rows() || s.cols() != scores.front().cols()) {
      throw UsageError(std::string(op) + ": score matrices differ in shape");
    }
  }
}

struct TrainedBranch {
  BranchModel model;
  std::vector<EpochLog> log;
  double seconds = 0.0;
};

std::vector<TrainedBranch> train_branches(const DatasetSplit& split,
                                          std::span<const ColorSpace> spaces,
                                          const TrainConfig& cfg, unsigned jobs) {
  if (spaces.empty()) throw UsageError("train_all_branches: no color spaces given");
  std::vector<TrainedBranch> out(spaces.size());
  std::vector<std::exception_ptr> errors(spaces.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < spaces.size(); i = next++) {
      try {
        TrainConfig bcfg = cfg;
        bcfg.seed = branch_seed(cfg.seed, spaces[i]);
        const auto t0 = std::chrono::steady_clock::now();
        auto res = train_branch(spaces[i], split, bcfg);
        out[i] = {std::move(res.model), std::move(res.log), seconds_since(t0)};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n_workers =
      static_cast<unsigned>(std::clamp<std::size_t>(jobs == 0 ? 1 : jobs, 1, spaces.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < spaces.size(); ++i) {
    if (!errors[i]) continue;
    const std::string tag = "branch " + std::string(to_string(spaces[i])) + ": ";
    try {
      std::rethrow_exception(errors[i]);
    } catch (const NumericError& e) {
      throw NumericError(tag + e.what(), e.epoch());
    } catch (const UsageError& e) {
      throw UsageError(tag + e.what());
    } catch (const DataError& e) {
      throw DataError(tag + e.what());
    }
  }
  return out;
}

std::vector<double> concat_row(std::span<const ScoreMatrix> scores, long row) {
  std::vector<double> x;
  for (const auto& s : scores) {
    for (long j = 0; j < s.cols(); ++j) x.push_back(s(row, j));
  }
  return x;
}

}  // namespace

std::string_view to_string(FusionKind kind) {
  return kind == FusionKind::AVERAGE ? "average" : "weighted";
}

FusionKind fusion_kind_from_string(std::string_view name) {
  if (name == "average" || name == "AVERAGE") return FusionKind::AVERAGE;
  if (name == "weighted" || name == "WEIGHTED_DENSE" || name == "weighted_dense") {
    return FusionKind::WEIGHTED_DENSE;
  }
  throw UsageError("unknown fusion kind '" + std::string(name) + "' (expected average or weighted)");
}

FusionHead identity_head(std::size_t num_branches, std::size_t num_classes) {
  FusionHead head;
  head.kind = FusionKind::WEIGHTED_DENSE;
  head.num_branches = num_branches;
  head.num_classes = num_classes;
  const std::size_t in = num_branches * num_classes;
  head.weight.assign(num_classes * in, 0.0);
  head.bias.assign(num_classes, 0.0);
  for (std::size_t b = 0; b < num_branches; ++b) {
    for (std::size_t k = 0; k < num_classes; ++k) head.weight[k * in + b * num_classes + k] = 1.0;
  }
  return head;
}

ScoreMatrix average_fusion(std::span<const ScoreMatrix> scores) {
  check_same_shape(scores, "average_fusion");
  ScoreMatrix out = ScoreMatrix::Zero(scores.front().rows(), scores.front().cols());
  for (const auto& s : scores) out += s;
  out /= static_cast<double>(scores.size());
  return out;
}

ScoreMatrix apply_head(const FusionHead& head, std::span<const ScoreMatrix> scores) {
  if (head.kind == FusionKind::AVERAGE) return average_fusion(scores);
  check_same_shape(scores, "apply_head");
  if (scores.size() != head.num_branches ||
      static_cast<std::size_t>(scores.front().cols()) != head.num_classes) {
    throw UsageError("apply_head: head expects " + std::to_string(head.num_branches) +
                     " branches of " + std::to_string(head.num_classes) + " classes");
  }
  const std::size_t k = head.num_classes;
  const std::size_t in = head.num_branches * k;
  ScoreMatrix out(scores.front().rows(), static_cast<long>(k));
  for (long i = 0; i < out.rows(); ++i) {
    const auto x = concat_row(scores, i);
    std::vector<double> z(k);
    double mx = -INFINITY;
    for (std::size_t c = 0; c < k; ++c) {
      double v = head.bias[c];
      for (std::size_t j = 0; j < in; ++j) v += head.weight[c * in + j] * x[j];
      z[c] = v;
      mx = std::max(mx, v);
    }
    double sum = 0.0;
    for (auto& v : z) sum += (v = std::exp(v - mx));
    for (std::size_t c = 0; c < k; ++c) out(i, static_cast<long>(c)) = z[c] / sum;
  }
  return out;
}

FusionHead train_head(std::span<const ScoreMatrix> scores, std::span<const int> labels,
                      const HeadConfig& cfg, const FusionHead& init) {
  check_same_shape(scores, "train_head");
  if (labels.empty()) throw UsageError("train_head: empty held-out set");
  if (static_cast<std::size_t>(scores.front().rows()) != labels.size()) {
    throw UsageError("train_head: score rows and label count differ");
  }
  if (init.kind != FusionKind::WEIGHTED_DENSE || init.num_branches != scores.size() ||
      init.num_classes != static_cast<std::size_t>(scores.front().cols())) {
    throw UsageError("train_head: initial head does not match the branch scores");
  }
  const std::size_t k = init.num_classes;
  const std::size_t in = init.num_branches * k;
  Parameter<double> w("head.weight", {k, in}, true);
  Parameter<double> b("head.bias", {k}, false);
  w.value = init.weight;
  b.value = init.bias;
  Parameter<double>* params[] = {&w, &b};
  OptimizerState<double> opt;
  opt.learning_rate = cfg.learning_rate;
  opt.momentum = cfg.momentum;
  opt.weight_decay = cfg.weight_decay;

  std::vector<std::vector<double>> xs(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) xs[i] = concat_row(scores, static_cast<long>(i));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = batch_indices(labels.size(), cfg.batch_size,
                                     derive_seed(cfg.seed, "head" + std::to_string(epoch)));
    for (const auto& idx : order) {
      w.zero_grad();
      b.zero_grad();
      const double inv_n = 1.0 / static_cast<double>(idx.size());
      for (std::size_t s : idx) {
        const auto& x = xs[s];
        std::vector<double> z(k);
        double mx = -INFINITY;
        for (std::size_t c = 0; c < k; ++c) {
          double v = b.value[c];
          for (std::size_t j = 0; j < in; ++j) v += w.value[c * in + j] * x[j];
          z[c] = v;
          mx = std::max(mx, v);
        }
        double sum = 0.0;
        for (auto& v : z) sum += (v = std::exp(v - mx));
        for (std::size_t c = 0; c < k; ++c) {
          const double g =
              (z[c] / sum - (static_cast<int>(c) == labels[s] ? 1.0 : 0.0)) * inv_n;
          b.grad[c] += g;
          for (std::size_t j = 0; j < in; ++j) w.grad[c * in + j] += g * x[j];
        }
      }
      sgd_nesterov_step<double>(params, opt);
    }
  }
  FusionHead head = init;
  head.weight = w.value;
  head.bias = b.value;
  return head;
}

std::size_t FusionModel::num_classes() const {
  return branches.empty() ? 0 : branches.front().num_classes();
}

std::vector<ColorSpace> FusionModel::spaces() const {
  std::vector<ColorSpace> out;
  for (const auto& b : branches) out.push_back(b.space());
  return out;
}

std::size_t FusionModel::param_count() const {
  std::size_t n = head.param_count();
  for (const auto& b : branches) n += b.param_count();
  return n;
}

std::uint64_t branch_seed(std::uint64_t master, ColorSpace space) {
  return derive_seed(master, to_string(space));
}

FusionModel train_all_branches(const DatasetSplit& split, std::span<const ColorSpace> spaces,
                               const TrainConfig& cfg, unsigned jobs,
                               std::vector<std::vector<EpochLog>>* logs) {
  auto trained = train_branches(split, spaces, cfg, jobs);
  FusionModel model;
  if (logs) logs->clear();
  for (auto& t : trained) {
    model.branches.push_back(std::move(t.model));
    if (logs) logs->push_back(std::move(t.log));
  }
  model.head.num_branches = model.branches.size();
  model.head.num_classes = model.num_classes();
  return model;
}

std::vector<ScoreMatrix> branch_scores(const FusionModel& model,
                                       std::span<const PlanarImage> images) {
  std::vector<ScoreMatrix> out;
  for (const auto& b : model.branches) out.push_back(predict_scores(b, images));
  return out;
}

ScoreMatrix fused_scores(const FusionModel& model, std::span<const PlanarImage> images) {
  if (model.branches.empty()) throw UsageError("fused_scores: model has no branches");
  return apply_head(model.head, branch_scores(model, images));
}

FusionModel train_fusion_head(FusionModel model, const LabeledBatch& heldout,
                              const HeadConfig& cfg) {
  if (heldout.empty()) throw UsageError("train_fusion_head: empty held-out set");
  if (model.branches.empty()) throw UsageError("train_fusion_head: model has no branches");
  const auto scores = branch_scores(model, heldout.images);
  model.head = train_head(scores, heldout.labels, cfg,
                          identity_head(model.branches.size(), model.num_classes()));
  return model;
}

Tensor4<double> early_fusion_assemble(const PlanarImage& img, std::span<const ColorSpace> spaces,
                                      std::span<const ChannelStats> stats) {
  if (spaces.empty()) throw UsageError("early_fusion_assemble: no color spaces given");
  if (stats.size() != spaces.size()) {
    throw UsageError("early_fusion_assemble: need one stats entry per color space");
  }
  std::size_t channels = 0;
  for (auto s : spaces) channels += channel_count(s);
  Tensor4<double> out(1, channels, img.height(), img.width());
  auto dst = out.values.begin();
  for (std::size_t i = 0; i < spaces.size(); ++i) {
    const auto norm = normalize_for_network(convert(img, spaces[i]), stats[i]);
    dst = std::copy(norm.data().begin(), norm.data().end(), dst);
  }
  return out;
}

void save_fusion(const FusionModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  json head;
  head["format"] = "colornet-fusion";
  head["format_version"] = kHeadVersion;
  head["kind"] = std::string(to_string(model.head.kind));
  head["num_classes"] = model.num_classes();
  json branches = json::array();
  for (const auto& b : model.branches) {
    const std::string file = "branch_" + b.id() + ".ckpt";
    save_branch(b, dir / file);
    branches.push_back({{"space", b.id()}, {"file", file}});
  }
  head["branches"] = branches;
  if (model.head.kind == FusionKind::WEIGHTED_DENSE) {
    head["weight"] = model.head.weight;
    head["bias"] = model.head.bias;
  }
  write_text_file(dir / "head.json", head.dump(1) + "\n");
}

FusionModel load_fusion(const fs::path& dir) {
  const fs::path head_path = dir / "head.json";
  const auto bytes = read_file_bytes(head_path);
  FusionModel model;
  try {
    const json head = json::parse(bytes.begin(), bytes.end());
    const auto version = head.at("format_version").get<std::uint32_t>();
    if (version != kHeadVersion) {
      throw DataError(head_path.string() + ": fusion format version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kHeadVersion) + ")");
    }
    for (const auto& b : head.at("branches")) {
      model.branches.push_back(load_branch(dir / b.at("file").get<std::string>()));
    }
    if (model.branches.empty()) throw DataError(head_path.string() + ": no branches");
    for (const auto& b : model.branches) {
      if (b.num_classes() != model.branches.front().num_classes()) {
        throw DataError(head_path.string() + ": branches disagree on class count");
      }
    }
    model.head.kind = fusion_kind_from_string(head.at("kind").get<std::string>());
    model.head.num_branches = model.branches.size();
    model.head.num_classes = model.num_classes();
    if (model.head.kind == FusionKind::WEIGHTED_DENSE) {
      model.head.weight = head.at("weight").get<std::vector<double>>();
      model.head.bias = head.at("bias").get<std::vector<double>>();
      const std::size_t k = model.head.num_classes;
      if (model.head.weight.size() != k * k * model.head.num_branches ||
          model.head.bias.size() != k) {
        throw DataError(head_path.string() + ": head dimensions do not match branch count");
      }
    }
  } catch (const json::exception& e) {
    throw DataError(head_path.string() + ": malformed head manifest: " + e.what());
  } catch (const UsageError& e) {
    throw DataError(head_path.string() + ": " + e.what());
  }
  return model;
}

std::string subset_label(std::span<const ColorSpace> subset) {
  std::string s;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    if (i) s += '+';
    s += to_string(subset[i]);
  }
  return s;
}

AblationResult ablate_subsets(const DatasetSplit& split,
                              const std::vector<std::vector<ColorSpace>>& subsets,
                              const TrainConfig& cfg, const AblationOptions& opts) {
  if (subsets.empty()) throw UsageError("ablate_subsets: no subsets given");
  std::vector<ColorSpace> needed;
  for (const auto& subset : subsets) {
    if (subset.empty()) throw UsageError("ablate_subsets: empty subset");
    for (auto s : subset) {
      if (std::find(needed.begin(), needed.end(), s) == needed.end()) needed.push_back(s);
    }
  }
  bool any_multi = false;
  for (const auto& subset : subsets) any_multi = any_multi || subset.size() > 1;

  DatasetSplit branch_split = split;
  LabeledBatch heldout;
  const bool weighted = opts.weighted && any_multi;
  if (weighted) {
    auto [rest, held] = split_heldout(split, opts.heldout_fraction, cfg.seed);
    branch_split = std::move(rest);
    heldout = std::move(held);
  }

  AblationResult result;
  auto trained = train_branches(branch_split, needed, cfg, opts.jobs);
  result.branches_trained = trained.size();

  struct Cached {
    const TrainedBranch* branch;
    ScoreMatrix test;
    ScoreMatrix held;
    double seconds;
  };
  std::map<ColorSpace, Cached> cache;
  for (std::size_t i = 0; i < needed.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Cached c{&trained[i], predict_scores(trained[i].model, split.test.images), {}, 0.0};
    if (weighted) c.held = predict_scores(trained[i].model, heldout.images);
    c.seconds = trained[i].seconds + seconds_since(t0);
    cache.emplace(needed[i], std::move(c));
  }

  auto add_row = [&](const std::string& label, const std::string& kind, const ScoreMatrix& scores,
                     std::size_t params, double seconds) {
    auto report = evaluate_scores(label + ":" + kind, scores, split.test.labels, params);
    report.wall_time = seconds;
    result.rows.push_back({label, kind, report.accuracy, params, seconds});
    result.reports.push_back(std::move(report));
  };

  for (const auto& subset : subsets) {
    const std::string label = subset_label(subset);
    if (subset.size() == 1) {
      const auto& c = cache.at(subset[0]);
      add_row(label, "single", c.test, c.branch->model.param_count(), c.seconds);
      continue;
    }
    std::vector<ScoreMatrix> test_scores, held_scores;
    std::size_t params = 0;
    double seconds = 0.0;
    for (auto s : subset) {
      const auto& c = cache.at(s);
      test_scores.push_back(c.test);
      if (weighted) held_scores.push_back(c.held);
      params += c.branch->model.param_count();
      seconds += c.seconds;
    }
    add_row(label, "average", average_fusion(test_scores), params, seconds);
    if (weighted) {
      const auto t0 = std::chrono::steady_clock::now();
      HeadConfig hcfg = opts.head;
      hcfg.seed = derive_seed(cfg.seed, "head:" + label);
      const FusionHead head = train_head(held_scores, heldout.labels, hcfg,
                                         identity_head(subset.size(), test_scores[0].cols()));
      add_row(label, "weighted", apply_head(head, test_scores), params + head.param_count(),
              seconds + seconds_since(t0));
    }
    if (opts.early) {
      const auto t0 = std::chrono::steady_clock::now();
      TrainConfig ecfg = cfg;
      ecfg.seed = derive_seed(cfg.seed, "early:" + label);
      const auto res = train_branch(subset, branch_split, ecfg);
      add_row(label, "early", predict_scores(res.model, split.test.images),
              res.model.param_count(), seconds_since(t0));
    }
  }
  return result;
}

std::string ablation_csv(const AblationResult& result, bool include_time) {
  std::ostringstream os;
  os << "subset,fusion_kind,accuracy,params";
  if (include_time) os << ",wall_time";
  os << '\n' << std::setprecision(10);
  for (const auto& r : result.rows) {
    os << r.subset << ',' << r.fusion_kind << ',' << r.accuracy << ',' << r.params;
    if (include_time) os << ',' << r.wall_time;
    os << '\n';
  }
  return os.str();
}

json ablation_json(const AblationResult& result, bool include_time) {
  json rows = json::array();
  for (const auto& r : result.rows) {
    json j{{"subset", r.subset},
           {"fusion_kind", r.fusion_kind},
           {"accuracy", r.accuracy},
           {"params", r.params}};
    if (include_time) j["wall_time"] = r.wall_time;
    rows.push_back(j);
  }
  return json{{"rows", rows}, {"branches_trained", result.branches_trained}};
}

}  // namespace colornet
