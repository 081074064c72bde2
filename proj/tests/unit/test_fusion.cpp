#include <doctest.h>

#include <filesystem>

#include "colornet/checkpoint.hpp"
#include "colornet/error.hpp"
#include "colornet/fusion.hpp"
#include "colornet/rng.hpp"

using namespace colornet;
namespace fs = std::filesystem;

namespace {

ScoreMatrix random_probs(std::size_t rows, std::size_t cols, Rng& rng) {
  ScoreMatrix s(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double sum = 0;
    for (std::size_t j = 0; j < cols; ++j) sum += (s(i, j) = rng.uniform(0.01, 1.0));
    s.row(i) /= sum;
  }
  return s;
}

DatasetSplit tiny_split(std::uint64_t seed) {
  SynthRecipe recipe;
  recipe.side = 8;
  return synth_colorsep(8, seed, 4, recipe);
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.filters1 = 4;
  cfg.filters2 = 4;
  cfg.seed = 99;
  return cfg;
}

fs::path temp_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("colornet_fusion_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("average fusion of two branches") {
  ScoreMatrix a(1, 3), b(1, 3);
  a << 0.6, 0.3, 0.1;
  b << 0.2, 0.7, 0.1;
  const std::vector<ScoreMatrix> s{a, b};
  const auto f = average_fusion(s);
  CHECK(f(0, 0) == doctest::Approx(0.4));
  CHECK(f(0, 1) == doctest::Approx(0.5));
  CHECK(f(0, 2) == doctest::Approx(0.1));
  CHECK(argmax_rows(f)[0] == 1);
}

TEST_CASE("average fusion is invariant to branch order") {
  Rng rng(3);
  std::vector<ScoreMatrix> s{random_probs(20, 5, rng), random_probs(20, 5, rng),
                             random_probs(20, 5, rng)};
  const auto f = average_fusion(s);
  std::swap(s[0], s[2]);
  CHECK((average_fusion(s) - f).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("fusing one branch returns it unchanged") {
  Rng rng(4);
  std::vector<ScoreMatrix> s{random_probs(10, 4, rng)};
  CHECK((average_fusion(s) - s[0]).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("identity head agrees with averaging") {
  Rng rng(5);
  std::vector<ScoreMatrix> s{random_probs(50, 6, rng), random_probs(50, 6, rng),
                             random_probs(50, 6, rng)};
  const auto head = identity_head(3, 6);
  CHECK(head.param_count() == 6 * 18 + 6);
  CHECK(argmax_rows(apply_head(head, s)) == argmax_rows(average_fusion(s)));
}

TEST_CASE("mismatched shapes are rejected") {
  Rng rng(6);
  std::vector<ScoreMatrix> s{random_probs(5, 3, rng), random_probs(4, 3, rng)};
  CHECK_THROWS_AS(average_fusion(s), UsageError);
  std::vector<ScoreMatrix> none;
  CHECK_THROWS_AS(average_fusion(none), UsageError);
  std::vector<ScoreMatrix> two{random_probs(5, 3, rng), random_probs(5, 3, rng)};
  CHECK_THROWS_AS(apply_head(identity_head(3, 3), two), UsageError);
}

TEST_CASE("head training learns to trust the informative branch") {
  Rng rng(7);
  const std::size_t n = 200;
  std::vector<int> labels(n);
  ScoreMatrix good(n, 2), noise(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(rng.below(2));
    good(i, labels[i]) = 0.6;
    good(i, 1 - labels[i]) = 0.4;
    const double p = rng.uniform(0.0, 1.0);
    noise(i, 0) = p;
    noise(i, 1) = 1 - p;
  }
  const std::vector<ScoreMatrix> s{good, noise};
  HeadConfig cfg;
  cfg.epochs = 30;
  cfg.seed = 1;
  const auto head = train_head(s, labels, cfg, identity_head(2, 2));
  CHECK(accuracy(apply_head(head, s), labels) > accuracy(average_fusion(s), labels));
  CHECK(accuracy(apply_head(head, s), labels) > 0.95);
}

TEST_CASE("fusion kind names round trip") {
  for (auto k : {FusionKind::AVERAGE, FusionKind::WEIGHTED_DENSE}) {
    CHECK(fusion_kind_from_string(to_string(k)) == k);
  }
  CHECK_THROWS_AS(fusion_kind_from_string("max"), UsageError);
}

TEST_CASE("branch seeds differ per space and are stable") {
  CHECK(branch_seed(1, ColorSpace::HSV) != branch_seed(1, ColorSpace::YUV));
  CHECK(branch_seed(1, ColorSpace::HSV) == branch_seed(1, ColorSpace::HSV));
  CHECK(branch_seed(1, ColorSpace::HSV) != branch_seed(2, ColorSpace::HSV));
}

TEST_CASE("early fusion stacks normalized channels") {
  auto split = tiny_split(1);
  const std::vector<ColorSpace> spaces{ColorSpace::RGB_LINEAR, ColorSpace::HSV, ColorSpace::YUV,
                                       ColorSpace::LAB, ColorSpace::HED};
  std::vector<ChannelStats> stats;
  for (auto s : spaces) stats.push_back(split.stats_for(s));
  const auto& img = split.test.images[0];
  const auto t = early_fusion_assemble(img, spaces, stats);
  CHECK(t.n == 1);
  CHECK(t.c == 15);
  const auto hsv = normalize_for_network(convert(img, ColorSpace::HSV), stats[1]);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < img.height(); ++y)
      for (std::size_t x = 0; x < img.width(); ++x) CHECK(t.at(0, 3 + c, y, x) == hsv.at(c, y, x));
}

TEST_CASE("branches are trained independently of the job count") {
  auto split = tiny_split(2);
  const std::vector<ColorSpace> spaces{ColorSpace::HSV, ColorSpace::YUV, ColorSpace::LAB};
  std::vector<std::vector<EpochLog>> logs;
  const auto serial = train_all_branches(split, spaces, quick_config(), 1, &logs);
  const auto parallel = train_all_branches(split, spaces, quick_config(), 3);
  CHECK(logs.size() == 3);
  REQUIRE(serial.branches.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(serialize_branch(serial.branches[i]) == serialize_branch(parallel.branches[i]));
    CHECK(serial.branches[i].seed == branch_seed(99, spaces[i]));
  }
  CHECK(serial.spaces() == spaces);
}

TEST_CASE("weighted head leaves branches frozen") {
  auto split = tiny_split(3);
  const std::vector<ColorSpace> spaces{ColorSpace::HSV, ColorSpace::YUV};
  auto model = train_all_branches(split, spaces, quick_config());
  const auto before0 = serialize_branch(model.branches[0]);
  HeadConfig hc;
  hc.epochs = 3;
  const auto fused = train_fusion_head(model, split.test, hc);
  CHECK(fused.head.kind == FusionKind::WEIGHTED_DENSE);
  CHECK(serialize_branch(fused.branches[0]) == before0);
  const auto s = fused_scores(fused, split.test.images);
  CHECK(s.rows() == static_cast<long>(split.test.size()));
}

TEST_CASE("fusion model save and load") {
  auto split = tiny_split(4);
  const std::vector<ColorSpace> spaces{ColorSpace::HSV, ColorSpace::CMYK};
  auto model = train_all_branches(split, spaces, quick_config());
  HeadConfig hc;
  hc.epochs = 2;
  model = train_fusion_head(model, split.test, hc);
  const auto dir = temp_dir("saveload");
  save_fusion(model, dir);
  const auto back = load_fusion(dir);
  CHECK(back.spaces() == spaces);
  CHECK(back.head.weight == model.head.weight);
  const auto a = fused_scores(model, split.test.images);
  const auto b = fused_scores(back, split.test.images);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  fs::remove_all(dir);
}

TEST_CASE("missing fusion directory is a data error") {
  CHECK_THROWS_AS(load_fusion(fs::temp_directory_path() / "colornet_no_such_dir"), DataError);
}

TEST_CASE("ablation trains each space once and emits rows per subset") {
  auto split = tiny_split(5);
  const std::vector<std::vector<ColorSpace>> subsets{
      {ColorSpace::HSV}, {ColorSpace::YUV}, {ColorSpace::HSV, ColorSpace::YUV}};
  AblationOptions opts;
  opts.early = true;
  opts.head.epochs = 2;
  const auto r = ablate_subsets(split, subsets, quick_config(), opts);
  CHECK(r.branches_trained == 2);
  REQUIRE(r.rows.size() == 5);
  CHECK(r.rows[0].fusion_kind == "single");
  CHECK(r.rows[2].subset == "HSV+YUV");
  CHECK(r.rows[2].fusion_kind == "average");
  CHECK(r.rows[3].fusion_kind == "weighted");
  CHECK(r.rows[4].fusion_kind == "early");
  CHECK(r.rows[2].params == r.rows[0].params + r.rows[1].params);
  CHECK(r.reports.size() == r.rows.size());
  const auto csv = ablation_csv(r, false);
  CHECK(csv.rfind("subset,fusion_kind,accuracy,params\n", 0) == 0);
  CHECK(ablation_json(r, false)["rows"].size() == 5);
  CHECK_FALSE(ablation_json(r, false)["rows"][0].contains("wall_time"));
}

TEST_CASE("ablation is reproducible") {
  auto split = tiny_split(6);
  const std::vector<std::vector<ColorSpace>> subsets{{ColorSpace::LAB},
                                                     {ColorSpace::LAB, ColorSpace::YIQ}};
  AblationOptions opts;
  opts.head.epochs = 2;
  const auto a = ablate_subsets(split, subsets, quick_config(), opts);
  opts.jobs = 2;
  const auto b = ablate_subsets(split, subsets, quick_config(), opts);
  CHECK(ablation_csv(a, false) == ablation_csv(b, false));
}
