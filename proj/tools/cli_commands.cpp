#include "cli_commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "colornet/analytics.hpp"
#include "colornet/checkpoint.hpp"
#include "colornet/error.hpp"
#include "colornet/planar_io.hpp"
#include "colornet/rng.hpp"

namespace colornet::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

std::string file_safe(std::string id) {
  for (char& c : id) {
    if (c == ':' || c == '/' || c == ' ') c = '_';
  }
  return id;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_on(const std::string& text, const std::string& seps) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (seps.find(c) != std::string::npos) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

json run_manifest(const std::string& command, const DataOptions& data, const DatasetSplit& split) {
  return json{{"tool", "colornet"},
              {"version", COLORNET_VERSION},
              {"command", command},
              {"dataset",
               {{"kind", data.kind},
                {"name", split.name},
                {"train_size", split.train.size()},
                {"test_size", split.test.size()},
                {"num_classes", split.num_classes},
                {"fingerprint", hex64(dataset_fingerprint(split))}}}};
}

void write_run_files(const fs::path& out, const std::string& command, const DataOptions& data,
                     const DatasetSplit& split, const std::string& resolved_config) {
  write_text_file(out / "config.ini", resolved_config);
  write_json(out / "run.json", run_manifest(command, data, split));
}

void write_report(const fs::path& dir, const EvalReport& report) {
  write_json(dir / ("report_" + file_safe(report.id) + ".json"), report_to_json(report));
  write_text_file(dir / ("confusion_" + file_safe(report.id) + ".txt"),
                  confusion_grid(report.confusion));
}

void print_accuracy(const std::string& id, double acc) {
  std::cout << std::left << std::setw(24) << id << " accuracy " << std::fixed
            << std::setprecision(4) << acc << '\n';
}

std::vector<EvalReport> evaluate_model(const FusionModel& model, const LabeledBatch& test) {
  std::vector<EvalReport> reports;
  const auto scores = branch_scores(model, test.images);
  for (std::size_t i = 0; i < model.branches.size(); ++i) {
    reports.push_back(evaluate_scores(model.branches[i].id(), scores[i], test.labels,
                                      model.branches[i].param_count()));
  }
  if (model.branches.size() > 1) {
    const auto fused = apply_head(model.head, scores);
    reports.push_back(evaluate_scores("fused:" + std::string(to_string(model.head.kind)), fused,
                                      test.labels, model.param_count()));
  }
  return reports;
}

}  // namespace

std::vector<ColorSpace> parse_space_list(const std::string& text) {
  std::vector<ColorSpace> out;
  for (const auto& name : split_on(text, ",+")) {
    if (name.empty()) throw UsageError("empty color space name in '" + text + "'");
    const auto s = color_space_from_string(name);
    if (s == ColorSpace::SRGB) throw UsageError("sRGB is an input encoding, not a branch space");
    if (std::find(out.begin(), out.end(), s) != out.end()) {
      throw UsageError("color space " + name + " listed twice in '" + text + "'");
    }
    out.push_back(s);
  }
  return out;
}

std::vector<std::vector<ColorSpace>> parse_subsets(const std::string& text) {
  std::vector<std::vector<ColorSpace>> out;
  for (const auto& part : split_on(text, ";")) {
    if (part.empty()) continue;
    out.push_back(parse_space_list(part));
  }
  if (out.empty()) throw UsageError("no subsets given");
  return out;
}

DatasetSplit load_dataset(const DataOptions& opts) {
  DatasetSplit split;
  if (opts.kind == "synth") {
    SynthRecipe recipe;
    recipe.side = opts.synth_side;
    split = synth_colorsep(opts.synth_per_class, opts.data_seed, opts.synth_test_per_class, recipe);
  } else if (opts.kind == "cifar10" || opts.kind == "cifar100") {
    if (opts.dir.empty()) throw UsageError("--data-dir is required for " + opts.kind);
    split = opts.kind == "cifar10" ? load_cifar10(opts.dir) : load_cifar100(opts.dir);
  } else {
    throw UsageError("unknown dataset '" + opts.kind + "' (expected synth, cifar10 or cifar100)");
  }
  if (opts.train_size > 0 || opts.test_size > 0) {
    const std::size_t tr = opts.train_size > 0 ? opts.train_size : split.train.size();
    const std::size_t te = opts.test_size > 0 ? opts.test_size : split.test.size();
    split = load_subset(split, tr, te, opts.data_seed);
  }
  return split;
}

void cmd_convert(const ConvertOptions& opts) {
  const ColorSpace target = color_space_from_string(opts.target);
  LabeledBatch batch = read_image_input(opts.input);
  if (batch.images.empty()) throw DataError(opts.input.string() + ": no images");
  LabeledBatch out;
  out.labels = batch.labels;
  if (batch.images.front().space() == target) {
    out.images = batch.images;
  } else {
    out.images = convert_batch(batch.images, target, opts.threads);
  }
  fs::path dest = opts.output;
  if (dest.empty()) {
    make_dir(opts.out);
    dest = opts.out / (opts.input.stem().string() + "_" + file_safe(std::string(to_string(target))) +
                       ".cpl");
  } else if (dest.has_parent_path()) {
    make_dir(dest.parent_path());
  }
  write_planar(dest, out);

  const std::size_t ch = out.images.front().channels();
  std::cout << "wrote " << out.images.size() << " image(s) in " << to_string(target) << " to "
            << dest.string() << '\n';
  for (std::size_t c = 0; c < ch; ++c) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& img : out.images) {
      for (double v : img.plane(c)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    std::cout << "channel " << c << " min " << std::setprecision(6) << lo << " max " << hi << '\n';
  }
}

void cmd_train(const TrainOptions& opts, const std::string& resolved_config) {
  opts.train.validate();
  const auto spaces = parse_space_list(opts.spaces);
  const FusionKind kind = fusion_kind_from_string(opts.fusion);
  if (!(opts.heldout_fraction > 0.0 && opts.heldout_fraction < 1.0)) {
    throw UsageError("heldout must lie in (0,1)");
  }
  DatasetSplit split = load_dataset(opts.data);
  make_dir(opts.out);
  write_run_files(opts.out, "train", opts.data, split, resolved_config);

  const auto t0 = std::chrono::steady_clock::now();
  FusionModel model;
  std::vector<std::vector<EpochLog>> logs;
  if (opts.init_only) {
    const auto& first = split.train.images.front();
    for (auto s : spaces) {
      TrainConfig c = opts.train;
      c.seed = branch_seed(opts.train.seed, s);
      const ColorSpace one[] = {s};
      model.branches.push_back(init_branch(one, {split.stats_for(s)}, first.height(), first.width(),
                                           static_cast<std::size_t>(split.num_classes), c));
    }
    model.head.num_branches = model.branches.size();
    model.head.num_classes = model.num_classes();
  } else {
    const bool weighted = kind == FusionKind::WEIGHTED_DENSE && spaces.size() > 1;
    DatasetSplit branch_split = split;
    LabeledBatch heldout;
    if (weighted) {
      auto [rest, held] = split_heldout(split, opts.heldout_fraction, opts.train.seed);
      branch_split = std::move(rest);
      heldout = std::move(held);
    }
    model = train_all_branches(branch_split, spaces, opts.train, opts.jobs, &logs);
    if (weighted) {
      HeadConfig hc = opts.head;
      hc.seed = derive_seed(opts.train.seed, "head:" + subset_label(spaces));
      model = train_fusion_head(std::move(model), heldout, hc);
    }
  }
  const double train_seconds = seconds_since(t0);

  save_fusion(model, opts.out / "model");
  std::ostringstream log;
  log << "branch,epoch,learning_rate,train_loss,test_accuracy\n" << std::setprecision(10);
  for (std::size_t b = 0; b < logs.size(); ++b) {
    for (const auto& e : logs[b]) {
      log << model.branches[b].id() << ',' << e.epoch << ',' << e.learning_rate << ','
          << e.train_loss << ',' << e.test_accuracy << '\n';
    }
  }
  write_text_file(opts.out / "train_log.csv", log.str());

  const auto t1 = std::chrono::steady_clock::now();
  const auto reports = evaluate_model(model, split.test);
  for (const auto& r : reports) {
    write_report(opts.out, r);
    print_accuracy(r.id, r.accuracy);
  }
  write_json(opts.out / "timing.json",
             json{{"train_seconds", train_seconds}, {"evaluate_seconds", seconds_since(t1)}});
  std::cout << "model written to " << (opts.out / "model").string() << '\n';
}

void cmd_evaluate(const EvaluateOptions& opts, const std::string& resolved_config) {
  if (opts.model.empty()) throw UsageError("--model is required");
  FusionModel model;
  if (fs::is_directory(opts.model)) {
    model = load_fusion(opts.model);
  } else {
    model.branches.push_back(load_branch(opts.model));
    model.head.num_branches = 1;
    model.head.num_classes = model.num_classes();
  }
  DatasetSplit split = load_dataset(opts.data);
  if (static_cast<int>(model.num_classes()) != split.num_classes) {
    throw DataError("model predicts " + std::to_string(model.num_classes()) +
                    " classes but the dataset has " + std::to_string(split.num_classes));
  }
  make_dir(opts.out);
  write_run_files(opts.out, "evaluate", opts.data, split, resolved_config);
  const auto t0 = std::chrono::steady_clock::now();
  const auto reports = evaluate_model(model, split.test);
  for (const auto& r : reports) {
    write_report(opts.out, r);
    print_accuracy(r.id, r.accuracy);
  }
  write_json(opts.out / "timing.json", json{{"evaluate_seconds", seconds_since(t0)}});
}

void cmd_ablate(const AblateOptions& opts, const std::string& resolved_config) {
  opts.train.validate();
  std::vector<std::vector<ColorSpace>> subsets;
  if (trim(opts.subsets).empty()) {
    for (auto s : comparison_spaces()) subsets.push_back({s});
  } else {
    subsets = parse_subsets(opts.subsets);
  }
  DatasetSplit split = load_dataset(opts.data);
  make_dir(opts.out);
  write_run_files(opts.out, "ablate", opts.data, split, resolved_config);

  AblationOptions ao;
  ao.weighted = opts.weighted;
  ao.early = opts.early;
  ao.jobs = opts.jobs;
  ao.heldout_fraction = opts.heldout_fraction;
  ao.head = opts.head;
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = ablate_subsets(split, subsets, opts.train, ao);
  const double seconds = seconds_since(t0);

  write_text_file(opts.out / "ablation.csv", ablation_csv(result, false));
  write_json(opts.out / "ablation.json", ablation_json(result, false));
  const fs::path rdir = opts.out / "reports";
  make_dir(rdir);
  for (const auto& r : result.reports) write_report(rdir, r);
  json timing{{"total_seconds", seconds}, {"rows", json::array()}};
  for (const auto& row : result.rows) {
    timing["rows"].push_back(
        {{"subset", row.subset}, {"fusion_kind", row.fusion_kind}, {"wall_time", row.wall_time}});
  }
  write_json(opts.out / "timing.json", timing);

  std::cout << std::left << std::setw(28) << "subset" << std::setw(10) << "fusion"
            << std::setw(10) << "accuracy" << "params\n";
  for (const auto& row : result.rows) {
    std::cout << std::left << std::setw(28) << row.subset << std::setw(10) << row.fusion_kind
              << std::setw(10) << std::fixed << std::setprecision(4) << row.accuracy << row.params
              << '\n';
  }
}

void cmd_report(const ReportOptions& opts) {
  if (!fs::is_directory(opts.run)) throw DataError("not a run directory: " + opts.run.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(opts.run)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("report_", 0) == 0 && e.path().extension() == ".json") {
      files.push_back(e.path());
    }
  }
  if (files.empty()) throw DataError("no reports found under " + opts.run.string());
  std::sort(files.begin(), files.end());

  std::vector<EvalReport> reports;
  for (const auto& f : files) {
    const auto bytes = read_file_bytes(f);
    try {
      reports.push_back(report_from_json(json::parse(bytes.begin(), bytes.end())));
    } catch (const json::exception& e) {
      throw DataError(f.string() + ": " + e.what());
    }
  }

  std::string csv = report_csv_header() + "\n";
  json summary{{"reports", json::array()},
               {"rate_definition",
                "macro-averaged one-vs-rest percentages; empty classes skipped"}};
  for (std::size_t i = 0; i < reports.size(); ++i) {
    csv += report_csv_row(reports[i]) + "\n";
    auto j = report_to_json(reports[i]);
    j["source"] = fs::relative(files[i], opts.run).generic_string();
    summary["reports"].push_back(j);
  }
  const std::size_t k = reports.front().per_class.size();
  const bool same_k = std::all_of(reports.begin(), reports.end(),
                                  [k](const EvalReport& r) { return r.per_class.size() == k; });
  if (same_k && reports.size() > 1) {
    json deltas = json::array();
    for (const auto& d : cross_space_class_deltas(reports)) {
      deltas.push_back({{"class", d.class_index},
                        {"best", d.best},
                        {"best_accuracy", d.best_accuracy},
                        {"worst", d.worst},
                        {"worst_accuracy", d.worst_accuracy},
                        {"spread", d.spread}});
    }
    summary["class_deltas"] = deltas;
  }
  write_text_file(opts.run / "summary.csv", csv);
  write_json(opts.run / "summary.json", summary);
  std::cout << csv;
}

namespace {

void add_data_options(CLI::App* sub, DataOptions& d) {
  sub->add_option("--dataset", d.kind, "synth, cifar10 or cifar100")
      ->check(CLI::IsMember({"synth", "cifar10", "cifar100"}));
  sub->add_option("--data-dir", d.dir, "directory with the CIFAR binary batches");
  sub->add_option("--train-size", d.train_size, "stratified training subset size (0 = all)");
  sub->add_option("--test-size", d.test_size, "stratified test subset size (0 = all)");
  sub->add_option("--synth-per-class", d.synth_per_class, "synthetic training images per class");
  sub->add_option("--synth-test-per-class", d.synth_test_per_class,
                  "synthetic test images per class");
  sub->add_option("--synth-side", d.synth_side, "synthetic image side in pixels");
  sub->add_option("--data-seed", d.data_seed, "seed for synthetic data and subset selection");
}

void add_train_options(CLI::App* sub, TrainConfig& t, double& dropout) {
  sub->add_option("--epochs", t.epochs, "training epochs");
  sub->add_option("--batch-size", t.batch_size, "minibatch size");
  sub->add_option("--lr", t.learning_rate, "initial learning rate");
  sub->add_option("--lr-milestones", t.lr_milestones,
                  "fractions of the epochs at which the rate drops 10x")
      ->delimiter(',');
  sub->add_option("--momentum", t.momentum, "Nesterov momentum");
  sub->add_option("--weight-decay", t.weight_decay, "L2 weight decay on weights");
  sub->add_option("--dropout", dropout,
                  "dropout rate; negative picks 0.2, or 0.25 with augmentation");
  sub->add_flag("--augment,!--no-augment", t.augment, "random flips and shifts");
  sub->add_option("--flip-probability", t.augmentation.horizontal_flip,
                  "horizontal flip probability");
  sub->add_option("--shift-fraction", t.augmentation.shift_fraction,
                  "maximum shift as a fraction of the image side");
  sub->add_option("--filters1", t.filters1, "filters in the first conv block");
  sub->add_option("--filters2", t.filters2, "filters in the second conv block");
  sub->add_option("--seed", t.seed, "master seed");
}

void add_head_options(CLI::App* sub, HeadConfig& h, double& heldout) {
  sub->add_option("--heldout", heldout, "training share held out for the weighted head");
  sub->add_option("--head-epochs", h.epochs, "weighted head epochs");
  sub->add_option("--head-lr", h.learning_rate, "weighted head learning rate");
}

void add_out_option(CLI::App* sub, fs::path& out, const std::string& fallback) {
  out = fallback;
  sub->add_option("--out", out, "output directory")->envname(kOutputDirEnv);
}

void apply_dropout(TrainConfig& t, double dropout) {
  if (dropout >= 0.0) t.dropout_rate = dropout;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"colornet: multi-color-space CNN training and analysis"};
  app.set_version_flag("--version", std::string("colornet ") + COLORNET_VERSION);
  app.set_config("--config", "", "INI config file; command-line flags take precedence");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  ConvertOptions conv;
  auto* c = app.add_subcommand("convert", "convert images into another color space");
  c->add_option("--input,-i", conv.input, "input .ppm, CIFAR .bin or .cpl file")->required();
  c->add_option("--to,-t", conv.target, "target color space")->required();
  c->add_option("--output,-o", conv.output, "output .cpl path (default: <out>/<stem>_<space>.cpl)");
  c->add_option("--threads", conv.threads, "worker threads (0 = all cores)");
  add_out_option(c, conv.out, "colornet_out");

  TrainOptions tr;
  double tr_dropout = -1.0;
  auto* t = app.add_subcommand("train", "train one branch per color space and fuse them");
  add_data_options(t, tr.data);
  add_train_options(t, tr.train, tr_dropout);
  t->add_option("--spaces", tr.spaces, "comma-separated branch color spaces");
  t->add_option("--fusion", tr.fusion, "average or weighted")
      ->check(CLI::IsMember({"average", "weighted"}));
  add_head_options(t, tr.head, tr.heldout_fraction);
  t->add_option("--jobs,-j", tr.jobs, "branches trained in parallel");
  t->add_flag("--init-only", tr.init_only, "write untrained branches without training");
  add_out_option(t, tr.out, "colornet_out/train");

  EvaluateOptions ev;
  auto* e = app.add_subcommand("evaluate", "evaluate a model on a test split");
  e->add_option("--model,-m", ev.model, "model directory or branch checkpoint")->required();
  add_data_options(e, ev.data);
  add_out_option(e, ev.out, "colornet_out/evaluate");

  AblateOptions ab;
  double ab_dropout = -1.0;
  auto* a = app.add_subcommand("ablate", "train and compare color-space subsets");
  add_data_options(a, ab.data);
  add_train_options(a, ab.train, ab_dropout);
  a->add_option("--subsets", ab.subsets,
                "subsets like 'HSV;YUV;HSV+YUV' (default: each comparison space alone)");
  a->add_flag("--weighted", ab.weighted, "add a trained weighted head row per multi-space subset");
  a->add_flag("--early", ab.early, "add an early-fusion row per multi-space subset");
  add_head_options(a, ab.head, ab.heldout_fraction);
  a->add_option("--jobs,-j", ab.jobs, "branches trained in parallel");
  add_out_option(a, ab.out, "colornet_out/ablate");

  ReportOptions rep;
  auto* r = app.add_subcommand("report", "summarize every report in a run directory");
  r->add_option("--run", rep.run, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    auto resolved_for = [](const CLI::App* sub) {
      return "[" + sub->get_name() + "]\n" + sub->config_to_str(true, false);
    };
    if (c->parsed()) cmd_convert(conv);
    if (t->parsed()) {
      apply_dropout(tr.train, tr_dropout);
      if (tr.jobs == 0) throw UsageError("--jobs must be >= 1");
      cmd_train(tr, resolved_for(t));
    }
    if (e->parsed()) cmd_evaluate(ev, resolved_for(e));
    if (a->parsed()) {
      apply_dropout(ab.train, ab_dropout);
      if (ab.jobs == 0) throw UsageError("--jobs must be >= 1");
      cmd_ablate(ab, resolved_for(a));
    }
    if (r->parsed()) cmd_report(rep);
  } catch (const NumericError& err) {
    std::cerr << "colornet: numeric failure: " << err.what() << '\n';
    return kExitNumeric;
  } catch (const UsageError& err) {
    std::cerr << "colornet: usage error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& err) {
    std::cerr << "colornet: data error: " << err.what() << '\n';
    return kExitData;
  } catch (const DataError& err) {
    std::cerr << "colornet: data error: " << err.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "colornet: io error: " << err.what() << '\n';
    return kExitData;
  } catch (const std::exception& err) {
    std::cerr << "colornet: error: " << err.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace colornet::cli
