#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "colornet/analytics.hpp"
#include "colornet/checkpoint.hpp"
#include "colornet/colorspace.hpp"
#include "colornet/dataset.hpp"
#include "colornet/error.hpp"
#include "colornet/fusion.hpp"
#include "colornet/planar_io.hpp"

namespace py = pybind11;
using namespace colornet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

std::vector<ColorSpace> spaces_arg(const py::object& obj) {
  std::vector<ColorSpace> out;
  if (py::isinstance<py::str>(obj)) {
    const auto text = obj.cast<std::string>();
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto end = text.find_first_of("+,", start);
      const auto name = text.substr(start, end == std::string::npos ? end : end - start);
      if (!name.empty()) out.push_back(color_space_from_string(name));
      if (end == std::string::npos) break;
      start = end + 1;
    }
  } else {
    for (const auto& item : obj) out.push_back(color_space_from_string(item.cast<std::string>()));
  }
  if (out.empty()) throw UsageError("no color spaces given");
  return out;
}

std::vector<std::string> space_names(std::span<const ColorSpace> spaces) {
  std::vector<std::string> out;
  for (auto s : spaces) out.emplace_back(to_string(s));
  return out;
}

PlanarImage image_from_array(const Array& a, ColorSpace space) {
  if (a.ndim() != 3) throw UsageError("image must have shape (channels, height, width)");
  if (static_cast<std::size_t>(a.shape(0)) != channel_count(space)) {
    throw UsageError("image has " + std::to_string(a.shape(0)) + " channels, " +
                     std::string(to_string(space)) + " needs " +
                     std::to_string(channel_count(space)));
  }
  std::vector<double> values(a.data(), a.data() + a.size());
  return PlanarImage(space, a.shape(1), a.shape(2), std::move(values));
}

Array image_to_array(const PlanarImage& img) {
  Array out({img.channels(), img.height(), img.width()});
  std::memcpy(out.mutable_data(), img.data().data(), img.data().size() * sizeof(double));
  return out;
}

std::vector<PlanarImage> images_from_array(const Array& a, ColorSpace space) {
  if (a.ndim() != 4) throw UsageError("images must have shape (n, channels, height, width)");
  if (static_cast<std::size_t>(a.shape(1)) != channel_count(space)) {
    throw UsageError("images have " + std::to_string(a.shape(1)) + " channels, " +
                     std::string(to_string(space)) + " needs " +
                     std::to_string(channel_count(space)));
  }
  const std::size_t per = a.shape(1) * a.shape(2) * a.shape(3);
  std::vector<PlanarImage> out;
  out.reserve(a.shape(0));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    const double* p = a.data() + i * per;
    out.emplace_back(space, a.shape(2), a.shape(3), std::vector<double>(p, p + per));
  }
  return out;
}

Array images_to_array(std::span<const PlanarImage> images) {
  if (images.empty()) return Array(std::vector<py::ssize_t>{0, 0, 0, 0});
  const auto& f = images.front();
  Array out({images.size(), f.channels(), f.height(), f.width()});
  double* dst = out.mutable_data();
  for (const auto& img : images) {
    std::memcpy(dst, img.data().data(), img.data().size() * sizeof(double));
    dst += img.data().size();
  }
  return out;
}

LabeledBatch batch_from_arrays(const Array& images, const std::vector<int>& labels,
                               const std::string& space) {
  LabeledBatch b;
  b.images = images_from_array(images, color_space_from_string(space));
  b.labels = labels;
  if (b.images.size() != b.labels.size()) throw UsageError("image and label counts differ");
  return b;
}

}  // namespace

PYBIND11_MODULE(_colornet, m) {
  m.doc() = "Color-space CNN branches, late fusion and evaluation analytics";
  m.attr("__version__") = COLORNET_VERSION;

  static py::exception<UsageError> usage_error(m, "UsageError", PyExc_ValueError);
  static py::exception<DomainError> domain_error(m, "DomainError", PyExc_ValueError);
  static py::exception<DataError> data_error(m, "DataError", PyExc_OSError);
  static py::exception<NumericError> numeric_error(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const UsageError& e) {
      usage_error(e.what());
    } catch (const DomainError& e) {
      domain_error(e.what());
    } catch (const DataError& e) {
      data_error(e.what());
    } catch (const NumericError& e) {
      numeric_error(e.what());
    }
  });

  // Color spaces.
  m.def("color_spaces", [] {
    std::vector<std::string> out;
    for (auto s : kAllColorSpaces) out.emplace_back(to_string(s));
    return out;
  }, "Names of every supported color space.");
  m.def("default_branch_spaces", [] { return space_names(default_branch_spaces()); });
  m.def("comparison_spaces", [] { return space_names(comparison_spaces()); });
  m.def("channel_count", [](const std::string& s) { return channel_count(color_space_from_string(s)); },
        py::arg("space"));
  m.def(
      "convert",
      [](const Array& image, const std::string& target, const std::string& source) {
        const auto src = color_space_from_string(source);
        const auto dst = color_space_from_string(target);
        if (image.ndim() == 4) {
          const auto imgs = images_from_array(image, src);
          py::gil_scoped_release release;
          auto out = convert_batch(imgs, dst);
          py::gil_scoped_acquire acquire;
          return images_to_array(out);
        }
        return image_to_array(convert(image_from_array(image, src), dst));
      },
      py::arg("image"), py::arg("target"), py::arg("source") = "sRGB",
      "Convert a (C, H, W) image or (N, C, H, W) batch between color spaces.");
  m.def("read_ppm", [](const std::filesystem::path& p) { return image_to_array(read_ppm(p)); },
        py::arg("path"));

  // Data.
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("lr_milestones", &TrainConfig::lr_milestones)
      .def_readwrite("momentum", &TrainConfig::momentum)
      .def_readwrite("weight_decay", &TrainConfig::weight_decay)
      .def_readwrite("dropout_rate", &TrainConfig::dropout_rate)
      .def_readwrite("augment", &TrainConfig::augment)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("filters1", &TrainConfig::filters1)
      .def_readwrite("filters2", &TrainConfig::filters2)
      .def("validate", &TrainConfig::validate)
      .def("effective_dropout", &TrainConfig::effective_dropout)
      .def("to_dict", [](const TrainConfig& c) { return to_python(train_config_to_json(c)); });

  py::class_<HeadConfig>(m, "HeadConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &HeadConfig::epochs)
      .def_readwrite("batch_size", &HeadConfig::batch_size)
      .def_readwrite("learning_rate", &HeadConfig::learning_rate)
      .def_readwrite("momentum", &HeadConfig::momentum)
      .def_readwrite("weight_decay", &HeadConfig::weight_decay)
      .def_readwrite("seed", &HeadConfig::seed);

  py::class_<LabeledBatch>(m, "Batch")
      .def(py::init(&batch_from_arrays), py::arg("images"), py::arg("labels"),
           py::arg("space") = "sRGB")
      .def("__len__", &LabeledBatch::size)
      .def_property_readonly("images",
                             [](const LabeledBatch& b) { return images_to_array(b.images); })
      .def_readonly("labels", &LabeledBatch::labels)
      .def_property_readonly("space", [](const LabeledBatch& b) {
        return b.images.empty() ? std::string() : std::string(to_string(b.images.front().space()));
      });

  py::class_<DatasetSplit>(m, "Dataset")
      .def(py::init([](LabeledBatch train, LabeledBatch test, int num_classes, std::string name) {
             DatasetSplit s;
             s.name = std::move(name);
             s.train = std::move(train);
             s.test = std::move(test);
             s.num_classes = num_classes;
             s.train.validate(num_classes);
             s.test.validate(num_classes);
             return s;
           }),
           py::arg("train"), py::arg("test"), py::arg("num_classes"), py::arg("name") = "custom")
      .def_readonly("name", &DatasetSplit::name)
      .def_readonly("num_classes", &DatasetSplit::num_classes)
      .def_readonly("train", &DatasetSplit::train)
      .def_readonly("test", &DatasetSplit::test)
      .def_property_readonly("fingerprint",
                             [](const DatasetSplit& s) { return dataset_fingerprint(s); })
      .def("subset", &load_subset, py::arg("train_size"), py::arg("test_size"), py::arg("seed"))
      .def("split_heldout", &split_heldout, py::arg("fraction"), py::arg("seed"),
           "Returns (reduced dataset, held-out batch).");

  m.def(
      "synth_colorsep",
      [](std::size_t n, std::uint64_t seed, std::size_t test_per_class, std::size_t side) {
        SynthRecipe r;
        r.side = side;
        return synth_colorsep(n, seed, test_per_class, r);
      },
      py::arg("n_per_class"), py::arg("seed") = 1, py::arg("test_per_class") = 200,
      py::arg("side") = 16, "Four-class synthetic set with engineered color separability.");
  m.def("load_cifar10", &load_cifar10, py::arg("dir"));
  m.def("load_cifar100", &load_cifar100, py::arg("dir"));

  // Models.
  py::class_<BranchModel>(m, "Branch")
      .def_property_readonly("id", &BranchModel::id)
      .def_property_readonly("spaces", [](const BranchModel& b) { return space_names(b.spaces); })
      .def_property_readonly("num_classes", &BranchModel::num_classes)
      .def_property_readonly("param_count", &BranchModel::param_count)
      .def_readonly("seed", &BranchModel::seed)
      .def_readonly("config", &BranchModel::config)
      .def(
          "predict",
          [](const BranchModel& b, const Array& images, const std::string& space) {
            const auto imgs = images_from_array(images, color_space_from_string(space));
            py::gil_scoped_release release;
            return predict_scores(b, imgs);
          },
          py::arg("images"), py::arg("space") = "sRGB", "Class probabilities, one row per image.")
      .def("save", [](const BranchModel& b, const std::filesystem::path& p) { save_branch(b, p); })
      .def_static("load", &load_branch);

  m.def(
      "train_branch",
      [](const py::object& spaces, DatasetSplit& split, const TrainConfig& cfg) {
        const auto sp = spaces_arg(spaces);
        TrainResult res;
        {
          py::gil_scoped_release release;
          res = train_branch(std::span<const ColorSpace>(sp), split, cfg);
        }
        py::list log;
        for (const auto& e : res.log) {
          log.append(py::dict(py::arg("epoch") = e.epoch, py::arg("learning_rate") = e.learning_rate,
                              py::arg("train_loss") = e.train_loss,
                              py::arg("test_accuracy") = e.test_accuracy));
        }
        return py::make_tuple(std::move(res.model), log);
      },
      py::arg("spaces"), py::arg("dataset"), py::arg("config") = TrainConfig{},
      "Train one CNN on the given space(s); several spaces stack channel-wise (early fusion).\n"
      "Returns (branch, log).");

  py::class_<FusionModel>(m, "FusionModel")
      .def_readonly("branches", &FusionModel::branches)
      .def_property_readonly("spaces", [](const FusionModel& f) { return space_names(f.spaces()); })
      .def_property_readonly("num_classes", &FusionModel::num_classes)
      .def_property_readonly("param_count", &FusionModel::param_count)
      .def_property_readonly("fusion",
                             [](const FusionModel& f) { return std::string(to_string(f.head.kind)); })
      .def(
          "branch_scores",
          [](const FusionModel& f, const Array& images, const std::string& space) {
            const auto imgs = images_from_array(images, color_space_from_string(space));
            py::gil_scoped_release release;
            return branch_scores(f, imgs);
          },
          py::arg("images"), py::arg("space") = "sRGB")
      .def(
          "predict",
          [](const FusionModel& f, const Array& images, const std::string& space) {
            const auto imgs = images_from_array(images, color_space_from_string(space));
            py::gil_scoped_release release;
            return fused_scores(f, imgs);
          },
          py::arg("images"), py::arg("space") = "sRGB", "Fused class probabilities.")
      .def(
          "with_trained_head",
          [](const FusionModel& f, const LabeledBatch& heldout, const HeadConfig& cfg) {
            py::gil_scoped_release release;
            return train_fusion_head(f, heldout, cfg);
          },
          py::arg("heldout"), py::arg("config") = HeadConfig{},
          "Copy of the model with a weighted head fitted on held-out data.")
      .def("save", [](const FusionModel& f, const std::filesystem::path& p) { save_fusion(f, p); })
      .def_static("load", &load_fusion);

  m.def(
      "train_fusion",
      [](DatasetSplit& split, const py::object& spaces, const TrainConfig& cfg, unsigned jobs) {
        const auto sp = spaces.is_none() ? default_branch_spaces() : spaces_arg(spaces);
        py::gil_scoped_release release;
        return train_all_branches(split, sp, cfg, jobs);
      },
      py::arg("dataset"), py::arg("spaces") = py::none(), py::arg("config") = TrainConfig{},
      py::arg("jobs") = 1, "Train one branch per space; the result averages their scores.");

  m.def(
      "average_fusion",
      [](const std::vector<ScoreMatrix>& scores) { return average_fusion(scores); },
      py::arg("scores"));

  m.def(
      "ablate",
      [](DatasetSplit& split, const std::vector<py::object>& subsets, const TrainConfig& cfg,
         bool weighted, bool early, unsigned jobs) {
        std::vector<std::vector<ColorSpace>> sets;
        for (const auto& s : subsets) sets.push_back(spaces_arg(s));
        AblationOptions opts;
        opts.weighted = weighted;
        opts.early = early;
        opts.jobs = jobs;
        AblationResult res;
        {
          py::gil_scoped_release release;
          res = ablate_subsets(split, sets, cfg, opts);
        }
        return to_python(ablation_json(res, false));
      },
      py::arg("dataset"), py::arg("subsets"), py::arg("config") = TrainConfig{},
      py::arg("weighted") = false, py::arg("early") = false, py::arg("jobs") = 1,
      "Accuracy of every subset; returns the ablation table as a dict.");

  // Analytics.
  m.def("argmax", &argmax_rows, py::arg("scores"));
  m.def(
      "accuracy",
      [](const ScoreMatrix& s, const std::vector<int>& labels) { return accuracy(s, labels); },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "confusion",
      [](const std::vector<int>& labels, const std::vector<int>& predictions, std::size_t k) {
        const auto cm = confusion(labels, predictions, k);
        py::array_t<std::uint64_t> out({k, k});
        std::memcpy(out.mutable_data(), cm.counts().data(), k * k * sizeof(std::uint64_t));
        return out;
      },
      py::arg("labels"), py::arg("predictions"), py::arg("num_classes"),
      "counts[t, p]: samples of class t predicted as p.");
  m.def(
      "evaluate",
      [](const ScoreMatrix& s, const std::vector<int>& labels, const std::string& id) {
        return to_python(report_to_json(evaluate_scores(id, s, labels)));
      },
      py::arg("scores"), py::arg("labels"), py::arg("id") = "model",
      "Accuracy, per-class accuracy, confusion matrix and macro one-vs-rest rates.");
  m.def(
      "pair_accuracy",
      [](const ScoreMatrix& s, const std::vector<int>& labels, int a, int b) {
        return pair_accuracy(s, labels, a, b);
      },
      py::arg("scores"), py::arg("labels"), py::arg("a"), py::arg("b"));
  m.def(
      "branch_disagreement",
      [](const std::vector<std::vector<int>>& preds) { return branch_disagreement(preds); },
      py::arg("predictions"));
}
