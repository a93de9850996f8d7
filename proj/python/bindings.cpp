#include "scenediff/cli.hpp"
#include "scenediff/dataset.hpp"
#include "scenediff/errors.hpp"
#include "scenediff/io.hpp"
#include "scenediff/metrics.hpp"
#include "scenediff/noise_model.hpp"
#include "scenediff/refinement.hpp"
#include "scenediff/sampler.hpp"
#include "scenediff/schedule.hpp"
#include "scenediff/training.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace scenediff;

namespace {

using RowPoints = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

PointCloud to_cloud(const Eigen::Ref<const RowPoints>& pts) {
  PointCloud c;
  c.points.reserve(static_cast<std::size_t>(pts.rows()));
  for (Eigen::Index i = 0; i < pts.rows(); ++i) c.points.emplace_back(pts(i, 0), pts(i, 1), pts(i, 2));
  return c;
}

RowPoints to_array(const PointCloud& c) {
  RowPoints out(static_cast<Eigen::Index>(c.size()), 3);
  for (std::size_t i = 0; i < c.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = c.points[i].transpose();
  return out;
}

RowPoints vectors_to_array(const PointVectors& v) { return v.transpose(); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Point cloud denoising: schedules, sampling, small models and metrics";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<SizeError>(m, "SizeError", base.ptr());
  py::register_exception<EmptyInputError>(m, "EmptyInputError", base.ptr());
  py::register_exception<InvalidPoseError>(m, "InvalidPoseError", base.ptr());
  py::register_exception<RegionTooSparseError>(m, "RegionTooSparseError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def_static("linear", &NoiseSchedule::linear, py::arg("steps"), py::arg("beta_start"), py::arg("beta_end"))
      .def_static("reference", &NoiseSchedule::reference)
      .def_property_readonly("steps", &NoiseSchedule::steps)
      .def("beta", &NoiseSchedule::beta)
      .def("alpha", &NoiseSchedule::alpha)
      .def("alpha_bar", &NoiseSchedule::alpha_bar)
      .def("noise_scale", py::overload_cast<int>(&NoiseSchedule::noise_scale, py::const_));

  m.def(
      "forward_noise_local",
      [](const Eigen::Ref<const RowPoints>& pts, int t, const Eigen::Ref<const RowPoints>& eps,
         const NoiseSchedule& s) { return to_array(forward_noise_local(to_cloud(pts), t, eps.transpose(), s)); },
      py::arg("points"), py::arg("t"), py::arg("eps"), py::arg("schedule"));
  m.def(
      "cfg_combine",
      [](const Eigen::Ref<const RowPoints>& uncond, const Eigen::Ref<const RowPoints>& cond, double s) {
        return vectors_to_array(cfg_combine(uncond.transpose(), cond.transpose(), s));
      },
      py::arg("eps_uncond"), py::arg("eps_cond"), py::arg("guidance"));
  m.def("sampling_timesteps", &sampling_timesteps, py::arg("total_steps"), py::arg("steps"));

  // geometry and metrics
  m.def("fps", [](const Eigen::Ref<const RowPoints>& p, std::size_t k, std::uint64_t seed) {
    return to_array(fps(to_cloud(p), k, seed));
  }, py::arg("points"), py::arg("k"), py::arg("seed") = 0);
  m.def("crop_range", [](const Eigen::Ref<const RowPoints>& p, double r) { return to_array(crop_range(to_cloud(p), r)); },
        py::arg("points"), py::arg("r_max"));
  m.def("replicate", [](const Eigen::Ref<const RowPoints>& p, std::size_t k) { return to_array(replicate(to_cloud(p), k)); },
        py::arg("points"), py::arg("copies"));
  m.def(
      "nearest_neighbor",
      [](const Eigen::Ref<const RowPoints>& q, const Eigen::Ref<const RowPoints>& r) {
        const auto nn = nearest_neighbor(to_cloud(q), to_cloud(r));
        std::vector<std::size_t> idx;
        std::vector<double> dist;
        for (const auto& n : nn) {
          idx.push_back(n.index);
          dist.push_back(n.distance);
        }
        return py::make_tuple(idx, dist);
      },
      py::arg("queries"), py::arg("reference"));
  m.def("chamfer_distance", [](const Eigen::Ref<const RowPoints>& a, const Eigen::Ref<const RowPoints>& b) {
    return chamfer_distance(to_cloud(a), to_cloud(b));
  });
  m.def("chamfer_sq", [](const Eigen::Ref<const RowPoints>& a, const Eigen::Ref<const RowPoints>& b) {
    return chamfer_sq(to_cloud(a), to_cloud(b));
  });
  m.def(
      "jsd_bev",
      [](const Eigen::Ref<const RowPoints>& a, const Eigen::Ref<const RowPoints>& b, double res) {
        return jsd_bev(to_cloud(a), to_cloud(b), res);
      },
      py::arg("a"), py::arg("b"), py::arg("resolution") = 0.5);
  m.def(
      "occupancy_iou",
      [](const Eigen::Ref<const RowPoints>& a, const Eigen::Ref<const RowPoints>& b, const std::vector<double>& res) {
        return occupancy_iou(to_cloud(a), to_cloud(b), res);
      },
      py::arg("a"), py::arg("b"), py::arg("resolutions") = std::vector<double>{0.5, 0.2, 0.1});
  m.def(
      "evaluate",
      [](const Eigen::Ref<const RowPoints>& pred, const Eigen::Ref<const RowPoints>& gt, const std::vector<double>& res) {
        const MetricReport r = evaluate(to_cloud(pred), to_cloud(gt), res);
        py::dict d;
        d["cd"] = r.cd;
        d["jsd_bev"] = r.jsd_bev;
        for (const auto& [k, v] : r.iou) d[py::str("iou@" + resolution_key(k))] = v;
        return d;
      },
      py::arg("pred"), py::arg("gt"), py::arg("iou_resolutions") = std::vector<double>{0.5, 0.2, 0.1});

  // noise model
  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("d_t", &ModelConfig::d_t)
      .def_readwrite("d_c", &ModelConfig::d_c)
      .def_readwrite("layer_dims", &ModelConfig::layer_dims)
      .def_readwrite("n_condition_points", &ModelConfig::n_condition_points)
      .def_readwrite("input_scale", &ModelConfig::input_scale)
      .def_readwrite("fps_seed", &ModelConfig::fps_seed);

  py::class_<ToyNoisePredictor>(m, "ToyNoisePredictor")
      .def_static("create", &ToyNoisePredictor::create, py::arg("config"), py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) { return io::load_model(p); })
      .def("save", [](const ToyNoisePredictor& self, const std::filesystem::path& p) { io::save_model(p, self); })
      .def_property_readonly("config", &ToyNoisePredictor::config)
      .def_property("weights", &ToyNoisePredictor::weights,
                    [](ToyNoisePredictor& self, const Eigen::VectorXd& w) { self.set_weights(w); })
      .def(
          "predict",
          [](const ToyNoisePredictor& self, const Eigen::Ref<const RowPoints>& noisy,
             std::optional<Eigen::Ref<const RowPoints>> condition, int t) {
            const PointCloud x = to_cloud(noisy);
            if (!condition) return vectors_to_array(self.predict(x, NullToken{}, t));
            const PointCloud c = to_cloud(*condition);
            return vectors_to_array(self.predict(x, std::cref(c), t));
          },
          py::arg("noisy"), py::arg("condition"), py::arg("t"))
      .def(
          "loss",
          [](const ToyNoisePredictor& self, const Eigen::Ref<const RowPoints>& noisy,
             const Eigen::Ref<const RowPoints>& eps, std::optional<Eigen::Ref<const RowPoints>> condition, int t,
             double r) {
            TrainingExample ex;
            ex.noisy = to_cloud(noisy);
            ex.eps = eps.transpose();
            if (condition) ex.condition = to_cloud(*condition);
            ex.t = t;
            const LossBreakdown lb = self.loss_and_gradient(ex, r, nullptr);
            py::dict d;
            d["total"] = lb.total;
            d["diff"] = lb.diff;
            d["mean"] = lb.mean;
            d["std"] = lb.std;
            return d;
          },
          py::arg("noisy"), py::arg("eps"), py::arg("condition"), py::arg("t"), py::arg("reg_weight") = 5.0);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("lr_halving_period", &TrainConfig::lr_halving_period)
      .def_readwrite("weight_decay", &TrainConfig::weight_decay)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("pair_repeats", &TrainConfig::pair_repeats)
      .def_readwrite("stratified_t", &TrainConfig::stratified_t)
      .def_readwrite("reg_weight", &TrainConfig::reg_weight)
      .def_readwrite("null_prob", &TrainConfig::null_prob)
      .def_readwrite("seed", &TrainConfig::seed);
  m.def("learning_rate_at", &learning_rate_at, py::arg("config"), py::arg("epoch"));
  m.def(
      "train",
      [](ToyNoisePredictor& model, const std::vector<std::pair<Eigen::Ref<const RowPoints>, Eigen::Ref<const RowPoints>>>& pairs,
         const NoiseSchedule& sched, const TrainConfig& cfg) {
        std::vector<ScenePair> data;
        for (const auto& [input, gt] : pairs) data.push_back({to_cloud(input), to_cloud(gt), RigidPose::identity()});
        py::gil_scoped_release release;
        const TrainHistory h = train(model, data, sched, cfg);
        std::vector<double> totals;
        for (const auto& e : h.epochs) totals.push_back(e.total);
        return totals;
      },
      py::arg("model"), py::arg("pairs"), py::arg("schedule"), py::arg("config"),
      "Trains in place on (input, gt) pairs; returns the per-epoch mean total loss.");

  py::enum_<SigmaMode>(m, "SigmaMode").value("Std", SigmaMode::Std).value("Verbatim", SigmaMode::Verbatim);
  py::class_<SamplerConfig>(m, "SamplerConfig")
      .def(py::init<>())
      .def_readwrite("guidance", &SamplerConfig::guidance)
      .def_readwrite("steps", &SamplerConfig::steps)
      .def_readwrite("stochastic", &SamplerConfig::stochastic)
      .def_readwrite("sigma_mode", &SamplerConfig::sigma_mode)
      .def_readwrite("seed", &SamplerConfig::seed);
  m.def(
      "build_initial_noisy",
      [](const Eigen::Ref<const RowPoints>& scan, std::size_t k, const NoiseSchedule& s, std::uint64_t seed) {
        return to_array(build_initial_noisy(to_cloud(scan), k, s, seed));
      },
      py::arg("scan"), py::arg("copies"), py::arg("schedule"), py::arg("seed") = 0);
  m.def(
      "sample",
      [](const ToyNoisePredictor& model, const Eigen::Ref<const RowPoints>& condition,
         const Eigen::Ref<const RowPoints>& init, const NoiseSchedule& s, const SamplerConfig& cfg) {
        SampleTrace trace;
        const PointCloud c = to_cloud(condition);
        const PointCloud x = to_cloud(init);
        PointCloud out;
        {
          py::gil_scoped_release release;
          out = sample(model, c, x, s, cfg, &trace);
        }
        std::vector<std::tuple<int, double, double>> steps;
        for (const auto& st : trace.steps) steps.emplace_back(st.t, st.mean, st.stddev);
        return py::make_tuple(to_array(out), steps);
      },
      py::arg("model"), py::arg("condition"), py::arg("init"), py::arg("schedule"), py::arg("config"),
      "Guided sampling; returns (points, [(t, mean, std) per visited step]).");
  m.def(
      "sample_oracle",
      [](const Eigen::Ref<const RowPoints>& base, const Eigen::Ref<const RowPoints>& init, const NoiseSchedule& s,
         const SamplerConfig& cfg) {
        const PointCloud b = to_cloud(base);
        ConsistentOraclePredictor oracle(b, s);
        return to_array(sample(oracle, b, to_cloud(init), s, cfg));
      },
      py::arg("base"), py::arg("init"), py::arg("schedule"), py::arg("config"));

  // refinement
  py::class_<RefineConfig>(m, "RefineConfig")
      .def(py::init<>())
      .def_readwrite("kappa", &RefineConfig::kappa)
      .def_readwrite("max_offset", &RefineConfig::max_offset)
      .def_readwrite("jitter_sigma", &RefineConfig::jitter_sigma)
      .def_readwrite("hidden_dims", &RefineConfig::hidden_dims)
      .def_readwrite("epochs", &RefineConfig::epochs)
      .def_readwrite("learning_rate", &RefineConfig::learning_rate)
      .def_readwrite("seed", &RefineConfig::seed);
  py::class_<RefineNet>(m, "RefineNet")
      .def_static("create", &RefineNet::create, py::arg("config"), py::arg("seed") = 0)
      .def_static("zeros", &RefineNet::zeros, py::arg("config"))
      .def_property_readonly("config", &RefineNet::config)
      .def("upsample", [](const RefineNet& self, const Eigen::Ref<const RowPoints>& p) {
        return to_array(refine_upsample(to_cloud(p), self));
      });
  m.def("refine_loss", [](const Eigen::Ref<const RowPoints>& gt, const Eigen::Ref<const RowPoints>& pred) {
    return refine_loss(to_cloud(gt), to_cloud(pred));
  });

  // data
  m.def(
      "generate_synthetic_scene",
      [](std::uint64_t seed, std::size_t n_gt, std::size_t n_scan, int n_boxes, double extent) {
        SceneSpec spec;
        spec.n_gt = n_gt;
        spec.n_scan = n_scan;
        spec.n_boxes = n_boxes;
        spec.extent = extent;
        const SyntheticScene s = generate_synthetic_scene(spec, seed);
        return py::make_tuple(to_array(s.dense_gt), to_array(s.sparse_scan));
      },
      py::arg("seed"), py::arg("n_gt") = 2000, py::arg("n_scan") = 200, py::arg("n_boxes") = 3,
      py::arg("extent") = 10.0, "Returns (dense_gt, sparse_scan).");
  m.def("read_ply", [](const std::filesystem::path& p) { return to_array(io::read_ply(p)); });
  m.def("write_ply", [](const std::filesystem::path& p, const Eigen::Ref<const RowPoints>& pts) {
    io::write_ply(p, to_cloud(pts));
  });
  m.def("read_kitti_bin", [](const std::filesystem::path& p) { return to_array(io::read_kitti_bin(p)); });
  m.def("read_labels", [](const std::filesystem::path& p) { return io::read_labels(p); });
  m.def("read_poses", [](const std::filesystem::path& p) {
    std::vector<Eigen::Matrix<double, 3, 4>> out;
    for (const RigidPose& pose : io::read_poses(p)) {
      Eigen::Matrix<double, 3, 4> rt;
      rt << pose.rotation, pose.translation;
      out.push_back(rt);
    }
    return out;
  });

  m.def(
      "cli_main",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "scenediff");
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli_main(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a command-line invocation; returns (exit_code, stdout, stderr).");
}
