#include "scenediff/cli.hpp"

#include "scenediff/dataset.hpp"
#include "scenediff/errors.hpp"
#include "scenediff/io.hpp"
#include "scenediff/metrics.hpp"
#include "scenediff/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

namespace scenediff {

namespace fs = std::filesystem;

std::vector<SceneFiles> load_scene_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidArgument("not a directory: " + dir.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("scene_", 0) == 0) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw EmptyInputError("no scene_* directories in " + dir.string());
  std::vector<SceneFiles> scenes;
  for (const fs::path& d : dirs) {
    scenes.push_back({d.filename().string(), io::read_ply(d / "scan.ply"), io::read_ply(d / "gt.ply")});
  }
  return scenes;
}

PointCloud prepare_input(const PointCloud& scan, const PipelineConfig& config, std::uint64_t seed) {
  PointCloud cropped = crop_range(scan, config.range_m);
  if (cropped.empty()) throw EmptyInputError("no scan points within range");
  return cropped.size() > config.n_input ? fps(cropped, config.n_input, seed) : cropped;
}

PointCloud prepare_gt(const PointCloud& gt, const PipelineConfig& config, std::uint64_t seed) {
  if (gt.empty()) throw EmptyInputError("ground truth is empty");
  return gt.size() > config.n_gt ? sample_without_replacement(gt, config.n_gt, seed) : gt;
}

PointCloud complete_scan(const ToyNoisePredictor& model, const RefineNet* refine, const PointCloud& scan,
                         const RunConfig& config, SampleTrace* trace) {
  const NoiseSchedule sched = config.schedule();
  const PointCloud input = prepare_input(scan, config.pipeline, config.sampler.seed);
  const PointCloud init = build_initial_noisy(input, config.replicate, sched, config.sampler.seed);
  PointCloud result = sample(model, input, init, sched, config.sampler, trace);
  if (refine) result = refine_upsample(result, *refine);
  return result;
}

namespace {

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void write_trace_csv(const fs::path& path, const SampleTrace& trace) {
  std::ostringstream csv;
  csv << "step,t,mean,std\n";
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    csv << k << ',' << trace.steps[k].t << ',' << fmt(trace.steps[k].mean, "%.9g") << ','
        << fmt(trace.steps[k].stddev, "%.9g") << '\n';
  }
  io::write_file(path, csv.str());
}

std::vector<ScenePair> scene_pairs(const std::vector<SceneFiles>& scenes, const RunConfig& cfg) {
  std::vector<ScenePair> pairs;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    ScenePair p;
    p.input = prepare_input(scenes[i].scan, cfg.pipeline, cfg.train.seed + i);
    p.gt = prepare_gt(scenes[i].gt, cfg.pipeline, cfg.train.seed + i);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

ToyNoisePredictor train_model(const std::vector<ScenePair>& pairs, const RunConfig& cfg, std::ostream& out,
                              const std::string& history_path) {
  ToyNoisePredictor model = ToyNoisePredictor::create(cfg.model, cfg.train.seed);
  NoiseModelTrainer trainer(model, cfg.schedule(), cfg.train);
  std::ostringstream csv;
  csv << "epoch,lr,total,diff,mean,std\n";
  trainer.train(pairs, [&](const EpochStats& e) {
    out << "epoch " << e.epoch + 1 << " lr=" << fmt(e.learning_rate) << " loss=" << fmt(e.total)
        << " diff=" << fmt(e.diff) << " mean=" << fmt(e.mean) << " std=" << fmt(e.std) << '\n';
    csv << e.epoch + 1 << ',' << fmt(e.learning_rate, "%.9g") << ',' << fmt(e.total, "%.17g") << ','
        << fmt(e.diff, "%.17g") << ',' << fmt(e.mean, "%.17g") << ',' << fmt(e.std, "%.17g") << '\n';
  });
  if (!history_path.empty()) io::write_file(history_path, csv.str());
  return model;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Point cloud denoising model for LiDAR scan completion"};
  app.name("scenediff");
  app.require_subcommand(1);

  std::map<std::string, std::string> values;
  std::string config_path;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value run configuration file");
    for (const std::string& key : RunConfig::keys()) {
      sub->add_option("--" + dashed(key), values[key])->group("Run configuration");
    }
  };

  std::string input, model_path, refine_path, out_path, trace_path, initial_path;
  auto* complete = app.add_subcommand("complete", "Complete a single scan");
  complete->add_option("--input", input, "scan (.ply or .bin)")->required();
  complete->add_option("--model", model_path, "trained noise model")->required();
  complete->add_option("--refine-model", refine_path, "optional refinement model");
  complete->add_option("--out", out_path, "output .ply")->required();
  complete->add_option("--trace", trace_path, "CSV of per-step predicted-noise statistics");
  complete->add_option("--initial-out", initial_path, "also write the initial noisy cloud (.ply)");
  add_common(complete);

  std::string data_dir, history_path;
  auto* train_cmd = app.add_subcommand("train", "Train the noise model on scene_* directories");
  train_cmd->add_option("--data", data_dir)->required();
  train_cmd->add_option("--out", out_path)->required();
  train_cmd->add_option("--history", history_path, "CSV of per-epoch losses");
  add_common(train_cmd);

  auto* refine_cmd = app.add_subcommand("train-refine", "Train the refinement network");
  refine_cmd->add_option("--data", data_dir)->required();
  refine_cmd->add_option("--out", out_path)->required();
  add_common(refine_cmd);

  std::string pred_path, gt_path, format = "kv";
  auto* eval_cmd = app.add_subcommand("eval", "Compare a prediction with ground truth");
  eval_cmd->add_option("--pred", pred_path)->required();
  eval_cmd->add_option("--gt", gt_path)->required();
  eval_cmd->add_option("--out", out_path, "write the report to this file");
  eval_cmd->add_option("--format", format)->check(CLI::IsMember({"kv", "json"}));
  add_common(eval_cmd);

  std::string scans_dir, poses_path, labels_dir;
  auto* map_cmd = app.add_subcommand("build-map", "Aggregate posed scans into a static map");
  map_cmd->add_option("--scans", scans_dir, "directory of .bin scans")->required();
  map_cmd->add_option("--poses", poses_path)->required();
  map_cmd->add_option("--labels", labels_dir, "directory of .label files");
  map_cmd->add_option("--out", out_path)->required();
  add_common(map_cmd);

  int n_scenes = 8;
  SceneSpec spec;
  std::uint64_t synth_seed = 0;
  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic desk-scale scenes");
  synth_cmd->add_option("--out", out_path)->required();
  synth_cmd->add_option("--scenes", n_scenes)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth_seed);
  synth_cmd->add_option("--points-gt", spec.n_gt);
  synth_cmd->add_option("--points-scan", spec.n_scan);
  synth_cmd->add_option("--boxes", spec.n_boxes);
  synth_cmd->add_option("--extent", spec.extent);

  std::string param, value_list, trace_dir;
  auto* sweep_cmd = app.add_subcommand("sweep", "Mean chamfer distance over a parameter sweep");
  sweep_cmd->add_option("--param", param)->required()->check(CLI::IsMember({"reg-weight", "guidance", "steps"}));
  sweep_cmd->add_option("--values", value_list)->required();
  sweep_cmd->add_option("--data", data_dir)->required();
  sweep_cmd->add_option("--model", model_path, "trained model (guidance and steps sweeps)");
  sweep_cmd->add_option("--trace-dir", trace_dir, "per-value CSVs of predicted-noise statistics");
  add_common(sweep_cmd);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();  // program name
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << e.what() << '\n';
      return 0;
    }
    err << "scenediff: " << e.what() << '\n';
    return 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg.merge_file(config_path);
    for (const auto& [key, v] : values) {
      if (!v.empty()) cfg.set(key, v);
    }
    cfg.validate();

    if (complete->parsed()) {
      const ToyNoisePredictor model = io::load_model(model_path);
      std::optional<RefineNet> refine;
      if (!refine_path.empty()) refine = io::load_refine_model(refine_path);
      const PointCloud scan = io::read_cloud(input);
      if (!initial_path.empty()) {
        const PointCloud prepared = prepare_input(scan, cfg.pipeline, cfg.sampler.seed);
        io::write_ply(initial_path,
                      build_initial_noisy(prepared, cfg.replicate, cfg.schedule(), cfg.sampler.seed));
      }
      SampleTrace trace;
      const PointCloud result = complete_scan(model, refine ? &*refine : nullptr, scan, cfg, &trace);
      io::write_ply(out_path, result);
      if (!trace_path.empty()) write_trace_csv(trace_path, trace);
      out << "wrote " << result.size() << " points to " << out_path << '\n';
    } else if (train_cmd->parsed()) {
      const auto pairs = scene_pairs(load_scene_dir(data_dir), cfg);
      const ToyNoisePredictor model = train_model(pairs, cfg, out, history_path);
      io::save_model(out_path, model);
      out << "saved model to " << out_path << '\n';
    } else if (refine_cmd->parsed()) {
      std::vector<PointCloud> clean;
      const auto scenes = load_scene_dir(data_dir);
      for (std::size_t i = 0; i < scenes.size(); ++i) {
        clean.push_back(prepare_gt(scenes[i].gt, cfg.pipeline, cfg.refine.seed + i));
      }
      const auto pairs = make_refine_pairs(clean, cfg.refine);
      RefineNet net = RefineNet::create(cfg.refine, cfg.refine.seed);
      const RefineHistory h = train_refine(net, pairs, cfg.refine, [&](int epoch, double loss) {
        out << "epoch " << epoch + 1 << " refine_loss=" << fmt(loss) << '\n';
      });
      out << "initial_loss=" << fmt(h.initial_loss, "%.9g") << " final_loss=" << fmt(h.final_loss, "%.9g")
          << '\n';
      io::save_refine_model(out_path, net);
    } else if (eval_cmd->parsed()) {
      const MetricReport report = evaluate(io::read_cloud(pred_path), io::read_cloud(gt_path), cfg.iou_resolutions);
      const std::string text = format == "json" ? report.to_json() + "\n" : report.to_key_value();
      out << text;
      if (!out_path.empty()) io::write_file(out_path, text);
    } else if (map_cmd->parsed()) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(scans_dir)) {
        if (entry.path().extension() == ".bin") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw EmptyInputError("no .bin scans in " + scans_dir);
      const auto poses = io::read_poses(poses_path);
      if (poses.size() < files.size()) {
        throw SizeError(std::to_string(files.size()) + " scans but only " + std::to_string(poses.size()) +
                        " poses");
      }
      std::vector<PosedScan> scans;
      for (std::size_t i = 0; i < files.size(); ++i) {
        PosedScan s{io::read_kitti_bin(files[i]), poses[i]};
        if (!labels_dir.empty()) {
          s.cloud.labels = io::read_labels(fs::path(labels_dir) / (files[i].stem().string() + ".label"));
        }
        scans.push_back(std::move(s));
      }
      const PointCloud map = build_map(scans, cfg.pipeline);
      io::write_ply(out_path, map);
      out << "wrote " << map.size() << " map points to " << out_path << '\n';
    } else if (synth_cmd->parsed()) {
      fs::create_directories(out_path);
      for (int i = 0; i < n_scenes; ++i) {
        const SyntheticScene scene = generate_synthetic_scene(spec, synth_seed + static_cast<std::uint64_t>(i));
        char name[32];
        std::snprintf(name, sizeof name, "scene_%04d", i);
        const fs::path dir = fs::path(out_path) / name;
        fs::create_directories(dir);
        io::write_ply(dir / "scan.ply", scene.sparse_scan);
        io::write_ply(dir / "gt.ply", scene.dense_gt);
      }
      out << "wrote " << n_scenes << " scenes to " << out_path << '\n';
    } else if (sweep_cmd->parsed()) {
      const std::vector<double> sweep_values = parse_double_list(value_list);
      const auto scenes = load_scene_dir(data_dir);
      std::optional<ToyNoisePredictor> fixed;
      if (param != "reg-weight") {
        if (model_path.empty()) throw InvalidArgument("--model is required for a " + param + " sweep");
        fixed = io::load_model(model_path);
      }
      if (!trace_dir.empty()) fs::create_directories(trace_dir);
      std::vector<double> mean_cd;
      for (double v : sweep_values) {
        RunConfig run = cfg;
        run.set(param == "reg-weight" ? "reg_weight" : param, fmt(v, "%.17g"));
        run.validate();
        std::optional<ToyNoisePredictor> trained;
        if (!fixed) {
          std::ostringstream quiet;
          trained = train_model(scene_pairs(scenes, run), run, quiet, "");
        }
        const ToyNoisePredictor& model = fixed ? *fixed : *trained;
        double sum = 0.0;
        SampleTrace first_trace;
        for (std::size_t i = 0; i < scenes.size(); ++i) {
          SampleTrace trace;
          const PointCloud done = complete_scan(model, nullptr, scenes[i].scan, run, &trace);
          sum += chamfer_distance(done, prepare_gt(scenes[i].gt, run.pipeline, run.sampler.seed + i));
          if (i == 0) first_trace = trace;
        }
        mean_cd.push_back(sum / static_cast<double>(scenes.size()));
        if (!trace_dir.empty()) {
          write_trace_csv(fs::path(trace_dir) / ("trace_" + param + "_" + fmt(v, "%g") + ".csv"), first_trace);
        }
      }
      const std::string label = param == "reg-weight" ? "r" : param == "guidance" ? "s" : "steps";
      out << label;
      for (double v : sweep_values) out << '\t' << fmt(v, "%.1f");
      out << "\nCD [m]";
      for (double cd : mean_cd) out << '\t' << fmt(cd, "%.3f");
      out << '\n';
    }
    return 0;
  } catch (const std::exception& e) {
    err << "scenediff: error: " << e.what() << '\n';
    return 1;
  }
}

int cli_main(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace scenediff
