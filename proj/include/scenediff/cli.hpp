#pragma once

#include "scenediff/config.hpp"
#include "scenediff/geometry.hpp"
#include "scenediff/noise_model.hpp"
#include "scenediff/refinement.hpp"
#include "scenediff/sampler.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace scenediff {

/// A `scene_*` directory holding scan.ply and gt.ply.
struct SceneFiles {
  std::string name;
  PointCloud scan;
  PointCloud gt;
};

/// Sorted `scene_*` subdirectories of `dir`. Throws if there are none.
std::vector<SceneFiles> load_scene_dir(const std::filesystem::path& dir);

/// Range crop, then FPS down to n_input if the scan is larger.
PointCloud prepare_input(const PointCloud& scan, const PipelineConfig& config, std::uint64_t seed);
/// Random subset of n_gt points if the cloud is larger.
PointCloud prepare_gt(const PointCloud& gt, const PipelineConfig& config, std::uint64_t seed);

/// Replicate, noise, guided sampling and the optional refinement pass.
PointCloud complete_scan(const ToyNoisePredictor& model, const RefineNet* refine,
                         const PointCloud& scan, const RunConfig& config,
                         SampleTrace* trace = nullptr);

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, const char* const* argv);

}  // namespace scenediff
