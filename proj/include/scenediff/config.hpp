#pragma once

#include "scenediff/dataset.hpp"
#include "scenediff/noise_model.hpp"
#include "scenediff/refinement.hpp"
#include "scenediff/sampler.hpp"
#include "scenediff/schedule.hpp"
#include "scenediff/training.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace scenediff {

/// Every tunable of the command-line surface. Keys are the snake_case spelling
/// of the long flags (`--reg-weight` <-> `reg_weight`).
struct RunConfig {
  SamplerConfig sampler;
  TrainConfig train;
  RefineConfig refine;
  PipelineConfig pipeline;
  ModelConfig model;
  int diffusion_steps = 1000;
  double beta_start = 3.5e-5;
  double beta_end = 0.007;
  std::size_t replicate = 10;
  bool dedup = false;
  double quantization = 0.05;  ///< voxel size used when dedup is on
  std::vector<double> iou_resolutions{0.5, 0.2, 0.1};

  NoiseSchedule schedule() const;

  /// Sets one key from its text value. Throws ConfigError naming the key when
  /// it is unknown or the value does not parse.
  void set(const std::string& key, const std::string& value);

  /// Flat key=value text; '#' starts a comment. Errors carry the line number.
  void merge_text(const std::string& text);
  void merge_file(const std::filesystem::path& path);

  /// Runs the per-section validators.
  void validate() const;

  static const std::vector<std::string>& keys();
};

/// "a,b,c" -> {a, b, c}. Throws ConfigError on a malformed entry.
std::vector<double> parse_double_list(const std::string& text);
std::vector<int> parse_int_list(const std::string& text);

}  // namespace scenediff
