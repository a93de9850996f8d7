#include "scenediff/config.hpp"

#include "scenediff/errors.hpp"
#include "scenediff/io.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

namespace scenediff {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

std::size_t to_count(const std::string& key, const std::string& v) {
  const long long n = to_int(key, v);
  if (n < 0) throw ConfigError(key + ": must be >= 0");
  return static_cast<std::size_t>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) parts.push_back(trim(item));
  return parts;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"guidance", [](RunConfig& c, auto& k, auto& v) { c.sampler.guidance = to_double(k, v); }},
      {"steps", [](RunConfig& c, auto& k, auto& v) { c.sampler.steps = static_cast<int>(to_int(k, v)); }},
      {"stochastic", [](RunConfig& c, auto& k, auto& v) { c.sampler.stochastic = to_bool(k, v); }},
      {"sigma_mode",
       [](RunConfig& c, auto& k, auto& v) {
         if (v == "std") {
           c.sampler.sigma_mode = SigmaMode::Std;
         } else if (v == "verbatim") {
           c.sampler.sigma_mode = SigmaMode::Verbatim;
         } else {
           throw ConfigError(k + ": expected 'std' or 'verbatim', got '" + v + "'");
         }
       }},
      {"seed",
       [](RunConfig& c, auto& k, auto& v) {
         const auto s = static_cast<std::uint64_t>(to_count(k, v));
         c.sampler.seed = s;
         c.train.seed = s;
         c.refine.seed = s;
       }},
      {"replicate", [](RunConfig& c, auto& k, auto& v) { c.replicate = to_count(k, v); }},
      {"diffusion_steps", [](RunConfig& c, auto& k, auto& v) { c.diffusion_steps = static_cast<int>(to_int(k, v)); }},
      {"beta_start", [](RunConfig& c, auto& k, auto& v) { c.beta_start = to_double(k, v); }},
      {"beta_end", [](RunConfig& c, auto& k, auto& v) { c.beta_end = to_double(k, v); }},
      {"epochs", [](RunConfig& c, auto& k, auto& v) { c.train.epochs = static_cast<int>(to_int(k, v)); }},
      {"lr", [](RunConfig& c, auto& k, auto& v) { c.train.learning_rate = to_double(k, v); }},
      {"lr_halving_period",
       [](RunConfig& c, auto& k, auto& v) { c.train.lr_halving_period = static_cast<int>(to_int(k, v)); }},
      {"weight_decay", [](RunConfig& c, auto& k, auto& v) { c.train.weight_decay = to_double(k, v); }},
      {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = static_cast<int>(to_int(k, v)); }},
      {"pair_repeats",
       [](RunConfig& c, auto& k, auto& v) { c.train.pair_repeats = static_cast<int>(to_int(k, v)); }},
      {"stratified_t", [](RunConfig& c, auto& k, auto& v) { c.train.stratified_t = to_bool(k, v); }},
      {"augment_yaw", [](RunConfig& c, auto& k, auto& v) { c.train.augment_yaw = to_bool(k, v); }},
      {"reg_weight", [](RunConfig& c, auto& k, auto& v) { c.train.reg_weight = to_double(k, v); }},
      {"null_prob", [](RunConfig& c, auto& k, auto& v) { c.train.null_prob = to_double(k, v); }},
      {"d_t", [](RunConfig& c, auto& k, auto& v) { c.model.d_t = static_cast<int>(to_int(k, v)); }},
      {"d_c", [](RunConfig& c, auto& k, auto& v) { c.model.d_c = static_cast<int>(to_int(k, v)); }},
      {"layer_dims", [](RunConfig& c, auto&, auto& v) { c.model.layer_dims = parse_int_list(v); }},
      {"n_condition_points",
       [](RunConfig& c, auto& k, auto& v) { c.model.n_condition_points = static_cast<int>(to_int(k, v)); }},
      {"input_scale", [](RunConfig& c, auto& k, auto& v) { c.model.input_scale = to_double(k, v); }},
      {"fps_seed",
       [](RunConfig& c, auto& k, auto& v) { c.model.fps_seed = static_cast<std::uint64_t>(to_count(k, v)); }},
      {"kappa", [](RunConfig& c, auto& k, auto& v) { c.refine.kappa = static_cast<int>(to_int(k, v)); }},
      {"max_offset", [](RunConfig& c, auto& k, auto& v) { c.refine.max_offset = to_double(k, v); }},
      {"jitter_sigma", [](RunConfig& c, auto& k, auto& v) { c.refine.jitter_sigma = to_double(k, v); }},
      {"refine_hidden_dims", [](RunConfig& c, auto&, auto& v) { c.refine.hidden_dims = parse_int_list(v); }},
      {"context_k", [](RunConfig& c, auto& k, auto& v) { c.refine.context_k = static_cast<int>(to_int(k, v)); }},
      {"refine_lr", [](RunConfig& c, auto& k, auto& v) { c.refine.learning_rate = to_double(k, v); }},
      {"refine_weight_decay", [](RunConfig& c, auto& k, auto& v) { c.refine.weight_decay = to_double(k, v); }},
      {"refine_epochs", [](RunConfig& c, auto& k, auto& v) { c.refine.epochs = static_cast<int>(to_int(k, v)); }},
      {"refine_batch_size",
       [](RunConfig& c, auto& k, auto& v) { c.refine.batch_size = static_cast<int>(to_int(k, v)); }},
      {"range", [](RunConfig& c, auto& k, auto& v) { c.pipeline.range_m = to_double(k, v); }},
      {"n_input", [](RunConfig& c, auto& k, auto& v) { c.pipeline.n_input = to_count(k, v); }},
      {"n_gt", [](RunConfig& c, auto& k, auto& v) { c.pipeline.n_gt = to_count(k, v); }},
      {"moving_label_ids",
       [](RunConfig& c, auto& k, auto& v) {
         c.pipeline.moving_label_ids.clear();
         for (const std::string& item : split_commas(v)) {
           if (item.empty()) continue;
           c.pipeline.moving_label_ids.insert(static_cast<std::uint32_t>(to_count(k, item)));
         }
       }},
      {"dedup", [](RunConfig& c, auto& k, auto& v) { c.dedup = to_bool(k, v); }},
      {"quantization", [](RunConfig& c, auto& k, auto& v) { c.quantization = to_double(k, v); }},
      {"iou_res", [](RunConfig& c, auto&, auto& v) { c.iou_resolutions = parse_double_list(v); }},
  };
  return table;
}

}  // namespace

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const std::string& item : split_commas(text)) out.push_back(to_double("list", item));
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const std::string& item : split_commas(text)) out.push_back(static_cast<int>(to_int("list", item)));
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

NoiseSchedule RunConfig::schedule() const { return NoiseSchedule::linear(diffusion_steps, beta_start, beta_end); }

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(*this, key, trim(value));
  if (key == "dedup" || key == "quantization") {
    pipeline.dedup_resolution = dedup ? std::optional<double>(quantization) : std::nullopt;
  }
}

void RunConfig::merge_text(const std::string& text) {
  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    try {
      set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) { merge_text(io::read_file(path)); }

void RunConfig::validate() const {
  const NoiseSchedule sched = schedule();
  sampler.validate(sched);
  train.validate();
  refine.validate();
  pipeline.validate();
  model.validate();
  if (replicate < 1) throw InvalidArgument("replicate must be >= 1");
  if (!(quantization > 0.0)) throw InvalidArgument("quantization must be positive");
  for (double r : iou_resolutions) {
    if (!(r > 0.0)) throw InvalidArgument("IoU resolutions must be positive");
  }
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [k, _] : setters()) out.push_back(k);
    return out;
  }();
  return names;
}

}  // namespace scenediff
