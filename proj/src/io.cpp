#include "scenediff/io.hpp"

#include "scenediff/errors.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace scenediff::io {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

namespace {

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    out.push_back(static_cast<char>((value >> (8 * b)) & 0xFF));
  }
}

void put_u32(std::string& out, std::uint32_t v) { put_le(out, v); }
void put_u64(std::string& out, std::uint64_t v) { put_le(out, v); }
void put_f32(std::string& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

/// Sequential little-endian reader that reports byte offsets on failure.
class ByteReader {
 public:
  ByteReader(const std::string& data, std::string what, std::size_t start = 0)
      : data_(data), what_(std::move(what)), pos_(start) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  template <typename U>
  U get_le() {
    if (remaining() < sizeof(U)) {
      throw FormatError(what_ + ": unexpected end of data", pos_, FormatError::Unit::Byte);
    }
    U v = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) {
      v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
    }
    pos_ += sizeof(U);
    return v;
  }

  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

  void expect_magic(const char (&magic)[5]) {
    if (remaining() < 4 || data_.compare(pos_, 4, magic, 4) != 0) {
      throw FormatError(what_ + ": bad magic, expected " + std::string(magic), pos_,
                        FormatError::Unit::Byte);
    }
    pos_ += 4;
  }

  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw FormatError(what_ + ": " + msg, at, FormatError::Unit::Byte);
  }

 private:
  const std::string& data_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace

// --- KITTI -----------------------------------------------------------------

PointCloud read_kitti_bin(const fs::path& path) {
  const std::string data = read_file(path);
  if (data.size() % 16 != 0) {
    throw FormatError("KITTI scan size " + std::to_string(data.size()) + " is not a multiple of 16",
                      data.size() - data.size() % 16, FormatError::Unit::Byte);
  }
  ByteReader r(data, "KITTI scan");
  PointCloud cloud;
  cloud.points.reserve(data.size() / 16);
  while (r.remaining() > 0) {
    const double x = r.f32();
    const double y = r.f32();
    const double z = r.f32();
    r.f32();
    cloud.points.emplace_back(x, y, z);
  }
  return cloud;
}

void write_kitti_bin(const fs::path& path, const PointCloud& cloud) {
  std::string out;
  out.reserve(cloud.size() * 16);
  for (const Point3& p : cloud.points) {
    put_f32(out, static_cast<float>(p.x()));
    put_f32(out, static_cast<float>(p.y()));
    put_f32(out, static_cast<float>(p.z()));
    put_f32(out, 0.0f);
  }
  write_file(path, out);
}

std::vector<std::uint32_t> read_labels(const fs::path& path) {
  const std::string data = read_file(path);
  if (data.size() % 4 != 0) {
    throw FormatError("label file size " + std::to_string(data.size()) + " is not a multiple of 4",
                      data.size() - data.size() % 4, FormatError::Unit::Byte);
  }
  ByteReader r(data, "labels");
  std::vector<std::uint32_t> labels(data.size() / 4);
  for (auto& l : labels) l = r.u32() & 0xFFFFu;
  return labels;
}

void write_labels(const fs::path& path, const std::vector<std::uint32_t>& raw) {
  std::string out;
  out.reserve(raw.size() * 4);
  for (std::uint32_t v : raw) put_u32(out, v);
  write_file(path, out);
}

std::vector<RigidPose> parse_poses(const std::string& text) {
  std::vector<RigidPose> poses;
  std::istringstream lines(text);
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    std::istringstream tokens(line);
    std::vector<std::string> parts;
    for (std::string tok; tokens >> tok;) parts.push_back(tok);
    if (parts.empty()) continue;
    if (parts.size() != 12) {
      throw FormatError("pose line has " + std::to_string(parts.size()) + " values, expected 12",
                        line_no, FormatError::Unit::Line);
    }
    double v[12];
    for (int i = 0; i < 12; ++i) {
      std::size_t used = 0;
      try {
        v[i] = std::stod(parts[static_cast<std::size_t>(i)], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != parts[static_cast<std::size_t>(i)].size()) {
        throw FormatError("not a number: '" + parts[static_cast<std::size_t>(i)] + "'", line_no,
                          FormatError::Unit::Line);
      }
    }
    RigidPose pose;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) pose.rotation(r, c) = v[4 * r + c];
      pose.translation[r] = v[4 * r + 3];
    }
    poses.push_back(pose);
  }
  return poses;
}

std::vector<RigidPose> read_poses(const fs::path& path) { return parse_poses(read_file(path)); }

// --- PLY -------------------------------------------------------------------

void write_ply(const fs::path& path, const PointCloud& cloud) {
  std::string out =
      "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(cloud.size()) +
      "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  out.reserve(out.size() + cloud.size() * 12);
  for (const Point3& p : cloud.points) {
    put_f32(out, static_cast<float>(p.x()));
    put_f32(out, static_cast<float>(p.y()));
    put_f32(out, static_cast<float>(p.z()));
  }
  write_file(path, out);
}

namespace {

struct PlyProperty {
  std::string name;
  std::string type;
  bool is_list = false;
};

struct PlyElement {
  std::string name;
  std::uint64_t count = 0;
  std::uint64_t line = 0;
  std::vector<PlyProperty> properties;
};

std::size_t ply_type_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
  if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
  if (type == "int" || type == "uint" || type == "int32" || type == "uint32" || type == "float" ||
      type == "float32") {
    return 4;
  }
  if (type == "double" || type == "float64") return 8;
  return 0;
}

double ply_read_binary(ByteReader& r, const std::string& type) {
  if (type == "char" || type == "int8") return static_cast<std::int8_t>(r.get_le<std::uint8_t>());
  if (type == "uchar" || type == "uint8") return r.get_le<std::uint8_t>();
  if (type == "short" || type == "int16") return static_cast<std::int16_t>(r.get_le<std::uint16_t>());
  if (type == "ushort" || type == "uint16") return r.get_le<std::uint16_t>();
  if (type == "int" || type == "int32") return static_cast<std::int32_t>(r.u32());
  if (type == "uint" || type == "uint32") return r.u32();
  if (type == "float" || type == "float32") return r.f32();
  return r.f64();
}

}  // namespace

PointCloud read_ply(const fs::path& path) {
  const std::string data = read_file(path);
  std::size_t pos = 0;
  std::uint64_t line_no = 0;
  auto next_line = [&](std::string& line) {
    if (pos >= data.size()) return false;
    std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) nl = data.size();
    line = data.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = std::min(nl + 1, data.size());
    ++line_no;
    return true;
  };

  std::string line;
  if (!next_line(line) || line != "ply") {
    throw FormatError("missing 'ply' magic", 1, FormatError::Unit::Line);
  }
  bool binary = false;
  bool have_format = false;
  bool ended = false;
  std::vector<PlyElement> elements;
  while (next_line(line)) {
    std::istringstream tokens(line);
    std::string key;
    tokens >> key;
    if (key.empty() || key == "comment" || key == "obj_info") continue;
    if (key == "end_header") {
      ended = true;
      break;
    }
    if (key == "format") {
      std::string fmt;
      tokens >> fmt;
      if (fmt == "ascii") {
        binary = false;
      } else if (fmt == "binary_little_endian") {
        binary = true;
      } else {
        throw FormatError("unsupported PLY format '" + fmt + "'", line_no, FormatError::Unit::Line);
      }
      have_format = true;
    } else if (key == "element") {
      PlyElement e;
      long long count = -1;
      tokens >> e.name >> count;
      if (e.name.empty() || count < 0) {
        throw FormatError("malformed element line", line_no, FormatError::Unit::Line);
      }
      e.count = static_cast<std::uint64_t>(count);
      e.line = line_no;
      elements.push_back(std::move(e));
    } else if (key == "property") {
      if (elements.empty()) throw FormatError("property before any element", line_no, FormatError::Unit::Line);
      PlyProperty p;
      tokens >> p.type;
      if (p.type == "list") {
        std::string count_type;
        p.is_list = true;
        tokens >> count_type >> p.type >> p.name;
        if (ply_type_size(count_type) == 0) {
          throw FormatError("unknown PLY type '" + count_type + "'", line_no, FormatError::Unit::Line);
        }
        p.type = count_type + " " + p.type;
      } else {
        tokens >> p.name;
        if (ply_type_size(p.type) == 0) {
          throw FormatError("unknown PLY type '" + p.type + "'", line_no, FormatError::Unit::Line);
        }
      }
      if (p.name.empty()) throw FormatError("malformed property line", line_no, FormatError::Unit::Line);
      elements.back().properties.push_back(std::move(p));
    } else {
      throw FormatError("unexpected header keyword '" + key + "'", line_no, FormatError::Unit::Line);
    }
  }
  if (!ended) throw FormatError("header has no end_header", line_no, FormatError::Unit::Line);
  if (!have_format) throw FormatError("header has no format line", line_no, FormatError::Unit::Line);

  auto vertex = std::find_if(elements.begin(), elements.end(),
                             [](const PlyElement& e) { return e.name == "vertex"; });
  if (vertex == elements.end()) throw FormatError("no vertex element", line_no, FormatError::Unit::Line);
  int axis_of[3] = {-1, -1, -1};
  for (std::size_t i = 0; i < vertex->properties.size(); ++i) {
    const std::string& n = vertex->properties[i].name;
    const int axis = n == "x" ? 0 : n == "y" ? 1 : n == "z" ? 2 : -1;
    if (axis >= 0) {
      if (vertex->properties[i].is_list) {
        throw FormatError("coordinate property is a list", vertex->line, FormatError::Unit::Line);
      }
      axis_of[axis] = static_cast<int>(i);
    }
  }
  if (axis_of[0] < 0 || axis_of[1] < 0 || axis_of[2] < 0) {
    throw FormatError("vertex element lacks x/y/z properties", vertex->line, FormatError::Unit::Line);
  }

  PointCloud cloud;
  cloud.points.reserve(vertex->count);
  std::vector<double> values;
  if (binary) {
    ByteReader r(data, "PLY body", pos);
    for (auto e = elements.begin(); e != elements.end(); ++e) {
      for (std::uint64_t k = 0; k < e->count; ++k) {
        values.clear();
        for (const PlyProperty& p : e->properties) {
          if (p.is_list) {
            const std::size_t split = p.type.find(' ');
            const auto n = static_cast<std::uint64_t>(ply_read_binary(r, p.type.substr(0, split)));
            for (std::uint64_t j = 0; j < n; ++j) ply_read_binary(r, p.type.substr(split + 1));
            values.push_back(0.0);
          } else {
            values.push_back(ply_read_binary(r, p.type));
          }
        }
        if (e == vertex) {
          cloud.points.emplace_back(values[static_cast<std::size_t>(axis_of[0])],
                                    values[static_cast<std::size_t>(axis_of[1])],
                                    values[static_cast<std::size_t>(axis_of[2])]);
        }
      }
    }
    if (r.remaining() != 0) {
      throw FormatError("trailing bytes after the last element", r.offset(), FormatError::Unit::Byte);
    }
  } else {
    for (auto e = elements.begin(); e != elements.end(); ++e) {
      for (std::uint64_t k = 0; k < e->count; ++k) {
        if (!next_line(line)) {
          throw FormatError("unexpected end of file in element '" + e->name + "'", line_no + 1,
                            FormatError::Unit::Line);
        }
        std::istringstream tokens(line);
        values.clear();
        for (const PlyProperty& p : e->properties) {
          double v = 0.0;
          if (!(tokens >> v)) throw FormatError("too few values", line_no, FormatError::Unit::Line);
          if (p.is_list) {
            for (long long j = 0; j < static_cast<long long>(v); ++j) {
              double skip = 0.0;
              if (!(tokens >> skip)) throw FormatError("short list", line_no, FormatError::Unit::Line);
            }
          }
          values.push_back(v);
        }
        std::string extra;
        if (tokens >> extra) throw FormatError("too many values", line_no, FormatError::Unit::Line);
        if (e == vertex) {
          cloud.points.emplace_back(values[static_cast<std::size_t>(axis_of[0])],
                                    values[static_cast<std::size_t>(axis_of[1])],
                                    values[static_cast<std::size_t>(axis_of[2])]);
        }
      }
    }
  }
  return cloud;
}

PointCloud read_cloud(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ply") return read_ply(path);
  if (ext == ".bin") return read_kitti_bin(path);
  throw InvalidArgument("unknown point cloud extension '" + ext + "' (expected .ply or .bin)");
}

// --- model files -----------------------------------------------------------

namespace {

constexpr std::uint32_t kFormatVersion = 1;

void put_tensors(std::string& out, const ParamLayout& layout, const Eigen::VectorXd& w) {
  for (std::size_t id = 0; id < layout.entries().size(); ++id) {
    const auto& e = layout.entry(id);
    put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
    for (std::uint32_t d : e.dims) put_u32(out, d);
    if (e.dims.size() == 2) {
      const auto m = layout.matrix(w, id);
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
      }
    } else {
      const auto v = layout.vector(w, id);
      for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(out, v[i]);
    }
  }
}

Eigen::VectorXd get_tensors(ByteReader& r, const ParamLayout& layout) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.total_size()));
  for (std::size_t id = 0; id < layout.entries().size(); ++id) {
    const auto& e = layout.entry(id);
    const std::size_t at = r.offset();
    const std::uint32_t rank = r.u32();
    std::vector<std::uint32_t> dims(std::min<std::uint32_t>(rank, 8));
    if (rank != e.dims.size()) r.fail("tensor '" + e.name + "' has rank " + std::to_string(rank), at);
    for (auto& d : dims) d = r.u32();
    if (dims != e.dims) r.fail("tensor '" + e.name + "' has unexpected dimensions", at);
    if (rank == 2) {
      auto m = layout.matrix(w, id);
      for (Eigen::Index row = 0; row < m.rows(); ++row) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(row, c) = r.f64();
      }
    } else {
      auto v = layout.vector(w, id);
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = r.f64();
    }
  }
  if (r.remaining() != 0) r.fail("trailing bytes after the last tensor", r.offset());
  if (!w.allFinite()) r.fail("non-finite weight", 0);
  return w;
}

void check_version(ByteReader& r) {
  const std::size_t at = r.offset();
  const std::uint32_t v = r.u32();
  if (v != kFormatVersion) r.fail("unsupported format version " + std::to_string(v), at);
}

std::uint32_t checked_dim(ByteReader& r, const char* what) {
  const std::size_t at = r.offset();
  const std::uint32_t v = r.u32();
  if (v == 0 || v > (1u << 20)) r.fail(std::string("implausible ") + what + " " + std::to_string(v), at);
  return v;
}

}  // namespace

void save_model(const fs::path& path, const ToyNoisePredictor& model) {
  const ModelConfig& c = model.config();
  std::string out = "PCDF";
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(c.d_t));
  put_u32(out, static_cast<std::uint32_t>(c.d_c));
  put_u32(out, static_cast<std::uint32_t>(c.layer_dims.size()));
  for (int d : c.layer_dims) put_u32(out, static_cast<std::uint32_t>(d));
  put_u32(out, static_cast<std::uint32_t>(c.n_condition_points));
  put_u32(out, static_cast<std::uint32_t>(c.activation));
  put_f64(out, c.input_scale);
  put_u64(out, c.fps_seed);
  put_tensors(out, model.layout(), model.weights());
  write_file(path, out);
}

ToyNoisePredictor load_model(const fs::path& path) {
  const std::string data = read_file(path);
  ByteReader r(data, "model file");
  r.expect_magic("PCDF");
  check_version(r);
  ModelConfig c;
  c.d_t = static_cast<int>(checked_dim(r, "d_t"));
  c.d_c = static_cast<int>(checked_dim(r, "d_c"));
  const std::size_t at = r.offset();
  const std::uint32_t depth = r.u32();
  if (depth > 64) r.fail("implausible layer count " + std::to_string(depth), at);
  c.layer_dims.resize(depth);
  for (int& d : c.layer_dims) d = static_cast<int>(checked_dim(r, "layer width"));
  c.n_condition_points = static_cast<int>(checked_dim(r, "condition size"));
  const std::size_t act_at = r.offset();
  const std::uint32_t act = r.u32();
  if (act != static_cast<std::uint32_t>(Activation::SiLU)) r.fail("unknown activation", act_at);
  c.activation = Activation::SiLU;
  c.input_scale = r.f64();
  c.fps_seed = r.u64();
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    r.fail(e.what(), 0);
  }
  ToyNoisePredictor model = ToyNoisePredictor::create(c, 0);
  model.set_weights(get_tensors(r, model.layout()));
  return model;
}

void save_refine_model(const fs::path& path, const RefineNet& net) {
  const RefineConfig& c = net.config();
  std::string out = "PCRF";
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(c.kappa));
  put_f64(out, c.max_offset);
  put_u32(out, static_cast<std::uint32_t>(c.hidden_dims.size()));
  for (int d : c.hidden_dims) put_u32(out, static_cast<std::uint32_t>(d));
  put_u32(out, static_cast<std::uint32_t>(c.context_k));
  put_f64(out, c.input_scale);
  put_f64(out, c.local_scale);
  put_tensors(out, net.layout(), net.weights());
  write_file(path, out);
}

RefineNet load_refine_model(const fs::path& path) {
  const std::string data = read_file(path);
  ByteReader r(data, "refine model file");
  r.expect_magic("PCRF");
  check_version(r);
  RefineConfig c;
  c.kappa = static_cast<int>(checked_dim(r, "kappa"));
  c.max_offset = r.f64();
  const std::size_t at = r.offset();
  const std::uint32_t depth = r.u32();
  if (depth > 64) r.fail("implausible layer count " + std::to_string(depth), at);
  c.hidden_dims.resize(depth);
  for (int& d : c.hidden_dims) d = static_cast<int>(checked_dim(r, "layer width"));
  c.context_k = static_cast<int>(checked_dim(r, "context size"));
  c.input_scale = r.f64();
  c.local_scale = r.f64();
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    r.fail(e.what(), 0);
  }
  RefineNet net = RefineNet::zeros(c);
  net.set_weights(get_tensors(r, net.layout()));
  return net;
}

}  // namespace scenediff::io
