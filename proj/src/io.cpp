#include "odereg/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "odereg/errors.hpp"

namespace odereg {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

std::uint32_t byteswap32(std::uint32_t x) {
  return (x >> 24) | ((x >> 8) & 0xff00u) | ((x << 8) & 0xff0000u) | (x << 24);
}

void put_f32(std::string& buf, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
  char b[4];
  std::memcpy(b, &bits, 4);
  buf.append(b, 4);
}

float get_f32(const char* p) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
  return std::bit_cast<float>(bits);
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

void write_binary(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

std::string read_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_header(const fs::path& header, const std::string& kind) {
  json j;
  try {
    j = json::parse(read_text_file(header));
  } catch (const json::parse_error& e) {
    throw FormatError(header.string() + ": malformed header: " + e.what());
  }
  auto require = [&](const char* key) {
    if (!j.contains(key)) {
      throw FormatError(header.string() + ": header lacks \"" + key + "\"");
    }
  };
  for (const char* key : {"kind", "extents", "dtype", "byte_order", "payload"}) require(key);
  if (j["kind"] != kind) {
    throw FormatError(header.string() + ": expected kind \"" + kind + "\", found " +
                      j["kind"].dump());
  }
  if (j["dtype"] != "f32") {
    throw FormatError(header.string() + ": unknown dtype tag " + j["dtype"].dump());
  }
  if (j["byte_order"] != "little") {
    throw FormatError(header.string() + ": unsupported byte order " +
                      j["byte_order"].dump());
  }
  if (!j["extents"].is_array() || j["extents"].size() != 3) {
    throw FormatError(header.string() + ": extents must list x, y, z");
  }
  for (const auto& e : j["extents"]) {
    if (!e.is_number_integer() || e.get<std::int64_t>() <= 0) {
      throw FormatError(header.string() + ": extents must be positive integers");
    }
  }
  return j;
}

// Header lists x, y, z = axes 2, 1, 0.
Grid3 grid_from_header(const json& j) {
  return {j["extents"][2].get<std::int64_t>(), j["extents"][1].get<std::int64_t>(),
          j["extents"][0].get<std::int64_t>()};
}

json extents_json(const Grid3& g) { return json::array({g.n2, g.n1, g.n0}); }

std::string read_payload(const fs::path& header, const json& j, std::size_t expected) {
  const fs::path raw = header.parent_path() / j["payload"].get<std::string>();
  std::string bytes = read_binary(raw);
  if (bytes.size() != expected) {
    throw FormatError(raw.string() + ": payload length mismatch: expected " +
                      std::to_string(expected) + " bytes, found " +
                      std::to_string(bytes.size()));
  }
  return bytes;
}

}  // namespace

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << text;
}

fs::path payload_path(const fs::path& header) {
  fs::path p = header;
  p.replace_extension(".raw");
  return p;
}

void write_volume(const fs::path& header, const Volume& v) {
  for (double s : v.spacing) {
    if (!(s > 0.0)) throw ContractError("write_volume: spacing must be positive");
  }
  json j;
  j["kind"] = "volume";
  j["extents"] = extents_json(v.extents);
  j["spacing"] = json::array({v.spacing[2], v.spacing[1], v.spacing[0]});
  j["dtype"] = "f32";
  j["byte_order"] = "little";
  j["payload"] = payload_path(header).filename().string();
  std::string bytes;
  bytes.reserve(v.intensities.size() * 4);
  for (float x : v.intensities) put_f32(bytes, x);
  write_binary(payload_path(header), bytes);
  write_text_file(header, j.dump(2) + "\n");
}

Volume read_volume(const fs::path& header) {
  const json j = read_header(header, "volume");
  Volume v;
  v.extents = grid_from_header(j);
  if (j.contains("spacing")) {
    const auto& s = j["spacing"];
    if (!s.is_array() || s.size() != 3) throw FormatError(header.string() + ": bad spacing");
    v.spacing = {s[2].get<double>(), s[1].get<double>(), s[0].get<double>()};
    for (double x : v.spacing) {
      if (!(x > 0.0)) throw FormatError(header.string() + ": spacing must be positive");
    }
  }
  const auto n = static_cast<std::size_t>(v.extents.size());
  const std::string bytes = read_payload(header, j, 4 * n);
  v.intensities.resize(n);
  for (std::size_t i = 0; i < n; ++i) v.intensities[i] = get_f32(bytes.data() + 4 * i);
  return v;
}

void write_field(const fs::path& header, const DisplacementField& f) {
  json j;
  j["kind"] = "field";
  j["extents"] = extents_json(f.extents);
  j["resolution_fraction"] = f.resolution_fraction;
  j["components"] = json::array({"x", "y", "z"});
  j["dtype"] = "f32";
  j["byte_order"] = "little";
  j["payload"] = payload_path(header).filename().string();
  const std::int64_t n = f.extents.size();
  std::string bytes;
  bytes.reserve(static_cast<std::size_t>(12 * n));
  for (std::int64_t p = 0; p < n; ++p) {
    for (int axis = 2; axis >= 0; --axis) put_f32(bytes, f.vectors[axis * n + p]);
  }
  write_binary(payload_path(header), bytes);
  write_text_file(header, j.dump(2) + "\n");
}

DisplacementField read_field(const fs::path& header) {
  const json j = read_header(header, "field");
  if (!j.contains("resolution_fraction") || !j["resolution_fraction"].is_number() ||
      !(j["resolution_fraction"].get<double>() > 0.0)) {
    throw FormatError(header.string() + ": field header needs a positive resolution_fraction");
  }
  if (j.contains("components") && j["components"] != json::array({"x", "y", "z"})) {
    throw FormatError(header.string() + ": unsupported component order " +
                      j["components"].dump());
  }
  DisplacementField f;
  f.extents = grid_from_header(j);
  f.resolution_fraction = j["resolution_fraction"].get<double>();
  const std::int64_t n = f.extents.size();
  const std::string bytes = read_payload(header, j, static_cast<std::size_t>(12 * n));
  f.vectors.resize(static_cast<std::size_t>(3 * n));
  for (std::int64_t p = 0; p < n; ++p) {
    for (int c = 0; c < 3; ++c) {
      f.vectors[(2 - c) * n + p] = get_f32(bytes.data() + 12 * p + 4 * c);
    }
  }
  return f;
}

void write_landmarks(const fs::path& csv, const std::vector<LandmarkSet>& sets) {
  std::ostringstream out;
  out << "phase,index,x,y,z\n" << std::setprecision(17);
  for (const auto& s : sets) {
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      const Vec3& p = s.points[i];
      out << s.phase << ',' << i << ',' << p[2] << ',' << p[1] << ',' << p[0] << '\n';
    }
  }
  write_text_file(csv, out.str());
}

std::vector<LandmarkSet> read_landmarks(const fs::path& csv) {
  std::istringstream in(read_text_file(csv));
  std::string line;
  if (!std::getline(in, line) || line.rfind("phase,index,x,y,z", 0) != 0) {
    throw FormatError(csv.string() + ": expected header phase,index,x,y,z");
  }
  std::map<int, std::map<std::int64_t, Vec3>> by_phase;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream row(line);
    std::string cell[5];
    for (int c = 0; c < 5; ++c) {
      if (!std::getline(row, cell[c], c < 4 ? ',' : '\n')) {
        throw FormatError(csv.string() + ":" + std::to_string(line_no) +
                          ": expected 5 columns");
      }
    }
    try {
      const int phase = std::stoi(cell[0]);
      const std::int64_t index = std::stoll(cell[1]);
      const Vec3 p{std::stod(cell[4]), std::stod(cell[3]), std::stod(cell[2])};
      if (!by_phase[phase].emplace(index, p).second) {
        throw FormatError(csv.string() + ":" + std::to_string(line_no) +
                          ": duplicate index " + std::to_string(index) + " in phase " +
                          std::to_string(phase));
      }
    } catch (const std::logic_error&) {
      throw FormatError(csv.string() + ":" + std::to_string(line_no) + ": bad number");
    }
  }
  std::vector<LandmarkSet> out;
  for (const auto& [phase, points] : by_phase) {
    LandmarkSet s;
    s.phase = phase;
    std::int64_t expect = 0;
    for (const auto& [index, p] : points) {
      if (index != expect++) {
        throw FormatError(csv.string() + ": phase " + std::to_string(phase) +
                          " indices are not contiguous from 0");
      }
      s.points.push_back(p);
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {
constexpr char kCheckpointMagic[8] = {'O', 'D', 'E', 'R', 'C', 'K', 'P', '1'};

json arch_json(const ArchitectureConfig& a) {
  return {{"levels", a.levels},
          {"use_gru", a.use_gru},
          {"use_cost_volume", a.use_cost_volume},
          {"radius_quarter", a.radius_quarter},
          {"radius_half", a.radius_half},
          {"leaky_slope", a.leaky_slope},
          {"final_layer_scale", a.final_layer_scale}};
}

ArchitectureConfig arch_from_json(const json& j) {
  ArchitectureConfig a;
  a.levels = j.at("levels").get<int>();
  a.use_gru = j.at("use_gru").get<bool>();
  a.use_cost_volume = j.at("use_cost_volume").get<bool>();
  a.radius_quarter = j.at("radius_quarter").get<int>();
  a.radius_half = j.at("radius_half").get<int>();
  a.leaky_slope = j.at("leaky_slope").get<double>();
  a.final_layer_scale = j.at("final_layer_scale").get<double>();
  return a;
}
}  // namespace

void save_checkpoint(const fs::path& path, const ModelParams<float>& params,
                     const AdamState<float>* optimizer) {
  const auto tensors = params.parameters();
  json meta;
  meta["architecture"] = arch_json(params.arch);
  json shapes = json::array();
  for (const auto& t : tensors) shapes.push_back(t.shape());
  meta["shapes"] = shapes;
  meta["has_optimizer"] = optimizer != nullptr;
  if (optimizer) {
    if (optimizer->first_moment.size() != tensors.size()) {
      throw ContractError("save_checkpoint: optimizer state does not match parameters");
    }
    meta["step_count"] = optimizer->step_count;
    meta["beta1"] = optimizer->beta1;
    meta["beta2"] = optimizer->beta2;
    meta["epsilon"] = optimizer->epsilon;
  }
  const std::string text = meta.dump();
  std::string bytes(kCheckpointMagic, 8);
  put_u64(bytes, text.size());
  bytes += text;
  for (const auto& t : tensors)
    for (float x : t.data()) put_f32(bytes, x);
  if (optimizer) {
    for (const auto& m : optimizer->first_moment)
      for (float x : m) put_f32(bytes, x);
    for (const auto& v : optimizer->second_moment)
      for (float x : v) put_f32(bytes, x);
  }
  write_binary(path, bytes);
}

Checkpoint load_checkpoint(const fs::path& path) {
  const std::string bytes = read_binary(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw FormatError(path.string() + ": not a checkpoint file");
  }
  const std::uint64_t meta_len = get_u64(bytes.data() + 8);
  if (16 + meta_len > bytes.size()) throw FormatError(path.string() + ": truncated header");
  json meta;
  try {
    meta = json::parse(bytes.substr(16, meta_len));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  Checkpoint ck;
  ck.params = ModelParams<float>::initialize(arch_from_json(meta.at("architecture")), 0);
  auto tensors = ck.params.parameters();
  const auto& shapes = meta.at("shapes");
  if (shapes.size() != tensors.size()) {
    throw FormatError(path.string() + ": checkpoint holds " + std::to_string(shapes.size()) +
                      " tensors, architecture expects " + std::to_string(tensors.size()));
  }
  std::size_t total = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (shapes[i].get<Shape>() != tensors[i].shape()) {
      throw FormatError(path.string() + ": tensor " + std::to_string(i) + " has shape " +
                        shapes[i].dump() + ", expected " +
                        shape_string(tensors[i].shape()));
    }
    total += static_cast<std::size_t>(tensors[i].numel());
  }
  ck.has_optimizer = meta.at("has_optimizer").get<bool>();
  const std::size_t floats = total * (ck.has_optimizer ? 3 : 1);
  const std::size_t expected = 16 + meta_len + 4 * floats;
  if (bytes.size() != expected) {
    throw FormatError(path.string() + ": payload length mismatch: expected " +
                      std::to_string(expected) + " bytes, found " +
                      std::to_string(bytes.size()));
  }
  const char* p = bytes.data() + 16 + meta_len;
  for (auto& t : tensors) {
    auto d = t.mutable_data();
    for (auto& x : d) {
      x = get_f32(p);
      p += 4;
    }
  }
  if (ck.has_optimizer) {
    ck.optimizer = AdamState<float>::for_params(tensors);
    ck.optimizer.step_count = meta.at("step_count").get<std::int64_t>();
    ck.optimizer.beta1 = meta.at("beta1").get<double>();
    ck.optimizer.beta2 = meta.at("beta2").get<double>();
    ck.optimizer.epsilon = meta.at("epsilon").get<double>();
    for (auto* moments : {&ck.optimizer.first_moment, &ck.optimizer.second_moment}) {
      for (auto& m : *moments)
        for (auto& x : m) {
          x = get_f32(p);
          p += 4;
        }
    }
  }
  return ck;
}

void write_pgm_slice(const fs::path& path, const Volume& v, int axis, int index,
                     double lo, double hi) {
  if (axis < 0 || axis > 2) throw ContractError("write_pgm_slice: axis must be 0, 1 or 2");
  const Grid3 g = v.extents;
  const std::int64_t len = g.extent(axis);
  const std::int64_t s = index < 0 ? len / 2 : index;
  if (s >= len) throw ContractError("write_pgm_slice: slice index out of range");
  const int ra = axis == 0 ? 1 : 0, ca = axis == 2 ? 1 : 2;  // row / column axes
  const std::int64_t rows = g.extent(ra), cols = g.extent(ca);
  std::string bytes = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      std::int64_t pos[3];
      pos[axis] = s;
      pos[ra] = r;
      pos[ca] = c;
      const double x = (v.at(pos[0], pos[1], pos[2]) - lo) / (hi - lo);
      bytes.push_back(static_cast<char>(
          static_cast<unsigned char>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0))));
    }
  }
  write_binary(path, bytes);
}

void write_loss_log(const fs::path& csv, const std::vector<TrainLogEntry>& log) {
  std::ostringstream out;
  out << "step,phase,loss,ncc,smoothness,grad_norm\n" << std::setprecision(10);
  for (const auto& e : log) {
    out << e.step << ',' << e.phase << ',' << e.loss << ',' << e.ncc << ','
        << e.smoothness << ',' << e.grad_norm << '\n';
  }
  write_text_file(csv, out.str());
}

}  // namespace odereg
