#include "physic/io.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace physic {

using nlohmann::json;
namespace fs = std::filesystem;

// ============================================================================
// Low-level helpers
// ============================================================================

namespace {

void atomic_write(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void append_u32(std::string& out, uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), 4);
}

void append_f32(std::string& out, float v) {
  out.append(reinterpret_cast<const char*>(&v), 4);
}

constexpr char kRasterMagic[9] = "PHSRAST1";

struct RasterHeader {
  uint32_t width = 0, height = 0, channels = 0;
};

RasterHeader parse_raster_header(const std::string& bytes, const fs::path& path) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kRasterMagic, 8) != 0)
    throw Error(ErrorCode::ParseError, path.string() + ": not a PHSRAST1 raster");
  RasterHeader h;
  std::memcpy(&h.width, bytes.data() + 8, 4);
  std::memcpy(&h.height, bytes.data() + 12, 4);
  std::memcpy(&h.channels, bytes.data() + 16, 4);
  const size_t expected = 20 + size_t(h.width) * h.height * h.channels * 4;
  if (bytes.size() != expected)
    throw Error(ErrorCode::ParseError, path.string() + ": raster payload size mismatch");
  return h;
}

float payload_f32(const std::string& bytes, size_t index) {
  float v;
  std::memcpy(&v, bytes.data() + 20 + index * 4, 4);
  return v;
}

// --- base64 ------------------------------------------------------------

constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::string& data) {
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 3 <= data.size(); i += 3) {
    const uint32_t n = (uint8_t(data[i]) << 16) | (uint8_t(data[i + 1]) << 8) | uint8_t(data[i + 2]);
    out.push_back(kB64Alphabet[(n >> 18) & 63]);
    out.push_back(kB64Alphabet[(n >> 12) & 63]);
    out.push_back(kB64Alphabet[(n >> 6) & 63]);
    out.push_back(kB64Alphabet[n & 63]);
  }
  const size_t rem = data.size() - i;
  if (rem == 1) {
    const uint32_t n = uint8_t(data[i]) << 16;
    out.push_back(kB64Alphabet[(n >> 18) & 63]);
    out.push_back(kB64Alphabet[(n >> 12) & 63]);
    out.append("==");
  } else if (rem == 2) {
    const uint32_t n = (uint8_t(data[i]) << 16) | (uint8_t(data[i + 1]) << 8);
    out.push_back(kB64Alphabet[(n >> 18) & 63]);
    out.push_back(kB64Alphabet[(n >> 12) & 63]);
    out.push_back(kB64Alphabet[(n >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::string base64_decode(const std::string& text) {
  std::array<int8_t, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) lut[uint8_t(kB64Alphabet[i])] = int8_t(i);
  std::string out;
  out.reserve(text.size() / 4 * 3);
  uint32_t acc = 0;
  int bits = 0;
  for (char ch : text) {
    if (ch == '=' || ch == '\n' || ch == '\r') continue;
    const int8_t v = lut[uint8_t(ch)];
    if (v < 0) throw Error(ErrorCode::ParseError, "invalid base64 character");
    acc = (acc << 6) | uint32_t(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(char((acc >> bits) & 0xff));
    }
  }
  return out;
}

std::string floats_to_bytes(const std::vector<float>& v) {
  std::string out;
  out.resize(v.size() * 4);
  std::memcpy(out.data(), v.data(), out.size());
  return out;
}

std::vector<float> bytes_to_floats(const std::string& bytes) {
  if (bytes.size() % 4 != 0)
    throw Error(ErrorCode::ParseError, "float payload size not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

json f32_array_json(const std::vector<float>& data, std::vector<int> shape) {
  json j;
  j["shape"] = shape;
  j["data"] = base64_encode(floats_to_bytes(data));
  return j;
}

std::vector<float> f32_array_parse(const json& j, const std::string& field,
                                   size_t expected_count) {
  if (!j.contains("data") || !j.contains("shape"))
    throw Error(ErrorCode::ParseError, field + ": missing data/shape");
  const auto floats = bytes_to_floats(base64_decode(j.at("data").get<std::string>()));
  if (floats.size() != expected_count)
    throw Error(ErrorCode::InvariantViolation,
                field + ": expected " + std::to_string(expected_count) + " floats, got " +
                    std::to_string(floats.size()));
  return floats;
}

std::string format_float(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", double(float(v)));
  return buf;
}

json require(const json& j, const std::string& key, const std::string& context) {
  if (!j.contains(key))
    throw Error(ErrorCode::MissingComponent, context + ": missing '" + key + "'");
  return j.at(key);
}

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

}  // namespace

// ============================================================================
// Rasters
// ============================================================================

void write_depth_raster(const fs::path& path, const DepthRaster& raster) {
  std::string out(kRasterMagic, 8);
  append_u32(out, uint32_t(raster.width));
  append_u32(out, uint32_t(raster.height));
  append_u32(out, 1);
  for (int i = 0; i < raster.size(); ++i)
    append_f32(out, raster.valid[i] ? float(raster.values[i])
                                    : std::numeric_limits<float>::quiet_NaN());
  atomic_write(path, out);
}

DepthRaster read_depth_raster(const fs::path& path) {
  const std::string bytes = read_file(path);
  const RasterHeader h = parse_raster_header(bytes, path);
  if (h.channels != 1)
    throw Error(ErrorCode::ParseError, path.string() + ": depth raster must have 1 channel");
  DepthRaster out = DepthRaster::invalid_raster(int(h.width), int(h.height));
  for (int i = 0; i < out.size(); ++i) {
    const float v = payload_f32(bytes, size_t(i));
    if (!std::isnan(v)) {
      out.values[i] = v;
      out.valid[i] = 1;
    }
  }
  return out;
}

void write_point_map(const fs::path& path, const PointMap& pm) {
  std::string out(kRasterMagic, 8);
  append_u32(out, uint32_t(pm.width));
  append_u32(out, uint32_t(pm.height));
  append_u32(out, 3);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  for (int i = 0; i < pm.size(); ++i) {
    for (int a = 0; a < 3; ++a)
      append_f32(out, pm.valid[i] ? float(pm.points[i][a]) : nan);
  }
  atomic_write(path, out);
}

PointMap read_point_map(const fs::path& path) {
  const std::string bytes = read_file(path);
  const RasterHeader h = parse_raster_header(bytes, path);
  if (h.channels != 3)
    throw Error(ErrorCode::ParseError, path.string() + ": point map must have 3 channels");
  PointMap out = PointMap::invalid_map(int(h.width), int(h.height));
  for (int i = 0; i < out.size(); ++i) {
    const float x = payload_f32(bytes, size_t(i) * 3);
    const float y = payload_f32(bytes, size_t(i) * 3 + 1);
    const float z = payload_f32(bytes, size_t(i) * 3 + 2);
    if (!std::isnan(x) && !std::isnan(y) && !std::isnan(z)) {
      out.points[i] = Vec3(x, y, z);
      out.valid[i] = 1;
    }
  }
  return out;
}

// ============================================================================
// Masks (PGM P5)
// ============================================================================

void write_mask(const fs::path& path, const PixelMask& mask) {
  std::string out = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) +
                    "\n255\n";
  out.reserve(out.size() + mask.inside.size());
  for (uint8_t v : mask.inside) out.push_back(char(v ? 255 : 0));
  atomic_write(path, out);
}

PixelMask read_mask(const fs::path& path) {
  const std::string bytes = read_file(path);
  size_t pos = 0;
  auto next_token = [&]() {
    while (pos < bytes.size()) {
      if (std::isspace(uint8_t(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    const size_t start = pos;
    while (pos < bytes.size() && !std::isspace(uint8_t(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };

  if (next_token() != "P5")
    throw Error(ErrorCode::ParseError, path.string() + ": not a binary PGM");
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w < 1 || h < 1 || maxval != 255)
    throw Error(ErrorCode::ParseError, path.string() + ": unsupported PGM header");
  ++pos;  // single whitespace after maxval
  if (bytes.size() - pos != size_t(w) * h)
    throw Error(ErrorCode::ParseError, path.string() + ": PGM payload size mismatch");

  PixelMask mask = PixelMask::filled(w, h, 0);
  for (size_t i = 0; i < mask.inside.size(); ++i)
    mask.inside[i] = uint8_t(bytes[pos + i]) == 255 ? 1 : 0;
  return mask;
}

// ============================================================================
// PLY
// ============================================================================

void write_ply(const fs::path& path, const PointCloud& cloud) {
  const bool with_normals = cloud.has_normals();
  std::ostringstream out;
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n";
  if (with_normals)
    out << "property float nx\nproperty float ny\nproperty float nz\n";
  out << "end_header\n";
  for (size_t i = 0; i < cloud.size(); ++i) {
    out << format_float(cloud.points[i].x()) << ' ' << format_float(cloud.points[i].y())
        << ' ' << format_float(cloud.points[i].z());
    if (with_normals) {
      const Vec3 n = cloud.normal_valid[i] ? cloud.normals[i] : Vec3::Zero();
      out << ' ' << format_float(n.x()) << ' ' << format_float(n.y()) << ' '
          << format_float(n.z());
    }
    out << '\n';
  }
  atomic_write(path, out.str());
}

PointCloud read_ply(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  size_t count = 0;
  int props = 0;
  bool in_header = true;
  if (!std::getline(in, line) || line != "ply")
    throw Error(ErrorCode::ParseError, path.string() + ": not a PLY file");
  while (in_header && std::getline(in, line)) {
    if (line.rfind("element vertex ", 0) == 0) count = std::stoul(line.substr(15));
    else if (line.rfind("property float ", 0) == 0) ++props;
    else if (line == "end_header") in_header = false;
  }
  if (in_header || (props != 3 && props != 6))
    throw Error(ErrorCode::ParseError, path.string() + ": unsupported PLY layout");

  PointCloud cloud;
  cloud.points.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line))
      throw Error(ErrorCode::ParseError, path.string() + ": truncated PLY payload");
    std::istringstream ls(line);
    Vec3 p, n = Vec3::Zero();
    ls >> p.x() >> p.y() >> p.z();
    if (props == 6) ls >> n.x() >> n.y() >> n.z();
    if (!ls) throw Error(ErrorCode::ParseError, path.string() + ": malformed PLY row");
    cloud.points.push_back(p);
    if (props == 6) {
      cloud.normals.push_back(n);
      cloud.normal_valid.push_back(n.norm() > 0.5 ? 1 : 0);
    }
  }
  return cloud;
}

// ============================================================================
// Body template
// ============================================================================

void save_template(const fs::path& path, const BodyTemplate& tmpl) {
  const int n = tmpl.vertex_count();
  const int nj = tmpl.joint_count();
  const int ns = tmpl.shape_dim();

  auto matrix_floats = [](const Eigen::MatrixXd& m) {
    std::vector<float> out;
    out.reserve(size_t(m.rows()) * m.cols());
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) out.push_back(float(m(r, c)));
    return out;
  };

  json j;
  j["vertices"] = f32_array_json(matrix_floats(tmpl.vertices), {n, 3});
  j["rest_joints"] = f32_array_json(matrix_floats(tmpl.rest_joints), {nj, 3});
  j["skinning"] = f32_array_json(matrix_floats(tmpl.skinning), {n, nj});
  j["joint_regressor"] = f32_array_json(matrix_floats(tmpl.joint_regressor), {nj, n});
  std::vector<float> dirs;
  dirs.reserve(size_t(ns) * n * 3);
  for (const auto& d : tmpl.shape_dirs) {
    const auto f = matrix_floats(d);
    dirs.insert(dirs.end(), f.begin(), f.end());
  }
  j["shape_dirs"] = f32_array_json(dirs, {ns, n, 3});

  json faces = json::array();
  for (const auto& f : tmpl.faces) faces.push_back({f[0], f[1], f[2]});
  j["faces"] = faces;
  j["parents"] = tmpl.parents;
  j["part_labels"] = tmpl.part_labels;
  j["part_names"] = tmpl.part_names;
  j["hand_joints"] = tmpl.hand_joints;
  json kp = json::object();
  for (const auto& [id, joint] : tmpl.keypoint_map) kp[std::to_string(id)] = joint;
  j["keypoint_map"] = kp;

  atomic_write(path, j.dump(2) + "\n");
}

BodyTemplate load_template(const fs::path& path) {
  const json j = parse_json_file(path);
  BodyTemplate tmpl;
  try {
    const json jv = require(j, "vertices", "template");
    const auto vshape = jv.at("shape").get<std::vector<int>>();
    if (vshape.size() != 2 || vshape[1] != 3)
      throw Error(ErrorCode::InvariantViolation, "vertices: bad shape");
    const int n = vshape[0];
    const auto vdata = f32_array_parse(jv, "vertices", size_t(n) * 3);
    tmpl.vertices.resize(n, 3);
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < 3; ++a) tmpl.vertices(i, a) = vdata[size_t(i) * 3 + a];

    const json jj = require(j, "rest_joints", "template");
    const auto jshape = jj.at("shape").get<std::vector<int>>();
    const int nj = jshape.at(0);
    const auto jdata = f32_array_parse(jj, "rest_joints", size_t(nj) * 3);
    tmpl.rest_joints.resize(nj, 3);
    for (int i = 0; i < nj; ++i)
      for (int a = 0; a < 3; ++a) tmpl.rest_joints(i, a) = jdata[size_t(i) * 3 + a];

    const auto sdata_json = require(j, "skinning", "template");
    const auto sdata = f32_array_parse(sdata_json, "skinning", size_t(n) * nj);
    tmpl.skinning.resize(n, nj);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < nj; ++c) tmpl.skinning(i, c) = sdata[size_t(i) * nj + c];

    const auto rdata = f32_array_parse(require(j, "joint_regressor", "template"),
                                       "joint_regressor", size_t(nj) * n);
    tmpl.joint_regressor.resize(nj, n);
    for (int i = 0; i < nj; ++i)
      for (int c = 0; c < n; ++c) tmpl.joint_regressor(i, c) = rdata[size_t(i) * n + c];

    const json jd = require(j, "shape_dirs", "template");
    const auto dshape = jd.at("shape").get<std::vector<int>>();
    const int ns = dshape.at(0);
    const auto ddata = f32_array_parse(jd, "shape_dirs", size_t(ns) * n * 3);
    tmpl.shape_dirs.resize(ns);
    for (int s = 0; s < ns; ++s) {
      tmpl.shape_dirs[s].resize(n, 3);
      for (int i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a)
          tmpl.shape_dirs[s](i, a) = ddata[(size_t(s) * n + i) * 3 + a];
    }

    for (const auto& f : require(j, "faces", "template"))
      tmpl.faces.push_back({f.at(0).get<int>(), f.at(1).get<int>(), f.at(2).get<int>()});
    tmpl.parents = require(j, "parents", "template").get<std::vector<int>>();
    tmpl.part_labels = require(j, "part_labels", "template").get<std::vector<int>>();
    tmpl.part_names = require(j, "part_names", "template").get<std::vector<std::string>>();
    tmpl.hand_joints = require(j, "hand_joints", "template").get<std::vector<int>>();
    const json kp_map = require(j, "keypoint_map", "template");
    for (const auto& [key, value] : kp_map.items())
      tmpl.keypoint_map[std::stoi(key)] = value.get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  tmpl.validate();
  return tmpl;
}

// ============================================================================
// Body parameters
// ============================================================================

void save_body_params(const fs::path& path, const BodyParams& params,
                      const BodyTemplate& tmpl) {
  json j;
  j["beta"] = std::vector<double>(params.beta.data(), params.beta.data() + params.beta.size());
  json body = json::array(), hand = json::array();
  for (int joint = 0; joint < tmpl.joint_count(); ++joint) {
    const auto& t = params.theta[joint];
    if (!tmpl.is_hand_joint(joint)) body.push_back({t.x(), t.y(), t.z()});
  }
  for (int joint : tmpl.hand_joints) {
    const auto& t = params.theta[joint];
    hand.push_back({t.x(), t.y(), t.z()});
  }
  j["theta_body"] = body;
  j["theta_hand"] = hand;
  j["trans"] = {params.trans.x(), params.trans.y(), params.trans.z()};
  atomic_write(path, j.dump(2) + "\n");
}

BodyParams load_body_params(const fs::path& path, const BodyTemplate& tmpl) {
  const json j = parse_json_file(path);
  BodyParams params = BodyParams::zero(tmpl);
  try {
    const auto beta = require(j, "beta", "params").get<std::vector<double>>();
    if (int(beta.size()) != tmpl.shape_dim())
      throw Error(ErrorCode::InvariantViolation, "params: beta size mismatch");
    params.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), beta.size());

    const json body = require(j, "theta_body", "params");
    const json hand = require(j, "theta_hand", "params");
    size_t bi = 0;
    for (int joint = 0; joint < tmpl.joint_count(); ++joint) {
      if (tmpl.is_hand_joint(joint)) continue;
      if (bi >= body.size())
        throw Error(ErrorCode::InvariantViolation, "params: theta_body too short");
      const auto& t = body.at(bi++);
      params.theta[joint] = Vec3(t.at(0), t.at(1), t.at(2));
    }
    if (bi != body.size())
      throw Error(ErrorCode::InvariantViolation, "params: theta_body too long");
    if (hand.size() != tmpl.hand_joints.size())
      throw Error(ErrorCode::InvariantViolation, "params: theta_hand size mismatch");
    for (size_t i = 0; i < tmpl.hand_joints.size(); ++i) {
      const auto& t = hand.at(i);
      params.theta[tmpl.hand_joints[i]] = Vec3(t.at(0), t.at(1), t.at(2));
    }
    const json tr = require(j, "trans", "params");
    params.trans = Vec3(tr.at(0), tr.at(1), tr.at(2));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return params;
}

// ============================================================================
// Keypoints / contacts
// ============================================================================

void save_keypoints(const fs::path& path, const Keypoints2D& kp) {
  json arr = json::array();
  for (const auto& k : kp.points)
    arr.push_back({{"id", k.id}, {"u", k.u}, {"v", k.v}, {"confidence", k.confidence}});
  atomic_write(path, json{{"points", arr}}.dump(2) + "\n");
}

Keypoints2D load_keypoints(const fs::path& path) {
  const json j = parse_json_file(path);
  Keypoints2D kp;
  try {
    for (const auto& e : require(j, "points", "keypoints")) {
      Keypoint k;
      k.id = e.at("id").get<int>();
      k.u = e.at("u").get<double>();
      k.v = e.at("v").get<double>();
      k.confidence = e.at("confidence").get<double>();
      if (k.confidence < 0.0 || k.confidence > 1.0)
        throw Error(ErrorCode::InvariantViolation, "keypoint confidence outside [0, 1]");
      kp.points.push_back(k);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return kp;
}

void save_contact_set(const fs::path& path, const ContactVertexSet& set) {
  json j;
  j["source"] =
      set.source == ContactVertexSet::Source::Predicted ? "predicted" : "static-preset";
  j["indices"] = set.indices;
  atomic_write(path, j.dump(2) + "\n");
}

ContactVertexSet load_contact_set(const fs::path& path) {
  const json j = parse_json_file(path);
  ContactVertexSet set;
  try {
    const std::string source = require(j, "source", "contacts").get<std::string>();
    if (source == "predicted") set.source = ContactVertexSet::Source::Predicted;
    else if (source == "static-preset") set.source = ContactVertexSet::Source::StaticPreset;
    else throw Error(ErrorCode::ParseError, "contacts: unknown source '" + source + "'");
    set.indices = require(j, "indices", "contacts").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return set;
}

void save_contact_report(const fs::path& path, const ContactReport& report) {
  json j;
  j["threshold"] = report.threshold;
  j["in_contact"] = report.in_contact;
  j["distances"] = report.distances;
  atomic_write(path, j.dump(2) + "\n");
}

ContactReport load_contact_report(const fs::path& path) {
  const json j = parse_json_file(path);
  ContactReport report;
  try {
    report.threshold = require(j, "threshold", "contact report").get<double>();
    report.in_contact = require(j, "in_contact", "contact report").get<std::vector<uint8_t>>();
    report.distances = require(j, "distances", "contact report").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return report;
}

// ============================================================================
// Configuration
// ============================================================================

PipelineConfig default_config() { return PipelineConfig{}; }

namespace {

json ransac_json(const RansacConfig& r) {
  return {{"iterations", r.iterations},
          {"inlier_threshold", r.inlier_threshold},
          {"min_inlier_fraction", r.min_inlier_fraction},
          {"normal_angle_deg", r.normal_angle_deg}};
}

void ransac_from_json(const json& j, RansacConfig& r) {
  r.iterations = j.value("iterations", r.iterations);
  r.inlier_threshold = j.value("inlier_threshold", r.inlier_threshold);
  r.min_inlier_fraction = j.value("min_inlier_fraction", r.min_inlier_fraction);
  r.normal_angle_deg = j.value("normal_angle_deg", r.normal_angle_deg);
}

}  // namespace

void save_config(const fs::path& path, const PipelineConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["scene"] = {{"align_ransac", ransac_json(cfg.scene.align_ransac)},
                {"plane_ransac", ransac_json(cfg.scene.plane_ransac)},
                {"outlier_lambda", cfg.scene.outlier_lambda},
                {"floor_spacing", cfg.scene.floor_spacing},
                {"extent_inflation", cfg.scene.extent_inflation},
                {"enable_floor", cfg.scene.enable_floor}};
  j["grid_resolution"] = cfg.grid_resolution;
  j["weights"] = {{"j2d", cfg.weights.j2d},
                  {"d", cfg.weights.d},
                  {"c", cfg.weights.c},
                  {"i", cfg.weights.i},
                  {"reg", cfg.weights.reg},
                  {"reg_occluded_multiplier", cfg.weights.reg_occluded_multiplier},
                  {"scale_reg", cfg.weights.scale_reg},
                  {"trans_reg", cfg.weights.trans_reg}};
  j["align_weights"] = {{"j2d", cfg.align_j2d}, {"d", cfg.align_d}};
  j["thresholds"] = {{"eps_active", cfg.eps_active}, {"eps_extract", cfg.eps_extract}};
  j["robust"] = {{"contact", {{"alpha", cfg.rho_contact.alpha}, {"c", cfg.rho_contact.c}}},
                 {"interp", {{"alpha", cfg.rho_interp.alpha}, {"c", cfg.rho_interp.c}}}};
  j["schedule"] = {{"stage2_j2d_iters", cfg.schedule.stage2_j2d_iters},
                   {"stage2_lbfgs_iters", cfg.schedule.stage2_lbfgs_iters},
                   {"stage3_iters", cfg.schedule.stage3_iters},
                   {"adam_lr", cfg.schedule.adam_lr},
                   {"occ_refresh_every", cfg.schedule.occ_refresh_every}};
  j["camera_facing_angle_deg"] = cfg.camera_facing_angle_deg;
  j["self_occlusion"] = {{"depth_tolerance", cfg.selfocc_depth_tolerance},
                         {"part_fraction", cfg.selfocc_part_fraction}};
  j["ph_max_points"] = cfg.ph_max_points;
  j["occlusion_aware"] = cfg.occlusion_aware;
  j["use_static_contacts"] = cfg.use_static_contacts;
  j["brute_force_nn"] = cfg.brute_force_nn;
  atomic_write(path, j.dump(2) + "\n");
}

PipelineConfig load_config(const fs::path& path) {
  const json j = parse_json_file(path);
  PipelineConfig cfg;
  try {
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("scene")) {
      const json& s = j.at("scene");
      if (s.contains("align_ransac")) ransac_from_json(s.at("align_ransac"), cfg.scene.align_ransac);
      if (s.contains("plane_ransac")) ransac_from_json(s.at("plane_ransac"), cfg.scene.plane_ransac);
      cfg.scene.outlier_lambda = s.value("outlier_lambda", cfg.scene.outlier_lambda);
      cfg.scene.floor_spacing = s.value("floor_spacing", cfg.scene.floor_spacing);
      cfg.scene.extent_inflation = s.value("extent_inflation", cfg.scene.extent_inflation);
      cfg.scene.enable_floor = s.value("enable_floor", cfg.scene.enable_floor);
    }
    cfg.grid_resolution = j.value("grid_resolution", cfg.grid_resolution);
    if (j.contains("weights")) {
      const json& w = j.at("weights");
      cfg.weights.j2d = w.value("j2d", cfg.weights.j2d);
      cfg.weights.d = w.value("d", cfg.weights.d);
      cfg.weights.c = w.value("c", cfg.weights.c);
      cfg.weights.i = w.value("i", cfg.weights.i);
      cfg.weights.reg = w.value("reg", cfg.weights.reg);
      cfg.weights.reg_occluded_multiplier =
          w.value("reg_occluded_multiplier", cfg.weights.reg_occluded_multiplier);
      cfg.weights.scale_reg = w.value("scale_reg", cfg.weights.scale_reg);
      cfg.weights.trans_reg = w.value("trans_reg", cfg.weights.trans_reg);
    }
    if (j.contains("align_weights")) {
      cfg.align_j2d = j.at("align_weights").value("j2d", cfg.align_j2d);
      cfg.align_d = j.at("align_weights").value("d", cfg.align_d);
    }
    if (j.contains("thresholds")) {
      cfg.eps_active = j.at("thresholds").value("eps_active", cfg.eps_active);
      cfg.eps_extract = j.at("thresholds").value("eps_extract", cfg.eps_extract);
    }
    if (j.contains("robust")) {
      const json& r = j.at("robust");
      if (r.contains("contact")) {
        cfg.rho_contact.alpha = r.at("contact").value("alpha", cfg.rho_contact.alpha);
        cfg.rho_contact.c = r.at("contact").value("c", cfg.rho_contact.c);
      }
      if (r.contains("interp")) {
        cfg.rho_interp.alpha = r.at("interp").value("alpha", cfg.rho_interp.alpha);
        cfg.rho_interp.c = r.at("interp").value("c", cfg.rho_interp.c);
      }
    }
    if (j.contains("schedule")) {
      const json& s = j.at("schedule");
      cfg.schedule.stage2_j2d_iters = s.value("stage2_j2d_iters", cfg.schedule.stage2_j2d_iters);
      cfg.schedule.stage2_lbfgs_iters =
          s.value("stage2_lbfgs_iters", cfg.schedule.stage2_lbfgs_iters);
      cfg.schedule.stage3_iters = s.value("stage3_iters", cfg.schedule.stage3_iters);
      cfg.schedule.adam_lr = s.value("adam_lr", cfg.schedule.adam_lr);
      cfg.schedule.occ_refresh_every =
          s.value("occ_refresh_every", cfg.schedule.occ_refresh_every);
    }
    cfg.camera_facing_angle_deg =
        j.value("camera_facing_angle_deg", cfg.camera_facing_angle_deg);
    if (j.contains("self_occlusion")) {
      cfg.selfocc_depth_tolerance =
          j.at("self_occlusion").value("depth_tolerance", cfg.selfocc_depth_tolerance);
      cfg.selfocc_part_fraction =
          j.at("self_occlusion").value("part_fraction", cfg.selfocc_part_fraction);
    }
    cfg.ph_max_points = j.value("ph_max_points", cfg.ph_max_points);
    cfg.occlusion_aware = j.value("occlusion_aware", cfg.occlusion_aware);
    cfg.use_static_contacts = j.value("use_static_contacts", cfg.use_static_contacts);
    cfg.brute_force_nn = j.value("brute_force_nn", cfg.brute_force_nn);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  cfg.schedule.validate();
  apply_seed_override(cfg);
  return cfg;
}

void apply_seed_override(PipelineConfig& cfg) {
  if (const char* env = std::getenv("PHYSIC_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
      throw Error(ErrorCode::ParseError, "PHYSIC_SEED is not an integer");
    cfg.seed = v;
  }
}

// ============================================================================
// Bundles
// ============================================================================

void save_bundle(const fs::path& dir, const InputBundle& bundle) {
  fs::create_directories(dir);
  write_depth_raster(dir / "scene_depth.rast", bundle.scene_depth);
  write_point_map(dir / "scene_relpoints.rast", bundle.scene_relpoints);
  write_point_map(dir / "full_relpoints.rast", bundle.full_relpoints);
  if (bundle.floor_mask) write_mask(dir / "floor_mask.pgm", *bundle.floor_mask);
  save_template(dir / "template.json", bundle.body);

  json humans = json::array();
  for (size_t h = 0; h < bundle.humans.size(); ++h) {
    const std::string tag = "human" + std::to_string(h);
    write_mask(dir / (tag + "_mask.pgm"), bundle.humans[h].mask);
    save_keypoints(dir / (tag + "_keypoints.json"), bundle.humans[h].keypoints);
    save_body_params(dir / (tag + "_init.json"), bundle.humans[h].init_params, bundle.body);
    save_contact_set(dir / (tag + "_contacts.json"), bundle.humans[h].contacts);
    humans.push_back({{"mask", tag + "_mask.pgm"},
                      {"keypoints", tag + "_keypoints.json"},
                      {"init_params", tag + "_init.json"},
                      {"contacts", tag + "_contacts.json"}});
  }

  json manifest;
  manifest["width"] = bundle.width;
  manifest["height"] = bundle.height;
  manifest["intrinsics_hint"] = {{"fx", bundle.intrinsics_hint.fx},
                                 {"fy", bundle.intrinsics_hint.fy},
                                 {"width", bundle.intrinsics_hint.width},
                                 {"height", bundle.intrinsics_hint.height}};
  manifest["scene_depth"] = "scene_depth.rast";
  manifest["scene_relpoints"] = "scene_relpoints.rast";
  manifest["full_relpoints"] = "full_relpoints.rast";
  if (bundle.floor_mask) manifest["floor_mask"] = "floor_mask.pgm";
  manifest["template"] = "template.json";
  manifest["humans"] = humans;
  atomic_write(dir / "manifest.json", manifest.dump(2) + "\n");
}

InputBundle load_bundle(const fs::path& dir) {
  InputBundle bundle;
  std::vector<std::string> failures;
  auto attempt = [&](const char* what, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      failures.push_back(std::string(what) + ": " + e.what());
    } catch (const std::exception& e) {
      failures.push_back(std::string(what) + ": " + e.what());
    }
  };

  json manifest;
  try {
    manifest = parse_json_file(dir / "manifest.json");
  } catch (const Error& e) {
    throw Error(ErrorCode::MissingComponent, std::string("bundle manifest: ") + e.what());
  }

  attempt("width/height", [&] {
    bundle.width = require(manifest, "width", "manifest").get<int>();
    bundle.height = require(manifest, "height", "manifest").get<int>();
  });
  attempt("intrinsics_hint", [&] {
    const json k = require(manifest, "intrinsics_hint", "manifest");
    bundle.intrinsics_hint.fx = k.at("fx").get<double>();
    bundle.intrinsics_hint.fy = k.at("fy").get<double>();
    bundle.intrinsics_hint.width = k.at("width").get<int>();
    bundle.intrinsics_hint.height = k.at("height").get<int>();
    bundle.intrinsics_hint.validate();
  });
  attempt("scene_depth", [&] {
    bundle.scene_depth =
        read_depth_raster(dir / require(manifest, "scene_depth", "manifest").get<std::string>());
  });
  attempt("scene_relpoints", [&] {
    bundle.scene_relpoints =
        read_point_map(dir / require(manifest, "scene_relpoints", "manifest").get<std::string>());
  });
  attempt("full_relpoints", [&] {
    bundle.full_relpoints =
        read_point_map(dir / require(manifest, "full_relpoints", "manifest").get<std::string>());
  });
  attempt("floor_mask", [&] {
    if (manifest.contains("floor_mask") && !manifest.at("floor_mask").is_null())
      bundle.floor_mask = read_mask(dir / manifest.at("floor_mask").get<std::string>());
  });
  attempt("template", [&] {
    bundle.body = load_template(dir / require(manifest, "template", "manifest").get<std::string>());
  });
  attempt("humans", [&] {
    for (const auto& h : require(manifest, "humans", "manifest")) {
      HumanInputs inputs;
      inputs.mask = read_mask(dir / require(h, "mask", "human entry").get<std::string>());
      inputs.keypoints =
          load_keypoints(dir / require(h, "keypoints", "human entry").get<std::string>());
      inputs.init_params = load_body_params(
          dir / require(h, "init_params", "human entry").get<std::string>(), bundle.body);
      inputs.contacts =
          load_contact_set(dir / require(h, "contacts", "human entry").get<std::string>());
      bundle.humans.push_back(std::move(inputs));
    }
  });

  // Cross-component validation.
  if (failures.empty()) {
    auto check_dims = [&](const char* what, int w, int h) {
      if (w != bundle.width || h != bundle.height)
        failures.push_back(std::string(what) + ": " + std::to_string(w) + "x" +
                           std::to_string(h) + " does not match bundle " +
                           std::to_string(bundle.width) + "x" + std::to_string(bundle.height));
    };
    check_dims("scene_depth", bundle.scene_depth.width, bundle.scene_depth.height);
    check_dims("scene_relpoints", bundle.scene_relpoints.width, bundle.scene_relpoints.height);
    check_dims("full_relpoints", bundle.full_relpoints.width, bundle.full_relpoints.height);
    if (bundle.floor_mask)
      check_dims("floor_mask", bundle.floor_mask->width, bundle.floor_mask->height);
    for (size_t h = 0; h < bundle.humans.size(); ++h) {
      check_dims(("human mask " + std::to_string(h)).c_str(), bundle.humans[h].mask.width,
                 bundle.humans[h].mask.height);
      for (int idx : bundle.humans[h].contacts.indices)
        if (idx < 0 || idx >= bundle.body.vertex_count()) {
          failures.push_back("human " + std::to_string(h) + ": contact index out of range");
          break;
        }
    }
    if (bundle.humans.empty()) failures.push_back("bundle contains no humans");
    if (!failures.empty()) {
      std::string combined = "bundle validation failed:";
      for (const auto& f : failures) combined += "\n  - " + f;
      throw Error(ErrorCode::AlignmentMismatch, combined);
    }
    return bundle;
  }

  std::string combined = "bundle validation failed:";
  for (const auto& f : failures) combined += "\n  - " + f;
  throw Error(ErrorCode::MissingComponent, combined);
}

// ============================================================================
// Scene scaffold
// ============================================================================

void save_scene_scaffold(const fs::path& ply_path, const SceneScaffold& scaffold,
                         double applied_scale) {
  PointCloud scaled = scaffold.points;
  for (auto& p : scaled.points) p *= applied_scale;
  write_ply(ply_path, scaled);

  json meta;
  meta["applied_scale"] = applied_scale;
  if (scaffold.floor) {
    meta["floor"] = {{"normal", {scaffold.floor->normal.x(), scaffold.floor->normal.y(),
                                 scaffold.floor->normal.z()}},
                     {"d", scaffold.floor->d}};
  } else {
    meta["floor"] = nullptr;
  }
  meta["cam"] = {{"fx", scaffold.cam.fx},
                 {"fy", scaffold.cam.fy},
                 {"width", scaffold.cam.width},
                 {"height", scaffold.cam.height}};
  meta["observed_count"] = scaffold.observed_count();
  meta["floor_count"] = int(scaffold.points.size()) - scaffold.observed_count();
  fs::path meta_path = ply_path;
  meta_path.replace_extension(".meta.json");
  atomic_write(meta_path, meta.dump(2) + "\n");
}

}  // namespace physic
