#include "scnet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace scnet {

double Vec3::norm() const { return std::sqrt(squared_norm()); }

Vec3 Vec3::normalized() const {
  const double n = norm();
  if (n == 0.0) throw std::invalid_argument("normalized: zero vector");
  return *this / n;
}

Mat3 Mat3::from_axis_angle(const Vec3& axis, double angle) {
  const Vec3 a = axis.normalized();
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  Mat3 r;
  r.m[0] = t * a.x * a.x + c;
  r.m[1] = t * a.x * a.y - s * a.z;
  r.m[2] = t * a.x * a.z + s * a.y;
  r.m[3] = t * a.x * a.y + s * a.z;
  r.m[4] = t * a.y * a.y + c;
  r.m[5] = t * a.y * a.z - s * a.x;
  r.m[6] = t * a.x * a.z - s * a.y;
  r.m[7] = t * a.y * a.z + s * a.x;
  r.m[8] = t * a.z * a.z + c;
  return r;
}

Mat3 Mat3::transposed() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.m[i * 3 + j] = m[j * 3 + i];
  return r;
}

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += m[i * 3 + k] * o.m[k * 3 + j];
      r.m[i * 3 + j] = s;
    }
  return r;
}

Pose Pose::inverse() const {
  Pose inv;
  inv.r = r.transposed();
  const Vec3 rt = inv.r.apply(t);
  inv.t = {-rt.x, -rt.y, -rt.z};
  return inv;
}

Pose Pose::compose(const Pose& inner) const {
  Pose out;
  out.r = r * inner.r;
  out.t = r.apply(inner.t) + t;
  return out;
}

Vec3 PointCloud::centroid() const {
  if (points.empty()) throw std::invalid_argument("centroid: empty cloud");
  Vec3 c;
  for (const Vec3& p : points) c += p;
  return c / static_cast<double>(points.size());
}

PointCloud farthest_point_sample(const PointCloud& cloud, std::size_t k) {
  if (cloud.empty()) throw std::invalid_argument("farthest_point_sample: empty cloud");
  if (k < 1) throw std::invalid_argument("farthest_point_sample: k must be >= 1");
  const std::size_t n = cloud.size();
  const std::size_t take = std::min(k, n);

  PointCloud out;
  out.frame = cloud.frame;
  out.points.reserve(k);

  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::size_t current = 0;  // deterministic seed
  for (std::size_t s = 0; s < take; ++s) {
    out.points.push_back(cloud.points[current]);
    const Vec3& c = cloud.points[current];
    std::size_t next = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d2 = (cloud.points[i] - c).squared_norm();
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (min_d2[i] > best) {  // ties keep the lowest index
        best = min_d2[i];
        next = i;
      }
    }
    current = next;
  }
  for (std::size_t s = take; s < k; ++s) out.points.push_back(out.points[s % take]);
  return out;
}

PointCloud backproject(const DepthImage& depth, const LabelImage& mask,
                       const CameraIntrinsics& intr) {
  if (depth.width != mask.width || depth.height != mask.height)
    throw std::invalid_argument("backproject: depth and mask dimensions differ");
  if (intr.fx <= 0.0 || intr.fy <= 0.0 || intr.depth_scale <= 0.0)
    throw std::invalid_argument("backproject: invalid intrinsics");
  PointCloud out;
  out.frame = Frame::camera;
  bool any_masked = false;
  for (std::size_t v = 0; v < depth.height; ++v)
    for (std::size_t u = 0; u < depth.width; ++u) {
      if (mask.at(u, v) == 0) continue;
      any_masked = true;
      const std::uint16_t d = depth.at(u, v);
      if (d == 0) continue;  // no return at this pixel
      const double z = static_cast<double>(d) * intr.depth_scale;
      out.points.push_back({(static_cast<double>(u) - intr.cx) * z / intr.fx,
                            (static_cast<double>(v) - intr.cy) * z / intr.fy, z});
    }
  if (!any_masked) throw std::runtime_error("backproject: mask selects no pixels");
  return out;
}

LabelImage mask_equal(const LabelImage& label, std::uint16_t id) {
  LabelImage out(label.width, label.height);
  for (std::size_t i = 0; i < label.pixels.size(); ++i)
    out.pixels[i] = label.pixels[i] == id ? 1 : 0;
  return out;
}

namespace {

struct CellKey {
  long long x, y, z;
  bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::size_t h = static_cast<std::size_t>(k.x) * 73856093ULL;
    h ^= static_cast<std::size_t>(k.y) * 19349663ULL;
    h ^= static_cast<std::size_t>(k.z) * 83492791ULL;
    return h;
  }
};

CellKey cell_of(const Vec3& p, double cell) {
  return {static_cast<long long>(std::floor(p.x / cell)),
          static_cast<long long>(std::floor(p.y / cell)),
          static_cast<long long>(std::floor(p.z / cell))};
}

constexpr std::size_t kGridThreshold = 2000;

std::vector<std::size_t> neighbor_counts_brute(const std::vector<Vec3>& pts, double radius) {
  const double r2 = radius * radius;
  std::vector<std::size_t> counts(pts.size(), 0);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      if ((pts[i] - pts[j]).squared_norm() <= r2) {
        ++counts[i];
        ++counts[j];
      }
  return counts;
}

std::vector<std::size_t> neighbor_counts_grid(const std::vector<Vec3>& pts, double radius) {
  const double r2 = radius * radius;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> grid;
  for (std::size_t i = 0; i < pts.size(); ++i) grid[cell_of(pts[i], radius)].push_back(i);
  std::vector<std::size_t> counts(pts.size(), 0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const CellKey c = cell_of(pts[i], radius);
    for (long long dx = -1; dx <= 1; ++dx)
      for (long long dy = -1; dy <= 1; ++dy)
        for (long long dz = -1; dz <= 1; ++dz) {
          const auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == grid.end()) continue;
          for (std::size_t j : it->second)
            if (j != i && (pts[i] - pts[j]).squared_norm() <= r2) ++counts[i];
        }
  }
  return counts;
}

}  // namespace

PointCloud radius_outlier_removal(const PointCloud& cloud, double radius,
                                  std::size_t min_neighbors) {
  if (radius <= 0.0) throw std::invalid_argument("radius_outlier_removal: radius must be > 0");
  if (min_neighbors == 0) return cloud;
  const std::vector<std::size_t> counts =
      cloud.size() <= kGridThreshold ? neighbor_counts_brute(cloud.points, radius)
                                     : neighbor_counts_grid(cloud.points, radius);
  PointCloud out;
  out.frame = cloud.frame;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (counts[i] >= min_neighbors) out.points.push_back(cloud.points[i]);
  return out;
}

PointCloud center_to(const PointCloud& cloud, const PointCloud& reference) {
  if (cloud.empty() || reference.empty())
    throw std::invalid_argument("center_to: empty cloud");
  const Vec3 shift = reference.centroid() - cloud.centroid();
  PointCloud out;
  out.frame = cloud.frame;
  out.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) out.points.push_back(p + shift);
  return out;
}

UnitBoxResult normalize_unit_box(const PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("normalize_unit_box: empty cloud");
  Vec3 lo = cloud.points[0], hi = cloud.points[0];
  for (const Vec3& p : cloud.points) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  const Vec3 center = (lo + hi) / 2.0;
  const double half =
      std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z}) / 2.0;
  UnitBoxResult res;
  res.scale = half > 0.0 ? 1.0 / half : 1.0;  // single point: translation only
  res.offset = center;
  res.cloud.frame = Frame::canonical;
  res.cloud.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) res.cloud.points.push_back((p - center) * res.scale);
  return res;
}

void write_xyz(const std::string& path, const PointCloud& cloud) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("write_xyz: cannot open " + path);
  for (const Vec3& p : cloud.points) std::fprintf(f, "%.17g %.17g %.17g\n", p.x, p.y, p.z);
  std::fclose(f);
}

PointCloud read_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_xyz: cannot open " + path);
  PointCloud out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Vec3 p;
    if (!(ss >> p.x >> p.y >> p.z))
      throw std::runtime_error("read_xyz: malformed line " + std::to_string(lineno) + " in " +
                               path);
    out.points.push_back(p);
  }
  return out;
}

void write_ply(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ply: cannot open " + path);
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\nend_header\n";
  for (const Vec3& p : cloud.points) {
    double buf[3] = {p.x, p.y, p.z};
    out.write(reinterpret_cast<const char*>(buf), sizeof(buf));
  }
}

PointCloud read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_ply: cannot open " + path);
  std::string line;
  std::size_t count = 0;
  bool le = false;
  std::vector<std::string> props;
  if (!std::getline(in, line) || line != "ply") throw std::runtime_error("read_ply: not a PLY file: " + path);
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "format") {
      std::string fmt;
      ss >> fmt;
      le = fmt == "binary_little_endian";
    } else if (tok == "element") {
      std::string what;
      ss >> what >> count;
      if (what != "vertex") throw std::runtime_error("read_ply: unsupported element " + what);
    } else if (tok == "property") {
      std::string type, name;
      ss >> type >> name;
      if (type != "double") throw std::runtime_error("read_ply: unsupported property type " + type);
      props.push_back(name);
    } else if (tok == "end_header") {
      break;
    }
  }
  if (!le) throw std::runtime_error("read_ply: only binary little-endian PLY supported");
  if (props != std::vector<std::string>{"x", "y", "z"})
    throw std::runtime_error("read_ply: expected x,y,z double properties");
  PointCloud out;
  out.points.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    double buf[3];
    in.read(reinterpret_cast<char*>(buf), sizeof(buf));
    if (!in) throw std::runtime_error("read_ply: truncated vertex data in " + path);
    out.points[i] = {buf[0], buf[1], buf[2]};
  }
  return out;
}

PointCloud read_cloud(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".ply") return read_ply(path);
  return read_xyz(path);
}

void write_pgm16(const std::string& path, const GrayImage16& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm16: cannot open " + path);
  out << "P5\n" << image.width << " " << image.height << "\n65535\n";
  for (std::uint16_t v : image.pixels) {
    const unsigned char hi = static_cast<unsigned char>(v >> 8);
    const unsigned char lo = static_cast<unsigned char>(v & 0xff);
    out.put(static_cast<char>(hi));
    out.put(static_cast<char>(lo));
  }
}

namespace {

// PGM token reader skipping whitespace and # comments.
std::string next_pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

GrayImage16 read_pgm16(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pgm16: cannot open " + path);
  if (next_pnm_token(in) != "P5") throw std::runtime_error("read_pgm16: not a P5 PGM: " + path);
  const std::size_t w = std::stoul(next_pnm_token(in));
  const std::size_t h = std::stoul(next_pnm_token(in));
  const unsigned long maxval = std::stoul(next_pnm_token(in));
  if (maxval != 65535) throw std::runtime_error("read_pgm16: expected 16-bit maxval in " + path);
  GrayImage16 img(w, h);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const int hi = in.get();
    const int lo = in.get();
    if (hi == EOF || lo == EOF) throw std::runtime_error("read_pgm16: truncated data in " + path);
    img.pixels[i] = static_cast<std::uint16_t>((hi << 8) | lo);
  }
  return img;
}

void write_intrinsics(const std::string& path, const CameraIntrinsics& intr) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("write_intrinsics: cannot open " + path);
  std::fprintf(f, "fx %.17g\nfy %.17g\ncx %.17g\ncy %.17g\ndepth_scale %.17g\n", intr.fx, intr.fy,
               intr.cx, intr.cy, intr.depth_scale);
  std::fclose(f);
}

CameraIntrinsics read_intrinsics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_intrinsics: cannot open " + path);
  CameraIntrinsics intr;
  bool got_fx = false, got_fy = false, got_cx = false, got_cy = false, got_scale = false;
  std::string key;
  double value;
  while (in >> key >> value) {
    if (key == "fx") {
      intr.fx = value;
      got_fx = true;
    } else if (key == "fy") {
      intr.fy = value;
      got_fy = true;
    } else if (key == "cx") {
      intr.cx = value;
      got_cx = true;
    } else if (key == "cy") {
      intr.cy = value;
      got_cy = true;
    } else if (key == "depth_scale") {
      intr.depth_scale = value;
      got_scale = true;
    } else {
      throw std::runtime_error("read_intrinsics: unknown key '" + key + "' in " + path);
    }
  }
  if (!(got_fx && got_fy && got_cx && got_cy && got_scale))
    throw std::runtime_error("read_intrinsics: missing keys in " + path);
  if (intr.fx <= 0.0 || intr.fy <= 0.0 || intr.depth_scale <= 0.0)
    throw std::runtime_error("read_intrinsics: non-positive fx/fy/depth_scale in " + path);
  return intr;
}

}  // namespace scnet
