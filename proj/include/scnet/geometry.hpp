#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace scnet {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double squared_norm() const { return dot(*this); }
  double norm() const;
  Vec3 normalized() const;
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

struct Mat3 {
  // row-major
  double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return Mat3{}; }
  static Mat3 from_axis_angle(const Vec3& axis, double angle);
  Vec3 apply(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 transposed() const;
  Mat3 operator*(const Mat3& o) const;
};

// Rigid transform p -> r*p + t.
struct Pose {
  Mat3 r;
  Vec3 t;

  Vec3 apply(const Vec3& p) const { return r.apply(p) + t; }
  Pose inverse() const;
  Pose compose(const Pose& inner) const;  // this o inner
};

enum class Frame { camera, canonical };

// Ordered point list. Raw clouds are metric camera-frame data; canonical
// clouds are normalized into [-1,1]^3.
struct PointCloud {
  std::vector<Vec3> points;
  Frame frame = Frame::camera;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  Vec3 centroid() const;
};

struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0;  // pixels
  double cx = 0.0, cy = 0.0;  // pixels
  double depth_scale = 1.0;   // meters per depth unit
};

// 16-bit grayscale raster shared by depth and label images.
struct GrayImage16 {
  std::size_t width = 0, height = 0;
  std::vector<std::uint16_t> pixels;

  GrayImage16() = default;
  GrayImage16(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h, 0) {}
  std::uint16_t at(std::size_t u, std::size_t v) const { return pixels[v * width + u]; }
  std::uint16_t& at(std::size_t u, std::size_t v) { return pixels[v * width + u]; }
};

using DepthImage = GrayImage16;
using LabelImage = GrayImage16;

// Greedy max-min subsampling, seeded at index 0, output in selection order.
// k > n pads by replicating the selection cyclically from its index 0.
PointCloud farthest_point_sample(const PointCloud& cloud, std::size_t k);

// Pinhole back-projection of every masked (nonzero) pixel with positive
// depth: x=(u-cx)z/fx, y=(v-cy)z/fy, z=depth*depth_scale. Camera frame.
PointCloud backproject(const DepthImage& depth, const LabelImage& mask,
                       const CameraIntrinsics& intr);

LabelImage mask_equal(const LabelImage& label, std::uint16_t id);

// Keeps points with at least min_neighbors other points within radius
// (inclusive). Brute force below the grid threshold, uniform-grid index
// above; both paths agree exactly.
PointCloud radius_outlier_removal(const PointCloud& cloud, double radius,
                                  std::size_t min_neighbors);

// Translates cloud so its centroid coincides with the reference's.
PointCloud center_to(const PointCloud& cloud, const PointCloud& reference);

// Isotropic transform p -> (p - offset) * scale mapping the bounding box
// into [-1,1]^3, centered; the maximal axis touches the box faces. The
// returned parameters invert the map: p = p_norm / scale + offset.
struct UnitBoxResult {
  PointCloud cloud;
  double scale = 1.0;
  Vec3 offset;
};
UnitBoxResult normalize_unit_box(const PointCloud& cloud);

// --- file formats ---

// ASCII XYZ: one "x y z" triple per line, full double precision.
void write_xyz(const std::string& path, const PointCloud& cloud);
PointCloud read_xyz(const std::string& path);

// Vertex-only PLY, binary little-endian, double properties.
void write_ply(const std::string& path, const PointCloud& cloud);
PointCloud read_ply(const std::string& path);

PointCloud read_cloud(const std::string& path);  // dispatch on extension

// 16-bit binary PGM (P5, maxval 65535, big-endian samples).
void write_pgm16(const std::string& path, const GrayImage16& image);
GrayImage16 read_pgm16(const std::string& path);

// Key-value text: fx, fy, cx, cy, depth_scale.
void write_intrinsics(const std::string& path, const CameraIntrinsics& intr);
CameraIntrinsics read_intrinsics(const std::string& path);

}  // namespace scnet
