#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "scnet/geometry.hpp"
#include "scnet/rng.hpp"

using namespace scnet;

namespace {

PointCloud random_cloud(std::size_t n, Rng& rng, double extent = 1.0) {
  PointCloud c;
  c.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    c.points.push_back(
        {rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(-extent, extent)});
  return c;
}

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "scnet_geometry_test";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("fps returns the input set for k = n, in selection order") {
  PointCloud c;
  c.points = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}, {10, 0, 0}};
  PointCloud s = farthest_point_sample(c, 5);
  std::multiset<double> in, out;
  for (const Vec3& p : c.points) in.insert(p.x);
  for (const Vec3& p : s.points) out.insert(p.x);
  CHECK(in == out);
}

TEST_CASE("fps hand-derived greedy selection on the line") {
  PointCloud c;
  c.points = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}, {10, 0, 0}};
  PointCloud s = farthest_point_sample(c, 3);
  REQUIRE(s.size() == 3);
  CHECK(s.points[0].x == 0.0);   // seed index 0
  CHECK(s.points[1].x == 10.0);  // farthest from 0
  CHECK(s.points[2].x == 3.0);   // maximizes min(d(.,0), d(.,10))
}

TEST_CASE("fps pads cyclically when k > n") {
  PointCloud c;
  c.points = {{0, 0, 0}, {5, 0, 0}};
  PointCloud s = farthest_point_sample(c, 5);
  REQUIRE(s.size() == 5);
  CHECK(s.points[2] == s.points[0]);
  CHECK(s.points[3] == s.points[1]);
  CHECK(s.points[4] == s.points[0]);
}

TEST_CASE("fps covering radius: unselected points lie within the last selection gap") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    PointCloud c = random_cloud(40, rng);
    const std::size_t k = 8;
    PointCloud s = farthest_point_sample(c, k);
    // min-distance of the k-th selection to its predecessors = the last gap
    double last_gap2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < k; ++i)
      last_gap2 = std::min(last_gap2, (s.points[k - 1] - s.points[i]).squared_norm());
    for (const Vec3& p : c.points) {
      double d2 = std::numeric_limits<double>::infinity();
      for (const Vec3& q : s.points) d2 = std::min(d2, (p - q).squared_norm());
      CHECK(d2 <= last_gap2 + 1e-12);
    }
  }
}

TEST_CASE("fps greedy step optimality verified by brute force on small clouds") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    PointCloud c = random_cloud(8, rng);
    PointCloud s = farthest_point_sample(c, 5);
    for (std::size_t step = 1; step < 5; ++step) {
      auto min_dist_to_prefix = [&](const Vec3& p) {
        double d2 = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < step; ++i) d2 = std::min(d2, (p - s.points[i]).squared_norm());
        return d2;
      };
      const double chosen = min_dist_to_prefix(s.points[step]);
      for (const Vec3& cand : c.points) CHECK(min_dist_to_prefix(cand) <= chosen + 1e-12);
    }
  }
}

TEST_CASE("fps determinism and empty-cloud error") {
  Rng rng(4);
  PointCloud c = random_cloud(30, rng);
  PointCloud a = farthest_point_sample(c, 7);
  PointCloud b = farthest_point_sample(c, 7);
  for (std::size_t i = 0; i < 7; ++i) CHECK(a.points[i] == b.points[i]);
  CHECK_THROWS_AS(farthest_point_sample(PointCloud{}, 3), std::invalid_argument);
}

TEST_CASE("backproject: principal point, pinhole formula, zero-depth skip") {
  CameraIntrinsics intr{100.0, 100.0, 2.0, 1.0, 0.5};
  DepthImage depth(4, 3);
  LabelImage mask(4, 3);
  mask.at(2, 1) = 1;
  depth.at(2, 1) = 6;  // z = 3.0
  PointCloud c = backproject(depth, mask, intr);
  REQUIRE(c.size() == 1);
  CHECK(c.points[0].x == doctest::Approx(0.0));
  CHECK(c.points[0].y == doctest::Approx(0.0));
  CHECK(c.points[0].z == doctest::Approx(3.0));

  CameraIntrinsics i2{100.0, 100.0, 0.0, 0.0, 1.0};
  DepthImage d2(60, 10);
  LabelImage m2(60, 10);
  m2.at(50, 0) = 1;
  d2.at(50, 0) = 2;
  PointCloud p2 = backproject(d2, m2, i2);
  REQUIRE(p2.size() == 1);
  CHECK(p2.points[0].x == doctest::Approx(1.0));
  CHECK(p2.points[0].y == doctest::Approx(0.0));
  CHECK(p2.points[0].z == doctest::Approx(2.0));

  // masked pixels with zero depth produce no points
  LabelImage m3(60, 10);
  for (auto& px : m3.pixels) px = 1;
  PointCloud p3 = backproject(d2, m3, i2);
  CHECK(p3.size() == 1);
}

TEST_CASE("backproject rejects an all-zero mask and mismatched sizes") {
  CameraIntrinsics intr{100.0, 100.0, 0.0, 0.0, 1.0};
  DepthImage depth(4, 4);
  LabelImage empty_mask(4, 4);
  CHECK_THROWS_AS(backproject(depth, empty_mask, intr), std::runtime_error);
  LabelImage wrong(3, 4);
  CHECK_THROWS_AS(backproject(depth, wrong, intr), std::invalid_argument);
}

TEST_CASE("backproject of an exactly representable fronto-parallel plane is exact") {
  CameraIntrinsics intr{120.0, 110.0, 8.0, 6.0, 0.002};
  DepthImage depth(16, 12);
  LabelImage mask(16, 12);
  for (auto& px : mask.pixels) px = 1;
  for (auto& px : depth.pixels) px = 1000;  // z = 2.0 exactly
  PointCloud c = backproject(depth, mask, intr);
  CHECK(c.size() == 16 * 12);
  for (const Vec3& p : c.points) CHECK(std::fabs(p.z - 2.0) < 1e-9);
}

TEST_CASE("radius outlier removal: far point dropped, identity at zero, subset") {
  Rng rng(5);
  PointCloud c;
  for (int i = 0; i < 30; ++i)
    c.points.push_back({rng.uniform(0.0, 0.02), rng.uniform(0.0, 0.02), rng.uniform(0.0, 0.02)});
  c.points.push_back({1.0, 1.0, 1.0});
  PointCloud kept = radius_outlier_removal(c, 0.05, 3);
  CHECK(kept.size() == 30);
  for (const Vec3& p : kept.points) CHECK(p.x < 0.5);

  PointCloud same = radius_outlier_removal(c, 0.05, 0);
  CHECK(same.size() == c.size());

  // output is a subset of the input
  for (const Vec3& p : kept.points)
    CHECK(std::find(c.points.begin(), c.points.end(), p) != c.points.end());
}

TEST_CASE("radius outlier removal matches the brute-force oracle, both paths") {
  Rng rng(6);
  for (std::size_t n : {200u, 500u, 2500u}) {  // 2500 exercises the grid path
    PointCloud c = random_cloud(n, rng, 0.5);
    const double radius = 0.12;
    const std::size_t min_neighbors = 4;
    PointCloud kept = radius_outlier_removal(c, radius, min_neighbors);
    // independent O(n^2) oracle
    std::vector<Vec3> expect;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t count = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i && (c.points[i] - c.points[j]).squared_norm() <= radius * radius) ++count;
      if (count >= min_neighbors) expect.push_back(c.points[i]);
    }
    REQUIRE(kept.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(kept.points[i] == expect[i]);
  }
}

TEST_CASE("center_to translates rigidly onto the reference centroid") {
  Rng rng(7);
  PointCloud c = random_cloud(25, rng);
  PointCloud self = center_to(c, c);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(self.points[i].x == doctest::Approx(c.points[i].x).epsilon(1e-12));
  }

  PointCloud ref = random_cloud(10, rng);
  PointCloud moved = center_to(c, ref);
  const Vec3 mc = moved.centroid(), rc = ref.centroid();
  CHECK((mc - rc).norm() < 1e-12);
  // pairwise distances unchanged
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = i + 1; j < 5; ++j)
      CHECK((moved.points[i] - moved.points[j]).norm() ==
            doctest::Approx((c.points[i] - c.points[j]).norm()).epsilon(1e-12));
}

TEST_CASE("normalize_unit_box: cube corners, round trip, degenerate cloud") {
  PointCloud cube;
  for (double x : {0.0, 2.0})
    for (double y : {0.0, 2.0})
      for (double z : {0.0, 2.0}) cube.points.push_back({x, y, z});
  UnitBoxResult r = normalize_unit_box(cube);
  CHECK(r.scale == doctest::Approx(1.0));
  for (const Vec3& p : r.cloud.points) {
    CHECK(std::fabs(std::fabs(p.x) - 1.0) < 1e-12);
    CHECK(std::fabs(std::fabs(p.y) - 1.0) < 1e-12);
    CHECK(std::fabs(std::fabs(p.z) - 1.0) < 1e-12);
  }

  Rng rng(8);
  PointCloud c = random_cloud(50, rng, 3.0);
  UnitBoxResult n = normalize_unit_box(c);
  for (const Vec3& p : n.cloud.points) {
    CHECK(p.x >= -1.0 - 1e-12);
    CHECK(p.x <= 1.0 + 1e-12);
  }
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Vec3 back = n.cloud.points[i] / n.scale + n.offset;
    CHECK((back - c.points[i]).norm() < 1e-12);
  }

  PointCloud single;
  single.points = {{3.0, -1.0, 2.0}};
  UnitBoxResult s = normalize_unit_box(single);
  CHECK(s.scale == 1.0);
  CHECK(s.cloud.points[0].norm() < 1e-12);
}

TEST_CASE("already-normalized clouds stay in the box with scale >= 1") {
  Rng rng(9);
  PointCloud c = random_cloud(40, rng, 0.4);
  UnitBoxResult r = normalize_unit_box(c);
  CHECK(r.scale >= 1.0);
  for (const Vec3& p : r.cloud.points) {
    CHECK(std::fabs(p.x) <= 1.0 + 1e-12);
    CHECK(std::fabs(p.y) <= 1.0 + 1e-12);
    CHECK(std::fabs(p.z) <= 1.0 + 1e-12);
  }
}

TEST_CASE("xyz and ply files round-trip exactly") {
  Rng rng(10);
  PointCloud c = random_cloud(64, rng, 2.0);
  const auto dir = temp_dir();

  write_xyz((dir / "c.xyz").string(), c);
  PointCloud x = read_xyz((dir / "c.xyz").string());
  REQUIRE(x.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(x.points[i] == c.points[i]);

  write_ply((dir / "c.ply").string(), c);
  PointCloud p = read_ply((dir / "c.ply").string());
  REQUIRE(p.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(p.points[i] == c.points[i]);

  CHECK(read_cloud((dir / "c.ply").string()).size() == c.size());
}

TEST_CASE("pgm16 and intrinsics files round-trip") {
  const auto dir = temp_dir();
  Rng rng(11);
  GrayImage16 img(17, 9);
  for (auto& px : img.pixels) px = static_cast<std::uint16_t>(rng.next_u64() % 65536);
  write_pgm16((dir / "d.pgm").string(), img);
  GrayImage16 back = read_pgm16((dir / "d.pgm").string());
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.pixels == img.pixels);

  CameraIntrinsics intr{525.5, 524.25, 319.75, 239.5, 0.001};
  write_intrinsics((dir / "intr.txt").string(), intr);
  CameraIntrinsics r = read_intrinsics((dir / "intr.txt").string());
  CHECK(r.fx == intr.fx);
  CHECK(r.fy == intr.fy);
  CHECK(r.cx == intr.cx);
  CHECK(r.cy == intr.cy);
  CHECK(r.depth_scale == intr.depth_scale);
  CHECK_THROWS_AS(read_intrinsics((dir / "missing.txt").string()), std::runtime_error);
}

TEST_CASE("pose compose and inverse") {
  const Mat3 r1 = Mat3::from_axis_angle({0, 0, 1}, 0.7);
  const Mat3 r2 = Mat3::from_axis_angle({1, 2, -1}, -1.2);
  Pose a{r1, {0.5, -1.0, 2.0}};
  Pose b{r2, {-0.1, 0.2, 0.3}};
  Vec3 p{0.3, 0.4, -0.5};
  const Vec3 lhs = a.apply(b.apply(p));
  const Vec3 rhs = a.compose(b).apply(p);
  CHECK((lhs - rhs).norm() < 1e-12);
  const Vec3 round = a.inverse().apply(a.apply(p));
  CHECK((round - p).norm() < 1e-12);
}
