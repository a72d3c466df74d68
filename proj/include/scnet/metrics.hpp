#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnet/geometry.hpp"
#include "scnet/tensor.hpp"

namespace scnet {

// Bijection between two equal-size point sets with its mean per-point
// Euclidean cost; the witness of an EMD value. total_cost is always
// recomputed from the mapping (mean of ||s1[i] - s2[mapping[i]]||, summed in
// index order).
struct AssignmentPlan {
  std::vector<std::size_t> mapping;  // s1 index -> s2 index, a permutation
  double total_cost = 0.0;
};

double plan_cost(const PointCloud& s1, const PointCloud& s2,
                 const std::vector<std::size_t>& mapping);

// Symmetric mean of squared nearest-neighbor distances:
//   (1/|S1|) sum_x min_y ||x-y||^2 + (1/|S2|) sum_y min_x ||y-x||^2.
// The squared form is intentional and differs from the unsquared EMD.
// chamfer() goes through a uniform-grid index; chamfer_bruteforce() is the
// O(n^2) reference. Both return identical values.
double chamfer(const PointCloud& s1, const PointCloud& s2);
double chamfer_bruteforce(const PointCloud& s1, const PointCloud& s2);

// Exact nearest-neighbor index in pts for every query, via the grid index.
std::vector<std::size_t> nearest_indices(const std::vector<Vec3>& queries,
                                         const std::vector<Vec3>& pts);

// Globally optimal assignment minimizing mean Euclidean distance (Hungarian
// method, O(n^3)); sizes must match and stay within the exact-solver bound.
inline constexpr std::size_t kEmdExactMaxPoints = 512;
AssignmentPlan emd_exact(const PointCloud& s1, const PointCloud& s2);

// Auction assignment with epsilon scaling. `eps` is a fraction of the cost
// matrix range: the returned cost is >= the exact cost and <= exact +
// eps * range. The phase schedule is range/4^k, stopping at the first value
// <= eps*range, and the best complete assignment across phases is returned,
// so shrinking eps extends the schedule and never worsens the result.
AssignmentPlan emd_approx(const PointCloud& s1, const PointCloud& s2, double eps = 1e-3,
                          std::size_t iters = 50'000'000);

struct AuctionNonConvergence : std::runtime_error {
  AssignmentPlan best_so_far;
  explicit AuctionNonConvergence(AssignmentPlan best)
      : std::runtime_error("emd_approx: bid limit exhausted before convergence"),
        best_so_far(std::move(best)) {}
};

// Differentiable completion losses. The pairing (assignment / nearest
// neighbors) is computed on detached coordinates and held fixed, so the
// gradient is the envelope gradient of the metric.
Tensor emd_loss(const Tensor& predicted, const PointCloud& target, double eps = 1e-3,
                std::size_t iters = 50'000'000);
Tensor chamfer_loss(const Tensor& predicted, const PointCloud& target);

PointCloud tensor_to_cloud(const Tensor& points, Frame frame = Frame::canonical);
Tensor cloud_to_tensor(const PointCloud& cloud, bool requires_grad = false);

struct ObjectMetrics {
  double cd = 0.0;
  double emd = 0.0;
};

// Averages plus the per-object breakdown; scale_note documents the
// multiplier convention used when the values are shown in table units.
struct MetricReport {
  double cd = 0.0;
  double emd = 0.0;
  std::map<std::string, ObjectMetrics> per_object;
  std::string scale_note;

  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
};

inline constexpr const char* kScaleNote =
    "raw metrics on [-1,1]-normalized clouds; table units are cd x 1e4 and emd x 1e2";

}  // namespace scnet
