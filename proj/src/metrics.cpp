#include "scnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include <json.hpp>

namespace scnet {

namespace {

double sq_dist(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

struct GridIndex {
  double cell = 1.0;
  long long min_cx = 0, min_cy = 0, min_cz = 0, max_cx = 0, max_cy = 0, max_cz = 0;
  std::unordered_map<long long, std::vector<std::size_t>> cells;
  const std::vector<Vec3>* pts = nullptr;

  static long long key(long long x, long long y, long long z) {
    // 21 bits per axis, offset to stay positive
    const long long b = 1LL << 20;
    return ((x + b) << 42) | ((y + b) << 21) | (z + b);
  }

  explicit GridIndex(const std::vector<Vec3>& points) : pts(&points) {
    Vec3 lo = points[0], hi = points[0];
    for (const Vec3& p : points) {
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    const double diag = (hi - lo).norm();
    cell = diag > 0.0 ? diag / std::cbrt(static_cast<double>(points.size())) : 1.0;
    min_cx = cx(points[0]);
    min_cy = cy(points[0]);
    min_cz = cz(points[0]);
    max_cx = min_cx;
    max_cy = min_cy;
    max_cz = min_cz;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const long long x = cx(points[i]), y = cy(points[i]), z = cz(points[i]);
      min_cx = std::min(min_cx, x);
      min_cy = std::min(min_cy, y);
      min_cz = std::min(min_cz, z);
      max_cx = std::max(max_cx, x);
      max_cy = std::max(max_cy, y);
      max_cz = std::max(max_cz, z);
      cells[key(x, y, z)].push_back(i);
    }
  }

  long long cx(const Vec3& p) const { return static_cast<long long>(std::floor(p.x / cell)); }
  long long cy(const Vec3& p) const { return static_cast<long long>(std::floor(p.y / cell)); }
  long long cz(const Vec3& p) const { return static_cast<long long>(std::floor(p.z / cell)); }

  std::size_t nearest(const Vec3& q) const {
    const long long qx = cx(q), qy = cy(q), qz = cz(q);
    // offsets of the occupied cell box relative to the query cell
    const long long lox = min_cx - qx, hix = max_cx - qx;
    const long long loy = min_cy - qy, hiy = max_cy - qy;
    const long long loz = min_cz - qz, hiz = max_cz - qz;
    // rings below r0 contain no occupied cells; none exist beyond max_ring
    const long long r0 = std::max({0LL, lox, -hix, loy, -hiy, loz, -hiz});
    const long long max_ring = std::max({std::llabs(lox), std::llabs(hix), std::llabs(loy),
                                         std::llabs(hiy), std::llabs(loz), std::llabs(hiz)});
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    const auto visit = [&](long long x, long long y, long long z) {
      const auto it = cells.find(key(x, y, z));
      if (it == cells.end()) return;
      for (std::size_t i : it->second) {
        const double d2 = sq_dist(q, (*pts)[i]);
        if (d2 < best) {
          best = d2;
          best_i = i;
        }
      }
    };
    for (long long r = r0; r <= max_ring; ++r) {
      if (r > 0 && std::isfinite(best)) {
        // points in ring r are at least (r-1)*cell away from the query
        const double bound = static_cast<double>(r - 1) * cell;
        if (bound * bound >= best) break;
      }
      // cells at Chebyshev radius exactly r, clamped to the occupied box
      const long long x0 = std::max(-r, lox), x1 = std::min(r, hix);
      const long long y0 = std::max(-r, loy), y1 = std::min(r, hiy);
      for (long long dx = x0; dx <= x1; ++dx)
        for (long long dy = y0; dy <= y1; ++dy) {
          if (std::max(std::llabs(dx), std::llabs(dy)) == r) {
            const long long z0 = std::max(-r, loz), z1 = std::min(r, hiz);
            for (long long dz = z0; dz <= z1; ++dz) visit(qx + dx, qy + dy, qz + dz);
          } else {
            if (-r >= loz && -r <= hiz) visit(qx + dx, qy + dy, qz - r);
            if (r != 0 && r >= loz && r <= hiz) visit(qx + dx, qy + dy, qz + r);
          }
        }
    }
    return best_i;
  }
};

void check_nonempty_pair(const PointCloud& s1, const PointCloud& s2, const char* op) {
  if (s1.empty() || s2.empty())
    throw std::invalid_argument(std::string(op) + ": empty point cloud");
}

}  // namespace

std::vector<std::size_t> nearest_indices(const std::vector<Vec3>& queries,
                                         const std::vector<Vec3>& pts) {
  if (pts.empty()) throw std::invalid_argument("nearest_indices: empty point set");
  GridIndex index(pts);
  std::vector<std::size_t> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) out[i] = index.nearest(queries[i]);
  return out;
}

double chamfer(const PointCloud& s1, const PointCloud& s2) {
  check_nonempty_pair(s1, s2, "chamfer");
  const std::vector<std::size_t> fwd = nearest_indices(s1.points, s2.points);
  const std::vector<std::size_t> bwd = nearest_indices(s2.points, s1.points);
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < s1.size(); ++i) a += sq_dist(s1.points[i], s2.points[fwd[i]]);
  for (std::size_t j = 0; j < s2.size(); ++j) b += sq_dist(s2.points[j], s1.points[bwd[j]]);
  return a / static_cast<double>(s1.size()) + b / static_cast<double>(s2.size());
}

double chamfer_bruteforce(const PointCloud& s1, const PointCloud& s2) {
  check_nonempty_pair(s1, s2, "chamfer");
  double a = 0.0, b = 0.0;
  for (const Vec3& p : s1.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& q : s2.points) best = std::min(best, sq_dist(p, q));
    a += best;
  }
  for (const Vec3& q : s2.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& p : s1.points) best = std::min(best, sq_dist(q, p));
    b += best;
  }
  return a / static_cast<double>(s1.size()) + b / static_cast<double>(s2.size());
}

double plan_cost(const PointCloud& s1, const PointCloud& s2,
                 const std::vector<std::size_t>& mapping) {
  double total = 0.0;
  for (std::size_t i = 0; i < mapping.size(); ++i)
    total += std::sqrt(sq_dist(s1.points[i], s2.points[mapping[i]]));
  return total / static_cast<double>(mapping.size());
}

AssignmentPlan emd_exact(const PointCloud& s1, const PointCloud& s2) {
  check_nonempty_pair(s1, s2, "emd_exact");
  if (s1.size() != s2.size())
    throw std::invalid_argument("emd_exact: sizes differ: " + std::to_string(s1.size()) + " vs " +
                                std::to_string(s2.size()));
  if (s1.size() > kEmdExactMaxPoints)
    throw std::invalid_argument("emd_exact: " + std::to_string(s1.size()) +
                                " points exceeds the exact-solver bound of " +
                                std::to_string(kEmdExactMaxPoints) + "; use emd_approx");
  const int n = static_cast<int>(s1.size());
  std::vector<double> cost(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      cost[static_cast<std::size_t>(i) * n + j] =
          std::sqrt(sq_dist(s1.points[i], s2.points[j]));

  // Hungarian method, shortest augmenting path formulation with potentials.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[static_cast<std::size_t>(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  AssignmentPlan plan;
  plan.mapping.assign(static_cast<std::size_t>(n), 0);
  for (int j = 1; j <= n; ++j)
    if (p[j]) plan.mapping[static_cast<std::size_t>(p[j] - 1)] = static_cast<std::size_t>(j - 1);
  plan.total_cost = plan_cost(s1, s2, plan.mapping);
  return plan;
}

namespace {

AssignmentPlan identity_plan(const PointCloud& s1, const PointCloud& s2) {
  AssignmentPlan plan;
  plan.mapping.resize(s1.size());
  for (std::size_t i = 0; i < s1.size(); ++i) plan.mapping[i] = i;
  plan.total_cost = plan_cost(s1, s2, plan.mapping);
  return plan;
}

// Fills unassigned persons/items in index order; only used to report a
// complete best-so-far plan on bid exhaustion.
AssignmentPlan complete_greedily(const PointCloud& s1, const PointCloud& s2,
                                 const std::vector<int>& person_item) {
  const std::size_t n = person_item.size();
  std::vector<char> item_taken(n, 0);
  for (int j : person_item)
    if (j >= 0) item_taken[static_cast<std::size_t>(j)] = 1;
  AssignmentPlan plan;
  plan.mapping.resize(n);
  std::size_t free_item = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (person_item[i] >= 0) {
      plan.mapping[i] = static_cast<std::size_t>(person_item[i]);
    } else {
      while (item_taken[free_item]) ++free_item;
      plan.mapping[i] = free_item;
      item_taken[free_item] = 1;
    }
  }
  plan.total_cost = plan_cost(s1, s2, plan.mapping);
  return plan;
}

}  // namespace

AssignmentPlan emd_approx(const PointCloud& s1, const PointCloud& s2, double eps,
                          std::size_t iters) {
  check_nonempty_pair(s1, s2, "emd_approx");
  if (s1.size() != s2.size())
    throw std::invalid_argument("emd_approx: sizes differ: " + std::to_string(s1.size()) +
                                " vs " + std::to_string(s2.size()));
  if (eps <= 0.0) throw std::invalid_argument("emd_approx: eps must be > 0");

  const std::size_t n = s1.size();
  std::vector<double> cost(n * n);
  double cmin = std::numeric_limits<double>::infinity(), cmax = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double c = std::sqrt(sq_dist(s1.points[i], s2.points[j]));
      cost[i * n + j] = c;
      cmin = std::min(cmin, c);
      cmax = std::max(cmax, c);
    }
  const double range = cmax - cmin;
  if (range == 0.0) return identity_plan(s1, s2);  // all assignments equal

  std::vector<double> price(n, 0.0);
  std::vector<int> person_item(n, -1), item_person(n, -1);
  std::size_t bids = 0;
  AssignmentPlan best;
  bool have_best = false;

  double phase_eps = range / 4.0;
  const double final_eps = eps * range;
  while (true) {
    // phase start: keep prices, clear the assignment
    std::fill(person_item.begin(), person_item.end(), -1);
    std::fill(item_person.begin(), item_person.end(), -1);
    std::vector<std::size_t> unassigned(n);
    for (std::size_t i = 0; i < n; ++i) unassigned[i] = n - 1 - i;  // pop order 0,1,2,...

    while (!unassigned.empty()) {
      if (++bids > iters) {
        AssignmentPlan partial = complete_greedily(s1, s2, person_item);
        throw AuctionNonConvergence(have_best && best.total_cost <= partial.total_cost ? best
                                                                                       : partial);
      }
      const std::size_t i = unassigned.back();
      unassigned.pop_back();
      // best and second-best net value over items
      double v1 = -std::numeric_limits<double>::infinity();
      double v2 = -std::numeric_limits<double>::infinity();
      std::size_t j1 = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double value = -cost[i * n + j] - price[j];
        if (value > v1) {
          v2 = v1;
          v1 = value;
          j1 = j;
        } else if (value > v2) {
          v2 = value;
        }
      }
      const double increment = n == 1 ? phase_eps : v1 - v2 + phase_eps;
      price[j1] += increment;
      const int old = item_person[j1];
      if (old >= 0) {
        person_item[static_cast<std::size_t>(old)] = -1;
        unassigned.push_back(static_cast<std::size_t>(old));
      }
      item_person[j1] = static_cast<int>(i);
      person_item[i] = static_cast<int>(j1);
    }

    AssignmentPlan phase_plan;
    phase_plan.mapping.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      phase_plan.mapping[i] = static_cast<std::size_t>(person_item[i]);
    phase_plan.total_cost = plan_cost(s1, s2, phase_plan.mapping);
    if (!have_best || phase_plan.total_cost < best.total_cost) {
      best = phase_plan;
      have_best = true;
    }
    if (phase_eps <= final_eps) break;
    phase_eps /= 4.0;
  }
  return best;
}

PointCloud tensor_to_cloud(const Tensor& points, Frame frame) {
  if (points.rank() != 2 || points.cols() != 3)
    throw std::invalid_argument("tensor_to_cloud: expects [n,3], got " +
                                shape_str(points.shape()));
  PointCloud out;
  out.frame = frame;
  out.points.reserve(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i)
    out.points.push_back({points.at(i, 0), points.at(i, 1), points.at(i, 2)});
  return out;
}

Tensor cloud_to_tensor(const PointCloud& cloud, bool requires_grad) {
  std::vector<double> vals;
  vals.reserve(cloud.size() * 3);
  for (const Vec3& p : cloud.points) {
    vals.push_back(p.x);
    vals.push_back(p.y);
    vals.push_back(p.z);
  }
  return Tensor::from_values({cloud.size(), 3}, std::move(vals), requires_grad);
}

Tensor emd_loss(const Tensor& predicted, const PointCloud& target, double eps,
                std::size_t iters) {
  if (predicted.rank() != 2 || predicted.cols() != 3)
    throw std::invalid_argument("emd_loss: predicted must be [n,3]");
  if (predicted.rows() != target.size())
    throw std::invalid_argument("emd_loss: predicted has " + std::to_string(predicted.rows()) +
                                " points but target has " + std::to_string(target.size()));
  const PointCloud pred_cloud = tensor_to_cloud(predicted);
  const AssignmentPlan plan = emd_approx(pred_cloud, target, eps, iters);

  const std::size_t n = target.size();
  std::vector<double> diffs(n * 3), dists(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& q = target.points[plan.mapping[i]];
    const Vec3 d = pred_cloud.points[i] - q;
    diffs[i * 3 + 0] = d.x;
    diffs[i * 3 + 1] = d.y;
    diffs[i * 3 + 2] = d.z;
    dists[i] = d.norm();
    total += dists[i];
  }
  const double mean = total / static_cast<double>(n);

  // Envelope gradient with the assignment held fixed:
  //   d loss / d p_i = (p_i - q_phi(i)) / (n * ||p_i - q_phi(i)||),
  // taken as 0 where the distance vanishes.
  return make_op({1}, {mean}, {predicted}, [n, diffs, dists](TensorNode& o) {
    Tensor p = o.parents[0];
    if (!p.requires_grad()) return;
    if (p.grad().size() != p.numel()) p.grad().assign(p.numel(), 0.0);
    const double g = o.grad[0];
    for (std::size_t i = 0; i < n; ++i) {
      if (dists[i] == 0.0) continue;
      const double s = g / (static_cast<double>(n) * dists[i]);
      p.grad()[i * 3 + 0] += s * diffs[i * 3 + 0];
      p.grad()[i * 3 + 1] += s * diffs[i * 3 + 1];
      p.grad()[i * 3 + 2] += s * diffs[i * 3 + 2];
    }
  });
}

Tensor chamfer_loss(const Tensor& predicted, const PointCloud& target) {
  if (predicted.rank() != 2 || predicted.cols() != 3)
    throw std::invalid_argument("chamfer_loss: predicted must be [n,3]");
  if (target.empty()) throw std::invalid_argument("chamfer_loss: empty target");
  const PointCloud pred_cloud = tensor_to_cloud(predicted);
  const std::size_t n1 = pred_cloud.size(), n2 = target.size();
  const std::vector<std::size_t> fwd = nearest_indices(pred_cloud.points, target.points);
  const std::vector<std::size_t> bwd = nearest_indices(target.points, pred_cloud.points);

  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < n1; ++i) a += sq_dist(pred_cloud.points[i], target.points[fwd[i]]);
  for (std::size_t j = 0; j < n2; ++j) b += sq_dist(target.points[j], pred_cloud.points[bwd[j]]);
  const double value = a / static_cast<double>(n1) + b / static_cast<double>(n2);

  std::vector<Vec3> tpts = target.points;
  return make_op({1}, {value}, {predicted},
                 [n1, n2, fwd, bwd, tpts, pred_cloud](TensorNode& o) {
                   Tensor p = o.parents[0];
                   if (!p.requires_grad()) return;
                   if (p.grad().size() != p.numel()) p.grad().assign(p.numel(), 0.0);
                   const double g = o.grad[0];
                   for (std::size_t i = 0; i < n1; ++i) {
                     const Vec3 d = pred_cloud.points[i] - tpts[fwd[i]];
                     const double s = 2.0 * g / static_cast<double>(n1);
                     p.grad()[i * 3 + 0] += s * d.x;
                     p.grad()[i * 3 + 1] += s * d.y;
                     p.grad()[i * 3 + 2] += s * d.z;
                   }
                   for (std::size_t j = 0; j < n2; ++j) {
                     const std::size_t i = bwd[j];
                     const Vec3 d = pred_cloud.points[i] - tpts[j];
                     const double s = 2.0 * g / static_cast<double>(n2);
                     p.grad()[i * 3 + 0] += s * d.x;
                     p.grad()[i * 3 + 1] += s * d.y;
                     p.grad()[i * 3 + 2] += s * d.z;
                   }
                 });
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["cd"] = cd;
  j["emd"] = emd;
  j["scale_note"] = scale_note;
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [name, m] : per_object) per[name] = {{"cd", m.cd}, {"emd", m.emd}};
  j["per_object"] = per;
  return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  MetricReport r;
  r.cd = j.at("cd").get<double>();
  r.emd = j.at("emd").get<double>();
  r.scale_note = j.at("scale_note").get<std::string>();
  for (const auto& [name, m] : j.at("per_object").items())
    r.per_object[name] = {m.at("cd").get<double>(), m.at("emd").get<double>()};
  return r;
}

}  // namespace scnet
