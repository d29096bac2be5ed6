#include "augflow/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "augflow/errors.hpp"
#include "augflow/random.hpp"

namespace augflow {

namespace {

constexpr int kMaxLloydIterations = 100;

double sq_dist(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void check_points(const std::vector<Point>& points, std::size_t k) {
  if (points.empty()) throw std::invalid_argument("kmeans on an empty point set");
  if (k < 1 || k > points.size()) {
    throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " outside [1, " + std::to_string(points.size()) +
                                "]");
  }
  const auto dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw DimensionMismatch("kmeans: points have differing dimensions");
  }
}

std::size_t nearest(const Point& p, const std::vector<Point>& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<Point> kmeanspp_init(const std::vector<Point>& points, std::size_t k, Rng& rng) {
  std::vector<Point> centroids;
  centroids.reserve(k);
  centroids.push_back(points[rng.index(points.size())]);
  std::vector<double> d2(points.size());
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = sq_dist(points[i], centroids[nearest(points[i], centroids)]);
      total += d2[i];
    }
    std::size_t pick = points.size() - 1;
    if (total <= 0.0) {
      pick = rng.index(points.size());
    } else {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < points.size(); ++i) {
        r -= d2[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(points[pick]);
  }
  return centroids;
}

}  // namespace

double compute_wcss(const std::vector<Point>& points, const std::vector<std::size_t>& assignments,
                    const std::vector<Point>& centroids) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) s += sq_dist(points[i], centroids[assignments[i]]);
  return s;
}

ClusterResult kmeans_once(const std::vector<Point>& points, std::size_t k, std::uint64_t seed) {
  check_points(points, k);
  const auto n = points.size();
  const auto dim = points.front().size();
  Rng rng(seed);

  ClusterResult r;
  r.k = k;
  r.centroids = kmeanspp_init(points, k, rng);
  r.assignments.assign(n, k);  // sentinel: nothing assigned yet

  for (int iter = 0; iter < kMaxLloydIterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = nearest(points[i], r.centroids);
      if (c != r.assignments[i]) {
        r.assignments[i] = c;
        changed = true;
      }
    }
    if (!changed) break;

    std::vector<Point> sums(k, Point(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = r.assignments[i];
      ++counts[c];
      for (std::size_t d = 0; d < dim; ++d) sums[c][d] += points[i][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t d = 0; d < dim; ++d) r.centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      // Move the empty centroid onto the worst-served point that is not the
      // only member of its own cluster.
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[r.assignments[i]] < 2) continue;
        const double d = sq_dist(points[i], r.centroids[r.assignments[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == n) break;
      --counts[r.assignments[far]];
      r.assignments[far] = c;
      counts[c] = 1;
      r.centroids[c] = points[far];
    }
    r.wcss_history.push_back(compute_wcss(points, r.assignments, r.centroids));
  }
  r.wcss = compute_wcss(points, r.assignments, r.centroids);
  return r;
}

ClusterResult kmeans(const std::vector<Point>& points, std::size_t k, std::uint64_t seed, int restarts) {
  check_points(points, k);
  ClusterResult best;
  bool have = false;
  for (int i = 0; i < std::max(restarts, 1); ++i) {
    auto r = kmeans_once(points, k, derive_seed(seed, static_cast<std::uint64_t>(i)));
    if (!have || r.wcss < best.wcss) {
      best = std::move(r);
      have = true;
    }
  }
  return best;
}

std::size_t elbow_from_curve(const std::vector<std::size_t>& ks, const std::vector<double>& wcss,
                             std::vector<double>* distances) {
  if (ks.empty() || ks.size() != wcss.size()) throw std::invalid_argument("elbow: malformed curve");
  if (distances) distances->assign(ks.size(), 0.0);
  if (ks.size() < 3) return ks.front();

  const auto [lo_w, hi_w] = std::minmax_element(wcss.begin(), wcss.end());
  const double w_span = *hi_w - *lo_w;
  const double k_span = static_cast<double>(ks.back() - ks.front());
  if (w_span <= 0.0 || k_span <= 0.0) return ks.front();

  auto nx = [&](std::size_t i) { return static_cast<double>(ks[i] - ks.front()) / k_span; };
  auto ny = [&](std::size_t i) { return (wcss[i] - *lo_w) / w_span; };
  const double x0 = nx(0), y0 = ny(0);
  const double dx = nx(ks.size() - 1) - x0, dy = ny(ks.size() - 1) - y0;
  const double len = std::hypot(dx, dy);

  std::size_t best = 0;
  double best_d = -1.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const double d = std::fabs(dy * (nx(i) - x0) - dx * (ny(i) - y0)) / len;
    if (distances) (*distances)[i] = d;
    if (d > best_d + 1e-12) {
      best_d = d;
      best = i;
    }
  }
  return ks[best];
}

ElbowCurve elbow_curve(const std::vector<Point>& points, std::size_t kmin, std::size_t kmax, std::uint64_t seed) {
  ElbowCurve curve;
  const auto n = points.size();
  if (n <= kmin) {
    curve.chosen_k = std::min(n, kmin);
    return curve;
  }
  const auto hi = std::min(kmax, n - 1);
  if (hi <= kmin) {
    curve.ks = {kmin};
    curve.wcss = {kmeans(points, kmin, derive_seed(seed, kmin)).wcss};
    curve.chord_distance = {0.0};
    curve.chosen_k = kmin;
    return curve;
  }
  for (auto k = kmin; k <= hi; ++k) {
    curve.ks.push_back(k);
    curve.wcss.push_back(kmeans(points, k, derive_seed(seed, k)).wcss);
  }
  curve.chosen_k = elbow_from_curve(curve.ks, curve.wcss, &curve.chord_distance);
  return curve;
}

std::size_t select_k_elbow(const std::vector<Point>& points, std::size_t kmin, std::size_t kmax, std::uint64_t seed) {
  return elbow_curve(points, kmin, kmax, seed).chosen_k;
}

}  // namespace augflow
