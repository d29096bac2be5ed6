#pragma once

#include <cstdint>
#include <vector>

namespace augflow {

using Point = std::vector<double>;

struct ClusterResult {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;  // cluster index per point
  std::vector<Point> centroids;
  double wcss = 0.0;
  /// WCSS after every Lloyd update of the run that produced this result.
  std::vector<double> wcss_history;
};

/// Sum of squared distances from each point to its assigned centroid.
double compute_wcss(const std::vector<Point>& points, const std::vector<std::size_t>& assignments,
                    const std::vector<Point>& centroids);

/// One k-means++ initialisation followed by Lloyd iterations until the
/// assignment is a fixpoint or 100 iterations pass. Empty clusters are
/// re-seeded from the point farthest from its centroid.
///
/// Requires 1 <= k <= |points| and uniform dimension (DimensionMismatch).
ClusterResult kmeans_once(const std::vector<Point>& points, std::size_t k, std::uint64_t seed);

/// Best of `restarts` seeded kmeans_once runs by WCSS (earliest wins ties).
ClusterResult kmeans(const std::vector<Point>& points, std::size_t k, std::uint64_t seed, int restarts = 5);

struct ElbowCurve {
  std::vector<std::size_t> ks;
  std::vector<double> wcss;
  std::vector<double> chord_distance;  // on min-max normalised axes
  std::size_t chosen_k = 0;
};

/// Pick the knee of a WCSS-vs-k curve: the point farthest from the chord
/// joining its first and last points, after scaling both axes to [0, 1].
/// Ties go to the smaller k.
std::size_t elbow_from_curve(const std::vector<std::size_t>& ks, const std::vector<double>& wcss,
                             std::vector<double>* distances = nullptr);

/// kmeans for each k in [kmin, min(kmax, |points| - 1)] and the elbow of the
/// resulting curve. With |points| <= kmin the answer is min(|points|, kmin).
ElbowCurve elbow_curve(const std::vector<Point>& points, std::size_t kmin, std::size_t kmax, std::uint64_t seed);

std::size_t select_k_elbow(const std::vector<Point>& points, std::size_t kmin, std::size_t kmax, std::uint64_t seed);

}  // namespace augflow
