#include <gtest/gtest.h>

#include <set>

#include "augflow/clustering.hpp"
#include "augflow/errors.hpp"
#include "oracles.hpp"

namespace augflow {
namespace {

const std::vector<Point> kFour = {{0, 0}, {0, 1}, {10, 10}, {10, 11}};

TEST(KMeans, FourPointsMatchExhaustivePartition) {
  std::vector<std::size_t> best;
  const double oracle = oracle::exhaustive_min_wcss(kFour, 2, &best);
  EXPECT_DOUBLE_EQ(oracle, 1.0);

  const auto r = kmeans(kFour, 2, 9);
  EXPECT_DOUBLE_EQ(r.wcss, oracle);
  EXPECT_EQ(r.assignments[0], r.assignments[1]);
  EXPECT_EQ(r.assignments[2], r.assignments[3]);
  EXPECT_NE(r.assignments[0], r.assignments[2]);
  EXPECT_DOUBLE_EQ(compute_wcss(kFour, r.assignments, r.centroids), r.wcss);
}

TEST(KMeans, KEqualsPointCountHasZeroWcss) { EXPECT_DOUBLE_EQ(kmeans(kFour, 4, 1).wcss, 0.0); }

TEST(KMeans, SingleClusterIsTheMean) {
  const auto r = kmeans(kFour, 1, 1);
  ASSERT_EQ(r.centroids.size(), 1u);
  EXPECT_DOUBLE_EQ(r.centroids[0][0], 5.0);
  EXPECT_DOUBLE_EQ(r.centroids[0][1], 5.5);
  // n times the per-point variance summed over dimensions.
  double total = 0;
  for (const auto& p : kFour) total += (p[0] - 5.0) * (p[0] - 5.0) + (p[1] - 5.5) * (p[1] - 5.5);
  EXPECT_DOUBLE_EQ(r.wcss, total);
}

TEST(KMeans, RaggedPointsAreDimensionMismatch) {
  EXPECT_THROW(kmeans({{0, 0}, {1}}, 1, 0), DimensionMismatch);
}

TEST(KMeans, KOutOfRangeThrows) {
  EXPECT_THROW(kmeans(kFour, 0, 0), std::invalid_argument);
  EXPECT_THROW(kmeans(kFour, 5, 0), std::invalid_argument);
}

TEST(KMeans, AssignmentsAreBelowK) {
  const auto pts = oracle::three_blobs();
  for (std::size_t k = 1; k <= 10; ++k) {
    const auto r = kmeans(pts, k, 5);
    EXPECT_EQ(r.k, k);
    for (auto a : r.assignments) EXPECT_LT(a, k);
  }
}

TEST(KMeans, LloydWcssNeverIncreases) {
  const auto blobs = oracle::three_blobs();
  oracle::SplitMix rng(77);
  std::vector<Point> noise;
  for (int i = 0; i < 80; ++i) noise.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto& pts = seed % 2 ? blobs : noise;
    const auto r = kmeans_once(pts, 2 + seed % 7, seed);
    bool ok = !r.wcss_history.empty();
    for (std::size_t i = 1; i < r.wcss_history.size(); ++i) ok = ok && r.wcss_history[i] <= r.wcss_history[i - 1] + 1e-12;
    monotone += ok;
  }
  EXPECT_EQ(monotone, 100);
}

TEST(KMeans, DeterministicForSeed) {
  const auto pts = oracle::three_blobs();
  const auto a = kmeans(pts, 4, 123);
  const auto b = kmeans(pts, 4, 123);
  EXPECT_EQ(a.assignments, b.assignments);
  EXPECT_EQ(a.wcss, b.wcss);
}

TEST(Elbow, ThreeBlobsGiveThree) {
  const auto pts = oracle::three_blobs();
  EXPECT_EQ(select_k_elbow(pts, 2, 10, 0), 3u);

  // Oracle curve from an independent restart Lloyd, and its own chord knee.
  std::vector<std::size_t> ks;
  std::vector<double> w;
  for (std::size_t k = 2; k <= 10; ++k) {
    ks.push_back(k);
    w.push_back(oracle::lloyd_restarts(pts, k, 40, 1000 + k));
  }
  EXPECT_EQ(oracle::chord_knee(ks, w), 3u);

  const auto r = kmeans(pts, 3, 0);
  EXPECT_NEAR(r.wcss, w[1], 1e-9);
  std::vector<std::size_t> blob_labels;
  for (std::size_t i = 0; i < pts.size(); ++i) blob_labels.push_back(i / 20);
  EXPECT_NEAR(r.wcss, oracle::partition_wcss(pts, blob_labels, 3), 1e-9);
}

TEST(Elbow, RangeIsClampedToPointCountMinusOne) {
  const auto curve = elbow_curve(kFour, 2, 10, 0);
  EXPECT_EQ(curve.ks, (std::vector<std::size_t>{2, 3}));
  EXPECT_TRUE(curve.chosen_k == 2 || curve.chosen_k == 3);
}

TEST(Elbow, TooFewPointsIsDegenerate) {
  EXPECT_EQ(select_k_elbow({{0.0}, {1.0}}, 2, 10, 0), 2u);
  EXPECT_EQ(select_k_elbow({{0.0}}, 2, 10, 0), 1u);
}

TEST(Elbow, AlwaysWithinTwoToTen) {
  oracle::SplitMix rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point> pts;
    const auto n = 11 + rng.next() % 40;
    for (std::size_t i = 0; i < n; ++i) pts.push_back({rng.uniform() * 10, rng.uniform() * 10});
    const auto k = select_k_elbow(pts, 2, 10, trial);
    EXPECT_GE(k, 2u);
    EXPECT_LE(k, 10u);
  }
}

TEST(Elbow, StraightLineTiesGoToSmallerK) {
  EXPECT_EQ(elbow_from_curve({2, 3, 4, 5}, {40, 30, 20, 10}), 2u);
  EXPECT_EQ(elbow_from_curve({2, 3, 4, 5, 6}, {100, 20, 15, 12, 10}), 3u);
}

}  // namespace
}  // namespace augflow
