#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "binsight/errors.hpp"
#include "binsight/geometry.hpp"
#include "test_util.hpp"

using namespace binsight;
using binsight::testing::random_cloud;
using binsight::testing::lattice_cloud;

TEST(CellOf, FloorPlusOne) {
  EXPECT_EQ(cell_of({0.f, 0.f, 0.f}, 5.0), (CellIndex{1, 1}));
  EXPECT_EQ(cell_of({4.999f, 0.f, 7.f}, 5.0), (CellIndex{1, 1}));
  EXPECT_EQ(cell_of({5.f, 9.99f, 0.f}, 5.0), (CellIndex{2, 2}));
  EXPECT_EQ(cell_of({-0.001f, -5.f, 0.f}, 5.0), (CellIndex{0, 0}));
  EXPECT_EQ(cell_of({-5.001f, 0.f, 0.f}, 5.0), (CellIndex{-1, 1}));
}

TEST(CellOf, RejectsBadInput) {
  EXPECT_THROW(cell_of({0.f, 0.f, 0.f}, 0.0), InvalidArgument);
  EXPECT_THROW(cell_of({0.f, 0.f, 0.f}, -1.0), InvalidArgument);
  EXPECT_THROW(cell_of({std::nanf(""), 0.f, 0.f}, 5.0), InvalidPoint);
  EXPECT_THROW(cell_of({0.f, INFINITY, 0.f}, 5.0), InvalidPoint);
  EXPECT_FALSE(try_cell_of({std::nanf(""), 0.f, 0.f}, 5.0).has_value());
  EXPECT_FALSE(try_cell_of({3e38f, 0.f, 0.f}, 1e-3).has_value());
}

TEST(CellGrid, BucketsMatchCellOf) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cloud = random_cloud(rng, 500, 40.0, 10.0);
    const double s = rng.uniform(0.5, 10.0);
    const CellGrid grid(cloud, s);
    std::map<CellIndex, std::vector<std::uint32_t>> expected;
    for (std::uint32_t i = 0; i < cloud.size(); ++i) expected[cell_of(cloud.points[i], s)].push_back(i);
    ASSERT_EQ(grid.cell_count(), expected.size());
    ASSERT_EQ(grid.point_count(), cloud.size());
    std::size_t slot = 0;
    for (const auto& [cell, ids] : expected) {
      EXPECT_EQ(grid.cells()[slot], cell);
      const auto got = grid.find(cell);
      EXPECT_EQ(std::vector<std::uint32_t>(got.begin(), got.end()), ids);
      ++slot;
    }
    EXPECT_TRUE(grid.find({100000, 100000}).empty());
  }
}

TEST(CellGrid, RejectsNonFinitePoint) {
  PointCloud c;
  c.points = {{0, 0, 0}, {std::nanf(""), 1, 1}};
  EXPECT_THROW(CellGrid(c, 5.0), InvalidPoint);
}

TEST(ProjectedSize, CeilOfRangeOverResolution) {
  PointCloud c;
  c.points = {{0, 0, 0}, {10, 4, 0}};
  EXPECT_EQ(projected_size(c, 1.0), (std::pair{10, 4}));
  EXPECT_EQ(projected_size(c, 3.0), (std::pair{4, 2}));
  c.points = {{0, 0, 0}, {10.5f, 0, 0}};
  EXPECT_EQ(projected_size(c, 1.0), (std::pair{11, 1}));
  c.points = {{2, 2, 1}};
  EXPECT_EQ(projected_size(c, 1.0), (std::pair{1, 1}));
}

TEST(Project, RejectsBadInput) {
  PointCloud empty;
  EXPECT_THROW(project_to_depth_map(empty, 1.0), EmptyCloud);
  PointCloud c;
  c.points = {{0, 0, 0}};
  EXPECT_THROW(project_to_depth_map(c, 0.0), InvalidArgument);
  EXPECT_THROW(project_to_depth_map(c, -2.0), InvalidArgument);
  c.points = {{0, 0, 0}, {1e9f, 1e9f, 0}};
  EXPECT_THROW(project_to_depth_map(c, 1e-3), InvalidArgument);
}

TEST(Project, HighestPointWinsAndFarEdgeIsClamped) {
  PointCloud c;
  c.points = {{0, 0, 1}, {0.5f, 0.5f, 3}, {2, 0, 2}, {0.2f, 0.1f, 3}};
  c.labels = std::vector<std::uint8_t>{0, 1, 0, 0};
  const auto p = project_to_depth_map(c, 1.0);
  ASSERT_EQ(p.depth.width, 2);
  ASSERT_EQ(p.depth.height, 1);
  EXPECT_EQ(p.depth.heights[0], 3.f);
  EXPECT_EQ(p.depth.provenance[0], 1);  // tie at z = 3 goes to the lower index
  EXPECT_EQ(p.depth.heights[1], 2.f);   // x = 2 sits on the far edge
  EXPECT_EQ(p.depth.provenance[1], 2);
  ASSERT_TRUE(p.mask.has_value());
  EXPECT_EQ(p.mask->labels[0], 1);
  EXPECT_EQ(p.mask->labels[1], 0);
}

TEST(Project, HolesAreInvalidNaN) {
  PointCloud c;
  c.points = {{0, 0, 1}, {3, 3, 1}};
  const auto p = project_to_depth_map(c, 1.0);
  EXPECT_EQ(p.depth.size(), 9u);
  EXPECT_EQ(p.depth.valid_count(), 2u);
  for (std::size_t i = 0; i < p.depth.size(); ++i) {
    EXPECT_EQ(std::isnan(p.depth.heights[i]), !p.depth.valid[i]);
    EXPECT_EQ(p.depth.provenance[i] >= 0, p.depth.valid[i] == 1);
  }
  EXPECT_FALSE(p.mask.has_value());
}

// Brute force: each pixel is the max over the points whose floor index lands there.
TEST(Project, MatchesPerPixelMaximumOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto cloud = trial % 2 ? random_cloud(rng, 2000, 30, 20, true)
                                 : lattice_cloud(rng, 2000, 12, 2.5, true);
    const double r = rng.uniform(0.3, 4.0);
    const auto p = project_to_depth_map(cloud, r);
    std::vector<std::int64_t> best(p.depth.size(), -1);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto px = p.depth.pixel_of(cloud.points[i].x, cloud.points[i].y);
      ASSERT_TRUE(px.has_value());
      auto& b = best[p.depth.index(px->first, px->second)];
      if (b < 0 || cloud.points[i].z > cloud.points[b].z) b = static_cast<std::int64_t>(i);
    }
    for (std::size_t c = 0; c < best.size(); ++c) {
      ASSERT_EQ(p.depth.provenance[c], best[c]);
      if (best[c] >= 0) {
        ASSERT_EQ(p.depth.heights[c], cloud.points[best[c]].z);
        ASSERT_EQ(p.mask->labels[c], (*cloud.labels)[best[c]]);
      }
    }
  }
}

TEST(Reproject, LabelsFollowPixelsAndInvalidGoesToZero) {
  PointCloud c;
  c.points = {{0, 0, 1}, {0.5f, 0.5f, 0}, {1.5f, 0, 2}, {-1, 0, 0}, {0, 5, 0}};
  DepthMap dm = DepthMap::blank(2, 1);
  dm.set(0, 1);
  LabelMask m = LabelMask::blank(2, 1, kWorkpiece, true);
  m.valid[1] = 0;
  const auto out = reproject_labels(c, m, dm);
  EXPECT_EQ(*out.labels, (std::vector<std::uint8_t>{1, 1, 0, 0, 0}));
  EXPECT_EQ(out.points, c.points);
  EXPECT_THROW(reproject_labels(c, LabelMask::blank(3, 1), dm), ShapeMismatch);
}

TEST(Split, PartitionPreservesOrder) {
  PointCloud c;
  c.source_id = "s";
  c.points = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  c.labels = std::vector<std::uint8_t>{1, 0, 1, 0};
  const auto parts = split_cloud(c);
  EXPECT_EQ(parts.workpiece.points, (std::vector<Point3>{{0, 0, 0}, {2, 0, 0}}));
  EXPECT_EQ(parts.background.points, (std::vector<Point3>{{1, 0, 0}, {3, 0, 0}}));
  EXPECT_EQ(parts.workpiece.source_id, "s/workpiece");
  PointCloud unlabeled;
  unlabeled.points = c.points;
  EXPECT_THROW(split_cloud(unlabeled), MissingLabels);
}

TEST(PointCloudCheck, RejectsBadLabels) {
  PointCloud c;
  c.points = {{0, 0, 0}};
  c.labels = std::vector<std::uint8_t>{0, 1};
  EXPECT_THROW(c.check(), InvalidArgument);
  c.labels = std::vector<std::uint8_t>{2};
  EXPECT_THROW(c.check(), InvalidArgument);
}

// Property: project -> reproject -> split is a partition of the input, and
// reprojecting the projection's own mask reproduces every provenance point's label.
TEST(RoundTrip, ProjectReprojectSplitPartitionsInput) {
  Rng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const auto cloud = lattice_cloud(rng, 1500, 10, 1.7, true);
    const double r = rng.uniform(0.5, 3.0);
    const auto p = project_to_depth_map(cloud, r);
    const auto back = reproject_labels(cloud, *p.mask, p.depth);
    for (std::size_t c = 0; c < p.depth.size(); ++c) {
      if (p.depth.provenance[c] >= 0) {
        ASSERT_EQ((*back.labels)[p.depth.provenance[c]], (*cloud.labels)[p.depth.provenance[c]]);
      }
    }
    const auto parts = split_cloud(back);
    ASSERT_EQ(parts.workpiece.size() + parts.background.size(), cloud.size());
    std::multiset<std::tuple<float, float, float>> a, b;
    for (const auto& q : cloud.points) a.insert({q.x, q.y, q.z});
    for (const auto& q : parts.workpiece.points) b.insert({q.x, q.y, q.z});
    for (const auto& q : parts.background.points) b.insert({q.x, q.y, q.z});
    ASSERT_EQ(a, b);
  }
}
