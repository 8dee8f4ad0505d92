#pragma once

// Class grouping: k-means over feature samples, then each class joins the
// cluster holding the plurality of its samples.

#include <cstdint>
#include <string>
#include <vector>

#include "gsfl/common.hpp"
#include "gsfl/featureio.hpp"

namespace gsfl {

struct ClusterResult {
  Matrix centroids;             // k x d
  std::vector<int> assignment;  // per sample, 1-based cluster index
  double inertia = 0.0;         // SSE of `assignment` against `centroids`
  // Inertia after every Lloyd update; non-increasing.
  std::vector<double> inertia_history;
  int iterations = 0;
};

struct GroupAssignment {
  std::uint32_t num_groups = 0;
  std::vector<int> class_to_group;  // index c-1 holds the group of class c (1-based)

  std::uint32_t num_classes() const noexcept {
    return static_cast<std::uint32_t>(class_to_group.size());
  }
  // Group of a 1-based class label; throws kConfig when the class is not covered.
  int group_of(int label) const;
  // Classes per group, index j-1 for group j. Groups may be empty.
  std::vector<std::vector<int>> members() const;
  std::vector<std::size_t> sizes() const;

  void validate() const;

  bool operator==(const GroupAssignment&) const = default;
};

// Sum of squared distances from each point to its assigned centroid.
double clustering_sse(const Matrix& points, const Matrix& centroids,
                      std::span<const int> assignment);

ClusterResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                     int max_iters = 300);
ClusterResult kmeans(const FeatureDataset& features, std::size_t k, std::uint64_t seed,
                     int max_iters = 300);

// Plurality vote per class; ties resolve to the lowest group index.
GroupAssignment assign_groups(const ClusterResult& cluster, std::span<const int> labels,
                              std::uint32_t num_classes);

// Seeded shuffle of the classes dealt round-robin into balanced groups.
GroupAssignment random_groups(std::uint32_t num_classes, std::uint32_t num_groups,
                              std::uint64_t seed);

GroupAssignment single_group(std::uint32_t num_classes);

// Text format: "groups N_g" followed by one "class_id group_id" line per class.
std::string format_groups(const GroupAssignment& groups);
GroupAssignment parse_groups(const std::string& text, const std::string& source);
void save_groups(const GroupAssignment& groups, const std::string& path);
GroupAssignment load_groups(const std::string& path);

}  // namespace gsfl
