#include "gsfl/grouping.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "gsfl/binio.hpp"

namespace gsfl {

int GroupAssignment::group_of(int label) const {
  if (label < 1 || static_cast<std::size_t>(label) > class_to_group.size()) {
    fail(ErrorKind::kConfig, "class " + std::to_string(label) + " has no group assignment");
  }
  return class_to_group[static_cast<std::size_t>(label - 1)];
}

std::vector<std::vector<int>> GroupAssignment::members() const {
  std::vector<std::vector<int>> out(num_groups);
  for (std::size_t c = 0; c < class_to_group.size(); ++c) {
    out.at(static_cast<std::size_t>(class_to_group[c] - 1)).push_back(static_cast<int>(c + 1));
  }
  return out;
}

std::vector<std::size_t> GroupAssignment::sizes() const {
  std::vector<std::size_t> out(num_groups, 0);
  for (int g : class_to_group) ++out.at(static_cast<std::size_t>(g - 1));
  return out;
}

void GroupAssignment::validate() const {
  if (num_groups == 0) fail(ErrorKind::kConfig, "group assignment has zero groups");
  for (std::size_t c = 0; c < class_to_group.size(); ++c) {
    const int g = class_to_group[c];
    if (g < 1 || static_cast<std::uint32_t>(g) > num_groups) {
      fail(ErrorKind::kConfig, "class " + std::to_string(c + 1) + " maps to invalid group " +
                                   std::to_string(g));
    }
  }
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    acc += d * d;
  }
  return acc;
}

std::size_t sample_by_weight(std::span<const double> weight, double total, Rng& rng) {
  const double target = uniform01(rng) * total;
  double running = 0.0;
  std::size_t pick = weight.size() - 1;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    running += weight[i];
    if (running > target && weight[i] > 0.0) {
      pick = i;
      break;
    }
  }
  return pick;
}

// Greedy k-means++: each new centroid is the best of several D^2-weighted
// candidates, judged by the potential it leaves behind.
Matrix plus_plus_seed(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
  Matrix centroids(k, points.cols());
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<double> candidate(n);
  std::vector<double> keep(n);
  std::size_t pick = static_cast<std::size_t>(uniform_index(rng, n));
  for (std::size_t j = 0; j < k; ++j) {
    if (j > 0) {
      const double total = std::accumulate(best.begin(), best.end(), 0.0);
      if (total > 0.0) {
        double best_potential = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < trials; ++t) {
          const std::size_t c = sample_by_weight(best, total, rng);
          double potential = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            candidate[i] = std::min(best[i], sq_dist(points.row(i), points.row(c)));
            potential += candidate[i];
          }
          if (potential < best_potential) {
            best_potential = potential;
            pick = c;
            keep.swap(candidate);
          }
        }
        best.swap(keep);
        std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(j).begin());
        continue;
      }
      // All points coincide with chosen centroids; any point will do.
      pick = static_cast<std::size_t>(uniform_index(rng, n));
    }
    std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(j).begin());
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], sq_dist(points.row(i), centroids.row(j)));
    }
  }
  return centroids;
}

// Moves the point farthest from its centroid in the largest cluster into each
// empty cluster. `assignment` is 0-based here.
void repair_empty(const Matrix& points, const Matrix& centroids, std::vector<int>& assignment,
                  std::vector<std::size_t>& counts) {
  for (std::size_t empty = 0; empty < counts.size(); ++empty) {
    if (counts[empty] != 0) continue;
    const auto largest = static_cast<std::size_t>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
    if (counts[largest] < 2) continue;  // k <= n makes this unreachable
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      if (static_cast<std::size_t>(assignment[i]) != largest) continue;
      const double d = sq_dist(points.row(i), centroids.row(largest));
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    assignment[far] = static_cast<int>(empty);
    --counts[largest];
    ++counts[empty];
  }
}

}  // namespace

double clustering_sse(const Matrix& points, const Matrix& centroids,
                      std::span<const int> assignment) {
  double sse = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    sse += sq_dist(points.row(i), centroids.row(static_cast<std::size_t>(assignment[i] - 1)));
  }
  return sse;
}

ClusterResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, int max_iters) {
  const std::size_t n = points.rows();
  if (n == 0) fail(ErrorKind::kParameter, "kmeans: empty dataset");
  if (k == 0) fail(ErrorKind::kParameter, "kmeans: k must be >= 1");
  if (k > n) {
    fail(ErrorKind::kParameter, "kmeans: k=" + std::to_string(k) + " exceeds sample count " +
                                    std::to_string(n));
  }
  if (max_iters < 1) fail(ErrorKind::kParameter, "kmeans: max_iters must be >= 1");

  auto rng = make_rng(seed, "grouping.kmeans");
  ClusterResult result;
  result.centroids = plus_plus_seed(points, k, rng);
  std::vector<int> assign(n, -1);  // 0-based while iterating
  const std::size_t d = points.cols();

  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      // Stay put unless another centroid is strictly closer.
      std::size_t best = assign[i] < 0 ? 0 : static_cast<std::size_t>(assign[i]);
      double best_d = sq_dist(points.row(i), result.centroids.row(best));
      for (std::size_t j = 0; j < k; ++j) {
        const double dj = sq_dist(points.row(i), result.centroids.row(j));
        if (dj < best_d) {
          best_d = dj;
          best = j;
        }
      }
      if (assign[i] != static_cast<int>(best)) {
        assign[i] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) break;

    std::vector<std::size_t> counts(k, 0);
    for (int a : assign) ++counts[static_cast<std::size_t>(a)];
    repair_empty(points, result.centroids, assign, counts);

    // Fixed summation order (sample order) keeps the update reproducible.
    Matrix sums(k, d);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = sums.row(static_cast<std::size_t>(assign[i]));
      const auto src = points.row(i);
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t c = 0; c < d; ++c) {
        result.centroids(j, c) = sums(j, c) / static_cast<double>(counts[j]);
      }
    }
    ++result.iterations;

    result.assignment.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) result.assignment[i] = assign[i] + 1;
    result.inertia_history.push_back(clustering_sse(points, result.centroids, result.assignment));
  }
  result.inertia = clustering_sse(points, result.centroids, result.assignment);
  return result;
}

ClusterResult kmeans(const FeatureDataset& features, std::size_t k, std::uint64_t seed,
                     int max_iters) {
  return kmeans(features.features(), k, seed, max_iters);
}

GroupAssignment assign_groups(const ClusterResult& cluster, std::span<const int> labels,
                              std::uint32_t num_classes) {
  if (cluster.assignment.size() != labels.size()) {
    fail(ErrorKind::kShape, "assign_groups: " + std::to_string(cluster.assignment.size()) +
                                " cluster indices vs " + std::to_string(labels.size()) +
                                " labels");
  }
  const std::size_t k = cluster.centroids.rows();
  std::vector<std::vector<std::size_t>> votes(num_classes, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    if (c < 1 || static_cast<std::uint32_t>(c) > num_classes) {
      fail(ErrorKind::kData, "assign_groups: label " + std::to_string(c) + " out of range");
    }
    ++votes[static_cast<std::size_t>(c - 1)][static_cast<std::size_t>(cluster.assignment[i] - 1)];
  }
  GroupAssignment out;
  out.num_groups = static_cast<std::uint32_t>(k);
  out.class_to_group.resize(num_classes);
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    const auto& v = votes[c];
    // max_element returns the first maximum, i.e. the lowest group index.
    const auto best = std::max_element(v.begin(), v.end());
    if (*best == 0) {
      fail(ErrorKind::kData, "assign_groups: class " + std::to_string(c + 1) + " has no samples");
    }
    out.class_to_group[c] = static_cast<int>(best - v.begin()) + 1;
  }
  return out;
}

GroupAssignment random_groups(std::uint32_t num_classes, std::uint32_t num_groups,
                              std::uint64_t seed) {
  if (num_groups == 0) fail(ErrorKind::kParameter, "random_groups: num_groups must be >= 1");
  if (num_groups > num_classes) {
    fail(ErrorKind::kParameter, "random_groups: num_groups (" + std::to_string(num_groups) +
                                    ") exceeds num_classes (" + std::to_string(num_classes) + ")");
  }
  std::vector<int> order(num_classes);
  std::iota(order.begin(), order.end(), 1);
  auto rng = make_rng(seed, "grouping.random");
  shuffle_in_place(order, rng);
  GroupAssignment out;
  out.num_groups = num_groups;
  out.class_to_group.resize(num_classes);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    out.class_to_group[static_cast<std::size_t>(order[pos] - 1)] =
        static_cast<int>(pos % num_groups) + 1;
  }
  return out;
}

GroupAssignment single_group(std::uint32_t num_classes) {
  return GroupAssignment{1, std::vector<int>(num_classes, 1)};
}

std::string format_groups(const GroupAssignment& groups) {
  std::ostringstream out;
  out << "groups " << groups.num_groups << "\n";
  for (std::size_t c = 0; c < groups.class_to_group.size(); ++c) {
    out << (c + 1) << " " << groups.class_to_group[c] << "\n";
  }
  return out.str();
}

GroupAssignment parse_groups(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  GroupAssignment out;
  bool have_header = false;
  std::vector<bool> seen;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first) || first[0] == '#') continue;
    const auto where = source + ":" + std::to_string(line_no);
    if (!have_header) {
      long long n = 0;
      if (first != "groups" || !(ls >> n) || n < 1) {
        fail(ErrorKind::kFormat, where + ": expected \"groups N\" header");
      }
      out.num_groups = static_cast<std::uint32_t>(n);
      have_header = true;
      continue;
    }
    long long c = 0;
    long long g = 0;
    std::string extra;
    try {
      c = std::stoll(first);
    } catch (const std::exception&) {
      fail(ErrorKind::kFormat, where + ": bad class id \"" + first + "\"");
    }
    if (!(ls >> g) || (ls >> extra)) fail(ErrorKind::kFormat, where + ": expected \"class group\"");
    if (c < 1 || c > 1'000'000) fail(ErrorKind::kFormat, where + ": class id out of range");
    if (g < 1 || g > out.num_groups) fail(ErrorKind::kFormat, where + ": group id out of range");
    const auto ci = static_cast<std::size_t>(c);
    if (out.class_to_group.size() < ci) {
      out.class_to_group.resize(ci, 0);
      seen.resize(ci, false);
    }
    if (seen[ci - 1]) fail(ErrorKind::kFormat, where + ": duplicate class " + std::to_string(c));
    seen[ci - 1] = true;
    out.class_to_group[ci - 1] = static_cast<int>(g);
  }
  if (!have_header) fail(ErrorKind::kFormat, source + ": missing \"groups N\" header");
  for (std::size_t c = 0; c < seen.size(); ++c) {
    if (!seen[c]) fail(ErrorKind::kFormat, source + ": class " + std::to_string(c + 1) + " missing");
  }
  return out;
}

void save_groups(const GroupAssignment& groups, const std::string& path) {
  binio::write_text_atomic(path, format_groups(groups));
}

GroupAssignment load_groups(const std::string& path) {
  const auto bytes = binio::read_file(path);
  return parse_groups(std::string(bytes.begin(), bytes.end()), path);
}

}  // namespace gsfl
