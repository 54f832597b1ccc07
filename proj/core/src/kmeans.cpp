#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "nodefilter/linalg.hpp"
#include "nodefilter/rng.hpp"

namespace nodefilter {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

}  // namespace

KMeansResult kmeans(const DenseMatrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iterations) {
  const std::size_t m = points.rows();
  if (k == 0) throw ConfigError("kmeans: k must be positive");
  if (k > m) {
    throw ConfigError("kmeans: k = " + std::to_string(k) + " exceeds point count " + std::to_string(m));
  }

  // k distinct starting points by a partial Fisher-Yates shuffle.
  Rng rng(seed);
  std::vector<std::size_t> ids(m);
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(ids[i], ids[i + rng.below(m - i)]);

  KMeansResult result;
  result.centroids = DenseMatrix(k, points.cols());
  for (std::size_t c = 0; c < k; ++c) {
    auto row = points.row(ids[c]);
    std::copy(row.begin(), row.end(), result.centroids.row(c).begin());
  }
  result.assignments.assign(m, 0);
  std::vector<double> dist(m, 0.0);

  bool changed = true;
  for (std::size_t iter = 0; iter < max_iterations && changed; ++iter) {
    changed = iter == 0;
    double objective = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(points.row(i), result.centroids.row(c));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best != result.assignments[i]) changed = true;
      result.assignments[i] = best;
      dist[i] = best_d;
      objective += best_d;
    }
    result.objective_history.push_back(objective);
    result.iterations = iter + 1;
    if (!changed) break;

    DenseMatrix sums(k, points.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < m; ++i) {
      auto dst = sums.row(result.assignments[i]);
      auto src = points.row(i);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
      ++counts[result.assignments[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      auto dst = result.centroids.row(c);
      if (counts[c] == 0) {
        const auto far = static_cast<std::size_t>(
            std::max_element(dist.begin(), dist.end()) - dist.begin());
        auto src = points.row(far);
        std::copy(src.begin(), src.end(), dst.begin());
        dist[far] = 0.0;
        continue;
      }
      auto src = sums.row(c);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j] / static_cast<double>(counts[c]);
    }
  }
  return result;
}

}  // namespace nodefilter
