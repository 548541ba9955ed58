#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "reachseg/errors.hpp"
#include "reachseg/pipeline/training.hpp"

namespace reachseg {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double diff = a[c] - b[c];
    d += diff * diff;
  }
  return d;
}

std::size_t distinct_rows(const Matrix& points) {
  std::vector<std::vector<double>> rows;
  rows.reserve(points.rows());
  for (std::size_t r = 0; r < points.rows(); ++r) {
    const auto row = points.row(r);
    rows.emplace_back(row.begin(), row.end());
  }
  std::sort(rows.begin(), rows.end());
  return static_cast<std::size_t>(std::unique(rows.begin(), rows.end()) - rows.begin());
}

// Nearest centroid per point; ties go to the lowest index. Returns the
// squared distance of each point to its centroid.
std::vector<double> assign(const Matrix& points, const Matrix& centroids,
                           std::vector<std::size_t>& labels) {
  std::vector<double> dist(points.rows());
  labels.resize(points.rows());
  for (std::size_t r = 0; r < points.rows(); ++r) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < centroids.rows(); ++k) {
      const double d = squared_distance(points.row(r), centroids.row(k));
      if (d < best) {
        best = d;
        best_k = k;
      }
    }
    labels[r] = best_k;
    dist[r] = best;
  }
  return dist;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iterations, double tolerance) {
  if (k == 0) throw std::invalid_argument("kmeans: K must be >= 1");
  if (distinct_rows(points) < k) {
    throw InvalidState("kmeans: fewer than " + std::to_string(k) + " distinct points");
  }
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  Rng rng(seed);

  // K-Means++ seeding.
  KMeansResult out;
  out.centroids = Matrix(k, dim);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t pick = first(rng);
  std::copy_n(points.row(pick).begin(), dim, out.centroids.row(0).begin());
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    for (std::size_t r = 0; r < n; ++r) {
      nearest[r] = std::min(nearest[r], squared_distance(points.row(r), out.centroids.row(c - 1)));
    }
    std::discrete_distribution<std::size_t> weighted(nearest.begin(), nearest.end());
    pick = weighted(rng);
    std::copy_n(points.row(pick).begin(), dim, out.centroids.row(c).begin());
  }

  // Lloyd iterations.
  std::vector<double> dist = assign(points, out.centroids, out.labels);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    Matrix sums(k, dim);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t r = 0; r < n; ++r) {
      auto s = sums.row(out.labels[r]);
      const auto p = points.row(r);
      for (std::size_t c = 0; c < dim; ++c) s[c] += p[c];
      ++counts[out.labels[r]];
    }
    std::vector<bool> taken(n, false);
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> next(dim);
      if (counts[c] == 0) {
        // Re-seed an empty cluster at the point farthest from its centroid.
        std::size_t far = 0;
        for (std::size_t r = 1; r < n; ++r) {
          if (!taken[r] && (taken[far] || dist[r] > dist[far])) far = r;
        }
        taken[far] = true;
        dist[far] = 0.0;
        const auto p = points.row(far);
        next.assign(p.begin(), p.end());
      } else {
        const auto s = sums.row(c);
        for (std::size_t d = 0; d < dim; ++d) next[d] = s[d] / static_cast<double>(counts[c]);
      }
      shift = std::max(shift, std::sqrt(squared_distance(next, out.centroids.row(c))));
      std::copy(next.begin(), next.end(), out.centroids.row(c).begin());
    }
    dist = assign(points, out.centroids, out.labels);
    out.iterations = it + 1;
    if (shift < tolerance) break;
  }
  return out;
}

}  // namespace reachseg
