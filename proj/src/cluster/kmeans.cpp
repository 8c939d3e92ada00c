#include <limits>
#include <stdexcept>

#include "lpvdn/cluster.hpp"

namespace lpvdn::cluster {
namespace {

using Index = Eigen::Index;

int nearest_centroid(const Matrix& points, Index i, const Matrix& centroids, double* best_d2) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (Index c = 0; c < centroids.rows(); ++c) {
    const double d2 = (points.row(i) - centroids.row(c)).squaredNorm();
    if (d2 < best_dist) {
      best_dist = d2;
      best = static_cast<int>(c);
    }
  }
  if (best_d2) *best_d2 = best_dist;
  return best;
}

}  // namespace

double inertia(const Matrix& points, std::span<const int> assignments, const Matrix& centroids) {
  double total = 0.0;
  for (Index i = 0; i < points.rows(); ++i) {
    total += (points.row(i) - centroids.row(assignments[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return total;
}

Matrix kmeans_plus_plus(const Matrix& points, int k, diff::Rng& rng) {
  const Index n = points.rows();
  Matrix centroids(k, points.cols());
  std::uniform_int_distribution<Index> pick(0, n - 1);
  centroids.row(0) = points.row(pick(rng));
  Eigen::VectorXd d2(n);
  for (Index i = 0; i < n; ++i) d2(i) = (points.row(i) - centroids.row(0)).squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index chosen = 0;
    if (total <= 0.0) {
      chosen = pick(rng);
    } else {
      const double target = unit(rng) * total;
      double acc = 0.0;
      chosen = n - 1;
      for (Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc >= target && d2(i) > 0.0) {
          chosen = i;
          break;
        }
      }
    }
    centroids.row(c) = points.row(chosen);
    for (Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (points.row(i) - centroids.row(c)).squaredNorm());
  }
  return centroids;
}

ClusteringResult lloyd(const Matrix& points, Matrix centroids, int max_iter) {
  const Index n = points.rows();
  const Index k = centroids.rows();
  ClusteringResult r;
  r.assignments.assign(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n));

  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      const int c = nearest_centroid(points, i, centroids, &dist[static_cast<std::size_t>(i)]);
      if (c != r.assignments[static_cast<std::size_t>(i)]) {
        r.assignments[static_cast<std::size_t>(i)] = c;
        changed = true;
      }
    }
    r.iterations = iter + 1;
    if (!changed) break;

    Matrix sums = Matrix::Zero(k, points.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      const int c = r.assignments[static_cast<std::size_t>(i)];
      sums.row(c) += points.row(i);
      counts[static_cast<std::size_t>(c)] += 1;
    }
    for (Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      // Empty cluster: steal the point farthest from its centroid.
      Index far = -1;
      double far_d = -1.0;
      for (Index i = 0; i < n; ++i) {
        const int owner = r.assignments[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(owner)] <= 1) continue;
        if (dist[static_cast<std::size_t>(i)] > far_d) {
          far_d = dist[static_cast<std::size_t>(i)];
          far = i;
        }
      }
      if (far < 0) continue;
      counts[static_cast<std::size_t>(r.assignments[static_cast<std::size_t>(far)])] -= 1;
      r.assignments[static_cast<std::size_t>(far)] = static_cast<int>(c);
      counts[static_cast<std::size_t>(c)] = 1;
      dist[static_cast<std::size_t>(far)] = 0.0;
      centroids.row(c) = points.row(far);
    }
  }
  r.centroids = std::move(centroids);
  r.inertia = inertia(points, r.assignments, r.centroids);
  return r;
}

ClusteringResult kmeans(const Matrix& points, int k, const KMeansOptions& opts) {
  if (k <= 0) throw std::invalid_argument("kmeans: k must be positive");
  if (k > points.rows()) {
    throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " exceeds n=" + std::to_string(points.rows()));
  }
  if (opts.n_init < 1) throw std::invalid_argument("kmeans: n_init must be >= 1");
  diff::Rng rng(opts.seed);
  ClusteringResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int run = 0; run < opts.n_init; ++run) {
    ClusteringResult r = lloyd(points, kmeans_plus_plus(points, k, rng), opts.max_iter);
    if (r.inertia < best.inertia) best = std::move(r);
  }
  return best;
}

}  // namespace lpvdn::cluster
