#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lpvdn/diffcore.hpp"

namespace lpvdn::cluster {

using diff::Matrix;

struct ClusteringResult {
  std::vector<int> assignments;
  Matrix centroids;  // k x d
  double inertia = 0.0;
  int iterations = 0;
};

struct KMeansOptions {
  int n_init = 10;
  int max_iter = 300;
  std::uint64_t seed = 0;
};

/// Lloyd's algorithm seeded with k-means++; the run with the lowest inertia
/// over `n_init` restarts wins. Empty clusters are re-seeded from the point
/// farthest from its centroid.
ClusteringResult kmeans(const Matrix& points, int k, const KMeansOptions& opts = {});

/// k-means++ seeding alone (exposed for EM initialisation and tests).
Matrix kmeans_plus_plus(const Matrix& points, int k, diff::Rng& rng);

/// Lloyd iterations from the given centroids.
ClusteringResult lloyd(const Matrix& points, Matrix centroids, int max_iter);

double inertia(const Matrix& points, std::span<const int> assignments, const Matrix& centroids);

/// Minimum-cost perfect matching on a square cost matrix; returns the column
/// assigned to each row.
std::vector<int> hungarian(const Matrix& cost);

/// Unsupervised clustering accuracy: best one-to-one cluster -> label mapping.
double accuracy(std::span<const int> truth, std::span<const int> pred);

/// 2 MI(U,V) / (H(U) + H(V)), natural logs; 1.0 when both entropies vanish.
double nmi(std::span<const int> u, std::span<const int> v);

/// Adjusted Rand index in pair-counting form.
double ari(std::span<const int> u, std::span<const int> v);

struct Neighbor {
  int index;
  double distance;
};

/// k nearest rows of `embeddings` to `query` by Euclidean distance, ties to
/// the lower index. `exclude` (the query's own row, when it has one) is skipped.
std::vector<Neighbor> nearest_neighbors(const Matrix& embeddings, const Eigen::RowVectorXd& query, int k,
                                        std::optional<int> exclude = std::nullopt);

/// Convenience form for a stored point: queries row `query_index` and skips it.
std::vector<Neighbor> nearest_neighbors(const Matrix& embeddings, int query_index, int k);

/// Contiguous 0-based relabelling; also validates non-negativity.
std::vector<int> compact_labels(std::span<const int> labels, int* num_labels = nullptr);

struct EvalReport {
  std::optional<double> acc;
  std::optional<double> nmi;
  std::optional<double> ari;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<std::string> ablation;
  // Only written when labels are missing.
  std::optional<std::int64_t> n;
  std::optional<std::int64_t> dim;
  std::optional<double> embedding_mean_norm;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
};

}  // namespace lpvdn::cluster
