#include <algorithm>
#include <cmath>

#include "lpvdn/dataio.hpp"

namespace lpvdn::data {

DatasetBundle make_synthetic_gmm(int k, int dim, int n_per_cluster, double separation, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("make_synthetic_gmm: k must be >= 1");
  if (dim < 2) throw std::invalid_argument("make_synthetic_gmm: dim must be >= 2");
  if (n_per_cluster < 1) throw std::invalid_argument("make_synthetic_gmm: n_per_cluster must be >= 1");
  if (!(separation > 0)) throw std::invalid_argument("make_synthetic_gmm: separation must be positive");

  diff::Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Rejection-sample means; widen the proposal if it keeps failing.
  Matrix means(k, dim);
  double spread = separation / std::sqrt(static_cast<double>(dim));
  for (int c = 0; c < k; ++c) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 0 && attempt % 1000 == 0) spread *= 1.1;
      for (int d = 0; d < dim; ++d) means(c, d) = spread * normal(rng);
      bool ok = true;
      for (int o = 0; o < c && ok; ++o) ok = (means.row(c) - means.row(o)).norm() >= separation;
      if (ok) break;
    }
  }

  DatasetBundle b;
  b.name = "synthetic-gmm";
  b.x.resize(static_cast<Eigen::Index>(k) * n_per_cluster, dim);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(b.x.rows()));
  Eigen::Index row = 0;
  for (int c = 0; c < k; ++c) {
    for (int i = 0; i < n_per_cluster; ++i, ++row) {
      for (int d = 0; d < dim; ++d) b.x(row, d) = means(c, d) + normal(rng);
      labels.push_back(c);
    }
  }
  const double lo = b.x.minCoeff();
  const double hi = b.x.maxCoeff();
  if (hi > lo) {
    b.x = ((b.x.array() - lo) / (hi - lo)).matrix();
  } else {
    b.x.setConstant(0.5);
  }
  b.x = b.x.cwiseMax(0.0).cwiseMin(1.0);
  b.labels = std::move(labels);
  return b;
}

Matrix corrupt_gaussian(const Matrix& x, double sigma, std::uint64_t seed) {
  if (sigma < 0) throw std::invalid_argument("corrupt_gaussian: sigma must be non-negative");
  if (sigma == 0) return x;
  diff::Rng rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) out.data()[i] = std::clamp(x.data()[i] + normal(rng), 0.0, 1.0);
  return out;
}

}  // namespace lpvdn::data
