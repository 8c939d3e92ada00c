#include <algorithm>
#include <stdexcept>

#include "lpvdn/cluster.hpp"

namespace lpvdn::cluster {

std::vector<Neighbor> nearest_neighbors(const Matrix& embeddings, const Eigen::RowVectorXd& query, int k,
                                        std::optional<int> exclude) {
  const auto n = static_cast<int>(embeddings.rows());
  if (k < 0 || k > n) {
    throw std::invalid_argument("nearest_neighbors: k=" + std::to_string(k) + " with n=" + std::to_string(n));
  }
  if (query.size() != embeddings.cols()) throw std::invalid_argument("nearest_neighbors: query dimension mismatch");
  std::vector<Neighbor> all;
  all.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (exclude && *exclude == i) continue;
    all.push_back({i, (embeddings.row(i) - query).norm()});
  }
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), all.size());
  auto closer = [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), closer);
  all.resize(take);
  return all;
}

std::vector<Neighbor> nearest_neighbors(const Matrix& embeddings, int query_index, int k) {
  if (query_index < 0 || query_index >= embeddings.rows()) {
    throw std::invalid_argument("nearest_neighbors: query index " + std::to_string(query_index) + " out of range");
  }
  return nearest_neighbors(embeddings, embeddings.row(query_index), k, query_index);
}

}  // namespace lpvdn::cluster
