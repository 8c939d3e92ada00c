#include <algorithm>
#include <numeric>

#include "lpvdn/dataio.hpp"

namespace lpvdn::data {

std::vector<std::vector<int>> minibatches(Eigen::Index n, int batch_size, std::uint64_t shuffle_seed) {
  if (batch_size < 1 || batch_size > n) {
    throw std::invalid_argument("minibatches: batch size " + std::to_string(batch_size) + " not in [1, " +
                                std::to_string(n) + "]");
  }
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  diff::Rng rng(shuffle_seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<int>> out;
  for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(perm.size(), start + static_cast<std::size_t>(batch_size));
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start), perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Matrix gather(const Matrix& x, std::span<const int> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

}  // namespace lpvdn::data
