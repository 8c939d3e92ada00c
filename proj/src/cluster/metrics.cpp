#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "lpvdn/cluster.hpp"

namespace lpvdn::cluster {
namespace {

void check_lengths(std::span<const int> u, std::span<const int> v, const char* what) {
  if (u.size() != v.size()) {
    throw std::invalid_argument(std::string(what) + ": label arrays differ in length (" +
                                std::to_string(u.size()) + " vs " + std::to_string(v.size()) + ")");
  }
  if (u.empty()) throw std::invalid_argument(std::string(what) + ": empty labelling");
}

struct Contingency {
  int rows = 0;
  int cols = 0;
  Matrix counts;  // rows = u labels, cols = v labels
  Eigen::VectorXd row_totals;
  Eigen::VectorXd col_totals;
};

Contingency contingency(std::span<const int> u, std::span<const int> v) {
  Contingency c;
  const std::vector<int> cu = compact_labels(u, &c.rows);
  const std::vector<int> cv = compact_labels(v, &c.cols);
  c.counts = Matrix::Zero(c.rows, c.cols);
  for (std::size_t i = 0; i < cu.size(); ++i) c.counts(cu[i], cv[i]) += 1.0;
  c.row_totals = c.counts.rowwise().sum();
  c.col_totals = c.counts.colwise().sum().transpose();
  return c;
}

double entropy(const Eigen::VectorXd& totals, double n) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < totals.size(); ++i) {
    if (totals(i) > 0) {
      const double p = totals(i) / n;
      h -= p * std::log(p);
    }
  }
  return h;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

std::vector<int> compact_labels(std::span<const int> labels, int* num_labels) {
  std::map<int, int> ids;
  for (int l : labels) ids.emplace(l, 0);
  int next = 0;
  for (auto& [label, id] : ids) id = next++;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(ids[l]);
  if (num_labels) *num_labels = next;
  return out;
}

double accuracy(std::span<const int> truth, std::span<const int> pred) {
  check_lengths(truth, pred, "accuracy");
  const Contingency c = contingency(pred, truth);
  const int k = std::max(c.rows, c.cols);
  Matrix counts = Matrix::Zero(k, k);
  counts.topLeftCorner(c.rows, c.cols) = c.counts;
  const Matrix cost = Matrix::Constant(k, k, counts.maxCoeff()) - counts;
  const std::vector<int> mapping = hungarian(cost);
  double matched = 0.0;
  for (int r = 0; r < k; ++r) matched += counts(r, mapping[static_cast<std::size_t>(r)]);
  return matched / static_cast<double>(truth.size());
}

double nmi(std::span<const int> u, std::span<const int> v) {
  check_lengths(u, v, "nmi");
  const Contingency c = contingency(u, v);
  const double n = static_cast<double>(u.size());
  const double hu = entropy(c.row_totals, n);
  const double hv = entropy(c.col_totals, n);
  if (hu + hv == 0.0) return 1.0;
  double mi = 0.0;
  for (int i = 0; i < c.rows; ++i) {
    for (int j = 0; j < c.cols; ++j) {
      const double nij = c.counts(i, j);
      if (nij > 0) mi += nij / n * std::log(n * nij / (c.row_totals(i) * c.col_totals(j)));
    }
  }
  return std::clamp(2.0 * mi / (hu + hv), 0.0, 1.0);
}

double ari(std::span<const int> u, std::span<const int> v) {
  check_lengths(u, v, "ari");
  if (u.size() < 2) throw std::invalid_argument("ari: needs at least two samples");
  const Contingency c = contingency(u, v);
  double index = 0.0;
  for (Eigen::Index i = 0; i < c.counts.size(); ++i) index += comb2(c.counts.data()[i]);
  double sum_a = 0.0, sum_b = 0.0;
  for (Eigen::Index i = 0; i < c.row_totals.size(); ++i) sum_a += comb2(c.row_totals(i));
  for (Eigen::Index j = 0; j < c.col_totals.size(); ++j) sum_b += comb2(c.col_totals(j));
  const double expected = sum_a * sum_b / comb2(static_cast<double>(u.size()));
  const double max_index = 0.5 * (sum_a + sum_b);
  const double denom = max_index - expected;
  if (denom == 0.0) {
    const auto nonzero = (c.counts.array() > 0).count();
    const bool same_partition = c.rows == c.cols && nonzero == c.rows;
    return same_partition ? 1.0 : 0.0;
  }
  return (index - expected) / denom;
}

}  // namespace lpvdn::cluster
