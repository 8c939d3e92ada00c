#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "lpvdn/locality.hpp"

namespace lpvdn::locality {
namespace {

constexpr double kLog2BetaMin = -60.0;
constexpr double kLog2BetaMax = 60.0;

// Entropy in bits of the conditional row at precision beta.
double entropy_bits(std::span<const double> sq_dists, double beta) {
  const double d_min = *std::min_element(sq_dists.begin(), sq_dists.end());
  double z = 0.0;
  double weighted = 0.0;
  for (double d : sq_dists) {
    const double shifted = d - d_min;
    const double w = std::exp(-beta * shifted);
    z += w;
    weighted += w * shifted;
  }
  // H = log Z + beta E[d - d_min], in nats.
  return (std::log(z) + beta * weighted / z) / std::log(2.0);
}

Matrix off_diagonal_mask(Eigen::Index b) {
  Matrix m = Matrix::Ones(b, b);
  m.diagonal().setZero();
  return m;
}

}  // namespace

std::vector<double> conditional_row(std::span<const double> sq_dists, double beta) {
  const double d_min = *std::min_element(sq_dists.begin(), sq_dists.end());
  std::vector<double> p(sq_dists.size());
  double z = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    p[j] = std::exp(-beta * (sq_dists[j] - d_min));
    z += p[j];
  }
  for (double& v : p) v /= z;
  return p;
}

Bandwidth calibrate_bandwidth(std::span<const double> sq_dists, double perplexity, double tol, int max_iter) {
  if (sq_dists.empty()) throw std::invalid_argument("calibrate_bandwidth: empty row");
  if (!(perplexity > 1.0)) throw std::invalid_argument("calibrate_bandwidth: perplexity must exceed 1");
  const double target = std::log2(perplexity);
  double lo = kLog2BetaMin;
  double hi = kLog2BetaMax;
  Bandwidth out;
  double log2_beta = 0.0;
  double h = 0.0;
  for (out.iterations = 1; out.iterations <= max_iter; ++out.iterations) {
    log2_beta = 0.5 * (lo + hi);
    h = entropy_bits(sq_dists, std::exp2(log2_beta));
    if (std::abs(h - target) < tol) {
      out.reached = true;
      break;
    }
    // Entropy falls as the precision grows.
    if (h > target) {
      lo = log2_beta;
    } else {
      hi = log2_beta;
    }
  }
  out.iterations = std::min(out.iterations, max_iter);
  if (!out.reached) {
    // Unreachable targets drive the search to an end of the bracket.
    log2_beta = (h > target) ? kLog2BetaMax : kLog2BetaMin;
    h = entropy_bits(sq_dists, std::exp2(log2_beta));
  }
  out.beta = std::exp2(log2_beta);
  out.eta = std::sqrt(1.0 / (2.0 * out.beta));
  out.perplexity = std::exp2(h);
  return out;
}

double effective_perplexity(double perplexity, Eigen::Index b) {
  const double cap = static_cast<double>(b - 1);
  return perplexity < cap ? perplexity : 0.5 * (1.0 + cap);
}

Matrix squared_distances(const Matrix& x) {
  Eigen::VectorXd norms = x.rowwise().squaredNorm();
  Matrix d = (-2.0 * x * x.transpose()).eval();
  d.colwise() += norms;
  d.rowwise() += norms.transpose();
  d = d.cwiseMax(0.0);
  d.diagonal().setZero();
  return d;
}

Var squared_distances(const Var& x) {
  Var norms = diff::row_sum(diff::square(x));
  Var d = norms + diff::transpose(norms) - 2.0 * diff::matmul_nt(x, x);
  return diff::clamp_min(d, 0.0) * x.tape().constant(off_diagonal_mask(x.rows()));
}

HighAffinities high_affinities(const Matrix& mu_tilde, double perplexity) {
  const Eigen::Index b = mu_tilde.rows();
  if (b < 3) throw std::invalid_argument("high_affinities: need at least 3 points, got " + std::to_string(b));
  if (!(perplexity > 1.0) || perplexity > static_cast<double>(b - 1)) {
    throw std::invalid_argument("high_affinities: perplexity must lie in (1, B - 1]");
  }
  const Matrix d = squared_distances(mu_tilde);
  Matrix cond = Matrix::Zero(b, b);
  HighAffinities out;
  std::vector<double> row(static_cast<std::size_t>(b - 1));
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0, k = 0; j < b; ++j) {
      if (j != i) row[static_cast<std::size_t>(k++)] = d(i, j);
    }
    Bandwidth bw = calibrate_bandwidth(row, perplexity);
    out.all_reached = out.all_reached && bw.reached;
    auto p = conditional_row(row, bw.beta);
    for (Eigen::Index j = 0, k = 0; j < b; ++j) {
      if (j != i) cond(i, j) = p[static_cast<std::size_t>(k++)];
    }
    out.bandwidths.push_back(bw);
  }
  out.p = (cond + cond.transpose()) / (2.0 * static_cast<double>(b));
  return out;
}

Var map_points(Tape& tape, Mlp& mapper, const Var& mu_tilde) { return mapper.forward(tape, mu_tilde); }

Var low_affinities(const Var& o_prime) {
  Tape& t = o_prime.tape();
  Var kernel = t.constant(Matrix::Ones(1, 1)) / (1.0 + squared_distances(o_prime));
  Var masked = kernel * t.constant(off_diagonal_mask(o_prime.rows()));
  return masked / diff::sum(masked);
}

Matrix low_affinities(const Matrix& o_prime) {
  Matrix k = (1.0 + squared_distances(o_prime).array()).inverse().matrix();
  k.diagonal().setZero();
  return k / k.sum();
}

Var lp_loss(const Matrix& p, const Var& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) {
    throw diff::ShapeError("lp_loss", "P " + diff::shape_string(p) + " vs Q " + diff::shape_string(q.value()));
  }
  Matrix pf = p.cwiseMax(kAffinityFloor);
  pf.diagonal().setZero();
  const double entropy_part = (pf.array() * pf.array().max(kAffinityFloor).log()).sum();
  Tape& t = q.tape();
  return entropy_part - diff::sum(t.constant(pf) * diff::log(diff::clamp_min(q, kAffinityFloor)));
}

double lp_loss(const Matrix& p, const Matrix& q) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (i == j) continue;
      const double pij = std::max(p(i, j), kAffinityFloor);
      total += pij * std::log(pij / std::max(q(i, j), kAffinityFloor));
    }
  }
  return total;
}

}  // namespace lpvdn::locality
