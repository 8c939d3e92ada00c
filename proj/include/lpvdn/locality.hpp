#pragma once

// Local structure model: perplexity-calibrated Gaussian affinities P over
// latent means, a mapping network, Student-t affinities Q over its outputs,
// and the KL divergence between them. All affinities are per batch.

#include <span>
#include <vector>

#include "lpvdn/diffcore.hpp"

namespace lpvdn::locality {

using diff::Matrix;
using diff::Mlp;
using diff::Tape;
using diff::Var;

inline constexpr double kAffinityFloor = 1e-12;

struct Bandwidth {
  double beta = 1.0;        // 1 / (2 eta^2)
  double eta = 0.0;
  double perplexity = 0.0;  // achieved
  bool reached = false;     // false: target unreachable, beta left at the search boundary
  int iterations = 0;
};

/// Bisection on log2(beta) in [-60, 60] (at most `max_iter` halvings) until
/// the log2-entropy of p(.|i) is within `tol` of log2(perplexity).
/// `sq_dists` excludes the diagonal entry.
Bandwidth calibrate_bandwidth(std::span<const double> sq_dists, double perplexity, double tol = 1e-5,
                              int max_iter = 50);

/// p(j|i) for one row at precision beta (numerically shifted by the minimum distance).
std::vector<double> conditional_row(std::span<const double> sq_dists, double beta);

/// Target perplexity usable for a batch of size b: the configured value when
/// it lies below b - 1, otherwise the midpoint of (1, b - 1).
double effective_perplexity(double perplexity, Eigen::Index b);

/// ||a_i||^2 + ||a_j||^2 - 2 a_i.a_j clamped at 0, with an exactly zero diagonal.
Matrix squared_distances(const Matrix& x);
Var squared_distances(const Var& x);

struct HighAffinities {
  Matrix p;  // B x B, symmetric, zero diagonal, sums to 1
  std::vector<Bandwidth> bandwidths;
  bool all_reached = true;
};

/// (p(j|i) + p(i|j)) / 2B from calibrated rows. Requires B >= 3 and a
/// perplexity in (1, B - 1]. P is a constant for the training step.
HighAffinities high_affinities(const Matrix& mu_tilde, double perplexity);

/// o' = f_lp(mu_tilde).
Var map_points(Tape& tape, Mlp& mapper, const Var& mu_tilde);

/// Student-t (one degree of freedom) joint affinities, B x B, zero diagonal.
Var low_affinities(const Var& o_prime);
Matrix low_affinities(const Matrix& o_prime);

/// sum_{i != j} P_ij log(P_ij / Q_ij), both floored at 1e-12.
Var lp_loss(const Matrix& p, const Var& q);
double lp_loss(const Matrix& p, const Matrix& q);

}  // namespace lpvdn::locality
