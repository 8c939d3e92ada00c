#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "lpvdn/cluster.hpp"
#include "lpvdn/vade.hpp"

namespace lpvdn::vade {
namespace {

// Per-sample log(w_c N(x; m_c, v_c)), n x K.
Matrix log_weighted_density(const Matrix& x, const GmmFit& fit) {
  const double log2pi = std::log(2.0 * std::numbers::pi);
  const auto d = static_cast<double>(x.cols());
  Matrix out(x.rows(), fit.means.rows());
  for (Eigen::Index c = 0; c < fit.means.rows(); ++c) {
    Matrix diff = x.rowwise() - fit.means.row(c);
    Eigen::VectorXd quad = diff.array().square().matrix() * fit.variances.row(c).cwiseInverse().transpose();
    const double constant =
        std::log(fit.weights(c)) - 0.5 * (d * log2pi + fit.variances.row(c).array().log().sum());
    out.col(c) = (constant - 0.5 * quad.array()).matrix();
  }
  return out;
}

Eigen::VectorXd logsumexp_rows(const Matrix& m) {
  Eigen::VectorXd out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    out(i) = mx + std::log((m.row(i).array() - mx).exp().sum());
  }
  return out;
}

}  // namespace

double gmm_log_likelihood(const Matrix& points, const GmmFit& fit) {
  return logsumexp_rows(log_weighted_density(points, fit)).mean();
}

GmmFit fit_gmm_em(const Matrix& points, int k, const EmOptions& opts) {
  const Eigen::Index n = points.rows();
  const Eigen::Index d = points.cols();
  if (k <= 0 || k > n) throw std::invalid_argument("fit_gmm_em: need 1 <= k <= n");

  const Eigen::RowVectorXd global_mean = points.colwise().mean();
  const Eigen::RowVectorXd global_var =
      ((points.rowwise() - global_mean).array().square().colwise().sum() / static_cast<double>(n))
          .matrix()
          .cwiseMax(opts.var_floor);

  auto km = cluster::kmeans(points, k, {.n_init = opts.kmeans_restarts, .seed = opts.seed});
  GmmFit fit;
  fit.weights = Eigen::RowVectorXd::Zero(k);
  fit.means = km.centroids;
  fit.variances = Matrix::Zero(k, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = km.assignments[static_cast<std::size_t>(i)];
    fit.weights(c) += 1.0;
    fit.variances.row(c) += (points.row(i) - fit.means.row(c)).array().square().matrix();
  }
  for (int c = 0; c < k; ++c) {
    if (fit.weights(c) >= 2.0) {
      fit.variances.row(c) = (fit.variances.row(c) / fit.weights(c)).cwiseMax(opts.var_floor);
    } else {
      fit.variances.row(c) = global_var;
    }
  }
  fit.weights /= static_cast<double>(n);

  diff::Rng rng(diff::mix_seed(opts.seed, 0xe3));
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  const double empty_mass = 1e-8;

  double previous = -std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int it = 0; it < opts.max_iter; ++it) {
    // E-step.
    Matrix logp = log_weighted_density(points, fit);
    Eigen::VectorXd lse = logsumexp_rows(logp);
    const double ll = lse.mean();
    fit.log_likelihood.push_back(ll);
    if (!std::isfinite(ll)) throw diff::NumericalError("fit_gmm_em: non-finite log-likelihood");
    if (it > 0 && std::abs(ll - previous) <= opts.tol * std::max(1.0, std::abs(previous))) {
      converged = true;
      break;
    }
    previous = ll;
    Matrix resp = (logp.colwise() - lse).array().exp().matrix();

    // M-step.
    Eigen::RowVectorXd mass = resp.colwise().sum();
    for (int c = 0; c < k; ++c) {
      if (mass(c) < empty_mass * static_cast<double>(n)) {
        if (fit.reinitialisations < opts.max_reinit) {
          ++fit.reinitialisations;
          fit.means.row(c) = points.row(pick(rng));
          fit.variances.row(c) = global_var;
          fit.weights(c) = 1.0 / k;
        } else {
          fit.weights(c) = std::max(mass(c) / static_cast<double>(n), 1e-12);
        }
        continue;
      }
      Eigen::RowVectorXd mean = (resp.col(c).transpose() * points) / mass(c);
      Matrix diff = points.rowwise() - mean;
      Eigen::RowVectorXd var = (resp.col(c).transpose() * diff.array().square().matrix()) / mass(c);
      fit.means.row(c) = mean;
      fit.variances.row(c) = var.cwiseMax(opts.var_floor);
      fit.weights(c) = mass(c) / static_cast<double>(n);
    }
    fit.weights /= fit.weights.sum();
  }
  if (!converged) fit.log_likelihood.push_back(gmm_log_likelihood(points, fit));
  return fit;
}

void set_prior(GmmPrior& prior, const GmmFit& fit) {
  if (fit.means.rows() != prior.mu.value.rows() || fit.means.cols() != prior.mu.value.cols()) {
    throw diff::ShapeError("set_prior", "fit " + diff::shape_string(fit.means) + " vs prior " +
                                            diff::shape_string(prior.mu.value));
  }
  prior.logits_pi.value = fit.weights.array().log().matrix();
  prior.mu.value = fit.means;
  prior.log_var.value = fit.variances.array().log().cwiseMax(kLogVarMin).cwiseMin(kLogVarMax).matrix();
}

}  // namespace lpvdn::vade
