#pragma once

// Global structure model: a VAE whose latent prior is a trainable diagonal
// Gaussian mixture, together with the networks the joint objective adds on
// top of it (discriminator and locality mapper), autoencoder pretraining and
// EM initialisation of the prior.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lpvdn/diffcore.hpp"

namespace lpvdn::vade {

using diff::Matrix;
using diff::Mlp;
using diff::Parameter;
using diff::Tape;
using diff::Var;

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;
inline constexpr double kReconEps = 1e-7;
inline constexpr double kGammaFloor = 1e-10;

struct Architecture {
  int input_dim = 0;
  int latent_dim = 10;
  int clusters = 10;
  int mapper_out = 10;
  std::vector<int> encoder_hidden{500, 500, 2000};
  std::vector<int> decoder_hidden{2000, 500, 500};
  std::vector<int> discriminator_hidden{256};
  std::vector<int> mapper_hidden{256, 256, 256};

  /// D-...-2J (the last layer carries both heads).
  std::vector<int> encoder_widths() const;
  /// J-...-D.
  std::vector<int> decoder_widths() const;
  /// (J+D)-...-1.
  std::vector<int> discriminator_widths() const;
  /// J-...-J_out.
  std::vector<int> mapper_widths() const;

  /// Throws std::invalid_argument on non-positive sizes.
  void validate() const;
  bool operator==(const Architecture&) const = default;
};

/// Trainable mixture prior: pi = softmax(logits), diagonal covariances.
struct GmmPrior {
  Parameter logits_pi;  // 1 x K
  Parameter mu;         // K x J
  Parameter log_var;    // K x J

  GmmPrior() = default;
  GmmPrior(int k, int j);

  int clusters() const { return static_cast<int>(mu.value.rows()); }
  int latent_dim() const { return static_cast<int>(mu.value.cols()); }
  std::vector<Parameter*> parameters() { return {&logits_pi, &mu, &log_var}; }
};

/// Prior parameters placed on a tape, with log-variances already clamped.
struct PriorVars {
  Var log_pi;   // 1 x K
  Var mu;       // K x J
  Var log_var;  // K x J
};

PriorVars prior_vars(Tape& tape, GmmPrior& prior);

struct EncoderOutput {
  Var mu;       // B x J
  Var log_var;  // B x J, clamped to [-10, 10]
};

class LpvdnModel {
 public:
  LpvdnModel() = default;
  LpvdnModel(const Architecture& arch, std::uint64_t seed);

  Architecture arch;
  Mlp encoder;
  Mlp decoder;
  Mlp discriminator;
  Mlp mapper;
  GmmPrior prior;

  /// Canonical order: encoder, decoder, prior, discriminator, mapper.
  std::vector<Parameter*> parameters();
  std::vector<Parameter*> autoencoder_parameters();

  /// Tape-free mu_tilde for every row of x.
  Matrix encode_means(const Matrix& x) const;
  /// Tape-free o' = f_lp(mu_tilde).
  Matrix embed(const Matrix& x) const;
};

EncoderOutput encode(Tape& tape, Mlp& encoder, const Var& x);

/// z = mu + exp(log_var / 2) * epsilon.
Var sample_latent(const EncoderOutput& enc, const Matrix& epsilon);

/// Sigmoid decoder output clamped to [1e-7, 1 - 1e-7].
Var decode(Tape& tape, Mlp& decoder, const Var& z);

/// B x K matrix of sum_j (z_j - mu_cj)^2 / sigma_cj^2, evaluated directly
/// (no expansion) so that it stays accurate for tight components.
Var mahalanobis_sq(const Var& z, const Var& mu, const Var& log_var);

/// log pi_c + log N(z; mu_c, diag sigma_c^2), B x K.
Var log_joint(const Var& z, const PriorVars& prior);

/// q(c|z), B x K, floored at 1e-10 and renormalised. Differentiable in z.
Var responsibilities(const Var& z, const PriorVars& prior);

/// Tape-free responsibilities for diagnostics and tests.
Matrix responsibilities(const Matrix& z, const GmmPrior& prior);

struct GlobalLoss {
  Var per_sample;  // B x 1
  Var mean;        // 1 x 1
  // Batch means of each term, for logging and divergence diagnostics.
  double reconstruction = 0.0;
  double gaussian_kl = 0.0;
  double mixture_kl = 0.0;
  double entropy = 0.0;
};

/// Per-sample negative ELBO: BCE + 1/2 sum_c gamma_c sum_j (...) +
/// sum_c gamma_c log(gamma_c / pi_c) - 1/2 sum_j (1 + log sigma~^2).
/// Throws NumericalError naming the first non-finite term.
GlobalLoss global_loss(const Var& x, const EncoderOutput& enc, const Var& mu_x, const Var& gamma,
                       const PriorVars& prior);

/// Every node the global term needs for one batch.
struct GlobalForward {
  Var x;
  EncoderOutput enc;
  Var z;
  Var mu_x;
  PriorVars prior;
  Var gamma;
  GlobalLoss loss;
};

GlobalForward forward_global(Tape& tape, LpvdnModel& model, const Matrix& x, const Matrix& epsilon);

// ---------------------------------------------------------------------------
// Prior initialisation.

struct EmOptions {
  int max_iter = 200;
  double tol = 1e-8;
  double var_floor = 1e-6;
  int max_reinit = 5;
  int kmeans_restarts = 10;
  std::uint64_t seed = 0;
};

struct GmmFit {
  Eigen::RowVectorXd weights;  // 1 x K
  Matrix means;                // K x J
  Matrix variances;            // K x J
  /// Mean per-sample log-likelihood after each E-step.
  std::vector<double> log_likelihood;
  int reinitialisations = 0;
};

/// Diagonal-covariance EM started from a k-means++ partition. A component
/// that loses all its mass is re-placed on a random point (at most
/// max_reinit times overall; after that it keeps its previous parameters).
GmmFit fit_gmm_em(const Matrix& points, int k, const EmOptions& opts = {});

/// Per-sample mean log-likelihood of a fitted mixture.
double gmm_log_likelihood(const Matrix& points, const GmmFit& fit);

void set_prior(GmmPrior& prior, const GmmFit& fit);

struct PretrainOptions {
  int epochs = 10;
  int batch_size = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  EmOptions em;
  std::function<void(int epoch, double loss)> on_epoch;
};

struct PretrainResult {
  std::vector<double> epoch_loss;
  GmmFit gmm;
};

/// Autoencoder training with BCE and z = mu_tilde, then an EM fit on all
/// mu_tilde that initialises the prior and the log-variance head. Optimiser
/// state of the trained parameters is reset afterwards.
PretrainResult pretrain(LpvdnModel& model, const Matrix& x, const PretrainOptions& opts);

/// Zeroes the log-variance weights of the encoder's output layer and sets
/// their bias to log(min_c var_c), so training starts with every posterior
/// variance at or below the prior variances.
void init_log_var_head(LpvdnModel& model, const GmmFit& gmm);

void reset_optimizer_state(std::vector<Parameter*> params);

}  // namespace lpvdn::vade
