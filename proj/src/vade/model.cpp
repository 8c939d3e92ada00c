#include <cmath>
#include <numbers>
#include <stdexcept>

#include "lpvdn/vade.hpp"

namespace lpvdn::vade {
namespace {

std::vector<int> chain(int first, const std::vector<int>& hidden, int last) {
  std::vector<int> w{first};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(last);
  return w;
}

}  // namespace

std::vector<int> Architecture::encoder_widths() const { return chain(input_dim, encoder_hidden, 2 * latent_dim); }
std::vector<int> Architecture::decoder_widths() const { return chain(latent_dim, decoder_hidden, input_dim); }
std::vector<int> Architecture::discriminator_widths() const {
  return chain(latent_dim + input_dim, discriminator_hidden, 1);
}
std::vector<int> Architecture::mapper_widths() const { return chain(latent_dim, mapper_hidden, mapper_out); }

void Architecture::validate() const {
  if (input_dim <= 0) throw std::invalid_argument("architecture: input_dim must be positive");
  if (latent_dim <= 0) throw std::invalid_argument("architecture: latent_dim must be positive");
  if (clusters <= 0) throw std::invalid_argument("architecture: clusters must be positive");
  if (mapper_out <= 0) throw std::invalid_argument("architecture: mapper_out must be positive");
  for (const auto* layers : {&encoder_hidden, &decoder_hidden, &discriminator_hidden, &mapper_hidden}) {
    for (int w : *layers) {
      if (w <= 0) throw std::invalid_argument("architecture: hidden widths must be positive");
    }
  }
}

GmmPrior::GmmPrior(int k, int j)
    : logits_pi("prior.logits_pi", Matrix::Zero(1, k)),
      mu("prior.mu", Matrix::Zero(k, j)),
      log_var("prior.log_var", Matrix::Zero(k, j)) {}

PriorVars prior_vars(Tape& tape, GmmPrior& prior) {
  return {diff::log_softmax_rows(tape.param(prior.logits_pi)), tape.param(prior.mu),
          diff::clamp(tape.param(prior.log_var), kLogVarMin, kLogVarMax)};
}

LpvdnModel::LpvdnModel(const Architecture& a, std::uint64_t seed) : arch(a) {
  arch.validate();
  // One stream in a fixed order: changing the mapper leaves the other nets' init intact.
  diff::Rng rng(seed);
  encoder = Mlp("encoder", arch.encoder_widths(), diff::Activation::none, rng);
  decoder = Mlp("decoder", arch.decoder_widths(), diff::Activation::sigmoid, rng);
  discriminator = Mlp("discriminator", arch.discriminator_widths(), diff::Activation::none, rng);
  mapper = Mlp("mapper", arch.mapper_widths(), diff::Activation::none, rng);
  prior = GmmPrior(arch.clusters, arch.latent_dim);
}

std::vector<Parameter*> LpvdnModel::parameters() {
  std::vector<Parameter*> out;
  for (auto* p : encoder.parameters()) out.push_back(p);
  for (auto* p : decoder.parameters()) out.push_back(p);
  for (auto* p : prior.parameters()) out.push_back(p);
  for (auto* p : discriminator.parameters()) out.push_back(p);
  for (auto* p : mapper.parameters()) out.push_back(p);
  return out;
}

std::vector<Parameter*> LpvdnModel::autoencoder_parameters() {
  std::vector<Parameter*> out = encoder.parameters();
  for (auto* p : decoder.parameters()) out.push_back(p);
  return out;
}

Matrix LpvdnModel::encode_means(const Matrix& x) const {
  return encoder.predict(x).leftCols(arch.latent_dim);
}

Matrix LpvdnModel::embed(const Matrix& x) const { return mapper.predict(encode_means(x)); }

EncoderOutput encode(Tape& tape, Mlp& encoder, const Var& x) {
  Var h = encoder.forward(tape, x);
  const Eigen::Index j = h.cols() / 2;
  return {diff::slice_cols(h, 0, j), diff::clamp(diff::slice_cols(h, j, j), kLogVarMin, kLogVarMax)};
}

Var sample_latent(const EncoderOutput& enc, const Matrix& epsilon) {
  if (epsilon.rows() != enc.mu.rows() || epsilon.cols() != enc.mu.cols()) {
    throw diff::ShapeError("sample_latent", "epsilon " + diff::shape_string(epsilon) + " vs mu " +
                                                diff::shape_string(enc.mu.value()));
  }
  Var eps = enc.mu.tape().constant(epsilon);
  return enc.mu + diff::exp(0.5 * enc.log_var) * eps;
}

Var decode(Tape& tape, Mlp& decoder, const Var& z) {
  return diff::clamp(decoder.forward(tape, z), kReconEps, 1.0 - kReconEps);
}

Var mahalanobis_sq(const Var& z, const Var& mu, const Var& log_var) {
  const Matrix& vz = z.value();
  const Matrix& vm = mu.value();
  const Matrix& vl = log_var.value();
  if (vz.cols() != vm.cols() || vm.rows() != vl.rows() || vm.cols() != vl.cols()) {
    throw diff::ShapeError("mahalanobis_sq", "z " + diff::shape_string(vz) + ", mu " + diff::shape_string(vm) +
                                                 ", log_var " + diff::shape_string(vl));
  }
  const Eigen::Index b = vz.rows();
  const Eigen::Index k = vm.rows();
  Matrix inv = (-vl.array()).exp().matrix();
  Matrix out(b, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Matrix diff = vz.rowwise() - vm.row(c);
    out.col(c) = diff.array().square().matrix() * inv.row(c).transpose();
  }
  return z.tape().record(
      "mahalanobis_sq", std::move(out), {z, mu, log_var},
      [z, mu, log_var, inv](Tape& t, const Matrix& g, const Matrix&) {
        const Matrix& vz = z.value();
        const Matrix& vm = mu.value();
        Matrix gz = Matrix::Zero(vz.rows(), vz.cols());
        Matrix gm(vm.rows(), vm.cols());
        Matrix gl(vm.rows(), vm.cols());
        for (Eigen::Index c = 0; c < vm.rows(); ++c) {
          Matrix diff = vz.rowwise() - vm.row(c);
          // d/dz of (z - mu)^2 / v, weighted by the adjoint of column c.
          Matrix scaled = ((diff.array().rowwise() * inv.row(c).array()).colwise() * g.col(c).array()).matrix();
          gz += 2.0 * scaled;
          gm.row(c) = -2.0 * scaled.colwise().sum();
          gl.row(c) = -(diff.array() * scaled.array()).colwise().sum();
        }
        t.accumulate(z, gz);
        t.accumulate(mu, gm);
        t.accumulate(log_var, gl);
      });
}

Var log_joint(const Var& z, const PriorVars& prior) {
  const double j = static_cast<double>(z.cols());
  Var log_det = diff::transpose(diff::row_sum(prior.log_var));  // 1 x K
  Var quad = mahalanobis_sq(z, prior.mu, prior.log_var);
  return prior.log_pi - 0.5 * (quad + log_det + j * std::log(2.0 * std::numbers::pi));
}

Var responsibilities(const Var& z, const PriorVars& prior) {
  Var gamma = diff::clamp_min(diff::exp(diff::log_softmax_rows(log_joint(z, prior))), kGammaFloor);
  return gamma / diff::row_sum(gamma);
}

Matrix responsibilities(const Matrix& z, const GmmPrior& prior) {
  const Matrix& mu = prior.mu.value;
  const Matrix lv = prior.log_var.value.cwiseMax(kLogVarMin).cwiseMin(kLogVarMax);
  const Eigen::RowVectorXd logits = prior.logits_pi.value.row(0);
  const double log_norm = logits.maxCoeff() + std::log((logits.array() - logits.maxCoeff()).exp().sum());
  const double j = static_cast<double>(z.cols());
  Matrix logp(z.rows(), mu.rows());
  for (Eigen::Index c = 0; c < mu.rows(); ++c) {
    Matrix diff = z.rowwise() - mu.row(c);
    Eigen::VectorXd quad = diff.array().square().matrix() * (-lv.row(c).array()).exp().matrix().transpose();
    logp.col(c) = (logits(c) - log_norm - 0.5 * (lv.row(c).sum() + j * std::log(2.0 * std::numbers::pi))) -
                  0.5 * quad.array();
  }
  Matrix gamma(z.rows(), mu.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = logp.row(i).maxCoeff();
    gamma.row(i) = (logp.row(i).array() - m).exp();
    gamma.row(i) /= gamma.row(i).sum();
    gamma.row(i) = gamma.row(i).cwiseMax(kGammaFloor);
    gamma.row(i) /= gamma.row(i).sum();
  }
  return gamma;
}

GlobalForward forward_global(Tape& tape, LpvdnModel& model, const Matrix& x, const Matrix& epsilon) {
  GlobalForward f;
  f.x = tape.constant(x);
  f.enc = encode(tape, model.encoder, f.x);
  f.z = sample_latent(f.enc, epsilon);
  f.mu_x = decode(tape, model.decoder, f.z);
  f.prior = prior_vars(tape, model.prior);
  f.gamma = responsibilities(f.z, f.prior);
  f.loss = global_loss(f.x, f.enc, f.mu_x, f.gamma, f.prior);
  return f;
}

}  // namespace lpvdn::vade
