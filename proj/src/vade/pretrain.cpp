#include <algorithm>

#include "lpvdn/dataio.hpp"
#include "lpvdn/vade.hpp"

namespace lpvdn::vade {

void reset_optimizer_state(std::vector<Parameter*> params) {
  for (auto* p : params) {
    p->moment1.setZero();
    p->moment2.setZero();
    p->step_count = 0;
    p->grad.setZero();
  }
}

void init_log_var_head(LpvdnModel& model, const GmmFit& gmm) {
  auto ps = model.encoder.parameters();
  Parameter& w = *ps[ps.size() - 2];
  Parameter& b = *ps[ps.size() - 1];
  const Eigen::Index j = model.arch.latent_dim;
  // Start every posterior at the tightest fitted component variance. With
  // the untrained head the posterior variance is ~1, which on small-scale
  // latents is orders of magnitude above the fitted component variances and
  // the KL term tears the pretrained clusters apart in the first epochs.
  const Eigen::RowVectorXd avg = gmm.variances.colwise().minCoeff();
  w.value.rightCols(j).setZero();
  b.value.rightCols(j) = avg.array().max(1e-300).log().cwiseMax(kLogVarMin).cwiseMin(kLogVarMax).matrix();
}

PretrainResult pretrain(LpvdnModel& model, const Matrix& x, const PretrainOptions& opts) {
  if (x.cols() != model.arch.input_dim) {
    throw diff::ShapeError("pretrain", "data has " + std::to_string(x.cols()) + " columns, model expects " +
                                           std::to_string(model.arch.input_dim));
  }
  if (opts.epochs < 0) throw std::invalid_argument("pretrain: epochs must be >= 0");
  const int batch = std::clamp<int>(opts.batch_size, 1, static_cast<int>(x.rows()));
  auto params = model.autoencoder_parameters();
  diff::zero_grad(params);
  const diff::AdamOptions adam{.lr = opts.lr};

  PretrainResult result;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    double total = 0.0;
    for (const auto& rows : data::minibatches(x.rows(), batch, diff::mix_seed(opts.seed, epoch))) {
      Tape tape;
      Var xb = tape.constant(data::gather(x, rows));
      EncoderOutput enc = encode(tape, model.encoder, xb);
      Var mu_x = decode(tape, model.decoder, enc.mu);
      Var loss = diff::mean(-diff::row_sum(xb * diff::log(mu_x) + (1.0 - xb) * diff::log(1.0 - mu_x)));
      tape.backward(loss);
      diff::adam_step(params, adam);
      diff::zero_grad(params);
      total += loss.scalar() * static_cast<double>(rows.size());
    }
    result.epoch_loss.push_back(total / static_cast<double>(x.rows()));
    if (opts.on_epoch) opts.on_epoch(epoch, result.epoch_loss.back());
  }
  reset_optimizer_state(params);

  result.gmm = fit_gmm_em(model.encode_means(x), model.arch.clusters, opts.em);
  set_prior(model.prior, result.gmm);
  init_log_var_head(model, result.gmm);
  return result;
}

}  // namespace lpvdn::vade
