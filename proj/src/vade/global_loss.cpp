#include <cmath>

#include "lpvdn/vade.hpp"

namespace lpvdn::vade {

GlobalLoss global_loss(const Var& x, const EncoderOutput& enc, const Var& mu_x, const Var& gamma,
                       const PriorVars& prior) {
  using namespace diff;

  Var recon = -row_sum(x * log(mu_x) + (1.0 - x) * log(1.0 - mu_x));

  // sum_j (log sigma_c^2 + sigma~^2 / sigma_c^2 + (mu~ - mu_c)^2 / sigma_c^2), B x K.
  Var log_det = transpose(row_sum(prior.log_var));
  Var trace = matmul_nt(exp(enc.log_var), exp(-prior.log_var));
  Var quad = mahalanobis_sq(enc.mu, prior.mu, prior.log_var);
  Var gaussian = 0.5 * row_sum(gamma * (quad + trace + log_det));

  Var mixture = row_sum(gamma * (log(gamma) - prior.log_pi));
  Var entropy = -0.5 * row_sum(1.0 + enc.log_var);

  GlobalLoss out;
  out.per_sample = recon + gaussian + mixture + entropy;
  out.mean = mean(out.per_sample);
  out.reconstruction = recon.value().mean();
  out.gaussian_kl = gaussian.value().mean();
  out.mixture_kl = mixture.value().mean();
  out.entropy = entropy.value().mean();

  const std::pair<const char*, double> terms[] = {{"reconstruction", out.reconstruction},
                                                  {"gaussian_kl", out.gaussian_kl},
                                                  {"mixture_kl", out.mixture_kl},
                                                  {"entropy", out.entropy}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) {
      throw NumericalError(std::string("global loss diverged in term ") + name + " (value " +
                           std::to_string(value) + ")");
    }
  }
  return out;
}

}  // namespace lpvdn::vade
