#include <algorithm>
#include <cmath>

#include "lpvdn/diffcore.hpp"

namespace lpvdn::diff {

void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

void adam_step(std::span<Parameter* const> params, const AdamOptions& opts) {
  for (const Parameter* p : params) {
    if (!p->grad.allFinite()) throw NumericalError("non-finite gradient in parameter '" + p->name + "'");
  }
  for (Parameter* p : params) {
    p->step_count += 1;
    const double t = static_cast<double>(p->step_count);
    p->moment1 = opts.beta1 * p->moment1 + (1.0 - opts.beta1) * p->grad;
    p->moment2 = opts.beta2 * p->moment2 + (1.0 - opts.beta2) * p->grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(opts.beta1, t);
    const double c2 = 1.0 - std::pow(opts.beta2, t);
    p->value.array() -=
        opts.lr * (p->moment1.array() / c1) / ((p->moment2.array() / c2).sqrt() + opts.eps);
  }
}

double grad_check(const LossFn& loss_fn, std::span<Parameter* const> params, double eps,
                  std::size_t max_coords_per_param, std::uint64_t seed) {
  zero_grad(params);
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto evaluate = [&]() {
    Tape tape;
    return loss_fn(tape).scalar();
  };

  Rng rng(seed);
  double worst = 0.0;
  for (Parameter* p : params) {
    const auto n = static_cast<std::size_t>(p->size());
    std::vector<std::size_t> coords(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    if (max_coords_per_param != 0 && max_coords_per_param < n) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords_per_param);
    }
    for (std::size_t c : coords) {
      double& x = p->value.data()[c];
      const double saved = x;
      x = saved + eps;
      const double up = evaluate();
      x = saved - eps;
      const double down = evaluate();
      x = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad.data()[c];
      worst = std::max(worst, std::abs(analytic - numeric) / std::max(1e-8, std::abs(numeric)));
    }
  }
  return worst;
}

}  // namespace lpvdn::diff
