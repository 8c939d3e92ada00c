#include <numeric>
#include <string>

#include "lpvdn/midisc.hpp"

namespace lpvdn::midisc {

Var score(Tape& tape, Mlp& discriminator, const Var& x, const Var& z) {
  if (x.rows() != z.rows()) {
    throw diff::ShapeError("score", "x has " + std::to_string(x.rows()) + " rows, z has " + std::to_string(z.rows()));
  }
  if (discriminator.input_dim() != z.cols() + x.cols() || discriminator.output_dim() != 1) {
    throw diff::ShapeError("score", "discriminator expects " + std::to_string(discriminator.input_dim()) +
                                        " inputs, got J + D = " + std::to_string(z.cols() + x.cols()));
  }
  return discriminator.forward(tape, diff::concat_cols(z, x));
}

std::vector<int> derangement(int b, diff::Rng& rng) {
  if (b < 1) throw std::invalid_argument("derangement: b must be >= 1");
  std::vector<int> p(static_cast<std::size_t>(b));
  std::iota(p.begin(), p.end(), 0);
  for (int i = b - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i - 1);
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(pick(rng))]);
  }
  return p;
}

bool is_derangement(std::span<const int> perm) {
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const int j = perm[i];
    if (j < 0 || static_cast<std::size_t>(j) >= perm.size() || seen[static_cast<std::size_t>(j)]) return false;
    if (perm.size() >= 2 && static_cast<std::size_t>(j) == i) return false;
    seen[static_cast<std::size_t>(j)] = true;
  }
  return true;
}

Var mi_loss_from_logits(const Var& positive, const Var& negative) {
  return diff::mean(diff::softplus(-positive) + diff::softplus(negative));
}

MiLoss mi_loss(Tape& tape, Mlp& discriminator, const Var& x, const Var& z, std::span<const int> neg_perm) {
  if (static_cast<Eigen::Index>(neg_perm.size()) != x.rows() || !is_derangement(neg_perm)) {
    throw std::invalid_argument("mi_loss: negative permutation must be a derangement of the batch");
  }
  MiLoss out;
  out.positive = score(tape, discriminator, x, z);
  out.negative = score(tape, discriminator, diff::gather_rows(x, neg_perm), z);
  out.value = mi_loss_from_logits(out.positive, out.negative);
  return out;
}

}  // namespace lpvdn::midisc
