#pragma once

// Robust embedding discriminator: scores (x, z) pairs and turns them into the
// Jensen-Shannon mutual-information loss with in-batch negatives.

#include <span>
#include <vector>

#include "lpvdn/diffcore.hpp"

namespace lpvdn::midisc {

using diff::Matrix;
using diff::Mlp;
using diff::Tape;
using diff::Var;

/// D(x, z) = MLP([z || x]); returns a B x 1 column of logits.
Var score(Tape& tape, Mlp& discriminator, const Var& x, const Var& z);

/// Uniform random cyclic permutation (Sattolo) of [0, b): no fixed points
/// for b >= 2. b = 1 yields {0}.
std::vector<int> derangement(int b, diff::Rng& rng);
bool is_derangement(std::span<const int> perm);

/// mean_i softplus(-pos_i) + softplus(neg_i), i.e. -log sigma(pos) - log(1 - sigma(neg)).
Var mi_loss_from_logits(const Var& positive, const Var& negative);

struct MiLoss {
  Var value;     // 1 x 1
  Var positive;  // B x 1 logits on (x_i, z_i)
  Var negative;  // B x 1 logits on (x_perm(i), z_i)
};

/// Positives pair each z_i with its own x_i; negatives pair z_i with
/// x_{neg_perm[i]}, which must be a derangement when B >= 2.
MiLoss mi_loss(Tape& tape, Mlp& discriminator, const Var& x, const Var& z, std::span<const int> neg_perm);

}  // namespace lpvdn::midisc
