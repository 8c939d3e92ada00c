#pragma once

// Joint training of the three-term objective, configuration, checkpoints,
// evaluation and the experiment drivers built on top of them.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lpvdn/cluster.hpp"
#include "lpvdn/dataio.hpp"
#include "lpvdn/vade.hpp"

namespace lpvdn::pipeline {

using diff::Matrix;
namespace fs = std::filesystem;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetSpec {
  std::string kind = "synthetic";  // synthetic | idx | matrix
  std::string name;
  // synthetic
  int k = 4;
  int dim = 20;
  int n_per_cluster = 500;
  double separation = 10.0;
  std::uint64_t seed = 0;
  // idx: parallel lists, concatenated in order (train then test)
  std::vector<std::string> images;
  std::vector<std::string> labels;
  // matrix
  std::string manifest;
  // optional corruption applied after loading
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;

  bool operator==(const DatasetSpec&) const = default;
};

struct LrDecay {
  double factor = 0.95;
  int interval = 10;
  bool operator==(const LrDecay&) const = default;
};

struct TrainConfig {
  DatasetSpec dataset;
  int k = 10;
  int latent_dim = 10;
  int out_dim = 10;
  double alpha0 = 1.0;
  double alpha1 = 1e-4;
  double perplexity = 30.0;
  int batch_size = 800;
  int epochs = 300;
  double lr = 2e-3;
  LrDecay lr_decay;
  std::uint64_t seed = 0;
  /// Removed terms, a subset of {"mi", "lp"}, kept sorted.
  std::vector<std::string> ablation;
  int pretrain_epochs = 10;

  bool mi_enabled() const;
  bool lp_enabled() const;
  /// Throws ConfigError when an invariant is violated.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Strict JSON parsing: unknown keys and wrong types are ConfigErrors;
/// malformed JSON reports line and column.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const fs::path& path);
std::string to_json(const TrainConfig& config);
/// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string config_hash(const TrainConfig& config);

/// "none" or a comma list of mi / lp; returns the sorted removed-term set.
std::vector<std::string> parse_ablation(const std::string& text);

/// Variant names used by sweeps: full, lg+lp, lg+mi, lg.
std::vector<std::string> ablation_for_variant(const std::string& variant);
std::string variant_name(std::span<const std::string> ablation);

/// Loads (relative paths against base_dir) and applies the configured noise.
data::DatasetBundle load_dataset(const DatasetSpec& spec, const fs::path& base_dir = {});

/// lr0 * factor^floor(epoch / interval), epoch counted from 0.
double learning_rate(const TrainConfig& config, int epoch);

// ---------------------------------------------------------------------------
// Loss composition.

/// Per-batch randomness: one epsilon row per example and the MI negative
/// permutation. The permutation is always drawn so that ablations share
/// the same stream.
struct BatchNoise {
  Matrix epsilon;
  std::vector<int> negatives;
};
BatchNoise draw_batch_noise(diff::Rng& rng, Eigen::Index batch, int latent_dim);

struct LossTerms {
  diff::Var total;
  double global = 0.0;
  std::optional<double> mi;  // empty when the term is disabled or skipped
  std::optional<double> lp;
};

/// mean L_G + alpha0 L_MI + alpha1 L_LP. Disabled terms build no nodes; MI
/// needs B >= 2 and LP needs B >= 3, smaller batches skip them.
/// P is a constant of the step. `fixed_p` replaces the P computed from
/// mu_tilde, which lets finite-difference checks hold it fixed too.
LossTerms total_loss(diff::Tape& tape, vade::LpvdnModel& model, const Matrix& x, const BatchNoise& noise,
                     const TrainConfig& config, const Matrix* fixed_p = nullptr);

/// The high-dimensional affinities total_loss uses for this batch.
Matrix batch_affinities(const Matrix& mu_tilde, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Training and evaluation.

struct RunOptions {
  /// Where checkpoint.*, report.json and train.log go; empty writes nothing.
  fs::path out_dir;
  /// Hidden-layer sizes; dims and cluster count are filled from the config.
  std::optional<vade::Architecture> architecture;
  /// Per-epoch lines are echoed here when set.
  std::ostream* progress = nullptr;
};

struct EpochLog {
  int epoch = 0;
  double global = 0.0;
  std::optional<double> mi;
  std::optional<double> lp;
  double lr = 0.0;
  std::string line() const;
};

struct TrainResult {
  vade::LpvdnModel model;
  cluster::EvalReport report;
  std::vector<EpochLog> log;
  std::vector<double> pretrain_loss;
  bool diverged = false;
  std::string divergence;
};

vade::Architecture architecture_for(const TrainConfig& config, int input_dim,
                                    const std::optional<vade::Architecture>& hidden = {});

TrainResult train(const TrainConfig& config, const data::DatasetBundle& dataset, const RunOptions& options = {});
/// Loads the dataset relative to base_dir first.
TrainResult train(const TrainConfig& config, const RunOptions& options, const fs::path& base_dir = {});

struct EvalOptions {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<std::string> ablation;
  int kmeans_restarts = 10;
};

/// K-means on o' = f_lp(mu_tilde). Without labels only n, dim and the mean
/// embedding norm are reported.
cluster::EvalReport evaluate(const vade::LpvdnModel& model, const data::DatasetBundle& dataset,
                             const EvalOptions& options);
cluster::EvalReport evaluate_embeddings(const Matrix& embeddings, const std::optional<std::vector<int>>& labels,
                                        int k, const EvalOptions& options);

/// argmax_c gamma(c | mu_tilde), for diagnostics.
std::vector<int> responsibility_assignments(const vade::LpvdnModel& model, const Matrix& x);

// ---------------------------------------------------------------------------
// Checkpoints: checkpoint.json (manifest) + checkpoint.bin (little-endian f64).

struct Checkpoint {
  vade::LpvdnModel model;
  TrainConfig config;
  std::string config_hash;
};

void save_checkpoint(const fs::path& dir, vade::LpvdnModel& model, const TrainConfig& config);
Checkpoint load_checkpoint(const fs::path& dir);

// ---------------------------------------------------------------------------
// Experiments.

struct SweepRow {
  double sigma = 0.0;
  std::string variant;
  std::uint64_t seed = 0;
  cluster::EvalReport report;
};

struct SweepOptions {
  std::vector<double> sigmas;
  std::vector<std::string> variants{"full", "lg"};
  std::vector<std::uint64_t> seeds;  // empty: the config seed
  std::optional<vade::Architecture> architecture;
  int jobs = 1;
  std::ostream* progress = nullptr;
};

/// Every (sigma, variant, seed) run in canonical order regardless of jobs.
std::vector<SweepRow> noise_sweep(const TrainConfig& config, const data::DatasetBundle& clean,
                                  const SweepOptions& options);
std::string sweep_csv(std::span<const SweepRow> rows);

enum class EmbeddingKind { mu_tilde, o_prime };
EmbeddingKind parse_embedding_kind(const std::string& text);

Matrix embeddings(const vade::LpvdnModel& model, const Matrix& x, EmbeddingKind which);
/// CSV "index,label,e0,...", full round-trip precision; label empty when absent.
void export_embeddings(const fs::path& path, const Matrix& embeddings, const std::optional<std::vector<int>>& labels);
struct EmbeddingTable {
  Matrix values;
  std::optional<std::vector<int>> labels;
};
EmbeddingTable read_embeddings(const fs::path& path);

}  // namespace lpvdn::pipeline
