#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "lpvdn/locality.hpp"
#include "lpvdn/midisc.hpp"
#include "lpvdn/pipeline.hpp"

namespace lpvdn::pipeline {
namespace {

// Stream ids for mix_seed; each source of randomness gets its own.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kPretrainStream = 1;
constexpr std::uint64_t kEmStream = 2;
constexpr std::uint64_t kNoiseStreamBase = 1'000'003;
constexpr std::uint64_t kShuffleStreamBase = 2'000'003;

std::string format_term(const std::optional<double>& v) {
  if (!v) return "off";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

struct Mean {
  double sum = 0.0;
  double weight = 0.0;
  void add(double v, double w) {
    sum += v * w;
    weight += w;
  }
  std::optional<double> value() const {
    if (weight == 0.0) return std::nullopt;
    return sum / weight;
  }
};

}  // namespace

std::string EpochLog::line() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch=%d L_G=%.6f L_MI=%s L_LP=%s lr=%.6g", epoch, global, format_term(mi).c_str(),
                format_term(lp).c_str(), lr);
  return buf;
}

BatchNoise draw_batch_noise(diff::Rng& rng, Eigen::Index batch, int latent_dim) {
  BatchNoise noise;
  noise.epsilon.resize(batch, latent_dim);
  std::normal_distribution<double> n01;
  for (Eigen::Index i = 0; i < noise.epsilon.size(); ++i) noise.epsilon.data()[i] = n01(rng);
  noise.negatives = midisc::derangement(static_cast<int>(batch), rng);
  return noise;
}

Matrix batch_affinities(const Matrix& mu_tilde, const TrainConfig& config) {
  return locality::high_affinities(mu_tilde, locality::effective_perplexity(config.perplexity, mu_tilde.rows())).p;
}

LossTerms total_loss(diff::Tape& tape, vade::LpvdnModel& model, const Matrix& x, const BatchNoise& noise,
                     const TrainConfig& config, const Matrix* fixed_p) {
  const Eigen::Index b = x.rows();
  vade::GlobalForward g = vade::forward_global(tape, model, x, noise.epsilon);
  LossTerms out;
  out.global = g.loss.mean.scalar();
  diff::Var total = g.loss.mean;
  if (config.mi_enabled() && b >= 2) {
    midisc::MiLoss mi = midisc::mi_loss(tape, model.discriminator, g.x, g.z, noise.negatives);
    out.mi = mi.value.scalar();
    total = total + config.alpha0 * mi.value;
  }
  if (config.lp_enabled() && b >= 3) {
    const Matrix p = fixed_p ? *fixed_p : batch_affinities(g.enc.mu.value(), config);
    diff::Var lp = locality::lp_loss(p, locality::low_affinities(locality::map_points(tape, model.mapper, g.enc.mu)));
    out.lp = lp.scalar();
    total = total + config.alpha1 * lp;
  }
  if (!std::isfinite(total.scalar())) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "non-finite total loss: L_G=%.6g L_MI=%.6g L_LP=%.6g", out.global,
                  out.mi.value_or(0.0), out.lp.value_or(0.0));
    throw diff::NumericalError(buf);
  }
  out.total = total;
  return out;
}

vade::Architecture architecture_for(const TrainConfig& config, int input_dim,
                                    const std::optional<vade::Architecture>& hidden) {
  vade::Architecture a = hidden.value_or(vade::Architecture{});
  a.input_dim = input_dim;
  a.latent_dim = config.latent_dim;
  a.clusters = config.k;
  a.mapper_out = config.out_dim;
  a.validate();
  return a;
}

TrainResult train(const TrainConfig& config, const data::DatasetBundle& dataset, const RunOptions& options) {
  config.validate();
  const Matrix& x = dataset.x;
  const Eigen::Index n = x.rows();
  if (n < config.k) throw ConfigError("dataset has fewer points than clusters");

  TrainResult result;
  result.model = vade::LpvdnModel(architecture_for(config, static_cast<int>(x.cols()), options.architecture),
                                  diff::mix_seed(config.seed, kInitStream));
  vade::LpvdnModel& model = result.model;
  const int batch = static_cast<int>(std::min<Eigen::Index>(config.batch_size, n));

  vade::PretrainOptions pre;
  pre.epochs = config.pretrain_epochs;
  pre.batch_size = batch;
  pre.lr = config.lr;
  pre.seed = diff::mix_seed(config.seed, kPretrainStream);
  pre.em.seed = diff::mix_seed(config.seed, kEmStream);
  if (options.progress) {
    pre.on_epoch = [&](int epoch, double loss) {
      *options.progress << "pretrain epoch=" << epoch << " recon=" << loss << "\n";
    };
  }
  result.pretrain_loss = vade::pretrain(model, x, pre).epoch_loss;

  auto params = model.parameters();
  diff::zero_grad(params);
  for (int epoch = 0; epoch < config.epochs && !result.diverged; ++epoch) {
    const double lr = learning_rate(config, epoch);
    diff::Rng rng(diff::mix_seed(config.seed, kNoiseStreamBase + static_cast<std::uint64_t>(epoch)));
    Mean lg, mi, lp;
    for (const auto& rows :
         data::minibatches(n, batch, diff::mix_seed(config.seed, kShuffleStreamBase + static_cast<std::uint64_t>(epoch)))) {
      const Matrix xb = data::gather(x, rows);
      const BatchNoise noise = draw_batch_noise(rng, xb.rows(), config.latent_dim);
      diff::Tape tape;
      try {
        LossTerms terms = total_loss(tape, model, xb, noise, config);
        tape.backward(terms.total);
        diff::adam_step(params, {.lr = lr});
        const auto w = static_cast<double>(rows.size());
        lg.add(terms.global, w);
        if (terms.mi) mi.add(*terms.mi, w);
        if (terms.lp) lp.add(*terms.lp, w);
      } catch (const diff::NumericalError& e) {
        // adam_step validates every gradient before updating, so the model is still the last finite state.
        result.diverged = true;
        result.divergence = "epoch " + std::to_string(epoch) + ": " + e.what();
        diff::zero_grad(params);
        break;
      }
      diff::zero_grad(params);
    }
    if (result.diverged) break;
    result.log.push_back({epoch, *lg.value(), mi.value(), lp.value(), lr});
    if (options.progress) *options.progress << result.log.back().line() << "\n";
  }

  const std::string hash = config_hash(config);
  if (!result.diverged) {
    result.report = evaluate(model, dataset, {.seed = config.seed, .config_hash = hash, .ablation = config.ablation});
  }
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    save_checkpoint(options.out_dir, model, config);
    std::ofstream log(options.out_dir / "train.log");
    for (const auto& e : result.log) log << e.line() << "\n";
    if (result.diverged) {
      log << "diverged " << result.divergence << "\n";
    } else {
      std::ofstream(options.out_dir / "report.json") << result.report.to_json();
    }
  }
  return result;
}

TrainResult train(const TrainConfig& config, const RunOptions& options, const fs::path& base_dir) {
  config.validate();
  return train(config, load_dataset(config.dataset, base_dir), options);
}

cluster::EvalReport evaluate_embeddings(const Matrix& embeddings, const std::optional<std::vector<int>>& labels,
                                        int k, const EvalOptions& options) {
  cluster::EvalReport report;
  report.seed = options.seed;
  report.config_hash = options.config_hash;
  report.ablation = options.ablation;
  if (labels) {
    auto clusters = cluster::kmeans(embeddings, k, {.n_init = options.kmeans_restarts, .seed = options.seed});
    report.acc = cluster::accuracy(*labels, clusters.assignments);
    report.nmi = cluster::nmi(*labels, clusters.assignments);
    report.ari = cluster::ari(*labels, clusters.assignments);
  } else {
    report.n = embeddings.rows();
    report.dim = embeddings.cols();
    report.embedding_mean_norm = embeddings.rowwise().norm().mean();
  }
  return report;
}

cluster::EvalReport evaluate(const vade::LpvdnModel& model, const data::DatasetBundle& dataset,
                             const EvalOptions& options) {
  if (dataset.dim() != model.arch.input_dim) {
    throw diff::ShapeError("evaluate", "dataset dim " + std::to_string(dataset.dim()) + " vs model input " +
                                           std::to_string(model.arch.input_dim));
  }
  return evaluate_embeddings(model.embed(dataset.x), dataset.labels, model.arch.clusters, options);
}

std::vector<int> responsibility_assignments(const vade::LpvdnModel& model, const Matrix& x) {
  const Matrix gamma = vade::responsibilities(model.encode_means(x), model.prior);
  std::vector<int> out(static_cast<std::size_t>(gamma.rows()));
  for (Eigen::Index i = 0; i < gamma.rows(); ++i) gamma.row(i).maxCoeff(&out[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace lpvdn::pipeline
