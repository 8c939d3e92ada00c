// lpvdn command line: data generation, training, evaluation and the
// experiment drivers. Exit codes: 0 ok, 1 config/usage/data error, 2 divergence.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "lpvdn/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace lpvdn;
using pipeline::ConfigError;

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kDiverged = 2;

template <class T>
std::vector<T> split_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v;
    if (!(is >> v) || !is.eof()) throw ConfigError("cannot parse list item \"" + item + "\"");
    out.push_back(v);
  }
  return out;
}

// Dataset paths in a config are relative to the config file. They are made
// absolute here so checkpoints stay usable from any working directory.
void resolve_paths(pipeline::DatasetSpec& d, const fs::path& base) {
  auto fix = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = fs::absolute(base / p).lexically_normal().string();
  };
  for (auto& p : d.images) fix(p);
  for (auto& p : d.labels) fix(p);
  fix(d.manifest);
}

pipeline::TrainConfig config_from_file(const std::string& path) {
  auto cfg = pipeline::load_config(path);
  resolve_paths(cfg.dataset, fs::path(path).parent_path());
  return cfg;
}

std::optional<vade::Architecture> hidden_override(const std::string& hidden) {
  if (hidden.empty()) return std::nullopt;
  vade::Architecture a;
  a.encoder_hidden = split_list<int>(hidden);
  a.decoder_hidden.assign(a.encoder_hidden.rbegin(), a.encoder_hidden.rend());
  return a;
}

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> ablation;
  std::optional<int> epochs;
  std::string out;
  std::string checkpoint;
  std::string hidden;
  std::string which = "o_prime";
  int query_index = 0;
  int k = 10;
  std::string sigmas = "0,0.1,0.2,0.3";
  std::string variants = "full,lg";
  std::string seeds;
  int jobs = 1;
  // make-synthetic
  int clusters = 4;
  int dim = 20;
  int n_per_cluster = 500;
  double separation = 10.0;
  bool quiet = false;
};

pipeline::TrainConfig effective_config(const Args& a) {
  if (a.config.empty()) throw ConfigError("--config is required");
  auto cfg = config_from_file(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.ablation) cfg.ablation = pipeline::parse_ablation(*a.ablation);
  if (a.epochs) cfg.epochs = *a.epochs;
  cfg.validate();
  return cfg;
}

int cmd_make_synthetic(const Args& a) {
  if (a.out.empty()) throw ConfigError("--out is required");
  auto bundle = data::make_synthetic_gmm(a.clusters, a.dim, a.n_per_cluster, a.separation, a.seed.value_or(0));
  if (const auto parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  data::write_matrix(a.out, bundle);
  std::cout << "wrote " << bundle.x.rows() << " x " << bundle.x.cols() << " to " << a.out << "\n";
  return kOk;
}

int cmd_train(const Args& a) {
  const auto cfg = effective_config(a);
  pipeline::RunOptions opts;
  opts.out_dir = a.out;
  opts.architecture = hidden_override(a.hidden);
  opts.progress = a.quiet ? nullptr : &std::cerr;
  auto result = pipeline::train(cfg, opts);
  if (result.diverged) {
    std::cerr << "training diverged: " << result.divergence << "\n";
    return kDiverged;
  }
  std::cout << result.report.to_json() << "\n";
  return kOk;
}

// The checkpoint's dataset unless a config overrides it.
data::DatasetBundle dataset_for(const Args& a, const pipeline::Checkpoint& ck) {
  const auto spec = a.config.empty() ? ck.config.dataset : config_from_file(a.config).dataset;
  return pipeline::load_dataset(spec);
}

int cmd_evaluate(const Args& a) {
  if (a.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const auto ck = pipeline::load_checkpoint(a.checkpoint);
  const auto dataset = dataset_for(a, ck);
  const auto report = pipeline::evaluate(
      ck.model, dataset,
      {.seed = a.seed.value_or(ck.config.seed), .config_hash = ck.config_hash, .ablation = ck.config.ablation});
  std::cout << report.to_json() << "\n";
  if (!a.out.empty()) std::ofstream(a.out) << report.to_json() << "\n";
  return kOk;
}

int cmd_noise_sweep(const Args& a) {
  const auto cfg = effective_config(a);
  pipeline::SweepOptions opts;
  opts.sigmas = split_list<double>(a.sigmas);
  std::stringstream vs(a.variants);
  opts.variants.clear();
  for (std::string v; std::getline(vs, v, ',');) opts.variants.push_back(v);
  opts.seeds = split_list<std::uint64_t>(a.seeds);
  opts.architecture = hidden_override(a.hidden);
  opts.jobs = a.jobs;
  opts.progress = a.quiet ? nullptr : &std::cerr;
  const auto rows = pipeline::noise_sweep(cfg, pipeline::load_dataset(cfg.dataset), opts);
  const auto csv = pipeline::sweep_csv(rows);
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream(a.out) << csv;
  }
  return kOk;
}

int cmd_embed(const Args& a) {
  if (a.checkpoint.empty() || a.out.empty()) throw ConfigError("--checkpoint and --out are required");
  const auto ck = pipeline::load_checkpoint(a.checkpoint);
  const auto dataset = dataset_for(a, ck);
  const auto values = pipeline::embeddings(ck.model, dataset.x, pipeline::parse_embedding_kind(a.which));
  pipeline::export_embeddings(a.out, values, dataset.labels);
  std::cout << "wrote " << values.rows() << " x " << values.cols() << " embeddings to " << a.out << "\n";
  return kOk;
}

int cmd_nearest(const Args& a) {
  if (a.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const auto ck = pipeline::load_checkpoint(a.checkpoint);
  const auto dataset = dataset_for(a, ck);
  if (a.query_index < 0 || a.query_index >= dataset.x.rows()) {
    throw ConfigError("--query-index out of range [0, " + std::to_string(dataset.x.rows()) + ")");
  }
  const auto values = pipeline::embeddings(ck.model, dataset.x, pipeline::parse_embedding_kind(a.which));
  std::printf("rank,index,distance\n");
  int rank = 1;
  for (const auto& nb : cluster::nearest_neighbors(values, a.query_index, a.k)) {
    std::printf("%d,%d,%.9g\n", rank++, nb.index, nb.distance);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lpvdn: deep clustering with a mixture-prior VAE, a mutual-information term and a locality term"};
  app.require_subcommand(1);
  Args a;

  auto add_config = [&](CLI::App* s) {
    s->add_option("--config", a.config, "JSON training config")->check(CLI::ExistingFile);
    s->add_option("--seed", a.seed, "override the config seed");
    s->add_option("--ablation", a.ablation, "removed terms: none, mi, lp or mi,lp");
    s->add_option("--epochs", a.epochs, "override the config epoch count");
    s->add_option("--hidden", a.hidden, "encoder hidden widths, e.g. 500,500,2000 (decoder mirrors)");
    s->add_flag("--quiet", a.quiet, "no per-epoch progress on stderr");
  };

  auto* syn = app.add_subcommand("make-synthetic", "write a Gaussian-blob dataset as a matrix manifest");
  syn->add_option("--k", a.clusters, "number of blobs");
  syn->add_option("--dim", a.dim, "dimension");
  syn->add_option("--n-per-cluster", a.n_per_cluster, "points per blob");
  syn->add_option("--separation", a.separation, "distance scale between blob centres");
  syn->add_option("--seed", a.seed, "generator seed");
  syn->add_option("--out", a.out, "manifest path")->required();

  auto* train = app.add_subcommand("train", "train and write checkpoint, report.json and train.log");
  add_config(train);
  train->add_option("--out", a.out, "run directory");

  auto* eval = app.add_subcommand("evaluate", "k-means on the embeddings of a checkpoint");
  eval->add_option("--checkpoint", a.checkpoint, "run directory")->required();
  eval->add_option("--config", a.config, "evaluate on this config's dataset instead");
  eval->add_option("--seed", a.seed, "k-means seed");
  eval->add_option("--out", a.out, "also write the report here");

  auto* sweep = app.add_subcommand("noise-sweep", "train every (sigma, variant, seed) and tabulate accuracy");
  add_config(sweep);
  sweep->add_option("--sigmas", a.sigmas, "comma list of noise levels");
  sweep->add_option("--variants", a.variants, "comma list from full, lg+lp, lg+mi, lg");
  sweep->add_option("--seeds", a.seeds, "comma list; defaults to the config seed");
  sweep->add_option("--jobs", a.jobs, "concurrent runs");
  sweep->add_option("--out", a.out, "CSV path; stdout when absent");

  auto* embed = app.add_subcommand("embed", "export embeddings as CSV");
  embed->add_option("--checkpoint", a.checkpoint, "run directory")->required();
  embed->add_option("--config", a.config, "embed this config's dataset instead");
  embed->add_option("--which", a.which, "mu_tilde or o_prime");
  embed->add_option("--out", a.out, "CSV path")->required();

  auto* nearest = app.add_subcommand("nearest", "nearest neighbours of one sample in embedding space");
  nearest->add_option("--checkpoint", a.checkpoint, "run directory")->required();
  nearest->add_option("--config", a.config, "search this config's dataset instead");
  nearest->add_option("--query-index", a.query_index, "row of the query sample")->required();
  nearest->add_option("--k", a.k, "neighbour count");
  nearest->add_option("--which", a.which, "mu_tilde or o_prime");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kConfigError;
  }

  try {
    if (*syn) return cmd_make_synthetic(a);
    if (*train) return cmd_train(a);
    if (*eval) return cmd_evaluate(a);
    if (*sweep) return cmd_noise_sweep(a);
    if (*embed) return cmd_embed(a);
    if (*nearest) return cmd_nearest(a);
  } catch (const diff::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kOk;
}
