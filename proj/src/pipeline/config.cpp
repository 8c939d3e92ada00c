#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lpvdn/pipeline.hpp"

namespace lpvdn::pipeline {
namespace {

using json = nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown key \"" + key + "\" in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

// Unsigned fields reject negative and fractional numbers explicitly.
void read_u64(const json& j, const char* key, std::uint64_t& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_unsigned()) throw ConfigError(where + "." + key + " must be a non-negative integer");
  out = v.get<std::uint64_t>();
}

void read_int(const json& j, const char* key, int& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(where + "." + key + " must be an integer");
  out = v.get<int>();
}

void read_double(const json& j, const char* key, double& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
  out = v.get<double>();
}

DatasetSpec parse_dataset(const json& j) {
  const std::string where = "dataset";
  reject_unknown(j,
                 {"kind", "name", "k", "dim", "n_per_cluster", "separation", "seed", "images", "labels", "manifest",
                  "noise_sigma", "noise_seed"},
                 where);
  DatasetSpec d;
  read(j, "kind", d.kind, where);
  read(j, "name", d.name, where);
  read_int(j, "k", d.k, where);
  read_int(j, "dim", d.dim, where);
  read_int(j, "n_per_cluster", d.n_per_cluster, where);
  read_double(j, "separation", d.separation, where);
  read_u64(j, "seed", d.seed, where);
  read(j, "images", d.images, where);
  read(j, "labels", d.labels, where);
  read(j, "manifest", d.manifest, where);
  read_double(j, "noise_sigma", d.noise_sigma, where);
  read_u64(j, "noise_seed", d.noise_seed, where);
  return d;
}

json dataset_json(const DatasetSpec& d) {
  json j;
  j["kind"] = d.kind;
  if (!d.name.empty()) j["name"] = d.name;
  if (d.kind == "synthetic") {
    j["k"] = d.k;
    j["dim"] = d.dim;
    j["n_per_cluster"] = d.n_per_cluster;
    j["separation"] = d.separation;
    j["seed"] = d.seed;
  } else if (d.kind == "idx") {
    j["images"] = d.images;
    j["labels"] = d.labels;
  } else {
    j["manifest"] = d.manifest;
  }
  if (d.noise_sigma != 0.0) {
    j["noise_sigma"] = d.noise_sigma;
    j["noise_seed"] = d.noise_seed;
  }
  return j;
}

std::string location(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

bool TrainConfig::mi_enabled() const { return std::find(ablation.begin(), ablation.end(), "mi") == ablation.end(); }
bool TrainConfig::lp_enabled() const { return std::find(ablation.begin(), ablation.end(), "lp") == ablation.end(); }

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (k < 1) fail("k must be >= 1");
  if (latent_dim < 1) fail("latent_dim must be >= 1");
  if (out_dim < 1) fail("out_dim must be >= 1");
  if (!(alpha0 >= 0.0) || !std::isfinite(alpha0)) fail("alpha0 must be >= 0");
  if (!(alpha1 >= 0.0) || !std::isfinite(alpha1)) fail("alpha1 must be >= 0");
  if (!(perplexity > 1.0)) fail("perplexity must exceed 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (lp_enabled() && batch_size < 3) fail("batch_size must be >= 3 when the locality term is enabled");
  if (epochs < 0) fail("epochs must be >= 0");
  if (pretrain_epochs < 0) fail("pretrain_epochs must be >= 0");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(lr_decay.factor > 0.0)) fail("lr_decay.factor must be positive");
  if (lr_decay.interval < 1) fail("lr_decay.interval must be >= 1");
  for (const auto& a : ablation) {
    if (a != "mi" && a != "lp") fail("ablation entries must be \"mi\" or \"lp\", got \"" + a + "\"");
  }
  const auto& d = dataset;
  if (d.kind == "synthetic") {
    if (d.k < 1 || d.dim < 2 || d.n_per_cluster < 1 || !(d.separation > 0.0)) {
      fail("synthetic dataset needs k >= 1, dim >= 2, n_per_cluster >= 1, separation > 0");
    }
  } else if (d.kind == "idx") {
    if (d.images.empty()) fail("idx dataset needs at least one images file");
    if (!d.labels.empty() && d.labels.size() != d.images.size()) fail("idx dataset: labels must match images");
  } else if (d.kind == "matrix") {
    if (d.manifest.empty()) fail("matrix dataset needs a manifest");
  } else {
    fail("dataset.kind must be synthetic, idx or matrix");
  }
  if (!(d.noise_sigma >= 0.0)) fail("dataset.noise_sigma must be >= 0");
}

TrainConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config JSON at " + location(text, e.byte) + ": " + e.what());
  }
  const std::string where = "config";
  reject_unknown(j,
                 {"dataset", "k", "latent_dim", "out_dim", "alpha0", "alpha1", "perplexity", "batch_size", "epochs",
                  "lr", "lr_decay", "seed", "ablation", "pretrain_epochs"},
                 where);
  if (!j.contains("dataset")) throw ConfigError("config.dataset is required");
  if (!j.contains("k")) throw ConfigError("config.k is required");
  TrainConfig c;
  c.dataset = parse_dataset(j.at("dataset"));
  read_int(j, "k", c.k, where);
  read_int(j, "latent_dim", c.latent_dim, where);
  read_int(j, "out_dim", c.out_dim, where);
  read_double(j, "alpha0", c.alpha0, where);
  read_double(j, "alpha1", c.alpha1, where);
  read_double(j, "perplexity", c.perplexity, where);
  read_int(j, "batch_size", c.batch_size, where);
  read_int(j, "epochs", c.epochs, where);
  read_double(j, "lr", c.lr, where);
  read_u64(j, "seed", c.seed, where);
  read_int(j, "pretrain_epochs", c.pretrain_epochs, where);
  if (j.contains("lr_decay")) {
    const json& d = j.at("lr_decay");
    reject_unknown(d, {"factor", "interval"}, "lr_decay");
    read_double(d, "factor", c.lr_decay.factor, "lr_decay");
    read_int(d, "interval", c.lr_decay.interval, "lr_decay");
  }
  if (j.contains("ablation")) {
    std::vector<std::string> a;
    read(j, "ablation", a, where);
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    c.ablation = a;
  }
  c.validate();
  return c;
}

TrainConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_json(const TrainConfig& c) {
  json j;
  j["dataset"] = dataset_json(c.dataset);
  j["k"] = c.k;
  j["latent_dim"] = c.latent_dim;
  j["out_dim"] = c.out_dim;
  j["alpha0"] = c.alpha0;
  j["alpha1"] = c.alpha1;
  j["perplexity"] = c.perplexity;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["lr"] = c.lr;
  j["lr_decay"] = {{"factor", c.lr_decay.factor}, {"interval", c.lr_decay.interval}};
  j["seed"] = c.seed;
  j["ablation"] = c.ablation;
  j["pretrain_epochs"] = c.pretrain_epochs;
  return j.dump();
}

std::string config_hash(const TrainConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> parse_ablation(const std::string& text) {
  std::vector<std::string> out;
  if (text.empty() || text == "none") return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item != "mi" && item != "lp") throw ConfigError("ablation terms are mi and lp, got \"" + item + "\"");
    out.push_back(item);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::string> ablation_for_variant(const std::string& variant) {
  if (variant == "full") return {};
  if (variant == "lg+lp") return {"mi"};
  if (variant == "lg+mi") return {"lp"};
  if (variant == "lg") return {"lp", "mi"};
  throw ConfigError("unknown variant \"" + variant + "\" (full, lg+lp, lg+mi, lg)");
}

std::string variant_name(std::span<const std::string> ablation) {
  const bool mi = std::find(ablation.begin(), ablation.end(), "mi") == ablation.end();
  const bool lp = std::find(ablation.begin(), ablation.end(), "lp") == ablation.end();
  if (mi && lp) return "full";
  if (lp) return "lg+lp";
  if (mi) return "lg+mi";
  return "lg";
}

data::DatasetBundle load_dataset(const DatasetSpec& spec, const fs::path& base_dir) {
  data::DatasetBundle b;
  if (spec.kind == "synthetic") {
    b = data::make_synthetic_gmm(spec.k, spec.dim, spec.n_per_cluster, spec.separation, spec.seed);
  } else if (spec.kind == "idx") {
    std::vector<data::DatasetBundle> parts;
    for (std::size_t i = 0; i < spec.images.size(); ++i) {
      std::optional<fs::path> labels;
      if (!spec.labels.empty()) labels = resolve(base_dir, spec.labels[i]);
      parts.push_back(data::load_idx(resolve(base_dir, spec.images[i]), labels));
    }
    b = data::concatenate(parts, "idx");
  } else if (spec.kind == "matrix") {
    b = data::load_matrix(resolve(base_dir, spec.manifest));
  } else {
    throw ConfigError("dataset.kind must be synthetic, idx or matrix");
  }
  if (!spec.name.empty()) b.name = spec.name;
  if (spec.noise_sigma > 0.0) b.x = data::corrupt_gaussian(b.x, spec.noise_sigma, spec.noise_seed);
  b.validate();
  return b;
}

double learning_rate(const TrainConfig& config, int epoch) {
  return config.lr * std::pow(config.lr_decay.factor, epoch / config.lr_decay.interval);
}

}  // namespace lpvdn::pipeline
