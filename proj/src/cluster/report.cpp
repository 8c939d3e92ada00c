#include "json.hpp"
#include "lpvdn/cluster.hpp"

namespace lpvdn::cluster {

using ordered_json = nlohmann::ordered_json;

std::string EvalReport::to_json() const {
  ordered_json j;
  if (acc) j["acc"] = *acc;
  if (nmi) j["nmi"] = *nmi;
  if (ari) j["ari"] = *ari;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["ablation"] = ablation;
  if (n) j["n"] = *n;
  if (dim) j["dim"] = *dim;
  if (embedding_mean_norm) j["embedding_mean_norm"] = *embedding_mean_norm;
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
  const ordered_json j = ordered_json::parse(text);
  EvalReport r;
  if (j.contains("acc")) r.acc = j.at("acc").get<double>();
  if (j.contains("nmi")) r.nmi = j.at("nmi").get<double>();
  if (j.contains("ari")) r.ari = j.at("ari").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.ablation = j.at("ablation").get<std::vector<std::string>>();
  if (j.contains("n")) r.n = j.at("n").get<std::int64_t>();
  if (j.contains("dim")) r.dim = j.at("dim").get<std::int64_t>();
  if (j.contains("embedding_mean_norm")) r.embedding_mean_norm = j.at("embedding_mean_norm").get<double>();
  return r;
}

}  // namespace lpvdn::cluster
