#include <bit>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "lpvdn/pipeline.hpp"

namespace lpvdn::pipeline {
namespace {

using json = nlohmann::json;

constexpr const char* kFormat = "lpvdn-checkpoint-1";

json architecture_json(const vade::Architecture& a) {
  return {{"input_dim", a.input_dim},
          {"latent_dim", a.latent_dim},
          {"clusters", a.clusters},
          {"mapper_out", a.mapper_out},
          {"encoder_hidden", a.encoder_hidden},
          {"decoder_hidden", a.decoder_hidden},
          {"discriminator_hidden", a.discriminator_hidden},
          {"mapper_hidden", a.mapper_hidden}};
}

vade::Architecture architecture_from(const json& j) {
  vade::Architecture a;
  a.input_dim = j.at("input_dim").get<int>();
  a.latent_dim = j.at("latent_dim").get<int>();
  a.clusters = j.at("clusters").get<int>();
  a.mapper_out = j.at("mapper_out").get<int>();
  a.encoder_hidden = j.at("encoder_hidden").get<std::vector<int>>();
  a.decoder_hidden = j.at("decoder_hidden").get<std::vector<int>>();
  a.discriminator_hidden = j.at("discriminator_hidden").get<std::vector<int>>();
  a.mapper_hidden = j.at("mapper_hidden").get<std::vector<int>>();
  return a;
}

// Byte order is spelled out with shifts so the format is host independent.
void put_le(std::vector<char>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const fs::path& dir, vade::LpvdnModel& model, const TrainConfig& config) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = kFormat;
  manifest["architecture"] = architecture_json(model.arch);
  manifest["J"] = model.arch.latent_dim;
  manifest["K"] = model.arch.clusters;
  manifest["ablation"] = config.ablation;
  manifest["config_hash"] = config_hash(config);
  manifest["config"] = json::parse(to_json(config));
  manifest["blob"] = "checkpoint.bin";
  json params = json::array();
  std::vector<char> blob;
  for (auto* p : model.parameters()) {
    params.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
    for (Eigen::Index i = 0; i < p->value.size(); ++i) put_le(blob, p->value.data()[i]);
  }
  manifest["parameters"] = params;

  std::ofstream bin(dir / "checkpoint.bin", std::ios::binary);
  bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!bin) throw std::runtime_error("cannot write " + (dir / "checkpoint.bin").string());
  std::ofstream(dir / "checkpoint.json") << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "checkpoint.json");
  if (!in) throw std::runtime_error("cannot open " + (dir / "checkpoint.json").string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error((dir / "checkpoint.json").string() + ": " + e.what());
  }
  if (manifest.value("format", "") != kFormat) throw std::runtime_error("unrecognised checkpoint format");

  Checkpoint ck;
  ck.config = parse_config(manifest.at("config").dump());
  ck.config_hash = manifest.at("config_hash").get<std::string>();
  ck.model = vade::LpvdnModel(architecture_from(manifest.at("architecture")), 0);

  std::ifstream bin(dir / manifest.at("blob").get<std::string>(), std::ios::binary);
  std::vector<char> blob{std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>()};
  const auto& entries = manifest.at("parameters");
  auto params = ck.model.parameters();
  if (entries.size() != params.size()) throw std::runtime_error("checkpoint parameter count mismatch");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto& e = entries[i];
    if (e.at("name").get<std::string>() != p.name || e.at("rows").get<Eigen::Index>() != p.value.rows() ||
        e.at("cols").get<Eigen::Index>() != p.value.cols()) {
      throw std::runtime_error("checkpoint parameter " + std::to_string(i) + " does not match " + p.name);
    }
    const auto bytes = static_cast<std::size_t>(p.value.size()) * 8;
    if (offset + bytes > blob.size()) throw std::runtime_error("checkpoint blob is truncated");
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      p.value.data()[k] = get_le(blob.data() + offset + static_cast<std::size_t>(k) * 8);
    }
    offset += bytes;
  }
  if (offset != blob.size()) throw std::runtime_error("checkpoint blob has trailing bytes");
  return ck;
}

}  // namespace lpvdn::pipeline
