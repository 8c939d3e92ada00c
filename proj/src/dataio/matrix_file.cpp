#include <bit>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "lpvdn/dataio.hpp"

namespace lpvdn::data {
namespace {

std::filesystem::path resolve(const std::filesystem::path& manifest, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : manifest.parent_path() / path;
}

}  // namespace

DatasetBundle load_matrix(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open " + manifest.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest.string() + ": " + e.what());
  }
  const auto n = j.at("n").get<std::int64_t>();
  const auto dim = j.at("dim").get<std::int64_t>();
  if (j.value("dtype", std::string("f32le")) != "f32le") throw DataError(manifest.string() + ": dtype must be f32le");
  const auto blob_path = j.contains("data") ? resolve(manifest, j.at("data").get<std::string>())
                                            : std::filesystem::path(manifest).replace_extension(".f32");

  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw DataError("cannot open " + blob_path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(blob), std::istreambuf_iterator<char>()};
  const std::size_t expected = static_cast<std::size_t>(n * dim) * 4;
  if (bytes.size() < expected) throw TruncatedFileError(blob_path.string() + ": expected " + std::to_string(expected) + " bytes");

  DatasetBundle b;
  b.name = manifest.stem().string();
  b.x.resize(n, dim);
  for (Eigen::Index i = 0; i < b.x.size(); ++i) {
    const std::size_t o = static_cast<std::size_t>(i) * 4;
    const std::uint32_t bits = std::uint32_t{bytes[o]} | (std::uint32_t{bytes[o + 1]} << 8) |
                               (std::uint32_t{bytes[o + 2]} << 16) | (std::uint32_t{bytes[o + 3]} << 24);
    b.x.data()[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  if (j.contains("labels") && !j.at("labels").is_null()) {
    auto labels = load_idx_labels(resolve(manifest, j.at("labels").get<std::string>()));
    if (static_cast<std::int64_t>(labels.size()) != n) {
      throw CountMismatchError(manifest.string() + ": " + std::to_string(labels.size()) + " labels for n=" + std::to_string(n));
    }
    b.labels = std::move(labels);
  }
  b.validate();
  return b;
}

void write_matrix(const std::filesystem::path& manifest, const DatasetBundle& bundle) {
  const auto blob_path = std::filesystem::path(manifest).replace_extension(".f32");
  {
    std::ofstream blob(blob_path, std::ios::binary);
    if (!blob) throw DataError("cannot write " + blob_path.string());
    for (Eigen::Index i = 0; i < bundle.x.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(bundle.x.data()[i]));
      const char b[4] = {static_cast<char>(bits), static_cast<char>(bits >> 8), static_cast<char>(bits >> 16),
                         static_cast<char>(bits >> 24)};
      blob.write(b, 4);
    }
  }
  nlohmann::ordered_json j;
  j["n"] = bundle.n();
  j["dim"] = bundle.dim();
  j["dtype"] = "f32le";
  j["data"] = blob_path.filename().string();
  if (bundle.labels) {
    const auto label_path = std::filesystem::path(manifest).replace_extension(".labels.idx1");
    write_idx_labels(label_path, *bundle.labels);
    j["labels"] = label_path.filename().string();
  }
  std::ofstream out(manifest);
  if (!out) throw DataError("cannot write " + manifest.string());
  out << j.dump(2) << "\n";
}

}  // namespace lpvdn::data
