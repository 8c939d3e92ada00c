#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>

#include "lpvdn/dataio.hpp"

namespace lpvdn::data {
namespace {

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) throw TruncatedFileError(path.string() + ": truncated IDX header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

}  // namespace

int DatasetBundle::num_classes() const {
  if (!labels || labels->empty()) return 0;
  return *std::max_element(labels->begin(), labels->end()) + 1;
}

void DatasetBundle::validate() const {
  if (x.size() > 0 && ((x.array() < 0.0).any() || (x.array() > 1.0).any() || !x.allFinite())) {
    throw DataError(name + ": sample values must lie in [0, 1]");
  }
  if (labels) {
    if (static_cast<Eigen::Index>(labels->size()) != x.rows()) {
      throw CountMismatchError(name + ": " + std::to_string(labels->size()) + " labels for " +
                               std::to_string(x.rows()) + " samples");
    }
    for (int l : *labels) {
      if (l < 0 || l >= std::max<Eigen::Index>(1, x.rows())) throw DataError(name + ": label out of range");
    }
  }
}

std::vector<int> load_idx_labels(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const std::uint32_t magic = read_be32(bytes, 0, path);
  if (magic != kIdxLabelMagic) throw BadMagicError(path.string() + ": not an IDX label file");
  const std::uint32_t n = read_be32(bytes, 4, path);
  if (bytes.size() < 8 + std::size_t{n}) throw TruncatedFileError(path.string() + ": truncated label data");
  return {bytes.begin() + 8, bytes.begin() + 8 + n};
}

DatasetBundle load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels) {
  const auto bytes = read_all(images);
  const std::uint32_t magic = read_be32(bytes, 0, images);
  if (magic != kIdxImageMagic) throw BadMagicError(images.string() + ": not an IDX image file");
  const std::uint32_t n = read_be32(bytes, 4, images);
  const std::uint32_t rows = read_be32(bytes, 8, images);
  const std::uint32_t cols = read_be32(bytes, 12, images);
  const std::size_t dim = std::size_t{rows} * cols;
  if (bytes.size() < 16 + std::size_t{n} * dim) throw TruncatedFileError(images.string() + ": truncated pixel data");

  DatasetBundle b;
  b.name = images.filename().string();
  b.x.resize(n, static_cast<Eigen::Index>(dim));
  const std::uint8_t* px = bytes.data() + 16;
  for (Eigen::Index i = 0; i < b.x.size(); ++i) b.x.data()[i] = px[i] / 255.0;

  if (labels) {
    auto l = load_idx_labels(*labels);
    if (l.size() != n) {
      throw CountMismatchError(std::to_string(n) + " images in " + images.string() + " but " +
                               std::to_string(l.size()) + " labels in " + labels->string());
    }
    b.labels = std::move(l);
  }
  return b;
}

void write_idx_images(const std::filesystem::path& path, const Matrix& x, int rows, int cols) {
  if (static_cast<Eigen::Index>(rows) * cols != x.cols()) throw DataError("write_idx_images: rows*cols != dim");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(x.rows()));
  put_be32(out, static_cast<std::uint32_t>(rows));
  put_be32(out, static_cast<std::uint32_t>(cols));
  std::vector<char> px(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = std::clamp(x.data()[i], 0.0, 1.0);
    px[static_cast<std::size_t>(i)] = static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  }
  out.write(px.data(), static_cast<std::streamsize>(px.size()));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    if (l < 0 || l > 255) throw DataError("write_idx_labels: label " + std::to_string(l) + " does not fit a byte");
    out.put(static_cast<char>(l));
  }
}

DatasetBundle concatenate(std::span<const DatasetBundle> parts, std::string name) {
  DatasetBundle out;
  out.name = std::move(name);
  if (parts.empty()) return out;
  Eigen::Index rows = 0;
  bool all_labelled = true;
  for (const auto& p : parts) {
    if (p.dim() != parts.front().dim()) throw DataError("concatenate: feature dimensions differ");
    rows += p.n();
    all_labelled = all_labelled && p.labels.has_value();
  }
  out.x.resize(rows, parts.front().dim());
  Eigen::Index at = 0;
  std::vector<int> labels;
  for (const auto& p : parts) {
    out.x.middleRows(at, p.n()) = p.x;
    at += p.n();
    if (all_labelled) labels.insert(labels.end(), p.labels->begin(), p.labels->end());
  }
  if (all_labelled) out.labels = std::move(labels);
  return out;
}

}  // namespace lpvdn::data
