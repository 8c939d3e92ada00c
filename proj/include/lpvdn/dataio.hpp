#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lpvdn/diffcore.hpp"

namespace lpvdn::data {

using diff::Matrix;

/// Samples in rows, every entry in [0, 1]; labels optional.
struct DatasetBundle {
  std::string name;
  Matrix x;
  std::optional<std::vector<int>> labels;

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index dim() const { return x.cols(); }
  int num_classes() const;

  /// Throws DataError when an entry leaves [0, 1] or labels are malformed.
  void validate() const;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class BadMagicError : public DataError {
 public:
  using DataError::DataError;
};
class TruncatedFileError : public DataError {
 public:
  using DataError::DataError;
};
class CountMismatchError : public DataError {
 public:
  using DataError::DataError;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// IDX image file (optionally with its label file); pixels scaled by 1/255,
/// images flattened row-major.
DatasetBundle load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels = {});
std::vector<int> load_idx_labels(const std::filesystem::path& labels);

/// Quantises to bytes with round(255 x).
void write_idx_images(const std::filesystem::path& path, const Matrix& x, int rows, int cols);
void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels);

/// Pre-vectorised matrix: JSON manifest {"n", "dim", "dtype": "f32le",
/// "data"?, "labels"?} next to a headerless little-endian float32 blob.
/// Relative paths resolve against the manifest's directory; "data" defaults
/// to the manifest path with extension ".f32". Labels are an IDX label file.
DatasetBundle load_matrix(const std::filesystem::path& manifest);
void write_matrix(const std::filesystem::path& manifest, const DatasetBundle& bundle);

/// Row-wise concatenation (train + test). Labels survive only if every part has them.
DatasetBundle concatenate(std::span<const DatasetBundle> parts, std::string name);

/// k unit-variance Gaussian blobs whose means are pairwise at least
/// `separation` apart, affinely squashed into [0, 1]. Labels are the
/// generating component; samples are grouped by component.
DatasetBundle make_synthetic_gmm(int k, int dim, int n_per_cluster, double separation, std::uint64_t seed);

/// clamp(x + N(0, sigma^2), 0, 1), i.i.d. per entry.
Matrix corrupt_gaussian(const Matrix& x, double sigma, std::uint64_t seed);

/// A seeded permutation of [0, n) cut into consecutive slices; the final
/// short slice is kept.
std::vector<std::vector<int>> minibatches(Eigen::Index n, int batch_size, std::uint64_t shuffle_seed);
inline std::vector<std::vector<int>> minibatches(const DatasetBundle& bundle, int batch_size,
                                                 std::uint64_t shuffle_seed) {
  return minibatches(bundle.n(), batch_size, shuffle_seed);
}

/// Rows of `x` selected by `rows`.
Matrix gather(const Matrix& x, std::span<const int> rows);

}  // namespace lpvdn::data
