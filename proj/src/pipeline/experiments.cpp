#include <atomic>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "lpvdn/pipeline.hpp"

namespace lpvdn::pipeline {
namespace {

constexpr std::uint64_t kCorruptionStream = 0x5eed;

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(std::numeric_limits<double>::max_digits10);
  ss << v;
  return ss.str();
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : ""; }

}  // namespace

std::vector<SweepRow> noise_sweep(const TrainConfig& config, const data::DatasetBundle& clean,
                                  const SweepOptions& options) {
  if (options.sigmas.empty()) throw ConfigError("noise sweep needs at least one sigma");
  for (double s : options.sigmas) {
    if (!(s >= 0.0)) throw ConfigError("noise sweep sigmas must be >= 0");
  }
  for (const auto& v : options.variants) ablation_for_variant(v);
  const std::vector<std::uint64_t> seeds = options.seeds.empty() ? std::vector<std::uint64_t>{config.seed} : options.seeds;

  std::vector<SweepRow> rows;
  for (double sigma : options.sigmas)
    for (const auto& variant : options.variants)
      for (auto seed : seeds) rows.push_back({sigma, variant, seed, {}});

  std::mutex io;
  auto run = [&](SweepRow& row) {
    TrainConfig c = config;
    c.seed = row.seed;
    c.ablation = ablation_for_variant(row.variant);
    data::DatasetBundle noisy = clean;
    // Same corruption for every variant at a given (sigma, seed): runs are paired.
    noisy.x = data::corrupt_gaussian(clean.x, row.sigma, diff::mix_seed(row.seed, kCorruptionStream));
    row.report = train(c, noisy, {.architecture = options.architecture}).report;
    if (options.progress) {
      std::lock_guard lock(io);
      *options.progress << "sigma=" << row.sigma << " variant=" << row.variant << " seed=" << row.seed
                        << " acc=" << opt_num(row.report.acc) << "\n";
    }
  };

  const int jobs = std::max(1, options.jobs);
  if (jobs == 1) {
    for (auto& row : rows) run(row);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(rows.size());
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < rows.size(); i = next++) {
          try {
            run(rows[i]);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "sigma,variant,seed,acc,nmi,ari\n";
  for (const auto& r : rows) {
    out << num(r.sigma) << "," << r.variant << "," << r.seed << "," << opt_num(r.report.acc) << ","
        << opt_num(r.report.nmi) << "," << opt_num(r.report.ari) << "\n";
  }
  return out.str();
}

EmbeddingKind parse_embedding_kind(const std::string& text) {
  if (text == "mu_tilde") return EmbeddingKind::mu_tilde;
  if (text == "o_prime") return EmbeddingKind::o_prime;
  throw ConfigError("embedding must be mu_tilde or o_prime, got \"" + text + "\"");
}

Matrix embeddings(const vade::LpvdnModel& model, const Matrix& x, EmbeddingKind which) {
  return which == EmbeddingKind::mu_tilde ? model.encode_means(x) : model.embed(x);
}

void export_embeddings(const fs::path& path, const Matrix& values, const std::optional<std::vector<int>>& labels) {
  if (labels && static_cast<Eigen::Index>(labels->size()) != values.rows()) {
    throw std::invalid_argument("export_embeddings: label count does not match rows");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "index,label";
  for (Eigen::Index j = 0; j < values.cols(); ++j) out << ",e" << j;
  out << "\n";
  out.precision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    out << i << ",";
    if (labels) out << (*labels)[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < values.cols(); ++j) out << "," << values(i, j);
    out << "\n";
  }
}

EmbeddingTable read_embeddings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  const auto cols = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',')) - 1;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  bool have_labels = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    std::getline(ss, cell, ',');
    if (cell.empty()) {
      have_labels = false;
    } else {
      labels.push_back(std::stoi(cell));
    }
    std::vector<double> r;
    while (std::getline(ss, cell, ',')) r.push_back(std::stod(cell));
    if (static_cast<Eigen::Index>(r.size()) != cols) throw std::runtime_error(path.string() + ": ragged row");
    rows.push_back(std::move(r));
  }
  EmbeddingTable t;
  t.values.resize(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Eigen::Index j = 0; j < cols; ++j) t.values(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  if (have_labels && !rows.empty()) t.labels = labels;
  return t;
}

}  // namespace lpvdn::pipeline
