#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "lpvdn/cluster.hpp"
#include "oracles.hpp"

using namespace lpvdn::cluster;
using lpvdn::diff::Rng;

namespace {

// Exhaustive search over every one-to-one mapping of k cluster ids to k labels.
double brute_force_accuracy(const std::vector<int>& truth, const std::vector<int>& pred, int k) {
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += perm[static_cast<std::size_t>(pred[i])] == truth[i];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(truth.size());
}

// Hubert-Arabie ARI from explicit enumeration of all sample pairs.
double pair_counting_ari(const std::vector<int>& u, const std::vector<int>& v) {
  double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = i + 1; j < u.size(); ++j) {
      const bool su = u[i] == u[j], sv = v[i] == v[j];
      n11 += su && sv;
      n10 += su && !sv;
      n01 += !su && sv;
      n00 += !su && !sv;
    }
  return 2.0 * (n00 * n11 - n01 * n10) / ((n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11));
}

std::vector<int> random_labels(std::size_t n, int k, Rng& rng) {
  std::uniform_int_distribution<int> d(0, k - 1);
  std::vector<int> out(n);
  for (auto& x : out) x = d(rng);
  return out;
}

// Plain Lloyd from k distinct random points (test-side reimplementation).
double random_restart_lloyd_inertia(const Matrix& pts, int k, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(pts.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  Matrix c(k, pts.cols());
  for (int j = 0; j < k; ++j) c.row(j) = pts.row(idx[static_cast<std::size_t>(j)]);
  std::vector<int> a(static_cast<std::size_t>(pts.rows()), -1);
  for (int it = 0; it < 300; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      int best = 0;
      for (int j = 1; j < k; ++j)
        if ((pts.row(i) - c.row(j)).squaredNorm() < (pts.row(i) - c.row(best)).squaredNorm()) best = j;
      if (a[static_cast<std::size_t>(i)] != best) changed = true;
      a[static_cast<std::size_t>(i)] = best;
    }
    if (!changed) break;
    for (int j = 0; j < k; ++j) {
      Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(pts.cols());
      int cnt = 0;
      for (Eigen::Index i = 0; i < pts.rows(); ++i)
        if (a[static_cast<std::size_t>(i)] == j) {
          s += pts.row(i);
          ++cnt;
        }
      if (cnt > 0) c.row(j) = s / cnt;
    }
  }
  double total = 0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) total += (pts.row(i) - c.row(a[static_cast<std::size_t>(i)])).squaredNorm();
  return total;
}

}  // namespace

TEST_CASE("kmeans separates two obvious pairs") {
  Matrix pts(4, 2);
  pts << 0, 0, 0, 1, 10, 0, 10, 1;
  auto r = kmeans(pts, 2, {.n_init = 10, .seed = 1});
  CHECK(r.assignments[0] == r.assignments[1]);
  CHECK(r.assignments[2] == r.assignments[3]);
  CHECK(r.assignments[0] != r.assignments[2]);
  CHECK(r.inertia == doctest::Approx(1.0));
}

TEST_CASE("kmeans with k = n has zero inertia; k > n is rejected") {
  Rng rng(2);
  Matrix pts = oracle::random_matrix(7, 3, rng);
  CHECK(kmeans(pts, 7, {.seed = 3}).inertia == doctest::Approx(0.0));
  CHECK_THROWS_AS(kmeans(pts, 8), std::invalid_argument);
}

TEST_CASE("kmeans beats or ties 1000 random restarts of plain Lloyd") {
  Rng rng(7);
  Matrix pts = oracle::random_matrix(50, 2, rng, -5, 5);
  auto r = kmeans(pts, 3, {.n_init = 10, .seed = 11});
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 1000; ++i) best = std::min(best, random_restart_lloyd_inertia(pts, 3, rng));
  CHECK(r.inertia <= best + 1e-9);
  // Converged: each point sits with its nearest centroid.
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const int own = r.assignments[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < 3; ++c)
      CHECK((pts.row(i) - r.centroids.row(own)).squaredNorm() <= (pts.row(i) - r.centroids.row(c)).squaredNorm() + 1e-12);
  }
}

TEST_CASE("kmeans re-seeds empty clusters") {
  // Duplicated points force k-means++ to pick coincident seeds.
  Matrix pts(6, 1);
  pts << 0, 0, 0, 0, 0, 5;
  auto r = kmeans(pts, 3, {.n_init = 3, .seed = 5});
  std::vector<int> counts(3, 0);
  for (int a : r.assignments) counts[static_cast<std::size_t>(a)]++;
  CHECK(std::all_of(counts.begin(), counts.end(), [](int c) { return c > 0; }));
}

TEST_CASE("hungarian matches exhaustive search") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + trial % 6;
    Matrix cost = oracle::random_matrix(k, k, rng, 0, 10);
    auto assign = hungarian(cost);
    double got = 0;
    for (int r = 0; r < k; ++r) got += cost(r, assign[static_cast<std::size_t>(r)]);
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double s = 0;
      for (int r = 0; r < k; ++r) s += cost(r, perm[static_cast<std::size_t>(r)]);
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("accuracy: relabelling, small case, and exhaustive agreement") {
  std::vector<int> truth{0, 0, 1, 1, 2, 2, 2};
  std::vector<int> relabel{2, 2, 0, 0, 1, 1, 1};
  CHECK(accuracy(truth, relabel) == 1.0);
  CHECK(accuracy(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 1, 0, 1}) == 0.5);

  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + trial % 5;
    auto t = random_labels(40, k, rng);
    auto p = random_labels(40, k, rng);
    CHECK(accuracy(t, p) == brute_force_accuracy(t, p, k));
  }
  CHECK_THROWS_AS(accuracy(std::vector<int>{0, 1}, std::vector<int>{0}), std::invalid_argument);
}

TEST_CASE("accuracy is invariant to relabelling either argument") {
  Rng rng(4);
  auto t = random_labels(60, 5, rng);
  auto p = random_labels(60, 5, rng);
  const double base = accuracy(t, p);
  std::vector<int> perm{3, 0, 4, 1, 2};
  std::vector<int> tp(t.size()), pp(p.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    tp[i] = perm[static_cast<std::size_t>(t[i])];
    pp[i] = perm[static_cast<std::size_t>(p[i])] + 10;
  }
  CHECK(accuracy(tp, p) == base);
  CHECK(accuracy(t, pp) == base);
  CHECK(base >= 1.0 / 60);
  CHECK(base <= 1.0);
}

TEST_CASE("nmi: identical, constant, and hand contingency") {
  std::vector<int> a{0, 0, 1, 1, 2, 2};
  CHECK(nmi(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(nmi(a, std::vector<int>(6, 4)) == 0.0);
  // Contingency oracle (natural log) evaluated independently: 0.3437110184854508.
  CHECK(nmi(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 1, 1, 1}) ==
        doctest::Approx(0.3437110184854508).epsilon(1e-14));
  CHECK(nmi(std::vector<int>(5, 0), std::vector<int>(5, 3)) == 1.0);
}

TEST_CASE("ari: identical, small case, pair-counting oracle, and degenerate cases") {
  std::vector<int> a{0, 0, 1, 1, 2};
  CHECK(ari(a, a) == doctest::Approx(1.0));
  CHECK(ari(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 1, 0, 1}) == doctest::Approx(-0.5).epsilon(1e-15));

  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    auto u = random_labels(30, 3, rng), v = random_labels(30, 4, rng);
    CHECK(ari(u, v) == doctest::Approx(pair_counting_ari(u, v)).epsilon(1e-12));
  }
  std::vector<int> singletons{0, 1, 2, 3};
  CHECK(ari(singletons, singletons) == 1.0);
  CHECK(ari(std::vector<int>(4, 0), std::vector<int>(4, 1)) == 1.0);
}

TEST_CASE("ari of random labellings averages to zero") {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    total += ari(random_labels(200, 4, rng), random_labels(200, 4, rng));
  }
  CHECK(std::abs(total / 200) < 0.02);
}

TEST_CASE("nmi and ari are symmetric") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    auto u = random_labels(50, 4, rng), v = random_labels(50, 3, rng);
    CHECK(nmi(u, v) == doctest::Approx(nmi(v, u)).epsilon(1e-14));
    CHECK(ari(u, v) == doctest::Approx(ari(v, u)).epsilon(1e-14));
  }
}

TEST_CASE("nearest neighbours match a full sort and exclude the query") {
  Rng rng(12);
  Matrix emb = oracle::random_matrix(100, 3, rng);
  emb.row(40) = emb.row(7);  // exact duplicate of the query
  auto got = nearest_neighbors(emb, 7, 10);
  REQUIRE(got.size() == 10);
  CHECK(got[0].index == 40);
  CHECK(got[0].distance == 0.0);

  std::vector<std::pair<double, int>> all;
  for (int i = 0; i < 100; ++i)
    if (i != 7) all.emplace_back((emb.row(i) - emb.row(7)).norm(), i);
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].index == all[i].second);

  auto everyone = nearest_neighbors(emb, 7, 99);
  CHECK(everyone.size() == 99);
  for (std::size_t i = 0; i < everyone.size(); ++i) CHECK(everyone[i].index == all[i].second);
  CHECK_THROWS_AS(nearest_neighbors(emb, 0, 101), std::invalid_argument);
}

TEST_CASE("nearest neighbour ties go to the lower index") {
  Matrix emb(4, 1);
  emb << 0, 1, -1, 2;
  auto got = nearest_neighbors(emb, 0, 2);
  CHECK(got[0].index == 1);
  CHECK(got[1].index == 2);
}

TEST_CASE("eval report JSON layout and round trip") {
  EvalReport r;
  r.acc = 0.5;
  r.nmi = 0.25;
  r.ari = -0.125;
  r.seed = 9;
  r.config_hash = "abc";
  r.ablation = {"mi"};
  const std::string text = r.to_json();
  CHECK(text.find("\"acc\"") < text.find("\"nmi\""));
  CHECK(text.find("\"nmi\"") < text.find("\"ari\""));
  auto back = EvalReport::from_json(text);
  CHECK(back.acc == r.acc);
  CHECK(back.ari == r.ari);
  CHECK(back.ablation == r.ablation);
  CHECK(back.to_json() == text);
}
