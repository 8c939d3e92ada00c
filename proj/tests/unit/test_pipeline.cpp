#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lpvdn/locality.hpp"
#include "lpvdn/midisc.hpp"
#include "lpvdn/pipeline.hpp"
#include "oracles.hpp"

using namespace lpvdn;
using namespace lpvdn::pipeline;

namespace {

const char* kMinimal = R"({"dataset": {"kind": "synthetic"}, "k": 3})";

TrainConfig tiny_config() {
  TrainConfig c;
  c.dataset.k = 3;
  c.dataset.dim = 8;
  c.dataset.n_per_cluster = 30;
  c.dataset.separation = 8.0;
  c.dataset.seed = 5;
  c.k = 3;
  c.latent_dim = 3;
  c.out_dim = 2;
  c.perplexity = 10.0;
  c.batch_size = 32;
  c.epochs = 3;
  c.pretrain_epochs = 2;
  c.seed = 11;
  return c;
}

vade::Architecture tiny_hidden() {
  vade::Architecture a;
  a.encoder_hidden = {16};
  a.decoder_hidden = {16};
  a.discriminator_hidden = {8};
  a.mapper_hidden = {8};
  return a;
}

vade::LpvdnModel tiny_model(const TrainConfig& c, int d, std::uint64_t seed) {
  vade::LpvdnModel m(architecture_for(c, d, tiny_hidden()), seed);
  diff::Rng rng(seed + 1);
  m.prior.mu.value = oracle::random_matrix(c.k, c.latent_dim, rng, -1, 1);
  return m;
}

std::vector<Matrix> snapshot(vade::LpvdnModel m) {
  std::vector<Matrix> out;
  for (auto* p : m.parameters()) out.push_back(p->value);
  return out;
}

std::vector<Matrix> gradients_of(vade::LpvdnModel& m, const Matrix& x, const BatchNoise& noise, const TrainConfig& c,
                                 double* total = nullptr) {
  auto ps = m.parameters();
  diff::zero_grad(ps);
  diff::Tape tape;
  auto terms = total_loss(tape, m, x, noise, c);
  tape.backward(terms.total);
  if (total) *total = terms.total.scalar();
  std::vector<Matrix> out;
  for (auto* p : ps) out.push_back(p->grad);
  return out;
}

fs::path scratch_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("lpvdn_test_pipeline_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("config parsing is strict") {
  CHECK_NOTHROW(parse_config(kMinimal));
  CHECK_THROWS_WITH_AS(parse_config(R"({"dataset": {"kind": "synthetic"}, "k": 3, "alpah0": 1})"),
                       doctest::Contains("alpah0"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"dataset": {"kind": "synthetic", "colour": 1}, "k": 3})"),
                       doctest::Contains("colour"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "synthetic"}, "k": "3"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "synthetic"}, "k": 3, "seed": -1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "synthetic"}, "k": 3, "epochs": 2.5})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "synthetic"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"k": 3})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "csv"}, "k": 3})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "synthetic"}, "k": 3, "ablation": ["kl"]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"kind": "synthetic"}, "k": 3, "batch_size": 2})"), ConfigError);
  // Without the locality term tiny batches are fine.
  CHECK_NOTHROW(parse_config(R"({"dataset": {"kind": "synthetic"}, "k": 3, "batch_size": 2, "ablation": ["lp"]})"));
}

TEST_CASE("malformed config JSON reports line and column") {
  const std::string text = "{\n  \"k\": 3,\n  \"dataset\": {\"kind\": synthetic}\n}\n";
  CHECK_THROWS_WITH_AS(parse_config(text), doctest::Contains("at line 3, column"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("{\"k\": 3,}"), doctest::Contains("line 1, column"), ConfigError);
}

TEST_CASE("config JSON round trip and hash") {
  TrainConfig c = tiny_config();
  c.ablation = {"mi"};
  c.lr_decay = {0.5, 3};
  const TrainConfig back = parse_config(to_json(c));
  CHECK(back == c);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(c).size() == 16);
  TrainConfig other = c;
  other.seed += 1;
  CHECK(config_hash(other) != config_hash(c));
  // Key order in the input does not matter.
  CHECK(config_hash(parse_config(R"({"k": 3, "dataset": {"kind": "synthetic"}})")) ==
        config_hash(parse_config(kMinimal)));
}

TEST_CASE("ablation names") {
  CHECK(parse_ablation("none").empty());
  CHECK(parse_ablation("lp,mi") == std::vector<std::string>{"lp", "mi"});
  CHECK(parse_ablation("mi,lp,mi") == std::vector<std::string>{"lp", "mi"});
  CHECK_THROWS_AS(parse_ablation("kl"), ConfigError);
  for (const std::string v : {"full", "lg+lp", "lg+mi", "lg"}) CHECK(variant_name(ablation_for_variant(v)) == v);
  CHECK_THROWS_AS(ablation_for_variant("everything"), ConfigError);
}

TEST_CASE("learning rate steps down by the decay factor every interval") {
  TrainConfig c;
  c.lr = 2e-3;
  for (int e : {0, 1, 9, 10, 11, 19, 20, 155, 299}) {
    CHECK(learning_rate(c, e) == c.lr * std::pow(0.95, e / 10));
  }
  CHECK(learning_rate(c, 9) == c.lr);
  CHECK(learning_rate(c, 10) < c.lr);
}

TEST_CASE("disabling a term equals zeroing its weight, bit for bit") {
  TrainConfig c = tiny_config();
  diff::Rng rng(3);
  const Matrix x = oracle::random_matrix(6, 8, rng, 0, 1);
  const BatchNoise noise = draw_batch_noise(rng, 6, c.latent_dim);
  auto model = tiny_model(c, 8, 21);

  for (const std::string term : {"mi", "lp"}) {
    TrainConfig off = c;
    off.ablation = {term};
    TrainConfig zero = c;
    (term == "mi" ? zero.alpha0 : zero.alpha1) = 0.0;
    double v_off = 0, v_zero = 0;
    const auto g_off = gradients_of(model, x, noise, off, &v_off);
    const auto g_zero = gradients_of(model, x, noise, zero, &v_zero);
    CHECK(v_off == v_zero);
    for (std::size_t i = 0; i < g_off.size(); ++i) CHECK(g_off[i] == g_zero[i]);
  }
}

TEST_CASE("total loss is the weighted sum of the separately computed terms") {
  TrainConfig c = tiny_config();
  c.alpha0 = 0.7;
  c.alpha1 = 0.3;
  diff::Rng rng(4);
  const Matrix x = oracle::random_matrix(7, 8, rng, 0, 1);
  const BatchNoise noise = draw_batch_noise(rng, 7, c.latent_dim);
  auto model = tiny_model(c, 8, 22);

  diff::Tape tape;
  const auto terms = total_loss(tape, model, x, noise, c);
  REQUIRE(terms.mi);
  REQUIRE(terms.lp);

  diff::Tape t2;
  auto g = vade::forward_global(t2, model, x, noise.epsilon);
  const double mi = midisc::mi_loss(t2, model.discriminator, g.x, g.z, noise.negatives).value.scalar();
  const Matrix mu = model.encode_means(x);
  const Matrix p = locality::high_affinities(mu, locality::effective_perplexity(c.perplexity, 7)).p;
  const double lp = locality::lp_loss(p, locality::low_affinities(model.embed(x)));

  CHECK(terms.global == doctest::Approx(g.loss.mean.scalar()).epsilon(1e-12));
  CHECK(*terms.mi == doctest::Approx(mi).epsilon(1e-12));
  CHECK(*terms.lp == doctest::Approx(lp).epsilon(1e-12));
  CHECK(terms.total.scalar() == doctest::Approx(terms.global + 0.7 * mi + 0.3 * lp).epsilon(1e-12));

  SUBCASE("doubling alpha1 adds exactly one more L_LP") {
    TrainConfig twice = c;
    twice.alpha1 = 0.6;
    diff::Tape t3;
    const double more = total_loss(t3, model, x, noise, twice).total.scalar();
    CHECK(more - terms.total.scalar() == doctest::Approx(0.3 * lp).epsilon(1e-9));
  }
  SUBCASE("zero weights leave the global loss") {
    TrainConfig none = c;
    none.alpha0 = 0.0;
    none.alpha1 = 0.0;
    diff::Tape t3;
    CHECK(total_loss(t3, model, x, noise, none).total.scalar() == terms.global);
  }
}

TEST_CASE("batches too small for a term skip it") {
  TrainConfig c = tiny_config();
  diff::Rng rng(5);
  auto model = tiny_model(c, 8, 23);
  for (int b : {1, 2}) {
    const Matrix x = oracle::random_matrix(b, 8, rng, 0, 1);
    diff::Tape tape;
    const auto terms = total_loss(tape, model, x, draw_batch_noise(rng, b, c.latent_dim), c);
    CHECK(terms.mi.has_value() == (b >= 2));
    CHECK_FALSE(terms.lp.has_value());
  }
}

TEST_CASE("total loss gradient matches finite differences with P held fixed") {
  TrainConfig c = tiny_config();
  c.alpha0 = 0.8;
  c.alpha1 = 0.5;
  diff::Rng rng(6);
  const Matrix x = oracle::random_matrix(5, 6, rng, 0.05, 0.95);
  const BatchNoise noise = draw_batch_noise(rng, 5, c.latent_dim);
  auto model = tiny_model(c, 6, 24);
  const Matrix p = batch_affinities(model.encode_means(x), c);
  auto loss = [&](diff::Tape& t) { return total_loss(t, model, x, noise, c, &p).total; };
  CHECK(diff::grad_check(loss, model.parameters(), 1e-5) < 1e-4);
}

TEST_CASE("the locality term sends gradient into the encoder") {
  TrainConfig c = tiny_config();
  diff::Rng rng(7);
  const Matrix x = oracle::random_matrix(8, 8, rng, 0, 1);
  const BatchNoise noise = draw_batch_noise(rng, 8, c.latent_dim);
  auto model = tiny_model(c, 8, 25);
  TrainConfig with = c;
  with.alpha0 = 0.0;
  with.alpha1 = 1.0;
  TrainConfig without = with;
  without.alpha1 = 0.0;
  const auto g1 = gradients_of(model, x, noise, with);
  const auto g0 = gradients_of(model, x, noise, without);
  const std::size_t encoder_params = model.encoder.parameters().size();
  double diff_norm = 0.0;
  for (std::size_t i = 0; i < encoder_params; ++i) diff_norm += (g1[i] - g0[i]).norm();
  CHECK(diff_norm > 1e-8);
}

TEST_CASE("batch noise draws a derangement and normal epsilon") {
  diff::Rng rng(8);
  auto n = draw_batch_noise(rng, 4000, 3);
  CHECK(n.epsilon.rows() == 4000);
  CHECK(n.epsilon.cols() == 3);
  CHECK(std::abs(n.epsilon.mean()) < 0.05);
  CHECK(midisc::is_derangement(n.negatives));
  CHECK(draw_batch_noise(rng, 1, 3).negatives == std::vector<int>{0});
}

TEST_CASE("training is deterministic and writes its artifacts") {
  const TrainConfig c = tiny_config();
  const auto dir = scratch_dir("train");
  auto a = train(c, {.out_dir = dir, .architecture = tiny_hidden()});
  auto b = train(c, {.architecture = tiny_hidden()});
  REQUIRE_FALSE(a.diverged);
  CHECK(a.report.to_json() == b.report.to_json());
  CHECK(snapshot(a.model) == snapshot(b.model));
  CHECK(a.log.size() == 3);
  CHECK(a.pretrain_loss.size() == 2);
  CHECK(a.report.config_hash == config_hash(c));
  REQUIRE(a.report.acc);
  CHECK(*a.report.acc >= 0.0);
  CHECK(*a.report.acc <= 1.0);

  for (const char* f : {"checkpoint.json", "checkpoint.bin", "report.json", "train.log"}) CHECK(fs::exists(dir / f));
  std::ifstream log(dir / "train.log");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    CHECK(line.starts_with("epoch=" + std::to_string(lines) + " "));
    ++lines;
  }
  CHECK(lines == 3);
  std::ifstream rep(dir / "report.json");
  std::stringstream ss;
  ss << rep.rdbuf();
  CHECK(cluster::EvalReport::from_json(ss.str()).to_json() == a.report.to_json());

  TrainConfig other = c;
  other.seed = 12;
  CHECK(snapshot(train(other, {.architecture = tiny_hidden()}).model) != snapshot(a.model));
}

TEST_CASE("disabled terms are logged as off") {
  TrainConfig c = tiny_config();
  c.ablation = {"lp", "mi"};
  c.epochs = 1;
  const auto r = train(c, {.architecture = tiny_hidden()});
  REQUIRE(r.log.size() == 1);
  CHECK_FALSE(r.log[0].mi);
  CHECK_FALSE(r.log[0].lp);
  CHECK(r.log[0].line().find("L_MI=off L_LP=off") != std::string::npos);
  CHECK(r.report.ablation == c.ablation);
}

TEST_CASE("zero joint epochs evaluates the pretrained model") {
  TrainConfig c = tiny_config();
  c.epochs = 0;
  const auto r = train(c, {.architecture = tiny_hidden()});
  CHECK(r.log.empty());
  const auto data = load_dataset(c.dataset);
  const auto again = evaluate(r.model, data, {.seed = c.seed, .config_hash = config_hash(c)});
  CHECK(again.to_json() == r.report.to_json());
}

TEST_CASE("evaluate without labels reports embedding statistics") {
  const TrainConfig c = tiny_config();
  auto data = load_dataset(c.dataset);
  data.labels.reset();
  const vade::LpvdnModel model(architecture_for(c, 8, tiny_hidden()), 1);
  const auto r = evaluate(model, data, {});
  CHECK_FALSE(r.acc);
  CHECK(r.n == 90);
  CHECK(r.dim == 2);
  REQUIRE(r.embedding_mean_norm);
  CHECK(*r.embedding_mean_norm == doctest::Approx(model.embed(data.x).rowwise().norm().mean()));
  CHECK_THROWS_AS(evaluate(vade::LpvdnModel(architecture_for(c, 7, tiny_hidden()), 1), data, {}), diff::ShapeError);
}

TEST_CASE("checkpoint round trip is exact") {
  const TrainConfig c = tiny_config();
  auto r = train(c, {.architecture = tiny_hidden()});
  const auto dir = scratch_dir("checkpoint");
  save_checkpoint(dir, r.model, c);
  auto ck = load_checkpoint(dir);
  CHECK(ck.config == c);
  CHECK(ck.config_hash == config_hash(c));
  CHECK(ck.model.arch == r.model.arch);
  CHECK(snapshot(ck.model) == snapshot(r.model));

  SUBCASE("truncated blob") {
    fs::resize_file(dir / "checkpoint.bin", fs::file_size(dir / "checkpoint.bin") - 8);
    CHECK_THROWS(load_checkpoint(dir));
  }
  SUBCASE("trailing bytes") {
    std::ofstream(dir / "checkpoint.bin", std::ios::app | std::ios::binary) << "x";
    CHECK_THROWS(load_checkpoint(dir));
  }
  SUBCASE("missing manifest") {
    fs::remove(dir / "checkpoint.json");
    CHECK_THROWS(load_checkpoint(dir));
  }
}

TEST_CASE("exported embeddings reproduce the evaluation") {
  const TrainConfig c = tiny_config();
  auto r = train(c, {.architecture = tiny_hidden()});
  const auto data = load_dataset(c.dataset);
  const auto path = scratch_dir("embed") / "o.csv";
  const Matrix o = embeddings(r.model, data.x, EmbeddingKind::o_prime);
  export_embeddings(path, o, data.labels);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "index,label,e0,e1");
  std::size_t lines = 1;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == 91);

  const auto table = read_embeddings(path);
  CHECK(table.values == o);
  REQUIRE(table.labels);
  CHECK(*table.labels == *data.labels);
  const auto from_file = evaluate_embeddings(table.values, table.labels, c.k, {.seed = c.seed});
  CHECK(std::abs(*from_file.acc - *r.report.acc) <= 1e-12);

  const Matrix mu = embeddings(r.model, data.x, EmbeddingKind::mu_tilde);
  CHECK(mu.cols() == c.latent_dim);
  export_embeddings(path, mu, std::nullopt);
  const auto unlabeled = read_embeddings(path);
  CHECK_FALSE(unlabeled.labels);
  CHECK(unlabeled.values == mu);
  CHECK_THROWS_AS(parse_embedding_kind("z"), ConfigError);
}

TEST_CASE("noise sweep runs every cell in canonical order") {
  TrainConfig c = tiny_config();
  c.epochs = 1;
  const auto clean = load_dataset(c.dataset);
  SweepOptions opts;
  opts.sigmas = {0.0, 0.3};
  opts.variants = {"full", "lg"};
  opts.seeds = {11, 12};
  opts.architecture = tiny_hidden();
  const auto rows = noise_sweep(c, clean, opts);
  REQUIRE(rows.size() == 8);
  CHECK(rows[0].sigma == 0.0);
  CHECK(rows[0].variant == "full");
  CHECK(rows[0].seed == 11);
  CHECK(rows[1].seed == 12);
  CHECK(rows[2].variant == "lg");
  CHECK(rows[4].sigma == 0.3);

  // sigma = 0 is the plain run.
  const auto plain = train(c, clean, {.architecture = tiny_hidden()});
  CHECK(rows[0].report.to_json() == plain.report.to_json());

  const auto csv = sweep_csv(rows);
  CHECK(csv.starts_with("sigma,variant,seed,acc,nmi,ari\n"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);

  SUBCASE("threads do not change the table") {
    opts.jobs = 3;
    CHECK(sweep_csv(noise_sweep(c, clean, opts)) == csv);
  }
  SUBCASE("invalid input") {
    opts.sigmas = {};
    CHECK_THROWS_AS(noise_sweep(c, clean, opts), ConfigError);
    opts.sigmas = {-0.1};
    CHECK_THROWS_AS(noise_sweep(c, clean, opts), ConfigError);
  }
}

TEST_CASE("load_dataset applies configured noise and resolves relative paths") {
  DatasetSpec s;
  s.k = 2;
  s.dim = 4;
  s.n_per_cluster = 10;
  const auto clean = load_dataset(s);
  s.noise_sigma = 0.1;
  s.noise_seed = 9;
  const auto noisy = load_dataset(s);
  CHECK(noisy.x != clean.x);
  CHECK(noisy.x == data::corrupt_gaussian(clean.x, 0.1, 9));

  const auto dir = scratch_dir("dataset");
  data::write_matrix(dir / "m.json", clean);
  DatasetSpec m;
  m.kind = "matrix";
  m.manifest = "m.json";
  CHECK(load_dataset(m, dir).x.rows() == 20);
}

TEST_CASE("shipped configs parse and keep the published per-dataset settings") {
  const fs::path dir = LPVDN_CONFIG_DIR;
  for (const char* name : {"mnist", "fashion_mnist", "reuters10k", "reuters", "synthetic"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_config(dir / (std::string(name) + ".json")));
  }
  const auto mnist = load_config(dir / "mnist.json");
  CHECK(mnist.alpha0 == 1.0);
  CHECK(mnist.alpha1 == 1e-4);
  CHECK(mnist.batch_size == 800);
  CHECK(mnist.epochs == 300);
  CHECK(mnist.lr == 2e-3);
  const auto r10k = load_config(dir / "reuters10k.json");
  CHECK(r10k.alpha0 == 1e-2);
  CHECK(r10k.alpha1 == 1e-3);
  CHECK(r10k.epochs == 50);
  const auto reuters = load_config(dir / "reuters.json");
  CHECK(reuters.alpha1 == 1e-2);
  CHECK(reuters.lr == 2e-4);
}
