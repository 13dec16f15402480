#include <cmath>
#include <filesystem>
#include <fstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "doctest.h"
#include "eatta/error.hpp"
#include "eatta/stream.hpp"
#include "helpers.hpp"

using namespace eatta;

namespace {

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

std::shared_ptr<const SampleSource> blob_source(int classes = 4, int dim = 4, std::uint64_t seed = 1) {
  return std::make_shared<SampleSource>(make_blob_spec({classes, dim, 3.0, 1.0, 10}, seed));
}

}  // namespace

TEST_CASE("blob datasets are deterministic and sized as requested") {
  const SourceSpec spec = make_blob_spec({5, 3, 3.0, 0.5, 40}, 11);
  CHECK(spec.num_classes() == 5);
  CHECK(spec.dim() == 3);
  const Dataset a = make_source_dataset(spec, 2), b = make_source_dataset(spec, 2), c = make_source_dataset(spec, 3);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.size() == 200);
  std::vector<int> counts(5, 0);
  for (int y : a.y) ++counts[y];
  for (int n : counts) CHECK(n == 40);

  // empirical class means sit near the blob centers
  for (int k = 0; k < 5; ++k) {
    Vector m = Vector::Zero(3);
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a.y[i] == k) m += a.x.row(static_cast<Eigen::Index>(i)).transpose();
    m /= 40.0;
    CHECK((m - spec.classes[k].mean).norm() < 0.5);
  }
}

TEST_CASE("dataset construction rejects bad input") {
  SourceSpec spec = make_blob_spec({2, 2, 1.0, 1.0, 5}, 0);
  spec.classes[0].cov = (Matrix(2, 2) << 1.0, 0.0, 0.0, -1.0).finished();
  CHECK_THROWS_AS(make_source_dataset(spec, 0), ConfigError);
  SourceSpec empty = make_blob_spec({2, 2, 1.0, 1.0, 0}, 0);
  CHECK_THROWS_AS(make_source_dataset(empty, 0), ConfigError);
  CHECK_THROWS_AS(make_blob_spec({1, 2, 1.0, 1.0, 5}, 0), ConfigError);

  // a rank-deficient but PSD covariance is fine
  SourceSpec flat = make_blob_spec({2, 2, 1.0, 1.0, 5}, 0);
  flat.classes[1].cov = (Matrix(2, 2) << 1.0, 1.0, 1.0, 1.0).finished();
  const Dataset d = make_source_dataset(flat, 0);
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.y[i] == 1) {
      const auto r = d.x.row(static_cast<Eigen::Index>(i)) - flat.classes[1].mean.transpose();
      CHECK(r[0] == doctest::Approx(r[1]));
    }
}

TEST_CASE("split is a seeded partition") {
  const Dataset d = make_source_dataset(make_blob_spec({3, 2, 2.0, 1.0, 30}, 1), 1);
  const auto [train, test] = split_dataset(d, 0.2, 9);
  CHECK(test.size() == 18);
  CHECK(train.size() == 72);
  CHECK(split_dataset(d, 0.2, 9).first == train);
  double sum = d.x.sum(), parts = train.x.sum() + test.x.sum();
  CHECK(sum == doctest::Approx(parts));
  CHECK_THROWS_AS(split_dataset(d, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split_dataset(d, 1.0, 1), ConfigError);
}

TEST_CASE("corruption grammar round trips") {
  for (const char* text : {"identity", "shift(1.5)", "shift(1,2,3)", "rotate(0.5)", "rotate(0.5,0,2)", "noise(0.3)",
                           "scale(2)", "rotate(0.5)+noise(1)+shift(0,2)"}) {
    const Corruption c = Corruption::parse(text);
    CHECK(Corruption::parse(c.to_string()) == c);
  }
  for (const char* bad : {"", "blur(1)", "shift(", "noise(1,2)", "rotate()", "shift(a)", "noise(1)+"})
    CHECK_THROWS_AS(Corruption::parse(bad), ConfigError);
  CHECK_THROWS_AS(Corruption::parse("rotate(0.1)").validate(3), ConfigError);
  CHECK_NOTHROW(Corruption::parse("rotate(0.1,0,2)").validate(3));
  CHECK_THROWS_AS(Corruption::parse("shift(1,2)").validate(3), ConfigError);
  CHECK_THROWS_AS(Corruption::parse("noise(-1)").validate(3), ConfigError);
}

TEST_CASE("corruption semantics") {
  Rng rng(1);
  Sample s;
  s.x = (Vector(4) << 1.0, 2.0, 3.0, 4.0).finished();
  CHECK(corrupt(s, Corruption::parse("shift(1)"), rng).x == (Vector(4) << 2.0, 3.0, 4.0, 5.0).finished());
  CHECK(corrupt(s, Corruption::parse("scale(2,1,1,0)"), rng).x == (Vector(4) << 2.0, 2.0, 3.0, 0.0).finished());
  const Vector r = corrupt(s, Corruption::parse("rotate(1.5707963267948966)"), rng).x;
  CHECK(r[0] == doctest::Approx(-2.0));
  CHECK(r[1] == doctest::Approx(1.0));
  CHECK(r.norm() == doctest::Approx(s.x.norm()));
  // left to right
  const Vector sc = corrupt(s, Corruption::parse("shift(1)+scale(2)"), rng).x;
  CHECK(sc[0] == 4.0);
  CHECK(corrupt(s, Corruption::parse("noise(0)"), rng).x == s.x);

  Vector sum = Vector::Zero(4), sq = Vector::Zero(4);
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Vector d = corrupt(s, Corruption::parse("noise(0.5)"), rng).x - s.x;
    sum += d;
    sq += d.cwiseProduct(d);
  }
  for (int j = 0; j < 4; ++j) {
    CHECK(std::abs(sum[j] / n) < 0.02);
    CHECK(std::sqrt(sq[j] / n) == doctest::Approx(0.5).epsilon(0.03));
  }
}

TEST_CASE("episode iteration") {
  EpisodeSpec spec;
  spec.batch_size = 8;
  spec.seed = 3;
  spec.domains = {{"a", Corruption::parse("identity"), 2, 0, {}, {}}, {"b", Corruption::parse("shift(1)"), 1, 13, {}, {}}};
  spec.validate(4, 4);
  Episode ep(spec, blob_source());
  CHECK(ep.total_batches() == 4);
  std::vector<std::string> kinds;
  std::vector<int> sizes;
  std::int64_t next_index = 0;
  for (;;) {
    const StreamEvent e = ep.next();
    if (std::holds_alternative<EndOfEpisode>(e)) break;
    if (const auto* bd = std::get_if<DomainBoundary>(&e)) {
      kinds.push_back("boundary");
      CHECK(bd->finished_domain == 0);
      CHECK(bd->next_domain == 1);
      continue;
    }
    const Batch& b = std::get<Batch>(e);
    kinds.push_back("batch" + std::to_string(b.domain_id));
    sizes.push_back(b.size());
    for (auto idx : b.stream_index) CHECK(idx == next_index++);
    for (int y : b.labels) CHECK((y >= 0 && y < 4));
  }
  CHECK(kinds == std::vector<std::string>{"batch0", "batch0", "boundary", "batch1", "batch1"});
  CHECK(sizes == std::vector<int>{8, 8, 8, 5});
  CHECK_THROWS_AS(ep.next(), ConfigError);
}

TEST_CASE("episodes are reproducible and keyed by domain") {
  EpisodeSpec spec;
  spec.batch_size = 16;
  spec.seed = 5;
  spec.domains = {{"a", Corruption::parse("noise(1)"), 3, 0, {}, {}}};
  auto first_batch = [](Episode& ep) { return std::get<Batch>(ep.next()); };
  Episode e1(spec, blob_source()), e2(spec, blob_source());
  const Batch a = first_batch(e1), b = first_batch(e2);
  CHECK(a.x == b.x);
  CHECK(a.labels == b.labels);
  spec.seed = 6;
  Episode e3(spec, blob_source());
  CHECK(first_batch(e3).x != a.x);

  // an explicit stream key pins content independent of position
  EpisodeSpec moved = spec;
  moved.domains.front().stream_key = 77;
  moved.domains.insert(moved.domains.begin(), DomainSpec{"pre", Corruption::parse("identity"), 1, 0, {}, {}});
  EpisodeSpec alone = spec;
  alone.domains.front().stream_key = 77;
  Episode m(moved, blob_source()), s(alone, blob_source());
  m.next();
  m.next();
  CHECK(first_batch(m).x == first_batch(s).x);
}

TEST_CASE("class priors are honoured (chi-square goodness of fit)") {
  EpisodeSpec spec;
  spec.batch_size = 100;
  spec.seed = 1;
  const std::vector<double> priors{0.5, 0.3, 0.2, 0.0};
  spec.domains = {{"p", Corruption::parse("identity"), 40, 0, priors, {}}};
  Episode ep(spec, blob_source());
  std::vector<double> counts(4, 0.0);
  for (;;) {
    const StreamEvent e = ep.next();
    if (!std::holds_alternative<Batch>(e)) break;
    for (int y : std::get<Batch>(e).labels) counts[y] += 1.0;
  }
  CHECK(counts[3] == 0.0);
  const double n = 4000.0;
  double stat = 0.0;
  for (int k = 0; k < 3; ++k) stat += std::pow(counts[k] - n * priors[k], 2) / (n * priors[k]);
  const boost::math::chi_squared dist(2);
  CHECK(boost::math::cdf(boost::math::complement(dist, stat)) > 0.001);
}

TEST_CASE("episode validation") {
  EpisodeSpec spec;
  CHECK_THROWS_AS(spec.validate(2, 2), ConfigError);
  spec.domains = {{"a", Corruption::parse("identity"), 1, 0, {0.5, 0.6}, {}}};
  CHECK_THROWS_AS(spec.validate(2, 2), ConfigError);
  spec.domains = {{"a", Corruption::parse("identity"), 1, 0, {1.0}, {}}};
  CHECK_THROWS_AS(spec.validate(2, 2), ConfigError);
  spec.domains = {{"a", Corruption::parse("rotate(1)"), 1, 0, {}, {}}};
  CHECK_THROWS_AS(spec.validate(3, 2), ConfigError);
  spec.domains = {{"a", Corruption::parse("identity"), 0, 0, {}, {}}};
  CHECK_THROWS_AS(spec.validate(2, 2), ConfigError);
  CHECK_THROWS_AS(Episode(EpisodeSpec{}, nullptr), ConfigError);
}

TEST_CASE("pretraining learns the source and is deterministic") {
  const Dataset d = make_source_dataset(make_blob_spec({4, 4, 3.0, 1.0, 100}, 2), 2);
  const auto [train, test] = split_dataset(d, 0.2, 2);
  PretrainConfig cfg;
  cfg.epochs = 10;
  const Model init = Model::init({4, {16}, 4}, 1);
  const PretrainResult a = pretrain_source(init, train, cfg, 4);
  const PretrainResult b = pretrain_source(init, train, cfg, 4);
  CHECK(std::equal(a.model.params().begin(), a.model.params().end(), b.model.params().begin()));
  CHECK(a.epoch_losses.size() == 10);
  CHECK(a.epoch_losses.back() < a.epoch_losses.front());
  CHECK(accuracy(a.model, test.x, test.y, NormMode::source_stats) > 0.85);
  CHECK(accuracy(init, test.x, test.y, NormMode::source_stats) < 0.6);

  // running stats are the population moments of the first norm input
  const Matrix z = (train.x * a.model.weight(0).transpose()).rowwise() + a.model.bias(0).transpose();
  const Vector mean = z.colwise().mean().transpose();
  CHECK((a.model.running_mean(0) - mean).norm() < 1e-9);

  CHECK_THROWS_AS(pretrain_source(Model::init({3, {4}, 4}, 1), train, cfg, 1), ConfigError);
}

TEST_CASE("dataset files round trip") {
  Dataset d;
  d.x = testutil::random_matrix(3, 2, 1);
  d.y = {0, 2, 1};
  d.num_classes = 3;
  d.images = {Image{2, 1, {0, 255}}, std::nullopt, Image{1, 1, {7}}};
  const auto path = temp_file("eatta_test_ds.jsonl");
  save_dataset_file(path, d);
  const Dataset r = load_dataset_file(path, 3);
  CHECK(r.y == d.y);
  CHECK(r.images == d.images);
  CHECK((r.x - d.x).cwiseAbs().maxCoeff() == 0.0);
  CHECK(load_dataset_file(path).num_classes == 3);

  std::ofstream(path) << "{\"x\":[1,2],\"y\":0}\n{\"x\":[1],\"y\":1}\n";
  CHECK_THROWS_AS(load_dataset_file(path), IoError);
  std::ofstream(path) << "not json\n";
  CHECK_THROWS_AS(load_dataset_file(path), IoError);
  std::ofstream(path) << "";
  CHECK_THROWS_AS(load_dataset_file(path), IoError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_dataset_file(path), IoError);
}
