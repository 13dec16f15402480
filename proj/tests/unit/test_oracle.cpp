#include <atomic>
#include <cmath>
#include <map>
#include <thread>

#include <boost/math/distributions/chi_squared.hpp>

#include "doctest.h"
#include "eatta/engine.hpp"
#include "eatta/error.hpp"
#include "eatta/oracle.hpp"
#include "helpers.hpp"
#include "httplib.h"

using namespace eatta;
using namespace std::chrono_literals;

namespace {

Batch keyed_batch(int n, int classes, std::uint64_t key, int dim = 3) {
  std::vector<int> labels;
  for (int i = 0; i < n; ++i) labels.push_back(i % classes);
  return testutil::make_batch(testutil::random_matrix(n, dim, key), labels, key, static_cast<int>(key % 7));
}

// Polls /api/pending until a task shows up or the wait runs out.
std::optional<nlohmann::json> wait_for_task(httplib::Client& cli, std::chrono::milliseconds limit = 3000ms) {
  const auto end = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < end) {
    auto res = cli.Get("/api/pending");
    if (res && res->status == 200) return nlohmann::json::parse(res->body);
    std::this_thread::sleep_for(2ms);
  }
  return std::nullopt;
}

int post_label(httplib::Client& cli, const std::string& id, int label) {
  auto res = cli.Post("/api/label", nlohmann::json{{"task_id", id}, {"label", label}}.dump(), "application/json");
  return res ? res->status : -1;
}

}  // namespace

TEST_CASE("ground truth oracle") {
  GroundTruthOracle o;
  const Batch b = keyed_batch(5, 3, 1);
  for (int i = 0; i < 5; ++i) CHECK(o.annotate({&b, i, 0}).label == b.labels[i]);
  CHECK_THROWS_AS(o.annotate({&b, 5, 0}), OracleError);
  CHECK_THROWS_AS(o.annotate({nullptr, 0, 0}), OracleError);
}

TEST_CASE("noisy oracle flips at rate p to a uniform wrong class") {
  const int classes = 5;
  NoisyOracle o(0.3, classes, SeedTree(4));
  int flips = 0, total = 0;
  std::vector<double> offsets(classes - 1, 0.0);
  for (std::uint64_t key = 0; key < 400; ++key) {
    const Batch b = keyed_batch(50, classes, key);
    for (int i = 0; i < b.size(); ++i) {
      const int got = o.annotate({&b, i, 0}).label;
      REQUIRE((got >= 0 && got < classes));
      ++total;
      if (got != b.labels[i]) {
        ++flips;
        offsets[(got - b.labels[i] + classes) % classes - 1] += 1.0;
      }
    }
  }
  const double rate = static_cast<double>(flips) / total;
  const double sd = std::sqrt(0.3 * 0.7 / total);
  CHECK(std::abs(rate - 0.3) < 4.0 * sd);
  const double expect = flips / (classes - 1.0);
  double stat = 0.0;
  for (double c : offsets) stat += (c - expect) * (c - expect) / expect;
  CHECK(boost::math::cdf(boost::math::complement(boost::math::chi_squared(classes - 2), stat)) > 0.001);
}

TEST_CASE("noisy oracle is keyed per sample and exact at the ends") {
  const Batch b = keyed_batch(20, 4, 9);
  NoisyOracle a(0.5, 4, SeedTree(1)), c(0.5, 4, SeedTree(1));
  std::vector<int> forward, backward(20);
  for (int i = 0; i < 20; ++i) forward.push_back(a.annotate({&b, i, 0}).label);
  for (int i = 19; i >= 0; --i) backward[i] = c.annotate({&b, i, 0}).label;
  CHECK(forward == backward);
  NoisyOracle never(0.0, 4, SeedTree(1)), always(1.0, 4, SeedTree(1));
  for (int i = 0; i < 20; ++i) {
    CHECK(never.annotate({&b, i, 0}).label == b.labels[i]);
    CHECK(always.annotate({&b, i, 0}).label != b.labels[i]);
  }
  CHECK_THROWS_AS(NoisyOracle(1.5, 4, SeedTree(1)), ConfigError);
}

TEST_CASE("model oracle answers from its own model, independent of the batch") {
  const Model m = testutil::random_model({3, {6}, 4}, 2);
  ModelOracle o(m);
  Batch b = keyed_batch(10, 4, 3);
  const int first = o.annotate({&b, 2, 0}).label;
  const ForwardPass p = forward(m, b.x.row(2), NormMode::source_stats);
  CHECK(first == argmax(std::span<const double>(p.probs.row(0).data(), 4)));
  b.x.row(0).setConstant(100.0);
  CHECK(o.annotate({&b, 2, 0}).label == first);
  const Batch wrong = keyed_batch(2, 4, 3, 5);
  CHECK_THROWS_AS(o.annotate({&wrong, 0, 0}), OracleError);
}

TEST_CASE("oracle factory") {
  OracleConfig c;
  CHECK(make_oracle(c, 3, SeedTree(1), nullptr, {})->kind() == "ground_truth");
  c.kind = OracleKind::noisy;
  c.noise = 0.2;
  CHECK(make_oracle(c, 3, SeedTree(1), nullptr, {})->kind() == "noisy");
  c.kind = OracleKind::model;
  CHECK_THROWS_AS(make_oracle(c, 3, SeedTree(1), nullptr, {}), ConfigError);
  c.snapshot = "/nonexistent/annotator.snap";
  CHECK_THROWS_AS(make_oracle(c, 3, SeedTree(1), nullptr, {}), IoError);
  c.kind = OracleKind::human;
  CHECK_THROWS_AS(make_oracle(c, 3, SeedTree(1), nullptr, {}), ConfigError);
  for (const char* k : {"ground_truth", "noisy", "model", "human"}) CHECK(oracle_kind_name(parse_oracle_kind(k)) == k);
  CHECK_THROWS_AS(parse_oracle_kind("crowd"), ConfigError);
  CHECK_THROWS_AS(parse_fallback_kind("ask"), ConfigError);
}

TEST_CASE("annotation queue") {
  AnnotationQueue q(3);
  CHECK_FALSE(q.pending());
  CHECK(q.submit("t1", 0) == SubmitResult::stale);
  AnnotationTask t;
  t.task_id = q.next_task_id();
  std::optional<int> got;
  std::thread asker([&] { got = q.ask(t, std::chrono::steady_clock::now() + 2s); });
  while (!q.pending()) std::this_thread::sleep_for(1ms);
  CHECK(q.submit(t.task_id, 3) == SubmitResult::out_of_range);
  CHECK(q.submit("other", 1) == SubmitResult::stale);
  CHECK(q.submit(t.task_id, 2) == SubmitResult::accepted);
  CHECK(q.submit(t.task_id, 2) == SubmitResult::stale);
  asker.join();
  CHECK(got == 2);
  CHECK_FALSE(q.pending());

  AnnotationTask late;
  late.task_id = q.next_task_id();
  CHECK_FALSE(q.ask(late, std::chrono::steady_clock::now() + 20ms));
  CHECK(q.submit(late.task_id, 1) == SubmitResult::stale);
}

TEST_CASE("bind address parsing") {
  CHECK(parse_bind("8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
  CHECK(parse_bind("0.0.0.0:9000") == std::pair<std::string, int>{"0.0.0.0", 9000});
  CHECK(parse_bind(":0") == std::pair<std::string, int>{"127.0.0.1", 0});
  for (const char* bad : {"", "host:", "x:70000", "abc"}) CHECK_THROWS_AS(parse_bind(bad), ConfigError);
}

TEST_CASE("HTTP annotation service") {
  AnnotationQueue q(3);
  StatusBoard board;
  AnnotationService svc(q, board, {"cat", "dog", "eel"});
  HumanOracle human(q, {"cat", "dog", "eel"}, 5.0, true, nullptr);
  const Batch b = keyed_batch(6, 3, 1, 2);
  CHECK_THROWS_AS(human.annotate({&b, 0, 1}), OracleError);  // no service yet
  svc.start("127.0.0.1", 0);
  REQUIRE(svc.port() > 0);
  httplib::Client cli("127.0.0.1", svc.port());

  SUBCASE("idle endpoints") {
    auto r = cli.Get("/api/pending");
    REQUIRE(r);
    CHECK(r->status == 204);
    r = cli.Get("/api/classes");
    CHECK(nlohmann::json::parse(r->body)["classes"] == nlohmann::json({"cat", "dog", "eel"}));
    board.publish({{"batch_index", 4}});
    r = cli.Get("/api/status");
    CHECK(nlohmann::json::parse(r->body)["batch_index"] == 4);
    CHECK(post_label(cli, "t99", 0) == 409);
  }

  SUBCASE("answer, conflicts and validation") {
    std::optional<Annotation> ans;
    std::thread engine([&] { ans = human.annotate({&b, 4, 1}); });
    const auto task = wait_for_task(cli);
    REQUIRE(task);
    const std::string id = (*task)["task_id"];
    CHECK((*task)["pseudo_label_hint"] == 1);
    CHECK((*task)["highlight"] == 4);
    CHECK((*task)["context"].size() == 6);
    CHECK((*task)["features"].size() == 2);
    CHECK((*task)["deadline_ms"].get<std::int64_t>() > (*task)["issued_ms"].get<std::int64_t>());
    CHECK(post_label(cli, id, 7) == 422);
    CHECK(post_label(cli, "wrong", 0) == 409);
    auto bad = cli.Post("/api/label", "{not json", "application/json");
    CHECK(bad->status == 400);
    bad = cli.Post("/api/label", R"({"task_id": 3, "label": "x"})", "application/json");
    CHECK(bad->status == 400);
    CHECK(post_label(cli, id, 2) == 200);
    engine.join();
    REQUIRE(ans);
    CHECK(ans->label == 2);
    CHECK(ans->source == "human");
    CHECK(post_label(cli, id, 2) == 409);
    CHECK(cli.Get("/api/pending")->status == 204);
  }

  svc.stop();
  CHECK_FALSE(svc.running());
}

TEST_CASE("a slow client gets the fallback path and one 409") {
  AnnotationQueue q(3);
  StatusBoard board;
  AnnotationService svc(q, board, default_class_names(3));
  svc.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", svc.port());
  HumanOracle human(q, default_class_names(3), 0.15, false, std::make_unique<GroundTruthOracle>());
  const Batch b = keyed_batch(4, 3, 2);

  std::optional<Annotation> ans;
  std::thread engine([&] { ans = human.annotate({&b, 1, 0}); });
  const auto task = wait_for_task(cli);
  REQUIRE(task);
  CHECK((*task)["pseudo_label_hint"].is_null());
  engine.join();  // deadline passes while the client dawdles
  int conflicts = 0;
  if (post_label(cli, (*task)["task_id"], 0) == 409) ++conflicts;
  CHECK(conflicts == 1);
  REQUIRE(ans);
  CHECK(ans->label == b.labels[1]);
  CHECK(ans->source == "fallback:ground_truth");

  HumanOracle strict(q, default_class_names(3), 0.05, false, nullptr);
  CHECK_THROWS_AS(strict.annotate({&b, 0, 0}), OracleError);
}

TEST_CASE("served run with a scripted client answering ground truth") {
  const SourceSpec spec = make_blob_spec({3, 2, 3.0, 1.0, 100}, 5);
  const Dataset d = make_source_dataset(spec, 5);
  PretrainConfig pc;
  pc.epochs = 4;
  const Model m = pretrain_source(Model::init({2, {8}, 3}, 5), d, pc, 5).model;
  EpisodeSpec es;
  es.batch_size = 16;
  es.seed = 2;
  es.domains = {{"a", Corruption::parse("rotate(0.4)"), 4, 0, {}, {}}, {"b", Corruption::parse("noise(0.5)"), 4, 0, {}, {}}};
  auto source = std::make_shared<SampleSource>(spec);

  // the client looks answers up by feature vector
  std::map<std::vector<double>, int> truth;
  {
    Episode ep(es, source);
    for (;;) {
      StreamEvent e = ep.next();
      if (std::holds_alternative<EndOfEpisode>(e)) break;
      if (const auto* bt = std::get_if<Batch>(&e))
        for (int i = 0; i < bt->size(); ++i) truth[{bt->x(i, 0), bt->x(i, 1)}] = bt->labels[i];
    }
  }

  AnnotationQueue q(3);
  StatusBoard board;
  AnnotationService svc(q, board, default_class_names(3));
  svc.start("127.0.0.1", 0);
  std::atomic<bool> done{false};
  std::thread client([&] {
    httplib::Client cli("127.0.0.1", svc.port());
    while (!done) {
      auto r = cli.Get("/api/pending");
      if (r && r->status == 200) {
        const auto t = nlohmann::json::parse(r->body);
        const std::vector<double> f = t["features"];
        post_label(cli, t["task_id"], truth.at(f));
      } else {
        std::this_thread::sleep_for(1ms);
      }
    }
  });
  HumanOracle human(q, default_class_names(3), 10.0, false, std::make_unique<GroundTruthOracle>());
  EngineConfig cfg;
  cfg.optimizer = {OptimizerKind::sgd_momentum, 0.05, 0.9};
  Engine engine(take_snapshot(m, Optimizer({}, m.num_trainable())), cfg, human, 3);
  Episode ep(es, source);
  const RunReport r = run_episode(ep, engine, {"", 3}, [&](const StepReport&, const ReportBuilder& rb) {
    board.publish(status_json(rb, 8, false));
  });
  done = true;
  client.join();
  svc.stop();
  CHECK(r.status == "ok");
  CHECK(r.total_fallbacks() == 0);
  CHECK(r.annotations.size() == 8);
  for (const auto& a : r.annotations) {
    CHECK(a.sample.source == "human");
    CHECK(a.sample.label == a.sample.true_label);
  }
  CHECK(board.snapshot()["batch_index"] == 7);
}
