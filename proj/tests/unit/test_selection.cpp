#include <algorithm>
#include <cmath>

#include "brute_selection.hpp"
#include "doctest.h"
#include "eatta/error.hpp"
#include "eatta/selection.hpp"
#include "helpers.hpp"

using namespace eatta;

namespace {

struct Case {
  Model model;
  Matrix x;
  SelectionState state;
  PerturbationKey key;
  int count;
};

Case random_case(std::uint64_t seed) {
  Rng rng(seed);
  const int classes = 2 + static_cast<int>(rng.below(9));
  const int width = 2 + static_cast<int>(rng.below(8));
  const ArchSpec arch{1 + static_cast<int>(rng.below(6)), {width}, classes};
  Case c{testutil::random_model(arch, seed), testutil::random_matrix(4 + static_cast<int>(rng.below(60)), arch.input_dim, seed + 1),
         {}, {rng.next_u64() % 100, rng.below(50)}, 1 + static_cast<int>(rng.below(4))};
  c.state.sigma = std::vector<double>{0.01, 0.1, 1.0, 3.0}[rng.below(4)];
  c.state.diff_draws = 1 + static_cast<int>(rng.below(3));
  c.state.history_k = static_cast<int>(rng.below(6));
  for (int i = 0; i < c.state.history_k; ++i) c.state.history.push_back(static_cast<int>(rng.below(static_cast<std::size_t>(classes))));
  return c;
}

}  // namespace

TEST_CASE("perturbation scores and picks equal the brute-force recomputation") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Case c = random_case(seed);
    const SeedTree seeds(seed * 31 + 5);
    const ForwardPass pass = forward(c.model, c.x, NormMode::batch_stats);
    const PredictionSet preds = PredictionSet::from_probs(pass.probs);
    const auto diffs = confidence_diff(c.model, pass, preds, c.state, seeds, c.key);
    const auto brute = oracle::brute_diffs(c.model, c.x, seeds, c.key, c.state.sigma, c.state.mu, c.state.diff_draws);
    CHECK(preds.pseudo_labels == brute.pseudo);
    REQUIRE(diffs.size() == brute.diffs.size());
    for (std::size_t i = 0; i < diffs.size(); ++i) {
      CHECK(diffs[i] == doctest::Approx(brute.diffs[i]).epsilon(1e-12));
      CHECK(diffs[i] >= 0.0);
      CHECK(diffs[i] <= 1.0);
    }
    // Picks are compared on identical scores so rounding cannot flip a tie.
    for (bool balance : {true, false}) {
      const auto got = select_for_annotation(diffs, preds, c.state, c.count, balance);
      const auto want = oracle::brute_select(diffs, preds.pseudo_labels, c.state.history, c.state.history_k, c.count, balance);
      CHECK(got.chosen == want);
    }
  }
}

TEST_CASE("zero sigma gives identically zero scores") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Case c = random_case(seed);
    c.state.sigma = 0.0;
    const ForwardPass pass = forward(c.model, c.x, NormMode::batch_stats);
    const auto diffs = confidence_diff(c.model, pass, PredictionSet::from_probs(pass.probs), c.state, SeedTree(1), c.key);
    for (double d : diffs) CHECK(d == 0.0);
  }
}

TEST_CASE("perturbation noise depends only on its key") {
  const SeedTree seeds(42);
  const Vector a = perturbation_noise(seeds, {3, 4}, 5, 0, 8, 0.0, 1.0);
  CHECK(a == perturbation_noise(seeds, {3, 4}, 5, 0, 8, 0.0, 1.0));
  CHECK(a != perturbation_noise(seeds, {3, 4}, 6, 0, 8, 0.0, 1.0));
  CHECK(a != perturbation_noise(seeds, {3, 5}, 5, 0, 8, 0.0, 1.0));
  CHECK(a != perturbation_noise(seeds, {3, 4}, 5, 1, 8, 0.0, 1.0));
  const Vector shifted = perturbation_noise(seeds, {3, 4}, 5, 0, 8, 2.0, 1.0);
  CHECK((shifted.array() - a.array() - 2.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("pick rule") {
  const PredictionSet preds = PredictionSet::from_probs(
      (Matrix(4, 3) << 0.8, 0.1, 0.1, 0.1, 0.8, 0.1, 0.1, 0.1, 0.8, 0.7, 0.2, 0.1).finished());
  CHECK(preds.pseudo_labels == std::vector<int>{0, 1, 2, 0});
  SelectionState s;
  s.history_k = 2;

  SUBCASE("largest score wins, lowest index on ties") {
    CHECK(select_for_annotation({0.1, 0.5, 0.5, 0.2}, preds, s, 1).chosen == std::vector<int>{1});
    CHECK(select_for_annotation({0.1, 0.5, 0.5, 0.2}, preds, s, 3).chosen == std::vector<int>{1, 2, 3});
  }
  SUBCASE("absent classes take precedence") {
    s.history = {1, 2};
    const auto d = select_for_annotation({0.1, 0.9, 0.8, 0.2}, preds, s, 1);
    CHECK(d.chosen == std::vector<int>{3});
    CHECK(d.balance_fired == std::vector<bool>{true});
  }
  SUBCASE("falls back to all candidates when every class is recent") {
    s.history_k = 3;
    s.history = {0, 1, 2};
    CHECK(select_for_annotation({0.1, 0.9, 0.8, 0.2}, preds, s, 1).chosen == std::vector<int>{1});
  }
  SUBCASE("working history updates between picks") {
    s.history = {2, 2};
    // first pick: class 0 or 1 absent -> 1 (0.9); then history {2,1} -> class 0 -> 3 (0.2 beats 0.1)
    CHECK(select_for_annotation({0.1, 0.9, 0.8, 0.2}, preds, s, 2).chosen == std::vector<int>{1, 3});
    CHECK(s.history.size() == 2);
  }
  SUBCASE("class balance off ignores history") {
    s.history = {1, 2};
    CHECK(select_for_annotation({0.1, 0.9, 0.8, 0.2}, preds, s, 1, false).chosen == std::vector<int>{1});
  }
  SUBCASE("count beyond the batch takes everyone") {
    CHECK(select_for_annotation({0.1, 0.9, 0.8, 0.2}, preds, s, 10).chosen.size() == 4);
    CHECK(select_for_annotation({0.1, 0.9, 0.8, 0.2}, preds, s, 0).chosen.empty());
  }
}

TEST_CASE("history is a bounded FIFO") {
  SelectionState s;
  s.history_k = 3;
  for (int v : {1, 2, 3, 4, 5}) update_history(s, v);
  CHECK(s.history == std::deque<int>{3, 4, 5});
  s.history_k = 0;
  update_history(s, 9);
  CHECK(s.history.empty());
}

TEST_CASE("baseline strategies") {
  const PredictionSet preds = PredictionSet::from_probs(
      (Matrix(4, 3) << 0.9, 0.05, 0.05, 0.4, 0.35, 0.25, 0.34, 0.33, 0.33, 0.5, 0.4, 0.1).finished());
  Rng rng(1);
  CHECK(select_baseline(Strategy::max_entropy, preds, rng, 1).chosen == std::vector<int>{2});
  CHECK(select_baseline(Strategy::least_confidence, preds, rng, 1).chosen == std::vector<int>{2});
  CHECK(select_baseline(Strategy::min_margin, preds, rng, 1).chosen == std::vector<int>{2});
  CHECK(select_baseline(Strategy::min_margin, preds, rng, 2).chosen == std::vector<int>{2, 1});
  Rng a(7), b(7);
  const auto ra = select_baseline(Strategy::random, preds, a, 2);
  CHECK(ra.chosen == select_baseline(Strategy::random, preds, b, 2).chosen);
  CHECK(ra.chosen.size() == 2);
  CHECK(ra.chosen[0] != ra.chosen[1]);

  // uniform draws: each index first about a quarter of the time
  std::vector<int> first(4, 0);
  Rng r(3);
  for (int t = 0; t < 4000; ++t) ++first[select_baseline(Strategy::random, preds, r, 1).chosen[0]];
  for (int f : first) CHECK(std::abs(f - 1000) < 150);
}

TEST_CASE("strategy names round trip") {
  for (Strategy s : {Strategy::ours, Strategy::max_entropy, Strategy::least_confidence, Strategy::min_margin, Strategy::random})
    CHECK(parse_strategy(strategy_name(s)) == s);
  CHECK_THROWS_AS(parse_strategy("greedy"), ConfigError);
}

TEST_CASE("budget grants and parsing") {
  const Budget every3 = Budget::parse("1/3");
  CHECK(every3.kind == Budget::Kind::every_m);
  std::vector<int> g;
  for (int i = 0; i < 7; ++i) g.push_back(every3.grant(i));
  CHECK(g == std::vector<int>{1, 0, 0, 1, 0, 0, 1});
  CHECK(Budget::parse("0").grant(5) == 0);
  CHECK(Budget::parse("4").grant(0) == 4);
  for (const char* t : {"0", "1", "3", "1/5"}) CHECK(Budget::parse(t).to_string() == t);
  for (const char* t : {"", "-1", "1/0", "2/3", "x", "1/"}) CHECK_THROWS_AS(Budget::parse(t), ConfigError);
}

TEST_CASE("confidence gate is strict") {
  Matrix p(2, 2);
  p << 0.5, 0.5, 0.99, 0.01;
  const auto preds = PredictionSet::from_probs(p);
  const auto m = confident_mask(preds, 2, 0.4);
  CHECK(m == std::vector<bool>{false, true});
  CHECK(confident_mask(preds, 2, 1.0) == std::vector<bool>{false, true});
  CHECK(confident_mask(preds, 2, 1.0 + 1e-9) == std::vector<bool>{true, true});
  CHECK(preds.confidences[1] == 0.99);
  CHECK(preds.entropies[0] == doctest::Approx(std::log(2.0)));
}
