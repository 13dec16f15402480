#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <string_view>
#include <vector>

#include "eatta/model.hpp"
#include "eatta/rng.hpp"

namespace eatta {

struct PredictionSet {
  Matrix probs;
  std::vector<int> pseudo_labels;   // argmax, lowest index on ties
  std::vector<double> entropies;
  std::vector<double> confidences;  // probs[i][pseudo_label]

  int size() const { return static_cast<int>(pseudo_labels.size()); }
  static PredictionSet from_probs(const Matrix& probs);
};

/// Batch-stats forward plus the derived per-sample quantities.
PredictionSet predict(const Model& model, const Matrix& x);

/// entropy < factor * ln(C), strictly.
std::vector<bool> confident_mask(const PredictionSet& preds, int num_classes, double threshold_factor = 0.4);

/// Annotation budget: `count` labels on every batch, or one label on every
/// `period`-th batch (batches 0, m, 2m, ... of the run).
struct Budget {
  enum class Kind { per_batch, every_m };

  Kind kind = Kind::per_batch;
  int count = 1;
  int period = 1;

  int grant(std::int64_t batch_counter) const;
  /// "0", "n" (per batch) or "1/m".
  static Budget parse(std::string_view text);
  std::string to_string() const;
  bool operator==(const Budget&) const = default;
};

struct SelectionState {
  double sigma = 0.01;
  double mu = 0.0;
  int diff_draws = 1;
  int history_k = 5;
  std::deque<int> history;  // oldest first
  Budget budget;
  std::int64_t batch_counter = 0;
};

/// FIFO push, evicting the oldest entries beyond history_k.
void update_history(SelectionState& state, int oracle_label);

/// Identifies the perturbation substream of one batch.
struct PerturbationKey {
  std::uint64_t domain_key = 0;
  std::uint64_t batch_in_domain = 0;
};

/// The noise added to sample `sample`'s features on draw `draw`:
/// N(mu, sigma^2) per feature dimension. Depends on nothing else.
Vector perturbation_noise(const SeedTree& seeds, const PerturbationKey& key, int sample, int draw, int dim,
                          double mu, double sigma);

/// |p_i[y_i] - q_i[y_i]| with q_i = softmax(h(f(x_i) + eps_i)), averaged over
/// `state.diff_draws` draws. Reuses the cached features of `pass`.
std::vector<double> confidence_diff(const Model& model, const ForwardPass& pass, const PredictionSet& preds,
                                    const SelectionState& state, const SeedTree& seeds, const PerturbationKey& key);

enum class Strategy { ours, max_entropy, least_confidence, min_margin, random };

Strategy parse_strategy(std::string_view name);
std::string strategy_name(Strategy s);

struct SelectionDecision {
  std::vector<int> chosen;
  std::vector<double> scores;
  std::string strategy;
  std::vector<bool> balance_fired;  // per chosen index: precedence changed the pick
};

/// Shared pick mechanics for every strategy: repeatedly take the highest
/// score (lowest index on ties) among remaining indices. With a history, the
/// candidates whose pseudo-label is absent from it take precedence, and each
/// pick's pseudo-label is appended to a working copy before the next pick.
SelectionDecision pick_by_score(const std::vector<double>& scores, const std::vector<int>& pseudo_labels, int count,
                                const std::deque<int>* history, int history_k);

/// Class-balanced pick on the perturbation scores; `count` = labels granted.
SelectionDecision select_for_annotation(const std::vector<double>& diffs, const PredictionSet& preds,
                                        const SelectionState& state, int count, bool class_balance = true);

/// Table-style baselines: scores are entropy, -confidence, -(top1 - top2) or
/// uniform draws from `rng`; no class balancing.
SelectionDecision select_baseline(Strategy strategy, const PredictionSet& preds, Rng& rng, int count);

}  // namespace eatta
