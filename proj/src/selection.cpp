#include "eatta/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eatta/error.hpp"
#include "eatta/text.hpp"

namespace eatta {

PredictionSet PredictionSet::from_probs(const Matrix& probs) {
  PredictionSet p;
  p.probs = probs;
  const auto cols = static_cast<std::size_t>(probs.cols());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const std::span<const double> row(probs.row(r).data(), cols);
    const int y = argmax(row);
    p.pseudo_labels.push_back(y);
    p.entropies.push_back(entropy(row));
    p.confidences.push_back(row[y]);
  }
  return p;
}

PredictionSet predict(const Model& model, const Matrix& x) {
  if (x.rows() == 0) throw ConfigError("predict: empty batch");
  return PredictionSet::from_probs(forward(model, x, NormMode::batch_stats).probs);
}

std::vector<bool> confident_mask(const PredictionSet& preds, int num_classes, double threshold_factor) {
  const double threshold = threshold_factor * std::log(static_cast<double>(num_classes));
  std::vector<bool> mask(preds.entropies.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = preds.entropies[i] < threshold;
  return mask;
}

int Budget::grant(std::int64_t batch_counter) const {
  if (kind == Kind::per_batch) return count;
  return batch_counter % period == 0 ? 1 : 0;
}

Budget Budget::parse(std::string_view text) {
  text = trim(text);
  Budget b;
  const auto slash = text.find('/');
  long long a = 0;
  if (slash == std::string_view::npos) {
    if (!parse_int(text, a) || a < 0) throw ConfigError("budget: expected 'n' or '1/m', got '" + std::string(text) + "'");
    b.kind = Kind::per_batch;
    b.count = static_cast<int>(a);
    return b;
  }
  long long m = 0;
  if (!parse_int(text.substr(0, slash), a) || a != 1 || !parse_int(text.substr(slash + 1), m) || m < 1) {
    throw ConfigError("budget: expected '1/m' with m >= 1, got '" + std::string(text) + "'");
  }
  b.kind = Kind::every_m;
  b.count = 1;
  b.period = static_cast<int>(m);
  return b;
}

std::string Budget::to_string() const {
  if (kind == Kind::per_batch) return std::to_string(count);
  return "1/" + std::to_string(period);
}

void update_history(SelectionState& state, int oracle_label) {
  if (state.history_k <= 0) {
    state.history.clear();
    return;
  }
  state.history.push_back(oracle_label);
  while (static_cast<int>(state.history.size()) > state.history_k) state.history.pop_front();
}

Vector perturbation_noise(const SeedTree& seeds, const PerturbationKey& key, int sample, int draw, int dim,
                          double mu, double sigma) {
  Rng rng = seeds.stream("perturbation", {key.domain_key, key.batch_in_domain, static_cast<std::uint64_t>(sample),
                                          static_cast<std::uint64_t>(draw)});
  Vector eps(dim);
  for (int j = 0; j < dim; ++j) eps[j] = mu + sigma * rng.normal();
  return eps;
}

std::vector<double> confidence_diff(const Model& model, const ForwardPass& pass, const PredictionSet& preds,
                                    const SelectionState& state, const SeedTree& seeds, const PerturbationKey& key) {
  if (!(state.sigma >= 0.0)) throw ConfigError("confidence_diff: sigma must be >= 0");
  if (state.diff_draws < 1) throw ConfigError("confidence_diff: diff_draws must be >= 1");
  if (pass.features.cols() != model.feature_dim()) throw ConfigError("confidence_diff: feature-dim mismatch");
  if (preds.size() != pass.rows()) throw ConfigError("confidence_diff: predictions do not match the pass");
  const int n = static_cast<int>(pass.rows());
  const int dim = static_cast<int>(pass.features.cols());
  std::vector<double> diffs(n, 0.0);
  for (int draw = 0; draw < state.diff_draws; ++draw) {
    Matrix perturbed = pass.features;
    for (int i = 0; i < n; ++i) {
      perturbed.row(i) += perturbation_noise(seeds, key, i, draw, dim, state.mu, state.sigma).transpose();
    }
    const Matrix q = softmax_rows(classify(model, perturbed));
    for (int i = 0; i < n; ++i) {
      const int y = preds.pseudo_labels[i];
      diffs[i] += std::abs(preds.probs(i, y) - q(i, y));
    }
  }
  if (state.diff_draws > 1) {
    for (double& d : diffs) d /= state.diff_draws;
  }
  return diffs;
}

Strategy parse_strategy(std::string_view name) {
  name = trim(name);
  if (name == "ours") return Strategy::ours;
  if (name == "max_entropy") return Strategy::max_entropy;
  if (name == "least_confidence") return Strategy::least_confidence;
  if (name == "min_margin") return Strategy::min_margin;
  if (name == "random") return Strategy::random;
  throw ConfigError("unknown selection strategy '" + std::string(name) +
                    "' (expected ours, max_entropy, least_confidence, min_margin, random)");
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::ours:
      return "ours";
    case Strategy::max_entropy:
      return "max_entropy";
    case Strategy::least_confidence:
      return "least_confidence";
    case Strategy::min_margin:
      return "min_margin";
    case Strategy::random:
      return "random";
  }
  return "ours";
}

namespace {

// Highest score among allowed & unchosen indices; -1 if none.
int best_index(const std::vector<double>& scores, const std::vector<bool>& taken, const std::vector<bool>* allowed) {
  int best = -1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (taken[i] || (allowed && !(*allowed)[i])) continue;
    if (best < 0 || scores[i] > scores[best]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace

SelectionDecision pick_by_score(const std::vector<double>& scores, const std::vector<int>& pseudo_labels, int count,
                                const std::deque<int>* history, int history_k) {
  if (scores.empty()) throw ConfigError("selection: empty batch");
  if (scores.size() != pseudo_labels.size()) throw ConfigError("selection: scores and labels differ in length");
  SelectionDecision d;
  d.scores = scores;
  const int n = static_cast<int>(scores.size());
  count = std::min(count, n);
  std::deque<int> working = history ? *history : std::deque<int>{};
  std::vector<bool> taken(n, false);
  for (int pick = 0; pick < count; ++pick) {
    const int plain = best_index(scores, taken, nullptr);
    int chosen = plain;
    bool fired = false;
    if (history) {
      std::vector<bool> absent(n, false);
      for (int i = 0; i < n; ++i) {
        absent[i] = std::find(working.begin(), working.end(), pseudo_labels[i]) == working.end();
      }
      const int preferred = best_index(scores, taken, &absent);
      if (preferred >= 0) {
        chosen = preferred;
        fired = preferred != plain;
      }
      if (history_k > 0) {
        working.push_back(pseudo_labels[chosen]);
        while (static_cast<int>(working.size()) > history_k) working.pop_front();
      }
    }
    taken[chosen] = true;
    d.chosen.push_back(chosen);
    d.balance_fired.push_back(fired);
  }
  return d;
}

SelectionDecision select_for_annotation(const std::vector<double>& diffs, const PredictionSet& preds,
                                        const SelectionState& state, int count, bool class_balance) {
  if (preds.size() == 0) throw ConfigError("selection: empty batch");
  if (count <= 0) {
    SelectionDecision d;
    d.strategy = "ours";
    return d;
  }
  auto d = pick_by_score(diffs, preds.pseudo_labels, count, class_balance ? &state.history : nullptr,
                         state.history_k);
  d.strategy = "ours";
  return d;
}

SelectionDecision select_baseline(Strategy strategy, const PredictionSet& preds, Rng& rng, int count) {
  if (preds.size() == 0) throw ConfigError("selection: empty batch");
  const int n = preds.size();
  std::vector<double> scores(n);
  switch (strategy) {
    case Strategy::max_entropy:
      scores = preds.entropies;
      break;
    case Strategy::least_confidence:
      for (int i = 0; i < n; ++i) scores[i] = -preds.confidences[i];
      break;
    case Strategy::min_margin:
      for (int i = 0; i < n; ++i) {
        double top1 = -1.0;
        double top2 = -1.0;
        for (Eigen::Index j = 0; j < preds.probs.cols(); ++j) {
          const double p = preds.probs(i, j);
          if (p > top1) {
            top2 = top1;
            top1 = p;
          } else if (p > top2) {
            top2 = p;
          }
        }
        scores[i] = -(top1 - top2);
      }
      break;
    case Strategy::random:
      for (int i = 0; i < n; ++i) scores[i] = rng.uniform();
      break;
    case Strategy::ours:
      throw ConfigError("select_baseline: 'ours' is not a baseline strategy");
  }
  if (count <= 0) {
    SelectionDecision d;
    d.scores = std::move(scores);
    d.strategy = strategy_name(strategy);
    return d;
  }
  auto d = pick_by_score(scores, preds.pseudo_labels, count, nullptr, 0);
  d.strategy = strategy_name(strategy);
  return d;
}

}  // namespace eatta
