#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "eatta/error.hpp"
#include "eatta/metrics.hpp"
#include "eatta/model.hpp"
#include "eatta/oracle.hpp"
#include "eatta/rng.hpp"
#include "eatta/selection.hpp"
#include "eatta/stream.hpp"

namespace eatta {

inline constexpr double kNormFloor = 1e-12;

/// Ablation switches: perturbation-based scoring, class balancing,
/// gradient-norm debiasing, and smoothing of the debias weights.
struct Toggles {
  bool pd = true;
  bool cb = true;
  bool gnd = true;
  bool ema = true;

  /// "PD+CB+GND+EMA", any subset joined by '+', or "none".
  static Toggles parse(std::string_view text);
  std::string to_string() const;
  bool operator==(const Toggles&) const = default;
};

struct DebiasState {
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  double alpha = 0.8;
  bool gnd = true;
  bool ema = true;
  double last_norm_sup = 0.0;
  double last_norm_unsup = 0.0;
};

/// (2|g_u| / (|g_s|+|g_u|), 2|g_s| / (|g_s|+|g_u|)), or (1,1) when either
/// norm is at or below kNormFloor.
std::pair<double, double> debias_weights(double norm_sup, double norm_unsup);

void ema_update(DebiasState& state, std::pair<double, double> raw);

struct ReplayItem {
  Vector x;
  int label = 0;
  int domain_id = 0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity = 0);

  void push(ReplayItem item);
  /// min(count, size) distinct items, uniformly without replacement.
  std::vector<ReplayItem> draw(Rng& rng, int count) const;
  std::vector<std::size_t> draw_indices(Rng& rng, int count) const;

  int capacity() const { return capacity_; }
  int size() const { return static_cast<int>(items_.size()); }
  const std::deque<ReplayItem>& items() const { return items_; }
  void clear() { items_.clear(); }

 private:
  int capacity_;
  std::deque<ReplayItem> items_;
};

/// Unsupervised weight on batches without supervised terms.
enum class IdleWeight { carried, one };

struct EngineConfig {
  Strategy strategy = Strategy::ours;
  Toggles toggles;
  Budget budget;
  double sigma = 0.01;
  double mu = 0.0;
  int diff_draws = 1;
  int history_k = 5;
  double alpha = 0.8;
  double threshold_factor = 0.4;
  int buffer_capacity = 0;
  int replay_size = 32;
  OptimizerConfig optimizer;
  IdleWeight idle_weight = IdleWeight::carried;

  void validate() const;
  bool operator==(const EngineConfig&) const = default;
};

/// Index sets and values of the two loss terms of one step. Supervised rows
/// index the supervised forward, whose first rows are the online batch and
/// whose remaining rows are the replay draw.
struct LossBundle {
  std::vector<int> sup_rows;
  std::vector<int> sup_labels;
  std::vector<int> unsup_rows;
  double loss_sup = 0.0;
  double loss_unsup = 0.0;
  int batch_rows = 0;
};

/// Raised when a step cannot complete; carries the final step report.
class StepAborted : public Error {
 public:
  StepAborted(const std::string& what, StepReport report) : Error(what), report_(std::move(report)) {}
  const StepReport& report() const { return report_; }

 private:
  StepReport report_;
};

class Engine {
 public:
  Engine(Snapshot source, EngineConfig config, Oracle& oracle, std::uint64_t seed);

  StepReport adapt_step(const Batch& batch);
  /// Source parameters, fresh optimizer, neutral debias state, empty
  /// history, buffer and budget counter.
  void reset_to_source();

  const Model& model() const { return model_; }
  const Optimizer& optimizer() const { return optimizer_; }
  const DebiasState& debias() const { return debias_; }
  const SelectionState& selection() const { return selection_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const LossBundle& last_losses() const { return last_losses_; }
  const EngineConfig& config() const { return config_; }
  const SeedTree& seeds() const { return seeds_; }

 private:
  Snapshot source_;
  EngineConfig config_;
  Oracle& oracle_;
  SeedTree seeds_;
  Model model_;
  Optimizer optimizer_;
  DebiasState debias_;
  SelectionState selection_;
  ReplayBuffer buffer_;
  LossBundle last_losses_;
};

/// Status JSON served on /api/status.
nlohmann::json status_json(const ReportBuilder& builder, std::int64_t total_batches, bool finished);

using StepObserver = std::function<void(const StepReport&, const ReportBuilder&)>;

struct RunMeta {
  std::string config_text;
  std::uint64_t seed = 0;
};

/// Drives an engine over an episode; FTTA episodes reset the engine at every
/// domain boundary. A failed step ends the run with the
/// report status set to the failure and its last step included.
RunReport run_episode(Episode& episode, Engine& engine, const RunMeta& meta, const StepObserver& observer = {});

/// Predictions of a fixed model, no adaptation and no annotation.
RunReport run_source_baseline(Episode& episode, const Model& model, NormMode mode, const RunMeta& meta);

/// Straight entropy minimization over every row of each batch, written
/// independently of the engine. Returns the per-batch error counts; the
/// final trainable parameters are written to `final_params` if given.
std::vector<int> entropy_minimization_reference(Episode& episode, const Snapshot& source,
                                                const OptimizerConfig& optimizer,
                                                std::vector<double>* final_params = nullptr);

}  // namespace eatta
