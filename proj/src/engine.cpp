#include "eatta/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eatta/error.hpp"
#include "eatta/text.hpp"

namespace eatta {

Toggles Toggles::parse(std::string_view text) {
  text = trim(text);
  Toggles t{false, false, false, false};
  if (text == "none" || text.empty()) return t;
  for (const auto& part : split(text, '+')) {
    const auto name = trim(part);
    bool* slot = nullptr;
    if (name == "PD") slot = &t.pd;
    if (name == "CB") slot = &t.cb;
    if (name == "GND") slot = &t.gnd;
    if (name == "EMA") slot = &t.ema;
    if (!slot) {
      throw ConfigError("toggles: unknown switch '" + std::string(name) + "' (expected PD, CB, GND, EMA or none)");
    }
    if (*slot) throw ConfigError("toggles: '" + std::string(name) + "' listed twice");
    *slot = true;
  }
  return t;
}

std::string Toggles::to_string() const {
  std::vector<std::string> on;
  if (pd) on.emplace_back("PD");
  if (cb) on.emplace_back("CB");
  if (gnd) on.emplace_back("GND");
  if (ema) on.emplace_back("EMA");
  if (on.empty()) return "none";
  std::string out = on[0];
  for (std::size_t i = 1; i < on.size(); ++i) out += "+" + on[i];
  return out;
}

std::pair<double, double> debias_weights(double norm_sup, double norm_unsup) {
  if (!(norm_sup > kNormFloor) || !(norm_unsup > kNormFloor)) return {1.0, 1.0};
  const double denom = norm_sup + norm_unsup;
  return {2.0 * norm_unsup / denom, 2.0 * norm_sup / denom};
}

void ema_update(DebiasState& state, std::pair<double, double> raw) {
  const double a = state.alpha;
  state.gamma1 = a * state.gamma1 + (1.0 - a) * raw.first;
  state.gamma2 = a * state.gamma2 + (1.0 - a) * raw.second;
}

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 0) throw ConfigError("replay buffer: capacity must be >= 0");
}

void ReplayBuffer::push(ReplayItem item) {
  if (capacity_ == 0) return;
  items_.push_back(std::move(item));
  while (static_cast<int>(items_.size()) > capacity_) items_.pop_front();
}

std::vector<std::size_t> ReplayBuffer::draw_indices(Rng& rng, int count) const {
  const std::size_t n = items_.size();
  const std::size_t k = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(count, 0)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

std::vector<ReplayItem> ReplayBuffer::draw(Rng& rng, int count) const {
  std::vector<ReplayItem> out;
  for (std::size_t i : draw_indices(rng, count)) out.push_back(items_[i]);
  return out;
}

void EngineConfig::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be a finite value >= 0");
  if (!std::isfinite(mu)) throw ConfigError("mu must be finite");
  if (diff_draws < 1) throw ConfigError("diff_draws must be >= 1");
  if (history_k < 0) throw ConfigError("history_k must be >= 0");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0,1)");
  if (!(threshold_factor > 0.0)) throw ConfigError("threshold_factor must be > 0 (inf allowed)");
  if (buffer_capacity < 0) throw ConfigError("buffer_capacity must be >= 0");
  if (replay_size < 0) throw ConfigError("replay_size must be >= 0");
  if (budget.count < 0) throw ConfigError("budget must be >= 0");
  if (budget.kind == Budget::Kind::every_m && budget.period < 1) throw ConfigError("budget period must be >= 1");
  if (!(optimizer.lr >= 0.0) || !std::isfinite(optimizer.lr)) throw ConfigError("lr must be a finite value >= 0");
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) throw ConfigError("beta1 must lie in [0,1)");
  if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) throw ConfigError("beta2 must lie in [0,1)");
  if (!(optimizer.eps > 0.0)) throw ConfigError("adam eps must be > 0");
}

// ---------------------------------------------------------------------------

Engine::Engine(Snapshot source, EngineConfig config, Oracle& oracle, std::uint64_t seed)
    : source_(std::move(source)),
      config_(std::move(config)),
      oracle_(oracle),
      seeds_(seed),
      model_(source_.model),
      optimizer_(config_.optimizer, source_.model.num_trainable()),
      buffer_(config_.buffer_capacity) {
  config_.validate();
  reset_to_source();
}

void Engine::reset_to_source() {
  model_ = source_.model;
  optimizer_ = Optimizer(config_.optimizer, model_.num_trainable());
  debias_ = DebiasState{};
  debias_.alpha = config_.alpha;
  debias_.gnd = config_.toggles.gnd;
  debias_.ema = config_.toggles.ema;
  selection_ = SelectionState{};
  selection_.sigma = config_.sigma;
  selection_.mu = config_.mu;
  selection_.diff_draws = config_.diff_draws;
  selection_.history_k = config_.history_k;
  selection_.budget = config_.budget;
  buffer_ = ReplayBuffer(config_.buffer_capacity);
  last_losses_ = LossBundle{};
}

namespace {

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

StepReport Engine::adapt_step(const Batch& batch) {
  const int n = batch.size();
  if (n == 0) throw ConfigError("adapt_step: empty batch");
  if (batch.x.rows() != n || batch.x.cols() != model_.arch().input_dim) {
    throw ConfigError("adapt_step: batch shape does not match the model");
  }
  const int num_classes = model_.num_classes();

  StepReport rep;
  rep.batch_index = batch.batch_index;
  rep.domain_id = batch.domain_id;
  rep.batch_in_domain = batch.batch_in_domain;
  rep.batch_size = n;
  rep.true_labels = batch.labels;
  rep.gamma = {debias_.gamma1, debias_.gamma2};
  rep.gamma_raw = rep.gamma;

  // (1) predict
  const ForwardPass pass = forward(model_, batch.x, NormMode::batch_stats);
  const PredictionSet preds = PredictionSet::from_probs(pass.probs);
  rep.predictions = preds.pseudo_labels;
  for (int i = 0; i < n; ++i) rep.errors += preds.pseudo_labels[i] != batch.labels[i] ? 1 : 0;
  const std::vector<bool> confident = confident_mask(preds, num_classes, config_.threshold_factor);
  rep.confident_count = static_cast<int>(std::count(confident.begin(), confident.end(), true));

  const std::uint64_t bkey = static_cast<std::uint64_t>(batch.batch_in_domain);

  // Replay items come from the buffer as it stood before this step.
  std::vector<ReplayItem> replay;
  if (buffer_.capacity() > 0 && buffer_.size() > 0 && config_.replay_size > 0) {
    Rng rrng = seeds_.stream("replay", {batch.domain_key, bkey});
    replay = buffer_.draw(rrng, config_.replay_size);
  }

  // (2) select and annotate
  const int grant = std::min(selection_.budget.grant(selection_.batch_counter), n);
  selection_.batch_counter += 1;
  std::vector<bool> annotated(n, false);
  std::vector<int> ann_rows;
  std::vector<int> ann_labels;
  if (grant > 0) {
    SelectionDecision decision;
    if (config_.strategy == Strategy::ours) {
      std::vector<double> scores;
      if (config_.toggles.pd) {
        scores = confidence_diff(model_, pass, preds, selection_, seeds_, {batch.domain_key, bkey});
      } else {
        Rng srng = seeds_.stream("selection", {batch.domain_key, bkey});
        scores.resize(n);
        for (double& s : scores) s = srng.uniform();
      }
      decision = select_for_annotation(scores, preds, selection_, grant, config_.toggles.cb);
    } else {
      Rng srng = seeds_.stream("selection", {batch.domain_key, bkey});
      decision = select_baseline(config_.strategy, preds, srng, grant);
    }
    rep.diffs = decision.scores;
    for (std::size_t k = 0; k < decision.chosen.size(); ++k) {
      const int idx = decision.chosen[k];
      Annotation a;
      try {
        a = oracle_.annotate({&batch, idx, preds.pseudo_labels[idx]});
      } catch (const OracleError& e) {
        rep.status = std::string("aborted: ") + e.what();
        throw StepAborted(rep.status, rep);
      }
      if (a.label < 0 || a.label >= num_classes) {
        rep.status = "aborted: oracle returned an out-of-range label";
        throw StepAborted(rep.status, rep);
      }
      ChosenSample c;
      c.index = idx;
      c.stream_index = idx < static_cast<int>(batch.stream_index.size()) ? batch.stream_index[idx] : 0;
      c.pseudo_label = preds.pseudo_labels[idx];
      c.label = a.label;
      c.true_label = batch.labels[idx];
      c.source = a.source;
      c.diff = decision.scores[idx];
      c.entropy = preds.entropies[idx];
      c.balance_fired = decision.balance_fired[k];
      rep.chosen.push_back(std::move(c));
      annotated[idx] = true;
      ann_rows.push_back(idx);
      ann_labels.push_back(a.label);
      buffer_.push({batch.x.row(idx).transpose(), a.label, batch.domain_id});
      update_history(selection_, a.label);
    }
  }

  // (3) loss bundle
  LossBundle lb;
  lb.batch_rows = n;
  lb.sup_rows = ann_rows;
  lb.sup_labels = ann_labels;
  for (std::size_t r = 0; r < replay.size(); ++r) {
    lb.sup_rows.push_back(n + static_cast<int>(r));
    lb.sup_labels.push_back(replay[r].label);
  }
  for (int i = 0; i < n; ++i) {
    if (confident[i] && !annotated[i]) lb.unsup_rows.push_back(i);
  }
  rep.sup_count = static_cast<int>(lb.sup_rows.size());
  rep.unsup_count = static_cast<int>(lb.unsup_rows.size());
  rep.replay_count = static_cast<int>(replay.size());

  // (4) gradients
  const LossSpec sup_spec = LossSpec::cross_entropy_over(lb.sup_rows, lb.sup_labels);
  const LossSpec unsup_spec = LossSpec::entropy_over(lb.unsup_rows);
  TrainableGradient gs;
  if (!replay.empty()) {
    Matrix xs(n + static_cast<Eigen::Index>(replay.size()), batch.x.cols());
    xs.topRows(n) = batch.x;
    for (std::size_t r = 0; r < replay.size(); ++r) xs.row(n + static_cast<Eigen::Index>(r)) = replay[r].x.transpose();
    const ForwardPass sup_pass = forward(model_, xs, NormMode::batch_stats);
    lb.loss_sup = evaluate_loss(sup_pass, sup_spec);
    gs = backward_trainable(model_, sup_pass, sup_spec);
  } else {
    lb.loss_sup = evaluate_loss(pass, sup_spec);
    gs = backward_trainable(model_, pass, sup_spec);
  }
  lb.loss_unsup = evaluate_loss(pass, unsup_spec);
  const TrainableGradient gu = backward_trainable(model_, pass, unsup_spec);
  rep.loss_sup = lb.loss_sup;
  rep.loss_unsup = lb.loss_unsup;
  rep.norm_sup = l2_norm(gs.values);
  rep.norm_unsup = l2_norm(gu.values);
  last_losses_ = lb;
  if (!std::isfinite(lb.loss_sup) || !std::isfinite(lb.loss_unsup) || !all_finite(gs.values) ||
      !all_finite(gu.values)) {
    rep.status = "aborted: non-finite loss or gradient";
    throw StepAborted(rep.status, rep);
  }
  debias_.last_norm_sup = rep.norm_sup;
  debias_.last_norm_unsup = rep.norm_unsup;

  // (5)-(6) weights
  const bool has_sup = !lb.sup_rows.empty();
  double w1 = debias_.gamma1;
  double w2 = debias_.gamma2;
  if (has_sup) {
    const auto raw = debias_.gnd ? debias_weights(rep.norm_sup, rep.norm_unsup) : std::pair{1.0, 1.0};
    rep.gamma_raw = {raw.first, raw.second};
    if (debias_.ema) {
      ema_update(debias_, raw);
    } else {
      debias_.gamma1 = raw.first;
      debias_.gamma2 = raw.second;
    }
    rep.debias_updated = true;
    w1 = debias_.gamma1;
    w2 = debias_.gamma2;
  } else if (config_.idle_weight == IdleWeight::one) {
    w2 = 1.0;
  }
  rep.gamma = {debias_.gamma1, debias_.gamma2};

  // (7) update
  if (!has_sup && lb.unsup_rows.empty()) return rep;
  std::vector<double> g(gs.values.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = w1 * gs.values[i] + w2 * gu.values[i];
  optimizer_step(model_, optimizer_, g);
  rep.updated = true;
  return rep;
}

// ---------------------------------------------------------------------------

nlohmann::json status_json(const ReportBuilder& builder, std::int64_t total_batches, bool finished) {
  nlohmann::json j;
  const auto& steps = builder.steps();
  j["batch_index"] = steps.empty() ? -1 : steps.back().batch_index;
  j["total_batches"] = total_batches;
  j["domains_done"] = finished ? builder.domains_done() + 1 : builder.domains_done();
  j["running_error_pct"] = 100.0 * builder.running_error();
  nlohmann::json tail = nlohmann::json::array();
  const std::size_t from = steps.size() > 50 ? steps.size() - 50 : 0;
  for (std::size_t i = from; i < steps.size(); ++i) tail.push_back({steps[i].gamma[0], steps[i].gamma[1]});
  j["gamma_tail"] = std::move(tail);
  j["answered"] = builder.answered() - builder.fallbacks();
  j["fallbacks"] = builder.fallbacks();
  j["finished"] = finished;
  return j;
}

namespace {

std::vector<std::string> domain_names(const EpisodeSpec& spec) {
  std::vector<std::string> names;
  for (const auto& d : spec.domains) names.push_back(d.name);
  return names;
}

}  // namespace

RunReport run_episode(Episode& episode, Engine& engine, const RunMeta& meta, const StepObserver& observer) {
  ReportBuilder builder(domain_names(episode.spec()), engine.model().num_classes(), meta.config_text, meta.seed);
  for (;;) {
    StreamEvent ev = episode.next();
    if (std::holds_alternative<EndOfEpisode>(ev)) break;
    if (std::holds_alternative<DomainBoundary>(ev)) {
      if (episode.spec().mode == AdaptMode::ftta) engine.reset_to_source();
      continue;
    }
    const Batch& batch = std::get<Batch>(ev);
    try {
      StepReport rep = engine.adapt_step(batch);
      builder.accumulate(rep);
      if (observer) observer(rep, builder);
    } catch (const StepAborted& e) {
      builder.accumulate(e.report());
      builder.set_status(e.report().status);
      if (observer) observer(e.report(), builder);
      return builder.finish();
    }
  }
  return builder.finish();
}

RunReport run_source_baseline(Episode& episode, const Model& model, NormMode mode, const RunMeta& meta) {
  ReportBuilder builder(domain_names(episode.spec()), model.num_classes(), meta.config_text, meta.seed);
  for (;;) {
    StreamEvent ev = episode.next();
    if (std::holds_alternative<EndOfEpisode>(ev)) break;
    if (!std::holds_alternative<Batch>(ev)) continue;
    const Batch& batch = std::get<Batch>(ev);
    const ForwardPass pass = forward(model, batch.x, mode);
    StepReport rep;
    rep.batch_index = batch.batch_index;
    rep.domain_id = batch.domain_id;
    rep.batch_in_domain = batch.batch_in_domain;
    rep.batch_size = batch.size();
    rep.true_labels = batch.labels;
    for (Eigen::Index i = 0; i < pass.probs.rows(); ++i) {
      const std::span<const double> p(pass.probs.row(i).data(), static_cast<std::size_t>(pass.probs.cols()));
      rep.predictions.push_back(argmax(p));
      rep.errors += rep.predictions.back() != batch.labels[i] ? 1 : 0;
    }
    builder.accumulate(rep);
  }
  return builder.finish();
}

std::vector<int> entropy_minimization_reference(Episode& episode, const Snapshot& source,
                                                const OptimizerConfig& optimizer, std::vector<double>* final_params) {
  Model model = source.model;
  Optimizer opt(optimizer, model.num_trainable());
  std::vector<int> errors;
  for (;;) {
    StreamEvent ev = episode.next();
    if (std::holds_alternative<EndOfEpisode>(ev)) break;
    if (std::holds_alternative<DomainBoundary>(ev)) {
      if (episode.spec().mode == AdaptMode::ftta) {
        model = source.model;
        opt = Optimizer(optimizer, model.num_trainable());
      }
      continue;
    }
    const Batch& batch = std::get<Batch>(ev);
    const ForwardPass pass = forward(model, batch.x, NormMode::batch_stats);
    int wrong = 0;
    std::vector<int> rows;
    for (Eigen::Index i = 0; i < pass.probs.rows(); ++i) {
      const std::span<const double> p(pass.probs.row(i).data(), static_cast<std::size_t>(pass.probs.cols()));
      wrong += argmax(p) != batch.labels[i] ? 1 : 0;
      rows.push_back(static_cast<int>(i));
    }
    errors.push_back(wrong);
    const TrainableGradient g = backward_trainable(model, pass, LossSpec::entropy_over(rows));
    optimizer_step(model, opt, g.values);
  }
  if (final_params) *final_params = model.trainable_params();
  return errors;
}

}  // namespace eatta
