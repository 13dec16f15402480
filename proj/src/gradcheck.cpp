#include "eatta/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "eatta/error.hpp"
#include "eatta/rng.hpp"

namespace eatta {

nlohmann::ordered_json GradcheckReport::to_json() const {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& t : trials) {
    rows.push_back({{"trial", t.trial},
                    {"arch", t.arch},
                    {"rows", t.rows},
                    {"loss", t.loss == LossKind::entropy ? "entropy" : "cross_entropy"},
                    {"mode", t.mode == NormMode::batch_stats ? "batch_stats" : "source_stats"},
                    {"redraws", t.redraws},
                    {"rel_error_trainable", t.rel_error_trainable},
                    {"rel_error_full", t.rel_error_full}});
  }
  return {{"passed", passed},           {"max_rel_error", max_rel_error}, {"tolerance", tolerance},
          {"trial_count", trials.size()}, {"warning", warning},           {"seconds", seconds},
          {"trials", rows}};
}

double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  if (analytic.size() != numeric.size()) throw ConfigError("relative_error: size mismatch");
  double diff = 0.0, scale = 1e-8;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return diff / scale;
}

std::vector<double> numeric_gradient(const Model& model, const Matrix& x, NormMode mode, const LossSpec& spec,
                                     const std::vector<std::size_t>& indices, double step) {
  Model probe = model;
  std::vector<double> params(model.params().begin(), model.params().end());
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    const double orig = params[idx];
    params[idx] = orig + step;
    probe.set_params(params);
    const double up = evaluate_loss(forward(probe, x, mode), spec);
    params[idx] = orig - step;
    probe.set_params(params);
    const double down = evaluate_loss(forward(probe, x, mode), spec);
    params[idx] = orig;
    out.push_back((up - down) / (2.0 * step));
  }
  return out;
}

namespace {

struct Draw {
  Model model;
  Matrix x;
  LossSpec spec;
  NormMode mode;
};

Draw draw_trial(Rng& rng) {
  ArchSpec arch;
  arch.input_dim = 1 + static_cast<int>(rng.below(6));
  const int depth = static_cast<int>(rng.below(4));
  for (int i = 0; i < depth; ++i) arch.hidden.push_back(1 + static_cast<int>(rng.below(8)));
  arch.num_classes = 2 + static_cast<int>(rng.below(5));
  const NormMode mode = rng.below(2) == 0 ? NormMode::batch_stats : NormMode::source_stats;
  const int rows = (mode == NormMode::batch_stats ? 2 : 1) + static_cast<int>(rng.below(15));

  Model model = Model::init(arch, rng.next_u64());
  std::vector<double> params(model.params().begin(), model.params().end());
  const auto& trainable = model.trainable_indices();
  for (std::size_t k = 0; k < trainable.size(); ++k) {
    params[trainable[k]] = rng.uniform() - 0.5;
  }
  for (int l = 0; l < model.num_hidden(); ++l) {
    const auto lo = static_cast<std::ptrdiff_t>(model.norm_scale(l).data() - model.params().data());
    for (int j = 0; j < arch.hidden[static_cast<std::size_t>(l)]; ++j) params[lo + j] = 0.5 + rng.uniform();
  }
  model.set_params(params);
  std::vector<Vector> mean, var;
  for (int w : arch.hidden) {
    Vector m(w), v(w);
    for (int j = 0; j < w; ++j) {
      m[j] = rng.normal(0.0, 0.3);
      v[j] = 0.2 + rng.uniform();
    }
    mean.push_back(m);
    var.push_back(v);
  }
  model.set_running_stats(mean, var);

  Matrix x(rows, arch.input_dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal(0.0, 1.5);

  std::vector<int> subset;
  for (int r = 0; r < rows; ++r) {
    if (rng.below(3) != 0) subset.push_back(r);
  }
  if (subset.empty()) subset.push_back(static_cast<int>(rng.below(static_cast<std::size_t>(rows))));
  const double scale = 0.25 + 1.75 * rng.uniform();
  LossSpec spec;
  if (rng.below(2) == 0) {
    std::vector<int> labels;
    for (std::size_t i = 0; i < subset.size(); ++i) {
      labels.push_back(static_cast<int>(rng.below(static_cast<std::size_t>(arch.num_classes))));
    }
    spec = LossSpec::cross_entropy_over(subset, labels, scale);
  } else {
    spec = LossSpec::entropy_over(subset, scale);
  }
  return {std::move(model), std::move(x), std::move(spec), mode};
}

bool near_kink(const ForwardPass& pass, double margin) {
  for (const auto& h : pass.hidden) {
    if (h.norm_out.size() > 0 && h.norm_out.cwiseAbs().minCoeff() < margin) return true;
  }
  return false;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  if (options.trials < 0) throw ConfigError("gradcheck: trials must be >= 0");
  if (!(options.step > 0.0)) throw ConfigError("gradcheck: step must be > 0");
  const auto start = std::chrono::steady_clock::now();
  GradcheckReport report;
  report.tolerance = options.tolerance;
  if (options.trials == 0) report.warning = "no trials requested; pass is vacuous";

  const SeedTree seeds(options.seed);
  for (int t = 0; t < options.trials; ++t) {
    Rng rng = seeds.stream("gradcheck", {static_cast<std::uint64_t>(t)});
    GradcheckTrial trial;
    trial.trial = t;
    Draw d = draw_trial(rng);
    while (near_kink(forward(d.model, d.x, d.mode), options.kink_margin)) {
      if (++trial.redraws > 1000) throw NumericError("gradcheck: could not draw a trial away from ReLU kinks");
      d = draw_trial(rng);
    }
    const ForwardPass pass = forward(d.model, d.x, d.mode);
    trial.arch = d.model.arch().to_string();
    trial.rows = static_cast<int>(d.x.rows());
    trial.loss = d.spec.kind;
    trial.mode = d.mode;

    std::vector<double> analytic = backward_trainable(d.model, pass, d.spec).values;
    std::vector<double> full = backward_full(d.model, pass, d.spec);
    if (options.corrupt_gradient) {
      if (!analytic.empty()) analytic[0] += 1e-2 * (1.0 + std::abs(analytic[0]));
      if (!full.empty()) full[0] += 1e-2 * (1.0 + std::abs(full[0]));
    }
    std::vector<std::size_t> all(d.model.num_params());
    std::iota(all.begin(), all.end(), std::size_t{0});
    trial.rel_error_trainable =
        analytic.empty()
            ? 0.0
            : relative_error(analytic,
                             numeric_gradient(d.model, d.x, d.mode, d.spec, d.model.trainable_indices(), options.step));
    trial.rel_error_full = relative_error(full, numeric_gradient(d.model, d.x, d.mode, d.spec, all, options.step));
    report.max_rel_error = std::max({report.max_rel_error, trial.rel_error_trainable, trial.rel_error_full});
    report.trials.push_back(std::move(trial));
  }
  report.passed = !(report.max_rel_error >= options.tolerance) && std::isfinite(report.max_rel_error);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace eatta
