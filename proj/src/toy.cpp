#include "eatta/toy.hpp"

#include <algorithm>
#include <numeric>

#include "eatta/error.hpp"
#include "eatta/rng.hpp"

namespace eatta {

nlohmann::ordered_json ToyResult::to_json() const {
  return {{"seed", seed},
          {"source_accuracy", source_accuracy},
          {"close_accuracy", close_accuracy},
          {"far_accuracy", far_accuracy},
          {"close_picks", close_picks},
          {"far_picks", far_picks}};
}

namespace {

SourceSpec toy_spec(const ToyConfig& c) {
  SourceSpec spec;
  for (int k = 0; k < 2; ++k) {
    ClassBlob b;
    b.mean = Vector::Zero(2);
    b.mean[0] = (k == 0 ? -0.5 : 0.5) * c.separation;
    b.cov = Matrix::Identity(2, 2) * (c.spread * c.spread);
    b.count = c.per_class;
    spec.classes.push_back(std::move(b));
  }
  return spec;
}

Model fine_tune(Model model, const Dataset& target, const std::vector<int>& picks, const ToyConfig& c) {
  Matrix x(static_cast<Eigen::Index>(picks.size()), 2);
  std::vector<int> y;
  std::vector<int> rows;
  for (std::size_t i = 0; i < picks.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = target.x.row(picks[i]);
    y.push_back(target.y[picks[i]]);
    rows.push_back(static_cast<int>(i));
  }
  const LossSpec spec = LossSpec::cross_entropy_over(rows, y);
  Optimizer opt({OptimizerKind::sgd_momentum, c.lr, 0.9}, model.num_params());
  std::vector<double> params(model.params().begin(), model.params().end());
  for (int s = 0; s < c.steps; ++s) {
    const ForwardPass pass = forward(model, x, NormMode::source_stats);
    opt.step(params, backward_full(model, pass, spec));
    model.set_params(params);
  }
  return model;
}

}  // namespace

ToyResult run_toy_experiment(const ToyConfig& config, const PretrainConfig& pretrain, std::uint64_t seed) {
  if (config.picks_per_class < 1 || config.picks_per_class > config.per_class) {
    throw ConfigError("toy: picks_per_class must lie in [1, per_class]");
  }
  config.target.validate(2);
  const SeedTree seeds(seed);
  const SourceSpec spec = toy_spec(config);
  const Dataset source = make_source_dataset(spec, seeds.seed_for("dataset"));
  const ArchSpec arch{2, config.hidden, 2};
  Model model = pretrain_source(Model::init(arch, seeds.seed_for("model-init")), source, pretrain,
                                seeds.seed_for("pretrain"))
                    .model;

  // Target: a fresh source draw pushed through the target corruption.
  const Dataset clean = make_source_dataset(spec, seeds.seed_for("dataset", {1}));
  Dataset target = clean;
  Rng rng = seeds.stream("stream");
  for (std::size_t i = 0; i < clean.size(); ++i) {
    Sample s;
    s.x = clean.x.row(static_cast<Eigen::Index>(i)).transpose();
    s.true_label = clean.y[i];
    target.x.row(static_cast<Eigen::Index>(i)) = corrupt(s, config.target, rng).x.transpose();
  }

  ToyResult r;
  r.seed = seed;
  r.source_accuracy = accuracy(model, target.x, target.y, NormMode::source_stats);
  for (int k = 0; k < 2; ++k) {
    std::vector<int> members;
    std::vector<double> dist(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
      if (target.y[i] != k) continue;
      members.push_back(static_cast<int>(i));
      const Vector xi = target.x.row(static_cast<Eigen::Index>(i)).transpose();
      dist[i] = std::min((xi - spec.classes[0].mean).norm(), (xi - spec.classes[1].mean).norm());
    }
    std::stable_sort(members.begin(), members.end(), [&](int a, int b) { return dist[a] < dist[b]; });
    for (int p = 0; p < config.picks_per_class; ++p) {
      r.close_picks.push_back(members[p]);
      r.far_picks.push_back(members[members.size() - 1 - p]);
    }
  }
  r.close_accuracy = accuracy(fine_tune(model, target, r.close_picks, config), target.x, target.y,
                              NormMode::source_stats);
  r.far_accuracy = accuracy(fine_tune(model, target, r.far_picks, config), target.x, target.y,
                            NormMode::source_stats);
  return r;
}

}  // namespace eatta
