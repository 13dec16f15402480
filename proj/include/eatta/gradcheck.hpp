#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eatta/model.hpp"
#include "json.hpp"

namespace eatta {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  int trials = 200;
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Redraw a trial when any pre-ReLU value lies this close to zero.
  double kink_margin = 1e-3;
  /// Negative control: perturb the analytic gradient before comparing.
  bool corrupt_gradient = false;
};

struct GradcheckTrial {
  int trial = 0;
  std::string arch;
  int rows = 0;
  LossKind loss = LossKind::entropy;
  NormMode mode = NormMode::batch_stats;
  int redraws = 0;
  double rel_error_trainable = 0.0;
  double rel_error_full = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckTrial> trials;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  std::string warning;
  double seconds = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|, 1e-8).
double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

/// Central differences of `spec` w.r.t. the parameters listed in `indices`.
std::vector<double> numeric_gradient(const Model& model, const Matrix& x, NormMode mode, const LossSpec& spec,
                                     const std::vector<std::size_t>& indices, double step);

/// Random (arch, batch, loss, norm mode) trials comparing the analytic
/// gradients against central differences.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace eatta
