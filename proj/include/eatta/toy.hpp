#pragma once

#include <cstdint>
#include <vector>

#include "eatta/config.hpp"
#include "json.hpp"

namespace eatta {

struct ToyResult {
  std::uint64_t seed = 0;
  double source_accuracy = 0.0;  // source model on the target set
  double close_accuracy = 0.0;   // after fine-tuning on the points closest to the source
  double far_accuracy = 0.0;     // after fine-tuning on the farthest points
  std::vector<int> close_picks;
  std::vector<int> far_picks;

  nlohmann::ordered_json to_json() const;
};

/// Trains a two-class 2-D model on the source blobs, then fine-tunes copies
/// on `picks_per_class` labelled target points per class: once with the
/// points nearest to any source blob center, once with the farthest.
/// Fine-tuning and evaluation use the recorded source statistics.
ToyResult run_toy_experiment(const ToyConfig& config, const PretrainConfig& pretrain, std::uint64_t seed);

}  // namespace eatta
