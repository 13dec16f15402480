#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eatta/engine.hpp"
#include "eatta/model.hpp"
#include "eatta/oracle.hpp"
#include "eatta/stream.hpp"

namespace eatta {

enum class SourceKind { blobs, dataset };

struct SourceConfig {
  SourceKind kind = SourceKind::blobs;
  BlobPreset blobs;
  std::filesystem::path dataset;         // dataset kind: training samples
  std::filesystem::path target_dataset;  // optional stream pool; default = holdout split
  double holdout = 0.2;
  std::vector<std::string> class_names;  // empty = "class <i>"

  bool operator==(const SourceConfig&) const = default;
};

struct PretrainSection {
  PretrainConfig train;
  std::filesystem::path snapshot;  // empty = <out>/source.snap (written by pretrain)
  std::vector<int> annotator_hidden{64, 64};
  std::filesystem::path annotator_snapshot;  // empty = <out>/annotator.snap
  std::vector<Corruption> annotator_augment;  // mild corruptions mixed into annotator training
  int annotator_epochs = 30;

  bool operator==(const PretrainSection&) const = default;
};

/// Two-class source/target pair for the border-versus-far fine-tuning
/// comparison.
struct ToyConfig {
  double separation = 4.0;
  double spread = 1.0;
  int per_class = 200;
  Corruption target;
  int picks_per_class = 2;
  int steps = 10;
  double lr = 0.3;
  std::vector<int> hidden{8};

  bool operator==(const ToyConfig&) const = default;
};

/// Axes of an ablation grid; every empty axis keeps the base value.
struct GridConfig {
  std::vector<Toggles> toggles;
  std::vector<double> sigma;
  std::vector<double> alpha;
  std::vector<Budget> budget;
  std::vector<Strategy> strategy;
  std::vector<double> lr;
  std::vector<std::uint64_t> seeds;

  bool empty() const;
  bool operator==(const GridConfig&) const = default;
};

struct RunConfig {
  ArchSpec arch;  // input_dim / num_classes follow the source
  double norm_eps = Model::kDefaultNormEps;
  SourceConfig source;
  PretrainSection pretrain;
  EpisodeSpec episode;
  EngineConfig adapt;
  OracleConfig oracle;
  std::optional<ToyConfig> toy;
  GridConfig grid;
  std::uint64_t seed = 0;
  std::filesystem::path out = "eatta-out";

  /// Field-level checks with messages naming the offending key.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// INI text: [model] [source] [pretrain] [episode] [domain:<name>]...
/// [adapt] [oracle] [toy] [grid] [run]. Unknown sections and keys are
/// rejected.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical text; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);

std::vector<std::string> preset_names();
/// Throws ConfigError for an unknown name.
std::string preset_text(std::string_view name);

std::vector<std::string> class_names_for(const RunConfig& config);

}  // namespace eatta
