#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "eatta/config.hpp"
#include "eatta/engine.hpp"
#include "eatta/gradcheck.hpp"
#include "eatta/toy.hpp"

namespace eatta {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitValidation = 3;

/// Source data, held-out split and stream pool derived from a config and
/// its seed.
struct World {
  RunConfig config;
  std::optional<SourceSpec> spec;  // blobs only
  Dataset train;
  Dataset holdout;
  std::shared_ptr<const SampleSource> pool;
  std::vector<std::string> class_names;
};

/// Fills arch.input_dim / num_classes for dataset sources.
World build_world(const RunConfig& config);

struct PretrainOutcome {
  Model model;
  double holdout_accuracy = 0.0;
  std::vector<double> epoch_losses;
};

PretrainOutcome pretrain_world(const World& world);
/// The stronger desk model used by the model oracle: wider layers, longer
/// training, optionally on corrupted copies of the training split.
PretrainOutcome train_annotator(const World& world);

std::filesystem::path source_snapshot_path(const RunConfig& config);
std::filesystem::path annotator_snapshot_path(const RunConfig& config);

/// Text identifying everything a source snapshot depends on.
std::string world_fingerprint(const RunConfig& config);

/// Writes the snapshot and a `<path>.meta.json` sidecar with the fingerprint.
void save_source(const std::filesystem::path& path, const RunConfig& config, const PretrainOutcome& outcome);

/// Loads the source snapshot when one matching this config exists;
/// otherwise pretrains in memory. An explicitly configured snapshot that is
/// missing or was trained for another config is an error.
Model obtain_source(const World& world, std::ostream* log = nullptr);

/// Oracle for the config; `queue` is required for the human kind. Model
/// oracles without a configured snapshot load the default annotator path,
/// or train the annotator in memory when it is absent.
std::unique_ptr<Oracle> build_oracle(const World& world, AnnotationQueue* queue);

Snapshot source_snapshot(const Model& model, const EngineConfig& adapt);

/// One adaptation episode of the world's config.
RunReport run_world(const World& world, const Model& source, Oracle& oracle, const StepObserver& observer = {});

/// build_world + obtain_source + build_oracle + run_world, for non-human oracles.
RunReport run_config(const RunConfig& config);

struct AblationCell {
  Toggles toggles;
  double sigma = 0.0;
  double alpha = 0.0;
  Budget budget;
  Strategy strategy = Strategy::ours;
  double lr = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> errors;  // percent, one per successful seed
  std::vector<std::string> failures;
  double mean = 0.0;
  double stdev = 0.0;

  std::string label() const;
};

struct AblationTable {
  std::vector<std::string> axes;  // grid axes that vary
  std::vector<AblationCell> cells;

  nlohmann::ordered_json to_json() const;
  std::string to_csv() const;
  std::string to_text() const;
};

/// Cross product of the grid axes; each cell runs every grid seed (or the
/// config seed). Cell failures are recorded and the grid continues.
AblationTable run_ablation(const RunConfig& base, std::ostream* progress = nullptr);

/// Toy experiment over the grid seeds (or the config seed).
std::vector<ToyResult> run_toy(const RunConfig& config);

struct CommandOptions {
  std::optional<std::filesystem::path> config_path;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> bind;
  bool serve = false;
  bool annotator = false;
  int trials = 200;
  bool corrupt_gradient = false;
};

/// Config from --config or --preset with --seed and --out applied, validated.
RunConfig resolve_config(const CommandOptions& options);

int exit_code_for(const std::exception& e);

int cmd_pretrain(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_run(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_ablate(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_serve(const CommandOptions& options, std::ostream& out, std::ostream& err);

}  // namespace eatta
