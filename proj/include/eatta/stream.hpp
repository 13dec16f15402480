#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "eatta/model.hpp"
#include "eatta/rng.hpp"

namespace eatta {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  bool operator==(const Image&) const = default;
};

/// Labeled samples as rows of `x`. `images` is either empty or one optional
/// render payload per row.
struct Dataset {
  Matrix x;
  std::vector<int> y;
  int num_classes = 0;
  std::vector<std::optional<Image>> images;

  std::size_t size() const { return y.size(); }
  int dim() const { return static_cast<int>(x.cols()); }
  Dataset subset(const std::vector<std::size_t>& rows) const;
  void validate() const;

  bool operator==(const Dataset& o) const {
    return x == o.x && y == o.y && num_classes == o.num_classes && images == o.images;
  }
};

struct ClassBlob {
  Vector mean;
  Matrix cov;
  int count = 0;
};

/// Class-conditional Gaussians for the source domain.
struct SourceSpec {
  std::vector<ClassBlob> classes;

  int dim() const { return classes.empty() ? 0 : static_cast<int>(classes.front().mean.size()); }
  int num_classes() const { return static_cast<int>(classes.size()); }
};

/// Isotropic blobs with centers drawn from N(0, separation^2 I).
struct BlobPreset {
  int classes = 10;
  int dim = 8;
  double separation = 3.0;
  double spread = 1.0;
  int per_class = 500;
  bool operator==(const BlobPreset&) const = default;
};

SourceSpec make_blob_spec(const BlobPreset& preset, std::uint64_t seed);

/// Draws every blob's count, then shuffles. Throws on non-PSD covariance or
/// zero total count.
Dataset make_source_dataset(const SourceSpec& spec, std::uint64_t seed);

/// Splits off the last `holdout` fraction (after a seeded shuffle).
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double holdout, std::uint64_t seed);

struct PretrainConfig {
  int epochs = 20;
  int batch_size = 64;
  OptimizerConfig optimizer{OptimizerKind::adam, 0.01, 0.9, 0.9, 0.999, 1e-8};

  bool operator==(const PretrainConfig&) const = default;
};

struct PretrainResult {
  Model model;
  std::vector<double> epoch_losses;
};

/// Full-parameter supervised training in batch-stats mode, then records
/// population running statistics of every norm layer over `data`.
PretrainResult pretrain_source(Model model, const Dataset& data, const PretrainConfig& config, std::uint64_t seed);

/// Per-feature mean/variance of each norm layer's input over `data`.
void record_running_stats(Model& model, const Dataset& data);

double accuracy(const Model& model, const Matrix& x, const std::vector<int>& y, NormMode mode);

/// A feature-space corruption. `compose` applies `parts` left to right.
struct Corruption {
  enum class Kind { identity, shift, rotation, gaussian, scale, compose };

  Kind kind = Kind::identity;
  std::vector<double> values;               // shift delta or scale factors; size 1 broadcasts
  double angle = 0.0;                       // rotation, radians
  std::vector<std::pair<int, int>> planes;  // rotation planes; empty = (0,1),(2,3),...
  double noise_std = 0.0;
  std::vector<Corruption> parts;

  /// Grammar: term ('+' term)*, term = shift(v...) | rotate(angle[, i, j]) |
  /// noise(std) | scale(v...) | identity.
  static Corruption parse(std::string_view text);
  std::string to_string() const;
  void validate(int dim) const;

  bool operator==(const Corruption&) const = default;
};

struct Sample {
  Vector x;
  int true_label = 0;
  int domain_id = 0;
  std::int64_t stream_index = 0;
  std::optional<Image> image;
};

Sample corrupt(const Sample& sample, const Corruption& corruption, Rng& rng);

/// Produces clean class-conditional samples, either from blobs or by
/// resampling an ingested dataset.
class SampleSource {
 public:
  explicit SampleSource(SourceSpec spec);
  explicit SampleSource(Dataset pool);

  int dim() const { return dim_; }
  int num_classes() const { return num_classes_; }
  Sample draw(int label, Rng& rng) const;

 private:
  int dim_ = 0;
  int num_classes_ = 0;
  std::vector<Vector> means_;
  std::vector<Matrix> chol_;
  std::optional<Dataset> pool_;
  std::vector<std::vector<std::size_t>> by_class_;
};

struct DomainSpec {
  std::string name;
  Corruption corruption;
  int batch_count = 1;
  int samples = 0;                    // 0 = batch_count * batch_size; else the last batch may be short
  std::vector<double> class_priors;   // empty = uniform
  std::optional<std::uint64_t> stream_key;  // default keyed by position in the episode

  int batches(int batch_size) const;
  int total_samples(int batch_size) const;
  bool operator==(const DomainSpec&) const = default;
};

enum class AdaptMode { ctta, ftta };

struct EpisodeSpec {
  std::vector<DomainSpec> domains;
  int batch_size = 64;
  AdaptMode mode = AdaptMode::ctta;
  std::uint64_t seed = 0;

  void validate(int dim, int num_classes) const;
  bool operator==(const EpisodeSpec&) const = default;
};

struct Batch {
  Matrix x;
  std::vector<int> labels;  // hidden truth: oracles and metrics only
  std::vector<std::int64_t> stream_index;
  std::vector<std::optional<Image>> images;
  int domain_id = 0;
  int batch_in_domain = 0;
  std::int64_t batch_index = 0;  // global, across the episode
  std::uint64_t domain_key = 0;

  int size() const { return static_cast<int>(labels.size()); }
};

struct DomainBoundary {
  int finished_domain = 0;
  int next_domain = 0;
};

struct EndOfEpisode {};

using StreamEvent = std::variant<Batch, DomainBoundary, EndOfEpisode>;

/// Single-owner iterator over an episode.
class Episode {
 public:
  Episode(EpisodeSpec spec, std::shared_ptr<const SampleSource> source);

  /// Emits batches in order with a boundary marker between domains, then
  /// one EndOfEpisode. Calling again after that throws.
  StreamEvent next();

  const EpisodeSpec& spec() const { return spec_; }
  std::uint64_t domain_key(int domain) const;
  int total_batches() const;

 private:
  Batch make_batch(int domain, int batch_in_domain) const;

  EpisodeSpec spec_;
  std::shared_ptr<const SampleSource> source_;
  int domain_ = 0;
  int batch_ = 0;
  std::int64_t global_batch_ = 0;
  std::int64_t next_stream_index_ = 0;
  bool boundary_pending_ = false;
  bool ended_ = false;
};

/// JSON-lines: {"x":[...], "y":int, "img":{"width":w,"height":h,"data":base64}}.
/// `num_classes` < 0 infers max(y)+1.
Dataset load_dataset_file(const std::filesystem::path& path, int num_classes = -1);
void save_dataset_file(const std::filesystem::path& path, const Dataset& data);

}  // namespace eatta
