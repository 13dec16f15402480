#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace eatta {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Shape of the fixed MLP: (dense -> norm -> ReLU) per hidden width, then a
/// dense classifier.
struct ArchSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int num_classes = 0;

  void validate() const;
  bool operator==(const ArchSpec&) const = default;
  std::string to_string() const;
};

enum class NormMode { batch_stats, source_stats };

/// Parameters of the classifier stored in one flat array.
///
/// Layout per hidden layer: weight (out x in, row-major), bias, norm scale,
/// norm shift. The classifier contributes weight and bias only. The
/// trainable subset used during adaptation is exactly the norm scale/shift
/// entries; every other parameter is only touched by pretraining.
class Model {
 public:
  static constexpr double kDefaultNormEps = 1e-5;

  /// Zero weights, unit norm scales, zero shifts, unit running variance.
  explicit Model(ArchSpec arch, double norm_eps = kDefaultNormEps);

  /// Weights and biases uniform in +-1/sqrt(fan_in); deterministic in seed.
  static Model init(const ArchSpec& arch, std::uint64_t seed, double norm_eps = kDefaultNormEps);

  const ArchSpec& arch() const { return arch_; }
  double norm_eps() const { return norm_eps_; }
  int num_hidden() const { return static_cast<int>(arch_.hidden.size()); }
  int feature_dim() const { return arch_.hidden.empty() ? arch_.input_dim : arch_.hidden.back(); }
  int num_classes() const { return arch_.num_classes; }

  std::span<const double> params() const { return params_; }
  std::size_t num_params() const { return params_.size(); }
  void set_params(std::span<const double> values);

  const std::vector<std::size_t>& trainable_indices() const { return trainable_; }
  std::size_t num_trainable() const { return trainable_.size(); }
  std::vector<double> trainable_params() const;
  void set_trainable_params(std::span<const double> values);

  /// Layer `num_hidden()` is the classifier.
  Eigen::Map<const Matrix> weight(int layer) const;
  Eigen::Map<const Vector> bias(int layer) const;
  Eigen::Map<const Vector> norm_scale(int layer) const;
  Eigen::Map<const Vector> norm_shift(int layer) const;

  const Vector& running_mean(int layer) const { return running_mean_.at(layer); }
  const Vector& running_var(int layer) const { return running_var_.at(layer); }
  void set_running_stats(std::vector<Vector> mean, std::vector<Vector> var);

  /// Changes whenever parameters change; forward passes record it so a
  /// backward pass can reject a cache computed against other parameters.
  std::uint64_t version() const { return version_; }

 private:
  struct Layout {
    int in = 0;
    int out = 0;
    std::size_t weight = 0;
    std::size_t bias = 0;
    std::size_t scale = 0;
    std::size_t shift = 0;
  };

  void touch();

  ArchSpec arch_;
  double norm_eps_;
  std::vector<Layout> layout_;
  std::vector<double> params_;
  std::vector<std::size_t> trainable_;
  std::vector<Vector> running_mean_;
  std::vector<Vector> running_var_;
  std::uint64_t version_ = 0;
};

struct HiddenCache {
  Matrix input;       // activations entering the dense layer
  Matrix normalized;  // (z - mean) * inv_std
  Matrix norm_out;    // scale * normalized + shift, pre-ReLU
  Vector mean;
  Vector var;
  Vector inv_std;
};

/// Everything a backward pass needs, plus the outputs of f and h.
struct ForwardPass {
  NormMode mode = NormMode::batch_stats;
  std::uint64_t model_version = 0;
  std::vector<HiddenCache> hidden;
  Matrix features;
  Matrix logits;
  Matrix probs;

  Eigen::Index rows() const { return logits.rows(); }
};

ForwardPass forward(const Model& model, const Matrix& x, NormMode mode);

/// Runs only the classifier h on precomputed features.
Matrix classify(const Model& model, const Matrix& features);

std::vector<double> softmax(std::span<const double> logits);
Matrix softmax_rows(const Matrix& logits);
double entropy(std::span<const double> probs);
/// Index of the largest entry; the lowest index wins exact ties.
int argmax(std::span<const double> v);
double cross_entropy(std::span<const double> probs, int label);

enum class LossKind { cross_entropy, entropy };

/// A scalar loss over a subset of the rows of one forward pass: the mean
/// cross-entropy (with labels) or the mean entropy over `rows`, times `scale`.
struct LossSpec {
  LossKind kind = LossKind::entropy;
  std::vector<int> rows;
  std::vector<int> labels;
  double scale = 1.0;

  static LossSpec cross_entropy_over(std::vector<int> rows, std::vector<int> labels, double scale = 1.0);
  static LossSpec entropy_over(std::vector<int> rows, double scale = 1.0);
};

double evaluate_loss(const ForwardPass& pass, const LossSpec& spec);

struct TrainableGradient {
  std::vector<double> values;
  bool empty_set = false;
};

/// Exact gradient of the loss w.r.t. the norm scale/shift parameters,
/// including the dependence of batch statistics on every row of the pass.
TrainableGradient backward_trainable(const Model& model, const ForwardPass& pass, const LossSpec& spec);

/// Gradient w.r.t. every parameter, in `Model::params()` order.
std::vector<double> backward_full(const Model& model, const ForwardPass& pass, const LossSpec& spec);

double l2_norm(std::span<const double> v);

struct GradientBundle {
  std::vector<double> grad_sup;
  std::vector<double> grad_unsup;
  double norm_sup = 0.0;
  double norm_unsup = 0.0;

  static GradientBundle from(std::vector<double> sup, std::vector<double> unsup);
};

enum class OptimizerKind { sgd_momentum, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd_momentum;
  double lr = 0.005;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const OptimizerConfig&) const = default;
};

class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::size_t size);
  static Optimizer from_state(OptimizerConfig config, std::vector<double> first, std::vector<double> second,
                              std::int64_t steps);

  /// Updates `params` in place. Rejects non-finite gradients without
  /// touching any state.
  void step(std::span<double> params, std::span<const double> grad);

  const OptimizerConfig& config() const { return config_; }
  std::size_t size() const { return first_.size(); }
  const std::vector<double>& first_moment() const { return first_; }
  const std::vector<double>& second_moment() const { return second_; }
  std::int64_t steps() const { return steps_; }

  bool operator==(const Optimizer&) const = default;

 private:
  OptimizerConfig config_;
  std::vector<double> first_;   // momentum buffer / Adam m
  std::vector<double> second_;  // Adam v (empty for SGD)
  std::int64_t steps_ = 0;
};

/// Applies one optimizer step to the trainable subset only.
void optimizer_step(Model& model, Optimizer& optimizer, std::span<const double> trainable_grad);

struct Snapshot {
  Model model;
  Optimizer optimizer;
};

Snapshot take_snapshot(const Model& model, const Optimizer& optimizer);
/// Throws ConfigError if the snapshot was taken from a different arch.
void restore(const Snapshot& snap, Model& model, Optimizer& optimizer);

std::vector<std::uint8_t> serialize_snapshot(const Snapshot& snap);
Snapshot deserialize_snapshot(std::span<const std::uint8_t> bytes);
void write_snapshot_file(const std::filesystem::path& path, const Snapshot& snap);
Snapshot read_snapshot_file(const std::filesystem::path& path);

}  // namespace eatta
