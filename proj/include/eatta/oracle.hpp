#pragma once

#include <array>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "eatta/model.hpp"
#include "eatta/rng.hpp"
#include "eatta/stream.hpp"
#include "json.hpp"

namespace eatta {

/// One selected sample, with the context an annotator may look at.
struct AnnotationRequest {
  const Batch* batch = nullptr;
  int index = 0;
  int pseudo_label = 0;
};

struct Annotation {
  int label = 0;
  std::string source;
};

class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual Annotation annotate(const AnnotationRequest& request) = 0;
  virtual std::string kind() const = 0;
};

class GroundTruthOracle final : public Oracle {
 public:
  Annotation annotate(const AnnotationRequest& request) override;
  std::string kind() const override { return "ground_truth"; }
};

/// With probability p returns a uniformly drawn wrong class. Draws come from
/// the "oracle" substream keyed by (domain, batch, sample), so labels do not
/// depend on how many queries came before.
class NoisyOracle final : public Oracle {
 public:
  NoisyOracle(double p, int num_classes, SeedTree seeds);
  Annotation annotate(const AnnotationRequest& request) override;
  std::string kind() const override { return "noisy"; }

 private:
  double p_;
  int num_classes_;
  SeedTree seeds_;
};

/// Argmax of a separately trained annotator model, run with its recorded
/// source statistics so the answer does not depend on the rest of the batch.
class ModelOracle final : public Oracle {
 public:
  explicit ModelOracle(Model annotator);
  Annotation annotate(const AnnotationRequest& request) override;
  std::string kind() const override { return "model"; }
  const Model& annotator() const { return model_; }

 private:
  Model model_;
};

struct AnnotationTask {
  std::string task_id;
  std::vector<double> features;
  std::optional<std::string> image_png;  // base64
  std::vector<std::array<double, 2>> context;  // batch points when d = 2
  int highlight = -1;
  std::optional<int> pseudo_label_hint;
  std::vector<std::string> class_names;
  std::int64_t issued_ms = 0;    // unix epoch milliseconds
  std::int64_t deadline_ms = 0;

  nlohmann::json to_json() const;
};

enum class SubmitResult { accepted, stale, out_of_range };

/// Hand-off point between the engine and the annotation service. Holds at
/// most one outstanding task; `ask` blocks until a matching reply or the
/// deadline.
class AnnotationQueue {
 public:
  explicit AnnotationQueue(int num_classes);

  std::optional<int> ask(AnnotationTask task, std::chrono::steady_clock::time_point deadline);
  std::optional<AnnotationTask> pending() const;
  SubmitResult submit(const std::string& task_id, int label);

  int num_classes() const { return num_classes_; }
  std::string next_task_id();

  void set_service_attached(bool attached);
  bool service_attached() const;

 private:
  int num_classes_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<AnnotationTask> pending_;
  std::optional<int> reply_;
  std::uint64_t next_id_ = 1;
  bool attached_ = false;
};

/// Last published run status, replaced wholesale after every step.
class StatusBoard {
 public:
  StatusBoard();
  void publish(nlohmann::json status);
  nlohmann::json snapshot() const;

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const nlohmann::json> current_;
};

enum class FallbackKind { none, ground_truth, model };

class HumanOracle final : public Oracle {
 public:
  /// `fallback` answers timed-out tasks; null means a timeout aborts.
  HumanOracle(AnnotationQueue& queue, std::vector<std::string> class_names, double timeout_s, bool show_hint,
              std::unique_ptr<Oracle> fallback);
  Annotation annotate(const AnnotationRequest& request) override;
  std::string kind() const override { return "human"; }

 private:
  AnnotationQueue& queue_;
  std::vector<std::string> class_names_;
  double timeout_s_;
  bool show_hint_;
  std::unique_ptr<Oracle> fallback_;
};

enum class OracleKind { ground_truth, noisy, model, human };

struct OracleConfig {
  OracleKind kind = OracleKind::ground_truth;
  double noise = 0.0;
  std::filesystem::path snapshot;  // model kind, and a model fallback
  double timeout_s = 30.0;
  FallbackKind fallback = FallbackKind::ground_truth;
  bool show_hint = false;

  void validate() const;
  bool operator==(const OracleConfig&) const = default;
};

OracleKind parse_oracle_kind(std::string_view text);
std::string oracle_kind_name(OracleKind kind);
FallbackKind parse_fallback_kind(std::string_view text);
std::string fallback_kind_name(FallbackKind kind);

std::vector<std::string> default_class_names(int num_classes);

/// `queue` is required for the human kind.
std::unique_ptr<Oracle> make_oracle(const OracleConfig& config, int num_classes, const SeedTree& seeds,
                                    AnnotationQueue* queue, const std::vector<std::string>& class_names);

/// HTTP front end of the queue:
///   GET  /api/pending  -> task JSON, or 204
///   POST /api/label    {task_id, label} -> 200 | 409 stale | 422 bad label
///   GET  /api/status   -> last published status
///   GET  /api/classes  -> {"classes": [...]}
class AnnotationService {
 public:
  AnnotationService(AnnotationQueue& queue, StatusBoard& status, std::vector<std::string> class_names);
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  /// Binds and starts serving on a background thread. Port 0 picks a free
  /// port. Throws IoError when the address cannot be bound.
  void start(const std::string& host, int port);
  void stop();
  int port() const { return port_; }
  bool running() const { return thread_.joinable(); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  AnnotationQueue& queue_;
  std::thread thread_;
  int port_ = 0;
};

/// "host:port" with host defaulting to 127.0.0.1.
std::pair<std::string, int> parse_bind(std::string_view text);

}  // namespace eatta
