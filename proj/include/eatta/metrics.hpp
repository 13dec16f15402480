#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace eatta {

struct ChosenSample {
  int index = 0;
  std::int64_t stream_index = 0;
  int pseudo_label = 0;
  int label = 0;       // what the oracle returned
  int true_label = 0;  // hidden truth, for diagnostics
  std::string source;  // ground_truth | noisy | model | human | fallback:<kind>
  double diff = 0.0;   // selection score of this sample
  double entropy = 0.0;
  bool balance_fired = false;
};

/// Everything one adaptation step produced. Errors are counted on the
/// predictions made before the step's update.
struct StepReport {
  std::int64_t batch_index = 0;
  int domain_id = 0;
  int batch_in_domain = 0;
  int batch_size = 0;
  std::vector<int> predictions;
  std::vector<int> true_labels;
  int errors = 0;
  std::vector<ChosenSample> chosen;
  std::vector<double> diffs;  // empty when no selection scoring ran
  int confident_count = 0;
  int sup_count = 0;
  int unsup_count = 0;
  int replay_count = 0;
  double loss_sup = 0.0;
  double loss_unsup = 0.0;
  double norm_sup = 0.0;
  double norm_unsup = 0.0;
  std::array<double, 2> gamma_raw{1.0, 1.0};
  std::array<double, 2> gamma{1.0, 1.0};
  bool debias_updated = false;
  bool updated = false;
  std::string status = "ok";
};

struct DomainSummary {
  std::string name;
  int batches = 0;
  std::int64_t samples = 0;
  std::int64_t errors = 0;
  double error_rate = 0.0;
  int annotations = 0;
  int fallbacks = 0;
};

struct StepTrace {
  std::int64_t batch_index = 0;
  int domain_id = 0;
  int batch_size = 0;
  int errors = 0;
  int confident = 0;
  int sup_count = 0;
  int unsup_count = 0;
  double loss_sup = 0.0;
  double loss_unsup = 0.0;
  double norm_sup = 0.0;
  double norm_unsup = 0.0;
  std::array<double, 2> gamma_raw{1.0, 1.0};
  std::array<double, 2> gamma{1.0, 1.0};
  bool updated = false;
};

struct AnnotationRecord {
  std::int64_t batch_index = 0;
  ChosenSample sample;
};

/// Fixed-range histogram over [lo, hi]; values outside are clamped to the
/// edge bins.
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::int64_t> counts;

  void add(double v);
};

struct RunReport {
  std::string status = "ok";
  std::uint64_t seed = 0;
  std::string config;  // exact config text that produced the run
  int num_classes = 0;
  std::vector<DomainSummary> domains;
  double average_error = 0.0;  // unweighted mean over domains
  std::vector<std::optional<double>> class_tpr;
  std::vector<std::int64_t> class_correct;
  std::vector<std::int64_t> class_total;
  std::optional<double> mean_tpr;
  std::vector<StepTrace> steps;
  std::vector<AnnotationRecord> annotations;
  Histogram diff_histogram;
  Histogram selected_entropy_histogram;

  int total_annotations() const;
  int total_fallbacks() const;

  nlohmann::ordered_json to_json() const;
  static RunReport from_json(const nlohmann::ordered_json& j);
};

/// Folds step reports into a RunReport.
class ReportBuilder {
 public:
  ReportBuilder(std::vector<std::string> domain_names, int num_classes, std::string config_text, std::uint64_t seed);

  /// Throws ConfigError when batch indices are not strictly increasing.
  void accumulate(const StepReport& step);
  void set_status(std::string status) { status_ = std::move(status); }
  RunReport finish() const;

  std::int64_t steps_seen() const { return static_cast<std::int64_t>(steps_.size()); }
  double running_error() const;
  int domains_done() const;
  const std::vector<StepTrace>& steps() const { return steps_; }
  int answered() const;
  int fallbacks() const;

 private:
  std::vector<std::string> names_;
  int num_classes_;
  std::string config_;
  std::uint64_t seed_;
  std::string status_ = "ok";
  std::vector<DomainSummary> domains_;
  std::vector<std::int64_t> correct_;
  std::vector<std::int64_t> total_;
  std::vector<StepTrace> steps_;
  std::vector<AnnotationRecord> annotations_;
  Histogram diffs_;
  Histogram selected_entropy_;
  std::int64_t last_batch_ = -1;
  int last_domain_ = -1;
};

enum class ReportFormat { json, csv };

std::string report_json_text(const RunReport& report);
/// Columns: domain,batches,error_pct,annotations; then one "average" row.
std::string report_csv_text(const RunReport& report);
void export_report(const RunReport& report, const std::filesystem::path& path, ReportFormat format);
RunReport read_report_json(const std::filesystem::path& path);

}  // namespace eatta
