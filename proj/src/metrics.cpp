#include "eatta/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "eatta/error.hpp"
#include "eatta/text.hpp"

namespace eatta {

using nlohmann::ordered_json;

void Histogram::add(double v) {
  if (counts.empty() || std::isnan(v)) return;
  const double t = (v - lo) / (hi - lo);
  auto bin = static_cast<std::ptrdiff_t>(std::floor(t * static_cast<double>(counts.size())));
  bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(counts.size()) - 1);
  ++counts[bin];
}

int RunReport::total_annotations() const {
  int n = 0;
  for (const auto& d : domains) n += d.annotations;
  return n;
}

int RunReport::total_fallbacks() const {
  int n = 0;
  for (const auto& d : domains) n += d.fallbacks;
  return n;
}

namespace {

ordered_json opt_number(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::optional<double> read_opt(const ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

// NaN has no JSON literal; it travels as null.
ordered_json num(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }
double read_num(const ordered_json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

ordered_json hist_json(const Histogram& h) {
  return ordered_json{{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}};
}

Histogram read_hist(const ordered_json& j) {
  Histogram h;
  h.lo = j.at("lo").get<double>();
  h.hi = j.at("hi").get<double>();
  h.counts = j.at("counts").get<std::vector<std::int64_t>>();
  return h;
}

}  // namespace

ordered_json RunReport::to_json() const {
  ordered_json j;
  j["format"] = "eatta-run-report";
  j["version"] = 1;
  j["status"] = status;
  j["seed"] = seed;
  j["config"] = config;
  j["num_classes"] = num_classes;
  ordered_json doms = ordered_json::array();
  for (const auto& d : domains) {
    doms.push_back(ordered_json{{"name", d.name},
                                {"batches", d.batches},
                                {"samples", d.samples},
                                {"errors", d.errors},
                                {"error_rate", num(d.error_rate)},
                                {"annotations", d.annotations},
                                {"fallbacks", d.fallbacks}});
  }
  j["domains"] = std::move(doms);
  j["average_error"] = num(average_error);
  ordered_json tpr = ordered_json::array();
  for (const auto& t : class_tpr) tpr.push_back(opt_number(t));
  j["class_tpr"] = std::move(tpr);
  j["class_correct"] = class_correct;
  j["class_total"] = class_total;
  j["mean_tpr"] = opt_number(mean_tpr);
  ordered_json steps_j = ordered_json::array();
  for (const auto& s : steps) {
    steps_j.push_back(ordered_json{{"batch", s.batch_index},
                                   {"domain", s.domain_id},
                                   {"n", s.batch_size},
                                   {"errors", s.errors},
                                   {"confident", s.confident},
                                   {"sup", s.sup_count},
                                   {"unsup", s.unsup_count},
                                   {"loss_sup", num(s.loss_sup)},
                                   {"loss_unsup", num(s.loss_unsup)},
                                   {"norm_sup", num(s.norm_sup)},
                                   {"norm_unsup", num(s.norm_unsup)},
                                   {"gamma_raw", {num(s.gamma_raw[0]), num(s.gamma_raw[1])}},
                                   {"gamma", {num(s.gamma[0]), num(s.gamma[1])}},
                                   {"updated", s.updated}});
  }
  j["steps"] = std::move(steps_j);
  ordered_json ann = ordered_json::array();
  for (const auto& a : annotations) {
    const auto& c = a.sample;
    ann.push_back(ordered_json{{"batch", a.batch_index},
                               {"index", c.index},
                               {"stream_index", c.stream_index},
                               {"pseudo_label", c.pseudo_label},
                               {"label", c.label},
                               {"true_label", c.true_label},
                               {"source", c.source},
                               {"score", num(c.diff)},
                               {"entropy", num(c.entropy)},
                               {"balance_fired", c.balance_fired}});
  }
  j["annotations"] = std::move(ann);
  j["diff_histogram"] = hist_json(diff_histogram);
  j["selected_entropy_histogram"] = hist_json(selected_entropy_histogram);
  return j;
}

RunReport RunReport::from_json(const ordered_json& j) {
  if (j.value("format", "") != "eatta-run-report") throw IoError("report: not an eatta run report");
  RunReport r;
  r.status = j.at("status").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config = j.at("config").get<std::string>();
  r.num_classes = j.at("num_classes").get<int>();
  for (const auto& d : j.at("domains")) {
    DomainSummary s;
    s.name = d.at("name").get<std::string>();
    s.batches = d.at("batches").get<int>();
    s.samples = d.at("samples").get<std::int64_t>();
    s.errors = d.at("errors").get<std::int64_t>();
    s.error_rate = read_num(d.at("error_rate"));
    s.annotations = d.at("annotations").get<int>();
    s.fallbacks = d.at("fallbacks").get<int>();
    r.domains.push_back(std::move(s));
  }
  r.average_error = read_num(j.at("average_error"));
  for (const auto& t : j.at("class_tpr")) r.class_tpr.push_back(read_opt(t));
  r.class_correct = j.at("class_correct").get<std::vector<std::int64_t>>();
  r.class_total = j.at("class_total").get<std::vector<std::int64_t>>();
  r.mean_tpr = read_opt(j.at("mean_tpr"));
  for (const auto& s : j.at("steps")) {
    StepTrace t;
    t.batch_index = s.at("batch").get<std::int64_t>();
    t.domain_id = s.at("domain").get<int>();
    t.batch_size = s.at("n").get<int>();
    t.errors = s.at("errors").get<int>();
    t.confident = s.at("confident").get<int>();
    t.sup_count = s.at("sup").get<int>();
    t.unsup_count = s.at("unsup").get<int>();
    t.loss_sup = read_num(s.at("loss_sup"));
    t.loss_unsup = read_num(s.at("loss_unsup"));
    t.norm_sup = read_num(s.at("norm_sup"));
    t.norm_unsup = read_num(s.at("norm_unsup"));
    t.gamma_raw = {read_num(s.at("gamma_raw").at(0)), read_num(s.at("gamma_raw").at(1))};
    t.gamma = {read_num(s.at("gamma").at(0)), read_num(s.at("gamma").at(1))};
    t.updated = s.at("updated").get<bool>();
    r.steps.push_back(t);
  }
  for (const auto& a : j.at("annotations")) {
    AnnotationRecord rec;
    rec.batch_index = a.at("batch").get<std::int64_t>();
    rec.sample.index = a.at("index").get<int>();
    rec.sample.stream_index = a.at("stream_index").get<std::int64_t>();
    rec.sample.pseudo_label = a.at("pseudo_label").get<int>();
    rec.sample.label = a.at("label").get<int>();
    rec.sample.true_label = a.at("true_label").get<int>();
    rec.sample.source = a.at("source").get<std::string>();
    rec.sample.diff = read_num(a.at("score"));
    rec.sample.entropy = read_num(a.at("entropy"));
    rec.sample.balance_fired = a.at("balance_fired").get<bool>();
    r.annotations.push_back(std::move(rec));
  }
  r.diff_histogram = read_hist(j.at("diff_histogram"));
  r.selected_entropy_histogram = read_hist(j.at("selected_entropy_histogram"));
  return r;
}

// ---------------------------------------------------------------------------

ReportBuilder::ReportBuilder(std::vector<std::string> domain_names, int num_classes, std::string config_text,
                             std::uint64_t seed)
    : names_(std::move(domain_names)),
      num_classes_(num_classes),
      config_(std::move(config_text)),
      seed_(seed),
      correct_(num_classes, 0),
      total_(num_classes, 0) {
  if (num_classes < 2) throw ConfigError("report: need at least 2 classes");
  for (const auto& n : names_) domains_.push_back({n});
  diffs_ = {0.0, 1.0, std::vector<std::int64_t>(20, 0)};
  selected_entropy_ = {0.0, std::log(static_cast<double>(num_classes)), std::vector<std::int64_t>(20, 0)};
}

void ReportBuilder::accumulate(const StepReport& step) {
  if (step.batch_index <= last_batch_) {
    throw ConfigError("report: step " + std::to_string(step.batch_index) + " arrived after step " +
                      std::to_string(last_batch_) + " (out of order)");
  }
  if (step.domain_id < 0 || step.domain_id >= static_cast<int>(domains_.size())) {
    throw ConfigError("report: step has unknown domain id");
  }
  if (step.predictions.size() != step.true_labels.size()) throw ConfigError("report: prediction/label mismatch");
  last_batch_ = step.batch_index;
  last_domain_ = step.domain_id;

  DomainSummary& d = domains_[step.domain_id];
  d.batches += 1;
  d.samples += static_cast<std::int64_t>(step.predictions.size());
  int errors = 0;
  for (std::size_t i = 0; i < step.predictions.size(); ++i) {
    const int y = step.true_labels[i];
    if (y < 0 || y >= num_classes_) throw ConfigError("report: true label out of range");
    ++total_[y];
    if (step.predictions[i] == y) {
      ++correct_[y];
    } else {
      ++errors;
    }
  }
  d.errors += errors;
  d.annotations += static_cast<int>(step.chosen.size());
  for (const auto& c : step.chosen) {
    if (c.source.rfind("fallback", 0) == 0) ++d.fallbacks;
    annotations_.push_back({step.batch_index, c});
    selected_entropy_.add(c.entropy);
  }
  for (double v : step.diffs) diffs_.add(v);

  StepTrace t;
  t.batch_index = step.batch_index;
  t.domain_id = step.domain_id;
  t.batch_size = static_cast<int>(step.predictions.size());
  t.errors = errors;
  t.confident = step.confident_count;
  t.sup_count = step.sup_count;
  t.unsup_count = step.unsup_count;
  t.loss_sup = step.loss_sup;
  t.loss_unsup = step.loss_unsup;
  t.norm_sup = step.norm_sup;
  t.norm_unsup = step.norm_unsup;
  t.gamma_raw = step.gamma_raw;
  t.gamma = step.gamma;
  t.updated = step.updated;
  steps_.push_back(t);
}

double ReportBuilder::running_error() const {
  std::int64_t errors = 0;
  std::int64_t samples = 0;
  for (const auto& d : domains_) {
    errors += d.errors;
    samples += d.samples;
  }
  return samples == 0 ? 0.0 : static_cast<double>(errors) / static_cast<double>(samples);
}

int ReportBuilder::domains_done() const { return last_domain_ < 0 ? 0 : last_domain_; }

int ReportBuilder::answered() const { return static_cast<int>(annotations_.size()); }

int ReportBuilder::fallbacks() const {
  int n = 0;
  for (const auto& d : domains_) n += d.fallbacks;
  return n;
}

RunReport ReportBuilder::finish() const {
  RunReport r;
  r.status = status_;
  r.seed = seed_;
  r.config = config_;
  r.num_classes = num_classes_;
  r.domains = domains_;
  double sum = 0.0;
  int counted = 0;
  for (auto& d : r.domains) {
    d.error_rate = d.samples == 0 ? 0.0 : static_cast<double>(d.errors) / static_cast<double>(d.samples);
    if (d.samples > 0) {
      sum += d.error_rate;
      ++counted;
    }
  }
  r.average_error = counted == 0 ? 0.0 : sum / counted;
  r.class_correct = correct_;
  r.class_total = total_;
  double tpr_sum = 0.0;
  int tpr_n = 0;
  for (int c = 0; c < num_classes_; ++c) {
    if (total_[c] == 0) {
      r.class_tpr.emplace_back(std::nullopt);
    } else {
      const double t = static_cast<double>(correct_[c]) / static_cast<double>(total_[c]);
      r.class_tpr.emplace_back(t);
      tpr_sum += t;
      ++tpr_n;
    }
  }
  if (tpr_n > 0) r.mean_tpr = tpr_sum / tpr_n;
  r.steps = steps_;
  r.annotations = annotations_;
  r.diff_histogram = diffs_;
  r.selected_entropy_histogram = selected_entropy_;
  return r;
}

// ---------------------------------------------------------------------------

std::string report_json_text(const RunReport& report) { return report.to_json().dump(1) + "\n"; }

std::string report_csv_text(const RunReport& report) {
  std::ostringstream os;
  os << "domain,batches,error_pct,annotations\n";
  int batches = 0;
  for (const auto& d : report.domains) {
    os << d.name << ',' << d.batches << ',' << std::fixed << std::setprecision(4) << 100.0 * d.error_rate << ','
       << d.annotations << '\n';
    batches += d.batches;
  }
  os << "average," << batches << ',' << std::fixed << std::setprecision(4) << 100.0 * report.average_error << ','
     << report.total_annotations() << '\n';
  return os.str();
}

void export_report(const RunReport& report, const std::filesystem::path& path, ReportFormat format) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("report: cannot open " + path.string() + " for writing");
  os << (format == ReportFormat::json ? report_json_text(report) : report_csv_text(report));
  if (!os) throw IoError("report: write failed for " + path.string());
}

RunReport read_report_json(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("report: cannot open " + path.string());
  try {
    return RunReport::from_json(ordered_json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("report: " + path.string() + ": " + e.what());
  }
}

}  // namespace eatta
