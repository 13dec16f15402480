#include "eatta/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "eatta/codec.hpp"
#include "eatta/error.hpp"
#include "eatta/text.hpp"
#include "httplib.h"

namespace eatta {

namespace {

void check_request(const AnnotationRequest& r) {
  if (!r.batch) throw OracleError("annotate: request has no batch");
  if (r.index < 0 || r.index >= r.batch->size()) throw OracleError("annotate: sample index out of range");
}

std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

}  // namespace

Annotation GroundTruthOracle::annotate(const AnnotationRequest& request) {
  check_request(request);
  return {request.batch->labels[request.index], "ground_truth"};
}

NoisyOracle::NoisyOracle(double p, int num_classes, SeedTree seeds) : p_(p), num_classes_(num_classes), seeds_(seeds) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("oracle: noise p must lie in [0,1]");
  if (num_classes < 2) throw ConfigError("oracle: noisy labels need at least 2 classes");
}

Annotation NoisyOracle::annotate(const AnnotationRequest& request) {
  check_request(request);
  const Batch& b = *request.batch;
  const int truth = b.labels[request.index];
  Rng rng = seeds_.stream("oracle", {b.domain_key, static_cast<std::uint64_t>(b.batch_in_domain),
                                     static_cast<std::uint64_t>(request.index)});
  // Both draws are always made so the stream layout does not depend on p.
  const double u = rng.uniform();
  const int offset = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(num_classes_ - 1)));
  if (u < p_) return {(truth + offset) % num_classes_, "noisy"};
  return {truth, "noisy"};
}

ModelOracle::ModelOracle(Model annotator) : model_(std::move(annotator)) {}

Annotation ModelOracle::annotate(const AnnotationRequest& request) {
  check_request(request);
  const Batch& b = *request.batch;
  if (b.x.cols() != model_.arch().input_dim) throw OracleError("model oracle: input dimension mismatch");
  const Matrix row = b.x.row(request.index);
  const ForwardPass pass = forward(model_, row, NormMode::source_stats);
  const std::span<const double> p(pass.probs.row(0).data(), static_cast<std::size_t>(pass.probs.cols()));
  return {argmax(p), "model"};
}

// ---------------------------------------------------------------------------

nlohmann::json AnnotationTask::to_json() const {
  nlohmann::json j;
  j["task_id"] = task_id;
  j["features"] = features;
  j["image_png"] = image_png ? nlohmann::json(*image_png) : nlohmann::json(nullptr);
  nlohmann::json ctx = nlohmann::json::array();
  for (const auto& p : context) ctx.push_back({p[0], p[1]});
  j["context"] = std::move(ctx);
  j["highlight"] = highlight;
  j["pseudo_label_hint"] = pseudo_label_hint ? nlohmann::json(*pseudo_label_hint) : nlohmann::json(nullptr);
  j["class_names"] = class_names;
  j["issued_ms"] = issued_ms;
  j["deadline_ms"] = deadline_ms;
  return j;
}

AnnotationQueue::AnnotationQueue(int num_classes) : num_classes_(num_classes) {
  if (num_classes < 2) throw ConfigError("annotation queue: need at least 2 classes");
}

std::string AnnotationQueue::next_task_id() {
  std::lock_guard lock(mu_);
  return "t" + std::to_string(next_id_++);
}

std::optional<int> AnnotationQueue::ask(AnnotationTask task, std::chrono::steady_clock::time_point deadline) {
  std::unique_lock lock(mu_);
  if (pending_) throw OracleError("annotation queue: a task is already outstanding");
  pending_ = std::move(task);
  reply_.reset();
  cv_.wait_until(lock, deadline, [&] { return reply_.has_value(); });
  std::optional<int> out = reply_;
  pending_.reset();
  reply_.reset();
  return out;
}

std::optional<AnnotationTask> AnnotationQueue::pending() const {
  std::lock_guard lock(mu_);
  if (reply_) return std::nullopt;
  return pending_;
}

SubmitResult AnnotationQueue::submit(const std::string& task_id, int label) {
  {
    std::lock_guard lock(mu_);
    if (!pending_ || pending_->task_id != task_id || reply_) return SubmitResult::stale;
    if (label < 0 || label >= num_classes_) return SubmitResult::out_of_range;
    reply_ = label;
  }
  cv_.notify_all();
  return SubmitResult::accepted;
}

void AnnotationQueue::set_service_attached(bool attached) {
  std::lock_guard lock(mu_);
  attached_ = attached;
}

bool AnnotationQueue::service_attached() const {
  std::lock_guard lock(mu_);
  return attached_;
}

StatusBoard::StatusBoard() : current_(std::make_shared<const nlohmann::json>(nlohmann::json::object())) {}

void StatusBoard::publish(nlohmann::json status) {
  auto next = std::make_shared<const nlohmann::json>(std::move(status));
  std::lock_guard lock(mu_);
  current_ = std::move(next);
}

nlohmann::json StatusBoard::snapshot() const {
  std::shared_ptr<const nlohmann::json> cur;
  {
    std::lock_guard lock(mu_);
    cur = current_;
  }
  return *cur;
}

// ---------------------------------------------------------------------------

HumanOracle::HumanOracle(AnnotationQueue& queue, std::vector<std::string> class_names, double timeout_s,
                         bool show_hint, std::unique_ptr<Oracle> fallback)
    : queue_(queue),
      class_names_(std::move(class_names)),
      timeout_s_(timeout_s),
      show_hint_(show_hint),
      fallback_(std::move(fallback)) {
  if (!(timeout_s > 0.0)) throw ConfigError("oracle: human timeout must be > 0 seconds");
  if (fallback_ && fallback_->kind() == "human") throw ConfigError("oracle: human fallback must be a non-human kind");
}

Annotation HumanOracle::annotate(const AnnotationRequest& request) {
  check_request(request);
  if (!queue_.service_attached()) throw OracleError("human oracle: no annotation service is running");
  const Batch& b = *request.batch;
  AnnotationTask task;
  task.task_id = queue_.next_task_id();
  const auto row = b.x.row(request.index);
  task.features.assign(row.data(), row.data() + row.size());
  if (request.index < static_cast<int>(b.images.size()) && b.images[request.index]) {
    const Image& img = *b.images[request.index];
    task.image_png = base64_encode(encode_png_gray(img.width, img.height, img.pixels));
  }
  if (b.x.cols() == 2) {
    for (Eigen::Index i = 0; i < b.x.rows(); ++i) task.context.push_back({b.x(i, 0), b.x(i, 1)});
    task.highlight = request.index;
  }
  if (show_hint_) task.pseudo_label_hint = request.pseudo_label;
  task.class_names = class_names_;
  const auto timeout = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(timeout_s_));
  task.issued_ms = now_ms();
  task.deadline_ms = task.issued_ms + std::max<std::int64_t>(
                                          1, static_cast<std::int64_t>(std::llround(timeout_s_ * 1000.0)));
  const auto reply = queue_.ask(std::move(task), std::chrono::steady_clock::now() + timeout);
  if (reply) return {*reply, "human"};
  if (!fallback_) throw OracleError("human oracle: annotation timed out and no fallback is configured");
  Annotation a = fallback_->annotate(request);
  a.source = "fallback:" + fallback_->kind();
  return a;
}

// ---------------------------------------------------------------------------

void OracleConfig::validate() const {
  if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("oracle.noise must lie in [0,1]");
  if (kind == OracleKind::human && !(timeout_s > 0.0)) throw ConfigError("oracle.timeout_s must be > 0");
}

OracleKind parse_oracle_kind(std::string_view text) {
  text = trim(text);
  if (text == "ground_truth") return OracleKind::ground_truth;
  if (text == "noisy") return OracleKind::noisy;
  if (text == "model") return OracleKind::model;
  if (text == "human") return OracleKind::human;
  throw ConfigError("unknown oracle kind '" + std::string(text) + "' (expected ground_truth, noisy, model, human)");
}

std::string oracle_kind_name(OracleKind kind) {
  switch (kind) {
    case OracleKind::ground_truth:
      return "ground_truth";
    case OracleKind::noisy:
      return "noisy";
    case OracleKind::model:
      return "model";
    case OracleKind::human:
      return "human";
  }
  return "ground_truth";
}

FallbackKind parse_fallback_kind(std::string_view text) {
  text = trim(text);
  if (text == "none") return FallbackKind::none;
  if (text == "ground_truth") return FallbackKind::ground_truth;
  if (text == "model") return FallbackKind::model;
  throw ConfigError("unknown oracle fallback '" + std::string(text) + "' (expected none, ground_truth, model)");
}

std::string fallback_kind_name(FallbackKind kind) {
  switch (kind) {
    case FallbackKind::none:
      return "none";
    case FallbackKind::ground_truth:
      return "ground_truth";
    case FallbackKind::model:
      return "model";
  }
  return "none";
}

std::vector<std::string> default_class_names(int num_classes) {
  std::vector<std::string> names;
  for (int c = 0; c < num_classes; ++c) names.push_back("class " + std::to_string(c));
  return names;
}

namespace {

std::unique_ptr<Oracle> load_model_oracle(const std::filesystem::path& path, int num_classes) {
  if (path.empty()) throw ConfigError("oracle: a model annotator needs oracle.snapshot");
  if (!std::filesystem::exists(path)) throw IoError("oracle: annotator snapshot not found: " + path.string());
  Snapshot snap = read_snapshot_file(path);
  if (snap.model.num_classes() != num_classes) throw ConfigError("oracle: annotator class count does not match");
  return std::make_unique<ModelOracle>(std::move(snap.model));
}

}  // namespace

std::unique_ptr<Oracle> make_oracle(const OracleConfig& config, int num_classes, const SeedTree& seeds,
                                    AnnotationQueue* queue, const std::vector<std::string>& class_names) {
  config.validate();
  switch (config.kind) {
    case OracleKind::ground_truth:
      return std::make_unique<GroundTruthOracle>();
    case OracleKind::noisy:
      return std::make_unique<NoisyOracle>(config.noise, num_classes, seeds);
    case OracleKind::model:
      return load_model_oracle(config.snapshot, num_classes);
    case OracleKind::human: {
      if (!queue) throw ConfigError("oracle: the human oracle needs an annotation service (use --serve)");
      std::unique_ptr<Oracle> fb;
      if (config.fallback == FallbackKind::ground_truth) fb = std::make_unique<GroundTruthOracle>();
      if (config.fallback == FallbackKind::model) fb = load_model_oracle(config.snapshot, num_classes);
      return std::make_unique<HumanOracle>(*queue, class_names, config.timeout_s, config.show_hint, std::move(fb));
    }
  }
  throw ConfigError("oracle: unknown kind");
}

// ---------------------------------------------------------------------------

struct AnnotationService::Impl {
  httplib::Server server;
};

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

AnnotationService::AnnotationService(AnnotationQueue& queue, StatusBoard& status, std::vector<std::string> class_names)
    : impl_(std::make_unique<Impl>()), queue_(queue) {
  auto& srv = impl_->server;
  srv.Get("/api/pending", [&queue](const httplib::Request&, httplib::Response& res) {
    const auto task = queue.pending();
    if (!task) {
      res.status = 204;
      return;
    }
    send_json(res, 200, task->to_json());
  });
  srv.Post("/api/label", [&queue](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      send_json(res, 400, {{"error", "body is not valid JSON"}});
      return;
    }
    if (!body.is_object() || !body.contains("task_id") || !body["task_id"].is_string() || !body.contains("label") ||
        !body["label"].is_number_integer()) {
      send_json(res, 400, {{"error", "expected {\"task_id\": string, \"label\": integer}"}});
      return;
    }
    const auto id = body["task_id"].get<std::string>();
    const auto raw = body["label"].get<long long>();
    const int label = raw < 0 || raw > (1 << 30) ? -1 : static_cast<int>(raw);
    switch (queue.submit(id, label)) {
      case SubmitResult::accepted:
        send_json(res, 200, {{"status", "accepted"}, {"task_id", id}});
        break;
      case SubmitResult::stale:
        send_json(res, 409, {{"error", "task is not pending (expired, answered, or unknown)"}, {"task_id", id}});
        break;
      case SubmitResult::out_of_range:
        send_json(res, 422,
                  {{"error", "label out of range"}, {"num_classes", queue.num_classes()}, {"task_id", id}});
        break;
    }
  });
  srv.Get("/api/status", [&status](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, status.snapshot());
  });
  srv.Get("/api/classes", [names = std::move(class_names)](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"classes", names}});
  });
}

AnnotationService::~AnnotationService() { stop(); }

void AnnotationService::start(const std::string& host, int port) {
  if (running()) throw Error("annotation service: already running");
  auto& srv = impl_->server;
  if (port == 0) {
    port_ = srv.bind_to_any_port(host);
    if (port_ <= 0) throw IoError("annotation service: cannot bind " + host);
  } else {
    if (!srv.bind_to_port(host, port)) {
      throw IoError("annotation service: cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
    }
    port_ = port;
  }
  thread_ = std::thread([&srv] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  queue_.set_service_attached(true);
}

void AnnotationService::stop() {
  if (!thread_.joinable()) return;
  queue_.set_service_attached(false);
  impl_->server.stop();
  thread_.join();
}

std::pair<std::string, int> parse_bind(std::string_view text) {
  text = trim(text);
  std::string host = "127.0.0.1";
  std::string_view port_text = text;
  const auto colon = text.rfind(':');
  if (colon != std::string_view::npos) {
    if (colon > 0) host = std::string(text.substr(0, colon));
    port_text = text.substr(colon + 1);
  }
  long long port = 0;
  if (!parse_int(port_text, port) || port < 0 || port > 65535) {
    throw ConfigError("bind address must be [host:]port, got '" + std::string(text) + "'");
  }
  return {host, static_cast<int>(port)};
}

}  // namespace eatta
