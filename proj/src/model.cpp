#include "eatta/model.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "eatta/error.hpp"
#include "eatta/rng.hpp"

namespace eatta {

namespace {

std::atomic<std::uint64_t> g_version_counter{1};

constexpr double kProbFloor = 1e-12;

}  // namespace

void ArchSpec::validate() const {
  if (input_dim < 1) throw ConfigError("arch: input_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("arch: num_classes must be >= 2");
  for (int w : hidden) {
    if (w < 1) throw ConfigError("arch: hidden widths must be >= 1");
  }
}

std::string ArchSpec::to_string() const {
  std::ostringstream os;
  os << input_dim;
  for (int w : hidden) os << "-" << w;
  os << "-" << num_classes;
  return os.str();
}

Model::Model(ArchSpec arch, double norm_eps) : arch_(std::move(arch)), norm_eps_(norm_eps) {
  arch_.validate();
  if (!(norm_eps_ > 0.0)) throw ConfigError("model: norm_eps must be > 0");
  std::size_t offset = 0;
  int in = arch_.input_dim;
  for (int out : arch_.hidden) {
    Layout l;
    l.in = in;
    l.out = out;
    l.weight = offset;
    offset += static_cast<std::size_t>(in) * out;
    l.bias = offset;
    offset += out;
    l.scale = offset;
    offset += out;
    l.shift = offset;
    offset += out;
    layout_.push_back(l);
    in = out;
  }
  Layout cls;
  cls.in = in;
  cls.out = arch_.num_classes;
  cls.weight = offset;
  offset += static_cast<std::size_t>(in) * cls.out;
  cls.bias = offset;
  offset += cls.out;
  layout_.push_back(cls);

  params_.assign(offset, 0.0);
  for (int l = 0; l < num_hidden(); ++l) {
    const Layout& ly = layout_[l];
    std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(ly.scale), ly.out, 1.0);
    for (int k = 0; k < 2 * ly.out; ++k) trainable_.push_back(ly.scale + k);
    running_mean_.emplace_back(Vector::Zero(ly.out));
    running_var_.emplace_back(Vector::Ones(ly.out));
  }
  touch();
}

Model Model::init(const ArchSpec& arch, std::uint64_t seed, double norm_eps) {
  Model m(arch, norm_eps);
  Rng rng(mix_seed({seed, hash_name("model-init")}));
  for (const Layout& ly : m.layout_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(ly.in));
    const std::size_t n = static_cast<std::size_t>(ly.in) * ly.out;
    for (std::size_t k = 0; k < n; ++k) m.params_[ly.weight + k] = (2.0 * rng.uniform() - 1.0) * bound;
    for (int k = 0; k < ly.out; ++k) m.params_[ly.bias + k] = (2.0 * rng.uniform() - 1.0) * bound;
  }
  m.touch();
  return m;
}

void Model::touch() { version_ = g_version_counter.fetch_add(1); }

void Model::set_params(std::span<const double> values) {
  if (values.size() != params_.size()) throw ConfigError("model: parameter count mismatch");
  std::copy(values.begin(), values.end(), params_.begin());
  touch();
}

std::vector<double> Model::trainable_params() const {
  std::vector<double> out(trainable_.size());
  for (std::size_t k = 0; k < trainable_.size(); ++k) out[k] = params_[trainable_[k]];
  return out;
}

void Model::set_trainable_params(std::span<const double> values) {
  if (values.size() != trainable_.size()) throw ConfigError("model: trainable parameter count mismatch");
  for (std::size_t k = 0; k < trainable_.size(); ++k) params_[trainable_[k]] = values[k];
  touch();
}

Eigen::Map<const Matrix> Model::weight(int layer) const {
  const Layout& ly = layout_.at(layer);
  return {params_.data() + ly.weight, ly.out, ly.in};
}

Eigen::Map<const Vector> Model::bias(int layer) const {
  const Layout& ly = layout_.at(layer);
  return {params_.data() + ly.bias, ly.out};
}

Eigen::Map<const Vector> Model::norm_scale(int layer) const {
  if (layer < 0 || layer >= num_hidden()) throw ConfigError("model: layer has no normalization");
  const Layout& ly = layout_[layer];
  return {params_.data() + ly.scale, ly.out};
}

Eigen::Map<const Vector> Model::norm_shift(int layer) const {
  if (layer < 0 || layer >= num_hidden()) throw ConfigError("model: layer has no normalization");
  const Layout& ly = layout_[layer];
  return {params_.data() + ly.shift, ly.out};
}

void Model::set_running_stats(std::vector<Vector> mean, std::vector<Vector> var) {
  if (mean.size() != running_mean_.size() || var.size() != running_var_.size()) {
    throw ConfigError("model: running stats layer count mismatch");
  }
  for (std::size_t l = 0; l < mean.size(); ++l) {
    if (mean[l].size() != running_mean_[l].size() || var[l].size() != running_var_[l].size()) {
      throw ConfigError("model: running stats width mismatch");
    }
  }
  running_mean_ = std::move(mean);
  running_var_ = std::move(var);
  touch();
}

// ---------------------------------------------------------------------------
// forward

ForwardPass forward(const Model& model, const Matrix& x, NormMode mode) {
  if (x.rows() == 0) throw ConfigError("forward: empty batch");
  if (x.cols() != model.arch().input_dim) {
    throw ConfigError("forward: input has " + std::to_string(x.cols()) + " columns, model expects " +
                      std::to_string(model.arch().input_dim));
  }
  ForwardPass pass;
  pass.mode = mode;
  pass.model_version = model.version();
  pass.hidden.reserve(model.num_hidden());

  Matrix a = x;
  for (int l = 0; l < model.num_hidden(); ++l) {
    HiddenCache c;
    c.input = a;
    Matrix z = a * model.weight(l).transpose();
    z.rowwise() += model.bias(l).transpose();
    if (mode == NormMode::batch_stats) {
      c.mean = z.colwise().mean().transpose();
      z.rowwise() -= c.mean.transpose();
      c.var = z.array().square().colwise().mean().transpose();
      c.inv_std = (c.var.array() + model.norm_eps()).rsqrt();
    } else {
      c.mean = model.running_mean(l);
      z.rowwise() -= c.mean.transpose();
      c.var = model.running_var(l);
      c.inv_std = (c.var.array() + model.norm_eps()).rsqrt();
    }
    c.normalized = z.array().rowwise() * c.inv_std.transpose().array();
    c.norm_out = c.normalized.array().rowwise() * model.norm_scale(l).transpose().array();
    c.norm_out.rowwise() += model.norm_shift(l).transpose();
    a = c.norm_out.cwiseMax(0.0);
    pass.hidden.push_back(std::move(c));
  }
  pass.features = std::move(a);
  pass.logits = classify(model, pass.features);
  pass.probs = softmax_rows(pass.logits);
  return pass;
}

Matrix classify(const Model& model, const Matrix& features) {
  if (features.cols() != model.feature_dim()) throw ConfigError("classify: feature dimension mismatch");
  const int c = model.num_hidden();
  Matrix logits = features * model.weight(c).transpose();
  logits.rowwise() += model.bias(c).transpose();
  return logits;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - mx);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto row = softmax(std::span<const double>(logits.row(r).data(), static_cast<std::size_t>(logits.cols())));
    std::copy(row.begin(), row.end(), out.row(r).data());
  }
  return out;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

int argmax(std::span<const double> v) {
  int best = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = static_cast<int>(k);
  }
  return best;
}

double cross_entropy(std::span<const double> probs, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
    throw ConfigError("cross_entropy: label " + std::to_string(label) + " out of range");
  }
  return -std::log(std::max(probs[label], kProbFloor));
}

// ---------------------------------------------------------------------------
// losses and backward

LossSpec LossSpec::cross_entropy_over(std::vector<int> rows, std::vector<int> labels, double scale) {
  return {LossKind::cross_entropy, std::move(rows), std::move(labels), scale};
}

LossSpec LossSpec::entropy_over(std::vector<int> rows, double scale) {
  return {LossKind::entropy, std::move(rows), {}, scale};
}

namespace {

std::span<const double> prob_row(const ForwardPass& pass, int r) {
  return {pass.probs.row(r).data(), static_cast<std::size_t>(pass.probs.cols())};
}

void check_spec(const ForwardPass& pass, const LossSpec& spec) {
  if (spec.kind == LossKind::cross_entropy && spec.labels.size() != spec.rows.size()) {
    throw ConfigError("loss: cross-entropy needs one label per row");
  }
  for (int r : spec.rows) {
    if (r < 0 || r >= pass.rows()) throw ConfigError("loss: row index out of range");
  }
  if (spec.kind == LossKind::cross_entropy) {
    for (int y : spec.labels) {
      if (y < 0 || y >= pass.probs.cols()) throw ConfigError("loss: label out of range");
    }
  }
}

Matrix logits_gradient(const ForwardPass& pass, const LossSpec& spec) {
  Matrix g = Matrix::Zero(pass.rows(), pass.probs.cols());
  const double w = spec.scale / static_cast<double>(spec.rows.size());
  for (std::size_t k = 0; k < spec.rows.size(); ++k) {
    const int r = spec.rows[k];
    const auto p = prob_row(pass, r);
    if (spec.kind == LossKind::cross_entropy) {
      const int y = spec.labels[k];
      if (p[y] < kProbFloor) continue;  // clamped branch is flat
      for (std::size_t j = 0; j < p.size(); ++j) g(r, j) += w * p[j];
      g(r, y) -= w;
    } else {
      const double h = entropy(p);
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (p[j] > 0.0) g(r, j) += -w * p[j] * (std::log(p[j]) + h);
      }
    }
  }
  return g;
}

// Writes into `full` (all params) when non-null, else into `trainable`.
void backward_impl(const Model& model, const ForwardPass& pass, const LossSpec& spec, std::vector<double>* full,
                   std::vector<double>* trainable) {
  if (pass.model_version != model.version()) {
    throw ConfigError("backward: stale forward cache (model changed since forward)");
  }
  if (static_cast<int>(pass.hidden.size()) != model.num_hidden()) {
    throw ConfigError("backward: forward cache does not match model depth");
  }
  const Matrix dlogits = logits_gradient(pass, spec);
  const int nh = model.num_hidden();
  const double n = static_cast<double>(pass.rows());

  // Parameter offsets follow the flat layout documented on Model.
  auto offset_of = [&](int layer) {
    std::size_t off = 0;
    int in = model.arch().input_dim;
    for (int l = 0; l < layer; ++l) {
      const int out = model.arch().hidden[l];
      off += static_cast<std::size_t>(in) * out + 3 * static_cast<std::size_t>(out);
      in = out;
    }
    return off;
  };

  if (full) {
    const std::size_t off = offset_of(nh);
    const Matrix dw = dlogits.transpose() * pass.features;
    const Vector db = dlogits.colwise().sum().transpose();
    std::copy(dw.data(), dw.data() + dw.size(), full->begin() + static_cast<std::ptrdiff_t>(off));
    std::copy(db.data(), db.data() + db.size(), full->begin() + static_cast<std::ptrdiff_t>(off + dw.size()));
  }
  if (nh == 0) return;

  Matrix da = dlogits * model.weight(nh);
  std::size_t t_off = model.num_trainable();
  for (int l = nh - 1; l >= 0; --l) {
    const HiddenCache& c = pass.hidden[l];
    const int out = model.arch().hidden[l];
    const Matrix dy = (c.norm_out.array() > 0.0).select(da.array(), 0.0).matrix();
    const Vector dscale = (dy.array() * c.normalized.array()).colwise().sum().transpose();
    const Vector dshift = dy.colwise().sum().transpose();

    if (full) {
      const std::size_t off = offset_of(l) + static_cast<std::size_t>(c.input.cols()) * out + out;
      std::copy(dscale.data(), dscale.data() + out, full->begin() + static_cast<std::ptrdiff_t>(off));
      std::copy(dshift.data(), dshift.data() + out, full->begin() + static_cast<std::ptrdiff_t>(off + out));
    } else {
      t_off -= 2 * static_cast<std::size_t>(out);
      std::copy(dscale.data(), dscale.data() + out, trainable->begin() + static_cast<std::ptrdiff_t>(t_off));
      std::copy(dshift.data(), dshift.data() + out, trainable->begin() + static_cast<std::ptrdiff_t>(t_off + out));
      if (l == 0) break;
    }

    const Matrix dxhat = dy.array().rowwise() * model.norm_scale(l).transpose().array();
    Matrix dz;
    if (pass.mode == NormMode::batch_stats) {
      const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
      const Eigen::RowVectorXd sum_dxhat_xhat = (dxhat.array() * c.normalized.array()).colwise().sum();
      Matrix inner = n * dxhat;
      inner.rowwise() -= sum_dxhat;
      inner.array() -= c.normalized.array().rowwise() * sum_dxhat_xhat.array();
      dz = inner.array().rowwise() * (c.inv_std.transpose().array() / n);
    } else {
      dz = dxhat.array().rowwise() * c.inv_std.transpose().array();
    }
    if (full) {
      const std::size_t off = offset_of(l);
      const Matrix dw = dz.transpose() * c.input;
      const Vector db = dz.colwise().sum().transpose();
      std::copy(dw.data(), dw.data() + dw.size(), full->begin() + static_cast<std::ptrdiff_t>(off));
      std::copy(db.data(), db.data() + db.size(), full->begin() + static_cast<std::ptrdiff_t>(off + dw.size()));
    }
    if (l > 0) da = dz * model.weight(l);
  }
}

}  // namespace

double evaluate_loss(const ForwardPass& pass, const LossSpec& spec) {
  check_spec(pass, spec);
  if (spec.rows.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < spec.rows.size(); ++k) {
    const auto p = prob_row(pass, spec.rows[k]);
    sum += spec.kind == LossKind::cross_entropy ? cross_entropy(p, spec.labels[k]) : entropy(p);
  }
  return spec.scale * sum / static_cast<double>(spec.rows.size());
}

TrainableGradient backward_trainable(const Model& model, const ForwardPass& pass, const LossSpec& spec) {
  check_spec(pass, spec);
  TrainableGradient out;
  out.values.assign(model.num_trainable(), 0.0);
  if (spec.rows.empty()) {
    if (pass.model_version != model.version()) throw ConfigError("backward: stale forward cache");
    out.empty_set = true;
    return out;
  }
  backward_impl(model, pass, spec, nullptr, &out.values);
  return out;
}

std::vector<double> backward_full(const Model& model, const ForwardPass& pass, const LossSpec& spec) {
  check_spec(pass, spec);
  std::vector<double> out(model.num_params(), 0.0);
  if (spec.rows.empty()) return out;
  backward_impl(model, pass, spec, &out, nullptr);
  return out;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

GradientBundle GradientBundle::from(std::vector<double> sup, std::vector<double> unsup) {
  if (sup.size() != unsup.size()) throw ConfigError("gradient bundle: length mismatch");
  GradientBundle b;
  b.norm_sup = l2_norm(sup);
  b.norm_unsup = l2_norm(unsup);
  b.grad_sup = std::move(sup);
  b.grad_unsup = std::move(unsup);
  return b;
}

// ---------------------------------------------------------------------------
// optimizer

Optimizer::Optimizer(OptimizerConfig config, std::size_t size) : config_(config), first_(size, 0.0) {
  if (!(config_.lr >= 0.0) || !std::isfinite(config_.lr)) throw ConfigError("optimizer: lr must be finite and >= 0");
  if (config_.kind == OptimizerKind::sgd_momentum) {
    if (config_.momentum < 0.0 || config_.momentum >= 1.0) throw ConfigError("optimizer: momentum must be in [0,1)");
  } else {
    if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0) {
      throw ConfigError("optimizer: adam betas must be in [0,1)");
    }
    if (!(config_.eps > 0.0)) throw ConfigError("optimizer: adam eps must be > 0");
    second_.assign(size, 0.0);
  }
}

Optimizer Optimizer::from_state(OptimizerConfig config, std::vector<double> first, std::vector<double> second,
                                std::int64_t steps) {
  Optimizer o(config, first.size());
  if (second.size() != o.second_.size()) throw ConfigError("optimizer: accumulator shape mismatch");
  o.first_ = std::move(first);
  o.second_ = std::move(second);
  o.steps_ = steps;
  return o;
}

void Optimizer::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != first_.size() || grad.size() != first_.size()) {
    throw ConfigError("optimizer: gradient length " + std::to_string(grad.size()) + " does not match state " +
                      std::to_string(first_.size()));
  }
  for (std::size_t k = 0; k < grad.size(); ++k) {
    if (!std::isfinite(grad[k])) {
      throw NumericError("optimizer: non-finite gradient entry at index " + std::to_string(k) + "; step refused");
    }
  }
  ++steps_;
  if (config_.kind == OptimizerKind::sgd_momentum) {
    for (std::size_t k = 0; k < grad.size(); ++k) {
      first_[k] = config_.momentum * first_[k] + grad[k];
      params[k] -= config_.lr * first_[k];
    }
    return;
  }
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < grad.size(); ++k) {
    first_[k] = config_.beta1 * first_[k] + (1.0 - config_.beta1) * grad[k];
    second_[k] = config_.beta2 * second_[k] + (1.0 - config_.beta2) * grad[k] * grad[k];
    const double mhat = first_[k] / c1;
    const double vhat = second_[k] / c2;
    params[k] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
  }
}

void optimizer_step(Model& model, Optimizer& optimizer, std::span<const double> trainable_grad) {
  std::vector<double> theta = model.trainable_params();
  optimizer.step(theta, trainable_grad);
  model.set_trainable_params(theta);
}

// ---------------------------------------------------------------------------
// snapshots

Snapshot take_snapshot(const Model& model, const Optimizer& optimizer) { return {model, optimizer}; }

void restore(const Snapshot& snap, Model& model, Optimizer& optimizer) {
  if (!(snap.model.arch() == model.arch())) {
    throw ConfigError("restore: snapshot arch " + snap.model.arch().to_string() + " does not match model arch " +
                      model.arch().to_string());
  }
  if (snap.optimizer.size() != optimizer.size()) throw ConfigError("restore: optimizer state size mismatch");
  model = snap.model;
  optimizer = snap.optimizer;
}

namespace {

constexpr char kSnapshotMagic[8] = {'E', 'A', 'T', 'T', 'A', 'S', 'N', 'P'};
constexpr std::uint32_t kSnapshotVersion = 1;

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    bytes_.insert(bytes_.end(), raw, raw + sizeof(T));
  }
  void put_doubles(std::span<const double> v) {
    put<std::uint64_t>(v.size());
    for (double x : v) put(x);
  }
  void put_raw(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw IoError("snapshot: truncated data");
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }
  std::vector<double> get_doubles() {
    const auto n = get<std::uint64_t>();
    if (n > (bytes_.size() - pos_) / sizeof(double)) throw IoError("snapshot: array length exceeds data");
    std::vector<double> v(n);
    for (auto& x : v) x = get<double>();
    return v;
  }
  bool expect_raw(const char* data, std::size_t n) {
    if (pos_ + n > bytes_.size()) return false;
    const bool ok = std::memcmp(bytes_.data() + pos_, data, n) == 0;
    pos_ += n;
    return ok;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_snapshot(const Snapshot& snap) {
  ByteWriter w;
  w.put_raw(kSnapshotMagic, sizeof(kSnapshotMagic));
  w.put(kSnapshotVersion);
  const ArchSpec& arch = snap.model.arch();
  w.put<std::int32_t>(arch.input_dim);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(arch.hidden.size()));
  for (int h : arch.hidden) w.put<std::int32_t>(h);
  w.put<std::int32_t>(arch.num_classes);
  w.put(snap.model.norm_eps());
  w.put_doubles(snap.model.params());
  for (int l = 0; l < snap.model.num_hidden(); ++l) {
    const Vector& m = snap.model.running_mean(l);
    const Vector& v = snap.model.running_var(l);
    w.put_doubles({m.data(), static_cast<std::size_t>(m.size())});
    w.put_doubles({v.data(), static_cast<std::size_t>(v.size())});
  }
  const OptimizerConfig& oc = snap.optimizer.config();
  w.put<std::uint8_t>(oc.kind == OptimizerKind::sgd_momentum ? 0 : 1);
  w.put(oc.lr);
  w.put(oc.momentum);
  w.put(oc.beta1);
  w.put(oc.beta2);
  w.put(oc.eps);
  w.put<std::int64_t>(snap.optimizer.steps());
  w.put_doubles(snap.optimizer.first_moment());
  w.put_doubles(snap.optimizer.second_moment());
  return w.take();
}

Snapshot deserialize_snapshot(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (!r.expect_raw(kSnapshotMagic, sizeof(kSnapshotMagic))) throw IoError("snapshot: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kSnapshotVersion) throw IoError("snapshot: unsupported version " + std::to_string(version));
  ArchSpec arch;
  arch.input_dim = r.get<std::int32_t>();
  const auto nh = r.get<std::uint32_t>();
  if (nh > 1024) throw IoError("snapshot: implausible layer count");
  for (std::uint32_t k = 0; k < nh; ++k) arch.hidden.push_back(r.get<std::int32_t>());
  arch.num_classes = r.get<std::int32_t>();
  const double eps = r.get<double>();
  Model model(arch, eps);
  const auto params = r.get_doubles();
  if (params.size() != model.num_params()) throw IoError("snapshot: parameter count does not match arch");
  model.set_params(params);
  std::vector<Vector> means;
  std::vector<Vector> vars;
  for (std::uint32_t l = 0; l < nh; ++l) {
    const auto m = r.get_doubles();
    const auto v = r.get_doubles();
    means.emplace_back(Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size())));
    vars.emplace_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  model.set_running_stats(std::move(means), std::move(vars));
  OptimizerConfig oc;
  oc.kind = r.get<std::uint8_t>() == 0 ? OptimizerKind::sgd_momentum : OptimizerKind::adam;
  oc.lr = r.get<double>();
  oc.momentum = r.get<double>();
  oc.beta1 = r.get<double>();
  oc.beta2 = r.get<double>();
  oc.eps = r.get<double>();
  const auto steps = r.get<std::int64_t>();
  auto first = r.get_doubles();
  auto second = r.get_doubles();
  if (!r.done()) throw IoError("snapshot: trailing bytes");
  Optimizer opt = Optimizer::from_state(oc, std::move(first), std::move(second), steps);
  return {std::move(model), std::move(opt)};
}

void write_snapshot_file(const std::filesystem::path& path, const Snapshot& snap) {
  const auto bytes = serialize_snapshot(snap);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("snapshot: cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("snapshot: write failed for " + path.string());
}

Snapshot read_snapshot_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("snapshot: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize_snapshot(bytes);
}

}  // namespace eatta
