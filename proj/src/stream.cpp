#include "eatta/stream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "eatta/codec.hpp"
#include "eatta/error.hpp"
#include "eatta/text.hpp"

namespace eatta {

using nlohmann::json;

// ---------------------------------------------------------------------------
// datasets

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.num_classes = num_classes;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.x.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(rows[k]));
    out.y.push_back(y[rows[k]]);
    if (!images.empty()) out.images.push_back(images[rows[k]]);
  }
  return out;
}

void Dataset::validate() const {
  if (y.empty()) throw ConfigError("dataset: empty");
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw ConfigError("dataset: row/label count mismatch");
  if (!images.empty() && images.size() != y.size()) throw ConfigError("dataset: image count mismatch");
  if (num_classes < 2) throw ConfigError("dataset: need at least 2 classes");
  for (int label : y) {
    if (label < 0 || label >= num_classes) throw ConfigError("dataset: label out of range");
  }
  if (!x.allFinite()) throw ConfigError("dataset: non-finite feature");
}

SourceSpec make_blob_spec(const BlobPreset& preset, std::uint64_t seed) {
  if (preset.classes < 2) throw ConfigError("blobs: classes must be >= 2");
  if (preset.dim < 1) throw ConfigError("blobs: dim must be >= 1");
  if (preset.per_class < 0) throw ConfigError("blobs: per_class must be >= 0");
  if (!(preset.spread >= 0.0)) throw ConfigError("blobs: spread must be >= 0");
  Rng rng = SeedTree(seed).stream("blob-centers");
  SourceSpec spec;
  for (int c = 0; c < preset.classes; ++c) {
    ClassBlob b;
    b.mean.resize(preset.dim);
    for (int j = 0; j < preset.dim; ++j) b.mean[j] = preset.separation * rng.normal();
    b.cov = Matrix::Identity(preset.dim, preset.dim) * (preset.spread * preset.spread);
    b.count = preset.per_class;
    spec.classes.push_back(std::move(b));
  }
  return spec;
}

namespace {

// Returns L with L * L^T = cov; throws on a non-PSD matrix.
Matrix psd_factor(const Matrix& cov) {
  if (cov.rows() != cov.cols()) throw ConfigError("covariance must be square");
  if (!cov.isApprox(cov.transpose(), 1e-12)) throw ConfigError("covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const auto& ev = es.eigenvalues();
  const double tol = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -tol) throw ConfigError("covariance is not positive semi-definite (degenerate covariance)");
  const Vector root = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

Vector draw_gaussian(const Vector& mean, const Matrix& factor, Rng& rng) {
  Vector z(mean.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
  return mean + factor * z;
}

}  // namespace

Dataset make_source_dataset(const SourceSpec& spec, std::uint64_t seed) {
  if (spec.classes.size() < 2) throw ConfigError("source spec: need at least 2 classes");
  const int d = spec.dim();
  long long total = 0;
  for (const auto& b : spec.classes) {
    if (b.mean.size() != d) throw ConfigError("source spec: class means differ in dimension");
    if (b.count < 0) throw ConfigError("source spec: negative count");
    total += b.count;
  }
  if (total == 0) throw ConfigError("source spec: zero requested samples (empty dataset)");

  const SeedTree seeds(seed);
  Dataset data;
  data.num_classes = spec.num_classes();
  data.x.resize(total, d);
  Eigen::Index row = 0;
  for (int c = 0; c < spec.num_classes(); ++c) {
    const Matrix factor = psd_factor(spec.classes[c].cov);
    Rng rng = seeds.stream("dataset", {static_cast<std::uint64_t>(c)});
    for (int k = 0; k < spec.classes[c].count; ++k) {
      data.x.row(row++) = draw_gaussian(spec.classes[c].mean, factor, rng).transpose();
      data.y.push_back(c);
    }
  }
  std::vector<std::size_t> order(data.y.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = seeds.stream("dataset-shuffle");
  shuffle_rng.shuffle(order);
  return data.subset(order);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double holdout, std::uint64_t seed) {
  if (!(holdout > 0.0 && holdout < 1.0)) throw ConfigError("split: holdout must be in (0,1)");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = SeedTree(seed).stream("holdout");
  rng.shuffle(order);
  const std::size_t n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(holdout * data.size())));
  if (n_test >= data.size()) throw ConfigError("split: holdout leaves no training data");
  std::vector<std::size_t> train(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> test(order.end() - static_cast<std::ptrdiff_t>(n_test), order.end());
  return {data.subset(train), data.subset(test)};
}

// ---------------------------------------------------------------------------
// pretraining

void record_running_stats(Model& model, const Dataset& data) {
  if (model.num_hidden() == 0) return;
  const ForwardPass pass = forward(model, data.x, NormMode::batch_stats);
  std::vector<Vector> means;
  std::vector<Vector> vars;
  for (const auto& c : pass.hidden) {
    means.push_back(c.mean);
    vars.push_back(c.var);
  }
  model.set_running_stats(std::move(means), std::move(vars));
}

PretrainResult pretrain_source(Model model, const Dataset& data, const PretrainConfig& config, std::uint64_t seed) {
  data.validate();
  if (data.dim() != model.arch().input_dim) throw ConfigError("pretrain: dataset dim does not match model");
  if (data.num_classes != model.num_classes()) throw ConfigError("pretrain: class count does not match model");
  if (config.epochs < 0) throw ConfigError("pretrain: epochs must be >= 0");
  if (config.batch_size < 2) throw ConfigError("pretrain: batch_size must be >= 2");

  const SeedTree seeds(seed);
  Optimizer opt(config.optimizer, model.num_params());
  std::vector<double> params(model.params().begin(), model.params().end());
  PretrainResult result{model, {}};
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = seeds.stream("pretrain", {static_cast<std::uint64_t>(epoch)});
    rng.shuffle(order);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      if (end - start < 2) continue;  // batch statistics need >= 2 rows
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
      const Dataset mb = data.subset(rows);
      std::vector<int> idx(mb.size());
      std::iota(idx.begin(), idx.end(), 0);
      const LossSpec spec = LossSpec::cross_entropy_over(idx, mb.y);
      const ForwardPass pass = forward(result.model, mb.x, NormMode::batch_stats);
      const double loss = evaluate_loss(pass, spec);
      if (!std::isfinite(loss)) {
        throw NumericError("pretrain: non-finite loss at epoch " + std::to_string(epoch) + " (divergence)");
      }
      loss_sum += loss;
      ++batches;
      const auto grad = backward_full(result.model, pass, spec);
      opt.step(params, grad);
      result.model.set_params(params);
    }
    result.epoch_losses.push_back(batches > 0 ? loss_sum / batches : 0.0);
  }
  record_running_stats(result.model, data);
  return result;
}

double accuracy(const Model& model, const Matrix& x, const std::vector<int>& y, NormMode mode) {
  if (y.empty()) return 0.0;
  const ForwardPass pass = forward(model, x, mode);
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < pass.rows(); ++r) {
    const int pred = argmax({pass.probs.row(r).data(), static_cast<std::size_t>(pass.probs.cols())});
    if (pred == y[static_cast<std::size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(y.size());
}

// ---------------------------------------------------------------------------
// corruptions

namespace {

Corruption parse_term(std::string_view term) {
  term = trim(term);
  Corruption c;
  if (term == "identity" || term == "none") return c;
  const auto open = term.find('(');
  if (open == std::string_view::npos || term.back() != ')') {
    throw ConfigError("corruption: cannot parse term '" + std::string(term) + "'");
  }
  const std::string name(trim(term.substr(0, open)));
  const auto body = term.substr(open + 1, term.size() - open - 2);
  std::vector<double> args;
  for (const auto& a : split(body, ',')) {
    double v = 0.0;
    if (!parse_double(a, v)) throw ConfigError("corruption: bad number '" + a + "' in '" + std::string(term) + "'");
    args.push_back(v);
  }
  if (name == "shift" || name == "scale") {
    c.kind = name == "shift" ? Corruption::Kind::shift : Corruption::Kind::scale;
    c.values = std::move(args);
  } else if (name == "rotate") {
    c.kind = Corruption::Kind::rotation;
    if (args.size() != 1 && args.size() != 3) throw ConfigError("corruption: rotate(angle) or rotate(angle, i, j)");
    c.angle = args[0];
    if (args.size() == 3) c.planes.emplace_back(static_cast<int>(args[1]), static_cast<int>(args[2]));
  } else if (name == "noise") {
    c.kind = Corruption::Kind::gaussian;
    if (args.size() != 1) throw ConfigError("corruption: noise(std) takes one argument");
    c.noise_std = args[0];
  } else {
    throw ConfigError("corruption: unknown kind '" + name + "'");
  }
  return c;
}

std::string join_values(const std::vector<double>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) s += ",";
    s += format_double(v[k]);
  }
  return s;
}

}  // namespace

Corruption Corruption::parse(std::string_view text) {
  std::vector<std::string_view> terms;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t k = 0; k < text.size(); ++k) {
    if (text[k] == '(') ++depth;
    if (text[k] == ')') --depth;
    const bool exponent_sign = k > 0 && (text[k - 1] == 'e' || text[k - 1] == 'E') && depth > 0;
    if (text[k] == '+' && depth == 0 && !exponent_sign) {
      terms.push_back(text.substr(start, k - start));
      start = k + 1;
    }
  }
  terms.push_back(text.substr(start));
  if (terms.size() == 1) return parse_term(terms.front());
  Corruption c;
  c.kind = Kind::compose;
  for (auto t : terms) c.parts.push_back(parse_term(t));
  return c;
}

std::string Corruption::to_string() const {
  switch (kind) {
    case Kind::identity:
      return "identity";
    case Kind::shift:
      return "shift(" + join_values(values) + ")";
    case Kind::scale:
      return "scale(" + join_values(values) + ")";
    case Kind::gaussian:
      return "noise(" + format_double(noise_std) + ")";
    case Kind::rotation: {
      std::string s = "rotate(" + format_double(angle);
      for (const auto& [i, j] : planes) s += "," + std::to_string(i) + "," + std::to_string(j);
      return s + ")";
    }
    case Kind::compose: {
      std::string s;
      for (std::size_t k = 0; k < parts.size(); ++k) {
        if (k) s += " + ";
        s += parts[k].to_string();
      }
      return s;
    }
  }
  return "identity";
}

void Corruption::validate(int dim) const {
  auto finite = [](double v) { return std::isfinite(v); };
  switch (kind) {
    case Kind::identity:
      break;
    case Kind::shift:
    case Kind::scale:
      if (values.size() != 1 && values.size() != static_cast<std::size_t>(dim)) {
        throw ConfigError("corruption: " + to_string() + " needs 1 or " + std::to_string(dim) + " values");
      }
      if (!std::all_of(values.begin(), values.end(), finite)) throw ConfigError("corruption: non-finite severity");
      break;
    case Kind::gaussian:
      if (!(noise_std >= 0.0) || !finite(noise_std)) throw ConfigError("corruption: noise std must be finite, >= 0");
      break;
    case Kind::rotation:
      if (!finite(angle)) throw ConfigError("corruption: non-finite rotation angle");
      if (planes.empty() && dim % 2 != 0) {
        throw ConfigError("corruption: rotation over consecutive pairs needs an even dimension (odd unpaired dim)");
      }
      for (const auto& [i, j] : planes) {
        if (i < 0 || j < 0 || i >= dim || j >= dim || i == j) throw ConfigError("corruption: bad rotation plane");
      }
      break;
    case Kind::compose:
      for (const auto& p : parts) p.validate(dim);
      break;
  }
}

Sample corrupt(const Sample& sample, const Corruption& c, Rng& rng) {
  Sample out = sample;
  const Eigen::Index d = out.x.size();
  auto broadcast = [&](std::size_t k) { return c.values.size() == 1 ? c.values[0] : c.values[k]; };
  switch (c.kind) {
    case Corruption::Kind::identity:
      break;
    case Corruption::Kind::shift:
      for (Eigen::Index j = 0; j < d; ++j) out.x[j] += broadcast(static_cast<std::size_t>(j));
      break;
    case Corruption::Kind::scale:
      for (Eigen::Index j = 0; j < d; ++j) out.x[j] *= broadcast(static_cast<std::size_t>(j));
      break;
    case Corruption::Kind::gaussian:
      if (c.noise_std > 0.0) {
        for (Eigen::Index j = 0; j < d; ++j) out.x[j] += c.noise_std * rng.normal();
      }
      break;
    case Corruption::Kind::rotation: {
      std::vector<std::pair<int, int>> planes = c.planes;
      if (planes.empty()) {
        if (d % 2 != 0) throw ConfigError("corruption: rotation on odd unpaired dims");
        for (int j = 0; j + 1 < d; j += 2) planes.emplace_back(j, j + 1);
      }
      const double cs = std::cos(c.angle);
      const double sn = std::sin(c.angle);
      for (const auto& [i, j] : planes) {
        if (i >= d || j >= d) throw ConfigError("corruption: rotation plane outside sample dims");
        const double a = out.x[i];
        const double b = out.x[j];
        out.x[i] = cs * a - sn * b;
        out.x[j] = sn * a + cs * b;
      }
      break;
    }
    case Corruption::Kind::compose:
      for (const auto& p : c.parts) out = corrupt(out, p, rng);
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// sample sources and episodes

SampleSource::SampleSource(SourceSpec spec) : dim_(spec.dim()), num_classes_(spec.num_classes()) {
  if (num_classes_ < 2) throw ConfigError("sample source: need at least 2 classes");
  for (const auto& b : spec.classes) {
    means_.push_back(b.mean);
    chol_.push_back(psd_factor(b.cov));
  }
}

SampleSource::SampleSource(Dataset pool) : dim_(pool.dim()), num_classes_(pool.num_classes) {
  pool.validate();
  by_class_.resize(num_classes_);
  for (std::size_t k = 0; k < pool.size(); ++k) by_class_[pool.y[k]].push_back(k);
  pool_ = std::move(pool);
}

Sample SampleSource::draw(int label, Rng& rng) const {
  Sample s;
  s.true_label = label;
  if (pool_) {
    const auto& rows = by_class_.at(label);
    if (rows.empty()) throw ConfigError("sample source: class " + std::to_string(label) + " has no pool samples");
    const std::size_t k = rows[rng.below(rows.size())];
    s.x = pool_->x.row(static_cast<Eigen::Index>(k)).transpose();
    if (!pool_->images.empty()) s.image = pool_->images[k];
  } else {
    s.x = draw_gaussian(means_.at(label), chol_.at(label), rng);
  }
  return s;
}

int DomainSpec::batches(int batch_size) const {
  if (samples > 0) return (samples + batch_size - 1) / batch_size;
  return batch_count;
}

int DomainSpec::total_samples(int batch_size) const { return samples > 0 ? samples : batch_count * batch_size; }

void EpisodeSpec::validate(int dim, int num_classes) const {
  if (domains.empty()) throw ConfigError("episode: empty domain list");
  if (batch_size < 1) throw ConfigError("episode: batch_size must be >= 1");
  for (const auto& d : domains) {
    if (d.batches(batch_size) < 1) throw ConfigError("episode: domain '" + d.name + "' needs batch_count >= 1");
    if (d.samples < 0) throw ConfigError("episode: domain '" + d.name + "' has negative samples");
    if (!d.class_priors.empty()) {
      if (static_cast<int>(d.class_priors.size()) != num_classes) {
        throw ConfigError("episode: domain '" + d.name + "' priors must have one weight per class");
      }
      double sum = 0.0;
      for (double p : d.class_priors) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("episode: domain '" + d.name + "' has a bad prior");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("episode: domain '" + d.name + "' priors must sum to 1");
    }
    d.corruption.validate(dim);
  }
}

Episode::Episode(EpisodeSpec spec, std::shared_ptr<const SampleSource> source)
    : spec_(std::move(spec)), source_(std::move(source)) {
  if (!source_) throw ConfigError("episode: no sample source");
  spec_.validate(source_->dim(), source_->num_classes());
}

std::uint64_t Episode::domain_key(int domain) const {
  const auto& d = spec_.domains.at(domain);
  if (d.stream_key) return *d.stream_key;
  return mix_seed({hash_name("domain-position"), static_cast<std::uint64_t>(domain)});
}

int Episode::total_batches() const {
  int n = 0;
  for (const auto& d : spec_.domains) n += d.batches(spec_.batch_size);
  return n;
}

Batch Episode::make_batch(int domain, int batch_in_domain) const {
  const DomainSpec& d = spec_.domains[domain];
  const int bs = spec_.batch_size;
  const int n = std::min(bs, d.total_samples(bs) - batch_in_domain * bs);
  Batch b;
  b.domain_id = domain;
  b.batch_in_domain = batch_in_domain;
  b.domain_key = domain_key(domain);
  b.x.resize(n, source_->dim());
  Rng rng = SeedTree(spec_.seed).stream("stream", {b.domain_key, static_cast<std::uint64_t>(batch_in_domain)});
  bool any_image = false;
  for (int i = 0; i < n; ++i) {
    int label = 0;
    if (d.class_priors.empty()) {
      label = static_cast<int>(rng.below(static_cast<std::size_t>(source_->num_classes())));
    } else {
      const double u = rng.uniform();
      double acc = 0.0;
      label = -1;
      for (std::size_t c = 0; c < d.class_priors.size(); ++c) {
        acc += d.class_priors[c];
        if (u < acc && d.class_priors[c] > 0.0) {
          label = static_cast<int>(c);
          break;
        }
      }
      if (label < 0) {  // rounding left u beyond the cumulative sum
        for (std::size_t c = d.class_priors.size(); c-- > 0;) {
          if (d.class_priors[c] > 0.0) {
            label = static_cast<int>(c);
            break;
          }
        }
      }
    }
    Sample s = source_->draw(label, rng);
    s.domain_id = domain;
    s = corrupt(s, d.corruption, rng);
    b.x.row(i) = s.x.transpose();
    b.labels.push_back(s.true_label);
    any_image = any_image || s.image.has_value();
    b.images.push_back(std::move(s.image));
  }
  if (!any_image) b.images.clear();
  return b;
}

StreamEvent Episode::next() {
  if (ended_) throw ConfigError("episode: iterated past end of episode");
  if (boundary_pending_) {
    boundary_pending_ = false;
    return DomainBoundary{domain_ - 1, domain_};
  }
  if (domain_ >= static_cast<int>(spec_.domains.size())) {
    ended_ = true;
    return EndOfEpisode{};
  }
  Batch b = make_batch(domain_, batch_);
  b.batch_index = global_batch_++;
  for (int i = 0; i < b.size(); ++i) b.stream_index.push_back(next_stream_index_++);
  if (++batch_ >= spec_.domains[domain_].batches(spec_.batch_size)) {
    batch_ = 0;
    ++domain_;
    boundary_pending_ = domain_ < static_cast<int>(spec_.domains.size());
  }
  return b;
}

// ---------------------------------------------------------------------------
// JSON-lines files

Dataset load_dataset_file(const std::filesystem::path& path, int num_classes) {
  std::ifstream is(path);
  if (!is) throw IoError("dataset: cannot open " + path.string());
  Dataset data;
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  int max_label = -1;
  bool any_image = false;
  auto fail = [&](const std::string& msg) {
    throw IoError(path.string() + ": line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(std::string("malformed JSON: ") + e.what());
    }
    if (!rec.is_object() || !rec.contains("x") || !rec["x"].is_array()) fail("missing array field 'x'");
    if (!rec.contains("y") || !rec["y"].is_number_integer()) fail("missing integer field 'y'");
    std::vector<double> x;
    for (const auto& v : rec["x"]) {
      if (!v.is_number()) fail("non-numeric entry in 'x'");
      x.push_back(v.get<double>());
      if (!std::isfinite(x.back())) fail("non-finite entry in 'x'");
    }
    if (x.empty()) fail("empty 'x'");
    if (!rows.empty() && x.size() != rows.front().size()) {
      fail("dimension " + std::to_string(x.size()) + " differs from first record (" +
           std::to_string(rows.front().size()) + ")");
    }
    const int y = rec["y"].get<int>();
    if (y < 0 || (num_classes > 0 && y >= num_classes)) fail("label " + std::to_string(y) + " out of range");
    max_label = std::max(max_label, y);
    std::optional<Image> img;
    if (rec.contains("img") && !rec["img"].is_null()) {
      const auto& j = rec["img"];
      if (!j.is_object() || !j.contains("width") || !j.contains("height") || !j.contains("data")) {
        fail("'img' needs width, height and data");
      }
      Image im;
      im.width = j["width"].get<int>();
      im.height = j["height"].get<int>();
      try {
        im.pixels = base64_decode(j["data"].get<std::string>());
      } catch (const IoError& e) {
        fail(e.what());
      }
      if (im.width <= 0 || im.height <= 0 || im.pixels.size() != static_cast<std::size_t>(im.width) * im.height) {
        fail("'img' pixel count does not match width*height");
      }
      img = std::move(im);
      any_image = true;
    }
    rows.push_back(std::move(x));
    data.y.push_back(y);
    data.images.push_back(std::move(img));
  }
  if (rows.empty()) throw IoError(path.string() + ": no records");
  data.num_classes = num_classes > 0 ? num_classes : max_label + 1;
  if (data.num_classes < 2) throw IoError(path.string() + ": need at least 2 classes");
  data.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < rows[r].size(); ++j) data.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = rows[r][j];
  }
  if (!any_image) data.images.clear();
  return data;
}

void save_dataset_file(const std::filesystem::path& path, const Dataset& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("dataset: cannot open " + path.string() + " for writing");
  for (std::size_t r = 0; r < data.size(); ++r) {
    json rec;
    std::vector<double> x(data.x.row(static_cast<Eigen::Index>(r)).data(),
                          data.x.row(static_cast<Eigen::Index>(r)).data() + data.x.cols());
    rec["x"] = x;
    rec["y"] = data.y[r];
    if (!data.images.empty() && data.images[r]) {
      const Image& im = *data.images[r];
      rec["img"] = {{"width", im.width}, {"height", im.height}, {"data", base64_encode(im.pixels)}};
    }
    os << rec.dump() << '\n';
  }
  if (!os) throw IoError("dataset: write failed for " + path.string());
}

}  // namespace eatta
