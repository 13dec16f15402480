#include "eatta/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "eatta/error.hpp"
#include "eatta/text.hpp"

namespace eatta {

namespace pt = boost::property_tree;

bool GridConfig::empty() const {
  return toggles.empty() && sigma.empty() && alpha.empty() && budget.empty() && strategy.empty() && lr.empty() &&
         seeds.empty();
}

namespace {

class Section {
 public:
  Section(std::string name, const pt::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  std::optional<std::string> take(const std::string& key) {
    if (!tree_) return std::nullopt;
    std::optional<std::string> found;
    for (const auto& [k, v] : *tree_) {
      if (k != key) continue;
      if (found) fail(key, "given twice");
      found = std::string(trim(v.data()));
    }
    if (found) used_.insert(key);
    return found;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    throw ConfigError("config: [" + name_ + "] " + key + ": " + why);
  }

  double real(const std::string& key, double def) {
    const auto v = take(key);
    if (!v) return def;
    double out = 0.0;
    if (!parse_double(*v, out)) fail(key, "expected a number, got '" + *v + "'");
    return out;
  }

  int integer(const std::string& key, int def) {
    const auto v = take(key);
    if (!v) return def;
    long long out = 0;
    if (!parse_int(*v, out) || out < -(1LL << 31) || out > (1LL << 31) - 1) {
      fail(key, "expected an integer, got '" + *v + "'");
    }
    return static_cast<int>(out);
  }

  std::uint64_t u64(const std::string& key, std::uint64_t def) {
    const auto v = take(key);
    if (!v) return def;
    unsigned long long out = 0;
    if (!parse_u64(*v, out)) fail(key, "expected a non-negative integer, got '" + *v + "'");
    return out;
  }

  bool boolean(const std::string& key, bool def) {
    const auto v = take(key);
    if (!v) return def;
    if (*v == "true" || *v == "yes" || *v == "1") return true;
    if (*v == "false" || *v == "no" || *v == "0") return false;
    fail(key, "expected true or false, got '" + *v + "'");
  }

  std::string str(const std::string& key, const std::string& def) {
    const auto v = take(key);
    return v ? *v : def;
  }

  std::vector<std::string> list(const std::string& key, char sep = ',') {
    const auto v = take(key);
    std::vector<std::string> out;
    if (!v || v->empty()) return out;
    for (const auto& part : split(*v, sep)) out.emplace_back(trim(part));
    return out;
  }

  std::vector<double> reals(const std::string& key) {
    std::vector<double> out;
    for (const auto& s : list(key)) {
      double d = 0.0;
      if (!parse_double(s, d)) fail(key, "expected numbers, got '" + s + "'");
      out.push_back(d);
    }
    return out;
  }

  std::vector<int> ints(const std::string& key, std::vector<int> def) {
    if (!tree_ || !tree_->count(key)) return def;
    std::vector<int> out;
    for (const auto& s : list(key)) {
      long long v = 0;
      if (!parse_int(s, v)) fail(key, "expected integers, got '" + s + "'");
      out.push_back(static_cast<int>(v));
    }
    return out;
  }

  template <class F>
  auto wrap(const std::string& key, F&& f) -> decltype(f()) {
    try {
      return f();
    } catch (const ConfigError& e) {
      fail(key, e.what());
    }
  }

  void finish() const {
    if (!tree_) return;
    for (const auto& [k, v] : *tree_) {
      if (!used_.count(k)) throw ConfigError("config: [" + name_ + "] unknown key '" + k + "'");
    }
  }

 private:
  std::string name_;
  const pt::ptree* tree_;
  std::set<std::string> used_;
};

const std::set<std::string> kSections = {"model", "source", "pretrain", "episode", "adapt",
                                         "oracle", "toy", "grid", "run"};

OptimizerKind parse_optimizer(Section& s, const std::string& key, OptimizerKind def) {
  const auto v = s.take(key);
  if (!v) return def;
  if (*v == "sgd") return OptimizerKind::sgd_momentum;
  if (*v == "adam") return OptimizerKind::adam;
  s.fail(key, "expected sgd or adam, got '" + *v + "'");
}

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

void read_optimizer(Section& s, OptimizerConfig& o) {
  o.kind = parse_optimizer(s, "optimizer", o.kind);
  o.lr = s.real("lr", o.lr);
  o.momentum = s.real("momentum", o.momentum);
  o.beta1 = s.real("beta1", o.beta1);
  o.beta2 = s.real("beta2", o.beta2);
  o.eps = s.real("adam_eps", o.eps);
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string join_reals(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  pt::ptree tree;
  try {
    std::istringstream is{std::string(text)};
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config: line " + std::to_string(e.line()) + ": " + e.message());
  }

  std::map<std::string, const pt::ptree*> sections;
  std::vector<std::pair<std::string, const pt::ptree*>> domains;
  for (const auto& [name, child] : tree) {
    if (child.empty() && !child.data().empty()) throw ConfigError("config: key '" + name + "' outside any section");
    if (name.rfind("domain:", 0) == 0) {
      const std::string dname(trim(std::string_view(name).substr(7)));
      if (dname.empty()) throw ConfigError("config: [domain:] needs a name");
      domains.emplace_back(dname, &child);
      continue;
    }
    if (!kSections.count(name)) throw ConfigError("config: unknown section [" + name + "]");
    sections[name] = &child;
  }
  auto section = [&](const std::string& name) {
    auto it = sections.find(name);
    return Section(name, it == sections.end() ? nullptr : it->second);
  };

  RunConfig c;

  Section model = section("model");
  c.arch.hidden = model.ints("hidden", {32, 32});
  c.norm_eps = model.real("norm_eps", c.norm_eps);
  model.finish();

  Section src = section("source");
  const std::string kind = src.str("kind", "blobs");
  if (kind == "blobs") {
    c.source.kind = SourceKind::blobs;
  } else if (kind == "dataset") {
    c.source.kind = SourceKind::dataset;
  } else {
    src.fail("kind", "expected blobs or dataset, got '" + kind + "'");
  }
  c.source.blobs.classes = src.integer("classes", c.source.blobs.classes);
  c.source.blobs.dim = src.integer("dim", c.source.blobs.dim);
  c.source.blobs.separation = src.real("separation", c.source.blobs.separation);
  c.source.blobs.spread = src.real("spread", c.source.blobs.spread);
  c.source.blobs.per_class = src.integer("per_class", c.source.blobs.per_class);
  c.source.dataset = src.str("dataset", "");
  c.source.target_dataset = src.str("target_dataset", "");
  c.source.holdout = src.real("holdout", c.source.holdout);
  c.source.class_names = src.list("class_names");
  src.finish();

  Section pre = section("pretrain");
  c.pretrain.train.epochs = pre.integer("epochs", c.pretrain.train.epochs);
  c.pretrain.train.batch_size = pre.integer("batch_size", c.pretrain.train.batch_size);
  read_optimizer(pre, c.pretrain.train.optimizer);
  c.pretrain.snapshot = pre.str("snapshot", "");
  c.pretrain.annotator_hidden = pre.ints("annotator_hidden", c.pretrain.annotator_hidden);
  c.pretrain.annotator_snapshot = pre.str("annotator_snapshot", "");
  for (const auto& term : pre.list("annotator_augment", ';')) {
    c.pretrain.annotator_augment.push_back(pre.wrap("annotator_augment", [&] { return Corruption::parse(term); }));
  }
  c.pretrain.annotator_epochs = pre.integer("annotator_epochs", c.pretrain.annotator_epochs);
  pre.finish();

  Section ep = section("episode");
  const std::string mode = ep.str("mode", "ctta");
  if (mode == "ctta") {
    c.episode.mode = AdaptMode::ctta;
  } else if (mode == "ftta") {
    c.episode.mode = AdaptMode::ftta;
  } else {
    ep.fail("mode", "expected ctta or ftta, got '" + mode + "'");
  }
  c.episode.batch_size = ep.integer("batch_size", c.episode.batch_size);
  ep.finish();

  for (const auto& [dname, child] : domains) {
    Section d("domain:" + dname, child);
    DomainSpec spec;
    spec.name = dname;
    const std::string corr = d.str("corruption", "identity");
    spec.corruption = d.wrap("corruption", [&] { return Corruption::parse(corr); });
    spec.batch_count = d.integer("batches", spec.batch_count);
    spec.samples = d.integer("samples", 0);
    spec.class_priors = d.reals("priors");
    if (const auto key = d.take("stream_key")) {
      unsigned long long k = 0;
      if (!parse_u64(*key, k)) d.fail("stream_key", "expected a non-negative integer");
      spec.stream_key = k;
    }
    d.finish();
    c.episode.domains.push_back(std::move(spec));
  }

  Section ad = section("adapt");
  auto& a = c.adapt;
  a.strategy = ad.wrap("strategy", [&] { return parse_strategy(ad.str("strategy", "ours")); });
  a.toggles = ad.wrap("toggles", [&] { return Toggles::parse(ad.str("toggles", "PD+CB+GND+EMA")); });
  a.budget = ad.wrap("budget", [&] { return Budget::parse(ad.str("budget", "1")); });
  a.sigma = ad.real("sigma", a.sigma);
  a.mu = ad.real("mu", a.mu);
  a.diff_draws = ad.integer("diff_draws", a.diff_draws);
  a.history_k = ad.integer("history_k", a.history_k);
  a.alpha = ad.real("alpha", a.alpha);
  a.threshold_factor = ad.real("threshold_factor", a.threshold_factor);
  a.buffer_capacity = ad.integer("buffer_capacity", a.buffer_capacity);
  a.replay_size = ad.integer("replay_size", a.replay_size);
  read_optimizer(ad, a.optimizer);
  const std::string idle = ad.str("idle_weight", "carried");
  if (idle == "carried") {
    a.idle_weight = IdleWeight::carried;
  } else if (idle == "one") {
    a.idle_weight = IdleWeight::one;
  } else {
    ad.fail("idle_weight", "expected carried or one, got '" + idle + "'");
  }
  ad.finish();

  Section orc = section("oracle");
  c.oracle.kind = orc.wrap("kind", [&] { return parse_oracle_kind(orc.str("kind", "ground_truth")); });
  c.oracle.noise = orc.real("noise", c.oracle.noise);
  c.oracle.snapshot = orc.str("snapshot", "");
  c.oracle.timeout_s = orc.real("timeout_s", c.oracle.timeout_s);
  c.oracle.fallback = orc.wrap("fallback", [&] { return parse_fallback_kind(orc.str("fallback", "ground_truth")); });
  c.oracle.show_hint = orc.boolean("show_hint", c.oracle.show_hint);
  orc.finish();

  if (sections.count("toy")) {
    Section t = section("toy");
    ToyConfig toy;
    toy.separation = t.real("separation", toy.separation);
    toy.spread = t.real("spread", toy.spread);
    toy.per_class = t.integer("per_class", toy.per_class);
    const std::string target = t.str("target", "identity");
    toy.target = t.wrap("target", [&] { return Corruption::parse(target); });
    toy.picks_per_class = t.integer("picks_per_class", toy.picks_per_class);
    toy.steps = t.integer("steps", toy.steps);
    toy.lr = t.real("lr", toy.lr);
    toy.hidden = t.ints("hidden", toy.hidden);
    t.finish();
    c.toy = toy;
  }

  Section g = section("grid");
  for (const auto& s : g.list("toggles")) c.grid.toggles.push_back(g.wrap("toggles", [&] { return Toggles::parse(s); }));
  c.grid.sigma = g.reals("sigma");
  c.grid.alpha = g.reals("alpha");
  for (const auto& s : g.list("budget")) c.grid.budget.push_back(g.wrap("budget", [&] { return Budget::parse(s); }));
  for (const auto& s : g.list("strategy")) {
    c.grid.strategy.push_back(g.wrap("strategy", [&] { return parse_strategy(s); }));
  }
  c.grid.lr = g.reals("lr");
  for (const auto& s : g.list("seeds")) {
    unsigned long long v = 0;
    if (!parse_u64(s, v)) g.fail("seeds", "expected non-negative integers, got '" + s + "'");
    c.grid.seeds.push_back(v);
  }
  g.finish();

  Section run = section("run");
  c.seed = run.u64("seed", c.seed);
  c.out = run.str("out", c.out.string());
  run.finish();

  if (c.source.kind == SourceKind::blobs) {
    c.arch.input_dim = c.source.blobs.dim;
    c.arch.num_classes = c.source.blobs.classes;
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

void RunConfig::validate() const {
  if (arch.hidden.empty()) throw ConfigError("config: [model] hidden must list at least one width");
  for (int h : arch.hidden) {
    if (h < 1) throw ConfigError("config: [model] hidden widths must be >= 1");
  }
  if (!(norm_eps > 0.0)) throw ConfigError("config: [model] norm_eps must be > 0");
  if (source.kind == SourceKind::blobs) {
    const auto& b = source.blobs;
    if (b.classes < 2) throw ConfigError("config: [source] classes must be >= 2");
    if (b.dim < 1) throw ConfigError("config: [source] dim must be >= 1");
    if (b.per_class < 1) throw ConfigError("config: [source] per_class must be >= 1");
    if (!(b.spread > 0.0) || !std::isfinite(b.spread)) throw ConfigError("config: [source] spread must be > 0");
    if (!std::isfinite(b.separation) || b.separation < 0.0) throw ConfigError("config: [source] separation must be >= 0");
  } else if (source.dataset.empty()) {
    throw ConfigError("config: [source] dataset is required when kind = dataset");
  }
  if (!(source.holdout > 0.0 && source.holdout < 1.0)) throw ConfigError("config: [source] holdout must lie in (0,1)");
  if (!source.class_names.empty() && arch.num_classes > 0 &&
      static_cast<int>(source.class_names.size()) != arch.num_classes) {
    throw ConfigError("config: [source] class_names must list one name per class");
  }
  if (pretrain.train.epochs < 0) throw ConfigError("config: [pretrain] epochs must be >= 0");
  if (pretrain.train.batch_size < 2) throw ConfigError("config: [pretrain] batch_size must be >= 2");
  if (!(pretrain.train.optimizer.lr > 0.0)) throw ConfigError("config: [pretrain] lr must be > 0");
  if (pretrain.annotator_epochs < 0) throw ConfigError("config: [pretrain] annotator_epochs must be >= 0");
  for (int h : pretrain.annotator_hidden) {
    if (h < 1) throw ConfigError("config: [pretrain] annotator_hidden widths must be >= 1");
  }
  if (!toy) {
    if (episode.domains.empty()) throw ConfigError("config: at least one [domain:<name>] section is required");
    if (episode.batch_size < 1) throw ConfigError("config: [episode] batch_size must be >= 1");
    if (arch.input_dim > 0 && arch.num_classes > 0) {
      try {
        EpisodeSpec e = episode;
        e.seed = seed;
        e.validate(arch.input_dim, arch.num_classes);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("config: episode: ") + e.what());
      }
    }
  } else {
    if (toy->per_class < toy->picks_per_class || toy->picks_per_class < 1) {
      throw ConfigError("config: [toy] picks_per_class must lie in [1, per_class]");
    }
    if (toy->steps < 0) throw ConfigError("config: [toy] steps must be >= 0");
    if (!(toy->lr > 0.0)) throw ConfigError("config: [toy] lr must be > 0");
    toy->target.validate(2);
  }
  try {
    adapt.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config: [adapt] ") + e.what());
  }
  try {
    oracle.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config: [oracle] ") + e.what());
  }
  for (double s : grid.sigma) {
    if (!(s >= 0.0)) throw ConfigError("config: [grid] sigma values must be >= 0");
  }
  for (double al : grid.alpha) {
    if (!(al >= 0.0 && al < 1.0)) throw ConfigError("config: [grid] alpha values must lie in [0,1)");
  }
  for (double l : grid.lr) {
    if (!(l >= 0.0)) throw ConfigError("config: [grid] lr values must be >= 0");
  }
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream os;
  auto kv = [&](const char* k, const std::string& v) { os << k << " = " << v << '\n'; };
  auto opt = [&](const OptimizerConfig& o) {
    kv("optimizer", optimizer_name(o.kind));
    kv("lr", format_double(o.lr));
    kv("momentum", format_double(o.momentum));
    kv("beta1", format_double(o.beta1));
    kv("beta2", format_double(o.beta2));
    kv("adam_eps", format_double(o.eps));
  };

  os << "[model]\n";
  kv("hidden", join_ints(c.arch.hidden));
  kv("norm_eps", format_double(c.norm_eps));

  os << "\n[source]\n";
  kv("kind", c.source.kind == SourceKind::blobs ? "blobs" : "dataset");
  kv("classes", std::to_string(c.source.blobs.classes));
  kv("dim", std::to_string(c.source.blobs.dim));
  kv("separation", format_double(c.source.blobs.separation));
  kv("spread", format_double(c.source.blobs.spread));
  kv("per_class", std::to_string(c.source.blobs.per_class));
  if (!c.source.dataset.empty()) kv("dataset", c.source.dataset.string());
  if (!c.source.target_dataset.empty()) kv("target_dataset", c.source.target_dataset.string());
  kv("holdout", format_double(c.source.holdout));
  if (!c.source.class_names.empty()) {
    std::string names;
    for (std::size_t i = 0; i < c.source.class_names.size(); ++i) names += (i ? "," : "") + c.source.class_names[i];
    kv("class_names", names);
  }

  os << "\n[pretrain]\n";
  kv("epochs", std::to_string(c.pretrain.train.epochs));
  kv("batch_size", std::to_string(c.pretrain.train.batch_size));
  opt(c.pretrain.train.optimizer);
  if (!c.pretrain.snapshot.empty()) kv("snapshot", c.pretrain.snapshot.string());
  kv("annotator_hidden", join_ints(c.pretrain.annotator_hidden));
  if (!c.pretrain.annotator_snapshot.empty()) kv("annotator_snapshot", c.pretrain.annotator_snapshot.string());
  if (!c.pretrain.annotator_augment.empty()) {
    std::string aug;
    for (std::size_t i = 0; i < c.pretrain.annotator_augment.size(); ++i) {
      aug += (i ? ";" : "") + c.pretrain.annotator_augment[i].to_string();
    }
    kv("annotator_augment", aug);
  }
  kv("annotator_epochs", std::to_string(c.pretrain.annotator_epochs));

  os << "\n[episode]\n";
  kv("mode", c.episode.mode == AdaptMode::ctta ? "ctta" : "ftta");
  kv("batch_size", std::to_string(c.episode.batch_size));

  for (const auto& d : c.episode.domains) {
    os << "\n[domain:" << d.name << "]\n";
    kv("corruption", d.corruption.to_string());
    kv("batches", std::to_string(d.batch_count));
    if (d.samples != 0) kv("samples", std::to_string(d.samples));
    if (!d.class_priors.empty()) kv("priors", join_reals(d.class_priors));
    if (d.stream_key) kv("stream_key", std::to_string(*d.stream_key));
  }

  const auto& a = c.adapt;
  os << "\n[adapt]\n";
  kv("strategy", strategy_name(a.strategy));
  kv("toggles", a.toggles.to_string());
  kv("budget", a.budget.to_string());
  kv("sigma", format_double(a.sigma));
  kv("mu", format_double(a.mu));
  kv("diff_draws", std::to_string(a.diff_draws));
  kv("history_k", std::to_string(a.history_k));
  kv("alpha", format_double(a.alpha));
  kv("threshold_factor", format_double(a.threshold_factor));
  kv("buffer_capacity", std::to_string(a.buffer_capacity));
  kv("replay_size", std::to_string(a.replay_size));
  opt(a.optimizer);
  kv("idle_weight", a.idle_weight == IdleWeight::carried ? "carried" : "one");

  os << "\n[oracle]\n";
  kv("kind", oracle_kind_name(c.oracle.kind));
  kv("noise", format_double(c.oracle.noise));
  if (!c.oracle.snapshot.empty()) kv("snapshot", c.oracle.snapshot.string());
  kv("timeout_s", format_double(c.oracle.timeout_s));
  kv("fallback", fallback_kind_name(c.oracle.fallback));
  kv("show_hint", c.oracle.show_hint ? "true" : "false");

  if (c.toy) {
    const auto& t = *c.toy;
    os << "\n[toy]\n";
    kv("separation", format_double(t.separation));
    kv("spread", format_double(t.spread));
    kv("per_class", std::to_string(t.per_class));
    kv("target", t.target.to_string());
    kv("picks_per_class", std::to_string(t.picks_per_class));
    kv("steps", std::to_string(t.steps));
    kv("lr", format_double(t.lr));
    kv("hidden", join_ints(t.hidden));
  }

  if (!c.grid.empty()) {
    const auto& g = c.grid;
    os << "\n[grid]\n";
    auto joined = [](const auto& items, auto&& fmt) {
      std::string out;
      for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + fmt(items[i]);
      return out;
    };
    if (!g.toggles.empty()) kv("toggles", joined(g.toggles, [](const Toggles& t) { return t.to_string(); }));
    if (!g.sigma.empty()) kv("sigma", join_reals(g.sigma));
    if (!g.alpha.empty()) kv("alpha", join_reals(g.alpha));
    if (!g.budget.empty()) kv("budget", joined(g.budget, [](const Budget& b) { return b.to_string(); }));
    if (!g.strategy.empty()) kv("strategy", joined(g.strategy, [](Strategy s) { return strategy_name(s); }));
    if (!g.lr.empty()) kv("lr", join_reals(g.lr));
    if (!g.seeds.empty()) kv("seeds", joined(g.seeds, [](std::uint64_t s) { return std::to_string(s); }));
  }

  os << "\n[run]\n";
  kv("seed", std::to_string(c.seed));
  kv("out", c.out.string());
  return os.str();
}

std::vector<std::string> class_names_for(const RunConfig& config) {
  if (!config.source.class_names.empty()) return config.source.class_names;
  return default_class_names(config.arch.num_classes);
}

}  // namespace eatta
