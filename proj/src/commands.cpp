#include "eatta/commands.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include "eatta/error.hpp"
#include "eatta/text.hpp"

namespace eatta {

namespace fs = std::filesystem;

World build_world(const RunConfig& config) {
  World w;
  w.config = config;
  const SeedTree seeds(config.seed);
  Dataset data;
  if (config.source.kind == SourceKind::blobs) {
    w.spec = make_blob_spec(config.source.blobs, seeds.seed_for("blob-spec"));
    data = make_source_dataset(*w.spec, seeds.seed_for("dataset"));
  } else {
    const int classes = config.source.class_names.empty() ? -1 : static_cast<int>(config.source.class_names.size());
    data = load_dataset_file(config.source.dataset, classes);
    w.config.arch.input_dim = data.dim();
    w.config.arch.num_classes = data.num_classes;
  }
  auto [train, holdout] = split_dataset(data, config.source.holdout, seeds.seed_for("split"));
  w.train = std::move(train);
  w.holdout = std::move(holdout);
  if (w.spec) {
    w.pool = std::make_shared<SampleSource>(*w.spec);
  } else if (!config.source.target_dataset.empty()) {
    w.pool = std::make_shared<SampleSource>(load_dataset_file(config.source.target_dataset, data.num_classes));
  } else {
    w.pool = std::make_shared<SampleSource>(w.holdout);
  }
  w.class_names = class_names_for(w.config);
  return w;
}

PretrainOutcome pretrain_world(const World& world) {
  const RunConfig& c = world.config;
  const SeedTree seeds(c.seed);
  PretrainResult r = pretrain_source(Model::init(c.arch, seeds.seed_for("model-init"), c.norm_eps), world.train,
                                     c.pretrain.train, seeds.seed_for("pretrain"));
  const double acc = accuracy(r.model, world.holdout.x, world.holdout.y, NormMode::source_stats);
  return {std::move(r.model), acc, std::move(r.epoch_losses)};
}

PretrainOutcome train_annotator(const World& world) {
  const RunConfig& c = world.config;
  const SeedTree seeds(c.seed);
  Dataset data = world.train;
  const auto n = static_cast<Eigen::Index>(world.train.size());
  for (std::size_t a = 0; a < c.pretrain.annotator_augment.size(); ++a) {
    Rng rng = seeds.stream("annotator-augment", {a});
    Matrix extra(n, data.dim());
    for (Eigen::Index i = 0; i < n; ++i) {
      Sample s;
      s.x = world.train.x.row(i).transpose();
      s.true_label = world.train.y[static_cast<std::size_t>(i)];
      extra.row(i) = corrupt(s, c.pretrain.annotator_augment[a], rng).x.transpose();
    }
    Matrix joined(data.x.rows() + n, data.dim());
    joined << data.x, extra;
    data.x = std::move(joined);
    data.y.insert(data.y.end(), world.train.y.begin(), world.train.y.end());
  }
  data.images.clear();
  PretrainConfig train = c.pretrain.train;
  train.epochs = c.pretrain.annotator_epochs;
  const ArchSpec arch{c.arch.input_dim, c.pretrain.annotator_hidden, c.arch.num_classes};
  PretrainResult r = pretrain_source(Model::init(arch, seeds.seed_for("annotator-init"), c.norm_eps), data, train,
                                     seeds.seed_for("annotator-train"));
  const double acc = accuracy(r.model, world.holdout.x, world.holdout.y, NormMode::source_stats);
  return {std::move(r.model), acc, std::move(r.epoch_losses)};
}

fs::path source_snapshot_path(const RunConfig& config) {
  return config.pretrain.snapshot.empty() ? config.out / "source.snap" : config.pretrain.snapshot;
}

fs::path annotator_snapshot_path(const RunConfig& config) {
  if (!config.oracle.snapshot.empty()) return config.oracle.snapshot;
  return config.pretrain.annotator_snapshot.empty() ? config.out / "annotator.snap" : config.pretrain.annotator_snapshot;
}

std::string world_fingerprint(const RunConfig& config) {
  RunConfig f;
  f.arch = config.arch;
  f.norm_eps = config.norm_eps;
  f.source = config.source;
  f.pretrain.train = config.pretrain.train;
  f.pretrain.annotator_hidden = config.pretrain.annotator_hidden;
  f.pretrain.annotator_augment = config.pretrain.annotator_augment;
  f.pretrain.annotator_epochs = config.pretrain.annotator_epochs;
  f.seed = config.seed;
  return serialize_config(f);
}

namespace {

fs::path meta_path(const fs::path& snap) { return fs::path(snap.string() + ".meta.json"); }

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw IoError("cannot write " + path.string());
}

std::optional<std::string> read_fingerprint(const fs::path& snap) {
  std::ifstream is(meta_path(snap), std::ios::binary);
  if (!is) return std::nullopt;
  try {
    const auto j = nlohmann::json::parse(is);
    return j.at("fingerprint").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

std::optional<Model> load_matching(const fs::path& path, const RunConfig& config, bool required, const ArchSpec& arch,
                                   std::ostream* log) {
  if (!fs::exists(path)) {
    if (required) throw IoError("snapshot not found: " + path.string());
    return std::nullopt;
  }
  if (read_fingerprint(path) != world_fingerprint(config)) {
    if (required) {
      throw ConfigError("snapshot " + path.string() + " was trained for a different config or seed; rerun pretrain");
    }
    if (log) *log << "note: ignoring " << path.string() << " (trained for a different config or seed)\n";
    return std::nullopt;
  }
  Snapshot snap = read_snapshot_file(path);
  if (!(snap.model.arch() == arch)) throw ConfigError("snapshot " + path.string() + " has arch " +
                                                      snap.model.arch().to_string() + ", expected " + arch.to_string());
  return std::move(snap.model);
}

}  // namespace

void save_source(const fs::path& path, const RunConfig& config, const PretrainOutcome& outcome) {
  ensure_parent(path);
  write_snapshot_file(path, source_snapshot(outcome.model, config.adapt));
  nlohmann::ordered_json meta = {{"format", "eatta-snapshot-meta"},
                                 {"seed", config.seed},
                                 {"arch", outcome.model.arch().to_string()},
                                 {"holdout_accuracy", outcome.holdout_accuracy},
                                 {"fingerprint", world_fingerprint(config)}};
  write_text(meta_path(path), meta.dump(1) + "\n");
}

Model obtain_source(const World& world, std::ostream* log) {
  const RunConfig& c = world.config;
  if (auto m = load_matching(source_snapshot_path(c), c, !c.pretrain.snapshot.empty(), c.arch, log)) return *m;
  return pretrain_world(world).model;
}

std::unique_ptr<Oracle> build_oracle(const World& world, AnnotationQueue* queue) {
  const RunConfig& c = world.config;
  const OracleConfig& oc = c.oracle;
  const bool needs_model =
      oc.kind == OracleKind::model || (oc.kind == OracleKind::human && oc.fallback == FallbackKind::model);
  const SeedTree seeds(c.seed);
  if (!needs_model || !oc.snapshot.empty()) return make_oracle(oc, c.arch.num_classes, seeds, queue, world.class_names);

  oc.validate();
  if (oc.kind == OracleKind::human && !queue) {
    throw ConfigError("oracle: the human oracle needs an annotation service (use --serve)");
  }
  const ArchSpec arch{c.arch.input_dim, c.pretrain.annotator_hidden, c.arch.num_classes};
  std::optional<Model> annotator =
      load_matching(annotator_snapshot_path(c), c, !c.pretrain.annotator_snapshot.empty(), arch, nullptr);
  if (!annotator) annotator = train_annotator(world).model;
  auto model_oracle = std::make_unique<ModelOracle>(std::move(*annotator));
  if (oc.kind == OracleKind::model) return model_oracle;
  return std::make_unique<HumanOracle>(*queue, world.class_names, oc.timeout_s, oc.show_hint, std::move(model_oracle));
}

Snapshot source_snapshot(const Model& model, const EngineConfig& adapt) {
  return {model, Optimizer(adapt.optimizer, model.num_trainable())};
}

RunReport run_world(const World& world, const Model& source, Oracle& oracle, const StepObserver& observer) {
  const RunConfig& c = world.config;
  EpisodeSpec spec = c.episode;
  spec.seed = c.seed;
  Episode episode(spec, world.pool);
  Engine engine(source_snapshot(source, c.adapt), c.adapt, oracle, c.seed);
  return run_episode(episode, engine, {serialize_config(c), c.seed}, observer);
}

RunReport run_config(const RunConfig& config) {
  config.validate();
  const World world = build_world(config);
  const Model source = obtain_source(world);
  auto oracle = build_oracle(world, nullptr);
  return run_world(world, source, *oracle);
}

// ---------------------------------------------------------------------------

std::string AblationCell::label() const {
  return "toggles=" + toggles.to_string() + " sigma=" + format_double(sigma) + " alpha=" + format_double(alpha) +
         " budget=" + budget.to_string() + " strategy=" + strategy_name(strategy) + " lr=" + format_double(lr);
}

namespace {

std::string axis_value(const AblationCell& c, const std::string& axis) {
  if (axis == "toggles") return c.toggles.to_string();
  if (axis == "sigma") return format_double(c.sigma);
  if (axis == "alpha") return format_double(c.alpha);
  if (axis == "budget") return c.budget.to_string();
  if (axis == "strategy") return strategy_name(c.strategy);
  return format_double(c.lr);
}

nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

nlohmann::ordered_json AblationTable::to_json() const {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    nlohmann::ordered_json row;
    for (const auto& a : axes) row[a] = axis_value(c, a);
    row["seeds"] = c.seeds;
    row["errors_pct"] = c.errors;
    row["mean_error_pct"] = number_or_null(c.mean);
    row["stdev_pct"] = number_or_null(c.stdev);
    row["failures"] = c.failures;
    rows.push_back(std::move(row));
  }
  return {{"format", "eatta-ablation"}, {"version", 1}, {"axes", axes}, {"cells", rows}};
}

std::string AblationTable::to_csv() const {
  std::ostringstream os;
  for (const auto& a : axes) os << a << ',';
  os << "mean_error_pct,stdev_pct,runs,failures\n";
  for (const auto& c : cells) {
    for (const auto& a : axes) os << axis_value(c, a) << ',';
    os << fixed(c.mean, 4) << ',' << fixed(c.stdev, 4) << ',' << c.errors.size() << ',' << c.failures.size() << '\n';
  }
  return os.str();
}

std::string AblationTable::to_text() const {
  std::vector<std::string> labels;
  std::size_t width = 4;
  for (const auto& c : cells) {
    std::string l;
    for (const auto& a : axes) l += (l.empty() ? "" : "  ") + a + "=" + axis_value(c, a);
    if (l.empty()) l = "base";
    width = std::max(width, l.size());
    labels.push_back(std::move(l));
  }
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "cell" << "  error % (mean +- stdev)  runs\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    os << std::left << std::setw(static_cast<int>(width)) << labels[i] << "  " << std::right << std::setw(8)
       << fixed(c.mean, 2) << " +- " << std::setw(5) << fixed(c.stdev, 2) << "        " << c.errors.size();
    if (!c.failures.empty()) os << "  (" << c.failures.size() << " failed)";
    os << '\n';
  }
  return os.str();
}

AblationTable run_ablation(const RunConfig& base, std::ostream* progress) {
  base.validate();
  if (base.oracle.kind == OracleKind::human) throw ConfigError("ablate: the human oracle is not supported in grids");
  const GridConfig& g = base.grid;
  AblationTable table;
  if (!g.toggles.empty()) table.axes.push_back("toggles");
  if (!g.sigma.empty()) table.axes.push_back("sigma");
  if (!g.alpha.empty()) table.axes.push_back("alpha");
  if (!g.budget.empty()) table.axes.push_back("budget");
  if (!g.strategy.empty()) table.axes.push_back("strategy");
  if (!g.lr.empty()) table.axes.push_back("lr");

  const auto toggles = g.toggles.empty() ? std::vector<Toggles>{base.adapt.toggles} : g.toggles;
  const auto sigmas = g.sigma.empty() ? std::vector<double>{base.adapt.sigma} : g.sigma;
  const auto alphas = g.alpha.empty() ? std::vector<double>{base.adapt.alpha} : g.alpha;
  const auto budgets = g.budget.empty() ? std::vector<Budget>{base.adapt.budget} : g.budget;
  const auto strategies = g.strategy.empty() ? std::vector<Strategy>{base.adapt.strategy} : g.strategy;
  const auto lrs = g.lr.empty() ? std::vector<double>{base.adapt.optimizer.lr} : g.lr;
  const auto seeds = g.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : g.seeds;

  struct Prepared {
    World world;
    Model source;
  };
  std::map<std::uint64_t, std::unique_ptr<Prepared>> prepared;
  auto prepare = [&](std::uint64_t seed) -> Prepared& {
    auto& slot = prepared[seed];
    if (!slot) {
      RunConfig c = base;
      c.seed = seed;
      World w = build_world(c);
      Model m = obtain_source(w, progress);
      slot = std::make_unique<Prepared>(Prepared{std::move(w), std::move(m)});
    }
    return *slot;
  };

  for (const auto& t : toggles)
    for (double s : sigmas)
      for (double a : alphas)
        for (const auto& b : budgets)
          for (Strategy st : strategies)
            for (double lr : lrs) {
              AblationCell cell;
              cell.toggles = t;
              cell.sigma = s;
              cell.alpha = a;
              cell.budget = b;
              cell.strategy = st;
              cell.lr = lr;
              for (std::uint64_t seed : seeds) {
                cell.seeds.push_back(seed);
                try {
                  Prepared& p = prepare(seed);
                  World w = p.world;
                  auto& ad = w.config.adapt;
                  ad.toggles = t;
                  ad.sigma = s;
                  ad.alpha = a;
                  ad.budget = b;
                  ad.strategy = st;
                  ad.optimizer.lr = lr;
                  ad.validate();
                  auto oracle = build_oracle(w, nullptr);
                  const RunReport r = run_world(w, p.source, *oracle);
                  if (r.status != "ok") {
                    cell.failures.push_back("seed " + std::to_string(seed) + ": " + r.status);
                  } else {
                    cell.errors.push_back(100.0 * r.average_error);
                  }
                } catch (const std::exception& e) {
                  cell.failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
                }
              }
              const double n = static_cast<double>(cell.errors.size());
              cell.mean = std::numeric_limits<double>::quiet_NaN();
              cell.stdev = std::numeric_limits<double>::quiet_NaN();
              if (n > 0) {
                double sum = 0.0;
                for (double e : cell.errors) sum += e;
                cell.mean = sum / n;
                double ss = 0.0;
                for (double e : cell.errors) ss += (e - cell.mean) * (e - cell.mean);
                cell.stdev = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
              }
              if (progress) {
                *progress << "cell " << table.cells.size() + 1 << ": " << cell.label() << " -> " << fixed(cell.mean, 2)
                          << "%\n";
              }
              table.cells.push_back(std::move(cell));
            }
  return table;
}

std::vector<ToyResult> run_toy(const RunConfig& config) {
  if (!config.toy) throw ConfigError("config: no [toy] section");
  const auto seeds = config.grid.seeds.empty() ? std::vector<std::uint64_t>{config.seed} : config.grid.seeds;
  std::vector<ToyResult> out;
  for (std::uint64_t s : seeds) out.push_back(run_toy_experiment(*config.toy, config.pretrain.train, s));
  return out;
}

// ---------------------------------------------------------------------------

RunConfig resolve_config(const CommandOptions& options) {
  if (options.config_path && options.preset) throw ConfigError("use either --config or --preset, not both");
  RunConfig c;
  if (options.config_path) {
    c = load_config(*options.config_path);
  } else if (options.preset) {
    c = parse_config(preset_text(*options.preset));
  } else {
    throw ConfigError("a config is required (--config FILE or --preset NAME)");
  }
  if (options.seed) c.seed = *options.seed;
  if (options.out) c.out = *options.out;
  c.validate();
  return c;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  return kExitRuntime;
}

namespace {

std::string pct(double fraction) { return fixed(100.0 * fraction, 2) + "%"; }

void print_summary(const RunReport& r, std::ostream& out) {
  for (const auto& d : r.domains) {
    out << "  " << std::left << std::setw(16) << d.name << " error " << std::right << std::setw(7)
        << fixed(100.0 * d.error_rate, 2) << "%  annotations " << d.annotations << '\n';
  }
  out << "average error " << pct(r.average_error) << " over " << r.domains.size() << " domains; "
      << r.total_annotations() << " annotations, " << r.total_fallbacks() << " fallbacks\n";
}

int finish_run(const RunConfig& c, const RunReport& r, std::ostream& out, std::ostream& err) {
  export_report(r, c.out / "report.json", ReportFormat::json);
  export_report(r, c.out / "report.csv", ReportFormat::csv);
  print_summary(r, out);
  out << "wrote " << (c.out / "report.json").string() << " and " << (c.out / "report.csv").string() << '\n';
  if (r.status != "ok") {
    err << "run stopped early: " << r.status << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int toy_command(const RunConfig& c, std::ostream& out) {
  const auto results = run_toy(c);
  int wins = 0;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    out << "seed " << r.seed << ": source " << pct(r.source_accuracy) << "  close " << pct(r.close_accuracy)
        << "  far " << pct(r.far_accuracy) << '\n';
    wins += r.close_accuracy > r.far_accuracy ? 1 : 0;
    rows.push_back(r.to_json());
  }
  out << "close beats far in " << wins << " of " << results.size() << " seeds\n";
  nlohmann::ordered_json doc = {{"format", "eatta-toy"}, {"config", serialize_config(c)}, {"results", rows}};
  write_text(c.out / "toy.json", doc.dump(1) + "\n");
  return kExitOk;
}

int served_run(const RunConfig& c, const CommandOptions& options, std::ostream& out, std::ostream& err) {
  const World world = build_world(c);
  const Model source = obtain_source(world, &err);
  AnnotationQueue queue(c.arch.num_classes);
  StatusBoard board;
  AnnotationService service(queue, board, world.class_names);
  const auto [host, port] = parse_bind(options.bind.value_or("127.0.0.1:8080"));
  service.start(host, port);
  out << "annotation service on http://" << host << ':' << service.port() << '\n' << std::flush;
  auto oracle = build_oracle(world, &queue);
  const std::int64_t total = [&] {
    EpisodeSpec spec = c.episode;
    spec.seed = c.seed;
    return static_cast<std::int64_t>(Episode(spec, world.pool).total_batches());
  }();
  const RunReport r = run_world(world, source, *oracle, [&](const StepReport&, const ReportBuilder& b) {
    board.publish(status_json(b, total, false));
  });
  nlohmann::json final_status = board.snapshot();
  final_status["finished"] = true;
  board.publish(final_status);
  service.stop();
  return finish_run(c, r, out, err);
}

}  // namespace

int cmd_pretrain(const CommandOptions& options, std::ostream& out, std::ostream&) {
  const RunConfig c = resolve_config(options);
  const World world = build_world(c);
  const PretrainOutcome o = pretrain_world(world);
  const fs::path path = source_snapshot_path(c);
  save_source(path, world.config, o);
  out << "source snapshot " << path.string() << " (" << o.model.arch().to_string() << ")\n";
  out << "holdout accuracy " << pct(o.holdout_accuracy) << '\n';
  if (options.annotator) {
    const PretrainOutcome a = train_annotator(world);
    const fs::path apath = annotator_snapshot_path(c);
    save_source(apath, world.config, a);
    out << "annotator snapshot " << apath.string() << " (" << a.model.arch().to_string() << ")\n";
    out << "annotator holdout accuracy " << pct(a.holdout_accuracy) << '\n';
  }
  return kExitOk;
}

int cmd_run(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  const RunConfig c = resolve_config(options);
  if (c.toy) return toy_command(c, out);
  if (options.serve) return served_run(c, options, out, err);
  const World world = build_world(c);
  const Model source = obtain_source(world, &err);
  auto oracle = build_oracle(world, nullptr);
  return finish_run(c, run_world(world, source, *oracle), out, err);
}

int cmd_ablate(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  const RunConfig c = resolve_config(options);
  if (c.toy) return toy_command(c, out);
  const AblationTable table = run_ablation(c, &err);
  write_text(c.out / "ablation.json", table.to_json().dump(1) + "\n");
  write_text(c.out / "ablation.csv", table.to_csv());
  out << table.to_text();
  out << "wrote " << (c.out / "ablation.json").string() << " and " << (c.out / "ablation.csv").string() << '\n';
  return kExitOk;
}

int cmd_gradcheck(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  GradcheckOptions g;
  g.seed = options.seed.value_or(0);
  g.trials = options.trials;
  g.corrupt_gradient = options.corrupt_gradient;
  const GradcheckReport r = run_gradcheck(g);
  if (!r.warning.empty()) err << "warning: " << r.warning << '\n';
  out << "gradcheck: " << r.trials.size() << " trials, max relative error " << std::scientific << std::setprecision(3)
      << r.max_rel_error << " (tolerance " << r.tolerance << ")" << std::defaultfloat << ", " << fixed(r.seconds, 2)
      << " s: " << (r.passed ? "PASS" : "FAIL") << '\n';
  if (options.out) write_text(*options.out / "gradcheck.json", r.to_json().dump(1) + "\n");
  return r.passed ? kExitOk : kExitValidation;
}

int cmd_serve(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  const RunConfig c = resolve_config(options);
  if (c.toy) throw ConfigError("serve: toy configs have no episode to serve");
  if (c.oracle.kind != OracleKind::human) throw ConfigError("serve: [oracle] kind must be human");
  return served_run(c, options, out, err);
}

}  // namespace eatta
