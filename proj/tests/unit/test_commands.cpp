#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "eatta/commands.hpp"
#include "eatta/error.hpp"

using namespace eatta;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"([model]
hidden = 8

[source]
kind = blobs
classes = 3
dim = 2
per_class = 60

[pretrain]
epochs = 3
annotator_hidden = 16
annotator_epochs = 3

[episode]
batch_size = 16

[domain:near]
corruption = rotate(0.3)
batches = 3

[domain:far]
corruption = noise(0.8)
batches = 3

[adapt]
lr = 0.05
)";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

CommandOptions options_for(const TempDir& dir, const std::string& text, const std::string& out = "out") {
  const fs::path cfg = dir.path / "cfg.ini";
  std::ofstream(cfg) << text;
  CommandOptions o;
  o.config_path = cfg;
  o.out = dir.path / out;
  return o;
}

using Command = int (*)(const CommandOptions&, std::ostream&, std::ostream&);

// What the command-line front end does with a command.
int run_command(Command cmd, const CommandOptions& o, std::ostream& out, std::ostream& err) {
  try {
    return cmd(o, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace

TEST_CASE("resolve_config") {
  CommandOptions none;
  CHECK_THROWS_AS(resolve_config(none), ConfigError);
  CommandOptions both;
  both.preset = "ctta-suite";
  both.config_path = "x.ini";
  CHECK_THROWS_AS(resolve_config(both), ConfigError);
  CommandOptions p;
  p.preset = "ctta-suite";
  p.seed = 9;
  p.out = "elsewhere";
  const RunConfig c = resolve_config(p);
  CHECK(c.seed == 9);
  CHECK(c.out == "elsewhere");
  CHECK(exit_code_for(ConfigError("x")) == kExitConfig);
  CHECK(exit_code_for(IoError("x")) == kExitRuntime);
}

TEST_CASE("pretrain writes identical bytes for the same seed") {
  TempDir dir("eatta_test_pretrain");
  std::ostringstream out, err;
  CommandOptions a = options_for(dir, kSmall, "a"), b = options_for(dir, kSmall, "b");
  a.annotator = b.annotator = true;
  REQUIRE(run_command(cmd_pretrain, a, out, err) == kExitOk);
  REQUIRE(run_command(cmd_pretrain, b, out, err) == kExitOk);
  CHECK(slurp(dir.path / "a" / "source.snap") == slurp(dir.path / "b" / "source.snap"));
  CHECK(slurp(dir.path / "a" / "annotator.snap") == slurp(dir.path / "b" / "annotator.snap"));
  CHECK(fs::exists(dir.path / "a" / "source.snap.meta.json"));
  CommandOptions c = options_for(dir, kSmall, "c");
  c.seed = 1;
  REQUIRE(run_command(cmd_pretrain, c, out, err) == kExitOk);
  CHECK(slurp(dir.path / "a" / "source.snap") != slurp(dir.path / "c" / "source.snap"));
  CHECK(out.str().find("holdout accuracy") != std::string::npos);
}

TEST_CASE("a saved source is reused only when its fingerprint matches") {
  TempDir dir("eatta_test_reuse");
  std::ostringstream out, err;
  CommandOptions o = options_for(dir, kSmall);
  REQUIRE(run_command(cmd_pretrain, o, out, err) == kExitOk);
  const RunConfig cfg = resolve_config(o);
  const World w = build_world(cfg);
  std::ostringstream log;
  const Model m = obtain_source(w, &log);
  const Snapshot snap = read_snapshot_file(dir.path / "out" / "source.snap");
  CHECK(std::equal(m.params().begin(), m.params().end(), snap.model.params().begin()));

  RunConfig other = cfg;
  other.pretrain.snapshot = dir.path / "out" / "source.snap";
  other.pretrain.train.epochs = 4;
  CHECK_THROWS_AS(obtain_source(build_world(other)), ConfigError);
  other.pretrain.snapshot = dir.path / "missing.snap";
  CHECK_THROWS_AS(obtain_source(build_world(other)), IoError);
}

TEST_CASE("run writes reports and is byte-identical across repeats") {
  TempDir dir("eatta_test_run");
  std::ostringstream out, err;
  const CommandOptions a = options_for(dir, kSmall);
  REQUIRE(run_command(cmd_run, a, out, err) == kExitOk);
  const std::string ja = slurp(dir.path / "out" / "report.json");
  const std::string ca = slurp(dir.path / "out" / "report.csv");
  REQUIRE(run_command(cmd_run, a, out, err) == kExitOk);
  CHECK_FALSE(ja.empty());
  CHECK(ja == slurp(dir.path / "out" / "report.json"));
  CHECK(ca == slurp(dir.path / "out" / "report.csv"));
  const RunReport r = read_report_json(dir.path / "out" / "report.json");
  CHECK(r.domains.size() == 2);
  CHECK(r.steps.size() == 6);
  CHECK(r.total_annotations() == 6);
  CHECK(parse_config(r.config) == resolve_config(a));

  CommandOptions other = a;
  other.seed = 3;
  REQUIRE(run_command(cmd_run, other, out, err) == kExitOk);
  CHECK(ja != slurp(dir.path / "out" / "report.json"));
}

TEST_CASE("run with a model oracle trains the annotator when none is saved") {
  TempDir dir("eatta_test_model_oracle");
  std::ostringstream out, err;
  CommandOptions o = options_for(dir, std::string(kSmall) + "\n[oracle]\nkind = model\nsnapshot = " +
                                          (dir.path / "none.snap").string() + "\n");
  CHECK(run_command(cmd_run, o, out, err) == kExitRuntime);  // explicit path is missing
  CommandOptions d = options_for(dir, kSmall);
  RunConfig cfg = resolve_config(d);
  cfg.oracle.kind = OracleKind::model;
  const World w = build_world(cfg);
  const auto oracle = build_oracle(w, nullptr);
  CHECK(oracle->kind() == "model");
}

TEST_CASE("ablate writes one row per cell") {
  TempDir dir("eatta_test_ablate");
  std::ostringstream out, err;
  CommandOptions o = options_for(dir, std::string(kSmall) +
                                          "\n[grid]\ntoggles = PD+CB+GND+EMA, PD\nbudget = 1, 1/3, 0\nseeds = 0, 1\n");
  REQUIRE(run_command(cmd_ablate, o, out, err) == kExitOk);
  const std::string csv = slurp(dir.path / "out" / "ablation.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 6);
  const auto j = nlohmann::json::parse(slurp(dir.path / "out" / "ablation.json"));
  CHECK(j["format"] == "eatta-ablation");
  CHECK(j["cells"].size() == 6);
  for (const auto& cell : j["cells"]) CHECK(cell["errors_pct"].size() == 2);

  const AblationTable t = run_ablation(resolve_config(o));
  CHECK(t.axes == std::vector<std::string>{"toggles", "budget"});
  CHECK(t.to_json().dump() == nlohmann::ordered_json::parse(slurp(dir.path / "out" / "ablation.json")).dump());
}

TEST_CASE("gradcheck exit codes") {
  std::ostringstream out, err;
  CommandOptions o;
  o.trials = 20;
  CHECK(run_command(cmd_gradcheck, o, out, err) == kExitOk);
  o.corrupt_gradient = true;
  CHECK(run_command(cmd_gradcheck, o, out, err) == kExitValidation);
  o.corrupt_gradient = false;
  o.trials = 0;
  CHECK(run_command(cmd_gradcheck, o, out, err) == kExitOk);
  CHECK((out.str() + err.str()).find("vacuous") != std::string::npos);
}

TEST_CASE("config errors map to exit code 1") {
  TempDir dir("eatta_test_badcfg");
  std::ostringstream out, err;
  CommandOptions o = options_for(dir, "[adapt]\nalpha = 2\n");
  CHECK(run_command(cmd_run, o, out, err) == kExitConfig);
  CHECK_FALSE(err.str().empty());
  CommandOptions p;
  p.preset = "no-such-preset";
  CHECK(run_command(cmd_run, p, out, err) == kExitConfig);
  CHECK(run_command(cmd_serve, options_for(dir, kSmall), out, err) == kExitConfig);  // not a human oracle
}

TEST_CASE("toy command") {
  TempDir dir("eatta_test_toy");
  std::ostringstream out, err;
  CommandOptions o;
  o.preset = "toy-appendix";
  o.out = dir.path;
  REQUIRE(run_command(cmd_run, o, out, err) == kExitOk);
  CHECK(fs::exists(dir.path / "toy.json"));
  CHECK(out.str().find("close beats far in") != std::string::npos);
}

TEST_CASE("the suite's source model is accurate on held-out data") {
  CommandOptions o;
  o.preset = "ctta-suite";
  const PretrainOutcome p = pretrain_world(build_world(resolve_config(o)));
  CHECK(p.holdout_accuracy >= 0.95);
}
