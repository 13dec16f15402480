#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "eatta/config.hpp"
#include "eatta/error.hpp"

using namespace eatta;

namespace {

const char* kFull = R"(# a comment
[model]
hidden = 16, 8
norm_eps = 1e-5

[source]
kind = blobs
classes = 4
dim = 4
separation = 2.5
spread = 0.8
per_class = 50
holdout = 0.25
class_names = w, x, y, z

[pretrain]
epochs = 3
batch_size = 32
lr = 0.02
annotator_hidden = 32
annotator_epochs = 5
annotator_augment = noise(0.5); rotate(0.2)

[episode]
mode = ftta
batch_size = 16

[domain:first]
corruption = rotate(0.3)+noise(0.2)
batches = 3

[domain:second]
corruption = scale(1.5)
samples = 40
priors = 0.4, 0.3, 0.2, 0.1
stream_key = 9

[adapt]
strategy = min_margin
toggles = PD+GND
budget = 1/3
sigma = 0.05
alpha = 0.5
history_k = 3
threshold_factor = inf
buffer_capacity = 64
replay_size = 8
optimizer = adam
lr = 0.001
idle_weight = one

[oracle]
kind = noisy
noise = 0.1

[grid]
sigma = 0.01, 0.1
budget = 1, 1/5
seeds = 0, 1, 2

[run]
seed = 42
out = somewhere
)";

std::string with(const std::string& section, const std::string& line) {
  return "[model]\nhidden = 4\n[source]\nkind = blobs\n[domain:a]\ncorruption = identity\n[" + section + "]\n" + line + "\n";
}

}  // namespace

TEST_CASE("config parses every section") {
  const RunConfig c = parse_config(kFull);
  CHECK(c.arch.hidden == std::vector<int>{16, 8});
  CHECK(c.source.blobs.classes == 4);
  CHECK(c.source.class_names == std::vector<std::string>{"w", "x", "y", "z"});
  CHECK(c.pretrain.annotator_augment.size() == 2);
  CHECK(c.episode.mode == AdaptMode::ftta);
  REQUIRE(c.episode.domains.size() == 2);
  CHECK(c.episode.domains[0].name == "first");
  CHECK(c.episode.domains[1].samples == 40);
  CHECK(c.episode.domains[1].stream_key == 9u);
  CHECK(c.adapt.strategy == Strategy::min_margin);
  CHECK(c.adapt.toggles == Toggles{true, false, true, false});
  CHECK(c.adapt.budget == Budget::parse("1/3"));
  CHECK(c.adapt.threshold_factor == std::numeric_limits<double>::infinity());
  CHECK(c.adapt.optimizer.kind == OptimizerKind::adam);
  CHECK(c.adapt.idle_weight == IdleWeight::one);
  CHECK(c.oracle.kind == OracleKind::noisy);
  CHECK(c.grid.sigma == std::vector<double>{0.01, 0.1});
  CHECK(c.grid.seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(c.seed == 42);
  CHECK(c.out == "somewhere");
  CHECK(class_names_for(c) == c.source.class_names);
}

TEST_CASE("serialization is canonical and lossless") {
  const RunConfig c = parse_config(kFull);
  const std::string text = serialize_config(c);
  CHECK(parse_config(text) == c);
  CHECK(serialize_config(parse_config(text)) == text);
  for (const auto& name : preset_names()) {
    CAPTURE(name);
    const RunConfig p = parse_config(preset_text(name));
    CHECK_NOTHROW(p.validate());
    CHECK(parse_config(serialize_config(p)) == p);
  }
}

TEST_CASE("config rejections name the problem") {
  auto message = [](const std::string& text) -> std::string {
    try {
      parse_config(text).validate();
    } catch (const ConfigError& e) {
      return e.what();
    }
    return "";
  };
  CHECK(message(with("bogus", "x = 1")).find("bogus") != std::string::npos);
  CHECK(message(with("adapt", "lrr = 1")).find("lrr") != std::string::npos);
  CHECK(message(with("adapt", "alpha = 1.0")).find("alpha") != std::string::npos);
  CHECK(message(with("adapt", "sigma = -1")).find("sigma") != std::string::npos);
  CHECK(message(with("adapt", "budget = 2/3")) != "");
  CHECK(message(with("adapt", "strategy = best")).find("best") != std::string::npos);
  CHECK(message(with("adapt", "lr = abc")) != "");
  CHECK(message(with("adapt", "lr = 0.1\nlr = 0.2")).find("duplicate") != std::string::npos);
  CHECK(message(with("oracle", "kind = crowd")).find("crowd") != std::string::npos);
  CHECK(message(with("oracle", "kind = human\ntimeout_s = 0")).find("timeout") != std::string::npos);
  CHECK(message(with("oracle", "noise = 2")) != "");
  CHECK(message(with("episode", "batch_size = 0")) != "");
  CHECK(message(with("source", "classes = 1")) != "");
  CHECK(message("[model]\nhidden = 4\n[source]\nkind = blobs\n") != "");  // no domains
  CHECK(message("x = 1\n") != "");                                         // key outside a section
  CHECK(message("[adapt\n") != "");
  CHECK(message(with("adapt", "lr = 0.1")) == "");
}

TEST_CASE("presets") {
  const auto names = preset_names();
  for (const char* expected : {"ctta-suite", "ftta-suite", "budget-sweep", "strategy-sweep", "hyper-sweep", "toy-appendix"})
    CHECK(std::find(names.begin(), names.end(), expected) != names.end());
  CHECK(parse_config(preset_text("ftta-suite")).episode.mode == AdaptMode::ftta);
  CHECK(parse_config(preset_text("toy-appendix")).toy.has_value());
  CHECK(parse_config(preset_text("hyper-sweep")).grid.sigma == std::vector<double>{0.01, 0.02, 0.03, 0.1, 1});
  CHECK_THROWS_AS(preset_text("nope"), ConfigError);
}

TEST_CASE("config files") {
  const auto path = std::filesystem::temp_directory_path() / "eatta_test.ini";
  std::ofstream(path) << kFull;
  CHECK(load_config(path) == parse_config(kFull));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config(path), ConfigError);
}
